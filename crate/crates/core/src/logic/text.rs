//! Single-line canonical rendering of logical forms and its parser.
//!
//! ```text
//! answer(A,(rightOf(A,B),const(B,'campus_center')))
//! answer(A,(view(A),day(20150511)))
//! answer(A,(near(A,B),const(B,here)))
//! ```
//!
//! `day` and `month_is` render without a variable; they always restrict the
//! answer variable through the head predicate.

use super::form::{EntityRef, LogicalForm, Node, Predicate, Relation};
use super::LogicError;
use crate::world::{is_canonical_name, DayStamp};

fn var_name(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("V{i}")
    }
}

pub fn to_canonical_text(form: &LogicalForm) -> String {
    let mut atoms = Vec::new();
    let mut next_var = 1usize;
    // root's only slot is variable 0 (A)
    for e in &form.root().children {
        render(&e.node, e.child_arg, 0, &mut next_var, &mut atoms);
    }
    format!("answer(A,({}))", atoms.join(","))
}

fn render(node: &Node, joined_slot: u8, joined_var: usize, next_var: &mut usize, atoms: &mut Vec<String>) {
    let vars: Vec<usize> = (1..=node.pred.arity())
        .map(|slot| {
            if slot == joined_slot {
                joined_var
            } else {
                *next_var += 1;
                *next_var - 1
            }
        })
        .collect();
    let v = |slot: usize| var_name(vars[slot]);
    let atom = match &node.pred {
        Predicate::Answer => unreachable!("validated forms have a single answer root"),
        Predicate::Spatial(r) => format!("{}({},{})", r.symbol(), v(0), v(1)),
        Predicate::Const(EntityRef::Named(n)) => format!("const({},'{}')", v(0), n),
        Predicate::Const(EntityRef::Here) => format!("const({},here)", v(0)),
        Predicate::Day(d) => format!("day({d})"),
        Predicate::MonthIs(m) => format!("month_is({m})"),
        Predicate::View => format!("view({})", v(0)),
        Predicate::Kind(k) => format!("{k}({})", v(0)),
    };
    atoms.push(atom);
    for e in &node.children {
        render(&e.node, e.child_arg, vars[e.parent_arg as usize - 1], next_var, atoms);
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(u64),
    Quoted(String),
    LParen,
    RParen,
    Comma,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, LogicError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' => i += 1,
            b'(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            b',' => {
                out.push((i, Tok::Comma));
                i += 1;
            }
            b'\'' => {
                let end = text[i + 1..]
                    .find('\'')
                    .ok_or_else(|| LogicError::syntax(i, "unterminated quote"))?;
                out.push((i, Tok::Quoted(text[i + 1..i + 1 + end].to_string())));
                i += end + 2;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n = text[start..i]
                    .parse()
                    .map_err(|_| LogicError::syntax(start, "number too large"))?;
                out.push((start, Tok::Num(n)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => return Err(LogicError::syntax(i, format!("unexpected {:?}", c as char))),
        }
    }
    Ok(out)
}

#[derive(Debug)]
enum Arg {
    Var(String),
    Num(u64),
    Quoted(String),
    Here,
}

struct Cursor {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Cursor {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.len)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), LogicError> {
        let at = self.offset();
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(LogicError::syntax(at, format!("expected {want:?}, found {other:?}"))),
        }
    }

    fn ident(&mut self) -> Result<String, LogicError> {
        let at = self.offset();
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => Err(LogicError::syntax(at, format!("expected identifier, found {other:?}"))),
        }
    }

    fn peek_is(&self, t: &Tok) -> bool {
        self.toks.get(self.pos).map(|x| &x.1 == t).unwrap_or(false)
    }
}

fn is_var(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

fn is_kind_symbol(s: &str) -> bool {
    is_canonical_name(s)
        && Relation::from_symbol(s).is_none()
        && !matches!(s, "answer" | "const" | "day" | "month_is" | "view" | "here")
}

struct Atom {
    pred: Predicate,
    /// (slot, variable) pairs, 1-based slots.
    vars: Vec<(u8, String)>,
}

fn atom_from(at: usize, name: &str, args: Vec<Arg>) -> Result<Atom, LogicError> {
    let bad = || LogicError::syntax(at, format!("bad arguments for {name}"));
    let var = |a: &Arg| match a {
        Arg::Var(v) => Ok(v.clone()),
        _ => Err(bad()),
    };
    let atom = match (name, args.as_slice()) {
        ("const", [a, Arg::Quoted(n)]) => {
            if !is_canonical_name(n) {
                return Err(LogicError::syntax(at, format!("non-canonical entity name {n:?}")));
            }
            Atom {
                pred: Predicate::Const(EntityRef::Named(n.clone())),
                vars: vec![(1, var(a)?)],
            }
        }
        ("const", [a, Arg::Here]) => Atom {
            pred: Predicate::Const(EntityRef::Here),
            vars: vec![(1, var(a)?)],
        },
        ("day", [Arg::Num(n)]) => {
            let d = u32::try_from(*n).ok().and_then(|n| DayStamp::new(n).ok()).ok_or_else(bad)?;
            Atom { pred: Predicate::Day(d), vars: vec![] }
        }
        ("month_is", [Arg::Num(n)]) if (1..=12).contains(n) => Atom {
            pred: Predicate::MonthIs(*n as u8),
            vars: vec![],
        },
        ("view", [a]) => Atom {
            pred: Predicate::View,
            vars: vec![(1, var(a)?)],
        },
        (rel, [a, b]) if Relation::from_symbol(rel).is_some() => Atom {
            pred: Predicate::Spatial(Relation::from_symbol(rel).unwrap()),
            vars: vec![(1, var(a)?), (2, var(b)?)],
        },
        (kind, [a]) if is_kind_symbol(kind) => Atom {
            pred: Predicate::Kind(kind.to_string()),
            vars: vec![(1, var(a)?)],
        },
        _ => return Err(bad()),
    };
    Ok(atom)
}

/// Parses the canonical rendering back into a tree.
pub fn parse_canonical_text(text: &str) -> Result<LogicalForm, LogicError> {
    let mut c = Cursor {
        toks: lex(text.trim())?,
        pos: 0,
        len: text.len(),
    };
    let head = c.ident()?;
    if head != "answer" {
        return Err(LogicError::syntax(0, "expected answer(...)"));
    }
    c.expect(Tok::LParen)?;
    let root_var = c.ident()?;
    if !is_var(&root_var) {
        return Err(LogicError::syntax(c.offset(), "answer needs a variable"));
    }
    c.expect(Tok::Comma)?;
    c.expect(Tok::LParen)?;

    let mut atoms = Vec::new();
    loop {
        let at = c.offset();
        let name = c.ident()?;
        c.expect(Tok::LParen)?;
        let mut args = Vec::new();
        loop {
            let aat = c.offset();
            let arg = match c.next() {
                Some(Tok::Ident(s)) if s == "here" => Arg::Here,
                Some(Tok::Ident(s)) if is_var(&s) => Arg::Var(s),
                Some(Tok::Num(n)) => Arg::Num(n),
                Some(Tok::Quoted(q)) => Arg::Quoted(q),
                other => return Err(LogicError::syntax(aat, format!("bad argument {other:?}"))),
            };
            args.push(arg);
            if c.peek_is(&Tok::Comma) {
                c.next();
            } else {
                break;
            }
        }
        c.expect(Tok::RParen)?;
        atoms.push(atom_from(at, &name, args)?);
        if c.peek_is(&Tok::Comma) {
            c.next();
        } else {
            break;
        }
    }
    c.expect(Tok::RParen)?;
    c.expect(Tok::RParen)?;
    if c.pos < c.toks.len() {
        return Err(LogicError::syntax(c.offset(), "trailing input"));
    }
    build_tree(&root_var, atoms)
}

/// The first atom is the head under `answer`; each later atom attaches under
/// the earliest placed atom sharing one of its variables, and variable-free
/// filters attach to the head.
fn build_tree(root_var: &str, atoms: Vec<Atom>) -> Result<LogicalForm, LogicError> {
    // flat arena: index 0 is the answer root
    let mut preds = vec![Predicate::Answer];
    let mut vars: Vec<Vec<(u8, String)>> = vec![vec![(1, root_var.to_string())]];
    let mut parent: Vec<Option<(usize, u8, u8)>> = vec![None];

    for atom in atoms {
        let link = if atom.vars.is_empty() {
            if preds.len() < 2 {
                return Err(LogicError::MalformedForm(format!(
                    "{} needs a preceding head predicate",
                    atom.pred.symbol()
                )));
            }
            Some((1usize, 1u8, 1u8))
        } else {
            // the root only adopts the head; later atoms join placed atoms
            let candidates = if preds.len() == 1 { 0..1 } else { 1..preds.len() };
            candidates.into_iter().find_map(|i| {
                atom.vars.iter().find_map(|(cslot, v)| {
                    vars[i]
                        .iter()
                        .find(|(_, pv)| pv == v)
                        .map(|(pslot, _)| (i, *pslot, *cslot))
                })
            })
        };
        let Some(link) = link else {
            return Err(LogicError::MalformedForm(format!(
                "{} is not connected to the answer variable",
                atom.pred.symbol()
            )));
        };
        preds.push(atom.pred);
        vars.push(atom.vars);
        parent.push(Some(link));
    }

    fn assemble(i: usize, preds: &[Predicate], parent: &[Option<(usize, u8, u8)>]) -> Node {
        let mut node = Node::leaf(preds[i].clone());
        for (j, p) in parent.iter().enumerate() {
            if let Some((pi, pslot, cslot)) = p {
                if *pi == i {
                    node = node.with_child(*pslot, *cslot, assemble(j, preds, parent));
                }
            }
        }
        node
    }
    LogicalForm::new(assemble(0, &preds, &parent))
}
