//! Log-linear semantic parser: lexical triggers, candidate tree enumeration,
//! features, and scoring.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::context::ResolvedQuery;
use crate::lexicon::{Lexicon, TimeUnit};
use crate::logic::{to_canonical_text, EntityRef, LogicalForm, Node, Predicate, Relation};
use crate::params::{FeatureVector, ParamVector};
use crate::world::{normalize_name, DayStamp, FactTable};

pub const DEFAULT_BEAM_CAP: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("empty query")]
    EmptyQuery,
    #[error("no lexical trigger fired for {0:?}")]
    NoCandidates(String),
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Wh,
    Spatial,
    Temporal,
    Entity,
    Month,
    Number,
    Stop,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Wh => "WH",
            Tag::Spatial => "SPATIAL",
            Tag::Temporal => "TEMPORAL",
            Tag::Entity => "ENTITY",
            Tag::Month => "MONTH",
            Tag::Number => "NUMBER",
            Tag::Stop => "STOP",
        }
    }
}

/// What a token can contribute to a tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    None,
    Spatial { key: String, triggers: Vec<Relation> },
    Entity(EntityRef),
    Month(u8),
    Number(u32),
    Temporal { key: &'static str, day: Option<DayStamp> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Token {
    pub surface: String,
    pub position: usize,
    pub tag: Tag,
    #[serde(skip)]
    pub sense: Sense,
}

impl Token {
    /// Surface side of `lex:` features.
    fn lex_key(&self) -> String {
        match &self.sense {
            Sense::Spatial { key, .. } => key.clone(),
            Sense::Entity(EntityRef::Named(_)) => "ENTITY".into(),
            Sense::Temporal { key, .. } => (*key).into(),
            Sense::Month(_) => "MONTH".into(),
            Sense::Number(_) => "NUMBER".into(),
            Sense::Entity(EntityRef::Here) | Sense::None => self.surface.replace(' ', "_"),
        }
    }

    fn unused_key(&self) -> &'static str {
        match &self.sense {
            Sense::Entity(EntityRef::Here) => "DEIXIS",
            _ => self.tag.as_str(),
        }
    }
}

/// Word sequences naming facts, from names and aliases.
#[derive(Debug, Clone, Default)]
pub struct EntityLexicon {
    by_words: HashMap<Vec<String>, String>,
    max_len: usize,
}

impl EntityLexicon {
    /// Every alias that resolves to its own fact; the const carries the
    /// fact's canonical name when that name resolves back to the same fact.
    pub fn from_facts(facts: &FactTable) -> Self {
        let mut by_words = HashMap::new();
        let mut max_len = 0;
        for f in facts.facts() {
            let name_resolves = facts.resolve(&f.name).is_some_and(|g| std::ptr::eq(f, g));
            for alias in &f.aliases {
                if !facts.resolve(alias).is_some_and(|g| std::ptr::eq(f, g)) {
                    continue;
                }
                let words: Vec<String> = alias.split('_').map(str::to_string).collect();
                max_len = max_len.max(words.len());
                let target = if name_resolves { f.name.clone() } else { alias.clone() };
                by_words.entry(words).or_insert(target);
            }
        }
        Self { by_words, max_len }
    }

    pub fn lookup(&self, words: &[String]) -> Option<&str> {
        self.by_words.get(words).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_words.is_empty()
    }
}

/// A candidate with its features, before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub form: LogicalForm,
    pub text: String,
    pub features: FeatureVector,
}

/// Tokens and the full candidate set for one query. Independent of θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub tokens: Vec<Token>,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredForm {
    #[serde(skip)]
    pub form: LogicalForm,
    #[serde(rename = "logical_form")]
    pub text: String,
    pub score: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseResult {
    pub tokens: Vec<Token>,
    /// Sorted by score descending, ties by canonical text ascending.
    pub beam: Vec<ScoredForm>,
}

impl ParseResult {
    pub fn argmax(&self) -> &ScoredForm {
        &self.beam[0]
    }
}

/// Candidate scores `θ·φ`.
pub fn scores(candidates: &[Candidate], theta: &ParamVector) -> Vec<f64> {
    candidates.iter().map(|c| theta.dot(&c.features)).collect()
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Candidate indices ordered by score descending, then canonical text.
pub fn ranking(candidates: &[Candidate], scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| candidates[a].text.cmp(&candidates[b].text)));
    idx
}

impl Prepared {
    /// Top `k` candidates; probabilities are normalized over the returned beam.
    pub fn rank(&self, theta: &ParamVector, k: usize) -> Result<ParseResult, ParseError> {
        if k == 0 {
            return Err(ParseError::ZeroK);
        }
        let s = scores(&self.candidates, theta);
        let order: Vec<usize> = ranking(&self.candidates, &s).into_iter().take(k).collect();
        let kept: Vec<f64> = order.iter().map(|&i| s[i]).collect();
        let probs = softmax(&kept);
        let beam = order
            .iter()
            .zip(probs)
            .map(|(&i, prob)| ScoredForm {
                form: self.candidates[i].form.clone(),
                text: self.candidates[i].text.clone(),
                score: s[i],
                prob,
            })
            .collect();
        Ok(ParseResult {
            tokens: self.tokens.clone(),
            beam,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Parser {
    lexicon: Arc<Lexicon>,
    beam_cap: usize,
}

impl Default for Parser {
    fn default() -> Self {
        Self::new(Arc::new(Lexicon::default()))
    }
}

// equal-length matches: deixis beats entities beats the rest
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Priority {
    Deixis,
    Entity,
    Temporal,
    Spatial,
    Month,
    Number,
    Wh,
}

impl Parser {
    pub fn new(lexicon: Arc<Lexicon>) -> Self {
        Self {
            lexicon,
            beam_cap: DEFAULT_BEAM_CAP,
        }
    }

    pub fn with_beam_cap(mut self, cap: usize) -> Self {
        self.beam_cap = cap.max(1);
        self
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// Lowercased word tokens with multiword matches collapsed, longest
    /// match first, left to right.
    pub fn tokenize(&self, query: &ResolvedQuery, entities: &EntityLexicon) -> Result<Vec<Token>, ParseError> {
        let words: Vec<String> = match normalize_name(&query.text) {
            Ok(n) => n.split('_').map(str::to_string).collect(),
            Err(_) if query.text.trim().is_empty() => return Err(ParseError::EmptyQuery),
            // nothing alphanumeric survives folding: one opaque stop token
            Err(_) => vec![query.text.trim().to_lowercase()],
        };
        let lx = &*self.lexicon;
        let mut tokens = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let rest = &words[i..];
            let mut best: Option<(usize, Priority, Tag, Sense)> = None;
            let mut offer = |len: usize, pri: Priority, tag: Tag, sense: Sense| {
                let better = match &best {
                    None => true,
                    Some((bl, bp, _, _)) => len > *bl || (len == *bl && pri < *bp),
                };
                if better {
                    best = Some((len, pri, tag, sense));
                }
            };

            for d in &lx.deixis {
                if rest.starts_with(d) {
                    offer(d.len(), Priority::Deixis, Tag::Entity, Sense::Entity(EntityRef::Here));
                }
            }
            for len in (1..=entities.max_len.min(rest.len())).rev() {
                if let Some(name) = entities.lookup(&rest[..len]) {
                    offer(len, Priority::Entity, Tag::Entity, Sense::Entity(EntityRef::Named(name.to_string())));
                    break;
                }
            }
            for n in 1..=2.min(rest.len()) {
                if rest.len() < n + 2 || rest[n + 1] != "ago" || lx.number_value(&rest[..n].join(" ")).is_none() {
                    continue;
                }
                if let Some(unit) = lx.time_unit(&rest[n]) {
                    offer(
                        n + 2,
                        Priority::Temporal,
                        Tag::Temporal,
                        Sense::Temporal {
                            key: TimeUnit::key(unit),
                            day: query.day_stamp,
                        },
                    );
                }
            }
            for p in &lx.spatial {
                if rest.starts_with(&p.words) {
                    offer(
                        p.words.len(),
                        Priority::Spatial,
                        Tag::Spatial,
                        Sense::Spatial {
                            key: p.key(),
                            triggers: p.triggers.clone(),
                        },
                    );
                }
            }
            let w = &rest[0];
            if let Some(m) = lx.month_number(w) {
                offer(1, Priority::Month, Tag::Month, Sense::Month(m));
            }
            if !w.is_empty() && w.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(n) = w.parse::<u32>() {
                    offer(1, Priority::Number, Tag::Number, Sense::Number(n));
                }
            }
            if lx.wh_words.contains(w) {
                offer(1, Priority::Wh, Tag::Wh, Sense::None);
            }

            let (len, tag, sense) = match best {
                Some((len, _, tag, sense)) => (len, tag, sense),
                None => (1, Tag::Stop, Sense::None),
            };
            tokens.push(Token {
                surface: words[i..i + len].join(" "),
                position: tokens.len(),
                tag,
                sense,
            });
            i += len;
        }
        Ok(tokens)
    }

    /// Every well-formed tree the tokens license, in a fixed order, capped
    /// at the beam size.
    pub fn candidates(&self, tokens: &[Token]) -> Result<Vec<LogicalForm>, ParseError> {
        let mut anchors: Vec<&EntityRef> = Vec::new();
        let mut rels: BTreeSet<Relation> = BTreeSet::new();
        let mut saw_spatial = false;
        let mut days: Vec<DayStamp> = Vec::new();
        let mut months: Vec<u8> = Vec::new();
        for t in tokens {
            match &t.sense {
                Sense::Entity(e) if !anchors.contains(&e) => anchors.push(e),
                Sense::Spatial { triggers, .. } => {
                    saw_spatial = true;
                    rels.extend(triggers.iter().copied());
                }
                Sense::Temporal { day: Some(d), .. } => {
                    days.push(*d);
                    months.push(d.month());
                }
                Sense::Month(m) => months.push(*m),
                Sense::Number(n) => {
                    if let Ok(d) = DayStamp::new(*n) {
                        days.push(d);
                    }
                    if (1..=12).contains(n) {
                        months.push(*n as u8);
                    }
                }
                _ => {}
            }
        }
        if anchors.is_empty() && days.is_empty() && months.is_empty() {
            let text = tokens.iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ");
            return Err(ParseError::NoCandidates(text));
        }
        if !saw_spatial {
            rels.extend(Relation::ALL);
        }

        let mut out: Vec<LogicalForm> = Vec::new();
        for a in &anchors {
            for r in Relation::ALL.iter().filter(|r| rels.contains(r)) {
                out.push(LogicalForm::spatial(*r, (*a).clone()));
            }
        }
        for a in &anchors {
            out.push(LogicalForm::view_of((*a).clone()));
        }
        for d in &days {
            out.push(LogicalForm::on_day(*d));
        }
        for m in &months {
            out.push(LogicalForm::in_month(*m));
        }
        out.push(LogicalForm::view_all());

        let mut seen = BTreeSet::new();
        out.retain(|f| seen.insert(to_canonical_text(f)));
        out.truncate(self.beam_cap);
        Ok(out)
    }

    pub fn prepare(&self, query: &ResolvedQuery, entities: &EntityLexicon) -> Result<Prepared, ParseError> {
        let tokens = self.tokenize(query, entities)?;
        let forms = self.candidates(&tokens)?;
        let candidates = forms
            .into_iter()
            .map(|form| Candidate {
                features: featurize(&tokens, &form),
                text: to_canonical_text(&form),
                form,
            })
            .collect();
        Ok(Prepared { tokens, candidates })
    }

    pub fn parse_topk(
        &self,
        query: &ResolvedQuery,
        entities: &EntityLexicon,
        theta: &ParamVector,
        k: usize,
    ) -> Result<ParseResult, ParseError> {
        if k == 0 {
            return Err(ParseError::ZeroK);
        }
        self.prepare(query, entities)?.rank(theta, k)
    }
}

/// φ(x, z): lexical co-occurrence, tree edges, node count, and unused
/// content tokens.
pub fn featurize(tokens: &[Token], form: &LogicalForm) -> FeatureVector {
    let mut phi = FeatureVector::new();
    let mut used = vec![false; tokens.len()];
    let has_spatial = tokens.iter().any(|t| t.tag == Tag::Spatial);
    let mut nodes = 0.0;

    fn visit(
        parent: &Node,
        tokens: &[Token],
        used: &mut [bool],
        has_spatial: bool,
        phi: &mut FeatureVector,
        nodes: &mut f64,
    ) {
        for edge in &parent.children {
            let n = &edge.node;
            let sym = n.pred.symbol();
            *nodes += 1.0;
            phi.add(format!("edge:{}→{}", parent.pred.symbol(), sym), 1.0);
            let mut lex = |i: usize, phi: &mut FeatureVector| {
                used[i] = true;
                phi.add(format!("lex:{}→{}", tokens[i].lex_key(), sym), 1.0);
            };
            for (i, t) in tokens.iter().enumerate() {
                let fires = match (&n.pred, &t.sense) {
                    (Predicate::Spatial(r), Sense::Spatial { triggers, .. }) => triggers.contains(r),
                    (Predicate::Spatial(_), Sense::Entity(e)) if !has_spatial => {
                        n.children.iter().any(|c| c.node.pred == Predicate::Const(e.clone()))
                    }
                    (Predicate::Const(c), Sense::Entity(e)) => c == e,
                    (Predicate::Day(d), Sense::Temporal { day: Some(td), .. }) => d == td,
                    (Predicate::Day(d), Sense::Number(x)) => d.value() == *x,
                    (Predicate::MonthIs(m), Sense::Temporal { day: Some(td), .. }) => td.month() == *m,
                    (Predicate::MonthIs(m), Sense::Month(x)) => m == x,
                    (Predicate::MonthIs(m), Sense::Number(x)) => *m as u32 == *x,
                    _ => false,
                };
                if fires {
                    lex(i, phi);
                }
            }
            visit(n, tokens, used, has_spatial, phi, nodes);
        }
    }

    visit(form.root(), tokens, &mut used, has_spatial, &mut phi, &mut nodes);
    phi.add("count:nodes", nodes);
    for (t, u) in tokens.iter().zip(&used) {
        if !u && !matches!(t.tag, Tag::Wh | Tag::Stop) {
            phi.add(format!("unused:{}", t.unused_key()), 1.0);
        }
    }
    phi
}
