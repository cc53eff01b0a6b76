use std::fmt;

use serde::{Deserialize, Serialize};

use super::LogicError;
use crate::world::DayStamp;

/// Binary spatial relations between a media item and an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    FrontOf,
    Behind,
    LeftOf,
    RightOf,
    Near,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::FrontOf,
        Relation::Behind,
        Relation::LeftOf,
        Relation::RightOf,
        Relation::Near,
    ];

    /// The four direction-bearing relations.
    pub const CARDINAL: [Relation; 4] = [Relation::FrontOf, Relation::Behind, Relation::LeftOf, Relation::RightOf];

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::FrontOf => "frontOf",
            Relation::Behind => "behind",
            Relation::LeftOf => "leftOf",
            Relation::RightOf => "rightOf",
            Relation::Near => "near",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.symbol() == s)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// What a `const` node denotes: a named fact or the user's own position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityRef {
    Named(String),
    Here,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Predicate {
    Answer,
    Spatial(Relation),
    Const(EntityRef),
    Day(DayStamp),
    MonthIs(u8),
    View,
    /// Entity-category restriction, e.g. `cafe(B)`.
    Kind(String),
}

impl Predicate {
    pub fn symbol(&self) -> &str {
        match self {
            Predicate::Answer => "answer",
            Predicate::Spatial(r) => r.symbol(),
            Predicate::Const(_) => "const",
            Predicate::Day(_) => "day",
            Predicate::MonthIs(_) => "month_is",
            Predicate::View => "view",
            Predicate::Kind(k) => k,
        }
    }

    pub fn arity(&self) -> u8 {
        match self {
            Predicate::Spatial(_) => 2,
            _ => 1,
        }
    }
}

/// Join edge: the child's `child_arg` slot is the parent's `parent_arg` slot (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub parent_arg: u8,
    pub child_arg: u8,
    pub node: Node,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub pred: Predicate,
    pub children: Vec<Edge>,
}

impl Node {
    pub fn leaf(pred: Predicate) -> Self {
        Self { pred, children: Vec::new() }
    }

    pub fn with_child(mut self, parent_arg: u8, child_arg: u8, node: Node) -> Self {
        self.children.push(Edge { parent_arg, child_arg, node });
        self
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        for e in &self.children {
            e.node.walk(f);
        }
    }
}

/// A DCS tree rooted at `answer`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogicalForm {
    root: Node,
}

impl LogicalForm {
    pub fn new(root: Node) -> Result<Self, LogicError> {
        let form = Self { root };
        form.validate()?;
        Ok(form)
    }

    fn answer(head: Node) -> Self {
        Self {
            root: Node::leaf(Predicate::Answer).with_child(1, 1, head),
        }
    }

    /// `answer(A,(rel(A,B),const(B,e)))`
    pub fn spatial(rel: Relation, entity: EntityRef) -> Self {
        Self::answer(Node::leaf(Predicate::Spatial(rel)).with_child(2, 1, Node::leaf(Predicate::Const(entity))))
    }

    /// `answer(A,(view(A),const(A,e)))`: media depicting the entity itself.
    pub fn view_of(entity: EntityRef) -> Self {
        Self::answer(Node::leaf(Predicate::View).with_child(1, 1, Node::leaf(Predicate::Const(entity))))
    }

    pub fn on_day(day: DayStamp) -> Self {
        Self::answer(Node::leaf(Predicate::View).with_child(1, 1, Node::leaf(Predicate::Day(day))))
    }

    pub fn in_month(month: u8) -> Self {
        Self::answer(Node::leaf(Predicate::View).with_child(1, 1, Node::leaf(Predicate::MonthIs(month))))
    }

    /// `answer(A,(view(A)))`: every media item.
    pub fn view_all() -> Self {
        Self::answer(Node::leaf(Predicate::View))
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// The single child of the root.
    pub fn head(&self) -> &Node {
        &self.root.children[0].node
    }

    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        self.root.walk(&mut |n| out.push(&n.pred));
        out
    }

    pub fn validate(&self) -> Result<(), LogicError> {
        if self.root.pred != Predicate::Answer {
            return Err(LogicError::MalformedForm("root must be answer".into()));
        }
        if self.root.children.len() != 1 {
            return Err(LogicError::MalformedForm("answer takes exactly one child".into()));
        }
        fn check(n: &Node, is_root: bool) -> Result<(), LogicError> {
            if !is_root && n.pred == Predicate::Answer {
                return Err(LogicError::MalformedForm("nested answer".into()));
            }
            if n.children.len() > n.pred.arity() as usize {
                return Err(LogicError::MalformedForm(format!(
                    "{} has {} children, arity {}",
                    n.pred.symbol(),
                    n.children.len(),
                    n.pred.arity()
                )));
            }
            if let Predicate::MonthIs(m) = n.pred {
                if !(1..=12).contains(&m) {
                    return Err(LogicError::MalformedForm(format!("month {m}")));
                }
            }
            for e in &n.children {
                if e.parent_arg == 0
                    || e.parent_arg > n.pred.arity()
                    || e.child_arg == 0
                    || e.child_arg > e.node.pred.arity()
                {
                    return Err(LogicError::MalformedForm(format!(
                        "edge {}-{} out of range under {}",
                        e.parent_arg,
                        e.child_arg,
                        n.pred.symbol()
                    )));
                }
                check(&e.node, false)?;
            }
            Ok(())
        }
        check(&self.root, true)
    }
}
