//! Logical forms (DCS trees), their canonical text, and interpretation
//! against a world snapshot.

mod eval;
mod form;
mod text;

use std::collections::BTreeSet;

use thiserror::Error;

pub use eval::{classify, eval_spatial, evaluate, Denotation, FormShape, GeometryConfig};
pub use form::{Edge, EntityRef, LogicalForm, Node, Predicate, Relation};
pub use text::{parse_canonical_text, to_canonical_text};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogicError {
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("malformed logical form: {0}")]
    MalformedForm(String),
    #[error("syntax error at {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

impl LogicError {
    fn syntax(offset: usize, message: impl Into<String>) -> Self {
        LogicError::Syntax {
            offset,
            message: message.into(),
        }
    }
}

/// Every predicate symbol the interpreter accepts, including one unary
/// predicate per entity kind seen in the world.
#[derive(Debug, Clone, Default)]
pub struct PredicateRegistry {
    kinds: BTreeSet<String>,
}

impl PredicateRegistry {
    pub const CORE_SYMBOLS: [&'static str; 10] = [
        "answer", "const", "day", "month_is", "view", "frontOf", "behind", "leftOf", "rightOf", "near",
    ];

    pub fn from_kinds<I, S>(kinds: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            kinds: kinds.into_iter().map(Into::into).collect(),
        }
    }

    pub fn for_world(world: &crate::world::WorldSnapshot) -> Self {
        Self::from_kinds(world.facts.facts().iter().map(|f| f.kind.clone()))
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.kinds.iter().map(String::as_str)
    }

    pub fn arity(&self, symbol: &str) -> Option<u8> {
        if Relation::from_symbol(symbol).is_some() {
            Some(2)
        } else if Self::CORE_SYMBOLS.contains(&symbol) || self.kinds.contains(symbol) {
            Some(1)
        } else {
            None
        }
    }

    pub fn relations(&self) -> &'static [Relation] {
        &Relation::ALL
    }
}
