//! Question answering pipeline: resolve, parse, interpret.

use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::context::{resolve, ContextError, Frame, ResolvedQuery};
use crate::lexicon::Lexicon;
use crate::logic::{evaluate, Denotation, GeometryConfig, LogicError};
use crate::params::ParamVector;
use crate::parser::{EntityLexicon, ParseError, ParseResult, Parser, Prepared};
use crate::world::{FactTable, WorldSnapshot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// The chosen parse and what it retrieves.
#[derive(Debug, Clone, Serialize)]
pub struct Answer {
    pub resolved: ResolvedQuery,
    pub parse: ParseResult,
    pub denotation: Denotation,
}

impl Answer {
    pub fn logical_form(&self) -> &str {
        &self.parse.argmax().text
    }
}

#[derive(Debug)]
pub struct Engine {
    parser: Parser,
    lexicon: Arc<Lexicon>,
    pub geometry: GeometryConfig,
    // the table is kept alive so the pointer comparison cannot see a reused address
    entity_cache: Mutex<Option<(Arc<FactTable>, Arc<EntityLexicon>)>>,
}

impl Default for Engine {
    fn default() -> Self {
        Self::new(Arc::new(Lexicon::default()), GeometryConfig::default())
    }
}

impl Clone for Engine {
    fn clone(&self) -> Self {
        Self::new(Arc::clone(&self.lexicon), self.geometry).with_parser(self.parser.clone())
    }
}

impl Engine {
    pub fn new(lexicon: Arc<Lexicon>, geometry: GeometryConfig) -> Self {
        Self {
            parser: Parser::new(Arc::clone(&lexicon)),
            lexicon,
            geometry,
            entity_cache: Mutex::new(None),
        }
    }

    pub fn with_parser(mut self, parser: Parser) -> Self {
        self.parser = parser;
        self
    }

    pub fn parser(&self) -> &Parser {
        &self.parser
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn entities(&self, world: &WorldSnapshot) -> Arc<EntityLexicon> {
        let mut cache = self.entity_cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((facts, lex)) = cache.as_ref() {
            if Arc::ptr_eq(facts, &world.facts) {
                return Arc::clone(lex);
            }
        }
        let lex = Arc::new(EntityLexicon::from_facts(&world.facts));
        *cache = Some((Arc::clone(&world.facts), Arc::clone(&lex)));
        lex
    }

    pub fn resolve(&self, text: &str, world: &WorldSnapshot, frame: Frame) -> Result<ResolvedQuery, EngineError> {
        Ok(resolve(text, &world.context, frame, &self.lexicon)?)
    }

    /// Resolved query and every candidate with its features.
    pub fn prepare(&self, text: &str, world: &WorldSnapshot, frame: Frame) -> Result<(ResolvedQuery, Prepared), EngineError> {
        let resolved = self.resolve(text, world, frame)?;
        let prepared = self.parser.prepare(&resolved, &self.entities(world))?;
        Ok((resolved, prepared))
    }

    pub fn denotation(&self, form: &crate::logic::LogicalForm, world: &WorldSnapshot) -> Result<Denotation, EngineError> {
        Ok(evaluate(form, world, &self.geometry)?)
    }

    /// Parses with θ, keeps the top `k` forms, and interprets the best one.
    pub fn answer(
        &self,
        text: &str,
        world: &WorldSnapshot,
        frame: Frame,
        theta: &ParamVector,
        k: usize,
    ) -> Result<Answer, EngineError> {
        let (resolved, prepared) = self.prepare(text, world, frame)?;
        let parse = prepared.rank(theta, k)?;
        let denotation = self.denotation(&parse.argmax().form, world)?;
        Ok(Answer {
            resolved,
            parse,
            denotation,
        })
    }
}
