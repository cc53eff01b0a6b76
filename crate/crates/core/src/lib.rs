//! Contextual media retrieval: natural-language spatio-temporal questions are
//! parsed into logical forms and interpreted against geographic facts, media
//! metadata and the asking user's position, heading and clock.

pub mod context;
pub mod engine;
pub mod eval;
pub mod geo;
pub mod learner;
pub mod lexicon;
pub mod logic;
pub mod params;
pub mod parser;
pub mod synth;
pub mod world;
