pub mod chat;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod generation;
pub mod model;
pub mod prompts;
pub mod retrieval;
pub mod store;
pub mod text;
