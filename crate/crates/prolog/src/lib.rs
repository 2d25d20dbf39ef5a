//! A small Prolog interpreter compatible with the subset of SWI-Prolog
//! that the sandbox driver and typical generated programs rely on.

pub mod arith;
pub mod builtins;
pub mod cli;
pub mod engine;
pub mod error;
pub mod reader;
pub mod term;
pub mod writer;

pub use engine::Machine;
pub use error::Flow;
pub use term::Term;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
