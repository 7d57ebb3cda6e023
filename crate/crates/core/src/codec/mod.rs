//! SFILES-style string codec: vocabulary, canonical serializer and parser.

pub mod canonical;
pub mod oracle;
pub mod parse;
pub mod vocab;

use thiserror::Error;

pub use canonical::{
    serialize_canonical, serialize_tokens, tokens_to_string, SerializeError, MAX_SIGNAL_CONNECTIONS,
    MAX_STREAM_CONNECTIONS,
};
pub use parse::{parse, ParseError};
pub use vocab::{Token, VOCAB_SIZE};

use crate::graph::FlowsheetGraph;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
}

/// Re-serializes any parseable string in canonical form.
pub fn canonicalize(s: &str) -> Result<String, CodecError> {
    Ok(serialize_canonical(&parse(s)?)?)
}

/// Graph equality up to node ids, edge order and pass renumbering.
pub fn equivalent(a: &FlowsheetGraph, b: &FlowsheetGraph) -> bool {
    match (serialize_canonical(a), serialize_canonical(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}
