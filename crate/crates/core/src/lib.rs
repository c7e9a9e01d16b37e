//! Corpus-scale detection and rewriting of biased language in news paragraphs.
//!
//! The crate is organised as a file-oriented pipeline:
//!
//! * [`corpus`] loads article documents and splits them into paragraphs.
//! * [`llm_gateway`] talks to chat/embedding providers (or the offline mock)
//!   with caching, retries and rate limiting.
//! * [`detection`] scores paragraphs on the 0/1/2 bias scale.
//! * [`debias`] rewrites flagged paragraphs with one of three prompt levels.
//! * [`evaluation`] compares model output to human annotations.
//! * [`analytics`] aggregates scores by publisher, year and U.S. state.

pub mod analytics;
pub mod corpus;
pub mod debias;
pub mod detection;
pub mod evaluation;
pub mod fanout;
pub mod jsonl;
pub mod llm_gateway;
pub mod prompt;

pub use corpus::{Article, Paragraph, ParagraphId};
pub use detection::{AssessmentRecord, BiasAssessment};
pub use llm_gateway::{Gateway, GatewayError, ProviderConfig, ProviderKind};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
