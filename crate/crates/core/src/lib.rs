//! Target-centered community networks from photo face co-occurrence.
//!
//! The pipeline is: ingest a photo-annotation [`corpus`], attach identity
//! predictions through a pluggable [`recognition`] source, grow a layered
//! network around a target with [`netbuild`], weight its edges by TF-IDF
//! photo scores in [`ranking`], and measure the result with [`evalstats`].
//! [`synthgen`] produces seeded corpora with planted communities for tests
//! and noise experiments, and [`cli`] wires all of it to the `cooccur` binary.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evalstats;
pub mod netbuild;
pub mod ranking;
pub mod recognition;
pub mod synthgen;

mod rng;

pub use corpus::{Corpus, FaceInstance, IdentityId, LabelSource, PhotoId, Quality, Split};
pub use error::{Error, Result};
