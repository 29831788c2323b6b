//! Dual-space word embeddings: SGNS and GloVe trainers that keep both the
//! word matrix W and the context matrix C, plus an evaluation harness that
//! scores every compare method (WW, WC, CW, CC, SS, AA) on similarity,
//! association and analogy tasks and consolidates the results into
//! "maximum (average)" tables.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Kernel functions take their operands flat to stay allocation-free.
#![allow(clippy::too_many_arguments)]

pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod glove;
pub mod manifest;
pub mod matrix;
pub mod report;
pub mod seed;
pub mod sgns;

pub use corpus::{Normalizer, SentenceStream, Stopwords, Vocabulary};
pub use embedding::{CompareMethod, DualEmbedding, Neighbor, Space};
pub use error::{Error, Result};
pub use eval::{Task, TaskScore};
pub use glove::{CoocMatrix, GloveConfig};
pub use matrix::Matrix;
pub use sgns::{SgnsConfig, SgnsMethod};

/// A trained embedding and its per-epoch training loss.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub embedding: DualEmbedding,
    /// SGNS: running mean of the per-example loss measured just before each
    /// update, so it can tick up late in training as the learning rate (and
    /// with it the benefit of the previous update to the same center word)
    /// shrinks. GloVe: total weighted least-squares cost after each epoch.
    pub epoch_losses: Vec<f64>,
}
