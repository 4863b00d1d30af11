//! Trainable building blocks: embedding lookup, multi-head attention over
//! field tokens, layer normalization, dense layers. Each block has an
//! explicit forward pass that returns a cache, and an explicit backward pass
//! that is a pure function of (params, cache, upstream gradient) and
//! accumulates into per-parameter gradient buffers.

mod attention;
mod dense;
mod embedding;
mod gradcheck;
mod norm;

pub use attention::{mha_backward, mha_forward, AttnScale, MhaCache, MhaParams};
pub use dense::{dense_backward, dense_forward, Activation, DenseCache, DenseParams};
pub use embedding::EmbeddingTable;
pub use gradcheck::{grad_check, BlockReport, GradCheckReport, Parameterized};
pub use norm::{layernorm_backward, layernorm_forward, LayerNormCache};
