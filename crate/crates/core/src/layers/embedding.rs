use crate::error::{Error, Result};
use crate::tensor::{rng_matrix, Matrix, SeededRng};

/// Lookup table mapping a categorical index to a learned d-dimensional row.
/// Row 0 is reserved for unknown tokens by the encoding convention upstream.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    field: String,
    pub weights: Matrix,
    pub grads: Matrix,
}

/// Embedding init range; small uniform keeps early attention logits tame.
pub const EMBED_INIT: f64 = 0.05;

impl EmbeddingTable {
    pub fn new(field: &str, vocab_size: usize, dim: usize, rng: &mut SeededRng) -> Result<Self> {
        let weights = rng_matrix(rng, vocab_size, dim, -EMBED_INIT, EMBED_INIT)?;
        Ok(EmbeddingTable {
            field: field.to_string(),
            grads: Matrix::zeros(vocab_size, dim),
            weights,
        })
    }

    pub fn field(&self) -> &str {
        &self.field
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// Copy of row `index`.
    pub fn lookup(&self, index: usize) -> Result<Vec<f64>> {
        self.check(index)?;
        Ok(self.weights.row(index).to_vec())
    }

    /// Adds `upstream` into the gradient row for `index`; other rows untouched.
    pub fn backward(&mut self, index: usize, upstream: &[f64]) -> Result<()> {
        self.check(index)?;
        if upstream.len() != self.dim() {
            return Err(Error::Shape(format!(
                "embedding backward: upstream length {} vs dim {}",
                upstream.len(),
                self.dim()
            )));
        }
        for (g, u) in self.grads.row_mut(index).iter_mut().zip(upstream) {
            *g += u;
        }
        Ok(())
    }

    fn check(&self, index: usize) -> Result<()> {
        if index >= self.vocab_size() {
            return Err(Error::Lookup {
                field: self.field.clone(),
                index,
                vocab: self.vocab_size(),
            });
        }
        Ok(())
    }
}
