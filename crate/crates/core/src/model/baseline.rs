//! Ridge regression on one-hot field indicators, solved by normal equations.
//! Stands in as the reference point the attention model is compared against.

use crate::error::{Error, Result};
use crate::model::{EncodedExample, FieldSchema};
use crate::tensor::Matrix;

/// Intercept plus one coefficient per (field, vocab index) pair.
#[derive(Debug, Clone)]
pub struct LinearBaseline {
    widths: Vec<usize>,
    weights: Vec<f64>,
    scale: (f64, f64),
}

impl LinearBaseline {
    /// Fit on encoded training rows. `l2` must be positive: it is what makes
    /// the normal-equation system positive definite.
    pub fn fit(
        train: &[EncodedExample],
        schema: &FieldSchema,
        l2: f64,
        scale: (f64, f64),
    ) -> Result<LinearBaseline> {
        if train.is_empty() {
            return Err(Error::Dataset("baseline fit on empty training set".into()));
        }
        if l2 <= 0.0 {
            return Err(Error::Argument(format!("baseline l2 must be > 0, got {}", l2)));
        }
        let widths: Vec<usize> = schema.fields().iter().map(|f| f.vocab_size).collect();
        let dim = 1 + widths.iter().sum::<usize>();
        let mut a = Matrix::zeros(dim, dim);
        let mut rhs = vec![0.0; dim];
        let mut cols = Vec::with_capacity(1 + widths.len());
        for ex in train {
            if ex.indices.len() != widths.len() {
                return Err(Error::Encode(format!(
                    "baseline: example has {} indices, schema expects {}",
                    ex.indices.len(),
                    widths.len()
                )));
            }
            cols.clear();
            cols.push(0usize);
            let mut offset = 1;
            for (f, &idx) in ex.indices.iter().enumerate() {
                cols.push(offset + idx);
                offset += widths[f];
            }
            for &i in &cols {
                for &j in &cols {
                    a.set(i, j, a.get(i, j) + 1.0);
                }
                rhs[i] += ex.target;
            }
        }
        // the intercept (index 0) is left unpenalized
        for i in 1..dim {
            a.set(i, i, a.get(i, i) + l2);
        }
        let weights = cholesky_solve(&a, &rhs)?;
        Ok(LinearBaseline { widths, weights, scale })
    }

    /// Predict one example, clamped to the rating scale.
    pub fn predict(&self, ex: &EncodedExample) -> f64 {
        let mut y = self.weights[0];
        let mut offset = 1;
        for (f, &idx) in ex.indices.iter().enumerate() {
            y += self.weights[offset + idx];
            offset += self.widths[f];
        }
        y.clamp(self.scale.0, self.scale.1)
    }
}

/// Solve A x = b for symmetric positive definite A.
fn cholesky_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numeric(
                        "normal equations not positive definite".into(),
                    ));
                }
                l.set(i, i, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    // forward then back substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    Ok(x)
}
