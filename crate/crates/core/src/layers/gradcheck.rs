use crate::error::{Error, Result};

/// Flat, index-addressable view over a container's parameter blocks and their
/// gradient accumulators. Lets the finite-difference harness and the
/// optimizer walk any parameter set without borrowing its internals.
pub trait Parameterized {
    fn block_count(&self) -> usize;
    fn block_name(&self, block: usize) -> String;
    fn block_len(&self, block: usize) -> usize;
    fn param(&self, block: usize, idx: usize) -> f64;
    fn set_param(&mut self, block: usize, idx: usize, value: f64);
    fn grad(&self, block: usize, idx: usize) -> f64;
    /// Used by the verification harness (corruption hook); real accumulation
    /// happens inside the layer backward passes.
    fn add_grad(&mut self, block: usize, idx: usize, delta: f64);
    fn zero_grads(&mut self);

    fn param_count(&self) -> usize {
        (0..self.block_count()).map(|b| self.block_len(b)).sum()
    }

    /// Snapshot of all parameter values in block order.
    fn snapshot(&self) -> Vec<Vec<f64>> {
        (0..self.block_count())
            .map(|b| (0..self.block_len(b)).map(|i| self.param(b, i)).collect())
            .collect()
    }

    fn restore(&mut self, snapshot: &[Vec<f64>]) {
        for (b, block) in snapshot.iter().enumerate() {
            for (i, &v) in block.iter().enumerate() {
                self.set_param(b, i, v);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_err < self.tol)
    }

    pub fn worst(&self) -> Option<&BlockReport> {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Compares analytic gradients against central finite differences of `loss`.
///
/// `accumulate` must zero the gradients and run the forward/backward pair on
/// the same fixed inputs that `loss` evaluates; `loss` must be deterministic.
/// Relative error per element is |a - n| / max(|a| + |n|, 1e-8); the report
/// lists the max per block and passes iff every block is under `tol`.
pub fn grad_check<M: Parameterized>(
    subject: &mut M,
    loss: impl Fn(&M) -> f64,
    accumulate: impl Fn(&mut M),
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !loss(subject).is_finite() {
        return Err(Error::Numeric("grad_check: non-finite loss".into()));
    }
    accumulate(subject);
    let mut blocks = Vec::with_capacity(subject.block_count());
    for b in 0..subject.block_count() {
        let mut report = BlockReport {
            name: subject.block_name(b),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
        };
        for i in 0..subject.block_len(b) {
            let orig = subject.param(b, i);
            subject.set_param(b, i, orig + step);
            let up = loss(subject);
            subject.set_param(b, i, orig - step);
            let down = loss(subject);
            subject.set_param(b, i, orig);
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "grad_check: non-finite loss while probing {}[{}]",
                    report.name, i
                )));
            }
            let numeric = (up - down) / (2.0 * step);
            let analytic = subject.grad(b, i);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_index = i;
                report.analytic_at_worst = analytic;
                report.numeric_at_worst = numeric;
            }
        }
        blocks.push(report);
    }
    Ok(GradCheckReport { blocks, tol })
}
