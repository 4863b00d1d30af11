use crate::error::{Error, Result};
use crate::tensor::{rng_matrix, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

/// Fully connected layer y = act(W x + b), W is out x in, bias per output.
#[derive(Debug, Clone)]
pub struct DenseParams {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub gw: Matrix,
    pub gb: Vec<f64>,
}

impl DenseParams {
    /// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero bias.
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        let lim = 1.0 / (in_dim as f64).sqrt();
        Ok(DenseParams {
            w: rng_matrix(rng, out_dim, in_dim, -lim, lim)?,
            b: vec![0.0; out_dim],
            gw: Matrix::zeros(out_dim, in_dim),
            gb: vec![0.0; out_dim],
        })
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn zero_grads(&mut self) {
        self.gw.fill(0.0);
        self.gb.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
    /// Pre-activation values W x + b.
    pub pre: Vec<f64>,
    pub activation: Activation,
}

pub fn dense_forward(
    p: &DenseParams,
    x: &[f64],
    activation: Activation,
) -> Result<(Vec<f64>, DenseCache)> {
    if x.len() != p.in_dim() {
        return Err(Error::Shape(format!(
            "dense_forward: input length {} vs expected {}",
            x.len(),
            p.in_dim()
        )));
    }
    let mut pre = p.b.clone();
    for i in 0..p.out_dim() {
        let wrow = p.w.row(i);
        pre[i] += wrow.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    let y = match activation {
        Activation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
        Activation::Linear => pre.clone(),
    };
    Ok((
        y,
        DenseCache {
            input: x.to_vec(),
            pre,
            activation,
        },
    ))
}

/// Accumulates dW = dy_act x^T and db = dy_act (ReLU mask applied; the
/// subgradient at exactly 0 is taken as 0) and returns dx = W^T dy_act.
pub fn dense_backward(p: &mut DenseParams, cache: &DenseCache, dy: &[f64]) -> Result<Vec<f64>> {
    if dy.len() != p.out_dim() {
        return Err(Error::Shape(format!(
            "dense_backward: dy length {} vs out dim {}",
            dy.len(),
            p.out_dim()
        )));
    }
    let mut dx = vec![0.0; p.in_dim()];
    for i in 0..p.out_dim() {
        let masked = match cache.activation {
            Activation::Relu if cache.pre[i] <= 0.0 => 0.0,
            _ => dy[i],
        };
        if masked == 0.0 {
            continue;
        }
        p.gb[i] += masked;
        let grow = p.gw.row_mut(i);
        for (j, &v) in cache.input.iter().enumerate() {
            grow[j] += masked * v;
        }
        let wrow = p.w.row(i);
        for (j, w) in wrow.iter().enumerate() {
            dx[j] += w * masked;
        }
    }
    Ok(dx)
}
