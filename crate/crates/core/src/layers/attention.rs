use crate::error::{Error, Result};
use crate::tensor::{rng_matrix, Matrix, SeededRng};

/// Which dimension the attention logits are scaled by. Per-head is the
/// transformer convention and the default; the model dimension is kept as a
/// switch because the two are easy to conflate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnScale {
    PerHead,
    ModelDim,
}

impl AttnScale {
    pub fn factor(self, d: usize, d_h: usize) -> f64 {
        match self {
            AttnScale::PerHead => 1.0 / (d_h as f64).sqrt(),
            AttnScale::ModelDim => 1.0 / (d as f64).sqrt(),
        }
    }
}

/// Multi-head attention parameters: per-head query/key/value projections
/// (d x d_h each) and the output projection (h*d_h x d), with matching
/// gradient accumulators.
#[derive(Debug, Clone)]
pub struct MhaParams {
    pub heads: usize,
    pub d: usize,
    pub d_h: usize,
    pub scale: AttnScale,
    pub w_q: Vec<Matrix>,
    pub w_k: Vec<Matrix>,
    pub w_v: Vec<Matrix>,
    pub w_o: Matrix,
    pub g_q: Vec<Matrix>,
    pub g_k: Vec<Matrix>,
    pub g_v: Vec<Matrix>,
    pub g_o: Matrix,
}

impl MhaParams {
    /// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] init. Rejects h*d_h != d.
    pub fn new(heads: usize, d: usize, d_h: usize, scale: AttnScale, rng: &mut SeededRng) -> Result<Self> {
        if heads == 0 || d == 0 || d_h == 0 {
            return Err(Error::Config("attention dims must be positive".into()));
        }
        if heads * d_h != d {
            return Err(Error::Config(format!(
                "heads ({}) * d_h ({}) must equal d ({})",
                heads, d_h, d
            )));
        }
        let proj_init = 1.0 / (d as f64).sqrt();
        let bank = |rows: usize, cols: usize, lim: f64, rng: &mut SeededRng| {
            rng_matrix(rng, rows, cols, -lim, lim)
        };
        let mut w_q = Vec::with_capacity(heads);
        let mut w_k = Vec::with_capacity(heads);
        let mut w_v = Vec::with_capacity(heads);
        for _ in 0..heads {
            w_q.push(bank(d, d_h, proj_init, rng)?);
        }
        for _ in 0..heads {
            w_k.push(bank(d, d_h, proj_init, rng)?);
        }
        for _ in 0..heads {
            w_v.push(bank(d, d_h, proj_init, rng)?);
        }
        let out_init = 1.0 / ((heads * d_h) as f64).sqrt();
        let w_o = bank(heads * d_h, d, out_init, rng)?;
        Ok(MhaParams {
            heads,
            d,
            d_h,
            scale,
            g_q: vec![Matrix::zeros(d, d_h); heads],
            g_k: vec![Matrix::zeros(d, d_h); heads],
            g_v: vec![Matrix::zeros(d, d_h); heads],
            g_o: Matrix::zeros(heads * d_h, d),
            w_q,
            w_k,
            w_v,
            w_o,
        })
    }

    pub fn zero_grads(&mut self) {
        for g in self
            .g_q
            .iter_mut()
            .chain(self.g_k.iter_mut())
            .chain(self.g_v.iter_mut())
        {
            g.fill(0.0);
        }
        self.g_o.fill(0.0);
    }
}

/// Intermediates needed to make the backward pass a pure function of
/// (params, cache, upstream gradient).
#[derive(Debug, Clone)]
pub struct MhaCache {
    pub x: Matrix,
    pub q: Vec<Matrix>,
    pub k: Vec<Matrix>,
    pub v: Vec<Matrix>,
    /// Row-stochastic attention weights, one F x F matrix per head.
    pub attn: Vec<Matrix>,
    /// Concatenated head outputs, F x (h*d_h).
    pub concat: Matrix,
}

/// Scaled dot-product attention over the token rows of x (F x d):
/// per head, A = softmax(Q K^T * scale), head = A V; the heads are
/// concatenated and projected by w_o back to F x d.
pub fn mha_forward(p: &MhaParams, x: &Matrix) -> Result<(Matrix, MhaCache)> {
    if x.cols() != p.d {
        return Err(Error::Shape(format!(
            "mha_forward: input cols {} vs model dim {}",
            x.cols(),
            p.d
        )));
    }
    if x.rows() == 0 {
        return Err(Error::Shape("mha_forward: empty token matrix".into()));
    }
    let f = x.rows();
    let scale = p.scale.factor(p.d, p.d_h);
    let mut q = Vec::with_capacity(p.heads);
    let mut k = Vec::with_capacity(p.heads);
    let mut v = Vec::with_capacity(p.heads);
    let mut attn = Vec::with_capacity(p.heads);
    let mut concat = Matrix::zeros(f, p.heads * p.d_h);
    for h in 0..p.heads {
        let qh = x.matmul(&p.w_q[h])?;
        let kh = x.matmul(&p.w_k[h])?;
        let vh = x.matmul(&p.w_v[h])?;
        let scores = qh.matmul(&kh.transpose())?.scale(scale);
        let a = scores.softmax_rows()?;
        let head = a.matmul(&vh)?;
        for i in 0..f {
            for j in 0..p.d_h {
                concat.set(i, h * p.d_h + j, head.get(i, j));
            }
        }
        q.push(qh);
        k.push(kh);
        v.push(vh);
        attn.push(a);
    }
    let z = concat.matmul(&p.w_o)?;
    let cache = MhaCache {
        x: x.clone(),
        q,
        k,
        v,
        attn,
        concat,
    };
    Ok((z, cache))
}

/// Reverse-mode pass. Accumulates parameter gradients into p and returns the
/// gradient with respect to x. Includes the softmax Jacobian term.
pub fn mha_backward(p: &mut MhaParams, cache: &MhaCache, dz: &Matrix) -> Result<Matrix> {
    let f = cache.x.rows();
    if dz.rows() != f || dz.cols() != p.d {
        return Err(Error::Shape(format!(
            "mha_backward: dz {}x{} vs expected {}x{}",
            dz.rows(),
            dz.cols(),
            f,
            p.d
        )));
    }
    let scale = p.scale.factor(p.d, p.d_h);
    // z = concat . w_o
    p.g_o.add_scaled(&cache.concat.transpose().matmul(dz)?, 1.0)?;
    let dconcat = dz.matmul(&p.w_o.transpose())?;
    let xt = cache.x.transpose();
    let mut dx = Matrix::zeros(f, p.d);
    for h in 0..p.heads {
        let mut dhead = Matrix::zeros(f, p.d_h);
        for i in 0..f {
            for j in 0..p.d_h {
                dhead.set(i, j, dconcat.get(i, h * p.d_h + j));
            }
        }
        let a = &cache.attn[h];
        // head = A V
        let da = dhead.matmul(&cache.v[h].transpose())?;
        let dv = a.transpose().matmul(&dhead)?;
        // softmax Jacobian per row: ds_j = a_j * (da_j - sum_k da_k a_k)
        let mut ds = Matrix::zeros(f, f);
        for i in 0..f {
            let dot: f64 = da
                .row(i)
                .iter()
                .zip(a.row(i))
                .map(|(g, w)| g * w)
                .sum();
            for j in 0..f {
                ds.set(i, j, a.get(i, j) * (da.get(i, j) - dot));
            }
        }
        // scores = Q K^T * scale
        let dq = ds.matmul(&cache.k[h])?.scale(scale);
        let dk = ds.transpose().matmul(&cache.q[h])?.scale(scale);
        p.g_q[h].add_scaled(&xt.matmul(&dq)?, 1.0)?;
        p.g_k[h].add_scaled(&xt.matmul(&dk)?, 1.0)?;
        p.g_v[h].add_scaled(&xt.matmul(&dv)?, 1.0)?;
        dx = dx.add(&dq.matmul(&p.w_q[h].transpose())?)?;
        dx = dx.add(&dk.matmul(&p.w_k[h].transpose())?)?;
        dx = dx.add(&dv.matmul(&p.w_v[h].transpose())?)?;
    }
    Ok(dx)
}
