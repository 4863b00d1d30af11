//! Shared helpers for the integration suites: an independent longhand
//! transcription of the forward pipeline (plain nested f64 loops, no reuse of
//! the library's matrix ops) plus small dataset builders.

#![allow(dead_code)]

use grouprec::layers::AttnScale;
use grouprec::model::Model;

/// Transcribes the whole pipeline by hand: per-field embedding rows, per-head
/// scaled dot-product attention, concatenation, output projection, per-row
/// standardization, flatten, dense ReLU and the affine output. Reads the
/// model's stored weights element by element; every arithmetic step is local.
/// Assumes the default categorical criteria encoding.
pub fn longhand_forward(m: &Model, indices: &[usize]) -> f64 {
    let d = m.hp.d;
    let heads = m.hp.heads;
    let dh = m.hp.d_h;
    let f = indices.len();
    assert_eq!(f, m.schema.len(), "index count must match schema");

    // token stack: one embedding row per field
    let x: Vec<Vec<f64>> = indices
        .iter()
        .enumerate()
        .map(|(fi, &idx)| (0..d).map(|j| m.embeddings[fi].weights.get(idx, j)).collect())
        .collect();

    let scale = match m.hp.attn_scale {
        AttnScale::PerHead => 1.0 / (dh as f64).sqrt(),
        AttnScale::ModelDim => 1.0 / (d as f64).sqrt(),
    };

    // attention heads
    let mut concat = vec![vec![0.0; heads * dh]; f];
    for h in 0..heads {
        let mut q = vec![vec![0.0; dh]; f];
        let mut k = vec![vec![0.0; dh]; f];
        let mut v = vec![vec![0.0; dh]; f];
        for i in 0..f {
            for c in 0..dh {
                for r in 0..d {
                    q[i][c] += x[i][r] * m.mha.w_q[h].get(r, c);
                    k[i][c] += x[i][r] * m.mha.w_k[h].get(r, c);
                    v[i][c] += x[i][r] * m.mha.w_v[h].get(r, c);
                }
            }
        }
        for i in 0..f {
            let mut scores = vec![0.0; f];
            for j in 0..f {
                for c in 0..dh {
                    scores[j] += q[i][c] * k[j][c];
                }
                scores[j] *= scale;
            }
            let mut exps = vec![0.0; f];
            let mut denom = 0.0;
            for j in 0..f {
                exps[j] = scores[j].exp();
                denom += exps[j];
            }
            for t in 0..dh {
                let mut acc = 0.0;
                for j in 0..f {
                    acc += exps[j] / denom * v[j][t];
                }
                concat[i][h * dh + t] = acc;
            }
        }
    }

    // output projection
    let mut z = vec![vec![0.0; d]; f];
    for i in 0..f {
        for j in 0..d {
            for t in 0..heads * dh {
                z[i][j] += concat[i][t] * m.mha.w_o.get(t, j);
            }
        }
    }

    // per-row standardization with population variance
    let mut z_ln = vec![vec![0.0; d]; f];
    for i in 0..f {
        let mean: f64 = z[i].iter().sum::<f64>() / d as f64;
        let var: f64 = z[i].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let std = (var + m.hp.layernorm_eps).sqrt();
        for j in 0..d {
            z_ln[i][j] = (z[i][j] - mean) / std;
        }
    }

    // flatten (row-major, field order)
    let mut flat = Vec::with_capacity(f * d);
    for row in &z_ln {
        flat.extend_from_slice(row);
    }

    // dense ReLU
    let width = m.hidden.out_dim();
    let mut hidden = vec![0.0; width];
    for i in 0..width {
        let mut pre = m.hidden.b[i];
        for (j, &v) in flat.iter().enumerate() {
            pre += m.hidden.w.get(i, j) * v;
        }
        hidden[i] = if pre > 0.0 { pre } else { 0.0 };
    }

    // affine output
    let mut out = m.output.b[0];
    for (j, &v) in hidden.iter().enumerate() {
        out += m.output.w.get(0, j) * v;
    }
    out
}
