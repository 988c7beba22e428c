//! Structure-aware attention bias.
//!
//! A per-patch structural score `b` is averaged from the `(mu + sigma)` of the
//! patch's neighbouring edges, multiplied (as `exp(b)`) into a spatial
//! Gaussian over patch coordinates, and the result is added to the
//! pre-softmax attention logits.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::par;
use crate::patch_bridge::{Neighborhood, PatchEdgeStats, PatchGrid};

/// Per-patch structural score, row-major over the patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBias {
    pub values: Vec<f64>,
}

impl NodeBias {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn rag_bias(
    stats: &PatchEdgeStats,
    grid: &PatchGrid,
    neighborhood: Neighborhood,
) -> Result<NodeBias> {
    if stats.neighborhood() != neighborhood {
        return Err(Error::param(format!(
            "edge statistics were computed with {}-neighbourhood, requested {}",
            stats.neighborhood(),
            neighborhood
        )));
    }
    let values = par::map_range(grid.len(), |i| {
        let mut sum = 0.0;
        let mut n = 0usize;
        for k in grid.neighbors(i, neighborhood) {
            let s = stats.get(i, k).ok_or_else(|| {
                Error::param(format!("missing edge statistics for patches ({i}, {k})"))
            })?;
            sum += s.mu + s.sigma;
            n += 1;
        }
        Ok(if n == 0 { 0.0 } else { sum / n as f64 })
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(NodeBias { values })
}

/// `g(i, j) = exp(-|p_i - p_j|^2 / (2 sigma^2))` over integer patch
/// coordinates, patches indexed row-major.
pub fn spatial_gaussian(grid_w: usize, grid_h: usize, sigma: f64) -> Result<Matrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!(
            "spatial sigma must be positive, got {sigma}"
        )));
    }
    let n = grid_w * grid_h;
    let denom = 2.0 * sigma * sigma;
    let mut m = Matrix::zeros(n, n);
    par::for_each_row_mut(m.as_mut_slice(), n, |i, row| {
        let (xi, yi) = ((i % grid_w) as f64, (i / grid_w) as f64);
        for (j, out) in row.iter_mut().enumerate() {
            let (xj, yj) = ((j % grid_w) as f64, (j / grid_w) as f64);
            let d2 = (xi - xj).powi(2) + (yi - yj).powi(2);
            *out = (-d2 / denom).exp();
        }
    });
    Ok(m)
}

/// Additive attention bias `B[i][j] = g[i][j] * exp(b[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasMatrix {
    pub matrix: Matrix,
    pub sigma_spatial: f64,
}

impl BiasMatrix {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }
}

pub fn bilateral_bias(g: &Matrix, b: &NodeBias, sigma_spatial: f64) -> Result<BiasMatrix> {
    let n = b.len();
    if g.shape() != (n, n) {
        return Err(Error::param(format!(
            "spatial kernel is {:?}, node bias has {n} entries",
            g.shape()
        )));
    }
    let mut out = g.clone();
    par::for_each_row_mut(out.as_mut_slice(), n, |i, row| {
        let f = b.values[i].exp();
        row.iter_mut().for_each(|v| *v *= f);
    });
    Ok(BiasMatrix {
        matrix: out,
        sigma_spatial,
    })
}

/// Query/key/value rows for a single attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInputs {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
}

impl AttentionInputs {
    pub fn new(q: Matrix, k: Matrix, v: Matrix) -> Result<Self> {
        if q.shape() != k.shape() || q.shape() != v.shape() {
            return Err(Error::param(format!(
                "Q {:?}, K {:?}, V {:?} must share a shape",
                q.shape(),
                k.shape(),
                v.shape()
            )));
        }
        if q.cols() == 0 {
            return Err(Error::param("head dimension must be positive"));
        }
        Ok(AttentionInputs { q, k, v })
    }

    pub fn tokens(&self) -> usize {
        self.q.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.q.cols()
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.head_dim() as f64).sqrt()
    }
}

fn check_inputs(inp: &AttentionInputs, bias: Option<&Matrix>) -> Result<()> {
    let n = inp.tokens();
    if let Some(b) = bias {
        if b.shape() != (n, n) {
            return Err(Error::param(format!(
                "bias is {:?}, expected ({n}, {n})",
                b.shape()
            )));
        }
        if !b.is_finite() {
            return Err(Error::Numeric("bias contains NaN or infinity".into()));
        }
    }
    for (name, m) in [("Q", &inp.q), ("K", &inp.k), ("V", &inp.v)] {
        if !m.is_finite() {
            return Err(Error::Numeric(format!("{name} contains NaN or infinity")));
        }
    }
    Ok(())
}

/// Row-softmax of `Q K^T / sqrt(d) + B` (B omitted when `None`).
pub fn attention_weights(inp: &AttentionInputs, bias: Option<&Matrix>) -> Result<Matrix> {
    check_inputs(inp, bias)?;
    let n = inp.tokens();
    let scale = inp.scale();
    let mut w = Matrix::zeros(n, n);
    par::for_each_row_mut(w.as_mut_slice(), n, |i, row| {
        let q = inp.q.row(i);
        for (j, out) in row.iter_mut().enumerate() {
            *out = dot(q, inp.k.row(j)) * scale + bias.map_or(0.0, |b| b.get(i, j));
        }
        softmax_in_place(row);
    });
    Ok(w)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// `softmax(Q K^T / sqrt(d) + B) V`.
pub fn biased_attention(inp: &AttentionInputs, bias: &BiasMatrix) -> Result<Matrix> {
    attend(inp, Some(&bias.matrix))
}

/// Plain scaled dot-product attention.
pub fn attention(inp: &AttentionInputs) -> Result<Matrix> {
    attend(inp, None)
}

fn attend(inp: &AttentionInputs, bias: Option<&Matrix>) -> Result<Matrix> {
    let weights = attention_weights(inp, bias)?;
    let (n, d) = (inp.tokens(), inp.head_dim());
    let mut out = Matrix::zeros(n, d);
    par::for_each_row_mut(out.as_mut_slice(), d, |i, row| {
        for (j, &a) in weights.row(i).iter().enumerate() {
            for (o, v) in row.iter_mut().zip(inp.v.row(j)) {
                *o += a * v;
            }
        }
    });
    Ok(out)
}
