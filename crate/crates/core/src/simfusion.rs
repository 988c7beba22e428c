//! Patch/text cosine similarity, lattice smoothing of patch features and
//! geometric-mean fusion of raw and smoothed similarity maps.

use crate::error::{Error, Result};
use crate::filter;
use crate::matrix::{dot, norm, Matrix};
use crate::par;

/// Rows with a smaller norm are rejected.
pub const MIN_NORM: f64 = 1e-12;

/// Lower clamp applied to both inputs of [`fuse`].
pub const FUSION_EPS: f64 = 1e-6;

/// Patch embeddings on a `grid_h x grid_w` lattice (row-major) and one text
/// embedding per class.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    visual: Matrix,
    text: Matrix,
    grid_w: usize,
    grid_h: usize,
    class_names: Vec<String>,
}

impl EmbeddingSet {
    pub fn new(
        visual: Matrix,
        text: Matrix,
        grid_w: usize,
        grid_h: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if visual.rows() != grid_w * grid_h {
            return Err(Error::param(format!(
                "{} visual rows for a {grid_w}x{grid_h} grid",
                visual.rows()
            )));
        }
        if visual.cols() != text.cols() {
            return Err(Error::param(format!(
                "visual dim {} != text dim {}",
                visual.cols(),
                text.cols()
            )));
        }
        if text.rows() == 0 {
            return Err(Error::param("at least one class embedding is required"));
        }
        if class_names.len() != text.rows() {
            return Err(Error::param(format!(
                "{} class names for {} text embeddings",
                class_names.len(),
                text.rows()
            )));
        }
        check_norms("visual", &visual)?;
        check_norms("text", &text)?;
        Ok(EmbeddingSet {
            visual,
            text,
            grid_w,
            grid_h,
            class_names,
        })
    }

    /// Class names `class_0 .. class_{M-1}`.
    pub fn with_default_names(
        visual: Matrix,
        text: Matrix,
        grid_w: usize,
        grid_h: usize,
    ) -> Result<Self> {
        let names = (0..text.rows()).map(|c| format!("class_{c}")).collect();
        Self::new(visual, text, grid_w, grid_h, names)
    }

    pub fn visual(&self) -> &Matrix {
        &self.visual
    }

    pub fn text(&self) -> &Matrix {
        &self.text
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.text.rows()
    }
}

fn check_norms(what: &str, m: &Matrix) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::Numeric(format!(
            "{what} embeddings contain NaN or infinity"
        )));
    }
    for i in 0..m.rows() {
        if norm(m.row(i)) < MIN_NORM {
            return Err(Error::param(format!(
                "{what} embedding row {i} has zero norm"
            )));
        }
    }
    Ok(())
}

pub type SimilarityMatrix = Matrix;

/// `S[i][j] = <v_i, t_j> / (|v_i| |t_j|)`.
pub fn cosine_similarity(emb: &EmbeddingSet) -> Result<SimilarityMatrix> {
    check_norms("visual", &emb.visual)?;
    let (n, m) = (emb.visual.rows(), emb.text.rows());
    let text_norms: Vec<f64> = (0..m).map(|j| norm(emb.text.row(j))).collect();
    let mut s = Matrix::zeros(n, m);
    par::for_each_row_mut(s.as_mut_slice(), m, |i, row| {
        let v = emb.visual.row(i);
        let vn = norm(v);
        for (j, out) in row.iter_mut().enumerate() {
            *out = (dot(v, emb.text.row(j)) / (vn * text_norms[j])).clamp(-1.0, 1.0);
        }
    });
    Ok(s)
}

/// Gaussian-smooth every feature channel of the patch embeddings across the
/// patch lattice (reflect-101 borders). Text embeddings are carried over.
pub fn smooth_visual(emb: &EmbeddingSet, kernel_size: usize, sigma: f64) -> Result<EmbeddingSet> {
    let kernel = filter::gaussian_kernel_1d(kernel_size, sigma)?;
    let dim = emb.visual.cols();
    let data =
        filter::convolve_separable(emb.visual.as_slice(), emb.grid_w, emb.grid_h, dim, &kernel);
    Ok(EmbeddingSet {
        visual: Matrix::from_vec(emb.visual.rows(), dim, data)?,
        text: emb.text.clone(),
        grid_w: emb.grid_w,
        grid_h: emb.grid_h,
        class_names: emb.class_names.clone(),
    })
}

/// Geometric-mean fusion `max(S~, eps)^alpha * max(S, eps)^(1 - alpha)`.
pub fn fuse(
    s: &SimilarityMatrix,
    s_smooth: &SimilarityMatrix,
    alpha: f64,
) -> Result<SimilarityMatrix> {
    if s.shape() != s_smooth.shape() {
        return Err(Error::param(format!(
            "similarity shapes differ: {:?} vs {:?}",
            s.shape(),
            s_smooth.shape()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!(
            "alpha must be in [0, 1], got {alpha}"
        )));
    }
    let data = s
        .as_slice()
        .iter()
        .zip(s_smooth.as_slice())
        .map(|(&raw, &smooth)| {
            smooth.max(FUSION_EPS).powf(alpha) * raw.max(FUSION_EPS).powf(1.0 - alpha)
        })
        .collect();
    Matrix::from_vec(s.rows(), s.cols(), data)
}

/// Per-row argmax; the lowest index wins ties.
pub fn predict(s: &SimilarityMatrix) -> Vec<usize> {
    (0..s.rows())
        .map(|i| {
            let row = s.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
