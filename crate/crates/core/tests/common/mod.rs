//! Generators and brute-force references shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ragseg::imaging::GrayImage;
use ragseg::rag::RegionProfile;
use ragseg::texture::FeatureSubset;
use ragseg::{Matrix, RgbImage, SuperpixelMap};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_gray(r: &mut impl Rng, w: usize, h: usize, levels: usize) -> GrayImage {
    let data = (0..w * h).map(|_| r.gen_range(0..levels) as u16).collect();
    GrayImage::new(w, h, levels, data).unwrap()
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| r.gen_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Standard normal via Box-Muller.
pub fn normal(r: &mut impl Rng) -> f64 {
    let u1: f64 = r.gen_range(f64::EPSILON..1.0);
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Nearest-seed (Voronoi) labelling with `k` random seeds.
pub fn voronoi_labels(r: &mut impl Rng, w: usize, h: usize, k: usize) -> Vec<u32> {
    let seeds: Vec<(f64, f64)> = (0..k)
        .map(|_| (r.gen_range(0.0..w as f64), r.gen_range(0.0..h as f64)))
        .collect();
    (0..w * h)
        .map(|p| {
            let (x, y) = ((p % w) as f64, (p / w) as f64);
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (i, &(sx, sy)) in seeds.iter().enumerate() {
                let d = (x - sx).powi(2) + (y - sy).powi(2);
                if d < bd {
                    bd = d;
                    best = i;
                }
            }
            best as u32
        })
        .collect()
}

/// Piecewise image: Voronoi cells, each with a base colour and its own
/// texture (stripes, checker or speckle) of random period and amplitude.
pub fn textured_image(r: &mut impl Rng, w: usize, h: usize, cells: usize) -> RgbImage {
    let labels = voronoi_labels(r, w, h, cells);
    struct Cell {
        base: [f64; 3],
        kind: u8,
        period: usize,
        amp: f64,
        noise: Vec<f64>,
    }
    let cells: Vec<Cell> = (0..cells)
        .map(|_| Cell {
            base: [
                r.gen_range(0.25..0.75),
                r.gen_range(0.25..0.75),
                r.gen_range(0.25..0.75),
            ],
            kind: r.gen_range(0..4),
            period: r.gen_range(1..6),
            amp: r.gen_range(0.05..0.25),
            noise: (0..w * h).map(|_| r.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    RgbImage::from_fn(w, h, |x, y| {
        let c = &cells[labels[y * w + x] as usize];
        let t = match c.kind {
            0 => 0.0,
            1 => {
                if (x / c.period) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            2 => {
                if (x / c.period + y / c.period) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            _ => c.noise[y * w + x],
        };
        let d = c.amp * t;
        [c.base[0] + d, c.base[1] + d, c.base[2] + d]
    })
}

// ---------------------------------------------------------------- GLCM

pub const OFFSETS: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

/// Direct pixel-pair count into an L x L table, symmetrised and normalised.
pub fn naive_glcm(gray: &GrayImage, mask: &[bool]) -> Vec<Vec<f64>> {
    let (w, h, l) = (gray.width(), gray.height(), gray.levels());
    let mut counts = vec![vec![0.0; l]; l];
    let mut total = 0.0;
    let mut hist = vec![0usize; l];
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            hist[gray.get(x, y) as usize] += 1;
            for &(dx, dy) in &OFFSETS {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if !mask[ny * w + nx] {
                    continue;
                }
                let (a, b) = (gray.get(x, y) as usize, gray.get(nx, ny) as usize);
                counts[a][b] += 1.0;
                counts[b][a] += 1.0;
                total += 2.0;
            }
        }
    }
    if total == 0.0 {
        let mut mode = 0;
        for b in 0..l {
            if hist[b] > hist[mode] {
                mode = b;
            }
        }
        counts[mode][mode] = 1.0;
        return counts;
    }
    for row in counts.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    counts
}

/// (contrast, homogeneity, energy, correlation) by explicit double loops.
pub fn naive_features(p: &[Vec<f64>]) -> [f64; 4] {
    let l = p.len();
    let (mut contrast, mut homog, mut energy) = (0.0, 0.0, 0.0);
    let (mut mu_m, mut mu_n) = (0.0, 0.0);
    for m in 0..l {
        for n in 0..l {
            let v = p[m][n];
            let d = m as f64 - n as f64;
            contrast += d * d * v;
            homog += v / (1.0 + d.abs());
            energy += v * v;
            mu_m += m as f64 * v;
            mu_n += n as f64 * v;
        }
    }
    let (mut var_m, mut var_n, mut cov) = (0.0, 0.0, 0.0);
    for m in 0..l {
        for n in 0..l {
            let v = p[m][n];
            var_m += (m as f64 - mu_m).powi(2) * v;
            var_n += (n as f64 - mu_n).powi(2) * v;
            cov += (m as f64 - mu_m) * (n as f64 - mu_n) * v;
        }
    }
    let s = var_m.sqrt() * var_n.sqrt();
    let corr = if s <= 1e-12 {
        1.0
    } else {
        (cov / s).clamp(-1.0, 1.0)
    };
    [contrast, homog, energy, corr]
}

// ---------------------------------------------------------------- RAG

pub fn brute_adjacency(map: &SuperpixelMap) -> BTreeSet<(usize, usize)> {
    let (w, h) = (map.width(), map.height());
    let mut set = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            let a = map.label(x, y) as usize;
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h {
                    let b = map.label(nx, ny) as usize;
                    if a != b {
                        set.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
    }
    set
}

/// Independent edge-distance model: colour L2 plus L1 over per-image
/// min-max scaled texture features, divided by the largest adjacent-pair
/// distance and capped at 1.
pub struct DistanceOracle {
    colors: Vec<[f64; 3]>,
    scaled: Vec<[f64; 4]>,
    mask: [bool; 4],
    pub norm: f64,
}

impl DistanceOracle {
    pub fn new(
        profiles: &[RegionProfile],
        adjacency: &BTreeSet<(usize, usize)>,
        subset: FeatureSubset,
    ) -> Self {
        let feats: Vec<[f64; 4]> = profiles
            .iter()
            .map(|p| p.glcm_features.to_array())
            .collect();
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for f in &feats {
            for k in 0..4 {
                lo[k] = lo[k].min(f[k]);
                hi[k] = hi[k].max(f[k]);
            }
        }
        let scaled = feats
            .iter()
            .map(|f| {
                let mut s = [0.0; 4];
                for k in 0..4 {
                    let span = hi[k] - lo[k];
                    s[k] = if span > 0.0 {
                        (f[k] - lo[k]) / span
                    } else {
                        0.0
                    };
                }
                s
            })
            .collect();
        let mut o = DistanceOracle {
            colors: profiles.iter().map(|p| p.mean_color).collect(),
            scaled,
            mask: subset.mask(),
            norm: 1.0,
        };
        let max = adjacency
            .iter()
            .map(|&(a, b)| o.raw(a, b))
            .fold(0.0, f64::max);
        o.norm = if max > 0.0 { max } else { 1.0 };
        o
    }

    pub fn raw(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.colors[a], self.colors[b]);
        let color =
            ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2) + (ca[2] - cb[2]).powi(2)).sqrt();
        let mut tex = 0.0;
        for k in 0..4 {
            if self.mask[k] {
                tex += (self.scaled[a][k] - self.scaled[b][k]).abs();
            }
        }
        color + tex
    }

    pub fn normalized(&self, a: usize, b: usize) -> f64 {
        (self.raw(a, b) / self.norm).min(1.0)
    }
}

/// Regions touched by each patch, found by scanning its pixels.
pub fn brute_memberships(
    map: &SuperpixelMap,
    patch: usize,
) -> (usize, usize, Vec<BTreeSet<usize>>) {
    let gw = map.width().div_ceil(patch);
    let gh = map.height().div_ceil(patch);
    let mut sets = vec![BTreeSet::new(); gw * gh];
    for y in 0..map.height() {
        for x in 0..map.width() {
            sets[(y / patch) * gw + x / patch].insert(map.label(x, y) as usize);
        }
    }
    (gw, gh, sets)
}

// ---------------------------------------------------------------- attention

/// softmax(Q K^T / sqrt(d) + B) V evaluated entry by entry.
pub fn naive_attention(q: &Matrix, k: &Matrix, v: &Matrix, b: Option<&Matrix>) -> (Matrix, Matrix) {
    let (n, d) = q.shape();
    let mut weights = Matrix::zeros(n, n);
    let mut out = Matrix::zeros(n, d);
    for i in 0..n {
        let mut logits = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for c in 0..d {
                s += q.get(i, c) * k.get(j, c);
            }
            logits[j] = s / (d as f64).sqrt() + b.map_or(0.0, |b| b.get(i, j));
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        for j in 0..n {
            weights.set(i, j, (logits[j] - lse).exp());
        }
        for c in 0..d {
            let mut s = 0.0;
            for j in 0..n {
                s += weights.get(i, j) * v.get(j, c);
            }
            out.set(i, c, s);
        }
    }
    (weights, out)
}

// ---------------------------------------------------------------- metrics

/// mIoU from a full confusion matrix.
pub fn brute_miou(pred: &[u32], gt: &[u32], classes: usize, ignore: Option<u32>) -> Option<f64> {
    let mut conf = vec![vec![0u64; classes]; classes];
    for (&p, &g) in pred.iter().zip(gt) {
        if Some(g) == ignore {
            continue;
        }
        conf[g as usize][p as usize] += 1;
    }
    let mut ious = Vec::new();
    for c in 0..classes {
        let tp = conf[c][c];
        let row: u64 = conf[c].iter().sum();
        let col: u64 = (0..classes).map(|r| conf[r][c]).sum();
        let union = row + col - tp;
        if union > 0 {
            ious.push(tp as f64 / union as f64);
        }
    }
    if ious.is_empty() {
        None
    } else {
        Some(ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma).powi(2);
        vb += (rb[i] - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}
