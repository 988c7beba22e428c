//! Grey-level co-occurrence matrices and the four scalar statistics drawn
//! from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::par;

/// Pixel displacement `(dx, dy)` between the two members of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Offset {
    pub dx: isize,
    pub dy: isize,
}

impl Offset {
    pub const HORIZONTAL: Offset = Offset { dx: 1, dy: 0 };
    pub const VERTICAL: Offset = Offset { dx: 0, dy: 1 };
    pub const DIAGONAL: Offset = Offset { dx: 1, dy: 1 };
    pub const ANTI_DIAGONAL: Offset = Offset { dx: -1, dy: 1 };
}

/// Distance-1 offsets at 0°, 90°, 45° and 135°.
pub const ISOTROPIC_OFFSETS: [Offset; 4] = [
    Offset::HORIZONTAL,
    Offset::VERTICAL,
    Offset::DIAGONAL,
    Offset::ANTI_DIAGONAL,
];

/// Symmetric, normalized co-occurrence matrix over `levels` grey bins.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    levels: usize,
    probs: Vec<f64>,
}

impl GlcmMatrix {
    #[inline]
    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.probs[m * self.levels + n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Validate an externally supplied probability table.
    pub fn from_probs(levels: usize, probs: Vec<f64>) -> Result<Self> {
        if levels == 0 || probs.len() != levels * levels {
            return Err(Error::param("GLCM table must be levels x levels"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::param("GLCM entries must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("GLCM entries sum to {sum}, not 1")));
        }
        Ok(GlcmMatrix { levels, probs })
    }

    fn from_counts(levels: usize, counts: &[u64], fallback_bin: usize) -> Self {
        let total: u64 = counts.iter().sum();
        let mut probs = vec![0.0; levels * levels];
        if total == 0 {
            probs[fallback_bin * levels + fallback_bin] = 1.0;
        } else {
            let t = total as f64;
            for (p, &c) in probs.iter_mut().zip(counts) {
                *p = c as f64 / t;
            }
        }
        GlcmMatrix { levels, probs }
    }
}

fn most_frequent_bin(bins: impl Iterator<Item = u16>, levels: usize) -> usize {
    let mut hist = vec![0usize; levels];
    for b in bins {
        hist[usize::from(b)] += 1;
    }
    // first maximum wins
    let mut best = 0;
    for (b, &c) in hist.iter().enumerate() {
        if c > hist[best] {
            best = b;
        }
    }
    best
}

/// Co-occurrence matrix of the pixels selected by `mask` (row-major, one flag
/// per pixel). Only pairs with both ends inside the mask are counted; each
/// pair is counted in both orders. A mask with no valid pair yields all mass
/// on the diagonal cell of its most frequent bin.
pub fn glcm(gray: &GrayImage, mask: &[bool], offsets: &[Offset]) -> Result<GlcmMatrix> {
    let (w, h) = (gray.width(), gray.height());
    if mask.len() != w * h {
        return Err(Error::param("mask size does not match image"));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::param("empty region mask"));
    }
    let levels = gray.levels();
    let bins = gray.as_slice();
    let mut counts = vec![0u64; levels * levels];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if !mask[p] {
                continue;
            }
            for off in offsets {
                let (nx, ny) = (x as isize + off.dx, y as isize + off.dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if mask[q] {
                    let (a, b) = (usize::from(bins[p]), usize::from(bins[q]));
                    counts[a * levels + b] += 1;
                    counts[b * levels + a] += 1;
                }
            }
        }
    }
    let fallback = most_frequent_bin(
        bins.iter().zip(mask).filter(|(_, &m)| m).map(|(&b, _)| b),
        levels,
    );
    Ok(GlcmMatrix::from_counts(levels, &counts, fallback))
}

/// One co-occurrence matrix per label in a single image scan. `labels` holds
/// one id in `0..region_count` per pixel; every id must be present.
pub fn glcm_per_region(
    gray: &GrayImage,
    labels: &[u32],
    region_count: usize,
    offsets: &[Offset],
) -> Result<Vec<GlcmMatrix>> {
    let (w, h) = (gray.width(), gray.height());
    if labels.len() != w * h {
        return Err(Error::param("label map size does not match image"));
    }
    let levels = gray.levels();
    let cells = levels * levels;
    let bins = gray.as_slice();

    let mut counts = vec![0u64; region_count * cells];
    let mut hist = vec![0usize; region_count * levels];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let r = labels[p] as usize;
            if r >= region_count {
                return Err(Error::param(format!("label {r} out of range")));
            }
            hist[r * levels + usize::from(bins[p])] += 1;
            for off in offsets {
                let (nx, ny) = (x as isize + off.dx, y as isize + off.dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if labels[q] as usize == r {
                    let (a, b) = (usize::from(bins[p]), usize::from(bins[q]));
                    let base = r * cells;
                    counts[base + a * levels + b] += 1;
                    counts[base + b * levels + a] += 1;
                }
            }
        }
    }

    let regions: Vec<usize> = (0..region_count).collect();
    let out = par::map_slice(&regions, |&r| {
        let hist = &hist[r * levels..(r + 1) * levels];
        if hist.iter().all(|&c| c == 0) {
            return None;
        }
        let mut fallback = 0;
        for (b, &c) in hist.iter().enumerate() {
            if c > hist[fallback] {
                fallback = b;
            }
        }
        Some(GlcmMatrix::from_counts(
            levels,
            &counts[r * cells..(r + 1) * cells],
            fallback,
        ))
    });
    out.into_iter()
        .enumerate()
        .map(|(r, m)| m.ok_or_else(|| Error::param(format!("region {r} has no pixels"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureFeatures {
    pub contrast: f64,
    pub homogeneity: f64,
    pub energy: f64,
    pub correlation: f64,
}

impl TextureFeatures {
    /// `[contrast, homogeneity, energy, correlation]`
    pub fn to_array(&self) -> [f64; 4] {
        [
            self.contrast,
            self.homogeneity,
            self.energy,
            self.correlation,
        ]
    }
}

/// Below this product of marginal deviations the texture is treated as
/// constant and its correlation defined as 1.
const DEGENERATE_SPREAD: f64 = 1e-12;

pub fn texture_features(p: &GlcmMatrix) -> TextureFeatures {
    let l = p.levels;
    let mut row_marginal = vec![0.0; l];
    let mut col_marginal = vec![0.0; l];
    let mut contrast = 0.0;
    let mut homogeneity = 0.0;
    let mut energy = 0.0;
    for m in 0..l {
        for n in 0..l {
            let v = p.probs[m * l + n];
            if v == 0.0 {
                continue;
            }
            let d = m as f64 - n as f64;
            contrast += d * d * v;
            homogeneity += v / (1.0 + d.abs());
            energy += v * v;
            row_marginal[m] += v;
            col_marginal[n] += v;
        }
    }
    let moments = |marg: &[f64]| {
        let mu: f64 = marg.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
        let var: f64 = marg
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64 - mu).powi(2) * v)
            .sum();
        (mu, var.max(0.0).sqrt())
    };
    let (mu_m, sd_m) = moments(&row_marginal);
    let (mu_n, sd_n) = moments(&col_marginal);
    let correlation = if sd_m * sd_n <= DEGENERATE_SPREAD {
        1.0
    } else {
        let mut cov = 0.0;
        for m in 0..l {
            for n in 0..l {
                let v = p.probs[m * l + n];
                if v != 0.0 {
                    cov += (m as f64 - mu_m) * (n as f64 - mu_n) * v;
                }
            }
        }
        (cov / (sd_m * sd_n)).clamp(-1.0, 1.0)
    };
    TextureFeatures {
        contrast,
        homogeneity,
        energy,
        correlation,
    }
}

/// Which texture statistics enter the region distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSubset {
    pub contrast: bool,
    pub homogeneity: bool,
    pub energy: bool,
    pub correlation: bool,
}

impl FeatureSubset {
    pub const ALL: FeatureSubset = FeatureSubset {
        contrast: true,
        homogeneity: true,
        energy: true,
        correlation: true,
    };

    /// Contrast and homogeneity only.
    pub const F2_F4: FeatureSubset = FeatureSubset {
        contrast: true,
        homogeneity: true,
        energy: false,
        correlation: false,
    };

    /// No texture term; distances reduce to mean-colour differences.
    pub const COLOR_ONLY: FeatureSubset = FeatureSubset {
        contrast: false,
        homogeneity: false,
        energy: false,
        correlation: false,
    };

    /// Selection mask aligned with [`TextureFeatures::to_array`].
    pub fn mask(&self) -> [bool; 4] {
        [
            self.contrast,
            self.homogeneity,
            self.energy,
            self.correlation,
        ]
    }
}

impl Default for FeatureSubset {
    fn default() -> Self {
        FeatureSubset::ALL
    }
}

impl FromStr for FeatureSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureSubset::ALL),
            "f2f4" => Ok(FeatureSubset::F2_F4),
            "color" => Ok(FeatureSubset::COLOR_ONLY),
            other => Err(Error::param(format!(
                "unknown feature subset '{other}' (expected all, f2f4 or color)"
            ))),
        }
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            FeatureSubset::ALL => f.write_str("all"),
            FeatureSubset::F2_F4 => f.write_str("f2f4"),
            FeatureSubset::COLOR_ONLY => f.write_str("color"),
            s => {
                let names = ["contrast", "homogeneity", "energy", "correlation"];
                let picked: Vec<&str> = names
                    .iter()
                    .zip(s.mask())
                    .filter(|(_, on)| *on)
                    .map(|(n, _)| *n)
                    .collect();
                f.write_str(&picked.join("+"))
            }
        }
    }
}

impl TryFrom<String> for FeatureSubset {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSubset> for String {
    fn from(s: FeatureSubset) -> String {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, levels: usize, data: &[u16]) -> GrayImage {
        GrayImage::new(w, h, levels, data.to_vec()).unwrap()
    }

    #[test]
    fn constant_region_concentrates_on_diagonal() {
        let g = gray(3, 2, 8, &[3; 6]);
        let p = glcm(&g, &[true; 6], &ISOTROPIC_OFFSETS).unwrap();
        assert_eq!(p.get(3, 3), 1.0);
        assert_eq!(p.as_slice().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn two_by_two_horizontal_pairs() {
        let g = gray(2, 2, 2, &[0, 1, 0, 1]);
        let p = glcm(&g, &[true; 4], &[Offset::HORIZONTAL]).unwrap();
        assert_eq!(p.get(0, 1), 0.5);
        assert_eq!(p.get(1, 0), 0.5);
        assert_eq!(p.get(0, 0), 0.0);
        assert_eq!(p.get(1, 1), 0.0);
    }

    #[test]
    fn singleton_region_falls_back() {
        let g = gray(2, 2, 4, &[0, 2, 2, 2]);
        let p = glcm(&g, &[true, false, false, false], &ISOTROPIC_OFFSETS).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let g = gray(2, 1, 2, &[0, 1]);
        assert!(matches!(
            glcm(&g, &[false, false], &ISOTROPIC_OFFSETS),
            Err(Error::Param(_))
        ));
        assert!(glcm(&g, &[true], &ISOTROPIC_OFFSETS).is_err());
    }

    #[test]
    fn features_of_constant_texture() {
        let mut probs = vec![0.0; 64];
        probs[3 * 8 + 3] = 1.0;
        let f = texture_features(&GlcmMatrix::from_probs(8, probs).unwrap());
        assert_eq!(
            f,
            TextureFeatures {
                contrast: 0.0,
                homogeneity: 1.0,
                energy: 1.0,
                correlation: 1.0
            }
        );
    }

    #[test]
    fn features_of_alternating_texture() {
        let p = GlcmMatrix::from_probs(2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let f = texture_features(&p);
        assert_eq!(f.contrast, 1.0);
        assert_eq!(f.homogeneity, 0.5);
        assert_eq!(f.energy, 0.5);
        assert_eq!(f.correlation, -1.0);
    }

    #[test]
    fn features_of_uniform_table() {
        let p = GlcmMatrix::from_probs(2, vec![0.25; 4]).unwrap();
        let f = texture_features(&p);
        assert_eq!(f.contrast, 0.5);
        assert_eq!(f.homogeneity, 0.75);
        assert_eq!(f.energy, 0.25);
        assert_eq!(f.correlation, 0.0);
    }

    #[test]
    fn from_probs_validates() {
        assert!(GlcmMatrix::from_probs(2, vec![0.5, 0.5, 0.5, 0.5]).is_err());
        assert!(GlcmMatrix::from_probs(2, vec![1.0, 0.0, 0.0]).is_err());
        assert!(GlcmMatrix::from_probs(2, vec![1.5, -0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn per_region_matches_masked() {
        let data: Vec<u16> = (0..48).map(|i| ((i * 7) % 5) as u16).collect();
        let g = gray(8, 6, 5, &data);
        let labels: Vec<u32> = (0..48)
            .map(|i| ((i % 8) / 3 + 3 * ((i / 8) / 4)) as u32)
            .collect();
        let k = *labels.iter().max().unwrap() as usize + 1;
        let all = glcm_per_region(&g, &labels, k, &ISOTROPIC_OFFSETS).unwrap();
        for (r, m) in all.iter().enumerate() {
            let mask: Vec<bool> = labels.iter().map(|&l| l as usize == r).collect();
            assert_eq!(m, &glcm(&g, &mask, &ISOTROPIC_OFFSETS).unwrap());
        }
        assert!(glcm_per_region(&g, &labels, k + 1, &ISOTROPIC_OFFSETS).is_err());
    }

    #[test]
    fn subset_names() {
        assert_eq!("all".parse::<FeatureSubset>().unwrap(), FeatureSubset::ALL);
        assert_eq!(
            "f2f4".parse::<FeatureSubset>().unwrap(),
            FeatureSubset::F2_F4
        );
        assert!("rgb".parse::<FeatureSubset>().is_err());
        assert_eq!(FeatureSubset::F2_F4.to_string(), "f2f4");
        let custom = FeatureSubset {
            energy: true,
            ..FeatureSubset::COLOR_ONLY
        };
        assert_eq!(custom.to_string(), "energy");
    }
}
