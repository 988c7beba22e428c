//! Region adjacency graph over superpixels, weighted by mean-colour and
//! GLCM texture differences.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, RgbImage};
use crate::superpixel::SuperpixelMap;
use crate::texture::{self, FeatureSubset, TextureFeatures, ISOTROPIC_OFFSETS};

#[derive(Debug, Clone, PartialEq)]
pub struct RegionProfile {
    pub region_id: usize,
    pub pixel_count: usize,
    pub mean_color: [f64; 3],
    pub glcm_features: TextureFeatures,
}

/// Per-image min/max of each texture statistic, used to bring the four
/// statistics onto a common `[0, 1]` scale before differencing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScaling {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

impl FeatureScaling {
    /// Scaling that leaves values untouched.
    pub const IDENTITY: FeatureScaling = FeatureScaling {
        min: [0.0; 4],
        max: [1.0; 4],
    };

    pub fn fit<'a>(features: impl IntoIterator<Item = &'a TextureFeatures>) -> Self {
        let mut min = [f64::INFINITY; 4];
        let mut max = [f64::NEG_INFINITY; 4];
        let mut any = false;
        for f in features {
            any = true;
            for (k, v) in f.to_array().into_iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        if !any {
            return FeatureScaling::IDENTITY;
        }
        FeatureScaling { min, max }
    }

    /// Constant features map to 0.
    pub fn apply(&self, f: &TextureFeatures) -> [f64; 4] {
        let raw = f.to_array();
        std::array::from_fn(|k| {
            let span = self.max[k] - self.min[k];
            if span > 0.0 {
                (raw[k] - self.min[k]) / span
            } else {
                0.0
            }
        })
    }
}

/// Colour L2 distance plus L1 difference of the selected, scaled texture
/// statistics.
pub fn region_distance(
    a: &RegionProfile,
    b: &RegionProfile,
    scaling: &FeatureScaling,
    subset: FeatureSubset,
) -> f64 {
    scaled_distance(
        &a.mean_color,
        &scaling.apply(&a.glcm_features),
        &b.mean_color,
        &scaling.apply(&b.glcm_features),
        subset,
    )
}

#[inline]
fn scaled_distance(
    ca: &[f64; 3],
    fa: &[f64; 4],
    cb: &[f64; 3],
    fb: &[f64; 4],
    subset: FeatureSubset,
) -> f64 {
    let color =
        ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2) + (ca[2] - cb[2]).powi(2)).sqrt();
    let texture: f64 = subset
        .mask()
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(k, _)| (fa[k] - fb[k]).abs())
        .sum();
    color + texture
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RagEdge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Clone)]
pub struct RagGraph {
    profiles: Vec<RegionProfile>,
    edges: Vec<RagEdge>,
    norm_max: f64,
    subset: FeatureSubset,
    scaling: FeatureScaling,
    scaled: Vec<[f64; 4]>,
}

impl RagGraph {
    pub fn profiles(&self) -> &[RegionProfile] {
        &self.profiles
    }

    pub fn region_count(&self) -> usize {
        self.profiles.len()
    }

    /// Edges with `i < j`, sorted, weights divided by [`Self::norm_max`].
    pub fn edges(&self) -> &[RagEdge] {
        &self.edges
    }

    pub fn norm_max(&self) -> f64 {
        self.norm_max
    }

    pub fn subset(&self) -> FeatureSubset {
        self.subset
    }

    pub fn scaling(&self) -> &FeatureScaling {
        &self.scaling
    }

    /// Unnormalized distance between any two regions of the image.
    pub fn raw_distance(&self, i: usize, j: usize) -> f64 {
        scaled_distance(
            &self.profiles[i].mean_color,
            &self.scaled[i],
            &self.profiles[j].mean_color,
            &self.scaled[j],
            self.subset,
        )
    }

    /// Distance divided by the graph's normalization constant and capped at 1.
    /// Only non-adjacent pairs can reach the cap, since `norm_max` is taken
    /// over edges.
    pub fn normalized_distance(&self, i: usize, j: usize) -> f64 {
        (self.raw_distance(i, j) / self.norm_max).min(1.0)
    }

    pub fn to_json(&self) -> RagJson {
        RagJson {
            region_count: self.profiles.len(),
            nodes: self
                .profiles
                .iter()
                .map(|p| RagNodeJson {
                    id: p.region_id,
                    pixels: p.pixel_count,
                    mean_color: p.mean_color,
                    glcm: p.glcm_features,
                })
                .collect(),
            edges: self.edges.clone(),
            norm_max: self.norm_max,
        }
    }
}

/// Serialized graph; field order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagJson {
    pub region_count: usize,
    pub nodes: Vec<RagNodeJson>,
    pub edges: Vec<RagEdge>,
    pub norm_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagNodeJson {
    pub id: usize,
    pub pixels: usize,
    pub mean_color: [f64; 3],
    pub glcm: TextureFeatures,
}

/// Unordered pairs of labels that meet across a horizontal or vertical pixel
/// boundary.
pub fn region_adjacency(map: &SuperpixelMap) -> BTreeSet<(usize, usize)> {
    let (w, h) = (map.width(), map.height());
    let labels = map.labels();
    let mut edges = BTreeSet::new();
    let mut add = |a: u32, b: u32| {
        if a != b {
            let (a, b) = (a.min(b) as usize, a.max(b) as usize);
            edges.insert((a, b));
        }
    };
    for y in 0..h {
        for x in 0..w {
            let a = labels[y * w + x];
            if x + 1 < w {
                add(a, labels[y * w + x + 1]);
            }
            if y + 1 < h {
                add(a, labels[(y + 1) * w + x]);
            }
        }
    }
    edges
}

pub fn build_rag(
    map: &SuperpixelMap,
    img: &RgbImage,
    gray: &GrayImage,
    subset: FeatureSubset,
) -> Result<RagGraph> {
    let dims = (map.width(), map.height());
    if dims != (img.width(), img.height()) || dims != (gray.width(), gray.height()) {
        return Err(Error::param(format!(
            "dimension mismatch: labels {}x{}, image {}x{}, gray {}x{}",
            dims.0,
            dims.1,
            img.width(),
            img.height(),
            gray.width(),
            gray.height()
        )));
    }
    let k = map.region_count();
    // accumulate offsets from each region's first pixel so flat regions average exactly
    let mut origin: Vec<Option<[f64; 3]>> = vec![None; k];
    let mut sums = vec![[0.0f64; 3]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in map.labels().iter().enumerate() {
        let c = img.pixel_at(p);
        let o = *origin[l as usize].get_or_insert(c);
        let s = &mut sums[l as usize];
        s[0] += c[0] - o[0];
        s[1] += c[1] - o[1];
        s[2] += c[2] - o[2];
        counts[l as usize] += 1;
    }
    let glcms = texture::glcm_per_region(gray, map.labels(), k, &ISOTROPIC_OFFSETS)?;
    let profiles: Vec<RegionProfile> = (0..k)
        .map(|r| {
            let n = counts[r] as f64;
            RegionProfile {
                region_id: r,
                pixel_count: counts[r],
                mean_color: {
                    let o = origin[r].unwrap_or_default();
                    [
                        (o[0] + sums[r][0] / n).clamp(0.0, 1.0),
                        (o[1] + sums[r][1] / n).clamp(0.0, 1.0),
                        (o[2] + sums[r][2] / n).clamp(0.0, 1.0),
                    ]
                },
                glcm_features: texture::texture_features(&glcms[r]),
            }
        })
        .collect();

    RagGraph::from_profiles(profiles, region_adjacency(map), subset)
}

impl RagGraph {
    /// Assemble a graph from per-region profiles and an adjacency list.
    /// Profiles must be indexed by `region_id`; pairs may come in any order.
    pub fn from_profiles(
        profiles: Vec<RegionProfile>,
        adjacency: impl IntoIterator<Item = (usize, usize)>,
        subset: FeatureSubset,
    ) -> Result<RagGraph> {
        if let Some((r, p)) = profiles.iter().enumerate().find(|(r, p)| p.region_id != *r) {
            return Err(Error::param(format!(
                "profile at index {r} has region id {}",
                p.region_id
            )));
        }
        let k = profiles.len();
        let mut pairs = BTreeSet::new();
        for (i, j) in adjacency {
            if i == j || i >= k || j >= k {
                return Err(Error::param(format!("invalid edge ({i}, {j})")));
            }
            pairs.insert((i.min(j), i.max(j)));
        }

        let scaling = FeatureScaling::fit(profiles.iter().map(|p| &p.glcm_features));
        let scaled = profiles
            .iter()
            .map(|p| scaling.apply(&p.glcm_features))
            .collect();
        let mut graph = RagGraph {
            profiles,
            edges: Vec::new(),
            norm_max: 1.0,
            subset,
            scaling,
            scaled,
        };

        let raw: Vec<RagEdge> = pairs
            .into_iter()
            .map(|(i, j)| RagEdge {
                i,
                j,
                w: graph.raw_distance(i, j),
            })
            .collect();
        let max = raw.iter().map(|e| e.w).fold(0.0, f64::max);
        let norm_max = if max > 0.0 { max } else { 1.0 };
        graph.edges = raw
            .into_iter()
            .map(|e| RagEdge {
                w: e.w / norm_max,
                ..e
            })
            .collect();
        graph.norm_max = norm_max;
        Ok(graph)
    }
}
