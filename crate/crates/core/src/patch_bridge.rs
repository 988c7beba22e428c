//! Projection of superpixel structure onto the transformer patch grid.
//!
//! Each patch records the superpixels it touches. For every pair of
//! neighbouring patches the distances between all cross pairs of their
//! superpixels are summarized by mean and population standard deviation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rag::RagGraph;
use crate::superpixel::SuperpixelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Neighborhood {
    Four,
    #[default]
    Eight,
}

impl Neighborhood {
    const FOUR: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    const EIGHT: [(isize, isize); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (-1, -1),
        (1, -1),
        (-1, 1),
    ];

    /// All `(dx, dy)` neighbour displacements.
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Neighborhood::Four => &Self::FOUR,
            Neighborhood::Eight => &Self::EIGHT,
        }
    }

    pub fn count(self) -> u8 {
        match self {
            Neighborhood::Four => 4,
            Neighborhood::Eight => 8,
        }
    }
}

impl TryFrom<u8> for Neighborhood {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Neighborhood::Four),
            8 => Ok(Neighborhood::Eight),
            other => Err(Error::param(format!(
                "neighbourhood must be 4 or 8, got {other}"
            ))),
        }
    }
}

impl From<Neighborhood> for u8 {
    fn from(n: Neighborhood) -> u8 {
        n.count()
    }
}

impl std::str::FromStr for Neighborhood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: u8 = s
            .parse()
            .map_err(|_| Error::param(format!("neighbourhood must be 4 or 8, got '{s}'")))?;
        Neighborhood::try_from(n)
    }
}

impl fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.count())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    grid_w: usize,
    grid_h: usize,
    memberships: Vec<Vec<u32>>,
}

impl PatchGrid {
    #[inline]
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    #[inline]
    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    #[inline]
    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sorted region ids touching patch `i` (row-major patch index).
    pub fn membership(&self, i: usize) -> &[u32] {
        &self.memberships[i]
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.grid_w, i / self.grid_w)
    }

    /// Patches adjacent to `i` under `nb`, clipped at the grid border.
    pub fn neighbors(&self, i: usize, nb: Neighborhood) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = self.coords(i);
        nb.offsets().iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= self.grid_w as isize || ny >= self.grid_h as isize {
                None
            } else {
                Some(ny as usize * self.grid_w + nx as usize)
            }
        })
    }

    /// Unordered neighbouring pairs `(i, j)` with `i < j`, sorted.
    pub fn adjacent_pairs(&self, nb: Neighborhood) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = (0..self.len())
            .flat_map(|i| {
                self.neighbors(i, nb)
                    .filter(move |&j| j > i)
                    .map(move |j| (i, j))
            })
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Partition the label map into `patch_size` squares (smaller at the right and
/// bottom border) and record which regions touch each square.
pub fn assign_patches(map: &SuperpixelMap, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::param("patch size must be at least 1"));
    }
    let (w, h) = (map.width(), map.height());
    let grid_w = w.div_ceil(patch_size);
    let grid_h = h.div_ceil(patch_size);
    let mut memberships: Vec<Vec<u32>> = vec![Vec::new(); grid_w * grid_h];
    for y in 0..h {
        let py = y / patch_size;
        for x in 0..w {
            memberships[py * grid_w + x / patch_size].push(map.label(x, y));
        }
    }
    for m in &mut memberships {
        m.sort_unstable();
        m.dedup();
    }
    Ok(PatchGrid {
        patch_size,
        grid_w,
        grid_h,
        memberships,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeStat {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchEdgeStats {
    neighborhood: Neighborhood,
    stats: BTreeMap<(usize, usize), EdgeStat>,
}

impl PatchEdgeStats {
    pub fn neighborhood(&self) -> Neighborhood {
        self.neighborhood
    }

    /// Statistics for a neighbouring pair, in either order.
    pub fn get(&self, i: usize, j: usize) -> Option<EdgeStat> {
        self.stats.get(&(i.min(j), i.max(j))).copied()
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), EdgeStat)> + '_ {
        self.stats.iter().map(|(&k, &v)| (k, v))
    }

    /// Debug dump: `[{"i","j","mu","sigma"}]` in pair order.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.iter()
                .map(
                    |((i, j), s)| serde_json::json!({"i": i, "j": j, "mu": s.mu, "sigma": s.sigma}),
                )
                .collect(),
        )
    }
}

/// Mean and population standard deviation (two-pass).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

pub fn patch_pair_stats(
    grid: &PatchGrid,
    graph: &RagGraph,
    neighborhood: Neighborhood,
) -> Result<PatchEdgeStats> {
    let k = graph.region_count();
    if let Some(bad) = grid
        .memberships
        .iter()
        .flatten()
        .find(|&&r| r as usize >= k)
    {
        return Err(Error::param(format!(
            "patch grid references region {bad}, graph has {k}"
        )));
    }
    let pairs = grid.adjacent_pairs(neighborhood);
    let values = par::map_slice(&pairs, |&(i, j)| {
        let (mi, mj) = (grid.membership(i), grid.membership(j));
        let mut d = Vec::with_capacity(mi.len() * mj.len());
        for &p in mi {
            for &q in mj {
                d.push(graph.normalized_distance(p as usize, q as usize));
            }
        }
        let (mu, sigma) = mean_std(&d);
        EdgeStat { mu, sigma }
    });
    Ok(PatchEdgeStats {
        neighborhood,
        stats: pairs.into_iter().zip(values).collect(),
    })
}
