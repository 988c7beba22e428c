//! SLIC superpixels.
//!
//! Pixels are clustered in CIELAB + image-plane coordinates starting from a
//! regular seed grid; afterwards small disconnected fragments are merged so
//! that each label is one 4-connected region.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{image_error, RgbImage};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    region_count: usize,
}

/// JSON sidecar written next to the 16-bit label PNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperpixelSidecar {
    pub width: usize,
    pub height: usize,
    pub region_count: usize,
}

impl SuperpixelMap {
    /// Wrap a label buffer. Labels must cover `0..K` with no gaps.
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::param("label buffer does not match dimensions"));
        }
        let region_count = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut seen = vec![false; region_count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::param(format!("label {missing} has no pixels")));
        }
        Ok(SuperpixelMap {
            width,
            height,
            labels,
            region_count,
        })
    }

    /// Build from arbitrary ids, renumbering them to `0..K` in order of
    /// first appearance (raster order).
    pub fn from_arbitrary_labels(width: usize, height: usize, raw: &[u32]) -> Result<Self> {
        if width == 0 || height == 0 || raw.len() != width * height {
            return Err(Error::param("label buffer does not match dimensions"));
        }
        let mut remap = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = remap.len() as u32;
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        let region_count = remap.len();
        Ok(SuperpixelMap {
            width,
            height,
            labels,
            region_count,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn region_count(&self) -> usize {
        self.region_count
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.region_count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    pub fn sidecar(&self) -> SuperpixelSidecar {
        SuperpixelSidecar {
            width: self.width,
            height: self.height,
            region_count: self.region_count,
        }
    }

    /// Write label ids as a 16-bit grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.region_count > usize::from(u16::MAX) + 1 {
            return Err(Error::param("too many regions for a 16-bit label image"));
        }
        let raw: Vec<u16> = self.labels.iter().map(|&l| l as u16).collect();
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(
            self.width as u32,
            self.height as u32,
            raw,
        )
        .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| image_error(path, e))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| image_error(path, e))?
            .to_luma16();
        let labels = img.as_raw().iter().map(|&v| u32::from(v)).collect();
        SuperpixelMap::new(img.width() as usize, img.height() as usize, labels)
    }
}

/// SLIC parameters. `iterations` defaults to 10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub n_segments: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            n_segments: 300,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

pub fn slic(img: &RgbImage, params: &SlicParams) -> Result<SuperpixelMap> {
    let SlicParams {
        n_segments,
        compactness,
        iterations,
    } = *params;
    if n_segments == 0 {
        return Err(Error::param("n_segments must be at least 1"));
    }
    if !(compactness > 0.0) || !compactness.is_finite() {
        return Err(Error::param("compactness must be positive"));
    }
    if iterations == 0 {
        return Err(Error::param("iterations must be at least 1"));
    }
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    if n_segments > n {
        return Err(Error::param(format!(
            "n_segments {n_segments} exceeds pixel count {n}"
        )));
    }

    let lab: Vec<[f64; 3]> = img.pixels().map(srgb_to_lab).collect();
    let step = (n as f64 / n_segments as f64).sqrt();

    // seed grid
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    let sx = w as f64 / nx as f64;
    let sy = h as f64 / ny as f64;
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            // geometric cell centre; only moved if a neighbour is strictly smoother
            let fx = (i as f64 + 0.5) * sx - 0.5;
            let fy = (j as f64 + 0.5) * sy - 0.5;
            let ax = (fx.round() as usize).min(w - 1);
            let ay = (fy.round() as usize).min(h - 1);
            let (x, y) = lowest_gradient(&lab, w, h, ax, ay);
            let (cx, cy) = if (x, y) == (ax, ay) {
                (fx, fy)
            } else {
                (x as f64, y as f64)
            };
            centers.push(Center {
                lab: lab[y * w + x],
                x: cx,
                y: cy,
            });
        }
    }

    let mut labels: Vec<u32> = (0..n)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let i = ((x as f64 / sx) as usize).min(nx - 1);
            let j = ((y as f64 / sy) as usize).min(ny - 1);
            (j * nx + i) as u32
        })
        .collect();

    let spatial_weight = (compactness / step).powi(2);
    let cell = step.ceil().max(1.0);
    let (gx, gy) = (
        (w as f64 / cell).ceil() as usize,
        (h as f64 / cell).ceil() as usize,
    );

    for _ in 0..iterations {
        // bucket centers by cell so each pixel only inspects nearby seeds
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); gx * gy];
        for (k, c) in centers.iter().enumerate() {
            let bx = ((c.x / cell) as usize).min(gx - 1);
            let by = ((c.y / cell) as usize).min(gy - 1);
            buckets[by * gx + bx].push(k as u32);
        }

        let centers_ref = &centers;
        let buckets_ref = &buckets;
        par::for_each_row_mut(&mut labels, w, |y, row| {
            let by = ((y as f64 / cell) as usize).min(gy - 1);
            let mut cand: Vec<u32> = Vec::new();
            for (x, out) in row.iter_mut().enumerate() {
                let bx = ((x as f64 / cell) as usize).min(gx - 1);
                cand.clear();
                for cy in by.saturating_sub(1)..=(by + 1).min(gy - 1) {
                    for cx in bx.saturating_sub(1)..=(bx + 1).min(gx - 1) {
                        cand.extend_from_slice(&buckets_ref[cy * gx + cx]);
                    }
                }
                cand.sort_unstable();
                let p = lab[y * w + x];
                let mut best = f64::INFINITY;
                for &k in &cand {
                    let c = &centers_ref[k as usize];
                    let dx = x as f64 - c.x;
                    let dy = y as f64 - c.y;
                    if dx.abs() > step || dy.abs() > step {
                        continue;
                    }
                    let dlab = (p[0] - c.lab[0]).powi(2)
                        + (p[1] - c.lab[1]).powi(2)
                        + (p[2] - c.lab[2]).powi(2);
                    let d = dlab + (dx * dx + dy * dy) * spatial_weight;
                    if d < best {
                        best = d;
                        *out = k;
                    }
                }
            }
        });

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            let c = lab[p];
            s[0] += c[0];
            s[1] += c[1];
            s[2] += c[2];
            s[3] += (p % w) as f64;
            s[4] += (p / w) as f64;
            s[5] += 1.0;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                c.lab = [s[0] / s[5], s[1] / s[5], s[2] / s[5]];
                c.x = s[3] / s[5];
                c.y = s[4] / s[5];
            }
        }
    }

    let min_size = ((n as f64 / n_segments as f64 / 4.0) as usize).max(1);
    let labels = enforce_connectivity(&labels, w, h, min_size);
    SuperpixelMap::from_arbitrary_labels(w, h, &labels)
}

fn lowest_gradient(lab: &[[f64; 3]], w: usize, h: usize, x: usize, y: usize) -> (usize, usize) {
    let grad = |x: usize, y: usize| {
        let at = |x: usize, y: usize| lab[y * w + x];
        let (l, r) = (at(x.saturating_sub(1), y), at((x + 1).min(w - 1), y));
        let (u, d) = (at(x, y.saturating_sub(1)), at(x, (y + 1).min(h - 1)));
        (0..3)
            .map(|c| (r[c] - l[c]).powi(2) + (d[c] - u[c]).powi(2))
            .sum::<f64>()
    };
    let mut best = (x, y);
    let mut best_g = grad(x, y);
    for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
        for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
            let g = grad(nx, ny);
            if g < best_g {
                best_g = g;
                best = (nx, ny);
            }
        }
    }
    best
}

/// Label 4-connected components of equal value. Returns (component id per
/// pixel, component count); ids follow raster order of first pixel.
pub(crate) fn connected_components(labels: &[u32], w: usize, h: usize) -> (Vec<u32>, usize) {
    const UNSET: u32 = u32::MAX;
    let mut comp = vec![UNSET; labels.len()];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if comp[start] != UNSET {
            continue;
        }
        let value = labels[start];
        comp[start] = count;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == UNSET && labels[q] == value {
                    comp[q] = count;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        count += 1;
    }
    (comp, count as usize)
}

/// Merge every 4-connected component smaller than `min_size` into its largest
/// neighbouring component, repeating until none remain (or one component is
/// left).
fn enforce_connectivity(labels: &[u32], w: usize, h: usize, min_size: usize) -> Vec<u32> {
    let (mut current, _) = connected_components(labels, w, h);
    loop {
        let (comp, count) = connected_components(&current, w, h);
        let mut sizes = vec![0usize; count];
        for &c in &comp {
            sizes[c as usize] += 1;
        }
        if count <= 1 || sizes.iter().all(|&s| s >= min_size) {
            return comp;
        }

        let mut neighbours: Vec<Vec<u32>> = vec![Vec::new(); count];
        for y in 0..h {
            for x in 0..w {
                let a = comp[y * w + x];
                if x + 1 < w {
                    let b = comp[y * w + x + 1];
                    if a != b {
                        neighbours[a as usize].push(b);
                        neighbours[b as usize].push(a);
                    }
                }
                if y + 1 < h {
                    let b = comp[(y + 1) * w + x];
                    if a != b {
                        neighbours[a as usize].push(b);
                        neighbours[b as usize].push(a);
                    }
                }
            }
        }

        let mut parent: Vec<u32> = (0..count as u32).collect();
        fn find(parent: &mut [u32], mut a: u32) -> u32 {
            while parent[a as usize] != a {
                parent[a as usize] = parent[parent[a as usize] as usize];
                a = parent[a as usize];
            }
            a
        }
        let mut set_size = sizes.clone();

        let mut order: Vec<usize> = (0..count).filter(|&c| sizes[c] < min_size).collect();
        order.sort_by_key(|&c| (sizes[c], c));
        for c in order {
            let root = find(&mut parent, c as u32);
            if set_size[root as usize] >= min_size {
                continue;
            }
            let mut target: Option<u32> = None;
            for &nb in &neighbours[c] {
                let r = find(&mut parent, nb);
                if r == root {
                    continue;
                }
                target = match target {
                    None => Some(r),
                    Some(t) => {
                        let (st, sr) = (set_size[t as usize], set_size[r as usize]);
                        if sr > st || (sr == st && r < t) {
                            Some(r)
                        } else {
                            Some(t)
                        }
                    }
                };
            }
            if let Some(t) = target {
                parent[root as usize] = t;
                set_size[t as usize] += set_size[root as usize];
            }
        }
        current = comp.iter().map(|&c| find(&mut parent, c)).collect();
    }
}

/// sRGB (D65) to CIELAB.
pub fn srgb_to_lab(p: [f64; 3]) -> [f64; 3] {
    let lin = |c: f64| {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    let (r, g, b) = (lin(p[0]), lin(p[1]), lin(p[2]));
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    const DELTA: f64 = 6.0 / 29.0;
    let f = |t: f64| {
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}
