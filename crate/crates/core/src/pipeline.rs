//! End-to-end orchestration: image to attention bias, and externally supplied
//! embeddings to a pixel label map.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bias::{self, BiasMatrix, NodeBias};
use crate::error::{Error, Result};
use crate::imaging::{image_error, to_gray_quantized, RgbImage};
use crate::patch_bridge::{self, Neighborhood, PatchEdgeStats, PatchGrid};
use crate::rag::{self, RagGraph};
use crate::simfusion::{self, EmbeddingSet, SimilarityMatrix};
use crate::superpixel::{self, SlicParams, SuperpixelMap};
use crate::texture::FeatureSubset;

/// Default hyperparameters.
pub mod defaults {
    pub const N_SEGMENTS: usize = 300;
    pub const COMPACTNESS: f64 = 10.0;
    pub const SLIC_ITERATIONS: usize = 10;
    pub const GLCM_LEVELS: usize = 32;
    pub const NEIGHBORHOOD: u8 = 8;
    pub const PATCH_SIZE: usize = 16;
    pub const SIGMA_SPATIAL: f64 = 5.0;
    pub const ALPHA: f64 = 0.6;
    pub const FUSION_KERNEL: usize = 3;
    pub const FUSION_SIGMA: f64 = 3.0;
    pub const SEED: u64 = 0;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_segments: usize,
    pub compactness: f64,
    pub slic_iterations: usize,
    pub glcm_levels: usize,
    pub feature_subset: FeatureSubset,
    pub neighborhood: Neighborhood,
    pub patch_size: usize,
    pub sigma_spatial: f64,
    pub alpha: f64,
    pub fusion_kernel: usize,
    pub fusion_sigma: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_segments: defaults::N_SEGMENTS,
            compactness: defaults::COMPACTNESS,
            slic_iterations: defaults::SLIC_ITERATIONS,
            glcm_levels: defaults::GLCM_LEVELS,
            feature_subset: FeatureSubset::ALL,
            neighborhood: Neighborhood::Eight,
            patch_size: defaults::PATCH_SIZE,
            sigma_spatial: defaults::SIGMA_SPATIAL,
            alpha: defaults::ALPHA,
            fusion_kernel: defaults::FUSION_KERNEL,
            fusion_sigma: defaults::FUSION_SIGMA,
            seed: defaults::SEED,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive, got {v}")))
            }
        };
        if self.n_segments == 0 {
            return Err(Error::param("n_segments must be at least 1"));
        }
        positive("compactness", self.compactness)?;
        if self.slic_iterations == 0 {
            return Err(Error::param("slic_iterations must be at least 1"));
        }
        if !(2..=65536).contains(&self.glcm_levels) {
            return Err(Error::param("glcm_levels must be in [2, 65536]"));
        }
        if self.patch_size == 0 {
            return Err(Error::param("patch_size must be at least 1"));
        }
        positive("sigma_spatial", self.sigma_spatial)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.fusion_kernel.is_multiple_of(2) {
            return Err(Error::param("fusion_kernel must be odd"));
        }
        positive("fusion_sigma", self.fusion_sigma)?;
        Ok(())
    }

    /// Parse and validate a JSON config; missing fields take defaults.
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn slic_params(&self) -> SlicParams {
        SlicParams {
            n_segments: self.n_segments,
            compactness: self.compactness,
            iterations: self.slic_iterations,
        }
    }

    /// Patch grid dimensions `(grid_w, grid_h)` for an image.
    pub fn grid_dims(&self, width: usize, height: usize) -> (usize, usize) {
        (
            width.div_ceil(self.patch_size),
            height.div_ceil(self.patch_size),
        )
    }
}

/// Every intermediate of the image-to-bias chain.
#[derive(Debug, Clone)]
pub struct StructurePrior {
    pub superpixels: SuperpixelMap,
    pub graph: RagGraph,
    pub grid: PatchGrid,
    pub edge_stats: PatchEdgeStats,
    pub node_bias: NodeBias,
    pub bias: BiasMatrix,
}

/// Superpixels, RAG and the resulting graph for an image.
pub fn build_image_rag(img: &RgbImage, cfg: &PipelineConfig) -> Result<(SuperpixelMap, RagGraph)> {
    cfg.validate()?;
    let map = superpixel::slic(img, &cfg.slic_params())?;
    let gray = to_gray_quantized(img, cfg.glcm_levels)?;
    let graph = rag::build_rag(&map, img, &gray, cfg.feature_subset)?;
    Ok((map, graph))
}

pub fn compute_structure_prior(img: &RgbImage, cfg: &PipelineConfig) -> Result<StructurePrior> {
    let (superpixels, graph) = build_image_rag(img, cfg)?;
    let grid = patch_bridge::assign_patches(&superpixels, cfg.patch_size)?;
    let edge_stats = patch_bridge::patch_pair_stats(&grid, &graph, cfg.neighborhood)?;
    let node_bias = bias::rag_bias(&edge_stats, &grid, cfg.neighborhood)?;
    let g = bias::spatial_gaussian(grid.grid_w(), grid.grid_h(), cfg.sigma_spatial)?;
    let bias = bias::bilateral_bias(&g, &node_bias, cfg.sigma_spatial)?;
    Ok(StructurePrior {
        superpixels,
        graph,
        grid,
        edge_stats,
        node_bias,
        bias,
    })
}

pub fn compute_bias_for_image(img: &RgbImage, cfg: &PipelineConfig) -> Result<BiasMatrix> {
    Ok(compute_structure_prior(img, cfg)?.bias)
}

/// Per-pixel class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::param("label buffer does not match dimensions"));
        }
        Ok(LabelMap {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// 8-bit grayscale PNG when every label fits, 16-bit otherwise.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let max = self.labels.iter().copied().max().unwrap_or(0);
        let (w, h) = (self.width as u32, self.height as u32);
        let result = if max <= u32::from(u8::MAX) {
            let raw = self.labels.iter().map(|&l| l as u8).collect();
            image::GrayImage::from_raw(w, h, raw)
                .expect("buffer length matches dimensions")
                .save_with_format(path, image::ImageFormat::Png)
        } else if max <= u32::from(u16::MAX) {
            let raw = self.labels.iter().map(|&l| l as u16).collect();
            image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(w, h, raw)
                .expect("buffer length matches dimensions")
                .save_with_format(path, image::ImageFormat::Png)
        } else {
            return Err(Error::param("labels exceed 16 bits"));
        };
        result.map_err(|e| image_error(path, e))
    }

    /// Read an 8- or 16-bit grayscale PNG of label ids.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| image_error(path, e))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let labels = match img {
            image::DynamicImage::ImageLuma8(buf) => {
                buf.into_raw().into_iter().map(u32::from).collect()
            }
            image::DynamicImage::ImageLuma16(buf) => {
                buf.into_raw().into_iter().map(u32::from).collect()
            }
            other => {
                return Err(Error::format(format!(
                    "{}: label maps must be single-channel, got {:?}",
                    path.display(),
                    other.color()
                )))
            }
        };
        LabelMap::new(w, h, labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub patch_labels: Vec<usize>,
    pub pixel_labels: LabelMap,
    pub raw_similarity: SimilarityMatrix,
    pub fused_similarity: SimilarityMatrix,
}

/// Nearest-neighbour expansion of patch labels to pixels.
pub fn upsample_labels(
    patch_labels: &[usize],
    grid_w: usize,
    width: usize,
    height: usize,
    patch_size: usize,
) -> Result<LabelMap> {
    let grid_h = height.div_ceil(patch_size);
    if patch_labels.len() != grid_w * grid_h || grid_w != width.div_ceil(patch_size) {
        return Err(Error::param("patch labels do not cover the image"));
    }
    let mut labels = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = (y / patch_size) * grid_w;
        labels.extend((0..width).map(|x| patch_labels[row + x / patch_size] as u32));
    }
    LabelMap::new(width, height, labels)
}

pub fn segment(
    img: &RgbImage,
    emb: &EmbeddingSet,
    cfg: &PipelineConfig,
) -> Result<SegmentationResult> {
    cfg.validate()?;
    let (gw, gh) = cfg.grid_dims(img.width(), img.height());
    if (emb.grid_w(), emb.grid_h()) != (gw, gh) {
        return Err(Error::param(format!(
            "embedding grid {}x{} does not match image grid {gw}x{gh}",
            emb.grid_w(),
            emb.grid_h()
        )));
    }
    let raw = simfusion::cosine_similarity(emb)?;
    let smoothed = simfusion::smooth_visual(emb, cfg.fusion_kernel, cfg.fusion_sigma)?;
    let smooth_sim = simfusion::cosine_similarity(&smoothed)?;
    let fused = simfusion::fuse(&raw, &smooth_sim, cfg.alpha)?;
    let patch_labels = simfusion::predict(&fused);
    let pixel_labels =
        upsample_labels(&patch_labels, gw, img.width(), img.height(), cfg.patch_size)?;
    Ok(SegmentationResult {
        patch_labels,
        pixel_labels,
        raw_similarity: raw,
        fused_similarity: fused,
    })
}

/// Per-class IoU (`None` for classes absent from both maps) and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouReport {
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
}

pub fn evaluate_miou(
    pred: &LabelMap,
    gt: &LabelMap,
    num_classes: usize,
    ignore_label: Option<u32>,
) -> Result<MiouReport> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::param(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    if num_classes == 0 {
        return Err(Error::param("num_classes must be positive"));
    }
    let mut inter = vec![0u64; num_classes];
    let mut pred_count = vec![0u64; num_classes];
    let mut gt_count = vec![0u64; num_classes];
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if ignore_label == Some(g) {
            continue;
        }
        if g as usize >= num_classes {
            return Err(Error::param(format!("ground-truth label {g} out of range")));
        }
        if p as usize >= num_classes {
            return Err(Error::param(format!("predicted label {p} out of range")));
        }
        gt_count[g as usize] += 1;
        pred_count[p as usize] += 1;
        if p == g {
            inter[p as usize] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|c| {
            let union = pred_count[c] + gt_count[c] - inter[c];
            (union > 0).then(|| inter[c] as f64 / union as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::param("no pixels left to evaluate"));
    }
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    Ok(MiouReport { per_class, miou })
}
