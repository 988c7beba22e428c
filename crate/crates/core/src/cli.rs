//! `ragseg` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bias::NodeBias;
use crate::error::{Error, Result};
use crate::imaging::{self, image_error, Corruption};
use crate::matrix::Matrix;
use crate::patch_bridge::{Neighborhood, PatchGrid};
use crate::pipeline::{self, defaults, LabelMap, PipelineConfig};
use crate::simfusion::EmbeddingSet;
use crate::tensorio::{self, Tensor};
use crate::texture::FeatureSubset;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ragseg",
    version,
    about = "Structure-aware attention bias and similarity fusion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the superpixel region adjacency graph of an image.
    Rag(RagArgs),
    /// Compute the attention bias matrix over the patch grid.
    Bias(BiasArgs),
    /// Label an image from exported patch and text embeddings.
    Segment(SegmentArgs),
    /// Score a predicted label map against ground truth.
    Eval(EvalArgs),
    /// Apply an appearance corruption to an image.
    Corrupt(CorruptArgs),
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Target number of superpixels.
    #[arg(long, default_value_t = defaults::N_SEGMENTS)]
    pub segments: usize,
    /// SLIC compactness.
    #[arg(long, default_value_t = defaults::COMPACTNESS)]
    pub compactness: f64,
    /// Grey levels used for co-occurrence statistics.
    #[arg(long, default_value_t = defaults::GLCM_LEVELS)]
    pub levels: usize,
    /// Texture features entering edge weights: all, f2f4 or color.
    #[arg(long, default_value_t = FeatureSubset::ALL)]
    pub features: FeatureSubset,
}

#[derive(Debug, Args)]
pub struct RagArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Patch size in pixels.
    #[arg(long, default_value_t = defaults::PATCH_SIZE)]
    pub patch: usize,
    /// Patch neighbourhood, 4 or 8.
    #[arg(long, default_value_t = Neighborhood::Eight)]
    pub neigh: Neighborhood,
    #[arg(long = "sigma-spatial", default_value_t = defaults::SIGMA_SPATIAL)]
    pub sigma_spatial: f64,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a per-patch heatmap of exp(b).
    #[arg(long = "bias-vis")]
    pub bias_vis: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Patch embeddings, shape [N, D] or [grid_h, grid_w, D].
    #[arg(long)]
    pub vis: PathBuf,
    /// Text embeddings, shape [M, D].
    #[arg(long)]
    pub txt: PathBuf,
    /// JSON array of M class names.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = defaults::ALPHA)]
    pub alpha: f64,
    /// Odd size of the smoothing kernel.
    #[arg(long, default_value_t = defaults::FUSION_KERNEL)]
    pub kernel: usize,
    #[arg(long, default_value_t = defaults::FUSION_SIGMA)]
    pub sigma: f64,
    /// Patch size in pixels.
    #[arg(long, default_value_t = defaults::PATCH_SIZE)]
    pub patch: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON legend with per-class pixel counts.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Number of classes.
    #[arg(long)]
    pub classes: usize,
    /// Ground-truth label excluded from scoring.
    #[arg(long)]
    pub ignore: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorruptMode {
    Jitter,
    Over,
    Under,
    Blur,
    Gray,
}

impl CorruptMode {
    pub fn corruption(self, seed: u64) -> Corruption {
        match self {
            CorruptMode::Jitter => Corruption::standard_jitter(seed),
            CorruptMode::Over => Corruption::overexposure(),
            CorruptMode::Under => Corruption::underexposure(),
            CorruptMode::Blur => Corruption::texture_destruction(),
            CorruptMode::Gray => Corruption::Grayscale,
        }
    }
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_enum)]
    pub mode: CorruptMode,
    /// Seed for the random jitter factors.
    #[arg(long, default_value_t = defaults::SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `argv` (program name first), run the command, return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("ragseg: {e}");
            EXIT_RUNTIME
        }
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Rag(a) => cmd_rag(a),
        Command::Bias(a) => cmd_bias(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Corrupt(a) => cmd_corrupt(a),
    }
}

fn graph_config(g: &GraphArgs) -> PipelineConfig {
    PipelineConfig {
        n_segments: g.segments,
        compactness: g.compactness,
        glcm_levels: g.levels,
        feature_subset: g.features,
        ..PipelineConfig::default()
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_rag(a: &RagArgs) -> Result<()> {
    let img = imaging::load_image(&a.image)?;
    let (_, graph) = pipeline::build_image_rag(&img, &graph_config(&a.graph))?;
    write_json(&a.out, &graph.to_json())
}

fn cmd_bias(a: &BiasArgs) -> Result<()> {
    let cfg = PipelineConfig {
        patch_size: a.patch,
        neighborhood: a.neigh,
        sigma_spatial: a.sigma_spatial,
        ..graph_config(&a.graph)
    };
    let img = imaging::load_image(&a.image)?;
    let prior = pipeline::compute_structure_prior(&img, &cfg)?;
    let t = prior.bias.matrix.to_tensor();
    tensorio::write_tensor(&a.out, &t.shape, &t.values)?;
    if let Some(path) = &a.bias_vis {
        save_bias_heatmap(path, &prior.grid, &prior.node_bias)?;
    }
    Ok(())
}

/// One grey pixel per patch, exp(b) min-max scaled to 0..=255.
fn save_bias_heatmap(path: &Path, grid: &PatchGrid, b: &NodeBias) -> Result<()> {
    let e: Vec<f64> = b.values.iter().map(|v| v.exp()).collect();
    let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let raw = e
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    image::GrayImage::from_raw(grid.grid_w() as u32, grid.grid_h() as u32, raw)
        .expect("one value per patch")
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

fn tensor_matrix(path: &Path, grid: Option<(usize, usize)>) -> Result<Matrix> {
    let t = tensorio::read_tensor(path)?;
    match t.shape.as_slice() {
        [_, _] => Matrix::from_tensor(&t),
        [h, w, d] if grid.is_some() => {
            if grid != Some((*w, *h)) {
                return Err(Error::param(format!(
                    "{}: grid {w}x{h} does not match the image patch grid",
                    path.display()
                )));
            }
            Matrix::from_tensor(&Tensor::new(vec![h * w, *d], t.values)?)
        }
        s => Err(Error::format(format!(
            "{}: unexpected tensor shape {s:?}",
            path.display()
        ))),
    }
}

#[derive(Serialize)]
struct LegendEntry<'a> {
    id: usize,
    name: &'a str,
    pixels: usize,
}

#[derive(Serialize)]
struct SegmentReport<'a> {
    grid: [usize; 2],
    patch_size: usize,
    alpha: f64,
    kernel: usize,
    sigma: f64,
    classes: Vec<LegendEntry<'a>>,
}

fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    let cfg = PipelineConfig {
        alpha: a.alpha,
        fusion_kernel: a.kernel,
        fusion_sigma: a.sigma,
        patch_size: a.patch,
        ..PipelineConfig::default()
    };
    cfg.validate()?;
    let img = imaging::load_image(&a.image)?;
    let (gw, gh) = cfg.grid_dims(img.width(), img.height());
    let visual = tensor_matrix(&a.vis, Some((gw, gh)))?;
    let text = tensor_matrix(&a.txt, None)?;
    let names_text = std::fs::read_to_string(&a.labels).map_err(|e| Error::io(&a.labels, e))?;
    let names: Vec<String> = serde_json::from_str(&names_text)?;
    let emb = EmbeddingSet::new(visual, text, gw, gh, names)?;
    let res = pipeline::segment(&img, &emb, &cfg)?;
    res.pixel_labels.save_png(&a.out)?;
    if let Some(path) = &a.report {
        let mut counts = vec![0usize; emb.num_classes()];
        for &l in res.pixel_labels.labels() {
            counts[l as usize] += 1;
        }
        let report = SegmentReport {
            grid: [gh, gw],
            patch_size: cfg.patch_size,
            alpha: cfg.alpha,
            kernel: cfg.fusion_kernel,
            sigma: cfg.fusion_sigma,
            classes: emb
                .class_names()
                .iter()
                .zip(&counts)
                .enumerate()
                .map(|(id, (name, &pixels))| LegendEntry { id, name, pixels })
                .collect(),
        };
        write_json(path, &report)?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let pred = LabelMap::load_png(&a.pred)?;
    let gt = LabelMap::load_png(&a.gt)?;
    let report = pipeline::evaluate_miou(&pred, &gt, a.classes, a.ignore)?;
    write_json(&a.out, &report)
}

fn cmd_corrupt(a: &CorruptArgs) -> Result<()> {
    let img = imaging::load_image(&a.image)?;
    imaging::corrupt(&img, &a.mode.corruption(a.seed))?.save_png(&a.out)
}
