//! Superpixel region adjacency graphs turned into a structure-aware attention
//! bias, plus similarity fusion for patch/text embeddings.
//!
//! The default `parallel` feature runs the data-parallel kernels on rayon.
//! Without it every kernel runs sequentially with identical results.

pub mod bias;
pub mod cli;
pub mod error;
pub mod filter;
pub mod imaging;
pub mod matrix;
mod par;
pub mod patch_bridge;
pub mod pipeline;
pub mod rag;
pub mod simfusion;
pub mod superpixel;
pub mod tensorio;
pub mod texture;

pub use bias::{AttentionInputs, BiasMatrix, NodeBias};
pub use error::{Error, Result};
pub use imaging::{Corruption, GrayImage, RgbImage};
pub use matrix::Matrix;
pub use patch_bridge::{Neighborhood, PatchEdgeStats, PatchGrid};
pub use pipeline::{LabelMap, MiouReport, PipelineConfig, SegmentationResult};
pub use rag::RagGraph;
pub use simfusion::EmbeddingSet;
pub use superpixel::{SlicParams, SuperpixelMap};
pub use tensorio::Tensor;
pub use texture::{FeatureSubset, TextureFeatures};
