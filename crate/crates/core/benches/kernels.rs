//! Hot kernels on a single-thread pool vs the full rayon pool.
//!
//! Built with `--no-default-features` both variants run the sequential
//! fallback, which gives the baseline for the feature flag itself.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ragseg::bias::{self, AttentionInputs};
use ragseg::imaging::to_gray_quantized;
use ragseg::patch_bridge::{self, Neighborhood};
use ragseg::simfusion::{self, EmbeddingSet};
use ragseg::superpixel::{self, SlicParams};
use ragseg::texture::{self, ISOTROPIC_OFFSETS};
use ragseg::{rag, FeatureSubset, Matrix, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let all = rayon::current_num_threads().max(2);
    let mode = if cfg!(feature = "parallel") {
        ""
    } else {
        "-seq-build"
    };
    [1, all]
        .into_iter()
        .map(|n| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap();
            (format!("{n}-threads{mode}"), pool)
        })
        .collect()
}

fn image(w: usize, h: usize) -> RgbImage {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let noise: Vec<f64> = (0..w * h).map(|_| r.gen_range(-0.1..0.1)).collect();
    RgbImage::from_fn(w, h, |x, y| {
        let band = ((x / 24 + y / 32) % 3) as f64 * 0.25;
        let n = noise[y * w + x];
        [0.2 + band + n, 0.5 - band * 0.5 + n, 0.4 + n]
    })
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn structure(c: &mut Criterion) {
    let img = image(224, 224);
    let params = SlicParams::default();
    let map = superpixel::slic(&img, &params).unwrap();
    let gray = to_gray_quantized(&img, 32).unwrap();
    let graph = rag::build_rag(&map, &img, &gray, FeatureSubset::ALL).unwrap();
    let grid = patch_bridge::assign_patches(&map, 16).unwrap();

    let mut g = c.benchmark_group("structure");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("slic_224", &name), |b| {
            b.iter(|| pool.install(|| superpixel::slic(black_box(&img), &params).unwrap()))
        });
        g.bench_function(BenchmarkId::new("glcm_per_region", &name), |b| {
            b.iter(|| {
                pool.install(|| {
                    texture::glcm_per_region(
                        &gray,
                        map.labels(),
                        map.region_count(),
                        &ISOTROPIC_OFFSETS,
                    )
                    .unwrap()
                })
            })
        });
        g.bench_function(BenchmarkId::new("patch_pair_stats", &name), |b| {
            b.iter(|| {
                pool.install(|| {
                    patch_bridge::patch_pair_stats(&grid, &graph, Neighborhood::Eight).unwrap()
                })
            })
        });
    }
    g.finish();
}

fn attention(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let (gw, gh) = (24, 24);
    let n = gw * gh;
    let inp = AttentionInputs::new(
        random_matrix(&mut r, n, 64),
        random_matrix(&mut r, n, 64),
        random_matrix(&mut r, n, 64),
    )
    .unwrap();
    let node = bias::NodeBias {
        values: (0..n).map(|_| r.gen_range(0.0..1.5)).collect(),
    };

    let mut g = c.benchmark_group("attention");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("bilateral_bias_576", &name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let k = bias::spatial_gaussian(gw, gh, 5.0).unwrap();
                    bias::bilateral_bias(&k, &node, 5.0).unwrap()
                })
            })
        });
        let bm = pool.install(|| {
            bias::bilateral_bias(&bias::spatial_gaussian(gw, gh, 5.0).unwrap(), &node, 5.0).unwrap()
        });
        g.bench_function(BenchmarkId::new("biased_attention_576x64", &name), |b| {
            b.iter(|| pool.install(|| bias::biased_attention(black_box(&inp), &bm).unwrap()))
        });
    }
    g.finish();
}

fn fusion(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let (gw, gh) = (32, 32);
    let emb = EmbeddingSet::with_default_names(
        random_matrix(&mut r, gw * gh, 512),
        random_matrix(&mut r, 21, 512),
        gw,
        gh,
    )
    .unwrap();

    let mut g = c.benchmark_group("fusion");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("cosine_1024x21x512", &name), |b| {
            b.iter(|| pool.install(|| simfusion::cosine_similarity(black_box(&emb)).unwrap()))
        });
        g.bench_function(BenchmarkId::new("smooth_visual_1024x512", &name), |b| {
            b.iter(|| pool.install(|| simfusion::smooth_visual(black_box(&emb), 3, 3.0).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, structure, attention, fusion);
criterion_main!(benches);
