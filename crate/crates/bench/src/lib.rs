//! Benchmark bodies, run by `benches/pipeline.rs`.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use proxyvote_core::geometry::{project, Intrinsics, Point2};
use proxyvote_core::losses::{dpvl, vf_loss};
use proxyvote_core::model::{farthest_point_sampling, ModelCloud};
use proxyvote_core::pnp::{solve_epnp, Correspondence};
use proxyvote_core::synth::{corrupt_fields, field_toward, make_scene, sample_pose, NoiseSpec, PoseRanges};
use proxyvote_core::voting::{vote_keypoint, VotingConfig};
use proxyvote_core::{Mask, VectorField};

fn noisy_disc(size: usize, sigma: f64) -> (Mask, VectorField, Point2) {
    let c = size as f64 / 2.0;
    let mask = Mask::disc(size, size, Point2::new(c, c), 0.375 * size as f64);
    let k = Point2::new(c - 1.7, c + 3.7);
    let (f, _) = field_toward(&mask, k);
    let spec = NoiseSpec {
        angular_sigma: sigma,
        rng_seed: 1,
        ..Default::default()
    };
    let (m, mut fs) = corrupt_fields(&mask, &[f], &spec).unwrap();
    (m, fs.remove(0), k)
}

pub fn losses(c: &mut Criterion) {
    let mut g = c.benchmark_group("losses");
    for size in [64, 128] {
        let (m, f, k) = noisy_disc(size, 10.0);
        let (gt, _) = field_toward(&m, k);
        g.bench_with_input(BenchmarkId::new("dpvl", size), &size, |b, _| {
            b.iter(|| dpvl(black_box(&f), &m, k).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("vf_loss", size), &size, |b, _| {
            b.iter(|| vf_loss(black_box(&f), &gt, &m).unwrap())
        });
    }
    g.finish();
}

pub fn voting(c: &mut Criterion) {
    let mut g = c.benchmark_group("voting");
    let (m, f, _) = noisy_disc(64, 5.0);
    for samples in [128, 512] {
        let cfg = VotingConfig {
            num_samples: samples,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::new("vote_keypoint_64", samples), &cfg, |b, cfg| {
            b.iter(|| vote_keypoint(black_box(&f), &m, cfg).unwrap())
        });
    }
    g.finish();
}

pub fn pnp(c: &mut Criterion) {
    let cloud = ModelCloud::box_surface("box", [0.1, 0.08, 0.06], 0.004).unwrap();
    let intr = Intrinsics::new(572.4, 573.6, 325.3, 242.0).unwrap();
    let pose = sample_pose(3, &PoseRanges::default(), &cloud, &intr, 640, 480).unwrap();
    let mut g = c.benchmark_group("epnp");
    for n in [8, 32] {
        let keys = farthest_point_sampling(&cloud, n, None).unwrap();
        let corrs: Vec<Correspondence> = keys
            .points3
            .iter()
            .map(|&x| Correspondence::new(x, project(&pose, &intr, x).unwrap()))
            .collect();
        g.bench_with_input(BenchmarkId::new("solve_epnp", n), &corrs, |b, corrs| {
            b.iter(|| solve_epnp(black_box(corrs), &intr).unwrap())
        });
    }
    g.finish();
}

/// Scene synthesis: mask splatting plus one field per keypoint.
pub fn synth(c: &mut Criterion) {
    let cloud = ModelCloud::box_surface("box", [0.1, 0.08, 0.06], 0.004).unwrap();
    let keys = farthest_point_sampling(&cloud, 8, None).unwrap();
    let intr = Intrinsics::new(200.0, 200.0, 32.0, 32.0).unwrap();
    let pose = sample_pose(0, &PoseRanges::default(), &cloud, &intr, 64, 64).unwrap();
    c.bench_function("make_scene_64", |b| {
        b.iter(|| make_scene(&cloud, &keys, black_box(&pose), &intr, 64, 64).unwrap())
    });
}
