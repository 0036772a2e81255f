//! Browser demo for `aimle-core`.
//!
//! Each operation has a plain Rust function returning a JSON string, so it
//! can be tested natively, and a thin `#[wasm_bindgen]` wrapper for the page
//! in `www/`.

use aimle_core::bench::{
    aggregate, bench_cosine, inclusive_grid, run_toy_training, sweep_lambda, BenchOptions,
    EstimatorConfig, SweepConfig, ToyConfig,
};
use aimle_core::optim::OptimizerConfig;
use aimle_core::{AimleController, ImleMode, NoiseSpec, PolytopeSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest sizes accepted from the page, to keep each call interactive.
pub const MAX_CATEGORIES: usize = 200;
pub const MAX_SEEDS: usize = 64;
pub const MAX_SAMPLES: usize = 100_000;
pub const MAX_STEPS: usize = 50_000;

type DemoResult = Result<String, String>;

fn within(name: &str, value: usize, max: usize) -> Result<(), String> {
    if value == 0 || value > max {
        return Err(format!("{name} must be in 1..={max}, got {value}"));
    }
    Ok(())
}

fn categorical(n: usize) -> Result<PolytopeSpec, String> {
    within("n", n, MAX_CATEGORIES)?;
    PolytopeSpec::categorical(n).map_err(|e| e.to_string())
}

fn seed_list(seed: u64, seeds: usize) -> Result<Vec<u64>, String> {
    within("seeds", seeds, MAX_SEEDS)?;
    Ok((0..seeds as u64).map(|i| seed.wrapping_add(i)).collect())
}

#[derive(Serialize)]
struct Point {
    label: String,
    x: f64,
    cosine: f64,
    cosine_std: f64,
    zero_fraction: f64,
}

/// IMLE (central) cosine and sparsity over an inclusive λ grid, plus AIMLE.
pub fn lambda_sweep_json(
    n: usize,
    samples: usize,
    seeds: usize,
    lambda_max: f64,
    points: usize,
    warmup_steps: usize,
    seed: u64,
) -> DemoResult {
    let spec = categorical(n)?;
    within("S", samples, MAX_SAMPLES)?;
    within("points", points, 101)?;
    if !(lambda_max.is_finite() && lambda_max > 0.0) {
        return Err("lambda_max must be > 0".into());
    }
    let cfg = SweepConfig {
        lambdas: inclusive_grid(0.0, lambda_max, points),
        samples,
        mode: ImleMode::Central,
        noise: NoiseSpec::default(),
        controller: AimleController::default(),
        warmup_steps: warmup_steps.min(MAX_STEPS),
        baselines: false,
    };
    let recs = sweep_lambda(
        &spec,
        &cfg,
        &seed_list(seed, seeds)?,
        BenchOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let rows: Vec<Point> = aggregate(&recs)
        .into_iter()
        .map(|r| Point {
            x: r.lambda.parse().unwrap_or(f64::NAN),
            label: r.lambda,
            cosine: r.cosine_mean,
            cosine_std: r.cosine_std,
            zero_fraction: r.zero_fraction_mean,
        })
        .collect();
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Series {
    estimator: String,
    points: Vec<Point>,
}

/// Cosine to the exact gradient against S = 10^0 … 10^max_exponent.
pub fn cosine_vs_samples_json(
    n: usize,
    estimators: &str,
    max_exponent: u32,
    seeds: usize,
    seed: u64,
) -> DemoResult {
    let spec = categorical(n)?;
    if max_exponent > 5 {
        return Err("max_exponent must be <= 5".into());
    }
    let configs = estimators
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<EstimatorConfig>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    if configs.is_empty() {
        return Err("no estimators given".into());
    }
    let grid: Vec<usize> = (0..=max_exponent).map(|e| 10usize.pow(e)).collect();
    let recs = bench_cosine(
        &spec,
        &configs,
        &grid,
        &seed_list(seed, seeds)?,
        BenchOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let agg = aggregate(&recs);
    let series: Vec<Series> = configs
        .iter()
        .map(|c| Series {
            estimator: c.to_string(),
            points: agg
                .iter()
                .filter(|r| r.estimator == c.id() && r.lambda == c.lambda_label())
                .map(|r| Point {
                    label: r.samples.to_string(),
                    x: r.samples as f64,
                    cosine: r.cosine_mean,
                    cosine_std: r.cosine_std,
                    zero_fraction: r.zero_fraction_mean,
                })
                .collect(),
        })
        .collect();
    serde_json::to_string(&series).map_err(|e| e.to_string())
}

/// Toy training with AIMLE (central): per-step loss, λ, ḡ and α.
pub fn aimle_trajectory_json(
    n: usize,
    samples: usize,
    steps: usize,
    eta: f64,
    lr: f64,
    seed: u64,
) -> DemoResult {
    let spec = categorical(n)?;
    within("S", samples, MAX_SAMPLES)?;
    within("steps", steps, MAX_STEPS)?;
    let estimator = EstimatorConfig::Aimle {
        mode: ImleMode::Central,
        noise: NoiseSpec::default(),
        controller: AimleController {
            eta,
            ..AimleController::default()
        },
        warmup_steps: 0,
        warmup_samples: None,
    };
    let cfg = ToyConfig {
        spec,
        estimator,
        samples,
        optimizer: OptimizerConfig::adam(lr),
        steps,
        seed,
    };
    let run = run_toy_training(&cfg, None).map_err(|e| e.to_string())?;
    serde_json::to_string(&run.trajectory).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn lambda_sweep(
    n: usize,
    samples: usize,
    seeds: usize,
    lambda_max: f64,
    points: usize,
    warmup_steps: usize,
    seed: u64,
) -> Result<String, JsValue> {
    lambda_sweep_json(n, samples, seeds, lambda_max, points, warmup_steps, seed)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn cosine_vs_samples(
    n: usize,
    estimators: &str,
    max_exponent: u32,
    seeds: usize,
    seed: u64,
) -> Result<String, JsValue> {
    cosine_vs_samples_json(n, estimators, max_exponent, seeds, seed)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn aimle_trajectory(
    n: usize,
    samples: usize,
    steps: usize,
    eta: f64,
    lr: f64,
    seed: u64,
) -> Result<String, JsValue> {
    aimle_trajectory_json(n, samples, steps, eta, lr, seed).map_err(|e| JsValue::from_str(&e))
}
