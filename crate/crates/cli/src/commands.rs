use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use aimle_core::bench::records::{write_aggregate, write_bias, write_records, write_trajectory};
use aimle_core::bench::{
    aggregate, bench_cosine as run_bench, bias_table, inclusive_grid, run_toy_training,
    sweep_lambda as run_sweep, AggregateRow, BenchOptions, EstimatorConfig, SweepConfig,
    ToyCheckpoint, ToyConfig,
};
use aimle_core::optim::OptimizerConfig;
use aimle_core::polytope::StateSpace;
use aimle_core::{AimleController, ImleMode, NoiseSpec, PolytopeSpec};
use serde::Serialize;

use crate::config::{
    self, BenchCosineConfig, BiasEnumConfig, OptimizeToyConfig, SweepLambdaConfig,
};
use crate::{BenchCosineArgs, BiasEnumArgs, CliError, OptimizeToyArgs, SweepLambdaArgs};

fn set<T>(dst: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *dst = v;
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let t = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        let chosen = (t as u64) ^ ((t >> 64) as u64);
        eprintln!("aimle: no --seed given, using seed {chosen}");
        chosen
    })
}

fn run_seeds(root: u64, count: usize) -> Result<Vec<u64>, CliError> {
    if count == 0 {
        return Err(invalid("seeds must be >= 1"));
    }
    Ok((0..count as u64).map(|i| root.wrapping_add(i)).collect())
}

/// Parses a descriptor and checks that its state space can be enumerated.
fn checked_spec(text: &str) -> Result<PolytopeSpec, CliError> {
    let spec: PolytopeSpec = text.parse().map_err(invalid)?;
    StateSpace::new(spec).map_err(invalid)?;
    Ok(spec)
}

/// `dir/stem.suffix` next to the main output.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| failed(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct RunRecord<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    root_seed: u64,
    config: &'a C,
    outputs: Vec<String>,
}

fn write_run_record<C: Serialize>(
    command: &str,
    out: &Path,
    root_seed: u64,
    cfg: &C,
    outputs: &[&Path],
) -> Result<(), CliError> {
    let record = RunRecord {
        command,
        version: env!("CARGO_PKG_VERSION"),
        root_seed,
        config: cfg,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = sibling(out, "run.json");
    serde_json::to_writer_pretty(create(&path)?, &record).map_err(failed)
}

fn print_summary(rows: &[AggregateRow]) {
    println!(
        "{:<16} {:>7} {:>10} {:>6} {:>9} {:>9} {:>9}",
        "estimator", "S", "lambda", "runs", "cosine", "std", "zero_frac"
    );
    for r in rows {
        println!(
            "{:<16} {:>7} {:>10} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            r.estimator,
            r.samples,
            r.lambda,
            r.runs,
            r.cosine_mean,
            r.cosine_std,
            r.zero_fraction_mean
        );
    }
}

fn controller(eta: f64, target: f64) -> AimleController {
    AimleController {
        eta,
        target,
        ..AimleController::default()
    }
}

pub fn bench_cosine(args: BenchCosineArgs) -> Result<(), CliError> {
    let mut cfg: BenchCosineConfig = config::load(args.common.config.as_deref())?;
    set(&mut cfg.spec, args.spec);
    set(&mut cfg.estimators, args.estimators);
    set(&mut cfg.samples, args.samples);
    set(&mut cfg.seeds, args.seeds);
    set(&mut cfg.noise, args.noise);
    set(&mut cfg.eta, args.eta);
    set(&mut cfg.target, args.target);
    set(&mut cfg.warmup_steps, args.warmup_steps);
    set(&mut cfg.warmup_samples, args.warmup_samples);
    set(&mut cfg.out, args.common.out);
    cfg.seed = args.common.seed.or(cfg.seed);
    cfg.timing |= args.timing;

    let spec = checked_spec(&cfg.spec)?;
    let noise: NoiseSpec = cfg.noise.parse().map_err(invalid)?;
    if cfg.estimators.is_empty() || cfg.samples.is_empty() {
        return Err(invalid("estimators and S must be non-empty"));
    }
    if cfg.samples.contains(&0) || cfg.warmup_samples == 0 {
        return Err(invalid("sample counts must be >= 1"));
    }
    let estimators = cfg
        .estimators
        .iter()
        .map(|tok| {
            let e = tok
                .parse::<EstimatorConfig>()
                .map_err(invalid)?
                .with_noise(noise);
            let e = match e {
                EstimatorConfig::Aimle { mode, noise, .. } => EstimatorConfig::Aimle {
                    mode,
                    noise,
                    controller: controller(cfg.eta, cfg.target),
                    warmup_steps: cfg.warmup_steps,
                    warmup_samples: Some(cfg.warmup_samples),
                },
                other => other,
            };
            e.validate().map_err(invalid)?;
            Ok(e)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let root = resolve_seed(cfg.seed);
    cfg.seed = Some(root);
    let seeds = run_seeds(root, cfg.seeds)?;

    let records = run_bench(
        &spec,
        &estimators,
        &cfg.samples,
        &seeds,
        BenchOptions { timing: cfg.timing },
    )
    .map_err(failed)?;
    let agg = aggregate(&records);
    let agg_path = sibling(&cfg.out, "aggregate.csv");
    write_records(create(&cfg.out)?, &records).map_err(failed)?;
    write_aggregate(create(&agg_path)?, &agg).map_err(failed)?;
    write_run_record("bench-cosine", &cfg.out, root, &cfg, &[&cfg.out, &agg_path])?;
    print_summary(&agg);
    Ok(())
}

pub fn sweep_lambda(args: SweepLambdaArgs) -> Result<(), CliError> {
    let mut cfg: SweepLambdaConfig = config::load(args.common.config.as_deref())?;
    set(&mut cfg.spec, args.spec);
    set(&mut cfg.lambda_min, args.lambda_min);
    set(&mut cfg.lambda_max, args.lambda_max);
    set(&mut cfg.lambda_points, args.lambda_points);
    set(&mut cfg.samples, args.samples);
    set(&mut cfg.mode, args.mode);
    set(&mut cfg.seeds, args.seeds);
    set(&mut cfg.noise, args.noise);
    set(&mut cfg.eta, args.eta);
    set(&mut cfg.target, args.target);
    set(&mut cfg.warmup_steps, args.warmup_steps);
    set(&mut cfg.out, args.common.out);
    cfg.seed = args.common.seed.or(cfg.seed);
    cfg.baselines |= args.baselines;
    cfg.timing |= args.timing;

    let spec = checked_spec(&cfg.spec)?;
    if !(cfg.lambda_min >= 0.0 && cfg.lambda_max >= cfg.lambda_min && cfg.lambda_max.is_finite()) {
        return Err(invalid(
            "λ range must satisfy 0 <= lambda_min <= lambda_max",
        ));
    }
    if cfg.lambda_points == 0 || cfg.samples == 0 {
        return Err(invalid("lambda_points and S must be >= 1"));
    }
    let sweep = SweepConfig {
        lambdas: inclusive_grid(cfg.lambda_min, cfg.lambda_max, cfg.lambda_points),
        samples: cfg.samples,
        mode: cfg.mode.parse::<ImleMode>().map_err(invalid)?,
        noise: cfg.noise.parse().map_err(invalid)?,
        controller: controller(cfg.eta, cfg.target),
        warmup_steps: cfg.warmup_steps,
        baselines: cfg.baselines,
    };
    for e in sweep.estimators() {
        e.validate().map_err(invalid)?;
    }
    let root = resolve_seed(cfg.seed);
    cfg.seed = Some(root);
    let seeds = run_seeds(root, cfg.seeds)?;

    let records =
        run_sweep(&spec, &sweep, &seeds, BenchOptions { timing: cfg.timing }).map_err(failed)?;
    let agg = aggregate(&records);
    let agg_path = sibling(&cfg.out, "aggregate.csv");
    write_records(create(&cfg.out)?, &records).map_err(failed)?;
    write_aggregate(create(&agg_path)?, &agg).map_err(failed)?;
    write_run_record("sweep-lambda", &cfg.out, root, &cfg, &[&cfg.out, &agg_path])?;
    print_summary(&agg);
    Ok(())
}

pub fn optimize_toy(args: OptimizeToyArgs) -> Result<(), CliError> {
    let mut cfg: OptimizeToyConfig = config::load(args.common.config.as_deref())?;
    set(&mut cfg.spec, args.spec);
    set(&mut cfg.estimator, args.estimator);
    set(&mut cfg.samples, args.samples);
    set(&mut cfg.steps, args.steps);
    set(&mut cfg.optimizer, args.optimizer);
    set(&mut cfg.lr, args.lr);
    set(&mut cfg.noise, args.noise);
    set(&mut cfg.alpha, args.alpha);
    set(&mut cfg.eta, args.eta);
    set(&mut cfg.target, args.target);
    set(&mut cfg.out, args.common.out);
    cfg.seed = args.common.seed.or(cfg.seed);
    cfg.resume = args.resume.or(cfg.resume);
    cfg.checkpoint = args.checkpoint.or(cfg.checkpoint);

    let spec = checked_spec(&cfg.spec)?;
    let noise: NoiseSpec = cfg.noise.parse().map_err(invalid)?;
    let estimator = match cfg
        .estimator
        .parse::<EstimatorConfig>()
        .map_err(invalid)?
        .with_noise(noise)
    {
        EstimatorConfig::Aimle { mode, noise, .. } => EstimatorConfig::Aimle {
            mode,
            noise,
            controller: AimleController {
                alpha: cfg.alpha,
                ..controller(cfg.eta, cfg.target)
            },
            warmup_steps: 0,
            warmup_samples: None,
        },
        other => other,
    };
    estimator.validate().map_err(invalid)?;
    let optimizer = match cfg.optimizer.as_str() {
        "sgd" => OptimizerConfig::Sgd { lr: cfg.lr },
        "adam" => OptimizerConfig::adam(cfg.lr),
        other => {
            return Err(invalid(format!(
                "unknown optimizer `{other}` (expected sgd or adam)"
            )))
        }
    };
    optimizer.validate().map_err(invalid)?;
    if cfg.samples == 0 {
        return Err(invalid("S must be >= 1"));
    }
    let resume: Option<ToyCheckpoint> = match &cfg.resume {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            let ck: ToyCheckpoint = serde_json::from_str(&text)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            if cfg.seed.is_some_and(|s| s != ck.seed) {
                return Err(invalid("--seed differs from the checkpoint seed"));
            }
            cfg.seed = Some(ck.seed);
            Some(ck)
        }
        None => None,
    };
    let root = resolve_seed(cfg.seed);
    cfg.seed = Some(root);

    let toy = ToyConfig {
        spec,
        estimator,
        samples: cfg.samples,
        optimizer,
        steps: cfg.steps,
        seed: root,
    };
    let run = run_toy_training(&toy, resume.as_ref()).map_err(failed)?;
    let ck_path = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| sibling(&cfg.out, "checkpoint.json"));
    write_trajectory(create(&cfg.out)?, &run.trajectory).map_err(failed)?;
    serde_json::to_writer_pretty(create(&ck_path)?, &run.checkpoint).map_err(failed)?;
    write_run_record("optimize-toy", &cfg.out, root, &cfg, &[&cfg.out, &ck_path])?;
    if let Some(last) = run.trajectory.last() {
        println!(
            "step {} loss {:.6} lambda {:.6} g_bar {:.4} alpha {:.6}",
            last.step, last.loss, last.lambda, last.g_bar, last.alpha
        );
    }
    Ok(())
}

pub fn bias_enum(args: BiasEnumArgs) -> Result<(), CliError> {
    let mut cfg: BiasEnumConfig = config::load(args.common.config.as_deref())?;
    set(&mut cfg.spec, args.spec);
    set(&mut cfg.lambdas, args.lambdas);
    set(&mut cfg.seeds, args.seeds);
    set(&mut cfg.out, args.common.out);
    cfg.seed = args.common.seed.or(cfg.seed);

    let spec = checked_spec(&cfg.spec)?;
    if cfg.lambdas.is_empty() || cfg.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(invalid(
            "lambdas must be a non-empty list of positive steps",
        ));
    }
    let root = resolve_seed(cfg.seed);
    cfg.seed = Some(root);
    let seeds = run_seeds(root, cfg.seeds)?;

    let mut rows = Vec::new();
    for &seed in &seeds {
        rows.extend(bias_table(&spec, seed, &cfg.lambdas).map_err(failed)?);
    }
    write_bias(create(&cfg.out)?, &rows).map_err(failed)?;
    write_run_record("bias-enum", &cfg.out, root, &cfg, &[&cfg.out])?;
    for &seed in &seeds {
        for &lambda in &cfg.lambdas {
            let sel: Vec<_> = rows
                .iter()
                .filter(|r| r.seed == seed && r.lambda == lambda)
                .collect();
            let bias = sel.iter().map(|r| r.bias * r.bias).sum::<f64>().sqrt();
            let unscaled = sel
                .iter()
                .map(|r| r.imle_unscaled * r.imle_unscaled)
                .sum::<f64>()
                .sqrt();
            println!("seed {seed} lambda {lambda}: |bias| {bias:.6}, |unscaled| {unscaled:.6}");
        }
    }
    Ok(())
}
