//! Preset experiments: separation versus ball radius, and a long bounded run
//! tracking grid coverage.

use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use cutexplore::metrics::{mean, separation};
use cutexplore::{BoundingBox, ClipMode, DomainBounds, Execution, Explorer, ExplorerConfig, StoppingRule};
use serde::Serialize;

use crate::output::{float, json_line, sample_rows, write_samples, Format};
use crate::run::{execute_run, file_name, write_text, OutputPlan, RunOutcome};
use crate::{lib_error, CliError, CommonArgs};

pub const SWEEP_EPSILONS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 4.0];
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// One iteration from a shared warm-up at each radius in 0.1, 0.5, 1, 2, 4.
    EpsilonSweep(SweepArgs),
    /// Many iterations in the unit square, logging coverage.
    LongRun(LongRunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Consecutive seeds averaged into the summary table.
    #[arg(long, default_value_t = 25)]
    pub replicates: u64,
}

#[derive(Debug, Clone, Args)]
pub struct LongRunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Samples per iteration.
    #[arg(long, default_value_t = 50)]
    pub batch: usize,
    /// Per-tree reservoir size; whole dataset when unset.
    #[arg(long)]
    pub subsample: Option<usize>,
}

/// Sweep preset: 200 warm-up points in the unit square, batches of 50,
/// 50 trees. The domain is widened to [-5, 6]^2 so the largest balls are not
/// clamped back onto the square.
pub fn sweep_config(seed: u64) -> ExplorerConfig {
    ExplorerConfig {
        epsilon: SWEEP_EPSILONS[0],
        batch_size: 50,
        warmup_size: 200,
        num_trees: 50,
        max_iterations: 1,
        bounds: DomainBounds::new(BoundingBox::new(vec![-5.0; 2], vec![6.0; 2]).expect("valid box"), ClipMode::Clip)
            .expect("valid bounds"),
        warmup_region: Some(unit_square()),
        seed,
        ..ExplorerConfig::unit_cube(2)
    }
}

/// Long-run preset: a 50-point warm-up cluster in [0.4, 0.6]^2 inside the
/// bounded unit square, ε = 0.1, out-of-domain draws rejected.
pub fn long_run_config(seed: u64, iterations: usize, batch: usize, subsample: Option<usize>) -> ExplorerConfig {
    ExplorerConfig {
        epsilon: 0.1,
        batch_size: batch,
        warmup_size: 50.max(batch),
        num_trees: 50,
        subsample_size: subsample,
        max_iterations: iterations,
        bounds: DomainBounds::new(unit_square(), ClipMode::Reject).expect("valid bounds"),
        warmup_region: Some(BoundingBox::new(vec![0.4; 2], vec![0.6; 2]).expect("valid box")),
        seed,
        ..ExplorerConfig::unit_cube(2)
    }
}

fn unit_square() -> BoundingBox {
    BoundingBox::new(vec![0.0; 2], vec![1.0; 2]).expect("valid box")
}

/// One replicate of the sweep: explorers after their single step, with the
/// mean separation of the new points from the warm-up.
pub struct SweepReplicate {
    pub seed: u64,
    pub explorers: Vec<Explorer>,
    pub separation: Vec<f64>,
    pub admitted: Vec<usize>,
}

pub fn sweep_replicate(seed: u64, execution: Execution) -> Result<SweepReplicate, CliError> {
    let base = Explorer::warm_up(ExplorerConfig { execution, ..sweep_config(seed) }).map_err(lib_error)?;
    let warm = base.dataset().coords();
    let mut out = SweepReplicate { seed, explorers: Vec::new(), separation: Vec::new(), admitted: Vec::new() };
    for &eps in &SWEEP_EPSILONS {
        let mut x = base.clone();
        x.set_epsilon(eps).map_err(lib_error)?;
        let record = x.step().map_err(lib_error)?;
        let new: Vec<Vec<f64>> = record.new_points.iter().map(|p| p.coords.clone()).collect();
        out.separation.push(mean(&separation(&new, &warm, execution)).unwrap_or(f64::NAN));
        out.admitted.push(new.len());
        out.explorers.push(x);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub mean_separation: f64,
    /// Separation of the first seed, whose samples are written out.
    pub primary_separation: f64,
    pub mean_admitted: f64,
}

pub fn run_sweep(seed: u64, replicates: u64, execution: Execution) -> Result<(Vec<SweepRow>, SweepReplicate), CliError> {
    if replicates == 0 {
        return Err(CliError::Config("invalid configuration: `replicates` must be at least 1".to_owned()));
    }
    let mut totals = [0.0; SWEEP_EPSILONS.len()];
    let mut admitted = [0.0; SWEEP_EPSILONS.len()];
    let mut primary = None;
    for s in seed..seed + replicates {
        let r = sweep_replicate(s, execution)?;
        for i in 0..SWEEP_EPSILONS.len() {
            totals[i] += r.separation[i];
            admitted[i] += r.admitted[i] as f64;
        }
        if primary.is_none() {
            primary = Some(r);
        }
    }
    let primary = primary.expect("at least one replicate");
    let n = replicates as f64;
    let rows = SWEEP_EPSILONS
        .iter()
        .enumerate()
        .map(|(i, &epsilon)| SweepRow {
            epsilon,
            mean_separation: totals[i] / n,
            primary_separation: primary.separation[i],
            mean_admitted: admitted[i] / n,
        })
        .collect();
    Ok((rows, primary))
}

/// Sample file name for one sweep radius.
pub fn sweep_file(epsilon: f64, format: Format) -> String {
    format!("samples_eps_{epsilon}.{}", format.extension())
}

#[derive(Serialize)]
struct SweepMetadata<'a> {
    experiment: &'static str,
    seeds: Vec<u64>,
    epsilons: &'a [f64],
    config: ExplorerConfig,
    files: Vec<String>,
    rows: &'a [SweepRow],
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let seed = args.common.seed.unwrap_or(DEFAULT_SEED);
    let format = args.common.format.unwrap_or_default();
    let dir = args.common.resolve_dir(None);
    std::fs::create_dir_all(&dir).map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))?;
    let (rows, primary) = run_sweep(seed, args.replicates, Execution::Parallel)?;
    let mut files = Vec::new();
    for (x, &eps) in primary.explorers.iter().zip(&SWEEP_EPSILONS) {
        let name = sweep_file(eps, format);
        write_samples(&dir.join(&name), format, 2, &sample_rows(x.dataset(), 0))?;
        files.push(name);
    }
    let mut table = String::from("epsilon,mean_separation,primary_separation,mean_admitted\n");
    for r in &rows {
        table.push_str(&format!("{},{},{},{}\n", float(r.epsilon), float(r.mean_separation), float(r.primary_separation), float(r.mean_admitted)));
    }
    write_text(&dir.join("epsilon_sweep.csv"), &table)?;
    let meta = SweepMetadata {
        experiment: "epsilon-sweep",
        seeds: (seed..seed + args.replicates).collect(),
        epsilons: &SWEEP_EPSILONS,
        config: sweep_config(seed),
        files,
        rows: &rows,
    };
    write_text(&dir.join("metadata.json"), &format!("{}\n", json_line(&meta)))?;
    let mut stdout = std::io::stdout().lock();
    let _ = write!(stdout, "{table}");
    Ok(())
}

#[derive(Serialize)]
struct LongRunMetadata<'a> {
    experiment: &'static str,
    config: &'a ExplorerConfig,
    grid_bins: usize,
    final_coverage: f64,
    samples: String,
    wall_seconds: f64,
}

/// Runs the long-run preset into `dir`, adding `coverage.csv` and
/// `metadata.json` to the usual run files.
pub fn long_run(config: ExplorerConfig, dir: PathBuf, format: Format) -> Result<RunOutcome, CliError> {
    let plan = OutputPlan { dir, format, emit_per_iteration: true };
    let outcome = execute_run(config.clone(), StoppingRule::default(), &plan)?;
    let total = 32.0 * 32.0;
    let mut csv = String::from("iteration,dataset_size,occupied_cells,coverage\n");
    let mut size = config.warmup_size;
    for (i, &cells) in outcome.occupied.iter().enumerate() {
        if i > 0 {
            size += outcome.records[i - 1].new_points.len();
        }
        csv.push_str(&format!("{i},{size},{cells},{}\n", float(cells as f64 / total)));
    }
    write_text(&plan.dir.join("coverage.csv"), &csv)?;
    let meta = LongRunMetadata {
        experiment: "long-run",
        config: &config,
        grid_bins: 32,
        final_coverage: outcome.summary.coverage,
        samples: file_name(&plan.samples_path()),
        wall_seconds: outcome.summary.wall_seconds,
    };
    write_text(&plan.dir.join("metadata.json"), &format!("{}\n", json_line(&meta)))?;
    Ok(outcome)
}

fn cmd_long_run(args: &LongRunArgs) -> Result<(), CliError> {
    let config = long_run_config(args.common.seed.unwrap_or(DEFAULT_SEED), args.iterations, args.batch, args.subsample);
    config.validate().map_err(lib_error)?;
    let outcome = long_run(config, args.common.resolve_dir(None), args.common.format.unwrap_or_default())?;
    println!("{}", outcome.summary.describe());
    Ok(())
}

pub fn cmd_experiment(cmd: &ExperimentCommand) -> Result<(), CliError> {
    match cmd {
        ExperimentCommand::EpsilonSweep(args) => cmd_sweep(args),
        ExperimentCommand::LongRun(args) => cmd_long_run(args),
    }
}
