use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use cutexplore::explorer::RecordSink;
use cutexplore::metrics::{default_bins, min_pairwise_distance, occupied_cells};
use cutexplore::{BoundingBox, Dataset, ExplorerConfig, IterationRecord, StoppingRule};
use serde::Serialize;

use crate::config::RunConfigFile;
use crate::output::{float, json_line, sample_rows, write_samples, Format, SampleWriter};
use crate::{lib_error, CliError, CommonArgs};

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config; defaults apply when omitted.
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Where and how a run writes its files.
#[derive(Debug, Clone)]
pub struct OutputPlan {
    pub dir: PathBuf,
    pub format: Format,
    pub emit_per_iteration: bool,
}

impl OutputPlan {
    pub fn samples_path(&self) -> PathBuf {
        self.dir.join(format!("samples.{}", self.format.extension()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub final_n: usize,
    pub warmup_size: usize,
    pub admitted: usize,
    pub dropped: usize,
    pub redraws: usize,
    pub iterations: usize,
    pub wall_seconds: f64,
    /// `None` below two points.
    pub min_pairwise_distance: Option<f64>,
    pub coverage: f64,
    pub seed: u64,
    pub samples: String,
}

impl Summary {
    pub fn describe(&self) -> String {
        format!(
            "{} points ({} warm-up + {} admitted, {} dropped) over {} iterations in {:.3}s; min distance {}; coverage {:.4}",
            self.final_n,
            self.warmup_size,
            self.admitted,
            self.dropped,
            self.iterations,
            self.wall_seconds,
            self.min_pairwise_distance.map_or_else(|| "n/a".to_owned(), float),
            self.coverage,
        )
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dataset: Dataset,
    pub records: Vec<IterationRecord>,
    /// Occupied grid cells after the warm-up and after each iteration.
    pub occupied: Vec<usize>,
    pub summary: Summary,
}

/// One line of `iterations.jsonl`.
#[derive(Serialize)]
struct IterationLine<'a> {
    iteration: usize,
    dataset_size: usize,
    admitted: usize,
    dropped: usize,
    redraws: usize,
    num_trees: usize,
    mean_complexity: f64,
    occupied_cells: usize,
    coverage: f64,
    elapsed_seconds: f64,
    peripheral: Vec<PeripheralEntry>,
    new_ids: &'a [u64],
}

#[derive(Serialize)]
struct PeripheralEntry {
    id: u64,
    score: f64,
}

struct FileSink {
    iterations: BufWriter<File>,
    samples: Option<SampleWriter>,
    bbox: BoundingBox,
    bins: usize,
    occupied: Vec<usize>,
    written: usize,
    error: Option<io::Error>,
}

impl FileSink {
    fn keep(&mut self, r: io::Result<()>) {
        if let (Err(e), None) = (r, &self.error) {
            self.error = Some(e);
        }
    }

    fn flush_samples(&mut self, dataset: &Dataset) {
        if let Some(w) = self.samples.as_mut() {
            let r = w.write(&sample_rows(dataset, self.written));
            self.written = dataset.len();
            self.keep(r);
        }
    }

    fn cells(&self, dataset: &Dataset) -> usize {
        occupied_cells(dataset.points().iter().map(|p| p.coords.as_slice()), &self.bbox, self.bins)
    }
}

impl RecordSink for FileSink {
    fn on_warm_up(&mut self, dataset: &Dataset) {
        let cells = self.cells(dataset);
        self.occupied.push(cells);
        self.flush_samples(dataset);
    }

    fn on_iteration(&mut self, dataset: &Dataset, record: &IterationRecord) {
        let occupied = self.cells(dataset);
        self.occupied.push(occupied);
        let new_ids: Vec<u64> = record.new_points.iter().map(|p| p.id).collect();
        let line = IterationLine {
            iteration: record.iteration,
            dataset_size: dataset.len(),
            admitted: record.new_points.len(),
            dropped: record.dropped,
            redraws: record.redraws,
            num_trees: record.num_trees,
            mean_complexity: record.mean_complexity,
            occupied_cells: occupied,
            coverage: occupied as f64 / (self.bins as f64).powi(self.bbox.dim() as i32),
            elapsed_seconds: record.elapsed.as_secs_f64(),
            peripheral: record.peripheral.iter().map(|s| PeripheralEntry { id: s.point_id, score: s.score }).collect(),
            new_ids: &new_ids,
        };
        let r = writeln!(self.iterations, "{}", json_line(&line));
        self.keep(r);
        self.flush_samples(dataset);
    }
}

/// Runs the explorer and writes samples, `iterations.jsonl` and `summary.json`.
pub fn execute_run(config: ExplorerConfig, stop: StoppingRule, plan: &OutputPlan) -> Result<RunOutcome, CliError> {
    config.validate().map_err(lib_error)?;
    std::fs::create_dir_all(&plan.dir).with_context(|| format!("cannot create {}", plan.dir.display()))?;
    let started = Instant::now();
    let dim = config.dim();
    let iterations_path = plan.dir.join("iterations.jsonl");
    let iterations = File::create(&iterations_path).with_context(|| format!("cannot create {}", iterations_path.display()))?;
    let samples_path = plan.samples_path();
    let samples = if plan.emit_per_iteration { Some(SampleWriter::create(&samples_path, plan.format, dim)?) } else { None };
    let mut sink = FileSink {
        iterations: BufWriter::new(iterations),
        samples,
        bbox: config.bounds.bbox.clone(),
        bins: default_bins(dim),
        occupied: Vec::new(),
        written: 0,
        error: None,
    };

    let (dataset, records) = cutexplore::explorer::run(config.clone(), stop, &mut sink).map_err(lib_error)?;

    if let Some(e) = sink.error.take() {
        return Err(anyhow::Error::new(e).context("writing run output").into());
    }
    sink.iterations.flush().context("writing iterations.jsonl")?;
    match sink.samples.take() {
        Some(w) => w.finish().with_context(|| format!("writing {}", samples_path.display()))?,
        None => write_samples(&samples_path, plan.format, dim, &sample_rows(&dataset, 0))?,
    }

    let admitted = dataset.len() - config.warmup_size;
    let bins = sink.bins as f64;
    let summary = Summary {
        final_n: dataset.len(),
        warmup_size: config.warmup_size,
        admitted,
        dropped: records.iter().map(|r| r.dropped).sum(),
        redraws: records.iter().map(|r| r.redraws).sum(),
        iterations: records.len(),
        wall_seconds: started.elapsed().as_secs_f64(),
        min_pairwise_distance: min_pairwise_distance(&dataset.coords(), config.execution),
        coverage: *sink.occupied.last().unwrap_or(&0) as f64 / bins.powi(dim as i32),
        seed: config.seed,
        samples: file_name(&samples_path),
    };
    write_text(&plan.dir.join("summary.json"), &format!("{}\n", json_line(&summary)))?;
    Ok(RunOutcome { dataset, records, occupied: sink.occupied, summary })
}

pub fn cmd_run(args: &RunArgs) -> Result<RunOutcome, CliError> {
    let mut file = RunConfigFile::load(args.config.as_deref(), &args.set)?;
    if let Some(seed) = args.common.seed {
        file.seed = seed;
    }
    if let Some(format) = args.common.format {
        file.output_format = format;
    }
    let config = file.explorer_config()?;
    let stop = file.stopping_rule()?;
    let plan = OutputPlan {
        dir: args.common.resolve_dir(file.output_dir.as_ref()),
        format: file.output_format,
        emit_per_iteration: file.emit_per_iteration,
    };
    execute_run(config, stop, &plan)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub(crate) fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}
