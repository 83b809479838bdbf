use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use cutexplore::geometry::bounding_box;
use cutexplore::metrics::{default_bins, mean, nearest_neighbor_distances, occupied_cells, separation};
use cutexplore::{BoundingBox, Execution};

use crate::output::{float, read_samples, SampleRow};
use crate::run::write_text;
use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Sample log (.jsonl or .csv).
    pub samples: PathBuf,
    /// Coverage grid lower corner, comma separated; the data's box when unset.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "bounds_max")]
    pub bounds_min: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "bounds_min")]
    pub bounds_max: Option<Vec<f64>>,
    /// Plot CSV for 2-D logs; defaults to `<samples>.plot.csv`.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

/// Per-iteration growth line.
#[derive(Debug, Clone, PartialEq)]
pub struct Growth {
    pub iteration: usize,
    pub added: usize,
    pub total: usize,
    /// Mean distance from this iteration's points to all earlier ones.
    pub separation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub points: usize,
    pub dimension: usize,
    pub min_nn: Option<f64>,
    pub mean_nn: Option<f64>,
    pub bins: usize,
    pub occupied: usize,
    pub coverage: f64,
    pub growth: Vec<Growth>,
}

pub fn build_report(rows: &[SampleRow], bbox: Option<BoundingBox>) -> Result<Report, CliError> {
    let coords: Vec<Vec<f64>> = rows.iter().map(|r| r.coords.clone()).collect();
    let dimension = coords[0].len();
    let bbox = match bbox {
        Some(b) if b.dim() == dimension => b,
        Some(b) => return Err(CliError::Config(format!("bounds have {} dimensions but the log has {dimension}", b.dim()))),
        None => bounding_box(coords.iter().map(Vec::as_slice)).expect("non-empty log"),
    };
    let nn: Vec<f64> = nearest_neighbor_distances(&coords, Execution::Parallel).into_iter().flatten().collect();
    let bins = default_bins(dimension);
    let occupied = occupied_cells(&coords, &bbox, bins);

    let mut by_iteration: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for r in rows {
        by_iteration.entry(r.iteration).or_default().push(r.coords.clone());
    }
    let mut earlier: Vec<Vec<f64>> = Vec::new();
    let mut growth = Vec::new();
    for (iteration, points) in by_iteration {
        let sep = if earlier.is_empty() { None } else { mean(&separation(&points, &earlier, Execution::Parallel)) };
        earlier.extend(points.iter().cloned());
        growth.push(Growth { iteration, added: points.len(), total: earlier.len(), separation: sep });
    }
    Ok(Report {
        points: rows.len(),
        dimension,
        min_nn: nn.iter().copied().min_by(f64::total_cmp),
        mean_nn: mean(&nn),
        bins,
        occupied,
        coverage: occupied as f64 / (bins as f64).powi(dimension as i32),
        growth,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_owned(), float)
}

impl Report {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "points: {}", self.points);
        let _ = writeln!(s, "dimension: {}", self.dimension);
        let _ = writeln!(s, "min_nn_distance: {}", opt(self.min_nn));
        let _ = writeln!(s, "mean_nn_distance: {}", opt(self.mean_nn));
        let _ = writeln!(
            s,
            "coverage: {} ({} of {} cells, {} bins per axis)",
            float(self.coverage),
            self.occupied,
            self.bins.pow(self.dimension as u32),
            self.bins
        );
        let _ = writeln!(s, "iteration,added,total,separation");
        for g in &self.growth {
            let _ = writeln!(s, "{},{},{},{}", g.iteration, g.added, g.total, opt(g.separation));
        }
        s
    }
}

pub fn default_plot_path(samples: &Path) -> PathBuf {
    let mut name = samples.file_stem().unwrap_or_default().to_os_string();
    name.push(".plot.csv");
    samples.with_file_name(name)
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let rows = read_samples(&args.samples)?;
    let bbox = match (&args.bounds_min, &args.bounds_max) {
        (Some(lo), Some(hi)) => Some(
            BoundingBox::new(lo.clone(), hi.clone())
                .map_err(|e| CliError::Config(format!("invalid configuration: `bounds_min` {e}")))?,
        ),
        _ => None,
    };
    let report = build_report(&rows, bbox)?;
    if report.dimension == 2 {
        let mut plot = String::from("x,y,iteration\n");
        for r in &rows {
            let _ = writeln!(plot, "{},{},{}", float(r.coords[0]), float(r.coords[1]), r.iteration);
        }
        write_text(&args.plot.clone().unwrap_or_else(|| default_plot_path(&args.samples)), &plot)?;
    }
    print!("{}", report.render());
    Ok(())
}
