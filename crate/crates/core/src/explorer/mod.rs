//! The exploration loop.
//!
//! 1. Warm-up: draw `warmup_size` uniform points and train the forest.
//! 2. Score every dataset point and take the `batch_size` highest scorers as
//!    the peripheral set.
//! 3. Draw one sample from the `epsilon` ball around each peripheral point,
//!    clipping or rejecting out-of-domain draws and redrawing collisions.
//! 4. Admit the survivors, refresh the forest, repeat.

mod config;
mod dataset;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use config::{ExplorerConfig, StoppingRule, UpdateMode};
pub use dataset::Dataset;

use crate::error::{Error, Result};
use crate::forest::{Forest, ScoredPoint};
use crate::geometry::{sample_in_hyperball, sample_uniform_box, squared_l2, ClipMode};
use crate::rng::{RngStream, StreamRng};
use crate::PointId;

/// Redraws allowed per point before giving up.
pub const MAX_RETRIES: usize = 100;

const WARMUP_STREAM: u64 = 1;
const FOREST_STREAM: u64 = 2;
const EXPAND_STREAM: u64 = 3;
const TIE_STREAM: u64 = 4;

/// Optional objective evaluated at every admitted point. Values are logged in
/// the iteration record and never influence sampling.
pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A point admitted during one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewPoint {
    pub id: PointId,
    pub coords: Vec<f64>,
    pub parent_id: PointId,
    pub parent_score: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// The peripheral set with the scores that selected it.
    pub peripheral: Vec<ScoredPoint>,
    pub new_points: Vec<NewPoint>,
    /// Balls that produced no admissible sample.
    pub dropped: usize,
    /// Draws discarded for collisions or (in reject mode) leaving the domain.
    pub redraws: usize,
    pub num_trees: usize,
    pub mean_complexity: f64,
    pub elapsed: Duration,
}

impl IterationRecord {
    pub fn peripheral_ids(&self) -> Vec<PointId> {
        self.peripheral.iter().map(|s| s.point_id).collect()
    }
}

/// A candidate produced by [`expand`].
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub coords: Vec<f64>,
    pub parent_id: PointId,
    pub parent_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expansion {
    pub candidates: Vec<Candidate>,
    pub dropped: usize,
    pub redraws: usize,
}

/// Receives records as the loop produces them.
pub trait RecordSink {
    fn on_warm_up(&mut self, _dataset: &Dataset) {}
    fn on_iteration(&mut self, _dataset: &Dataset, _record: &IterationRecord) {}
}

impl RecordSink for () {}

/// Draws the warm-up dataset and trains a forest on it.
pub fn warm_up(config: &ExplorerConfig) -> Result<(Dataset, Forest)> {
    let (dataset, _) = draw_warm_up(config)?;
    let root = RngStream::new(config.seed, 0);
    let forest = Forest::train(dataset.points(), config.forest_config(), root.substream(FOREST_STREAM))?;
    Ok((dataset, forest))
}

/// Warm-up points only, with the number of draws rejected for collisions.
pub fn draw_warm_up(config: &ExplorerConfig) -> Result<(Dataset, usize)> {
    config.validate()?;
    let mut rng = RngStream::new(config.seed, 0).substream(WARMUP_STREAM).rng();
    let region = config.warmup_box();
    let mut dataset = Dataset::new(config.dim(), config.collision_tolerance);
    let mut rejected = 0;
    for _ in 0..config.warmup_size {
        let mut placed = false;
        for _ in 0..=MAX_RETRIES {
            let coords = sample_uniform_box(region, &mut rng);
            if !dataset.collides(&coords, config.execution) {
                dataset.push_unchecked(coords, 0, None);
                placed = true;
                break;
            }
            rejected += 1;
        }
        if !placed {
            return Err(Error::CollisionExhausted { retries: MAX_RETRIES });
        }
    }
    Ok((dataset, rejected))
}

/// The `k` dataset points with the largest mean displacement.
pub fn select_peripheral(forest: &Forest, dataset: &Dataset, k: usize) -> Result<Vec<ScoredPoint>> {
    if k > dataset.len() {
        return Err(Error::KTooLarge { k, n: dataset.len() });
    }
    let scored = forest.score_members(dataset.points())?;
    // Exact ties (common in small or symmetric sets) go to a seeded hash of
    // the id rather than to the lowest id.
    let ties = forest.stream().substream(TIE_STREAM);
    let mut keyed: Vec<(u64, ScoredPoint)> =
        scored.into_iter().map(|s| (ties.substream(s.point_id).rng().next_u64(), s)).collect();
    keyed.sort_by(|(ka, a), (kb, b)| b.score.total_cmp(&a.score).then(ka.cmp(kb)));
    // Collected into a fresh vector: an in-place collect would keep the
    // whole n-sized buffer alive in every iteration record.
    let mut top = Vec::with_capacity(k);
    top.extend(keyed.into_iter().take(k).enumerate().map(|(rank, (_, s))| ScoredPoint { rank, ..s }));
    Ok(top)
}

/// One sample per peripheral ball. Ball `j` draws from `stream.substream(j)`.
pub fn expand(peripheral: &[ScoredPoint], dataset: &Dataset, config: &ExplorerConfig, stream: RngStream) -> Result<Expansion> {
    if peripheral.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut centers = Vec::with_capacity(peripheral.len());
    for sp in peripheral {
        centers.push(dataset.point(sp.point_id)?.coords.as_slice());
    }

    // Draw (clipped) attempts from one ball until one lands inside the domain
    // and clear of the dataset; `budget` counts remaining attempts.
    let next_clear = |center: &[f64], rng: &mut StreamRng, budget: &mut usize, redraws: &mut usize| -> Option<Vec<f64>> {
        while *budget > 0 {
            *budget -= 1;
            let mut q = sample_in_hyperball(center, config.epsilon, rng).expect("epsilon validated");
            if !config.bounds.bbox.contains(&q) {
                match config.bounds.clip_mode {
                    ClipMode::Clip => config.bounds.bbox.clamp(&mut q),
                    ClipMode::Reject => {
                        *redraws += 1;
                        continue;
                    }
                }
            }
            if dataset.collides(&q, crate::Execution::Sequential) {
                *redraws += 1;
                continue;
            }
            return Some(q);
        }
        None
    };

    // Balls are independent until they have to be checked against each
    // other, so the first clear draw of every ball is found in parallel.
    let first = config.execution.map_range(centers.len(), |j| {
        let mut rng = stream.substream(j as u64).rng();
        let mut budget = MAX_RETRIES + 1;
        let mut redraws = 0;
        let q = next_clear(centers[j], &mut rng, &mut budget, &mut redraws);
        (q, rng, budget, redraws)
    });

    let tol2 = config.collision_tolerance * config.collision_tolerance;
    let mut out = Expansion::default();
    for (j, (mut q, mut rng, mut budget, redraws)) in first.into_iter().enumerate() {
        out.redraws += redraws;
        while let Some(c) = q.take() {
            let clash = config.collision_tolerance > 0.0
                && out.candidates.iter().any(|other| squared_l2(&other.coords, &c) < tol2);
            if !clash {
                q = Some(c);
                break;
            }
            out.redraws += 1;
            let mut more = 0;
            q = next_clear(centers[j], &mut rng, &mut budget, &mut more);
            out.redraws += more;
        }
        match q {
            Some(coords) => out.candidates.push(Candidate {
                coords,
                parent_id: peripheral[j].point_id,
                parent_score: peripheral[j].score,
            }),
            None => out.dropped += 1,
        }
    }
    Ok(out)
}

/// Exploration state: the dataset, the forest over it and the iteration
/// counter.
#[derive(Clone)]
pub struct Explorer {
    config: ExplorerConfig,
    dataset: Dataset,
    forest: Forest,
    iteration: usize,
    evaluator: Option<Evaluator>,
}

impl std::fmt::Debug for Explorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Explorer")
            .field("config", &self.config)
            .field("points", &self.dataset.len())
            .field("iteration", &self.iteration)
            .finish()
    }
}

impl Explorer {
    pub fn warm_up(config: ExplorerConfig) -> Result<Self> {
        let (dataset, forest) = warm_up(&config)?;
        Ok(Self { config, dataset, forest, iteration: 0, evaluator: None })
    }

    pub fn with_evaluator(mut self, evaluator: Evaluator) -> Self {
        self.evaluator = Some(evaluator);
        self
    }

    pub fn config(&self) -> &ExplorerConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Changes the ball radius for subsequent steps.
    pub fn set_epsilon(&mut self, epsilon: f64) -> Result<()> {
        let mut config = self.config.clone();
        config.epsilon = epsilon;
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn select_peripheral(&self, k: usize) -> Result<Vec<ScoredPoint>> {
        select_peripheral(&self.forest, &self.dataset, k)
    }

    fn expand_stream(&self, iteration: usize) -> RngStream {
        RngStream::new(self.config.seed, 0).substream(EXPAND_STREAM).substream(iteration as u64)
    }

    /// Peripheral selection, expansion, admission and forest refresh.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let started = Instant::now();
        let iteration = self.iteration + 1;
        let peripheral = self.select_peripheral(self.config.batch_size)?;
        let expansion = expand(&peripheral, &self.dataset, &self.config, self.expand_stream(iteration))?;

        let mut new_points = Vec::with_capacity(expansion.candidates.len());
        for c in expansion.candidates {
            let id = self.dataset.push_unchecked(c.coords.clone(), iteration, Some((c.parent_id, c.parent_score)));
            let value = self.evaluator.as_ref().map(|f| f(&c.coords));
            new_points.push(NewPoint { id, coords: c.coords, parent_id: c.parent_id, parent_score: c.parent_score, value });
        }

        match self.config.update_mode {
            UpdateMode::Streaming => {
                let added: Vec<_> = new_points.iter().map(|p| self.dataset.points()[p.id as usize].clone()).collect();
                self.forest.update(&added)?;
            }
            UpdateMode::Retrain => {
                let stream = RngStream::new(self.config.seed, 0).substream(FOREST_STREAM).substream(iteration as u64);
                self.forest = self.forest.retrain(self.dataset.points(), stream)?;
            }
        }
        self.iteration = iteration;

        Ok(IterationRecord {
            iteration,
            peripheral,
            new_points,
            dropped: expansion.dropped,
            redraws: expansion.redraws,
            num_trees: self.forest.num_trees(),
            mean_complexity: self.forest.mean_complexity(),
            elapsed: started.elapsed(),
        })
    }

    /// Steps until `max_iterations` or a stopping rule fires.
    pub fn run_with(&mut self, stop: StoppingRule, sink: &mut dyn RecordSink) -> Result<Vec<IterationRecord>> {
        let started = Instant::now();
        let mut records = Vec::new();
        while self.iteration < self.config.max_iterations {
            if stop.max_points.is_some_and(|m| self.dataset.len() >= m) {
                break;
            }
            if stop.wall_clock.is_some_and(|w| started.elapsed() >= w) {
                break;
            }
            let record = self.step()?;
            sink.on_iteration(&self.dataset, &record);
            records.push(record);
        }
        Ok(records)
    }

    pub fn into_dataset(self) -> Dataset {
        self.dataset
    }
}

/// Warm-up followed by [`Explorer::run_with`].
pub fn run(config: ExplorerConfig, stop: StoppingRule, sink: &mut dyn RecordSink) -> Result<(Dataset, Vec<IterationRecord>)> {
    let mut explorer = Explorer::warm_up(config)?;
    sink.on_warm_up(explorer.dataset());
    let records = explorer.run_with(stop, sink)?;
    Ok((explorer.into_dataset(), records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{l2_distance, BoundingBox, DomainBounds};

    fn small(seed: u64) -> ExplorerConfig {
        ExplorerConfig { warmup_size: 2, batch_size: 1, num_trees: 10, max_iterations: 3, seed, ..ExplorerConfig::unit_cube(2) }
    }

    #[test]
    fn two_point_warm_up() {
        let (d, f) = warm_up(&small(1)).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.points().iter().all(|p| (0..2).all(|i| (0.0..=1.0).contains(&p.coords[i]))));
        assert!(f.trees().all(|t| t.root_cut().is_some() && t.model_complexity() == 2));
    }

    #[test]
    fn warm_up_is_deterministic() {
        let cfg = ExplorerConfig { warmup_size: 30, ..small(5) };
        let (d1, f1) = warm_up(&cfg).unwrap();
        let (d2, f2) = warm_up(&cfg).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(f1.to_json(), f2.to_json());
    }

    #[test]
    fn warm_up_collision_exhausted() {
        let cfg = ExplorerConfig {
            warmup_size: 5,
            batch_size: 1,
            epsilon: 10.0,
            collision_tolerance: 5.0,
            ..ExplorerConfig::unit_cube(2)
        };
        assert_eq!(warm_up(&cfg).unwrap_err(), Error::CollisionExhausted { retries: MAX_RETRIES });
    }

    #[test]
    fn select_peripheral_k_checks() {
        let cfg = ExplorerConfig { warmup_size: 6, ..small(2) };
        let (d, f) = warm_up(&cfg).unwrap();
        assert_eq!(select_peripheral(&f, &d, 7).unwrap_err(), Error::KTooLarge { k: 7, n: 6 });
        let all = select_peripheral(&f, &d, 6).unwrap();
        assert_eq!(all.len(), 6);
        assert!(all.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn expand_single_ball() {
        let cfg = ExplorerConfig {
            epsilon: 1.0,
            bounds: DomainBounds::new(BoundingBox::new(vec![-10.0; 2], vec![10.0; 2]).unwrap(), ClipMode::Clip).unwrap(),
            ..small(0)
        };
        let mut d = Dataset::new(2, cfg.collision_tolerance);
        d.admit(vec![0.0, 0.0], 0, None).unwrap();
        let p = [ScoredPoint { point_id: 0, score: 1.0, rank: 0 }];
        let e = expand(&p, &d, &cfg, RngStream::new(1, 1)).unwrap();
        assert_eq!(e.candidates.len(), 1);
        assert!(l2_distance(&e.candidates[0].coords, &[0.0, 0.0]) <= 1.0);
        assert_eq!(e.candidates[0].parent_id, 0);
        assert_eq!(expand(&[], &d, &cfg, RngStream::new(1, 1)).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn expand_clips_at_corner() {
        let cfg = ExplorerConfig { epsilon: 0.5, ..small(0) };
        let mut d = Dataset::new(2, cfg.collision_tolerance);
        d.admit(vec![1.0, 1.0], 0, None).unwrap();
        let p = [ScoredPoint { point_id: 0, score: 1.0, rank: 0 }];
        for s in 0..50 {
            let e = expand(&p, &d, &cfg, RngStream::new(s, 0)).unwrap();
            let c = &e.candidates[0].coords;
            assert!(cfg.bounds.bbox.contains(c));
            assert!(l2_distance(c, &[1.0, 1.0]) <= 0.5);
        }
    }

    #[test]
    fn expand_reject_mode_stays_inside_or_drops() {
        let mut cfg = ExplorerConfig { epsilon: 0.5, ..small(0) };
        cfg.bounds.clip_mode = ClipMode::Reject;
        let mut d = Dataset::new(2, cfg.collision_tolerance);
        d.admit(vec![1.0, 1.0], 0, None).unwrap();
        let p = [ScoredPoint { point_id: 0, score: 1.0, rank: 0 }];
        let mut redraws = 0;
        for s in 0..50 {
            let e = expand(&p, &d, &cfg, RngStream::new(s, 0)).unwrap();
            redraws += e.redraws;
            assert_eq!(e.candidates.len() + e.dropped, 1);
            assert!(e.candidates.iter().all(|c| cfg.bounds.bbox.contains(&c.coords)));
        }
        // A corner ball lies three quarters outside the domain.
        assert!(redraws > 50);
    }

    #[test]
    fn expand_drops_when_every_draw_collides() {
        // The tolerance covers the whole ball, so nothing can be admitted.
        let cfg = ExplorerConfig { epsilon: 0.1, collision_tolerance: 0.099, ..small(0) };
        let mut d = Dataset::new(2, cfg.collision_tolerance);
        d.admit(vec![0.5, 0.5], 0, None).unwrap();
        let mut hits = 0;
        for s in 0..20 {
            let e = expand(&[ScoredPoint { point_id: 0, score: 0.0, rank: 0 }], &d, &cfg, RngStream::new(s, 0)).unwrap();
            hits += e.candidates.len();
            if e.candidates.is_empty() {
                assert_eq!(e.dropped, 1);
                assert_eq!(e.redraws, MAX_RETRIES + 1);
            }
        }
        // Roughly 2% of the ball area is admissible; 101 draws usually find it.
        assert!(hits > 0);
    }

    #[test]
    fn expand_matches_sequential() {
        let cfg = ExplorerConfig { warmup_size: 40, batch_size: 20, epsilon: 0.2, collision_tolerance: 0.05, ..small(3) };
        let (d, f) = warm_up(&cfg).unwrap();
        let p = select_peripheral(&f, &d, 20).unwrap();
        let seq_cfg = ExplorerConfig { execution: crate::Execution::Sequential, ..cfg.clone() };
        let a = expand(&p, &d, &cfg, RngStream::new(4, 4)).unwrap();
        let b = expand(&p, &d, &seq_cfg, RngStream::new(4, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_bookkeeping() {
        let mut ex = Explorer::warm_up(small(9)).unwrap();
        let r = ex.step().unwrap();
        assert_eq!(r.iteration, 1);
        assert_eq!(r.peripheral.len(), 1);
        // Records are kept for the whole run; they must not pin n-sized buffers.
        assert_eq!(r.peripheral.capacity(), 1);
        assert_eq!(ex.dataset().len(), 2 + r.new_points.len());
        assert_eq!(r.new_points.len() + r.dropped, 1);
        for (i, p) in ex.dataset().points().iter().enumerate() {
            assert_eq!(p.id, Some(i as u64));
        }
        assert!(ex.forest().trees().all(|t| t.len() == ex.dataset().len()));
    }

    #[test]
    fn retrain_mode_rebuilds() {
        let cfg = ExplorerConfig { update_mode: UpdateMode::Retrain, warmup_size: 10, batch_size: 5, ..small(4) };
        let mut ex = Explorer::warm_up(cfg).unwrap();
        ex.step().unwrap();
        assert!(ex.forest().trees().all(|t| t.len() == ex.dataset().len() && t.check_invariants().is_ok()));
    }

    #[test]
    fn zero_iterations_is_warm_up_only() {
        let cfg = ExplorerConfig { max_iterations: 0, ..small(1) };
        let (d, records) = run(cfg, StoppingRule::default(), &mut ()).unwrap();
        assert_eq!(d.len(), 2);
        assert!(records.is_empty());
    }

    #[test]
    fn point_budget_stops_early() {
        let cfg = ExplorerConfig { warmup_size: 10, batch_size: 5, max_iterations: 100, ..small(1) };
        let (d, records) = run(cfg, StoppingRule { max_points: Some(20), wall_clock: None }, &mut ()).unwrap();
        assert!(d.len() >= 20 && d.len() <= 25);
        assert!(records.len() < 100);
    }

    #[test]
    fn evaluator_values_are_logged() {
        let mut ex = Explorer::warm_up(ExplorerConfig { warmup_size: 5, batch_size: 3, ..small(2) })
            .unwrap()
            .with_evaluator(Arc::new(|x: &[f64]| x.iter().sum()));
        let r = ex.step().unwrap();
        for p in &r.new_points {
            assert_eq!(p.value, Some(p.coords.iter().sum()));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ExplorerConfig { warmup_size: 10, batch_size: 4, max_iterations: 5, ..small(77) };
        let (a, _) = run(cfg.clone(), StoppingRule::default(), &mut ()).unwrap();
        let (b, _) = run(cfg, StoppingRule::default(), &mut ()).unwrap();
        assert_eq!(a, b);
    }
}
