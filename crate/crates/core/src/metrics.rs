//! Spacing and coverage measures over explored point sets. All distances
//! here are L2 and computed by exhaustive scan.

use std::collections::HashSet;

use crate::exec::Execution;
use crate::geometry::{squared_l2, BoundingBox};

/// Distance from each point to its nearest other point; `None` when the set
/// holds a single point. Sweeps outward from each point along the first
/// coordinate, stopping once that gap alone exceeds the best distance.
pub fn nearest_neighbor_distances(points: &[Vec<f64>], exec: Execution) -> Vec<Option<f64>> {
    let n = points.len();
    if n < 2 {
        return vec![None; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    let mut position = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        position[i] = k;
    }
    exec.map_range(n, |i| {
        let (p, k) = (&points[i], position[i]);
        let mut best = f64::INFINITY;
        let mut scan = |j: usize| {
            let gap = points[j][0] - p[0];
            if gap * gap > best {
                return false;
            }
            best = best.min(squared_l2(p, &points[j]));
            true
        };
        for &j in &order[k + 1..] {
            if !scan(j) {
                break;
            }
        }
        for &j in order[..k].iter().rev() {
            if !scan(j) {
                break;
            }
        }
        Some(best.sqrt())
    })
}

/// Smallest pairwise distance, `None` below two points.
pub fn min_pairwise_distance(points: &[Vec<f64>], exec: Execution) -> Option<f64> {
    nearest_neighbor_distances(points, exec).into_iter().flatten().min_by(f64::total_cmp)
}

/// Distance from each of `new` to its nearest point in `reference`.
pub fn separation(new: &[Vec<f64>], reference: &[Vec<f64>], exec: Execution) -> Vec<f64> {
    exec.map_slice(new, |p| {
        reference
            .iter()
            .map(|q| squared_l2(p, q))
            .min_by(f64::total_cmp)
            .map_or(f64::INFINITY, f64::sqrt)
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Grid resolution used for coverage: 32 bins per axis in 2-D, 8 otherwise.
pub fn default_bins(dim: usize) -> usize {
    if dim == 2 {
        32
    } else {
        8
    }
}

/// Number of occupied cells of a `bins`-per-axis grid laid over `bbox`.
/// Points outside the box are clamped into the border cells.
pub fn occupied_cells<I, P>(points: I, bbox: &BoundingBox, bins: usize) -> usize
where
    I: IntoIterator<Item = P>,
    P: AsRef<[f64]>,
{
    let cell = |c: f64, lo: f64, hi: f64| {
        let width = hi - lo;
        if width <= 0.0 {
            return 0;
        }
        let cell = ((c - lo) / width * bins as f64).floor();
        (cell.max(0.0) as usize).min(bins - 1)
    };
    let axes = || bbox.min.iter().copied().zip(bbox.max.iter().copied());
    // Flat mixed-radix index when the grid fits, a per-point key otherwise.
    let fits = (bins as u128).checked_pow(bbox.dim() as u32).is_some();
    if fits {
        let cells: HashSet<u128> = points
            .into_iter()
            .map(|p| p.as_ref().iter().zip(axes()).fold(0u128, |acc, (&c, (lo, hi))| acc * bins as u128 + cell(c, lo, hi) as u128))
            .collect();
        cells.len()
    } else {
        let cells: HashSet<Vec<usize>> =
            points.into_iter().map(|p| p.as_ref().iter().zip(axes()).map(|(&c, (lo, hi))| cell(c, lo, hi)).collect()).collect();
        cells.len()
    }
}

/// Fraction of occupied cells.
pub fn grid_coverage(points: &[Vec<f64>], bbox: &BoundingBox, bins: usize) -> f64 {
    let total = (bins as f64).powi(bbox.dim() as i32);
    occupied_cells(points, bbox, bins) as f64 / total
}
