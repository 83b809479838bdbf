#![allow(dead_code)]

use cutexplore::rrct::NodeRecord;
use cutexplore::{Point, RngStream};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_cluster(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = RngStream::new(seed, 999).rng();
    (0..n)
        .map(|i| Point::with_id(vec![rng.sample(StandardNormal), rng.sample(StandardNormal)], i as u64))
        .collect()
}

pub fn uniform_points(n: usize, dim: usize, seed: u64) -> Vec<Point> {
    let mut rng = RngStream::new(seed, 555).rng();
    (0..n).map(|i| Point::with_id((0..dim).map(|_| rng.random::<f64>()).collect(), i as u64)).collect()
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch z statistic for two independent samples.
pub fn welch_z(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let se = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (ma - mb) / se
    }
}

/// Average ranks (1-based), ties share the mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, _) = mean_var(&ra);
    let (mb, _) = mean_var(&rb);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let sa: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum::<f64>().sqrt();
    let sb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum::<f64>().sqrt();
    cov / (sa * sb)
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Model complexity recounted breadth-first over the serialized tree.
pub fn bfs_complexity(root: Option<&NodeRecord>) -> u64 {
    let mut total = 0;
    let mut queue = std::collections::VecDeque::new();
    if let Some(r) = root {
        queue.push_back((r, 0u64));
    }
    while let Some((node, depth)) = queue.pop_front() {
        match node {
            NodeRecord::Branch { left, right, .. } => {
                queue.push_back((left, depth + 1));
                queue.push_back((right, depth + 1));
            }
            NodeRecord::Leaf { multiplicity, .. } => total += depth * multiplicity,
        }
    }
    total
}
