//! Points, boxes, distances and the two sampling primitives (uniform box,
//! uniform L2 ball).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::PointId;

/// A coordinate vector in design space, optionally tagged with the id it
/// was given on dataset admission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<f64>,
    pub id: Option<PointId>,
}

impl Point {
    /// Untagged point. Panics are never raised here; use [`Point::validate`]
    /// to check finiteness.
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords, id: None }
    }

    pub fn with_id(coords: Vec<f64>, id: PointId) -> Self {
        Self { coords, id: Some(id) }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn validate(&self) -> Result<()> {
        validate_coords(&self.coords)
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Point::new(coords)
    }
}

pub(crate) fn validate_coords(coords: &[f64]) -> Result<()> {
    if coords.is_empty() {
        return Err(Error::EmptyInput);
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Axis-aligned box. `min[i] <= max[i]` for every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoundingBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch { expected: min.len(), found: max.len() });
        }
        if min.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (i, (lo, hi)) in min.iter().zip(&max).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBox(format!("non-finite bound in dimension {i}")));
            }
            if lo > hi {
                return Err(Error::InvalidBox(format!("min > max in dimension {i}")));
            }
        }
        Ok(Self { min, max })
    }

    /// Zero-volume box around a single coordinate vector.
    pub fn from_coords(coords: &[f64]) -> Self {
        Self { min: coords.to_vec(), max: coords.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Per-dimension range `max[i] - min[i]`.
    pub fn ranges(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| hi - lo).collect()
    }

    pub fn contains(&self, coords: &[f64]) -> bool {
        coords.len() == self.dim()
            && coords
                .iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(c, (lo, hi))| lo <= c && c <= hi)
    }

    pub fn extend(&mut self, coords: &[f64]) {
        for ((lo, hi), c) in self.min.iter_mut().zip(self.max.iter_mut()).zip(coords) {
            *lo = lo.min(*c);
            *hi = hi.max(*c);
        }
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            min: self.min.iter().zip(&other.min).map(|(a, b)| a.min(*b)).collect(),
            max: self.max.iter().zip(&other.max).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Componentwise clamp into the box.
    pub fn clamp(&self, coords: &mut [f64]) {
        for (c, (lo, hi)) in coords.iter_mut().zip(self.min.iter().zip(&self.max)) {
            *c = c.clamp(*lo, *hi);
        }
    }
}

/// Tight componentwise min/max box of a non-empty point set.
pub fn bounding_box<'a, I>(points: I) -> Result<BoundingBox>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = points.into_iter();
    let first = iter.next().ok_or(Error::EmptyInput)?;
    let mut bbox = BoundingBox::from_coords(first);
    for coords in iter {
        check_dim(bbox.dim(), coords.len())?;
        bbox.extend(coords);
    }
    Ok(bbox)
}

/// What to do with a hyperball draw that falls outside the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    #[default]
    Clip,
    Reject,
}

/// The legal design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBounds {
    pub bbox: BoundingBox,
    pub clip_mode: ClipMode,
}

impl DomainBounds {
    pub fn new(bbox: BoundingBox, clip_mode: ClipMode) -> Result<Self> {
        if let Some(i) = bbox.min.iter().zip(&bbox.max).position(|(lo, hi)| lo >= hi) {
            return Err(Error::InvalidBox(format!("domain has zero width in dimension {i}")));
        }
        Ok(Self { bbox, clip_mode })
    }

    pub fn unit_cube(dim: usize, clip_mode: ClipMode) -> Self {
        Self { bbox: BoundingBox { min: vec![0.0; dim], max: vec![1.0; dim] }, clip_mode }
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }
}

/// Order of a Minkowski distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    L(f64),
    Infinity,
}

impl Norm {
    pub const L1: Norm = Norm::L(1.0);
    pub const L2: Norm = Norm::L(2.0);
}

/// Minkowski distance between two coordinate vectors.
pub fn lp_distance(a: &[f64], b: &[f64], norm: Norm) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(match norm {
        Norm::Infinity => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        Norm::L(1.0) => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Norm::L(2.0) => l2_distance(a, b),
        Norm::L(p) => {
            assert!(p >= 1.0, "Minkowski order must be >= 1");
            a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(p.recip())
        }
    })
}

/// Euclidean distance; callers guarantee equal lengths.
#[inline]
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    squared_l2(a, b).sqrt()
}

#[inline]
pub(crate) fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Uniform draw from the L2 ball of radius `epsilon` around `center`:
/// Gaussian direction scaled by `epsilon * U^(1/m)`.
pub fn sample_in_hyperball<R: Rng + ?Sized>(center: &[f64], epsilon: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::NonPositiveEpsilon(epsilon));
    }
    validate_coords(center)?;
    let m = center.len();
    let mut dir: Vec<f64> = Vec::with_capacity(m);
    let norm = loop {
        dir.clear();
        dir.extend((0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if n > 0.0 {
            break n;
        }
    };
    let u: f64 = rng.random();
    let radius = epsilon * u.powf(1.0 / m as f64);
    let mut out: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c + radius * d / norm).collect();
    // Rounding can push a boundary draw a hair past epsilon.
    if l2_distance(center, &out) > epsilon {
        for (o, c) in out.iter_mut().zip(center) {
            *o = c + (*o - c) * (1.0 - f64::EPSILON);
        }
    }
    Ok(out)
}

/// Each coordinate i.i.d. uniform on `[min[i], max[i]]`.
pub fn sample_uniform_box<R: Rng + ?Sized>(bbox: &BoundingBox, rng: &mut R) -> Vec<f64> {
    bbox.min
        .iter()
        .zip(&bbox.max)
        .map(|(&lo, &hi)| if lo < hi { rng.random_range(lo..=hi) } else { lo })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn bb(points: &[&[f64]]) -> Result<BoundingBox> {
        bounding_box(points.iter().copied())
    }

    #[test]
    fn bounding_box_examples() {
        let b = bb(&[&[0.0, 0.0], &[1.0, 2.0], &[-1.0, 1.0]]).unwrap();
        assert_eq!(b.min, vec![-1.0, 0.0]);
        assert_eq!(b.max, vec![1.0, 2.0]);

        let b = bb(&[&[3.0, 3.0]]).unwrap();
        assert_eq!(b.min, b.max);

        let b = bb(&[&[0.0], &[10.0]]).unwrap();
        assert_eq!(b.ranges(), vec![10.0]);
    }

    #[test]
    fn bounding_box_errors() {
        assert_eq!(bb(&[]), Err(Error::EmptyInput));
        assert!(matches!(bb(&[&[0.0, 0.0], &[1.0]]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn lp_distance_examples() {
        assert_eq!(lp_distance(&[0.0, 0.0], &[3.0, 4.0], Norm::L2).unwrap(), 5.0);
        assert_eq!(lp_distance(&[0.0, 0.0], &[3.0, 4.0], Norm::L1).unwrap(), 7.0);
        assert_eq!(lp_distance(&[0.0, 0.0], &[3.0, 4.0], Norm::Infinity).unwrap(), 4.0);
        for norm in [Norm::L1, Norm::L2, Norm::L(3.0), Norm::Infinity] {
            assert_eq!(lp_distance(&[1.5, -2.0], &[1.5, -2.0], norm).unwrap(), 0.0);
        }
        assert!(lp_distance(&[0.0], &[0.0, 1.0], Norm::L2).is_err());
    }

    #[test]
    fn hyperball_rejects_bad_epsilon() {
        let mut rng = RngStream::new(0, 0).rng();
        assert_eq!(sample_in_hyperball(&[0.0], 0.0, &mut rng), Err(Error::NonPositiveEpsilon(0.0)));
        assert!(sample_in_hyperball(&[0.0], -1.0, &mut rng).is_err());
        assert!(sample_in_hyperball(&[0.0], f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn hyperball_unit_example() {
        let mut rng = RngStream::new(3, 0).rng();
        let q = sample_in_hyperball(&[0.0, 0.0], 1.0, &mut rng).unwrap();
        assert!(l2_distance(&q, &[0.0, 0.0]) <= 1.0);
    }

    #[test]
    fn uniform_box_examples() {
        let mut rng = RngStream::new(1, 0).rng();
        let unit = BoundingBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(unit.contains(&sample_uniform_box(&unit, &mut rng)));
        let degenerate = BoundingBox::new(vec![2.0, 2.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(sample_uniform_box(&degenerate, &mut rng), vec![2.0, 2.0]);
    }

    #[test]
    fn domain_requires_positive_width() {
        let flat = BoundingBox::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert!(DomainBounds::new(flat, ClipMode::Clip).is_err());
        assert!(BoundingBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn clamp_moves_inside() {
        let b = BoundingBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let mut c = vec![-0.5, 1.7];
        b.clamp(&mut c);
        assert_eq!(c, vec![0.0, 1.0]);
    }
}
