use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{check_dim, squared_l2, validate_coords, Point};
use crate::PointId;

/// Every explored point, in admission order. Ids are dense: the point with
/// id `i` sits at index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    collision_tolerance: f64,
    points: Vec<Point>,
    iteration: Vec<usize>,
    parent: Vec<Option<(PointId, f64)>>,
}

impl Dataset {
    pub fn new(dim: usize, collision_tolerance: f64) -> Self {
        Self { dim, collision_tolerance, points: Vec::new(), iteration: Vec::new(), parent: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn collision_tolerance(&self) -> f64 {
        self.collision_tolerance
    }

    /// Points tagged with their ids.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, id: PointId) -> Result<&Point> {
        self.points.get(id as usize).ok_or(Error::UnknownPointId(id))
    }

    pub fn coords(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.coords.clone()).collect()
    }

    /// Iteration that admitted `id` (0 = warm-up).
    pub fn iteration_of(&self, id: PointId) -> Option<usize> {
        self.iteration.get(id as usize).copied()
    }

    /// Peripheral point whose ball produced `id`, with its score at selection.
    pub fn parent_of(&self, id: PointId) -> Option<(PointId, f64)> {
        self.parent.get(id as usize).copied().flatten()
    }

    /// Ids admitted at `iteration`.
    pub fn ids_at(&self, iteration: usize) -> impl Iterator<Item = PointId> + '_ {
        self.iteration.iter().enumerate().filter(move |(_, &it)| it == iteration).map(|(i, _)| i as PointId)
    }

    /// True when some stored point lies strictly closer than the tolerance.
    pub fn collides(&self, coords: &[f64], exec: Execution) -> bool {
        collides_with(&self.points, coords, self.collision_tolerance, exec)
    }

    /// Admits a point unless it collides; returns its new id.
    pub fn admit(&mut self, coords: Vec<f64>, iteration: usize, parent: Option<(PointId, f64)>) -> Result<Option<PointId>> {
        check_dim(self.dim, coords.len())?;
        validate_coords(&coords)?;
        if self.collides(&coords, Execution::Sequential) {
            return Ok(None);
        }
        Ok(Some(self.push_unchecked(coords, iteration, parent)))
    }

    /// Admits without the collision scan; the caller has already checked.
    pub(crate) fn push_unchecked(&mut self, coords: Vec<f64>, iteration: usize, parent: Option<(PointId, f64)>) -> PointId {
        let id = self.points.len() as PointId;
        self.points.push(Point::with_id(coords, id));
        self.iteration.push(iteration);
        self.parent.push(parent);
        id
    }
}

pub(crate) fn collides_with(points: &[Point], coords: &[f64], tolerance: f64, exec: Execution) -> bool {
    if tolerance <= 0.0 {
        return false;
    }
    let tol2 = tolerance * tolerance;
    exec.any(points, |p| squared_l2(&p.coords, coords) < tol2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admission_enforces_spacing_and_dense_ids() {
        let mut d = Dataset::new(2, 0.1);
        assert_eq!(d.admit(vec![0.0, 0.0], 0, None).unwrap(), Some(0));
        assert_eq!(d.admit(vec![0.05, 0.0], 0, None).unwrap(), None);
        assert_eq!(d.admit(vec![0.1, 0.0], 1, Some((0, 3.5))).unwrap(), Some(1));
        assert_eq!(d.len(), 2);
        assert_eq!(d.point(1).unwrap().id, Some(1));
        assert_eq!(d.iteration_of(1), Some(1));
        assert_eq!(d.parent_of(1), Some((0, 3.5)));
        assert_eq!(d.parent_of(0), None);
        assert_eq!(d.ids_at(0).collect::<Vec<_>>(), vec![0]);
        assert!(d.admit(vec![1.0], 1, None).is_err());
    }

    #[test]
    fn zero_tolerance_allows_duplicates() {
        let mut d = Dataset::new(1, 0.0);
        d.admit(vec![1.0], 0, None).unwrap().unwrap();
        assert!(d.admit(vec![1.0], 0, None).unwrap().is_some());
    }
}
