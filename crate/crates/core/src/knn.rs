//! Exact Euclidean k-nearest-neighbour queries.
//!
//! A ball tree answers most queries; when the k-th and (k+1)-th candidates are tied
//! the query is resolved by a linear scan so that ties always go to the lower index.

use std::fmt;
use std::sync::Arc;

use ndarray::{aview1, Array2};
use petal_neighbors::{distance::Euclidean, BallTree};

use crate::error::{Error, Result};
use crate::graph::PointSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

/// Linear-scan reference: the `k` nearest rows of `points` to `p`, skipping `exclude`.
pub fn brute_force_nearest(
    points: &PointSet,
    p: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .rows()
        .enumerate()
        .filter(|&(i, _)| Some(i) != exclude)
        .map(|(i, row)| Neighbor {
            index: i,
            distance: euclidean(p, row),
        })
        .collect();
    all.sort_by(by_distance_then_index);
    all.truncate(k);
    all
}

/// Spatial index over a fixed point set.
#[derive(Clone)]
pub struct PointIndex {
    points: PointSet,
    tree: Arc<BallTree<'static, f64, Euclidean>>,
}

impl fmt::Debug for PointIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointIndex")
            .field("len", &self.points.len())
            .field("dim", &self.points.dim())
            .finish()
    }
}

impl PointIndex {
    pub fn new(points: &PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("cannot index an empty point set".into()));
        }
        let array = Array2::from_shape_vec((points.len(), points.dim()), points.as_slice().to_vec())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let tree = BallTree::euclidean(array).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(PointIndex {
            points: points.clone(),
            tree: Arc::new(tree),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest indexed points to `p` (excluding `exclude`), sorted by
    /// distance with ties broken by index.
    pub fn nearest(&self, p: &[f64], k: usize, exclude: Option<usize>) -> Result<Vec<Neighbor>> {
        if p.len() != self.points.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.points.dim(),
                got: p.len(),
            });
        }
        let available = self.len() - usize::from(exclude.is_some_and(|e| e < self.len()));
        let k = k.min(available);
        if k == 0 {
            return Ok(Vec::new());
        }
        // one spare for the excluded point, one to detect a tie at the boundary
        let fetch = (k + 2).min(self.len());
        let (ids, _) = self.tree.query(&aview1(p), fetch);
        let mut found: Vec<Neighbor> = ids
            .into_iter()
            .filter(|&i| Some(i) != exclude)
            .map(|i| Neighbor {
                index: i,
                distance: euclidean(p, self.points.row(i)),
            })
            .collect();
        found.sort_by(by_distance_then_index);
        if found.len() < k {
            return Ok(brute_force_nearest(&self.points, p, k, exclude));
        }
        if found.len() > k {
            let edge = found[k - 1].distance;
            let next = found[k].distance;
            if next - edge <= 1e-12 * edge.max(1e-300) {
                return Ok(brute_force_nearest(&self.points, p, k, exclude));
            }
        } else if fetch < self.len() {
            return Ok(brute_force_nearest(&self.points, p, k, exclude));
        }
        found.truncate(k);
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_linear_scan_on_random_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let points = PointSet::from_rows(&rows).unwrap();
        let index = PointIndex::new(&points).unwrap();
        for i in (0..300).step_by(17) {
            let fast = index.nearest(points.row(i), 10, Some(i)).unwrap();
            let slow = brute_force_nearest(&points, points.row(i), 10, Some(i));
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn ties_go_to_lower_index() {
        // a lattice produces many exactly equal distances
        let rows: Vec<Vec<f64>> = (0..6)
            .flat_map(|x| (0..6).map(move |y| vec![x as f64, y as f64]))
            .collect();
        let points = PointSet::from_rows(&rows).unwrap();
        let index = PointIndex::new(&points).unwrap();
        for i in 0..points.len() {
            for k in [1, 3, 4, 7] {
                assert_eq!(
                    index.nearest(points.row(i), k, Some(i)).unwrap(),
                    brute_force_nearest(&points, points.row(i), k, Some(i))
                );
            }
        }
    }

    #[test]
    fn k_clamped_to_available() {
        let points = PointSet::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let index = PointIndex::new(&points).unwrap();
        let all = index.nearest(&[0.0], 10, Some(0)).unwrap();
        assert_eq!(all.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1, 2]);
    }
}
