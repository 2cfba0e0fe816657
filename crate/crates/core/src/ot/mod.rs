//! Optimal-transport baselines: exact assignment EMD, entropic Sinkhorn,
//! barycentric projection, affine map estimation, and the subsample-based
//! color conversion built on them.
//!
//! The ground cost is squared Euclidean distance throughout, and point sets
//! carry uniform weights.

mod color;
mod emd;
mod linmap;
mod sinkhorn;

pub use color::{color_convert, ColorMap, DEFAULT_COLOR_SAMPLES, MAX_COLOR_SAMPLES};
pub use emd::emd;
pub use linmap::{linear_map_estimate, AffineMap};
pub use sinkhorn::{sinkhorn, sinkhorn_divergence};

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::{Error, Result};

/// Feasibility slack allowed on the marginals of a stored plan.
const MARGINAL_SLACK: f64 = 1e-8;

/// A coupling between two weighted point sets, with its transport cost
/// `<coupling, cost-matrix>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    n: usize,
    m: usize,
    /// Row-major `n x m`, nonnegative, rows summing to `source_weights`
    /// and columns to `target_weights`.
    coupling: Vec<f64>,
    source_weights: Vec<f64>,
    target_weights: Vec<f64>,
    cost: f64,
}

impl TransportPlan {
    /// Builds a plan, computing its cost against `cost_matrix` and checking
    /// feasibility: nonnegative entries, row sums equal to the source
    /// weights and column sums to the target weights within 1e-8.
    pub fn new(
        coupling: Vec<f64>,
        cost_matrix: &[f64],
        source_weights: Vec<f64>,
        target_weights: Vec<f64>,
    ) -> Result<Self> {
        let (n, m) = (source_weights.len(), target_weights.len());
        if coupling.len() != n * m || cost_matrix.len() != n * m {
            return Err(Error::Shape(format!(
                "coupling and cost matrix must both be {n}x{m}"
            )));
        }
        let cost = coupling
            .iter()
            .zip(cost_matrix)
            .map(|(p, c)| p * c)
            .sum::<f64>();
        let plan = Self { n, m, coupling, source_weights, target_weights, cost };
        plan.check_feasible()?;
        Ok(plan)
    }

    fn check_feasible(&self) -> Result<()> {
        if self.coupling.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Degenerate("coupling has negative or non-finite entries".into()));
        }
        if !(self.cost >= 0.0) {
            return Err(Error::Degenerate(format!("negative transport cost {}", self.cost)));
        }
        let mut col = vec![0.0; self.m];
        for (i, row) in self.coupling.chunks_exact(self.m).enumerate() {
            let rsum: f64 = row.iter().sum();
            if (rsum - self.source_weights[i]).abs() > MARGINAL_SLACK {
                return Err(Error::Degenerate(format!(
                    "row {i} sums to {rsum}, expected {}",
                    self.source_weights[i]
                )));
            }
            for (c, p) in col.iter_mut().zip(row) {
                *c += p;
            }
        }
        for (j, (&c, &b)) in col.iter().zip(&self.target_weights).enumerate() {
            if (c - b).abs() > MARGINAL_SLACK {
                return Err(Error::Degenerate(format!(
                    "column {j} sums to {c}, expected {b}"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Row-major `n x m` coupling entries.
    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.m + j]
    }

    pub fn source_weights(&self) -> &[f64] {
        &self.source_weights
    }

    pub fn target_weights(&self) -> &[f64] {
        &self.target_weights
    }

    /// Transport cost `<coupling, cost-matrix>`.
    pub fn cost(&self) -> f64 {
        self.cost
    }
}

/// Uniform probability weights over `n` points.
pub(crate) fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Row-major `n x m` matrix of squared Euclidean distances.
pub(crate) fn squared_cost_matrix(source: &PointCloud, target: &PointCloud) -> Result<Vec<f64>> {
    if source.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "source has dim {}, target has dim {}",
            source.dim(),
            target.dim()
        )));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::Degenerate("transport needs non-empty clouds".into()));
    }
    let d = source.dim();
    let mut cost = Vec::with_capacity(source.n() * target.n());
    for p in source.coords().chunks_exact(d) {
        for q in target.coords().chunks_exact(d) {
            cost.push(p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum());
        }
    }
    Ok(cost)
}

/// Maps each source point to the coupling-weighted mean of its targets:
/// `i -> sum_j coupling[i][j] * target_j / source_weights[i]`.
/// Tags come from the source cloud.
pub fn barycentric_map(
    plan: &TransportPlan,
    source: &PointCloud,
    target: &PointCloud,
) -> Result<PointCloud> {
    if plan.n() != source.n() || plan.m() != target.n() {
        return Err(Error::Shape(format!(
            "plan is {}x{}, clouds are {}x{}",
            plan.n(),
            plan.m(),
            source.n(),
            target.n()
        )));
    }
    let d = target.dim();
    let mut coords = vec![0.0; source.n() * d];
    for (i, row) in plan.coupling().chunks_exact(plan.m()).enumerate() {
        let w = plan.source_weights()[i];
        if w <= 0.0 {
            return Err(Error::Degenerate(format!("source point {i} has zero weight")));
        }
        let out = &mut coords[i * d..(i + 1) * d];
        for (j, &p) in row.iter().enumerate() {
            if p != 0.0 {
                for (o, q) in out.iter_mut().zip(target.point(j)) {
                    *o += p * q;
                }
            }
        }
        for o in out.iter_mut() {
            *o /= w;
        }
    }
    PointCloud::new(d, coords, source.tags().to_vec())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_validation_accepts_exact_and_rejects_sloppy() {
        // 2x2 identity coupling with uniform weights.
        let cost = vec![0.0, 1.0, 1.0, 0.0];
        let plan = TransportPlan::new(
            vec![0.5, 0.0, 0.0, 0.5],
            &cost,
            uniform_weights(2),
            uniform_weights(2),
        )
        .unwrap();
        assert_eq!(plan.cost(), 0.0);
        assert_eq!(plan.entry(0, 0), 0.5);

        assert!(matches!(
            TransportPlan::new(
                vec![0.6, 0.0, 0.0, 0.5],
                &cost,
                uniform_weights(2),
                uniform_weights(2),
            ),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            TransportPlan::new(
                vec![0.5, -0.1, 0.1, 0.5],
                &cost,
                uniform_weights(2),
                uniform_weights(2),
            ),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn cost_matrix_by_hand() {
        let a = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = PointCloud::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        let c = squared_cost_matrix(&a, &b).unwrap();
        assert_eq!(c, vec![1.0, 4.0, 2.0, 1.0]);
    }

    #[test]
    fn barycentric_permutation_reindexes_targets() {
        let source = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let target = PointCloud::from_rows(&[vec![5.0, 5.0], vec![7.0, 9.0]]).unwrap();
        let cost = squared_cost_matrix(&source, &target).unwrap();
        // Anti-diagonal permutation: 0 -> 1, 1 -> 0.
        let plan = TransportPlan::new(
            vec![0.0, 0.5, 0.5, 0.0],
            &cost,
            uniform_weights(2),
            uniform_weights(2),
        )
        .unwrap();
        let mapped = barycentric_map(&plan, &source, &target).unwrap();
        assert_eq!(mapped.point(0), &[7.0, 9.0]);
        assert_eq!(mapped.point(1), &[5.0, 5.0]);
        assert_eq!(mapped.tags(), source.tags());
    }

    #[test]
    fn barycentric_uniform_plan_maps_to_target_mean() {
        let source = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let target = PointCloud::from_rows(&[vec![2.0, 0.0], vec![4.0, 6.0]]).unwrap();
        let cost = squared_cost_matrix(&source, &target).unwrap();
        let plan = TransportPlan::new(
            vec![0.25; 4],
            &cost,
            uniform_weights(2),
            uniform_weights(2),
        )
        .unwrap();
        let mapped = barycentric_map(&plan, &source, &target).unwrap();
        for i in 0..2 {
            assert_eq!(mapped.point(i), &[3.0, 3.0]);
        }
    }

    #[test]
    fn barycentric_rejects_shape_mismatch() {
        let source = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let target = PointCloud::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let plan = TransportPlan::new(
            vec![0.5, 0.0, 0.0, 0.5],
            &[0.0; 4],
            uniform_weights(2),
            uniform_weights(2),
        )
        .unwrap();
        assert!(matches!(
            barycentric_map(&plan, &source, &target),
            Err(Error::Shape(_))
        ));
    }
}
