//! Affine map estimation between point clouds: fit `x -> A x + b` by least
//! squares against the barycentric projection of an entropic transport plan.

use crate::cloud::PointCloud;
use crate::{Error, Result};

use super::{barycentric_map, sinkhorn::sinkhorn};

/// Internal transport-plan parameters. The regularization is small enough
/// that on well-separated clouds the plan is effectively a matching, so the
/// regression sees almost unblurred targets. The marginal tolerance is
/// deliberately loose: barycentric projection normalizes each row, which
/// cancels most of the residual marginal error, and clouds with many
/// near-ties plateau around 1e-5 no matter how long the alternation runs.
/// The iteration cap is generous because matched-pair instances (target a
/// transform of the source) converge slowest; typical solves exit orders of
/// magnitude earlier.
const PLAN_EPSILON: f64 = 1e-3;
const PLAN_MAX_ITERS: usize = 100_000;
const PLAN_TOL: f64 = 2e-5;

/// `x -> A x + b` on points of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    dim: usize,
    /// Row-major `dim x dim`.
    matrix: Vec<f64>,
    offset: Vec<f64>,
}

impl AffineMap {
    pub fn new(dim: usize, matrix: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("affine map needs dimension at least 1".into()));
        }
        if matrix.len() != dim * dim || offset.len() != dim {
            return Err(Error::Shape(format!(
                "affine map on dim {dim} needs a {dim}x{dim} matrix and {dim}-vector offset"
            )));
        }
        if matrix.iter().chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("affine map entries must be finite".into()));
        }
        Ok(Self { dim, matrix, offset })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut matrix = vec![0.0; dim * dim];
        for r in 0..dim {
            matrix[r * dim + r] = 1.0;
        }
        Self::new(dim, matrix, vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `dim x dim` linear part.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Applies the map to one point; `x` must have length `dim`.
    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        let d = self.dim;
        (0..d)
            .map(|r| {
                self.offset[r]
                    + self.matrix[r * d..(r + 1) * d]
                        .iter()
                        .zip(x)
                        .map(|(m, v)| m * v)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Applies the map to every point, keeping tags.
    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        if cloud.dim() != self.dim {
            return Err(Error::Shape(format!(
                "map is {}-dimensional, cloud is {}-dimensional",
                self.dim,
                cloud.dim()
            )));
        }
        let mut coords = Vec::with_capacity(cloud.coords().len());
        for p in cloud.coords().chunks_exact(self.dim) {
            coords.extend_from_slice(&self.apply_point(p));
        }
        cloud.with_coords(coords)
    }
}

/// Two-stage affine alignment: an entropic plan from `source` to `target`,
/// its barycentric projection, then the least-squares affine map from the
/// source points onto their projections. Needs at least `dim + 1` source
/// points; affinely degenerate sources (all on a hyperplane) are rejected.
pub fn linear_map_estimate(source: &PointCloud, target: &PointCloud) -> Result<AffineMap> {
    let d = source.dim();
    if target.dim() != d {
        return Err(Error::Shape(format!(
            "source has dim {d}, target has dim {}",
            target.dim()
        )));
    }
    if source.n() < d + 1 {
        return Err(Error::Parameter(format!(
            "fitting an affine map in dimension {d} needs at least {} source points, got {}",
            d + 1,
            source.n()
        )));
    }
    let plan = sinkhorn(source, target, PLAN_EPSILON, PLAN_MAX_ITERS, PLAN_TOL)?;
    let projected = barycentric_map(&plan, source, target)?;
    fit_affine(source, &projected)
}

/// Least squares `y ~ A x + b` through the normal equations on the
/// augmented design `[x | 1]`, solved by Gaussian elimination with partial
/// pivoting. `W` is `(d+1) x d` with `A` transposed in the first `d` rows
/// and `b` in the last.
fn fit_affine(source: &PointCloud, target: &PointCloud) -> Result<AffineMap> {
    let d = source.dim();
    let k = d + 1;
    let mut gram = vec![0.0f64; k * k];
    let mut rhs = vec![0.0f64; k * d];
    let mut aug = vec![0.0f64; k];
    for (x, y) in source
        .coords()
        .chunks_exact(d)
        .zip(target.coords().chunks_exact(d))
    {
        aug[..d].copy_from_slice(x);
        aug[d] = 1.0;
        for p in 0..k {
            let ap = aug[p];
            for q in 0..k {
                gram[p * k + q] += ap * aug[q];
            }
            for (r, &yc) in rhs[p * d..(p + 1) * d].iter_mut().zip(y) {
                *r += ap * yc;
            }
        }
    }
    solve_linear(&mut gram, &mut rhs, k, d)?;
    let mut matrix = vec![0.0f64; d * d];
    for r in 0..d {
        for c in 0..d {
            matrix[r * d + c] = rhs[c * d + r];
        }
    }
    let offset = rhs[d * d..].to_vec();
    AffineMap::new(d, matrix, offset)
}

/// In-place partial-pivoting Gaussian elimination for `g w = r` with a
/// `k x k` system matrix and `d` right-hand sides; the solution lands in
/// `r`. Rank deficiency surfaces as a degenerate-data error.
fn solve_linear(g: &mut [f64], r: &mut [f64], k: usize, d: usize) -> Result<()> {
    let scale = g.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
    for col in 0..k {
        let mut piv = col;
        for row in col + 1..k {
            if g[row * k + col].abs() > g[piv * k + col].abs() {
                piv = row;
            }
        }
        if g[piv * k + col].abs() <= 1e-12 * scale {
            return Err(Error::Degenerate(
                "source points are affinely degenerate; the regression has no unique solution"
                    .into(),
            ));
        }
        if piv != col {
            for c in 0..k {
                g.swap(piv * k + c, col * k + c);
            }
            for c in 0..d {
                r.swap(piv * d + c, col * d + c);
            }
        }
        for row in col + 1..k {
            let f = g[row * k + col] / g[col * k + col];
            if f != 0.0 {
                for c in col..k {
                    g[row * k + c] -= f * g[col * k + c];
                }
                for c in 0..d {
                    r[row * d + c] -= f * r[col * d + c];
                }
            }
        }
    }
    for col in (0..k).rev() {
        for c in 0..d {
            let mut v = r[col * d + c];
            for inner in col + 1..k {
                v -= g[col * k + inner] * r[inner * d + c];
            }
            r[col * d + c] = v / g[col * k + col];
        }
    }
    Ok(())
}
