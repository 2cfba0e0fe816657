//! Exact earth mover's distance between equally sized uniform point sets,
//! solved as a minimum-cost assignment.

use crate::cloud::PointCloud;
use crate::{Error, Result};

use super::{squared_cost_matrix, uniform_weights, TransportPlan};

/// The assignment solver is cubic in the point count, so refuse inputs that
/// would take minutes; entropic transport handles large sets.
const MAX_EMD_POINTS: usize = 4096;

/// Exact optimal transport between two equally sized clouds under squared
/// Euclidean cost with uniform weights. The optimal coupling is a
/// permutation, found by the shortest-augmenting-path assignment algorithm
/// in `O(n^3)`.
///
/// Unequal sizes are rejected with a pointer to [`super::sinkhorn`], which
/// has no such restriction; sets above 4096 points are rejected outright.
pub fn emd(source: &PointCloud, target: &PointCloud) -> Result<TransportPlan> {
    if source.n() != target.n() {
        return Err(Error::Parameter(format!(
            "exact assignment needs equally sized clouds (got {} and {}); \
             use sinkhorn for unequal sizes",
            source.n(),
            target.n()
        )));
    }
    let n = source.n();
    if n > MAX_EMD_POINTS {
        return Err(Error::Capacity(format!(
            "assignment on {n} points exceeds the {MAX_EMD_POINTS}-point limit; \
             use sinkhorn instead"
        )));
    }
    let cost = squared_cost_matrix(source, target)?;
    let assign = solve_assignment(&cost, n);
    let w = 1.0 / n as f64;
    let mut coupling = vec![0.0; n * n];
    for (i, &j) in assign.iter().enumerate() {
        coupling[i * n + j] = w;
    }
    TransportPlan::new(coupling, &cost, uniform_weights(n), uniform_weights(n))
}

/// Minimum-cost perfect assignment on a dense `n x n` cost matrix via
/// successive shortest augmenting paths with dual potentials
/// (Jonker-Volgenant style). Returns `assign[row] = column`.
///
/// Indices are shifted by one internally so column 0 can serve as the
/// sentinel root of each augmenting search.
fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    // p[j]: row matched to column j, 0 when free.
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        // Dijkstra over columns in the reduced-cost graph.
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Flip matches along the augmenting path back to the root.
        while j0 != 0 {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}
