//! Deterministic probability-flow integration (the DDIM iterate).
//!
//! In the reparameterization `x̄ = x / sqrt(alpha_bar)`, the solver moves
//! along the noise scale `sigma(t)` with the network as its velocity field:
//!
//! ```text
//! x_to = sqrt(alpha_bar[t_to]) * ( x / sqrt(alpha_bar[t_from])
//!        + (sigma(t_to) - sigma(t_from)) * eps(x, t_from) )
//! ```
//!
//! The same affine update serves both directions; the sign rides on the
//! sigma difference. The field is always evaluated at the step the point is
//! currently at: going forward that is the earlier (less noisy) step of the
//! pair, going in reverse the later one. That asymmetry is the sole source
//! of round-trip error beyond float noise, and it vanishes as the step grid
//! refines (first order).
//!
//! The latent produced by a full forward solve is the raw `x` at step
//! `T - 1`, not the rescaled `x̄`; for a well-conditioned schedule it is
//! approximately standard normal.

use crate::cloud::PointCloud;
use crate::schedule::NoiseSchedule;
use crate::scorenet::NoisePredictor;
use crate::{Error, Result};

/// Integration direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Data (step 0) to latent (step T−1).
    Forward,
    /// Latent (step T−1) to data (step 0).
    Reverse,
}

/// How a solve discretizes the step range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveSpec {
    /// Number of DDIM transitions; capped at `T - 1`, the densest grid.
    pub n_steps: usize,
    pub direction: Direction,
}

impl SolveSpec {
    pub fn forward(n_steps: usize) -> Self {
        Self { n_steps, direction: Direction::Forward }
    }

    pub fn reverse(n_steps: usize) -> Self {
        Self { n_steps, direction: Direction::Reverse }
    }

    /// The visited step indices in increasing order: `n + 1` values from 0 to
    /// `T - 1`, uniformly spaced in index and strictly monotone.
    pub fn step_grid(&self, s: &NoiseSchedule) -> Result<Vec<usize>> {
        let t = s.steps();
        if self.n_steps == 0 || self.n_steps > t {
            return Err(Error::Parameter(format!(
                "n_steps must be in 1..={t}, got {}",
                self.n_steps
            )));
        }
        let n = self.n_steps.min(t - 1);
        let grid: Vec<usize> = (0..=n)
            .map(|k| ((k * (t - 1)) as f64 / n as f64).round() as usize)
            .collect();
        debug_assert!(grid.windows(2).all(|w| w[0] < w[1]));
        debug_assert_eq!((grid[0], *grid.last().unwrap()), (0, t - 1));
        Ok(grid)
    }
}

/// One deterministic transition from `t_from` to `t_to` for a batch of
/// points stored row-major in `xs`.
pub fn ddim_step_batch(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    xs: &[f64],
    t_from: usize,
    t_to: usize,
) -> Result<Vec<f64>> {
    if t_from == t_to {
        return Err(Error::Parameter(format!(
            "ddim step needs distinct steps, got {t_from} twice"
        )));
    }
    let sa_from = s.sqrt_alpha_bar(t_from)?;
    let sa_to = s.sqrt_alpha_bar(t_to)?;
    let dsigma = s.sigma(t_to)? - s.sigma(t_from)?;
    let eps = net.predict_batch(s, xs, t_from)?;
    let mut out = Vec::with_capacity(xs.len());
    for (x, e) in xs.iter().zip(&eps) {
        let y = sa_to * (x / sa_from + dsigma * e);
        if !y.is_finite() {
            return Err(Error::Numeric {
                step: t_from,
                detail: format!("transition {t_from} -> {t_to} produced {y}"),
            });
        }
        out.push(y);
    }
    Ok(out)
}

/// One deterministic transition for a single point.
pub fn ddim_step(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    x: &[f64],
    t_from: usize,
    t_to: usize,
) -> Result<Vec<f64>> {
    if x.len() != net.input_dim() {
        return Err(Error::Shape(format!(
            "point has dim {}, net expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    ddim_step_batch(net, s, x, t_from, t_to)
}

fn solve_rows(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    mut xs: Vec<f64>,
    spec: SolveSpec,
    mut visit: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<Vec<f64>> {
    let grid = spec.step_grid(s)?;
    let pairs: Vec<(usize, usize)> = match spec.direction {
        Direction::Forward => grid.windows(2).map(|w| (w[0], w[1])).collect(),
        Direction::Reverse => grid.windows(2).rev().map(|w| (w[1], w[0])).collect(),
    };
    if let Some(v) = visit.as_deref_mut() {
        v(pairs[0].0, &xs);
    }
    for (t_from, t_to) in pairs {
        xs = ddim_step_batch(net, s, &xs, t_from, t_to)?;
        if let Some(v) = visit.as_deref_mut() {
            v(t_to, &xs);
        }
    }
    Ok(xs)
}

/// Integrates one point across the full step range in the given direction.
pub fn ode_solve(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    x: &[f64],
    spec: SolveSpec,
) -> Result<Vec<f64>> {
    if x.len() != net.input_dim() {
        return Err(Error::Shape(format!(
            "point has dim {}, net expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    solve_rows(net, s, x.to_vec(), spec, None)
}

/// Like [`ode_solve`], also returning the trajectory as `(step, point)`
/// snapshots, starting state included.
pub fn ode_solve_with_path(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    x: &[f64],
    spec: SolveSpec,
) -> Result<(Vec<f64>, Vec<(usize, Vec<f64>)>)> {
    if x.len() != net.input_dim() {
        return Err(Error::Shape(format!(
            "point has dim {}, net expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    let mut path = Vec::new();
    let mut visit = |t: usize, xs: &[f64]| path.push((t, xs.to_vec()));
    let out = solve_rows(net, s, x.to_vec(), spec, Some(&mut visit))?;
    Ok((out, path))
}

/// Data-to-latent solve of one point over `n_steps` transitions.
pub fn encode(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    x: &[f64],
    n_steps: usize,
) -> Result<Vec<f64>> {
    ode_solve(net, s, x, SolveSpec::forward(n_steps))
}

/// Latent-to-data solve of one point over `n_steps` transitions.
pub fn decode(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    latent: &[f64],
    n_steps: usize,
) -> Result<Vec<f64>> {
    ode_solve(net, s, latent, SolveSpec::reverse(n_steps))
}

/// Integrates a whole cloud, one batched network evaluation per transition.
/// Tags are preserved; points never interact.
pub fn solve_cloud(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    cloud: &PointCloud,
    spec: SolveSpec,
) -> Result<PointCloud> {
    check_cloud(net, cloud)?;
    let out = solve_rows(net, s, cloud.coords().to_vec(), spec, None)?;
    cloud.with_coords(out)
}

/// Like [`solve_cloud`], also returning `(step, cloud)` snapshots.
pub fn solve_cloud_with_path(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    cloud: &PointCloud,
    spec: SolveSpec,
) -> Result<(PointCloud, Vec<(usize, PointCloud)>)> {
    check_cloud(net, cloud)?;
    let mut snaps: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut visit = |t: usize, xs: &[f64]| snaps.push((t, xs.to_vec()));
    let out = solve_rows(net, s, cloud.coords().to_vec(), spec, Some(&mut visit))?;
    let mut path = Vec::with_capacity(snaps.len());
    for (t, xs) in snaps {
        path.push((t, cloud.with_coords(xs)?));
    }
    Ok((cloud.with_coords(out)?, path))
}

pub fn encode_cloud(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    cloud: &PointCloud,
    n_steps: usize,
) -> Result<PointCloud> {
    solve_cloud(net, s, cloud, SolveSpec::forward(n_steps))
}

pub fn decode_cloud(
    net: &dyn NoisePredictor,
    s: &NoiseSchedule,
    cloud: &PointCloud,
    n_steps: usize,
) -> Result<PointCloud> {
    solve_cloud(net, s, cloud, SolveSpec::reverse(n_steps))
}

fn check_cloud(net: &dyn NoisePredictor, cloud: &PointCloud) -> Result<()> {
    if cloud.dim() != net.input_dim() {
        return Err(Error::Shape(format!(
            "cloud has dim {}, net expects {}",
            cloud.dim(),
            net.input_dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleParams;
    use crate::scorenet::{AnalyticGaussian, ScoreNetwork};

    fn schedule() -> NoiseSchedule {
        ScheduleParams::default().build().unwrap()
    }

    /// A predictor that ignores its input entirely.
    struct Constant(Vec<f64>);

    impl NoisePredictor for Constant {
        fn input_dim(&self) -> usize {
            self.0.len()
        }
        fn predict(&self, _: &NoiseSchedule, _: &[f64], _: usize) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn grid_is_uniform_strict_and_endpointed() {
        let s = schedule();
        for n in [1, 2, 3, 7, 50, 500, 999, 1000] {
            let g = SolveSpec::forward(n).step_grid(&s).unwrap();
            assert_eq!(g[0], 0);
            assert_eq!(*g.last().unwrap(), 999);
            assert!(g.windows(2).all(|w| w[0] < w[1]), "n={n}: {g:?}");
            assert_eq!(g.len(), n.min(999) + 1);
        }
        let g = SolveSpec::forward(2).step_grid(&s).unwrap();
        assert_eq!(g, vec![0, 500, 999]);
        assert!(SolveSpec::forward(0).step_grid(&s).is_err());
        assert!(SolveSpec::forward(1001).step_grid(&s).is_err());
    }

    #[test]
    fn zero_net_step_is_pure_rescaling() {
        let s = schedule();
        let net = ScoreNetwork::standard(2, 0).unwrap();
        let x = [1.25, -0.5];
        let y = ddim_step(&net, &s, &x, 0, 999).unwrap();
        let scale = (s.alpha_bar(999).unwrap() / s.alpha_bar(0).unwrap()).sqrt();
        for a in 0..2 {
            assert!((y[a] - scale * x[a]).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_steps_are_rejected() {
        let s = schedule();
        let net = ScoreNetwork::standard(2, 0).unwrap();
        assert!(matches!(
            ddim_step(&net, &s, &[0.0, 0.0], 5, 5),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn constant_field_round_trip_is_exact() {
        let s = schedule();
        let net = Constant(vec![0.7, -0.3]);
        let x = [0.9, 1.1];
        // Single step, there and back.
        let y = ddim_step(&net, &s, &x, 0, 999).unwrap();
        let back = ddim_step(&net, &s, &y, 999, 0).unwrap();
        for a in 0..2 {
            assert!((back[a] - x[a]).abs() < 1e-12);
        }
        // Full solves, coarse grid.
        let lat = encode(&net, &s, &x, 50).unwrap();
        let rec = decode(&net, &s, &lat, 50).unwrap();
        for a in 0..2 {
            assert!((rec[a] - x[a]).abs() < 1e-9, "{rec:?}");
        }
    }

    #[test]
    fn zero_net_encode_of_origin_stays_at_origin() {
        let s = schedule();
        let net = ScoreNetwork::standard(2, 0).unwrap();
        let lat = encode(&net, &s, &[0.0, 0.0], 100).unwrap();
        assert_eq!(lat, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_net_decode_is_pure_rescaling() {
        let s = schedule();
        let net = ScoreNetwork::standard(2, 0).unwrap();
        let z = [0.4, -2.0];
        let out = decode(&net, &s, &z, 250).unwrap();
        let scale = (s.alpha_bar(0).unwrap() / s.alpha_bar(999).unwrap()).sqrt();
        for a in 0..2 {
            assert!((out[a] - scale * z[a]).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn oracle_round_trip_error_is_small_and_first_order() {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let s = schedule();
        let oracle = AnalyticGaussian::standard(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();

        let mut mean_sq = |n_steps: usize| -> f64 {
            let lat = encode_cloud(&oracle, &s, &cloud, n_steps).unwrap();
            let rec = decode_cloud(&oracle, &s, &lat, n_steps).unwrap();
            let mut total = 0.0;
            for (p, q) in rec.coords().chunks_exact(2).zip(cloud.coords().chunks_exact(2)) {
                total += (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            }
            total / cloud.n() as f64
        };

        // Mean squared round-trip displacement at 500 steps.
        let e500 = mean_sq(500);
        assert!(e500 <= 1e-3, "mean squared L2 {e500:e}");

        // Halving the step count must cost at least a factor 1.8 in the
        // root-mean-square displacement (first-order behavior).
        let errs: Vec<f64> = [50, 100, 200, 400].iter().map(|&n| mean_sq(n).sqrt()).collect();
        for w in errs.windows(2) {
            let factor = w[0] / w[1];
            assert!(factor >= 1.8, "convergence factor {factor} in {errs:?}");
        }
    }

    #[test]
    fn oracle_encode_of_gaussian_data_is_standard_normal() {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let s = schedule();
        let oracle = AnalyticGaussian::standard(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..4000)
            .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let lat = encode_cloud(&oracle, &s, &cloud, 500).unwrap();
        for a in 0..2 {
            let vals: Vec<f64> = (0..lat.n()).map(|i| lat.point(i)[a]).collect();
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 =
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() <= 0.1, "axis {a} latent mean {mean}");
            assert!((0.8..=1.2).contains(&var), "axis {a} latent var {var}");
        }
    }

    #[test]
    fn mode_point_of_symmetric_data_stays_on_axis() {
        let s = schedule();
        let mu = vec![0.8, 0.0];
        let oracle = AnalyticGaussian::new(mu.clone(), 0.5).unwrap();
        // Points on the line x(t) = sqrt(alpha_bar[t]) * mu see a zero
        // noise prediction, so the iterate keeps them on that line; start
        // on it (alpha_bar[0] is 1 - beta_0, not 1) and ride it to the end.
        let start = vec![s.alpha_bar(0).unwrap().sqrt() * 0.8, 0.0];
        let lat = encode(&oracle, &s, &start, 250).unwrap();
        assert_eq!(lat[1], 0.0);
        let want = s.alpha_bar(999).unwrap().sqrt() * 0.8;
        assert!((lat[0] - want).abs() < 1e-12, "{} vs {}", lat[0], want);
    }

    #[test]
    fn oracle_decode_lands_inside_inflated_support() {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let s = schedule();
        let oracle = AnalyticGaussian::standard(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        // Data support proxy: N(0,I) bounding box is about ±4 at this n.
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        let data = PointCloud::from_rows(&rows).unwrap();
        let (lo, hi) = data.bounding_box().unwrap();
        let latents: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        let latents = PointCloud::from_rows(&latents).unwrap();
        let decoded = decode_cloud(&oracle, &s, &latents, 250).unwrap();
        let inside = decoded
            .coords()
            .chunks_exact(2)
            .filter(|p| {
                (0..2).all(|a| {
                    let c = (lo[a] + hi[a]) / 2.0;
                    let half = 3.0 * (hi[a] - lo[a]) / 2.0;
                    p[a] >= c - half && p[a] <= c + half
                })
            })
            .count();
        assert!(
            inside as f64 >= 0.95 * decoded.n() as f64,
            "only {inside}/{} decoded points inside 3x bounding box",
            decoded.n()
        );
    }

    #[test]
    fn solves_are_deterministic_and_tag_preserving() {
        let s = schedule();
        let oracle = AnalyticGaussian::standard(2).unwrap();
        let cloud = PointCloud::new(2, vec![0.3, 0.4, -1.0, 0.2], vec![17, 4]).unwrap();
        let a = encode_cloud(&oracle, &s, &cloud, 50).unwrap();
        let b = encode_cloud(&oracle, &s, &cloud, 50).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tags(), cloud.tags());
    }

    #[test]
    fn path_snapshots_cover_the_grid() {
        let s = schedule();
        let oracle = AnalyticGaussian::standard(2).unwrap();
        let (out, path) = ode_solve_with_path(&oracle, &s, &[0.5, 0.5], SolveSpec::forward(4)).unwrap();
        let steps: Vec<usize> = path.iter().map(|(t, _)| *t).collect();
        assert_eq!(steps, vec![0, 250, 500, 749, 999]);
        assert_eq!(&path.last().unwrap().1, &out);
        let (_, rpath) =
            ode_solve_with_path(&oracle, &s, &[0.5, 0.5], SolveSpec::reverse(4)).unwrap();
        let rsteps: Vec<usize> = rpath.iter().map(|(t, _)| *t).collect();
        assert_eq!(rsteps, vec![999, 749, 500, 250, 0]);
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let s = schedule();
        let oracle = AnalyticGaussian::standard(2).unwrap();
        assert!(matches!(
            encode(&oracle, &s, &[1.0, 2.0, 3.0], 10),
            Err(Error::Shape(_))
        ));
        let flat = PointCloud::new(3, vec![0.0; 3], vec![0]).unwrap();
        assert!(matches!(
            encode_cloud(&oracle, &s, &flat, 10),
            Err(Error::Shape(_))
        ));
    }
}
