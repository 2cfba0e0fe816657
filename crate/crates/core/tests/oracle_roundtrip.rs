//! Round-trip accuracy of the deterministic solver against the analytic
//! Gaussian oracle: no training anywhere, so every deviation is
//! discretization error, and halving the step count must scale it like a
//! first-order method.

use ddib_core::cloud::PointCloud;
use ddib_core::odesolve::{decode_cloud, encode_cloud};
use ddib_core::schedule::{NoiseSchedule, ScheduleParams};
use ddib_core::scorenet::AnalyticGaussian;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    PointCloud::from_rows(&rows).unwrap()
}

fn round_trip_errors(s: &NoiseSchedule, cloud: &PointCloud, n_steps: usize) -> (f64, f64) {
    let oracle = AnalyticGaussian::standard(2).unwrap();
    let latent = encode_cloud(&oracle, s, cloud, n_steps).unwrap();
    let back = decode_cloud(&oracle, s, &latent, n_steps).unwrap();
    let mut sq = 0.0;
    for (p, q) in back
        .coords()
        .chunks_exact(2)
        .zip(cloud.coords().chunks_exact(2))
    {
        sq += (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
    }
    let mean_sq = sq / cloud.n() as f64;
    (mean_sq, mean_sq.sqrt())
}

#[test]
fn oracle_round_trip_is_tight_and_first_order() {
    let s = ScheduleParams::default().build().unwrap();
    let cloud = gaussian_cloud(1000, 2024);

    let (mean_sq_500, rms_500) = round_trip_errors(&s, &cloud, 500);
    assert!(mean_sq_500 <= 1e-3, "mean squared L2 at 500 steps: {mean_sq_500}");

    // First-order solver: halving the grid should roughly double the error.
    let (_, rms_250) = round_trip_errors(&s, &cloud, 250);
    let (_, rms_125) = round_trip_errors(&s, &cloud, 125);
    assert!(
        rms_250 >= 1.8 * rms_500,
        "250-step error {rms_250} vs 500-step {rms_500}"
    );
    assert!(
        rms_125 >= 1.8 * rms_250,
        "125-step error {rms_125} vs 250-step {rms_250}"
    );
}
