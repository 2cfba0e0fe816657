//! Noise-prediction networks and their denoising objective.
//!
//! A [`ScoreNetwork`] is a small MLP `eps_theta(x, t)` predicting the noise
//! that produced a perturbed point. The score of the perturbed density is
//! recovered as `-eps_theta / sqrt(1 - alpha_bar[t])`, so this one network
//! drives both training and the deterministic solver.
//!
//! [`AnalyticGaussian`] is the closed-form optimal predictor for isotropic
//! Gaussian data. It has no weights and needs no training, which makes it the
//! reference oracle for solver and training tests.

mod train;

pub use train::{train, train_with_losses, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

/// Anything that predicts the noise component of a perturbed point.
pub trait NoisePredictor {
    fn input_dim(&self) -> usize;

    /// Short human-readable identity used in reports.
    fn describe(&self) -> String {
        format!("predictor(dim={})", self.input_dim())
    }

    /// Predicts for one point. `x` must have length `input_dim`, `t < T`.
    fn predict(&self, s: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>>;

    /// Predicts for `n` points stored row-major in `xs`, all at step `t`.
    /// The default defers to [`Self::predict`] point by point;
    /// implementations override it when a batched pass is cheaper.
    fn predict_batch(&self, s: &NoiseSchedule, xs: &[f64], t: usize) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if xs.len() % d != 0 {
            return Err(Error::Shape(format!(
                "{} coordinates do not form points of dim {d}",
                xs.len()
            )));
        }
        let mut out = Vec::with_capacity(xs.len());
        for x in xs.chunks_exact(d) {
            out.extend(self.predict(s, x, t)?);
        }
        Ok(out)
    }
}

/// Named smooth nonlinearity between hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `x * sigmoid(x)`.
    Silu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        z / (1.0 + (-z).exp())
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        let s = 1.0 / (1.0 + (-z).exp());
        s * (1.0 + z * (1.0 - s))
    }
}

/// An MLP noise predictor with a sinusoidal time embedding.
///
/// The input layer sees `[x, embed(t)]`; hidden layers use the configured
/// activation; the output layer is linear with `input_dim` units. Weights are
/// stored flat, layer by layer, each layer as a row-major `in x out` matrix
/// followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNetwork {
    input_dim: usize,
    time_embed_dim: usize,
    hidden_dims: Vec<usize>,
    activation: Activation,
    weights: Vec<f64>,
}

impl ScoreNetwork {
    /// Default architecture for the 2D/RGB experiments: 4 hidden layers of
    /// 128 units and a 64-dim time embedding.
    pub fn standard(input_dim: usize, seed: u64) -> Result<Self> {
        Self::init(input_dim, 64, &[128, 128, 128, 128], seed)
    }

    /// Initializes with uniform Kaiming-style fan-in scaling; the final layer
    /// starts at zero so the untrained network predicts zero noise.
    pub fn init(
        input_dim: usize,
        time_embed_dim: usize,
        hidden_dims: &[usize],
        seed: u64,
    ) -> Result<Self> {
        Self::validate_arch(input_dim, time_embed_dim, hidden_dims)?;
        let mut net = Self {
            input_dim,
            time_embed_dim,
            hidden_dims: hidden_dims.to_vec(),
            activation: Activation::Silu,
            weights: Vec::new(),
        };
        let dims = net.layer_dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(net.expected_weight_count());
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let last = l == dims.len() - 2;
            let bound = (6.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                weights.push(if last { 0.0 } else { rng.gen_range(-bound..bound) });
            }
            weights.extend(std::iter::repeat(0.0).take(fan_out));
        }
        net.weights = weights;
        Ok(net)
    }

    /// Rebuilds a network from stored parts, checking the weight count.
    pub fn from_parts(
        input_dim: usize,
        time_embed_dim: usize,
        hidden_dims: Vec<usize>,
        activation: Activation,
        weights: Vec<f64>,
    ) -> Result<Self> {
        Self::validate_arch(input_dim, time_embed_dim, &hidden_dims)?;
        let mut net = Self {
            input_dim,
            time_embed_dim,
            hidden_dims,
            activation,
            weights: Vec::new(),
        };
        if weights.len() != net.expected_weight_count() {
            return Err(Error::Shape(format!(
                "architecture implies {} weights, got {}",
                net.expected_weight_count(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite weight {w}")));
        }
        net.weights = weights;
        Ok(net)
    }

    fn validate_arch(input_dim: usize, time_embed_dim: usize, hidden_dims: &[usize]) -> Result<()> {
        if input_dim == 0 {
            return Err(Error::Parameter("input_dim must be positive".into()));
        }
        if time_embed_dim < 2 || time_embed_dim % 2 != 0 {
            return Err(Error::Parameter(format!(
                "time_embed_dim must be even and >= 2, got {time_embed_dim}"
            )));
        }
        if hidden_dims.iter().any(|&h| h == 0) {
            return Err(Error::Parameter("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Layer widths from input to output: `[input_dim + time_embed_dim, hidden..., input_dim]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim + self.time_embed_dim);
        dims.extend(&self.hidden_dims);
        dims.push(self.input_dim);
        dims
    }

    fn expected_weight_count(&self) -> usize {
        let dims = self.layer_dims();
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn time_embed_dim(&self) -> usize {
        self.time_embed_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Replaces all weights; the count must match the architecture.
    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "expected {} weights, got {}",
                self.weights.len(),
                weights.len()
            )));
        }
        self.weights = weights;
        Ok(())
    }

    /// Sinusoidal embedding of normalized time `t / (T - 1)`: half sines and
    /// half cosines over frequencies spaced geometrically from 1 to 256.
    fn write_embedding(&self, t: usize, t_max: usize, out: &mut [f64]) {
        let half = self.time_embed_dim / 2;
        let u = t as f64 / (t_max - 1) as f64;
        for k in 0..half {
            let exponent = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.0 };
            let freq = 256f64.powf(exponent);
            let angle = 2.0 * std::f64::consts::PI * freq * u;
            out[k] = angle.sin();
            out[half + k] = angle.cos();
        }
    }

    /// Assembles the network input rows `[x_i, embed(t_i)]` for a batch.
    fn assemble_inputs(&self, s: &NoiseSchedule, xs: &[f64], ts: &[usize]) -> Result<Vec<f64>> {
        let (d, e) = (self.input_dim, self.time_embed_dim);
        if xs.len() != d * ts.len() {
            return Err(Error::Shape(format!(
                "{} coordinates do not form {} points of dim {d}",
                xs.len(),
                ts.len()
            )));
        }
        for &t in ts {
            if t >= s.steps() {
                return Err(Error::Parameter(format!(
                    "step {t} out of range 0..{}",
                    s.steps()
                )));
            }
        }
        let mut inputs = vec![0.0; ts.len() * (d + e)];
        for (i, (x, &t)) in xs.chunks_exact(d).zip(ts).enumerate() {
            let row = &mut inputs[i * (d + e)..(i + 1) * (d + e)];
            row[..d].copy_from_slice(x);
            self.write_embedding(t, s.steps(), &mut row[d..]);
        }
        Ok(inputs)
    }

    /// Forward pass over assembled input rows. Returns per-layer
    /// pre-activations and activations (activations[0] is the input) for
    /// reuse by the backward pass.
    fn forward_batch(&self, inputs: Vec<f64>, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let dims = self.layer_dims();
        let layers = dims.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        let mut preacts: Vec<Vec<f64>> = Vec::with_capacity(layers);
        acts.push(inputs);
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let w = &self.weights[offset..offset + fan_in * fan_out];
            let b = &self.weights[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut z = vec![0.0; n * fan_out];
            for row in z.chunks_exact_mut(fan_out) {
                row.copy_from_slice(b);
            }
            linalg::gemm_acc(&acts[l], n, fan_in, w, fan_out, &mut z);
            if l + 1 < layers {
                let a = z.iter().map(|&v| self.activation.apply(v)).collect();
                preacts.push(z);
                acts.push(a);
            } else {
                acts.push(z.clone());
                preacts.push(z);
            }
        }
        (preacts, acts)
    }

    /// Evaluates the network on `n` points at per-point steps `ts`.
    pub fn predict_noise_rows(
        &self,
        s: &NoiseSchedule,
        xs: &[f64],
        ts: &[usize],
    ) -> Result<Vec<f64>> {
        let inputs = self.assemble_inputs(s, xs, ts)?;
        let (_, mut acts) = self.forward_batch(inputs, ts.len());
        Ok(acts.pop().unwrap())
    }

    pub fn predict_noise(&self, s: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>> {
        self.predict_noise_rows(s, x, &[t])
    }
}

impl NoisePredictor for ScoreNetwork {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn describe(&self) -> String {
        format!(
            "mlp(in={}, embed={}, hidden={:?})",
            self.input_dim, self.time_embed_dim, self.hidden_dims
        )
    }

    fn predict(&self, s: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>> {
        self.predict_noise(s, x, t)
    }

    fn predict_batch(&self, s: &NoiseSchedule, xs: &[f64], t: usize) -> Result<Vec<f64>> {
        if xs.len() % self.input_dim != 0 {
            return Err(Error::Shape(format!(
                "{} coordinates do not form points of dim {}",
                xs.len(),
                self.input_dim
            )));
        }
        let n = xs.len() / self.input_dim;
        self.predict_noise_rows(s, xs, &vec![t; n])
    }
}

/// The exact optimal noise predictor for data `~ N(mu, var * I)`.
///
/// The perturbed marginal at step `t` is
/// `N(sqrt(alpha_bar) * mu, (alpha_bar * var + 1 - alpha_bar) * I)`, so
/// `eps*(x, t) = sqrt(1 - alpha_bar) * (x - sqrt(alpha_bar) * mu) / (alpha_bar * var + 1 - alpha_bar)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGaussian {
    mean: Vec<f64>,
    var: f64,
}

impl AnalyticGaussian {
    pub fn new(mean: Vec<f64>, var: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::Parameter("mean must have at least one axis".into()));
        }
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::Parameter(format!("variance must be positive, got {var}")));
        }
        Ok(Self { mean, var })
    }

    /// The standard latent reference `N(0, I)`.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], 1.0)
    }
}

impl NoisePredictor for AnalyticGaussian {
    fn input_dim(&self) -> usize {
        self.mean.len()
    }

    fn describe(&self) -> String {
        format!("analytic-gaussian(var={})", self.var)
    }

    fn predict(&self, s: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "point has dim {}, oracle has dim {}",
                x.len(),
                self.mean.len()
            )));
        }
        let ab = s.alpha_bar(t)?;
        let scale = (1.0 - ab).sqrt() / (ab * self.var + 1.0 - ab);
        let sa = ab.sqrt();
        Ok(x.iter()
            .zip(&self.mean)
            .map(|(xi, mi)| scale * (xi - sa * mi))
            .collect())
    }

    fn predict_batch(&self, s: &NoiseSchedule, xs: &[f64], t: usize) -> Result<Vec<f64>> {
        let d = self.mean.len();
        if xs.len() % d != 0 {
            return Err(Error::Shape(format!(
                "{} coordinates do not form points of dim {d}",
                xs.len()
            )));
        }
        let ab = s.alpha_bar(t)?;
        let scale = (1.0 - ab).sqrt() / (ab * self.var + 1.0 - ab);
        let sa = ab.sqrt();
        Ok(xs
            .chunks_exact(d)
            .flat_map(|x| {
                x.iter()
                    .zip(&self.mean)
                    .map(move |(xi, mi)| scale * (xi - sa * mi))
            })
            .collect())
    }
}

/// Free-function form of the oracle for one-off evaluations.
pub fn analytic_gaussian_noise(
    mu: &[f64],
    var: f64,
    s: &NoiseSchedule,
    x: &[f64],
    t: usize,
) -> Result<Vec<f64>> {
    AnalyticGaussian::new(mu.to_vec(), var)?.predict(s, x, t)
}

/// Deterministic core of the denoising objective: given per-point steps and
/// noise draws, perturbs each clean point, runs the network, and returns the
/// mean squared error `mean_i ||eps_theta(x_t_i, t_i) - eps_i||^2 / d` with
/// its exact reverse-mode weight gradient.
pub fn loss_and_grad_at(
    net: &ScoreNetwork,
    s: &NoiseSchedule,
    clean: &[f64],
    ts: &[usize],
    eps: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let d = net.input_dim();
    let n = ts.len();
    if n == 0 {
        return Err(Error::Parameter("empty batch".into()));
    }
    if clean.len() != n * d || eps.len() != n * d {
        return Err(Error::Shape(format!(
            "batch of {n} points of dim {d} needs {} coordinates, got {} clean / {} noise",
            n * d,
            clean.len(),
            eps.len()
        )));
    }
    let mut perturbed = Vec::with_capacity(n * d);
    for ((x0, e), &t) in clean.chunks_exact(d).zip(eps.chunks_exact(d)).zip(ts) {
        perturbed.extend(s.perturb(x0, t, e)?);
    }
    let inputs = net.assemble_inputs(s, &perturbed, ts)?;
    let (preacts, acts) = net.forward_batch(inputs, n);
    let pred = acts.last().unwrap();

    let norm = 1.0 / (n * d) as f64;
    let mut loss = 0.0;
    let mut dz: Vec<f64> = pred
        .iter()
        .zip(eps)
        .map(|(p, e)| {
            let diff = p - e;
            loss += diff * diff;
            2.0 * diff * norm
        })
        .collect();
    loss *= norm;

    let dims = net.layer_dims();
    let layers = dims.len() - 1;
    let mut grad = vec![0.0; net.weights.len()];
    let mut layer_offsets = Vec::with_capacity(layers);
    let mut offset = 0;
    for l in 0..layers {
        layer_offsets.push(offset);
        offset += dims[l] * dims[l + 1] + dims[l + 1];
    }
    for l in (0..layers).rev() {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let off = layer_offsets[l];
        let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
        linalg::gemm_at_b_acc(&acts[l], n, fan_in, &dz, fan_out, gw);
        for row in dz.chunks_exact(fan_out) {
            for (g, v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
        if l > 0 {
            let w = &net.weights[off..off + fan_in * fan_out];
            let mut da = vec![0.0; n * fan_in];
            linalg::gemm_a_bt(&dz, n, fan_out, w, fan_in, &mut da);
            for (v, z) in da.iter_mut().zip(&preacts[l - 1]) {
                *v *= net.activation.derivative(*z);
            }
            dz = da;
        }
    }
    Ok((loss, grad))
}

/// Forward-only companion of [`loss_and_grad_at`], used by finite-difference
/// checks and validation sweeps.
pub fn loss_at(
    net: &ScoreNetwork,
    s: &NoiseSchedule,
    clean: &[f64],
    ts: &[usize],
    eps: &[f64],
) -> Result<f64> {
    let d = net.input_dim();
    let n = ts.len();
    if n == 0 {
        return Err(Error::Parameter("empty batch".into()));
    }
    if clean.len() != n * d || eps.len() != n * d {
        return Err(Error::Shape("batch size mismatch".into()));
    }
    let mut perturbed = Vec::with_capacity(n * d);
    for ((x0, e), &t) in clean.chunks_exact(d).zip(eps.chunks_exact(d)).zip(ts) {
        perturbed.extend(s.perturb(x0, t, e)?);
    }
    let pred = net.predict_noise_rows(s, &perturbed, ts)?;
    let sum: f64 = pred.iter().zip(eps).map(|(p, e)| (p - e) * (p - e)).sum();
    Ok(sum / (n * d) as f64)
}

/// Samples one `(t, eps)` pair per batch point from `rng` and evaluates the
/// denoising loss and gradient on the result.
pub fn denoising_loss_and_grad(
    net: &ScoreNetwork,
    s: &NoiseSchedule,
    batch: &PointCloud,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    if batch.dim() != net.input_dim() {
        return Err(Error::Shape(format!(
            "network has input_dim {}, batch has dim {}",
            net.input_dim(),
            batch.dim()
        )));
    }
    let (ts, eps) = sample_targets(s, batch.n(), batch.dim(), rng);
    loss_and_grad_at(net, s, batch.coords(), &ts, &eps)
}

/// Draws per-point uniform steps and standard-normal noise, in a fixed order
/// (all steps first, then noise rows) so training stays reproducible.
pub(crate) fn sample_targets(
    s: &NoiseSchedule,
    n: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<f64>) {
    let ts: Vec<usize> = (0..n).map(|_| rng.gen_range(0..s.steps())).collect();
    let eps: Vec<f64> = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
    (ts, eps)
}

pub(crate) mod linalg {
    /// Accumulates `row += sum_q coeff[q] * mat[rows[q]]` four source rows at
    /// a time: one pass over `row` does eight flops per store instead of two,
    /// which is what keeps these kernels compute- rather than store-bound.
    /// The remainder rows fall back to single-row updates. The addition
    /// order within each output element is fixed by the blocking, so results
    /// are reproducible run to run.
    #[inline]
    fn acc_blocked(row: &mut [f64], coeff: &[f64], mat: &[f64], m: usize) {
        let k = coeff.len();
        let mut p = 0;
        while p + 4 <= k {
            let (a0, a1, a2, a3) = (coeff[p], coeff[p + 1], coeff[p + 2], coeff[p + 3]);
            let b0 = &mat[p * m..(p + 1) * m];
            let b1 = &mat[(p + 1) * m..(p + 2) * m];
            let b2 = &mat[(p + 2) * m..(p + 3) * m];
            let b3 = &mat[(p + 3) * m..(p + 4) * m];
            for j in 0..m {
                row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            p += 4;
        }
        while p < k {
            let av = coeff[p];
            let brow = &mat[p * m..(p + 1) * m];
            for (cv, &bv) in row.iter_mut().zip(brow) {
                *cv += av * bv;
            }
            p += 1;
        }
    }

    /// `c += a(n x k) * b(k x m)`, all row-major.
    pub fn gemm_acc(a: &[f64], n: usize, k: usize, b: &[f64], m: usize, c: &mut [f64]) {
        debug_assert_eq!(a.len(), n * k);
        debug_assert_eq!(b.len(), k * m);
        debug_assert_eq!(c.len(), n * m);
        for i in 0..n {
            acc_blocked(&mut c[i * m..(i + 1) * m], &a[i * k..(i + 1) * k], b, m);
        }
    }

    /// `out += a^T(k x n) * b(n x m)` where `a` is stored as `n x k`.
    pub fn gemm_at_b_acc(a: &[f64], n: usize, k: usize, b: &[f64], m: usize, out: &mut [f64]) {
        debug_assert_eq!(a.len(), n * k);
        debug_assert_eq!(b.len(), n * m);
        debug_assert_eq!(out.len(), k * m);
        // Same blocked update with the roles swapped: each output row p
        // accumulates column p of `a` against the rows of `b`. The column is
        // gathered once per block of rows.
        for p in 0..k {
            let orow = &mut out[p * m..(p + 1) * m];
            let mut i = 0;
            while i + 4 <= n {
                let (a0, a1, a2, a3) = (
                    a[i * k + p],
                    a[(i + 1) * k + p],
                    a[(i + 2) * k + p],
                    a[(i + 3) * k + p],
                );
                let b0 = &b[i * m..(i + 1) * m];
                let b1 = &b[(i + 1) * m..(i + 2) * m];
                let b2 = &b[(i + 2) * m..(i + 3) * m];
                let b3 = &b[(i + 3) * m..(i + 4) * m];
                for j in 0..m {
                    orow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
                }
                i += 4;
            }
            while i < n {
                let av = a[i * k + p];
                let brow = &b[i * m..(i + 1) * m];
                for (ov, &bv) in orow.iter_mut().zip(brow) {
                    *ov += av * bv;
                }
                i += 1;
            }
        }
    }

    /// `out = a(n x m) * b^T(m x k)` where `b` is stored as `k x m`.
    pub fn gemm_a_bt(a: &[f64], n: usize, m: usize, b: &[f64], k: usize, out: &mut [f64]) {
        debug_assert_eq!(a.len(), n * m);
        debug_assert_eq!(b.len(), k * m);
        debug_assert_eq!(out.len(), n * k);
        // Transposing b costs O(km) against the O(nkm) product and turns the
        // product into the plain row-major case.
        let mut bt = vec![0.0f64; m * k];
        for r in 0..k {
            for (c, &v) in b[r * m..(r + 1) * m].iter().enumerate() {
                bt[c * k + r] = v;
            }
        }
        out.fill(0.0);
        gemm_acc(a, n, m, &bt, k, out);
    }

}
