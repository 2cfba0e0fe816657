//! Image recoloring drivers: one diffusion-bridge method and three
//! transport baselines behind a common interface.
//!
//! Every method maps the subject image's pixel colors toward the reference
//! image's palette and reports how far the result drifted from the original
//! subject. The bridge method additionally renders each baseline and
//! reports the pixel MSE between its own output and theirs, which is the
//! head-to-head comparison the method exists for.

use std::collections::BTreeMap;

use serde::Serialize;

use ddib_core::cloud::PointCloud;
use ddib_core::image::{cloud_to_pixels, pixel_mse, pixels_to_cloud, Raster};
use ddib_core::ot::{self, color_convert, ColorMap};
use ddib_core::{bridge, Result};

use crate::cache;
use crate::config::ExperimentConfig;

/// How subject colors get matched to the reference palette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// Entropic plan on palette subsamples, extended by displacement.
    Sinkhorn,
    /// Exact assignment on palette subsamples, extended by displacement.
    Emd,
    /// Global affine map fitted to palette subsamples.
    Linear,
    /// Diffusion bridge: encode with the subject's model, decode with the
    /// reference's.
    Ddib,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sinkhorn => "sinkhorn",
            Method::Emd => "emd",
            Method::Linear => "linear",
            Method::Ddib => "ddib",
        }
    }
}

/// What a transfer run did, in JSON-friendly form.
#[derive(Debug, Serialize)]
pub struct TransferReport {
    pub method: &'static str,
    pub width: usize,
    pub height: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// How much the recoloring moved the image, in squared `[-1, 1]`
    /// channel units; 0 means the output is the subject untouched.
    pub pixel_mse_to_subject: f64,
    /// Bridge runs only: pixel MSE between this output and each baseline's.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub pixel_mse_vs: BTreeMap<&'static str, f64>,
}

#[derive(Debug)]
pub struct Transfer {
    pub result: Raster,
    pub report: TransferReport,
}

/// Recolors `subject_bytes` toward the palette of `reference_bytes`, both
/// PPM-encoded. The bridge method resolves its two per-image models through
/// the cache; `allow_train` gates the expensive misses.
pub fn transfer_image(
    reference_bytes: &[u8],
    subject_bytes: &[u8],
    method: Method,
    sample_size: usize,
    seed: u64,
    cfg: &ExperimentConfig,
    allow_train: bool,
) -> Result<Transfer> {
    let reference = Raster::read_ppm(reference_bytes)?;
    let subject = Raster::read_ppm(subject_bytes)?;
    let ref_cloud = pixels_to_cloud(&reference);
    let sub_cloud = pixels_to_cloud(&subject);

    let recolored = match method {
        Method::Sinkhorn => sinkhorn_recolor(&ref_cloud, &sub_cloud, sample_size, seed)?,
        Method::Emd => emd_recolor(&ref_cloud, &sub_cloud, sample_size, seed)?,
        Method::Linear => linear_recolor(&ref_cloud, &sub_cloud, sample_size, seed)?,
        Method::Ddib => {
            ddib_recolor(reference_bytes, subject_bytes, &ref_cloud, &sub_cloud, cfg, allow_train)?
        }
    };
    let result = cloud_to_pixels(&recolored, subject.width(), subject.height())?;

    let mut pixel_mse_vs = BTreeMap::new();
    if method == Method::Ddib {
        let baselines: [(&'static str, PointCloud); 3] = [
            ("sinkhorn", sinkhorn_recolor(&ref_cloud, &sub_cloud, sample_size, seed)?),
            ("emd", emd_recolor(&ref_cloud, &sub_cloud, sample_size, seed)?),
            ("linear", linear_recolor(&ref_cloud, &sub_cloud, sample_size, seed)?),
        ];
        for (name, cloud) in baselines {
            let rendered = cloud_to_pixels(&cloud, subject.width(), subject.height())?;
            pixel_mse_vs.insert(name, pixel_mse(&result, &rendered)?);
        }
    }

    let report = TransferReport {
        method: method.name(),
        width: subject.width(),
        height: subject.height(),
        sample_size,
        seed,
        pixel_mse_to_subject: pixel_mse(&result, &subject)?,
        pixel_mse_vs,
    };
    Ok(Transfer { result, report })
}

fn sinkhorn_recolor(
    reference: &PointCloud,
    subject: &PointCloud,
    sample_size: usize,
    seed: u64,
) -> Result<PointCloud> {
    color_convert(reference, subject, sample_size, seed)?.apply(subject)
}

/// Exact-assignment variant of `color_convert`: equal-size subsamples,
/// assignment plan, barycentric projection, displacement extension.
fn emd_recolor(
    reference: &PointCloud,
    subject: &PointCloud,
    sample_size: usize,
    seed: u64,
) -> Result<PointCloud> {
    let k = sample_size.min(reference.n()).min(subject.n());
    let anchors = subject.subsample(k, seed)?;
    let palette = reference.subsample(k, seed.wrapping_add(1))?;
    let plan = ot::emd(&anchors, &palette)?;
    let mapped = ot::barycentric_map(&plan, &anchors, &palette)?;
    ColorMap::Displacement { anchors, mapped }.apply(subject)
}

fn linear_recolor(
    reference: &PointCloud,
    subject: &PointCloud,
    sample_size: usize,
    seed: u64,
) -> Result<PointCloud> {
    let anchors = subject.subsample(sample_size, seed)?;
    let palette = reference.subsample(sample_size, seed.wrapping_add(1))?;
    ot::linear_map_estimate(&anchors, &palette)?.apply(subject)
}

fn ddib_recolor(
    reference_bytes: &[u8],
    subject_bytes: &[u8],
    reference: &PointCloud,
    subject: &PointCloud,
    cfg: &ExperimentConfig,
    allow_train: bool,
) -> Result<PointCloud> {
    let s = cfg.schedule.params().build()?;
    let sub_net = cache::get_or_train(subject_bytes, subject, cfg, allow_train, "subject image")?;
    let ref_net =
        cache::get_or_train(reference_bytes, reference, cfg, allow_train, "reference image")?;
    bridge::translate(&sub_net, &ref_net, &s, subject, cfg.solve.n_steps)
}
