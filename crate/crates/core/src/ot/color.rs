//! Example-guided color conversion: subsample the palettes of two images,
//! couple them with entropic transport, and extend the resulting barycentric
//! mapping to full images through a nearest-anchor displacement field.

use crate::cloud::PointCloud;
use crate::{Error, Result};

use super::{barycentric_map, sinkhorn::sinkhorn, AffineMap};

/// Sample sizes beyond this make the dense plan unreasonably large.
pub const MAX_COLOR_SAMPLES: usize = 4096;
/// Around a thousand pixels is plenty to pin down a palette.
pub const DEFAULT_COLOR_SAMPLES: usize = 1000;

/// Internal transport parameters. Colors live in `[-1, 1]^3`, so this
/// regularization sits well below palette separation scales and the plan is
/// effectively a sharp matching; pushing it lower stalls the solver on
/// palettes with many near-ties, and the marginal tolerance only needs to
/// beat the 1/255 quantization of the final pixels by a wide margin.
const COLOR_EPSILON: f64 = 5e-3;
const COLOR_MAX_ITERS: usize = 20_000;
const COLOR_TOL: f64 = 1e-5;

/// A recoloring rule applicable to any cloud of the right dimension.
#[derive(Debug, Clone)]
pub enum ColorMap {
    /// Anchor colors paired one-to-one with their projected counterparts;
    /// a color moves by the displacement of its nearest anchor.
    Displacement { anchors: PointCloud, mapped: PointCloud },
    /// Global affine recoloring.
    Affine(AffineMap),
}

impl ColorMap {
    /// Recolors every point, keeping tags.
    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        match self {
            ColorMap::Affine(map) => map.apply(cloud),
            ColorMap::Displacement { anchors, mapped } => {
                if anchors.n() != mapped.n()
                    || anchors.dim() != mapped.dim()
                    || anchors.is_empty()
                {
                    return Err(Error::Shape(format!(
                        "displacement field needs matching non-empty clouds, got {}x{} and {}x{}",
                        anchors.n(),
                        anchors.dim(),
                        mapped.n(),
                        mapped.dim()
                    )));
                }
                if cloud.dim() != anchors.dim() {
                    return Err(Error::Shape(format!(
                        "map is {}-dimensional, cloud is {}-dimensional",
                        anchors.dim(),
                        cloud.dim()
                    )));
                }
                let d = cloud.dim();
                let mut coords = Vec::with_capacity(cloud.coords().len());
                for p in cloud.coords().chunks_exact(d) {
                    let k = nearest(anchors, p);
                    let a = anchors.point(k);
                    let m = mapped.point(k);
                    for c in 0..d {
                        coords.push(p[c] + (m[c] - a[c]));
                    }
                }
                cloud.with_coords(coords)
            }
        }
    }
}

/// Index of the anchor closest to `p`; ties go to the lowest index.
fn nearest(anchors: &PointCloud, p: &[f64]) -> usize {
    let d = anchors.dim();
    let mut best = 0;
    let mut best_sq = f64::INFINITY;
    for (k, q) in anchors.coords().chunks_exact(d).enumerate() {
        let sq: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if sq < best_sq {
            best_sq = sq;
            best = k;
        }
    }
    best
}

/// Builds the rule that recolors `subject` toward the palette of
/// `reference`. Both clouds are deterministically subsampled to at most
/// `sample_size` colors, an entropic plan couples the samples, and the
/// barycentric projection of the subject sample becomes a displacement
/// field usable on the full image.
pub fn color_convert(
    reference: &PointCloud,
    subject: &PointCloud,
    sample_size: usize,
    seed: u64,
) -> Result<ColorMap> {
    if reference.dim() != 3 || subject.dim() != 3 {
        return Err(Error::Parameter(format!(
            "color conversion expects 3-channel clouds, got dims {} and {}",
            reference.dim(),
            subject.dim()
        )));
    }
    if sample_size == 0 {
        return Err(Error::Parameter("sample_size must be positive".into()));
    }
    if sample_size > MAX_COLOR_SAMPLES {
        return Err(Error::Capacity(format!(
            "sample_size {sample_size} exceeds the {MAX_COLOR_SAMPLES}-color limit"
        )));
    }
    let anchors = subject.subsample(sample_size, seed)?;
    let palette = reference.subsample(sample_size, seed.wrapping_add(1))?;
    let plan = sinkhorn(&anchors, &palette, COLOR_EPSILON, COLOR_MAX_ITERS, COLOR_TOL)?;
    let mapped = barycentric_map(&plan, &anchors, &palette)?;
    Ok(ColorMap::Displacement { anchors, mapped })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 64 well-separated colors on an 8x8 red/green lattice.
    fn lattice_colors(blue: f64) -> PointCloud {
        let mut rows = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                rows.push(vec![
                    -1.0 + 2.0 * i as f64 / 7.0,
                    -1.0 + 2.0 * j as f64 / 7.0,
                    blue,
                ]);
            }
        }
        PointCloud::from_rows(&rows).unwrap()
    }

    #[test]
    fn converting_onto_itself_is_the_identity() {
        let colors = lattice_colors(0.25);
        let map = color_convert(&colors, &colors, 64, 9).unwrap();
        let out = map.apply(&colors).unwrap();
        for (got, want) in out.coords().iter().zip(colors.coords()) {
            assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn gray_subject_takes_on_red_tint() {
        let grays: Vec<Vec<f64>> = (0..64)
            .map(|k| {
                let v = -1.0 + 2.0 * k as f64 / 63.0;
                vec![v, v, v]
            })
            .collect();
        let subject = PointCloud::from_rows(&grays).unwrap();
        let tinted: Vec<Vec<f64>> = (0..64)
            .map(|k| {
                let v = -0.8 + 1.2 * k as f64 / 63.0;
                vec![0.6, v, v]
            })
            .collect();
        let reference = PointCloud::from_rows(&tinted).unwrap();
        let out = color_convert(&reference, &subject, 64, 9)
            .unwrap()
            .apply(&subject)
            .unwrap();
        let n = out.n() as f64;
        let mean_red: f64 = out.coords().chunks_exact(3).map(|p| p[0]).sum::<f64>() / n;
        let mean_blue: f64 = out.coords().chunks_exact(3).map(|p| p[2]).sum::<f64>() / n;
        assert!(
            mean_red > mean_blue + 0.3,
            "red {mean_red} vs blue {mean_blue}"
        );
    }

    #[test]
    fn conversion_is_deterministic_under_seed() {
        let reference = lattice_colors(-0.5);
        let subject = lattice_colors(0.5);
        let a = color_convert(&reference, &subject, 32, 4)
            .unwrap()
            .apply(&subject)
            .unwrap();
        let b = color_convert(&reference, &subject, 32, 4)
            .unwrap()
            .apply(&subject)
            .unwrap();
        assert_eq!(a.coords(), b.coords());
    }

    #[test]
    fn displacement_follows_the_nearest_anchor() {
        let anchors =
            PointCloud::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let mapped =
            PointCloud::from_rows(&[vec![0.5, 0.0, 0.0], vec![1.0, 0.0, 1.0]]).unwrap();
        let map = ColorMap::Displacement { anchors, mapped };
        let cloud = PointCloud::from_rows(&[vec![0.1, 0.0, 0.0], vec![0.9, 1.0, 1.0]]).unwrap();
        let out = map.apply(&cloud).unwrap();
        assert_eq!(out.point(0), &[0.6, 0.0, 0.0]);
        assert_eq!(out.point(1), &[0.9, 0.0, 1.0]);
    }

    #[test]
    fn mismatched_displacement_clouds_are_rejected() {
        let anchors =
            PointCloud::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let mapped = PointCloud::from_rows(&[vec![0.5, 0.0, 0.0]]).unwrap();
        let map = ColorMap::Displacement { anchors: anchors.clone(), mapped };
        assert!(matches!(map.apply(&anchors), Err(Error::Shape(_))));
    }

    #[test]
    fn parameters_are_validated() {
        let colors = lattice_colors(0.0);
        let flat = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            color_convert(&flat, &colors, 10, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            color_convert(&colors, &colors, 0, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            color_convert(&colors, &colors, 4097, 0),
            Err(Error::Capacity(_))
        ));
    }
}
