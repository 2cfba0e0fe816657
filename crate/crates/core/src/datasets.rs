//! Synthetic 2D distributions used for bridge experiments.
//!
//! Six named shapes, all sampled with Gaussian jitter (σ = 0.05):
//!
//! - **moons**: two interleaved half-circles of radius 1 centered at (0, 0)
//!   and (1, 0.5),
//! - **checkerboards**: the 8 alternating unit cells of a 4×4 board on
//!   [−2, 2]², uniform within each cell,
//! - **concentric-rings**: circles of radius 1 and 2 about the origin,
//! - **concentric-squares**: square outlines of half-width 1 and 2 about the
//!   origin,
//! - **parallel-rings**: two circles of radius 0.8 centered at (±1.2, 0),
//! - **parallel-squares**: two square outlines of half-width 0.8 centered at
//!   (±1.2, 0).
//!
//! Generation is a pure function of `(kind, n, seed)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cloud::PointCloud;
use crate::{Error, Result};

const JITTER: f64 = 0.05;

/// The six named 2D distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Moons,
    Checkerboards,
    ConcentricRings,
    ConcentricSquares,
    ParallelRings,
    ParallelSquares,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 6] = [
        DatasetKind::Moons,
        DatasetKind::Checkerboards,
        DatasetKind::ConcentricRings,
        DatasetKind::ConcentricSquares,
        DatasetKind::ParallelRings,
        DatasetKind::ParallelSquares,
    ];

    /// Full CLI name, e.g. `concentric-rings`.
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Moons => "moons",
            DatasetKind::Checkerboards => "checkerboards",
            DatasetKind::ConcentricRings => "concentric-rings",
            DatasetKind::ConcentricSquares => "concentric-squares",
            DatasetKind::ParallelRings => "parallel-rings",
            DatasetKind::ParallelSquares => "parallel-squares",
        }
    }

    /// Two-letter code used in tables and file names, e.g. `cr`.
    pub fn code(&self) -> &'static str {
        match self {
            DatasetKind::Moons => "m",
            DatasetKind::Checkerboards => "cb",
            DatasetKind::ConcentricRings => "cr",
            DatasetKind::ConcentricSquares => "cs",
            DatasetKind::ParallelRings => "pr",
            DatasetKind::ParallelSquares => "ps",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl serde::Serialize for DatasetKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for DatasetKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        for kind in Self::ALL {
            if key == kind.name() || key == kind.code() {
                return Ok(kind);
            }
        }
        Err(Error::Parameter(format!(
            "unknown dataset kind {s:?} (expected one of: {})",
            Self::ALL.map(|k| k.name()).join(", ")
        )))
    }
}

/// Samples `n` raw (unstandardized) points from the named distribution.
/// Tags are sequential `0..n`.
pub fn generate(kind: DatasetKind, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Parameter("cannot generate an empty cloud".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let (mut x, mut y) = sample_one(kind, &mut rng);
        x += JITTER * rng.sample::<f64, _>(StandardNormal);
        y += JITTER * rng.sample::<f64, _>(StandardNormal);
        coords.push(x);
        coords.push(y);
    }
    PointCloud::new(2, coords, (0..n as u64).collect())
}

fn sample_one(kind: DatasetKind, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let top: bool = rng.gen();
    match kind {
        DatasetKind::Moons => {
            let t = rng.gen_range(0.0..PI);
            if top {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            }
        }
        DatasetKind::Checkerboards => {
            // The 8 cells of a 4x4 board where row and column have equal parity.
            let cell = rng.gen_range(0..8u32);
            let row = cell / 2;
            let col = 2 * (cell % 2) + row % 2;
            let x = rng.gen_range(0.0..1.0);
            let y = rng.gen_range(0.0..1.0);
            (col as f64 + x - 2.0, row as f64 + y - 2.0)
        }
        DatasetKind::ConcentricRings => {
            let r = if top { 1.0 } else { 2.0 };
            circle(rng, 0.0, 0.0, r)
        }
        DatasetKind::ConcentricSquares => {
            let h = if top { 1.0 } else { 2.0 };
            square(rng, 0.0, 0.0, h)
        }
        DatasetKind::ParallelRings => {
            let cx = if top { -1.2 } else { 1.2 };
            circle(rng, cx, 0.0, 0.8)
        }
        DatasetKind::ParallelSquares => {
            let cx = if top { -1.2 } else { 1.2 };
            square(rng, cx, 0.0, 0.8)
        }
    }
}

fn circle(rng: &mut ChaCha8Rng, cx: f64, cy: f64, r: f64) -> (f64, f64) {
    let t = rng.gen_range(0.0..2.0 * PI);
    (cx + r * t.cos(), cy + r * t.sin())
}

/// Uniform point on the outline of the axis-aligned square of half-width `h`.
fn square(rng: &mut ChaCha8Rng, cx: f64, cy: f64, h: f64) -> (f64, f64) {
    let side = rng.gen_range(0..4u32);
    let u = rng.gen_range(-h..h);
    match side {
        0 => (cx + u, cy + h),
        1 => (cx + u, cy - h),
        2 => (cx + h, cy + u),
        _ => (cx - h, cy + u),
    }
}
