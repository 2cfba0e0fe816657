//! Tagged point clouds and per-axis standardization.
//!
//! A [`PointCloud`] is an ordered set of `d`-dimensional points. Every point
//! carries an integer tag that survives encoding, decoding, and translation,
//! so a translated point can always be traced back to its source (for images,
//! the tag is the pixel index).
//!
//! Clouds round-trip through a small CSV format with header
//! `x0,x1,...,tag`, one point per row.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// An ordered, tagged set of `d`-dimensional points, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    tags: Vec<u64>,
}

impl PointCloud {
    /// Builds a cloud from flat row-major coordinates and one tag per point.
    ///
    /// Coordinates must be finite and tags unique.
    pub fn new(dim: usize, coords: Vec<f64>, tags: Vec<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("point dimension must be positive".into()));
        }
        if coords.len() != dim * tags.len() {
            return Err(Error::Shape(format!(
                "{} coordinates do not form {} points of dim {}",
                coords.len(),
                tags.len(),
                dim
            )));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite coordinate {c}")));
        }
        let mut sorted = tags.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Degenerate("duplicate point tags".into()));
        }
        Ok(Self { dim, coords, tags })
    }

    /// Builds a cloud from rows, assigning sequential tags `0..n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("rows have differing dimensions".into()));
        }
        let coords = rows.iter().flatten().copied().collect();
        Self::new(dim, coords, (0..rows.len() as u64).collect())
    }

    /// Replaces the coordinates, keeping dimensions and tags.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, coords, self.tags.clone())
    }

    pub fn n(&self) -> usize {
        self.tags.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tag(&self, i: usize) -> u64 {
        self.tags[i]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn tags(&self) -> &[u64] {
        &self.tags
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.tags
            .iter()
            .copied()
            .zip(self.coords.chunks_exact(self.dim))
    }

    /// Per-axis `(min, max)` over all points. Errors on an empty cloud.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return Err(Error::Degenerate("empty cloud has no bounding box".into()));
        }
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.coords.chunks_exact(self.dim) {
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Ok((lo, hi))
    }

    /// Picks exactly `k` evenly spaced points (all of them when `n <= k`),
    /// shifted by a seeded offset: deterministic under `(k, seed)`.
    pub fn subsample(&self, k: usize, seed: u64) -> Result<PointCloud> {
        if k == 0 {
            return Err(Error::Parameter("subsample size must be positive".into()));
        }
        let n = self.n();
        if n <= k {
            return Ok(self.clone());
        }
        let last = (k - 1) * n / k;
        let offset = (seed % (n - last) as u64) as usize;
        let mut coords = Vec::with_capacity(k * self.dim);
        let mut tags = Vec::with_capacity(k);
        for i in 0..k {
            let idx = i * n / k + offset;
            coords.extend_from_slice(self.point(idx));
            tags.push(self.tag(idx));
        }
        PointCloud::new(self.dim, coords, tags)
    }

    /// Writes the cloud as CSV with header `x0,...,x{d-1},tag`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = String::new();
        for a in 0..self.dim {
            let _ = write!(line, "x{a},");
        }
        line.push_str("tag\n");
        w.write_all(line.as_bytes())?;
        for (tag, p) in self.iter() {
            line.clear();
            for c in p {
                let _ = write!(line, "{c},");
            }
            let _ = writeln!(line, "{tag}");
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Parses the CSV format written by [`Self::write_csv`]. Errors carry the
    /// offending 1-based line number.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Format("empty point file".into()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 2 || cols.last() != Some(&"tag") {
            return Err(Error::Format(format!(
                "line 1: expected header x0,...,tag, got {header:?}"
            )));
        }
        let dim = cols.len() - 1;
        for (a, c) in cols[..dim].iter().enumerate() {
            if *c != format!("x{a}") {
                return Err(Error::Format(format!(
                    "line 1: expected column x{a}, got {c:?}"
                )));
            }
        }
        let mut coords = Vec::new();
        let mut tags = Vec::new();
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Format(format!(
                    "line {lineno}: expected {} fields, got {}",
                    dim + 1,
                    fields.len()
                )));
            }
            for f in &fields[..dim] {
                coords.push(f.trim().parse::<f64>().map_err(|e| {
                    Error::Format(format!("line {lineno}: bad coordinate {f:?}: {e}"))
                })?);
            }
            tags.push(fields[dim].trim().parse::<u64>().map_err(|e| {
                Error::Format(format!("line {lineno}: bad tag {:?}: {e}", fields[dim]))
            })?);
        }
        Self::new(dim, coords, tags)
    }

    pub fn write_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// An invertible per-axis affine transform fitted to a cloud: subtract the
/// mean, divide by the population standard deviation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Fits to a cloud. Requires at least two points and nonzero variance on
    /// every axis.
    pub fn fit(cloud: &PointCloud) -> Result<Self> {
        if cloud.n() < 2 {
            return Err(Error::Degenerate(
                "standardization needs at least two points".into(),
            ));
        }
        let (n, d) = (cloud.n() as f64, cloud.dim());
        let mut mean = vec![0.0; d];
        for p in cloud.coords().chunks_exact(d) {
            for a in 0..d {
                mean[a] += p[a];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for p in cloud.coords().chunks_exact(d) {
            for a in 0..d {
                var[a] += (p[a] - mean[a]).powi(2);
            }
        }
        let mut scale = Vec::with_capacity(d);
        for (a, v) in var.iter().enumerate() {
            let sd = (v / n).sqrt();
            if sd < 1e-12 {
                return Err(Error::Degenerate(format!("axis {a} has zero variance")));
            }
            scale.push(sd);
        }
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_point(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(a, x)| (x - self.mean[a]) / self.scale[a])
            .collect()
    }

    pub fn invert_point(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(a, x)| x * self.scale[a] + self.mean[a])
            .collect()
    }

    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        self.map(cloud, |this, p| this.apply_point(p))
    }

    pub fn invert(&self, cloud: &PointCloud) -> Result<PointCloud> {
        self.map(cloud, |this, p| this.invert_point(p))
    }

    fn map(
        &self,
        cloud: &PointCloud,
        f: impl Fn(&Self, &[f64]) -> Vec<f64>,
    ) -> Result<PointCloud> {
        if cloud.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "standardizer has dim {}, cloud has dim {}",
                self.dim(),
                cloud.dim()
            )));
        }
        let mut coords = Vec::with_capacity(cloud.coords().len());
        for p in cloud.coords().chunks_exact(cloud.dim()) {
            coords.extend(f(self, p));
        }
        cloud.with_coords(coords)
    }
}

/// Fits a standardizer to `cloud` and returns the standardized copy with it.
pub fn standardize(cloud: &PointCloud) -> Result<(PointCloud, Standardizer)> {
    let st = Standardizer::fit(cloud)?;
    Ok((st.apply(cloud)?, st))
}
