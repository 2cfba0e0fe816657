//! Binary PPM (P6) rasters and their point-cloud view.
//!
//! Color transfer treats an RGB image as a cloud of 3D points, one per
//! pixel, with channels mapped from `[0, 255]` to `[−1, 1]`. The pixel index
//! (row-major) is stored in the point's tag, so a transformed cloud can be
//! reassembled into an image regardless of point order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::cloud::PointCloud;
use crate::{Error, Result};

/// An 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Raster {
    /// Builds a raster from interleaved RGB bytes, row-major.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter("raster dimensions must be positive".into()));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "{}x{} raster needs {} bytes, got {}",
                width,
                height,
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Reads a binary PPM (`P6`, maxval 255). `#` comments are allowed in the
    /// header.
    pub fn read_ppm<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let magic = next_token(&mut r)?;
        if magic != "P6" {
            return Err(Error::Format(format!(
                "expected PPM magic P6, got {magic:?}"
            )));
        }
        let width: usize = parse_header_int(&mut r, "width")?;
        let height: usize = parse_header_int(&mut r, "height")?;
        let maxval: usize = parse_header_int(&mut r, "maxval")?;
        if maxval != 255 {
            return Err(Error::Format(format!("unsupported maxval {maxval}")));
        }
        let mut data = vec![0u8; 3 * width * height];
        r.read_exact(&mut data).map_err(|e| {
            Error::Format(format!("truncated pixel data for {width}x{height}: {e}"))
        })?;
        Raster::new(width, height, data)
    }

    /// Writes the raster as binary PPM.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn read_ppm_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read_ppm(std::fs::File::open(path)?)
    }

    pub fn write_ppm_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_ppm(std::fs::File::create(path)?)
    }
}

fn next_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        match r.read(&mut byte)? {
            0 => {
                if tok.is_empty() {
                    return Err(Error::Format("unexpected end of PPM header".into()));
                }
                return Ok(tok);
            }
            _ => {
                let c = byte[0] as char;
                if in_comment {
                    if c == '\n' {
                        in_comment = false;
                    }
                } else if c == '#' {
                    in_comment = true;
                } else if c.is_ascii_whitespace() {
                    if !tok.is_empty() {
                        return Ok(tok);
                    }
                } else {
                    tok.push(c);
                }
            }
        }
    }
}

fn parse_header_int<R: BufRead>(r: &mut R, what: &str) -> Result<usize> {
    let tok = next_token(r)?;
    tok.parse()
        .map_err(|e| Error::Format(format!("bad PPM {what} {tok:?}: {e}")))
}

/// Converts a raster to a 3D cloud: channel value `v` maps to `2v/255 − 1`,
/// and the tag of each point is its row-major pixel index.
pub fn pixels_to_cloud(raster: &Raster) -> PointCloud {
    let n = raster.width() * raster.height();
    let coords = raster
        .data()
        .iter()
        .map(|&v| 2.0 * v as f64 / 255.0 - 1.0)
        .collect();
    PointCloud::new(3, coords, (0..n as u64).collect())
        .expect("raster pixels always form a valid cloud")
}

/// Reassembles a 3D cloud into a raster. Each point lands at the pixel named
/// by its tag; coordinates are clamped to `[−1, 1]`, mapped to `[0, 255]`,
/// and rounded half to even.
pub fn cloud_to_pixels(cloud: &PointCloud, width: usize, height: usize) -> Result<Raster> {
    if cloud.dim() != 3 {
        return Err(Error::Shape(format!(
            "expected 3 channels per point, got {}",
            cloud.dim()
        )));
    }
    if cloud.n() != width * height {
        return Err(Error::Shape(format!(
            "{} points cannot fill a {width}x{height} raster",
            cloud.n()
        )));
    }
    let mut data = vec![0u8; 3 * cloud.n()];
    for (tag, p) in cloud.iter() {
        let i = tag as usize;
        if i >= cloud.n() {
            return Err(Error::Shape(format!(
                "tag {tag} outside raster with {} pixels",
                cloud.n()
            )));
        }
        for c in 0..3 {
            let v = (p[c].clamp(-1.0, 1.0) + 1.0) * 255.0 / 2.0;
            data[3 * i + c] = v.round_ties_even() as u8;
        }
    }
    Raster::new(width, height, data)
}

/// Mean squared error between two equal-sized rasters in `[−1, 1]` channel
/// units, averaged over all channels of all pixels.
pub fn pixel_mse(a: &Raster, b: &Raster) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape(format!(
            "cannot compare {}x{} raster with {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = (x as f64 - y as f64) * 2.0 / 255.0;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}
