//! Regular lattices of distance or color samples, trilinearly interpolated,
//! and their binary file formats.
//!
//! Layout on disk (little-endian): 4-byte magic (`SDFG` or `RGBG`), `u32`
//! version = 1, three `u32` dims, six `f32` for the bbox min then max, then
//! the samples x-fastest (`f32`, or three `f32` per voxel for colors).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};

pub const SDF_MAGIC: &[u8; 4] = b"SDFG";
pub const RGB_MAGIC: &[u8; 4] = b"RGBG";
pub const GRID_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 24;

/// Lattice geometry shared by scalar and color grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub dims: [usize; 3],
    pub bounds: Aabb,
    inv_step: Vec3,
}

impl Lattice {
    pub fn new(dims: [usize; 3], bounds: Aabb) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::invalid(format!(
                "grid dims {dims:?} must be at least 2 per axis"
            )));
        }
        if !bounds.is_valid() {
            return Err(Error::invalid("grid bbox min must be below max on every axis"));
        }
        let cells = Vec3::new((dims[0] - 1) as f64, (dims[1] - 1) as f64, (dims[2] - 1) as f64);
        Ok(Self {
            dims,
            bounds,
            inv_step: cells.component_div(&bounds.extent()),
        })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> Vec3 {
        self.inv_step.map(|v| 1.0 / v)
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn point(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let c = self.cell_size();
        self.bounds.min + Vec3::new(x as f64 * c.x, y as f64 * c.y, z as f64 * c.z)
    }

    pub fn point_of(&self, i: usize) -> Vec3 {
        let (nx, ny) = (self.dims[0], self.dims[1]);
        self.point(i % nx, (i / nx) % ny, i / (nx * ny))
    }

    /// Base corner index and fractional offsets of the cell containing `p`,
    /// which must lie inside the bounds.
    #[inline]
    fn locate(&self, p: &Vec3) -> ([usize; 3], [f64; 3]) {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let f = (p[a] - self.bounds.min[a]) * self.inv_step[a];
            let i = (f.floor().max(0.0) as usize).min(self.dims[a] - 2);
            base[a] = i;
            frac[a] = f - i as f64;
        }
        (base, frac)
    }

    #[inline]
    fn trilinear<T, F>(&self, p: &Vec3, sample: F) -> T
    where
        T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
        F: Fn(usize) -> T,
    {
        let ([x, y, z], [tx, ty, tz]) = self.locate(p);
        let sx = 1;
        let sy = self.dims[0];
        let sz = self.dims[0] * self.dims[1];
        let i = self.index(x, y, z);
        let lerp = |a: T, b: T, t: f64| a * (1.0 - t) + b * t;
        let c00 = lerp(sample(i), sample(i + sx), tx);
        let c10 = lerp(sample(i + sy), sample(i + sy + sx), tx);
        let c01 = lerp(sample(i + sz), sample(i + sz + sx), tx);
        let c11 = lerp(sample(i + sz + sy), sample(i + sz + sy + sx), tx);
        lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz)
    }
}

/// Signed distance samples on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub lattice: Lattice,
    pub values: Vec<f32>,
}

impl GridField {
    pub fn new(dims: [usize; 3], bounds: Aabb, values: Vec<f32>) -> Result<Self> {
        let lattice = Lattice::new(dims, bounds)?;
        if values.len() != lattice.len() {
            return Err(Error::invalid(format!(
                "grid has {} values, dims {:?} need {}",
                values.len(),
                dims,
                lattice.len()
            )));
        }
        Ok(Self { lattice, values })
    }

    /// Samples `f` at every lattice point.
    pub fn sample<F>(dims: [usize; 3], bounds: Aabb, exec: crate::Execution, f: F) -> Result<Self>
    where
        F: Fn(&Vec3) -> f64 + Sync + Send,
    {
        let lattice = Lattice::new(dims, bounds)?;
        let values = exec.map_range(lattice.len(), |i| f(&lattice.point_of(i)) as f32);
        Ok(Self { lattice, values })
    }

    pub fn bounds(&self) -> Aabb {
        self.lattice.bounds
    }

    /// Trilinear interpolation inside the box; outside, the boundary value
    /// plus the distance to the box.
    #[inline]
    pub fn distance(&self, p: &Vec3) -> f64 {
        let b = &self.lattice.bounds;
        if b.contains(p) {
            self.lattice.trilinear(p, |i| self.values[i] as f64)
        } else {
            let q = b.clamp(p);
            self.lattice.trilinear(&q, |i| self.values[i] as f64) + (p - q).norm()
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = header(SDF_MAGIC, &self.lattice);
        out.reserve(self.values.len() * 4);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let lattice = parse_header(path, &bytes, SDF_MAGIC, 1)?;
        let values = floats(&bytes[HEADER_LEN..]);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(path, "non-finite distance sample"));
        }
        Ok(Self { lattice, values })
    }
}

/// RGB samples on a lattice, clamped to `[0, 1]` on evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorGrid {
    pub lattice: Lattice,
    pub values: Vec<[f32; 3]>,
}

impl ColorGrid {
    pub fn new(dims: [usize; 3], bounds: Aabb, values: Vec<[f32; 3]>) -> Result<Self> {
        let lattice = Lattice::new(dims, bounds)?;
        if values.len() != lattice.len() {
            return Err(Error::invalid("color grid value count does not match dims"));
        }
        Ok(Self { lattice, values })
    }

    pub fn sample<F>(dims: [usize; 3], bounds: Aabb, exec: crate::Execution, f: F) -> Result<Self>
    where
        F: Fn(&Vec3) -> [f64; 3] + Sync + Send,
    {
        let lattice = Lattice::new(dims, bounds)?;
        let values = exec.map_range(lattice.len(), |i| f(&lattice.point_of(i)).map(|c| c as f32));
        Ok(Self { lattice, values })
    }

    /// Queries outside the box are clamped to its nearest point.
    pub fn color(&self, p: &Vec3) -> [f64; 3] {
        let q = self.lattice.bounds.clamp(p);
        let v = self.lattice.trilinear(&q, |i| {
            let c = self.values[i];
            Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)
        });
        [v.x, v.y, v.z].map(|c| c.clamp(0.0, 1.0))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = header(RGB_MAGIC, &self.lattice);
        out.reserve(self.values.len() * 12);
        for v in &self.values {
            for c in v {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let lattice = parse_header(path, &bytes, RGB_MAGIC, 3)?;
        let flat = floats(&bytes[HEADER_LEN..]);
        let values = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Self { lattice, values })
    }
}

fn header(magic: &[u8; 4], lattice: &Lattice) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(magic);
    out.extend_from_slice(&GRID_VERSION.to_le_bytes());
    for d in lattice.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for c in lattice.bounds.min.iter().chain(lattice.bounds.max.iter()) {
        out.extend_from_slice(&(*c as f32).to_le_bytes());
    }
    out
}

fn parse_header(path: &Path, bytes: &[u8], magic: &[u8; 4], channels: usize) -> Result<Lattice> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "file shorter than grid header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            path,
            format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
        ));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    let version = u32_at(4);
    if version != GRID_VERSION {
        return Err(Error::format(path, format!("unsupported grid version {version}")));
    }
    let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
    let min = Vec3::new(f32_at(20), f32_at(24), f32_at(28));
    let max = Vec3::new(f32_at(32), f32_at(36), f32_at(40));
    let lattice = Lattice::new(dims, Aabb::new(min, max)).map_err(|e| Error::format(path, e.to_string()))?;
    let expected = HEADER_LEN + lattice.len() * channels * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} bytes for dims {dims:?}, found {}", bytes.len()),
        ));
    }
    Ok(lattice)
}

fn floats(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}
