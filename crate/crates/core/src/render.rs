//! Sphere-tracing renderer for the (optionally deformed) avatar.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geom::{Aabb, Vec3};
use crate::sdf::{estimate_normal, ColorField, DistanceField, ScalarField};
use crate::warp::{Deformation, Region, WarpHints};

/// The march starts where the ray enters the asset box inflated by this factor.
pub const MARCH_BOX_INFLATION: f64 = 1.2;
pub const DEFAULT_HIT_EPS_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shading {
    Headlight,
    Unlit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    pub resolution: [u32; 2],
    /// Absolute hit threshold; defaults to `1e-3 ×` the asset diagonal.
    pub hit_eps: Option<f64>,
    pub max_steps: u32,
    /// Optional cap on the ray parameter.
    pub t_max: Option<f64>,
    /// λ in (0, 1]: fraction of the field value stepped each iteration.
    pub step_scale: f64,
    pub shading: Shading,
    pub background: [u8; 4],
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            resolution: [256, 256],
            hit_eps: None,
            max_steps: 256,
            t_max: None,
            step_scale: 0.5,
            shading: Shading::Headlight,
            background: [0, 0, 0, 0],
            execution: Execution::default(),
        }
    }
}

impl RenderSettings {
    pub fn with_resolution(mut self, resolution: [u32; 2]) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.resolution;
        if w == 0 || h == 0 {
            return Err(Error::invalid("render resolution must be positive"));
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return Err(Error::invalid(format!(
                "step scale must lie in (0, 1], got {}",
                self.step_scale
            )));
        }
        if let Some(e) = self.hit_eps {
            if !(e > 0.0) {
                return Err(Error::invalid("hit_eps must be positive"));
            }
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return Err(Error::invalid("t_max must be positive"));
            }
        }
        if self.max_steps < 16 {
            return Err(Error::invalid("max_steps must be at least 16"));
        }
        Ok(())
    }

    pub fn hit_eps_for(&self, bounds: &Aabb) -> f64 {
        self.hit_eps.unwrap_or(DEFAULT_HIT_EPS_FRACTION * bounds.diagonal())
    }
}

/// RGBA8 image, row-major from the top-left pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: [u8; 4]) -> Self {
        Self {
            width,
            height,
            pixels: fill.repeat((width * height) as usize),
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = 4 * (y * self.width + x) as usize;
        self.pixels[i..i + 4].try_into().unwrap()
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgba: [u8; 4]) {
        let i = 4 * (y * self.width + x) as usize;
        self.pixels[i..i + 4].copy_from_slice(&rgba);
    }

    /// Pixels with full alpha.
    pub fn coverage(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.height)
            .flat_map(move |y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.pixel(x, y)[3] == 255)
    }

    /// Centroid of the covered pixels (pixel centers), if any.
    pub fn coverage_centroid(&self, keep: impl Fn(u32, u32) -> bool) -> Option<[f64; 2]> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in self.coverage().filter(|&(x, y)| keep(x, y)) {
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            n += 1;
        }
        (n > 0).then(|| [sx / n as f64, sy / n as f64])
    }

    /// Mean absolute channel difference, as a fraction of full scale.
    pub fn mean_abs_delta(&self, other: &Image) -> Result<f64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::invalid("images differ in size"));
        }
        let total: u64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| a.abs_diff(*b) as u64)
            .sum();
        Ok(total as f64 / (self.pixels.len() as f64 * 255.0))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.pixels)?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND);
        let mut reader = decoder.read_info().map_err(|e| Error::format(path, e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::format(path, e.to_string()))?;
        if info.color_type != png::ColorType::Rgba || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::format(path, "expected 8-bit RGBA"));
        }
        buf.truncate(info.buffer_size());
        Ok(Self {
            width: info.width,
            height: info.height,
            pixels: buf,
        })
    }

    /// Tiles equally sized images into a grid with `columns` columns.
    pub fn contact_sheet(images: &[Image], columns: usize, background: [u8; 4]) -> Result<Image> {
        let first = images
            .first()
            .ok_or_else(|| Error::invalid("contact sheet needs at least one image"))?;
        if images
            .iter()
            .any(|i| (i.width, i.height) != (first.width, first.height))
            || columns == 0
        {
            return Err(Error::invalid("contact sheet images must share one size"));
        }
        let rows = images.len().div_ceil(columns);
        let mut sheet = Image::new(first.width * columns as u32, first.height * rows as u32, background);
        for (k, img) in images.iter().enumerate() {
            let (ox, oy) = ((k % columns) as u32 * first.width, (k / columns) as u32 * first.height);
            for y in 0..img.height {
                for x in 0..img.width {
                    sheet.set_pixel(ox + x, oy + y, img.pixel(x, y));
                }
            }
        }
        Ok(sheet)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RenderStats {
    pub hits: u64,
    pub misses: u64,
    /// Rays that ran out of steps before hitting or leaving the box.
    pub exhausted: u64,
    /// Degenerate normals at hit points.
    pub flat_normals: u64,
    pub head_hits: u64,
    pub torso_hits: u64,
    pub neck_hits: u64,
}

impl RenderStats {
    fn merge(&mut self, o: &RenderStats) {
        self.hits += o.hits;
        self.misses += o.misses;
        self.exhausted += o.exhausted;
        self.flat_normals += o.flat_normals;
        self.head_hits += o.head_hits;
        self.torso_hits += o.torso_hits;
        self.neck_hits += o.neck_hits;
    }
}

/// What a pixel's ray found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelLabel {
    Miss,
    /// Surface hit without a pose deformation.
    Hit,
    Head,
    Torso,
    Neck,
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: Image,
    pub stats: RenderStats,
    /// Row-major, one per pixel.
    pub labels: Vec<PixelLabel>,
}

impl Rendered {
    pub fn label(&self, x: u32, y: u32) -> PixelLabel {
        self.labels[(y * self.image.width + x) as usize]
    }

    /// Mean pixel center of the pixels carrying `label`.
    pub fn label_centroid(&self, label: PixelLabel) -> Option<[f64; 2]> {
        let w = self.image.width;
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (k, l) in self.labels.iter().enumerate() {
            if *l == label {
                sx += (k as u32 % w) as f64 + 0.5;
                sy += (k as u32 / w) as f64 + 0.5;
                n += 1;
            }
        }
        (n > 0).then(|| [sx / n as f64, sy / n as f64])
    }
}

/// The field pulled back through a deformation: `f(W⁻¹(x))`.
struct Composed<'a> {
    field: &'a ScalarField,
    deform: Option<&'a Deformation>,
}

impl Composed<'_> {
    #[inline]
    fn canonical(&self, x: &Vec3, hints: &mut WarpHints) -> (Vec3, Option<Region>) {
        match self.deform {
            Some(d) => d.inverse_hinted(x, hints),
            None => (*x, None),
        }
    }
}

impl DistanceField for Composed<'_> {
    fn distance(&self, x: &Vec3) -> f64 {
        let (q, _) = self.canonical(x, &mut WarpHints::default());
        self.field.distance(&q)
    }
}

pub fn render(
    field: &ScalarField,
    color: &ColorField,
    deform: Option<&Deformation>,
    camera: &CameraPose,
    settings: &RenderSettings,
) -> Result<Rendered> {
    settings.validate()?;
    let bounds = field.bounds();
    let deform = deform.filter(|d| !d.is_identity());
    let march_box = match deform {
        Some(d) => d.deformed_bounds(&bounds.inflated(MARCH_BOX_INFLATION)),
        None => bounds.inflated(MARCH_BOX_INFLATION),
    };
    let camera = camera.with_image_size(settings.resolution);
    let eps = settings.hit_eps_for(&bounds);
    let composed = Composed { field, deform };
    let [w, h] = settings.resolution;

    let rows = settings.execution.map_range(h as usize, |j| {
        let mut row = Vec::with_capacity(4 * w as usize);
        let mut labels = Vec::with_capacity(w as usize);
        let mut stats = RenderStats::default();
        for i in 0..w {
            let (rgba, label) = shade_pixel(
                &composed, color, &camera, i, j as u32, &march_box, eps, settings, &mut stats,
            );
            row.extend_from_slice(&rgba);
            labels.push(label);
        }
        (row, labels, stats)
    });
    let mut stats = RenderStats::default();
    let mut pixels = Vec::with_capacity((4 * w * h) as usize);
    let mut labels = Vec::with_capacity((w * h) as usize);
    for (row, l, s) in rows {
        pixels.extend_from_slice(&row);
        labels.extend_from_slice(&l);
        stats.merge(&s);
    }
    Ok(Rendered {
        image: Image {
            width: w,
            height: h,
            pixels,
        },
        stats,
        labels,
    })
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn shade_pixel(
    composed: &Composed,
    color: &ColorField,
    camera: &CameraPose,
    i: u32,
    j: u32,
    march_box: &Aabb,
    eps: f64,
    settings: &RenderSettings,
    stats: &mut RenderStats,
) -> ([u8; 4], PixelLabel) {
    let ray = camera.pixel_ray(i, j);
    let Some((t0, mut t1)) = march_box.ray_interval(&ray.origin, &ray.direction) else {
        stats.misses += 1;
        return (settings.background, PixelLabel::Miss);
    };
    if let Some(tm) = settings.t_max {
        t1 = t1.min(tm);
    }
    let mut t = t0.max(0.0);
    let mut hints = WarpHints::default();
    for _ in 0..settings.max_steps {
        if t > t1 {
            stats.misses += 1;
            return (settings.background, PixelLabel::Miss);
        }
        let x = ray.at(t);
        let (q, region) = composed.canonical(&x, &mut hints);
        let f = composed.field.distance(&q);
        if f <= eps {
            stats.hits += 1;
            let label = match region {
                Some(Region::Head) => {
                    stats.head_hits += 1;
                    PixelLabel::Head
                }
                Some(Region::Torso) => {
                    stats.torso_hits += 1;
                    PixelLabel::Torso
                }
                Some(Region::Neck) => {
                    stats.neck_hits += 1;
                    PixelLabel::Neck
                }
                None => PixelLabel::Hit,
            };
            let albedo = color.color(&q);
            let factor = match settings.shading {
                Shading::Unlit => 1.0,
                Shading::Headlight => {
                    let n = estimate_normal(composed, &x, eps);
                    if n.degenerate {
                        stats.flat_normals += 1;
                    }
                    0.5 + 0.5 * n.normal.dot(&-ray.direction).max(0.0)
                }
            };
            let c = albedo.map(|a| ((a * factor).clamp(0.0, 1.0) * 255.0).round() as u8);
            return ([c[0], c[1], c[2], 255], label);
        }
        t += settings.step_scale * f.max(eps);
    }
    stats.exhausted += 1;
    (settings.background, PixelLabel::Miss)
}

/// `n_views` renders from cameras spaced evenly in azimuth about the
/// vertical axis through `center`, starting at `front`.
pub fn render_turntable(
    field: &ScalarField,
    color: &ColorField,
    deform: Option<&Deformation>,
    front: &CameraPose,
    center: &Vec3,
    n_views: usize,
    settings: &RenderSettings,
) -> Result<Vec<Rendered>> {
    if n_views == 0 {
        return Err(Error::invalid("turntable needs at least one view"));
    }
    (0..n_views)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / n_views as f64;
            render(
                field,
                color,
                deform,
                &front.rotated_about_vertical(center, angle),
                settings,
            )
        })
        .collect()
}
