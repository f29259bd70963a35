//! Raster and flow containers plus the coordinate conventions shared by every module.
//!
//! Pixel `(x, y)` has `x` pointing right and `y` pointing down, with the origin at the
//! center of the top-left sample. Flows are forward displacements in pixel units: the
//! corrected position of pixel `p` is `p + F(p)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Slack for points that land a rounding error outside the sampling domain.
pub(crate) const DOMAIN_EPS: f64 = 1e-6;

/// A continuous 2D point in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        math::hypot(self.x - other.x, self.y - other.y)
    }
}

impl core::ops::Add<[f64; 2]> for Point {
    type Output = Point;
    fn add(self, rhs: [f64; 2]) -> Point {
        Point::new(self.x + rhs[0], self.y + rhs[1])
    }
}

impl core::ops::Sub<[f64; 2]> for Point {
    type Output = Point;
    fn sub(self, rhs: [f64; 2]) -> Point {
        Point::new(self.x - rhs[0], self.y - rhs[1])
    }
}

/// Centered, isotropically scaled coordinates used by the distortion models.
///
/// `u = (x - cx) / scale`, `v = (y - cy) / scale` with the center at the middle of the
/// pixel lattice and `scale = max(width, height) / 2`, so model parameters do not
/// depend on image resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedCoords {
    pub cx: f64,
    pub cy: f64,
    pub scale: f64,
}

impl NormalizedCoords {
    pub fn new(width: usize, height: usize) -> Self {
        let scale = (width.max(height) as f64 / 2.0).max(0.5);
        NormalizedCoords {
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            scale,
        }
    }

    #[inline]
    pub fn to_normalized(&self, p: Point) -> (f64, f64) {
        ((p.x - self.cx) / self.scale, (p.y - self.cy) / self.scale)
    }

    #[inline]
    pub fn to_pixel(&self, u: f64, v: f64) -> Point {
        Point::new(self.cx + u * self.scale, self.cy + v * self.scale)
    }
}

/// Bilinear footprint of a continuous position: two columns, two rows and weights.
#[derive(Debug, Clone, Copy)]
struct Footprint {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    tx: f64,
    ty: f64,
}

impl Footprint {
    /// `None` when `p` is outside `[0, w-1] x [0, h-1]` by more than [`DOMAIN_EPS`].
    fn locate(p: Point, width: usize, height: usize) -> Option<Self> {
        let max_x = (width - 1) as f64;
        let max_y = (height - 1) as f64;
        if !(p.x >= -DOMAIN_EPS
            && p.x <= max_x + DOMAIN_EPS
            && p.y >= -DOMAIN_EPS
            && p.y <= max_y + DOMAIN_EPS)
        {
            return None;
        }
        Some(Self::clamped(p, width, height))
    }

    fn clamped(p: Point, width: usize, height: usize) -> Self {
        let max_x = (width - 1) as f64;
        let max_y = (height - 1) as f64;
        let x = if p.x.is_nan() {
            0.0
        } else {
            p.x.clamp(0.0, max_x)
        };
        let y = if p.y.is_nan() {
            0.0
        } else {
            p.y.clamp(0.0, max_y)
        };
        let x0 = math::floor(x) as usize;
        let y0 = math::floor(y) as usize;
        Footprint {
            x0,
            x1: (x0 + 1).min(width - 1),
            y0,
            y1: (y0 + 1).min(height - 1),
            tx: x - x0 as f64,
            ty: y - y0 as f64,
        }
    }

    /// Corner indices paired with their weights, skipping zero-weight corners.
    fn taps(&self, width: usize) -> impl Iterator<Item = (usize, f64)> {
        let w = [
            (self.y0 * width + self.x0, (1.0 - self.tx) * (1.0 - self.ty)),
            (self.y0 * width + self.x1, self.tx * (1.0 - self.ty)),
            (self.y1 * width + self.x0, (1.0 - self.tx) * self.ty),
            (self.y1 * width + self.x1, self.tx * self.ty),
        ];
        w.into_iter().filter(|&(_, weight)| weight != 0.0)
    }
}

/// An RGB or RGBA raster with samples in `[0, 1]` and an optional validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    valid: Option<Vec<bool>>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image dimensions must be positive"));
        }
        if channels != 3 && channels != 4 {
            return Err(Error::InvalidInput("images must have 3 or 4 channels"));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(
                "sample count does not match dimensions",
            ));
        }
        if data.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidInput(
                "samples must be finite and within [0, 1]",
            ));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
            valid: None,
        })
    }

    /// Builds an image by evaluating `f(x, y)` per pixel; samples are clamped to `[0, 1]`.
    pub fn from_fn<F>(width: usize, height: usize, channels: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> [f32; 4],
    {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                data.extend(px[..channels].iter().map(|s| {
                    if s.is_nan() {
                        0.0
                    } else {
                        s.clamp(0.0, 1.0)
                    }
                }));
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Attaches a validity mask. Samples of invalid pixels are zeroed.
    pub fn with_mask(mut self, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != self.width * self.height {
            return Err(Error::InvalidInput("mask length does not match dimensions"));
        }
        for (i, _) in valid.iter().enumerate().filter(|(_, v)| !**v) {
            self.data[i * self.channels..(i + 1) * self.channels].fill(0.0);
        }
        self.valid = if valid.iter().all(|v| *v) {
            None
        } else {
            Some(valid)
        };
        Ok(self)
    }

    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
        valid: Vec<bool>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        let valid = if valid.iter().all(|v| *v) {
            None
        } else {
            Some(valid)
        };
        ImageBuffer {
            width,
            height,
            channels,
            data,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.as_ref().map_or(true, |m| m[y * self.width + x])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_ref().map_or(self.width * self.height, |m| {
            m.iter().filter(|v| **v).count()
        })
    }

    /// Bilinear sample at `p`. `None` outside the lattice or when a contributing
    /// (non-zero weight) pixel is invalid. Exact at integer positions.
    pub fn sample_bilinear(&self, p: Point) -> Option<[f32; 4]> {
        let fp = Footprint::locate(p, self.width, self.height)?;
        let mut acc = [0.0f64; 4];
        for (idx, weight) in fp.taps(self.width) {
            if let Some(m) = &self.valid {
                if !m[idx] {
                    return None;
                }
            }
            let px = &self.data[idx * self.channels..(idx + 1) * self.channels];
            for (a, s) in acc.iter_mut().zip(px) {
                *a += weight * f64::from(*s);
            }
        }
        let mut out = [0.0f32; 4];
        for (o, a) in out.iter_mut().zip(acc) {
            *o = (a as f32).clamp(0.0, 1.0);
        }
        Some(out)
    }

    /// Copies out the `width x height` block starting at `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x + width > self.width || y + height > self.height {
            return Err(Error::InvalidInput("crop rectangle exceeds the image"));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(width * height * c);
        let mut valid = Vec::with_capacity(width * height);
        for row in y..y + height {
            let start = (row * self.width + x) * c;
            data.extend_from_slice(&self.data[start..start + width * c]);
            valid.extend((x..x + width).map(|col| self.is_valid(col, row)));
        }
        Ok(Self::from_parts(width, height, c, data, valid))
    }
}

/// A dense forward displacement field in pixel units with an optional validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f32; 2]>,
    valid: Option<Vec<bool>>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<[f32; 2]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("flow dimensions must be positive"));
        }
        if vectors.len() != width * height {
            return Err(Error::InvalidInput(
                "vector count does not match dimensions",
            ));
        }
        if vectors
            .iter()
            .any(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(Error::InvalidInput("flow vectors must be finite"));
        }
        Ok(FlowField {
            width,
            height,
            vectors,
            valid: None,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width: width.max(1),
            height: height.max(1),
            vectors: vec![[0.0; 2]; width.max(1) * height.max(1)],
            valid: None,
        }
    }

    /// Builds a flow from `f(x, y)`; `None` marks the pixel invalid.
    pub fn from_fn<F>(width: usize, height: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> Option<[f64; 2]> + Sync + Send,
    {
        let width = width.max(1);
        let height = height.max(1);
        let mut cells: Vec<Option<[f32; 2]>> = vec![None; width * height];
        crate::par::for_each_row(&mut cells, width, |y, row| {
            for (x, cell) in row.iter_mut().enumerate() {
                *cell = f(x, y)
                    .map(|v| [v[0] as f32, v[1] as f32])
                    .filter(|v| v[0].is_finite() && v[1].is_finite());
            }
        });
        let valid: Vec<bool> = cells.iter().map(Option::is_some).collect();
        let vectors = cells.into_iter().map(|c| c.unwrap_or([0.0; 2])).collect();
        FlowField::from_parts(width, height, vectors, valid)
    }

    /// Attaches a validity mask. Vectors of invalid pixels are zeroed.
    pub fn with_mask(mut self, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != self.vectors.len() {
            return Err(Error::InvalidInput("mask length does not match dimensions"));
        }
        for (v, ok) in self.vectors.iter_mut().zip(&valid) {
            if !ok {
                *v = [0.0; 2];
            }
        }
        self.valid = if valid.iter().all(|v| *v) {
            None
        } else {
            Some(valid)
        };
        Ok(self)
    }

    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        vectors: Vec<[f32; 2]>,
        valid: Vec<bool>,
    ) -> Self {
        FlowField {
            width,
            height,
            vectors,
            valid: None,
        }
        .with_mask(valid)
        .expect("mask length matches by construction")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.vectors[y * self.width + x]
    }

    #[inline]
    pub(crate) fn get_f64(&self, x: usize, y: usize) -> [f64; 2] {
        let v = self.vectors[y * self.width + x];
        [f64::from(v[0]), f64::from(v[1])]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.as_ref().map_or(true, |m| m[y * self.width + x])
    }

    pub fn valid_count(&self) -> usize {
        self.valid
            .as_ref()
            .map_or(self.vectors.len(), |m| m.iter().filter(|v| **v).count())
    }

    /// Mean vector length over valid pixels (0 for an empty valid set).
    pub fn mean_magnitude(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, v) in self.vectors.iter().enumerate() {
            if self.valid.as_ref().map_or(true, |m| m[i]) {
                sum += math::hypot(f64::from(v[0]), f64::from(v[1]));
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Bilinear flow lookup with the position clamped into the lattice.
    #[inline]
    pub(crate) fn sample_clamped(&self, p: Point) -> [f64; 2] {
        let fp = Footprint::clamped(p, self.width, self.height);
        self.blend(&fp)
    }

    #[inline]
    fn blend(&self, fp: &Footprint) -> [f64; 2] {
        let mut acc = [0.0f64; 2];
        for (idx, weight) in fp.taps(self.width) {
            let v = self.vectors[idx];
            acc[0] += weight * f64::from(v[0]);
            acc[1] += weight * f64::from(v[1]);
        }
        acc
    }

    /// Copies out the `width x height` block starting at `(x, y)`. Vectors are unchanged.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x + width > self.width || y + height > self.height {
            return Err(Error::InvalidInput("crop rectangle exceeds the flow"));
        }
        let mut vectors = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for row in y..y + height {
            let start = row * self.width + x;
            vectors.extend_from_slice(&self.vectors[start..start + width]);
            valid.extend((x..x + width).map(|col| self.is_valid(col, row)));
        }
        Ok(Self::from_parts(width, height, vectors, valid))
    }

    /// Resamples the field to `width x height`, keeping the lattice centers aligned and
    /// multiplying vectors by the per-axis size ratio.
    pub fn resize(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("flow dimensions must be positive"));
        }
        if (width, height) == self.dims() {
            return Ok(self.clone());
        }
        let rx = width as f64 / self.width as f64;
        let ry = height as f64 / self.height as f64;
        let src_c = (
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        );
        let dst_c = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        Ok(FlowField::from_fn(width, height, |x, y| {
            let p = Point::new(
                src_c.0 + (x as f64 - dst_c.0) / rx,
                src_c.1 + (y as f64 - dst_c.1) / ry,
            );
            let v = self.sample_clamped(p);
            Some([v[0] * rx, v[1] * ry])
        }))
    }
}

fn check_same(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::mismatch(a, b))
    }
}

/// Average endpoint error: the mean Euclidean distance between corresponding vectors,
/// taken over pixels valid in both fields.
pub fn epe(a: &FlowField, b: &FlowField) -> Result<f64> {
    check_same(a.dims(), b.dims())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (va, vb)) in a.vectors.iter().zip(&b.vectors).enumerate() {
        let ok_a = a.valid.as_ref().map_or(true, |m| m[i]);
        let ok_b = b.valid.as_ref().map_or(true, |m| m[i]);
        if ok_a && ok_b {
            sum += math::hypot(
                f64::from(va[0]) - f64::from(vb[0]),
                f64::from(va[1]) - f64::from(vb[1]),
            );
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("fields share no valid pixels"));
    }
    Ok(sum / n as f64)
}

/// Multiplies every vector by `k`; `k = -1` reverses the flow.
pub fn scale_flow(f: &FlowField, k: f64) -> FlowField {
    let vectors = f
        .vectors
        .iter()
        .map(|v| [(f64::from(v[0]) * k) as f32, (f64::from(v[1]) * k) as f32])
        .collect();
    FlowField {
        width: f.width,
        height: f.height,
        vectors,
        valid: f.valid.clone(),
    }
}

/// Bilinear interpolation of the flow at a continuous position.
pub fn sample_flow_bilinear(f: &FlowField, p: Point) -> Result<[f64; 2]> {
    let fp =
        Footprint::locate(p, f.width, f.height).ok_or(Error::OutOfBounds { x: p.x, y: p.y })?;
    Ok(f.blend(&fp))
}
