//! Warping source images into (distorted image, ground-truth flow) pairs.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::{
    flow_field, forward_map, sample_params_with, DistortionParams, DistortionType, ParamRange,
};
use crate::types::{FlowField, ImageBuffer, NormalizedCoords, Point};

/// Smallest source accepted by [`distort_image`].
pub const MIN_SOURCE_SIZE: usize = 64;

/// Parameter draws attempted per pair before the source is given up.
pub const MAX_REDRAWS: usize = 10;

/// A pixel rectangle `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl CropRect {
    pub fn full(width: usize, height: usize) -> Self {
        CropRect {
            x: 0,
            y: 0,
            width,
            height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropOptions {
    /// Reject valid regions narrower or shorter than this.
    pub min_width: usize,
    pub min_height: usize,
    /// Center-crop the valid region further to exactly this size.
    pub output: Option<(usize, usize)>,
}

impl Default for CropOptions {
    fn default() -> Self {
        Self::to_size(256, 256)
    }
}

impl CropOptions {
    /// Keep the whole valid rectangle.
    pub fn maximal() -> Self {
        CropOptions {
            min_width: 1,
            min_height: 1,
            output: None,
        }
    }

    pub fn to_size(width: usize, height: usize) -> Self {
        CropOptions {
            min_width: width,
            min_height: height,
            output: Some((width, height)),
        }
    }
}

fn check_source(src: &ImageBuffer) -> Result<()> {
    if src.width() < MIN_SOURCE_SIZE || src.height() < MIN_SOURCE_SIZE {
        return Err(Error::InvalidInput("source image must be at least 64x64"));
    }
    Ok(())
}

/// Samples `src` through the model over `rect` of the full-size lattice.
fn warp_region(src: &ImageBuffer, params: &DistortionParams, rect: CropRect) -> ImageBuffer {
    let geom = NormalizedCoords::new(src.width(), src.height());
    let c = src.channels();
    let mut cells: Vec<Option<[f32; 4]>> = vec![None; rect.width * rect.height];
    crate::par::for_each_row(&mut cells, rect.width, |row, out| {
        let y = rect.y + row;
        for (col, cell) in out.iter_mut().enumerate() {
            let p = Point::new((rect.x + col) as f64, y as f64);
            *cell = forward_map(params, p, &geom)
                .ok()
                .and_then(|q| src.sample_bilinear(q));
        }
    });
    let mut data = Vec::with_capacity(cells.len() * c);
    let mut valid = Vec::with_capacity(cells.len());
    for cell in cells {
        valid.push(cell.is_some());
        data.extend_from_slice(&cell.unwrap_or([0.0; 4])[..c]);
    }
    ImageBuffer::from_parts(rect.width, rect.height, c, data, valid)
}

/// Warps `src` so that the distorted image `D` satisfies `D(p) = src(forward_map(p))`.
///
/// Pixels whose corrected position falls outside `src` are marked invalid in both the
/// image and the returned ground-truth flow.
pub fn distort_image(
    src: &ImageBuffer,
    params: &DistortionParams,
) -> Result<(ImageBuffer, FlowField)> {
    check_source(src)?;
    let img = warp_region(src, params, CropRect::full(src.width(), src.height()));
    let flow = flow_field(params, src.width(), src.height());
    let valid: Vec<bool> = (0..src.height())
        .flat_map(|y| (0..src.width()).map(move |x| (x, y)))
        .map(|(x, y)| img.is_valid(x, y) && flow.is_valid(x, y))
        .collect();
    let img = img.with_mask(valid.clone())?;
    let flow = flow.with_mask(valid)?;
    Ok((img, flow))
}

/// Like [`distort_image`] but only evaluates the pixels inside `rect`.
pub fn distort_region(
    src: &ImageBuffer,
    params: &DistortionParams,
    rect: CropRect,
) -> Result<ImageBuffer> {
    check_source(src)?;
    if rect.width == 0
        || rect.height == 0
        || rect.x + rect.width > src.width()
        || rect.y + rect.height > src.height()
    {
        return Err(Error::InvalidInput("region exceeds the source image"));
    }
    Ok(warp_region(src, params, rect))
}

/// Largest-area rectangle with equal left/right and top/bottom margins whose pixels
/// all satisfy `valid`. Ties prefer the most square rectangle, then the smaller
/// horizontal margin.
pub fn maximal_centered_rect(width: usize, height: usize, valid: &[bool]) -> Option<CropRect> {
    assert_eq!(valid.len(), width * height);
    // Summed-area table of invalid pixels.
    let stride = width + 1;
    let mut sat = vec![0u32; stride * (height + 1)];
    for y in 0..height {
        let mut row = 0u32;
        for x in 0..width {
            row += u32::from(!valid[y * width + x]);
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }
    let bad = |mx: usize, my: usize| -> u32 {
        let (x0, x1, y0, y1) = (mx, width - mx, my, height - my);
        sat[y1 * stride + x1] + sat[y0 * stride + x0]
            - sat[y0 * stride + x1]
            - sat[y1 * stride + x0]
    };

    let mut best: Option<(usize, usize, usize)> = None; // (area, mx, my)
    for mx in 0..=(width - 1) / 2 {
        let my_max = (height - 1) / 2;
        if bad(mx, my_max) != 0 {
            continue;
        }
        // Smallest vertical margin that clears the rectangle; validity is monotone in my.
        let (mut lo, mut hi) = (0usize, my_max);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if bad(mx, mid) == 0 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let my = lo;
        let (w, h) = (width - 2 * mx, height - 2 * my);
        let area = w * h;
        let better = match best {
            None => true,
            Some((a, bmx, bmy)) => {
                let (bw, bh) = (width - 2 * bmx, height - 2 * bmy);
                area > a || (area == a && w.abs_diff(h) < bw.abs_diff(bh))
            }
        };
        if better {
            best = Some((area, mx, my));
        }
    }
    best.map(|(_, mx, my)| CropRect {
        x: mx,
        y: my,
        width: width - 2 * mx,
        height: height - 2 * my,
    })
}

/// Crops an (image, flow) pair to the maximal centered rectangle of valid pixels,
/// then optionally center-crops to the configured output size.
///
/// Flow vectors are copied unchanged; only positions are re-indexed.
pub fn crop_valid(
    img: &ImageBuffer,
    flow: &FlowField,
    opts: &CropOptions,
) -> Result<(ImageBuffer, FlowField, CropRect)> {
    if img.dims() != flow.dims() {
        return Err(Error::mismatch(img.dims(), flow.dims()));
    }
    let (w, h) = img.dims();
    let valid: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| img.is_valid(x, y) && flow.is_valid(x, y))
        .collect();
    let too_small = |cw: usize, ch: usize| Error::CropTooSmall {
        width: cw,
        height: ch,
        min_width: opts.min_width,
        min_height: opts.min_height,
    };
    let mut rect = maximal_centered_rect(w, h, &valid).ok_or_else(|| too_small(0, 0))?;
    if rect.width < opts.min_width || rect.height < opts.min_height {
        return Err(too_small(rect.width, rect.height));
    }
    if let Some((ow, oh)) = opts.output {
        if rect.width < ow || rect.height < oh {
            return Err(too_small(rect.width, rect.height));
        }
        rect = CropRect {
            x: rect.x + (rect.width - ow) / 2,
            y: rect.y + (rect.height - oh) / 2,
            width: ow,
            height: oh,
        };
    }
    let img = img.crop(rect.x, rect.y, rect.width, rect.height)?;
    let flow = flow.crop(rect.x, rect.y, rect.width, rect.height)?;
    Ok((img, flow, rect))
}

/// Size of the frame that is warped before cropping to `output`: 7/4 larger per
/// axis, rounded up to an even number of pixels.
pub fn working_size(output: (usize, usize)) -> (usize, usize) {
    let grow = |n: usize| {
        let v = (7 * n).div_ceil(4);
        v + v % 2
    };
    (grow(output.0), grow(output.1))
}

/// One generated training pair, cropped to the output size.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub image: ImageBuffer,
    pub flow: FlowField,
    /// Parameters relative to the working frame the crop was taken from.
    pub params: DistortionParams,
    pub crop: CropRect,
    /// Parameter draws used, including the successful one.
    pub attempts: usize,
}

/// Draws parameters of `kind`, warps `working` and crops the valid region to
/// `output`, re-drawing up to [`MAX_REDRAWS`] times when the valid region is too small.
pub fn synthesize_pair<R: Rng + ?Sized>(
    working: &ImageBuffer,
    kind: DistortionType,
    ranges: &ParamRange,
    output: (usize, usize),
    rng: &mut R,
) -> Result<SyntheticPair> {
    let crop = CropOptions::to_size(output.0, output.1);
    let mut last = Error::InvalidInput("no parameter draws attempted");
    for attempt in 1..=MAX_REDRAWS {
        let params = sample_params_with(kind, ranges, rng);
        let (img, flow) = distort_image(working, &params)?;
        match crop_valid(&img, &flow, &crop) {
            Ok((image, flow, rect)) => {
                return Ok(SyntheticPair {
                    image,
                    flow,
                    params,
                    crop: rect,
                    attempts: attempt,
                })
            }
            Err(e @ Error::CropTooSmall { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}
