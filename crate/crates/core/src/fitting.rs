//! Hough-voting model fits over dense flow fields.
//!
//! Every informative pixel (or pixel pair/triple for the two-parameter models) is
//! mapped to a point in parameter space and voted into a histogram of `M` uniform
//! cells per dimension. The densest cell wins and its sample mean is the fitted
//! parameter; estimates outside the voting range are discarded as outliers.
//!
//! Perspective pairs each pixel with its neighbour `PAIR_OFFSET` pixels to the right
//! and solves the two linear constraints. The wave model depends on `y` only, so it
//! uses the vertical triple `(y - PAIR_OFFSET, y, y + PAIR_OFFSET)` instead:
//! `f(y - d) + f(y + d) = 2 cos(w d) f(y)` gives the frequency, then `f(y)` the amplitude.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math;
use crate::models::{
    flow_field, invert_pixel, DistortionParams, DistortionType, ParamRange, PixelObservation, EPS,
};
use crate::types::{epe, FlowField, NormalizedCoords, Point};

/// Default number of cells per parameter dimension.
pub const DEFAULT_CELLS: usize = 100;
/// Minimum number of in-range estimates for a fit.
pub const MIN_ESTIMATES: usize = 100;
/// Pixel offset between the members of a paired estimate.
pub const PAIR_OFFSET: usize = 8;

// |sin| of the angle between the two perspective constraint rows.
const MIN_PAIR_SINE: f64 = 1e-3;
// Wave samples below this magnitude (px) carry no usable phase information.
const MIN_WAVE_SAMPLE: f64 = 1e-2;
// A triple whose three samples are all below this is an exact zero-amplitude wave.
const ZERO_WAVE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Axis {
    min: f64,
    max: f64,
    cells: usize,
}

impl Axis {
    fn cell_of(&self, value: f64) -> Option<usize> {
        if !(value >= self.min && value <= self.max) {
            return None;
        }
        let t = (value - self.min) / (self.max - self.min);
        Some(((t * self.cells as f64) as usize).min(self.cells - 1))
    }

    fn center(&self, cell: usize) -> f64 {
        self.min + (cell as f64 + 0.5) * self.width()
    }

    fn width(&self) -> f64 {
        (self.max - self.min) / self.cells as f64
    }
}

/// A 1D or 2D vote histogram that also keeps the per-cell sum of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HoughAccumulator {
    axes: Vec<Axis>,
    counts: Vec<u32>,
    sums: Vec<[f64; 2]>,
}

/// The densest cell of an accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub cell: usize,
    pub votes: u32,
    /// Mean of the samples that fell into the cell.
    pub mean: [f64; 2],
}

impl HoughAccumulator {
    /// One `(min, max)` range per dimension, each split into `cells` cells.
    pub fn new(ranges: &[(f64, f64)], cells: usize) -> Result<Self> {
        if ranges.is_empty() || ranges.len() > 2 {
            return Err(Error::InvalidInput(
                "accumulators have one or two dimensions",
            ));
        }
        if cells == 0 {
            return Err(Error::InvalidInput("cell count must be positive"));
        }
        let axes: Vec<Axis> = ranges
            .iter()
            .map(|&(min, max)| Axis { min, max, cells })
            .collect();
        if axes
            .iter()
            .any(|a| !(a.min.is_finite() && a.max.is_finite() && a.min < a.max))
        {
            return Err(Error::InvalidInput(
                "accumulator ranges need finite min < max",
            ));
        }
        let total = cells.pow(axes.len() as u32);
        Ok(HoughAccumulator {
            axes,
            counts: vec![0; total],
            sums: vec![[0.0; 2]; total],
        })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn cell_width(&self, dim: usize) -> f64 {
        self.axes[dim].width()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total_votes(&self) -> u64 {
        self.counts.iter().map(|c| u64::from(*c)).sum()
    }

    fn index_of(&self, sample: [f64; 2]) -> Option<usize> {
        let mut idx = 0;
        for (d, axis) in self.axes.iter().enumerate() {
            idx = idx * axis.cells + axis.cell_of(sample[d])?;
        }
        Some(idx)
    }

    /// Adds one sample; returns `false` when it falls outside the ranges.
    pub fn vote(&mut self, sample: [f64; 2]) -> bool {
        match self.index_of(sample) {
            Some(i) => {
                self.counts[i] += 1;
                self.sums[i][0] += sample[0];
                self.sums[i][1] += sample[1];
                true
            }
            None => false,
        }
    }

    /// Adds the votes of `other`, which must share the same layout.
    pub fn merge(&mut self, other: &HoughAccumulator) -> Result<()> {
        if self.axes != other.axes {
            return Err(Error::InvalidInput("accumulator layouts differ"));
        }
        for (i, (c, s)) in other.counts.iter().zip(&other.sums).enumerate() {
            self.counts[i] += c;
            self.sums[i][0] += s[0];
            self.sums[i][1] += s[1];
        }
        Ok(())
    }

    fn center_magnitude(&self, cell: usize) -> f64 {
        let mut rem = cell;
        let mut sq = 0.0;
        for axis in self.axes.iter().rev() {
            let c = axis.center(rem % axis.cells);
            rem /= axis.cells;
            sq += c * c;
        }
        sq
    }

    /// The cell with the most votes. Ties go to the cell whose center has the smaller
    /// magnitude, then to the lower index.
    pub fn peak(&self) -> Option<Peak> {
        let mut best: Option<(usize, u32, f64)> = None;
        for (i, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mag = self.center_magnitude(i);
            let better = match best {
                None => true,
                Some((_, bc, bm)) => c > bc || (c == bc && mag < bm),
            };
            if better {
                best = Some((i, c, mag));
            }
        }
        best.map(|(cell, votes, _)| {
            let n = f64::from(votes);
            Peak {
                cell,
                votes,
                mean: [self.sums[cell][0] / n, self.sums[cell][1] / n],
            }
        })
    }
}

/// Outcome of a Hough fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub params: DistortionParams,
    /// Votes in the winning cell.
    pub votes: usize,
    /// Parameter estimates produced, in range or not.
    pub estimates: usize,
    /// `votes / estimates`.
    pub inlier_fraction: f64,
    /// EPE between the input flow and the flow regenerated from `params`.
    pub refit_epe: f64,
}

impl FitResult {
    pub fn kind(&self) -> DistortionType {
        self.params.kind()
    }
}

fn solve_pair(first: PixelObservation, second: PixelObservation) -> Option<[f64; 2]> {
    let (
        PixelObservation::Linear {
            coeffs: r1,
            rhs: b1,
        },
        PixelObservation::Linear {
            coeffs: r2,
            rhs: b2,
        },
    ) = (first, second)
    else {
        return None;
    };
    let det = r1[0] * r2[1] - r1[1] * r2[0];
    let norms = math::hypot(r1[0], r1[1]) * math::hypot(r2[0], r2[1]);
    if norms < EPS || (det / norms).abs() < MIN_PAIR_SINE {
        return None;
    }
    Some([
        (b1 * r2[1] - r1[1] * b2) / det,
        (r1[0] * b2 - b1 * r2[0]) / det,
    ])
}

/// `(A, T)` from the samples of `A sin(2 pi y / T)` at `y - d`, `y`, `y + d`.
fn solve_wave_triple(
    y: f64,
    d: f64,
    below: f64,
    at: f64,
    above: f64,
    idle_period: f64,
) -> Option<[f64; 2]> {
    if below.abs() < ZERO_WAVE && at.abs() < ZERO_WAVE && above.abs() < ZERO_WAVE {
        // Zero amplitude: every period fits, so vote at the middle of the period range.
        return Some([0.0, idle_period]);
    }
    if at.abs() < MIN_WAVE_SAMPLE {
        return None;
    }
    let c = (below + above) / (2.0 * at);
    if c.is_nan() || c.abs() >= 1.0 {
        return None;
    }
    let omega = math::acos(c) / d;
    let s = math::sin(omega * y);
    if s.abs() < EPS {
        return None;
    }
    Some([at / s, 2.0 * PI / omega])
}

/// Parameter-space estimates for every informative pixel of `flow`, in raster order.
fn estimates(flow: &FlowField, kind: DistortionType, idle_period: f64) -> Vec<[f64; 2]> {
    let (w, h) = flow.dims();
    let geom = NormalizedCoords::new(w, h);
    let per_row = crate::par::map_range(h, |y| {
        let mut out = Vec::new();
        for x in 0..w {
            if !flow.is_valid(x, y) {
                continue;
            }
            let v = flow.get_f64(x, y);
            let p = Point::new(x as f64, y as f64);
            match kind {
                DistortionType::Perspective => {
                    let nx = x + PAIR_OFFSET;
                    if nx >= w || !flow.is_valid(nx, y) {
                        continue;
                    }
                    let first = invert_pixel(kind, p, v, &geom);
                    let second = invert_pixel(
                        kind,
                        Point::new(nx as f64, y as f64),
                        flow.get_f64(nx, y),
                        &geom,
                    );
                    if let (Ok(a), Ok(b)) = (first, second) {
                        if let Some(est) = solve_pair(a, b) {
                            out.push(est);
                        }
                    }
                }
                DistortionType::Wave => {
                    if y < PAIR_OFFSET || y + PAIR_OFFSET >= h {
                        continue;
                    }
                    let (up, down) = (y - PAIR_OFFSET, y + PAIR_OFFSET);
                    if !flow.is_valid(x, up) || !flow.is_valid(x, down) {
                        continue;
                    }
                    if let Some(est) = solve_wave_triple(
                        y as f64,
                        PAIR_OFFSET as f64,
                        flow.get_f64(x, up)[0],
                        v[0],
                        flow.get_f64(x, down)[0],
                        idle_period,
                    ) {
                        out.push(est);
                    }
                }
                _ => {
                    if let Ok(PixelObservation::Scalar(s)) = invert_pixel(kind, p, v, &geom) {
                        out.push([s, 0.0]);
                    }
                }
            }
        }
        out
    });
    per_row.into_iter().flatten().collect()
}

/// Fits `kind` to `flow` by Hough voting with `cells` cells per dimension over the
/// voting range of `ranges`.
pub fn hough_fit(
    flow: &FlowField,
    kind: DistortionType,
    ranges: &ParamRange,
    cells: usize,
) -> Result<FitResult> {
    let bounds = ranges.voting_bounds(kind);
    let bounds = &bounds[..kind.param_count()];
    let mut acc = HoughAccumulator::new(bounds, cells)?;
    let idle_period = bounds.get(1).map_or(0.0, |b| 0.5 * (b.0 + b.1));
    let samples = estimates(flow, kind, idle_period);
    // Sequential voting keeps the per-cell sums independent of scheduling.
    let mut usable = 0usize;
    for s in &samples {
        usable += usize::from(acc.vote(*s));
    }
    if usable < MIN_ESTIMATES {
        return Err(Error::InsufficientData {
            usable,
            required: MIN_ESTIMATES,
        });
    }
    let peak = acc.peak().expect("at least one vote was cast");
    let params = DistortionParams::new(kind, &peak.mean[..kind.param_count()])?;
    let refit = flow_field(&params, flow.width(), flow.height());
    Ok(FitResult {
        params,
        votes: peak.votes as usize,
        estimates: samples.len(),
        inlier_fraction: f64::from(peak.votes) / samples.len() as f64,
        refit_epe: epe(flow, &refit)?,
    })
}

/// Regenerates the smooth model flow of a fit at any resolution.
pub fn refine_flow(fit: &FitResult, width: usize, height: usize) -> FlowField {
    flow_field(&fit.params, width, height)
}

/// Fits all six models and ranks them by refit EPE (ascending). Equal errors keep the
/// fixed type order barrel, pincushion, rotation, shear, perspective, wave.
pub fn identify_model(flow: &FlowField, ranges: &ParamRange) -> Result<Vec<FitResult>> {
    identify_model_with_cells(flow, ranges, DEFAULT_CELLS)
}

pub fn identify_model_with_cells(
    flow: &FlowField,
    ranges: &ParamRange,
    cells: usize,
) -> Result<Vec<FitResult>> {
    let fits = crate::par::map_range(DistortionType::ALL.len(), |i| {
        hough_fit(flow, DistortionType::ALL[i], ranges, cells).ok()
    });
    let mut ranked: Vec<FitResult> = fits.into_iter().flatten().collect();
    if ranked.is_empty() {
        return Err(Error::Unidentifiable);
    }
    ranked.sort_by(|a, b| a.refit_epe.total_cmp(&b.refit_epe));
    Ok(ranked)
}
