//! Backward-mapping resampling from a forward flow.
//!
//! For each output pixel `q` the solver looks for the source position `p` with
//! `p + f(p) = q` using the fixed-point iteration `p <- q - f(p)`, with the flow
//! sampled bilinearly. The first iterate comes from a one-sided finite-difference
//! linearisation of the flow at `q`, which is exact for axis-separable affine flows
//! and keeps large smooth distortions inside the basin of fast convergence.
//!
//! Iteration `i` produces `p(i)`; its residual `|p(i) + f(p(i)) - q|` equals the
//! length of the next step, and the solve stops once it drops below the tolerance.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::types::{FlowField, ImageBuffer, Point};

/// Below this `|1 + df/dx|` the derivative initialisation falls back to `q - f(q)`.
pub const SINGULAR_SLOPE: f64 = 1e-3;

/// Upper edges of the residual histogram bins (px); the last bin is open.
pub const RESIDUAL_BIN_EDGES: [f64; 9] = [1e-3, 1e-2, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, f64::INFINITY];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Pixels whose source lies outside the image are invalid and zero-filled.
    #[default]
    MarkInvalid,
    /// Source positions are clamped into the image.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// `p(1) = q - f(q)`.
    Plain,
    /// Per-axis finite-difference initialisation.
    #[default]
    Derivative,
    /// Full 2x2 finite-difference Jacobian; exact for every affine flow.
    Jacobian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleOptions {
    pub max_iterations: u32,
    /// Stop once the step length (px) falls below this.
    pub tolerance: f64,
    pub init: InitStrategy,
    pub boundary: BoundaryPolicy,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        ResampleOptions {
            max_iterations: 20,
            tolerance: 1e-3,
            init: InitStrategy::Derivative,
            boundary: BoundaryPolicy::MarkInvalid,
        }
    }
}

impl ResampleOptions {
    pub fn with_derivative_init(mut self, enabled: bool) -> Self {
        self.init = if enabled {
            InitStrategy::Derivative
        } else {
            InitStrategy::Plain
        };
        self
    }

    pub fn with_max_iterations(mut self, n: u32) -> Self {
        self.max_iterations = n;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidInput("tolerance must be positive"));
        }
        Ok(())
    }
}

/// One-sided difference of component `c` along `x` (`dx = true`) or `y` at a pixel:
/// forward where a forward neighbour exists, backward otherwise.
#[inline]
fn slope(flow: &FlowField, x: usize, y: usize, c: usize, along_x: bool) -> f64 {
    let here = f64::from(flow.get(x, y)[c]);
    let (limit, pos) = if along_x {
        (flow.width(), x)
    } else {
        (flow.height(), y)
    };
    let at = |i: usize| {
        if along_x {
            f64::from(flow.get(i, y)[c])
        } else {
            f64::from(flow.get(x, i)[c])
        }
    };
    if pos + 1 < limit {
        at(pos + 1) - here
    } else if pos > 0 {
        here - at(pos - 1)
    } else {
        0.0
    }
}

/// First iterate from the per-axis linearisation
/// `x' = x - f_x(q) / (1 + f_x(q + e_x) - f_x(q))`, and likewise for `y`.
///
/// At the right and bottom borders the backward neighbour stands in for the forward
/// one. An axis whose denominator is within [`SINGULAR_SLOPE`] of zero uses the
/// plain update `x' = x - f_x(q)`.
pub fn init_estimate(flow: &FlowField, x: usize, y: usize) -> Point {
    let f = flow.get_f64(x, y);
    let axis = |value: f64, fq: f64, d: f64| {
        let denom = 1.0 + d;
        if denom.abs() < SINGULAR_SLOPE {
            value - fq
        } else {
            value - fq / denom
        }
    };
    Point::new(
        axis(x as f64, f[0], slope(flow, x, y, 0, true)),
        axis(y as f64, f[1], slope(flow, x, y, 1, false)),
    )
}

/// First iterate `q - (I + J)^-1 f(q)` with the full finite-difference Jacobian `J`.
/// Falls back to [`init_estimate`] when `I + J` is near singular.
pub fn init_estimate_jacobian(flow: &FlowField, x: usize, y: usize) -> Point {
    let f = flow.get_f64(x, y);
    let a = 1.0 + slope(flow, x, y, 0, true);
    let b = slope(flow, x, y, 0, false);
    let c = slope(flow, x, y, 1, true);
    let d = 1.0 + slope(flow, x, y, 1, false);
    let det = a * d - b * c;
    if det.abs() < SINGULAR_SLOPE {
        return init_estimate(flow, x, y);
    }
    let step = [(d * f[0] - b * f[1]) / det, (a * f[1] - c * f[0]) / det];
    Point::new(x as f64 - step[0], y as f64 - step[1])
}

/// Result of solving one output pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSolution {
    pub p: Point,
    pub iterations: u32,
    pub converged: bool,
    /// `|p + f(p) - q|` at the returned `p` (infinite after divergence).
    pub residual: f64,
}

/// True when `p` left the search region or became NaN.
fn escaped(p: Point, q: Point, limit: f64) -> bool {
    let d = p.distance(q);
    d.is_nan() || d > limit
}

/// Solves `p + f(p) = q` for the output pixel `q = (x, y)`.
pub fn solve_pixel(flow: &FlowField, x: usize, y: usize, opts: &ResampleOptions) -> PixelSolution {
    let q = Point::new(x as f64, y as f64);
    let limit = 2.0 * math::hypot((flow.width() - 1) as f64, (flow.height() - 1) as f64);
    let mut p = match opts.init {
        InitStrategy::Plain => q - flow.get_f64(x, y),
        InitStrategy::Derivative => init_estimate(flow, x, y),
        InitStrategy::Jacobian => init_estimate_jacobian(flow, x, y),
    };
    let mut iterations = 1;
    loop {
        if escaped(p, q, limit) {
            return PixelSolution {
                p,
                iterations,
                converged: false,
                residual: f64::INFINITY,
            };
        }
        let fp = flow.sample_clamped(p);
        let next = q - fp;
        let residual = next.distance(p);
        if residual < opts.tolerance || iterations >= opts.max_iterations {
            return PixelSolution {
                p,
                iterations,
                converged: residual < opts.tolerance,
                residual,
            };
        }
        p = next;
        iterations += 1;
    }
}

/// Counts of final residuals per [`RESIDUAL_BIN_EDGES`] bin.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResidualHistogram {
    pub counts: Vec<usize>,
}

impl ResidualHistogram {
    fn bin(residual: f64) -> usize {
        RESIDUAL_BIN_EDGES
            .iter()
            .position(|edge| residual < *edge)
            .unwrap_or(RESIDUAL_BIN_EDGES.len() - 1)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Per-image convergence statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleReport {
    pub width: usize,
    pub height: usize,
    /// Iterations spent per output pixel, row-major.
    pub iterations: Vec<u32>,
    pub converged: Vec<bool>,
    pub fraction_converged: f64,
    pub fraction_invalid: f64,
    pub residuals: ResidualHistogram,
}

impl ResampleReport {
    pub fn mean_iterations(&self) -> f64 {
        self.iterations.iter().map(|i| f64::from(*i)).sum::<f64>() / self.iterations.len() as f64
    }

    /// Fraction of pixels that converged within `n` iterations.
    pub fn fraction_converged_within(&self, n: u32) -> f64 {
        let hits = self
            .iterations
            .iter()
            .zip(&self.converged)
            .filter(|(it, ok)| **ok && **it <= n)
            .count();
        hits as f64 / self.iterations.len() as f64
    }
}

#[derive(Clone, Copy)]
struct PixelOutcome {
    color: Option<[f32; 4]>,
    solution: PixelSolution,
}

/// Corrects `image` by backward mapping through the forward `flow`:
/// `output(q) = image(p)` with `p + flow(p) = q`, sampled bilinearly.
pub fn resample(
    image: &ImageBuffer,
    flow: &FlowField,
    opts: &ResampleOptions,
) -> Result<(ImageBuffer, ResampleReport)> {
    if image.dims() != flow.dims() {
        return Err(Error::mismatch(image.dims(), flow.dims()));
    }
    opts.validate()?;
    let (w, h) = image.dims();
    let blank = PixelOutcome {
        color: None,
        solution: PixelSolution {
            p: Point::default(),
            iterations: 0,
            converged: false,
            residual: f64::INFINITY,
        },
    };
    let mut cells = vec![blank; w * h];
    crate::par::for_each_row(&mut cells, w, |y, row| {
        for (x, cell) in row.iter_mut().enumerate() {
            let solution = solve_pixel(flow, x, y, opts);
            let color = if solution.residual.is_finite() {
                let p = match opts.boundary {
                    BoundaryPolicy::MarkInvalid => solution.p,
                    BoundaryPolicy::Clamp => Point::new(
                        solution.p.x.clamp(0.0, (w - 1) as f64),
                        solution.p.y.clamp(0.0, (h - 1) as f64),
                    ),
                };
                image.sample_bilinear(p)
            } else {
                None
            };
            *cell = PixelOutcome { color, solution };
        }
    });

    let c = image.channels();
    let mut data = Vec::with_capacity(w * h * c);
    let mut valid = Vec::with_capacity(w * h);
    let mut iterations = Vec::with_capacity(w * h);
    let mut converged = Vec::with_capacity(w * h);
    let mut histogram = ResidualHistogram {
        counts: vec![0; RESIDUAL_BIN_EDGES.len()],
    };
    for cell in &cells {
        valid.push(cell.color.is_some());
        data.extend_from_slice(&cell.color.unwrap_or([0.0; 4])[..c]);
        iterations.push(cell.solution.iterations);
        converged.push(cell.solution.converged);
        histogram.counts[ResidualHistogram::bin(cell.solution.residual)] += 1;
    }
    let n = (w * h) as f64;
    let report = ResampleReport {
        width: w,
        height: h,
        fraction_converged: converged.iter().filter(|c| **c).count() as f64 / n,
        fraction_invalid: valid.iter().filter(|v| !**v).count() as f64 / n,
        iterations,
        converged,
        residuals: histogram,
    };
    Ok((ImageBuffer::from_parts(w, h, c, data, valid), report))
}

/// Convergence statistics after a fixed number of iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iteration: u32,
    /// Mean fixed-point residual `|p + f(p) - q|` over all pixels (px).
    pub mean_residual: f64,
    /// Fraction of pixels with residual below `threshold`.
    pub fraction_below: f64,
}

/// Runs every pixel for exactly `1..=iterations` iterations and reports the residual
/// distribution after each. Pixels whose iterate leaves the search region count with
/// an infinite residual (excluded from the mean).
pub fn convergence_trace(
    flow: &FlowField,
    init: InitStrategy,
    iterations: u32,
    threshold: f64,
) -> Vec<IterationStats> {
    let (w, h) = flow.dims();
    let limit = 2.0 * math::hypot((w - 1) as f64, (h - 1) as f64);
    let n = iterations as usize;
    let rows = crate::par::map_range(h, |y| {
        let mut residuals = vec![Vec::with_capacity(w); n];
        for x in 0..w {
            let q = Point::new(x as f64, y as f64);
            let mut p = match init {
                InitStrategy::Plain => q - flow.get_f64(x, y),
                InitStrategy::Derivative => init_estimate(flow, x, y),
                InitStrategy::Jacobian => init_estimate_jacobian(flow, x, y),
            };
            for slot in residuals.iter_mut() {
                if escaped(p, q, limit) {
                    slot.push(f64::INFINITY);
                    continue;
                }
                let next = q - flow.sample_clamped(p);
                slot.push(next.distance(p));
                p = next;
            }
        }
        residuals
    });
    (0..n)
        .map(|i| {
            let mut sum = 0.0;
            let mut finite = 0usize;
            let mut below = 0usize;
            for row in &rows {
                for &r in &row[i] {
                    if r.is_finite() {
                        sum += r;
                        finite += 1;
                    }
                    below += usize::from(r < threshold);
                }
            }
            IterationStats {
                iteration: i as u32 + 1,
                mean_residual: if finite == 0 {
                    f64::INFINITY
                } else {
                    sum / finite as f64
                },
                fraction_below: below as f64 / (w * h) as f64,
            }
        })
        .collect()
}
