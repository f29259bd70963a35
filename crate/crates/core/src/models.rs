//! The six parametric distortion models.
//!
//! Every model maps a point of the distorted lattice to its corrected position.
//! Radial, rotation, shear and perspective models work in [`NormalizedCoords`];
//! the wave model works directly in pixels.
//!
//! | type        | parameters        | corrected position                 |
//! |-------------|-------------------|------------------------------------|
//! | barrel      | `lambda < 0`      | `(u, v) / (1 + lambda r^2)`        |
//! | pincushion  | `lambda > 0`      | `(u, v) / (1 + lambda r^2)`        |
//! | rotation    | `theta` (degrees) | `(u, v)` rotated by `theta`        |
//! | shear       | `s`               | `(u + s v, v)`                     |
//! | perspective | `a, b`            | `(u, v) / (1 + a u + b v)`         |
//! | wave        | `A, T` (pixels)   | `(x + A sin(2 pi y / T), y)`       |

use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::types::{FlowField, NormalizedCoords, Point};

/// Degeneracy guard in normalized units.
pub const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DistortionType {
    Barrel,
    Pincushion,
    Rotation,
    Shear,
    Perspective,
    Wave,
}

impl DistortionType {
    /// All types in the fixed tie-break order.
    pub const ALL: [DistortionType; 6] = [
        DistortionType::Barrel,
        DistortionType::Pincushion,
        DistortionType::Rotation,
        DistortionType::Shear,
        DistortionType::Perspective,
        DistortionType::Wave,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn param_count(self) -> usize {
        match self {
            DistortionType::Perspective | DistortionType::Wave => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistortionType::Barrel => "barrel",
            DistortionType::Pincushion => "pincushion",
            DistortionType::Rotation => "rotation",
            DistortionType::Shear => "shear",
            DistortionType::Perspective => "perspective",
            DistortionType::Wave => "wave",
        }
    }
}

impl fmt::Display for DistortionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistortionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistortionType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or(Error::InvalidInput("unknown distortion type"))
    }
}

/// A distortion type together with its parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(try_from = "repr::ParamsRepr", into = "repr::ParamsRepr")
)]
pub struct DistortionParams {
    kind: DistortionType,
    rho: [f64; 2],
}

impl DistortionParams {
    pub fn new(kind: DistortionType, rho: &[f64]) -> Result<Self> {
        if rho.len() != kind.param_count() {
            return Err(Error::InvalidParams {
                kind,
                reason: "wrong number of parameters",
            });
        }
        if rho.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidParams {
                kind,
                reason: "parameters must be finite",
            });
        }
        let mut packed = [0.0; 2];
        packed[..rho.len()].copy_from_slice(rho);
        match kind {
            DistortionType::Barrel if packed[0] > 0.0 => Err(Error::InvalidParams {
                kind,
                reason: "barrel requires lambda <= 0",
            }),
            DistortionType::Pincushion if packed[0] < 0.0 => Err(Error::InvalidParams {
                kind,
                reason: "pincushion requires lambda >= 0",
            }),
            DistortionType::Wave if packed[1] <= 0.0 => Err(Error::InvalidParams {
                kind,
                reason: "wave period must be positive",
            }),
            _ => Ok(DistortionParams { kind, rho: packed }),
        }
    }

    /// Parameters that leave every point in place.
    pub fn identity(kind: DistortionType) -> Self {
        let rho = match kind {
            DistortionType::Wave => [0.0, 60.0],
            _ => [0.0; 2],
        };
        DistortionParams { kind, rho }
    }

    pub fn barrel(lambda: f64) -> Result<Self> {
        Self::new(DistortionType::Barrel, &[lambda])
    }

    pub fn pincushion(lambda: f64) -> Result<Self> {
        Self::new(DistortionType::Pincushion, &[lambda])
    }

    pub fn rotation(degrees: f64) -> Result<Self> {
        Self::new(DistortionType::Rotation, &[degrees])
    }

    pub fn shear(s: f64) -> Result<Self> {
        Self::new(DistortionType::Shear, &[s])
    }

    pub fn perspective(a: f64, b: f64) -> Result<Self> {
        Self::new(DistortionType::Perspective, &[a, b])
    }

    pub fn wave(amplitude: f64, period: f64) -> Result<Self> {
        Self::new(DistortionType::Wave, &[amplitude, period])
    }

    pub fn kind(&self) -> DistortionType {
        self.kind
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho[..self.kind.param_count()]
    }

    pub fn is_identity(&self) -> bool {
        match self.kind {
            DistortionType::Wave => self.rho[0] == 0.0,
            _ => self.rho().iter().all(|r| *r == 0.0),
        }
    }
}

#[cfg(feature = "serde")]
mod repr {
    use alloc::vec::Vec;

    use super::{DistortionParams, DistortionType};

    #[derive(serde::Serialize, serde::Deserialize)]
    pub struct ParamsRepr {
        #[serde(rename = "type")]
        kind: DistortionType,
        rho: Vec<f64>,
    }

    impl From<DistortionParams> for ParamsRepr {
        fn from(p: DistortionParams) -> Self {
            ParamsRepr {
                kind: p.kind,
                rho: p.rho().to_vec(),
            }
        }
    }

    impl TryFrom<ParamsRepr> for DistortionParams {
        type Error = crate::Error;

        fn try_from(r: ParamsRepr) -> Result<Self, Self::Error> {
            DistortionParams::new(r.kind, &r.rho)
        }
    }
}

/// Per-type `(min, max)` bounds for every parameter component.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRange {
    bounds: [[(f64, f64); 2]; 6],
}

impl Default for ParamRange {
    fn default() -> Self {
        ParamRange {
            bounds: [
                [(-0.4, -0.05), (0.0, 0.0)],
                [(0.05, 0.4), (0.0, 0.0)],
                [(-30.0, 30.0), (0.0, 0.0)],
                [(-0.4, 0.4), (0.0, 0.0)],
                [(-0.3, 0.3), (-0.3, 0.3)],
                [(2.0, 8.0), (20.0, 100.0)],
            ],
        }
    }
}

impl ParamRange {
    /// Replaces the bounds of one type.
    pub fn with_bounds(mut self, kind: DistortionType, bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.len() != kind.param_count() {
            return Err(Error::InvalidParams {
                kind,
                reason: "wrong number of bounds",
            });
        }
        for &(lo, hi) in bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParams {
                    kind,
                    reason: "bounds must be finite with min < max",
                });
            }
        }
        let ok = match kind {
            DistortionType::Barrel => bounds[0].1 <= 0.0,
            DistortionType::Pincushion => bounds[0].0 >= 0.0,
            DistortionType::Wave => bounds[1].0 > 0.0,
            _ => true,
        };
        if !ok {
            return Err(Error::InvalidParams {
                kind,
                reason: "bounds violate the sign constraint of the type",
            });
        }
        self.bounds[kind.index()][..bounds.len()].copy_from_slice(bounds);
        Ok(self)
    }

    /// Sampling bounds of `kind`, one entry per parameter.
    pub fn bounds(&self, kind: DistortionType) -> &[(f64, f64)] {
        &self.bounds[kind.index()][..kind.param_count()]
    }

    /// Bounds used for Hough voting: the sampling bounds widened so that the identity
    /// parameter (zero strength) is always representable. Wave periods are unchanged.
    pub fn voting_bounds(&self, kind: DistortionType) -> [(f64, f64); 2] {
        let mut out = self.bounds[kind.index()];
        let strength_components = if kind == DistortionType::Wave {
            1
        } else {
            kind.param_count()
        };
        for b in out.iter_mut().take(strength_components) {
            b.0 = b.0.min(0.0);
            b.1 = b.1.max(0.0);
        }
        out
    }
}

/// Corrected position of distorted pixel `p`.
pub fn forward_map(params: &DistortionParams, p: Point, geom: &NormalizedCoords) -> Result<Point> {
    let rho = params.rho;
    if params.kind == DistortionType::Wave {
        let (amp, period) = (rho[0], rho[1]);
        return Ok(Point::new(
            p.x + amp * math::sin(2.0 * PI * p.y / period),
            p.y,
        ));
    }
    let (u, v) = geom.to_normalized(p);
    let (uc, vc) = match params.kind {
        DistortionType::Barrel | DistortionType::Pincushion => {
            let d = 1.0 + rho[0] * (u * u + v * v);
            if d.abs() <= EPS {
                return Err(Error::SingularMapping { x: p.x, y: p.y });
            }
            (u / d, v / d)
        }
        DistortionType::Rotation => {
            let t = rho[0].to_radians();
            let (s, c) = (math::sin(t), math::cos(t));
            (u * c + v * s, -u * s + v * c)
        }
        DistortionType::Shear => (u + rho[0] * v, v),
        DistortionType::Perspective => {
            let d = 1.0 + rho[0] * u + rho[1] * v;
            if d.abs() <= EPS {
                return Err(Error::SingularMapping { x: p.x, y: p.y });
            }
            (u / d, v / d)
        }
        DistortionType::Wave => unreachable!(),
    };
    Ok(geom.to_pixel(uc, vc))
}

/// Distorted position whose corrected position is `q`, in closed form.
///
/// Fails with [`Error::SingularMapping`] where the model has no preimage.
pub fn inverse_map(params: &DistortionParams, q: Point, geom: &NormalizedCoords) -> Result<Point> {
    let rho = params.rho;
    if params.kind == DistortionType::Wave {
        let (amp, period) = (rho[0], rho[1]);
        return Ok(Point::new(
            q.x - amp * math::sin(2.0 * PI * q.y / period),
            q.y,
        ));
    }
    let (u, v) = geom.to_normalized(q);
    let (ud, vd) = match params.kind {
        DistortionType::Barrel | DistortionType::Pincushion => {
            // Smaller root of lambda r_u r_d^2 - r_d + r_u = 0, written without 1/r_u.
            let disc = 1.0 - 4.0 * rho[0] * (u * u + v * v);
            if disc < 0.0 {
                return Err(Error::SingularMapping { x: q.x, y: q.y });
            }
            let k = 2.0 / (1.0 + math::sqrt(disc));
            (u * k, v * k)
        }
        DistortionType::Rotation => {
            let t = rho[0].to_radians();
            let (s, c) = (math::sin(t), math::cos(t));
            (u * c - v * s, u * s + v * c)
        }
        DistortionType::Shear => (u - rho[0] * v, v),
        DistortionType::Perspective => {
            let d = 1.0 - rho[0] * u - rho[1] * v;
            if d.abs() <= EPS {
                return Err(Error::SingularMapping { x: q.x, y: q.y });
            }
            (u / d, v / d)
        }
        DistortionType::Wave => unreachable!(),
    };
    Ok(geom.to_pixel(ud, vd))
}

/// Dense forward flow `F(p) = forward_map(p) - p`; singular pixels are masked invalid.
pub fn flow_field(params: &DistortionParams, width: usize, height: usize) -> FlowField {
    let geom = NormalizedCoords::new(width, height);
    FlowField::from_fn(width, height, |x, y| {
        let p = Point::new(x as f64, y as f64);
        forward_map(params, p, &geom)
            .ok()
            .map(|c| [c.x - p.x, c.y - p.y])
    })
}

/// What a single flow vector says about the parameters of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PixelObservation {
    /// A point estimate of the single parameter.
    Scalar(f64),
    /// One linear equation `coeffs[0] * a + coeffs[1] * b = rhs` (perspective).
    Linear { coeffs: [f64; 2], rhs: f64 },
    /// One sample `fx = A sin(2 pi y / T)` of the wave (pixel units).
    WaveSample { y: f64, fx: f64 },
}

/// Inverts one flow vector into parameter space.
///
/// Returns [`Error::Uninformative`] where the vector cannot constrain the model
/// (at the center for radial and rotation models, on the center row for shear).
pub fn invert_pixel(
    kind: DistortionType,
    position: Point,
    vec: [f64; 2],
    geom: &NormalizedCoords,
) -> Result<PixelObservation> {
    if !vec[0].is_finite() || !vec[1].is_finite() {
        return Err(Error::Uninformative);
    }
    if kind == DistortionType::Wave {
        return Ok(PixelObservation::WaveSample {
            y: position.y,
            fx: vec[0],
        });
    }
    let (u, v) = geom.to_normalized(position);
    let (du, dv) = (vec[0] / geom.scale, vec[1] / geom.scale);
    let (uc, vc) = (u + du, v + dv);
    let rd = math::hypot(u, v);
    let rc = math::hypot(uc, vc);
    match kind {
        DistortionType::Barrel | DistortionType::Pincushion => {
            if rd < EPS || rc < EPS {
                return Err(Error::Uninformative);
            }
            Ok(PixelObservation::Scalar((rd / rc - 1.0) / (rd * rd)))
        }
        DistortionType::Rotation => {
            if rd < EPS || rc < EPS {
                return Err(Error::Uninformative);
            }
            let angle = math::atan2(v * uc - u * vc, u * uc + v * vc);
            Ok(PixelObservation::Scalar(angle.to_degrees()))
        }
        DistortionType::Shear => {
            if v.abs() < EPS {
                return Err(Error::Uninformative);
            }
            Ok(PixelObservation::Scalar(du / v))
        }
        DistortionType::Perspective => {
            if rd < EPS || rc < EPS {
                return Err(Error::Uninformative);
            }
            // (u, v) = k (uc, vc) with k = 1 + a u + b v.
            Ok(PixelObservation::Linear {
                coeffs: [u, v],
                rhs: -(uc * du + vc * dv) / (rc * rc),
            })
        }
        DistortionType::Wave => unreachable!(),
    }
}

/// Draws parameters uniformly within `ranges` from a seeded generator.
pub fn sample_params(kind: DistortionType, ranges: &ParamRange, seed: u64) -> DistortionParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_params_with(kind, ranges, &mut rng)
}

/// Draws parameters uniformly within `ranges` using `rng`.
pub fn sample_params_with<R: Rng + ?Sized>(
    kind: DistortionType,
    ranges: &ParamRange,
    rng: &mut R,
) -> DistortionParams {
    let mut rho = [0.0; 2];
    for (r, &(lo, hi)) in rho.iter_mut().zip(ranges.bounds(kind)) {
        *r = Uniform::new(lo, hi).sample(rng);
    }
    DistortionParams::new(kind, &rho[..kind.param_count()])
        .expect("ranges respect the type constraints")
}
