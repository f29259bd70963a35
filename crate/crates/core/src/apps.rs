//! Distortion transfer, exaggeration and iterative detect-and-correct.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fitting::{hough_fit, identify_model_with_cells, refine_flow, FitResult, DEFAULT_CELLS};
use crate::models::{DistortionType, ParamRange};
use crate::resample::{resample, ResampleOptions, ResampleReport};
use crate::types::{scale_flow, FlowField, ImageBuffer, Point};

/// Mean refined-flow magnitude (px) below which iterative correction stops.
pub const EARLY_STOP_MAGNITUDE: f64 = 0.5;

/// Applies a reference flow to `target` directly: `D(p) = target(p + F(p))`, where `F`
/// is the reference flow resized to the target (vectors scaled per axis).
pub fn transfer(reference_flow: &FlowField, target: &ImageBuffer) -> Result<ImageBuffer> {
    let flow = reference_flow.resize(target.width(), target.height())?;
    let (w, h) = target.dims();
    let c = target.channels();
    let mut cells: Vec<Option<[f32; 4]>> = vec![None; w * h];
    crate::par::for_each_row(&mut cells, w, |y, row| {
        for (x, cell) in row.iter_mut().enumerate() {
            if !flow.is_valid(x, y) {
                continue;
            }
            let v = flow.get_f64(x, y);
            *cell = target.sample_bilinear(Point::new(x as f64 + v[0], y as f64 + v[1]));
        }
    });
    let mut data = Vec::with_capacity(w * h * c);
    let mut valid = Vec::with_capacity(w * h);
    for cell in cells {
        valid.push(cell.is_some());
        data.extend_from_slice(&cell.unwrap_or([0.0; 4])[..c]);
    }
    Ok(ImageBuffer::from_parts(w, h, c, data, valid))
}

/// Resamples with the flow scaled by `gain`: 0 returns the input, 1 fully corrects,
/// values in between attenuate and negative values push pixels further away from
/// their corrected positions.
pub fn exaggerate(
    image: &ImageBuffer,
    flow: &FlowField,
    gain: f64,
    opts: &ResampleOptions,
) -> Result<(ImageBuffer, ResampleReport)> {
    if !gain.is_finite() {
        return Err(Error::InvalidInput("gain must be finite"));
    }
    resample(image, &scale_flow(flow, gain), opts)
}

/// A flow estimate for the current image, optionally with its distortion type.
#[derive(Debug, Clone)]
pub struct ProvidedFlow {
    pub flow: FlowField,
    pub kind: Option<DistortionType>,
}

/// Supplies a flow for the image being corrected in a given round.
pub trait FlowProvider {
    fn provide(&mut self, image: &ImageBuffer, round: usize) -> Result<ProvidedFlow>;
}

impl<F> FlowProvider for F
where
    F: FnMut(&ImageBuffer, usize) -> Result<ProvidedFlow>,
{
    fn provide(&mut self, image: &ImageBuffer, round: usize) -> Result<ProvidedFlow> {
        self(image, round)
    }
}

#[derive(Debug, Clone)]
pub struct IterativeOptions {
    pub rounds: usize,
    pub ranges: ParamRange,
    pub cells: usize,
    pub resample: ResampleOptions,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        IterativeOptions {
            rounds: 2,
            ranges: ParamRange::default(),
            cells: DEFAULT_CELLS,
            resample: ResampleOptions::default(),
        }
    }
}

/// Output of [`correct_iterative`]. On failure the work done so far is kept and
/// `aborted` holds the error.
#[derive(Debug, Clone)]
pub struct IterativeCorrection {
    pub image: ImageBuffer,
    pub fits: Vec<FitResult>,
    pub reports: Vec<ResampleReport>,
    pub stopped_early: bool,
    pub aborted: Option<Error>,
}

/// Fits the model for one round: the provider's type when given, otherwise the
/// best-ranked identification.
fn fit_round(provided: &ProvidedFlow, opts: &IterativeOptions) -> Result<FitResult> {
    match provided.kind {
        Some(kind) => hough_fit(&provided.flow, kind, &opts.ranges, opts.cells),
        None => identify_model_with_cells(&provided.flow, &opts.ranges, opts.cells)
            .map(|mut ranked| ranked.swap_remove(0)),
    }
}

/// Detects and corrects one distortion per round: fit, regenerate the model flow at
/// full resolution, resample. Stops early once the fitted flow is negligible.
pub fn correct_iterative(
    image: &ImageBuffer,
    provider: &mut dyn FlowProvider,
    opts: &IterativeOptions,
) -> IterativeCorrection {
    let mut out = IterativeCorrection {
        image: image.clone(),
        fits: Vec::new(),
        reports: Vec::new(),
        stopped_early: false,
        aborted: None,
    };
    for round in 0..opts.rounds {
        let step = provider
            .provide(&out.image, round)
            .map_err(|e| Error::Provider(e.to_string()))
            .and_then(|provided| fit_round(&provided, opts));
        let fit = match step {
            Ok(fit) => fit,
            Err(e) => {
                out.aborted = Some(e);
                return out;
            }
        };
        let refined = refine_flow(&fit, out.image.width(), out.image.height());
        out.fits.push(fit);
        if refined.mean_magnitude() < EARLY_STOP_MAGNITUDE {
            out.stopped_early = true;
            return out;
        }
        match resample(&out.image, &refined, &opts.resample) {
            Ok((img, report)) => {
                out.image = img;
                out.reports.push(report);
            }
            Err(e) => {
                out.aborted = Some(e);
                return out;
            }
        }
    }
    out
}
