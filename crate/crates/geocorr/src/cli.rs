//! Command-line front end. Each subcommand parses its files, makes one library
//! call and writes the result.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use geocorr_core::apps::{exaggerate, transfer};
use geocorr_core::fitting::{
    hough_fit, identify_model_with_cells, refine_flow, FitResult, DEFAULT_CELLS,
};
use geocorr_core::resample::{
    convergence_trace, resample, BoundaryPolicy, InitStrategy, ResampleOptions,
};
use geocorr_core::{epe, scale_flow, DistortionType, FlowField, ParamRange};

use crate::dataset::{generate_dataset, DatasetOptions, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::report::{CorrectionReport, TRACE_THRESHOLD};
use crate::{flo, fsutil, image_io, sidecar};

#[derive(Debug, Parser)]
#[command(
    name = "geocorr",
    version,
    about = "Geometric distortion synthesis, model fitting and correction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic (distorted image, flow) dataset.
    Synth(SynthArgs),
    /// Fit a distortion model to a flow field and print the fit as JSON.
    Fit(FitArgs),
    /// Correct an image with a forward flow.
    Correct(CorrectArgs),
    /// Per-iteration convergence table (CSV) of the resampler on a flow.
    ResampleBench(BenchArgs),
    /// Apply a reference flow to another image.
    Transfer(TransferArgs),
    /// Resample with a scaled flow: 0 keeps the input, 1 corrects, < 0 exaggerates.
    Exaggerate(ExaggerateArgs),
    /// Average endpoint error between two flow files.
    Epe(EpeArgs),
    /// Rank all distortion models by how well they explain a flow.
    Identify(IdentifyArgs),
}

fn parse_kind(s: &str) -> std::result::Result<DistortionType, String> {
    s.parse()
        .map_err(|_| format!("unknown distortion type '{s}'"))
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|n| *n > 0);
    let size = match s.split_once(['x', 'X']) {
        Some((w, h)) => parse(w).zip(parse(h)),
        None => parse(s).map(|n| (n, n)),
    };
    size.ok_or_else(|| format!("invalid size '{s}', expected N or WxH"))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of source images.
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pairs per distortion type.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    pub types: Option<Vec<DistortionType>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output size, `N` or `WxH`.
    #[arg(long, value_parser = parse_size, default_value = "256")]
    pub size: (usize, usize),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, required_unless_present = "sidecar")]
    pub flow: Option<PathBuf>,
    #[arg(long = "type", value_parser = parse_kind, conflicts_with = "auto")]
    pub kind: Option<DistortionType>,
    /// Pick the best of all six models.
    #[arg(long)]
    pub auto: bool,
    #[arg(long, default_value_t = DEFAULT_CELLS)]
    pub cells: usize,
    /// Prediction sidecar supplying the type (and the flow when --flow is absent).
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Also write the regenerated model flow here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fit a model to the flow and correct with the regenerated full-resolution flow.
    #[arg(long)]
    pub refine: bool,
    /// Model for --refine; identified automatically when absent.
    #[arg(long = "type", value_parser = parse_kind, requires = "refine")]
    pub kind: Option<DistortionType>,
    #[arg(long, default_value_t = DEFAULT_CELLS, requires = "refine")]
    pub cells: usize,
    #[arg(long, default_value_t = 20)]
    pub max_iter: u32,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// Start from q - f(q) instead of the finite-difference estimate.
    #[arg(long)]
    pub no_deriv_init: bool,
    /// Clamp out-of-image sources instead of marking them invalid.
    #[arg(long)]
    pub clamp: bool,
    /// Report destination; stderr when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub flow: PathBuf,
    /// Gains applied to the flow, one table block each.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub levels: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub iterations: u32,
    #[arg(long, default_value_t = TRACE_THRESHOLD)]
    pub threshold: f64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub ref_flow: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExaggerateArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub gain: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub max_iter: u32,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long)]
    pub no_deriv_init: bool,
}

#[derive(Debug, Args)]
pub struct EpeArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CELLS)]
    pub cells: usize,
}

fn resample_options(max_iter: u32, tol: f64, no_deriv_init: bool, clamp: bool) -> ResampleOptions {
    ResampleOptions {
        max_iterations: max_iter,
        tolerance: tol,
        init: if no_deriv_init {
            InitStrategy::Plain
        } else {
            InitStrategy::Derivative
        },
        boundary: if clamp {
            BoundaryPolicy::Clamp
        } else {
            BoundaryPolicy::MarkInvalid
        },
    }
}

fn print_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    writeln!(out, "{text}").map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn fit_flow(flow: &FlowField, kind: Option<DistortionType>, cells: usize) -> Result<FitResult> {
    let ranges = ParamRange::default();
    Ok(match kind {
        Some(kind) => hough_fit(flow, kind, &ranges, cells)?,
        None => identify_model_with_cells(flow, &ranges, cells)?.swap_remove(0),
    })
}

/// Runs one parsed command, writing its primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let opts = DatasetOptions {
                sources: a.src,
                out: a.out,
                count: a.count,
                types: a.types.unwrap_or_else(|| DistortionType::ALL.to_vec()),
                ranges: ParamRange::default(),
                seed: a.seed,
                size: a.size,
            };
            let manifest = generate_dataset(&opts)?;
            log::info!("wrote {} records", manifest.records.len());
            writeln!(out, "{}", opts.out.join(MANIFEST_FILE).display())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
        Command::Fit(a) => {
            let (flow, sidecar_kind) = match (&a.flow, &a.sidecar) {
                (Some(path), Some(sc)) => (
                    flo::read_flow(path)?,
                    Some(sidecar::read_sidecar(sc)?.0.kind),
                ),
                (Some(path), None) => (flo::read_flow(path)?, None),
                (None, Some(sc)) => {
                    let (s, flow) = sidecar::read_sidecar(sc)?;
                    (flow, Some(s.kind))
                }
                (None, None) => unreachable!("clap requires --flow or --sidecar"),
            };
            let kind = match (a.kind, a.auto) {
                (Some(k), _) => Some(k),
                (None, true) => None,
                (None, false) => Some(sidecar_kind.ok_or_else(|| {
                    Error::Usage("one of --type, --auto or --sidecar is required".into())
                })?),
            };
            let fit = fit_flow(&flow, kind, a.cells)?;
            if let Some(path) = &a.out {
                flo::write_flow(path, &refine_flow(&fit, flow.width(), flow.height()))?;
            }
            print_json(out, &fit)
        }
        Command::Correct(a) => {
            let image = image_io::read_image(&a.image)?;
            let raw = flo::read_flow(&a.flow)?;
            let opts = resample_options(a.max_iter, a.tol, a.no_deriv_init, a.clamp);
            let (flow, fit) = if a.refine {
                let fit = fit_flow(&raw, a.kind, a.cells)?;
                (refine_flow(&fit, image.width(), image.height()), Some(fit))
            } else {
                (raw, None)
            };
            let (corrected, report) = resample(&image, &flow, &opts)?;
            let trace = convergence_trace(&flow, opts.init, opts.max_iterations, TRACE_THRESHOLD);
            image_io::write_png(&a.out, &corrected)?;
            let summary = CorrectionReport::new(&report, &opts, &trace, fit);
            match &a.report {
                Some(path) => fsutil::write_json(path, &summary),
                None => print_json(&mut std::io::stderr(), &summary),
            }
        }
        Command::ResampleBench(a) => {
            if a.iterations == 0 {
                return Err(Error::Usage("--iterations must be at least 1".into()));
            }
            let flow = flo::read_flow(&a.flow)?;
            let mut csv = String::from("level,init,iteration,mean_residual,fraction_below\n");
            for level in &a.levels {
                if !level.is_finite() {
                    return Err(Error::Usage("levels must be finite".into()));
                }
                let scaled = scale_flow(&flow, *level);
                for init in [InitStrategy::Plain, InitStrategy::Derivative] {
                    let name = if init == InitStrategy::Plain {
                        "plain"
                    } else {
                        "derivative"
                    };
                    for s in convergence_trace(&scaled, init, a.iterations, a.threshold) {
                        csv.push_str(&format!(
                            "{level},{name},{},{},{}\n",
                            s.iteration, s.mean_residual, s.fraction_below
                        ));
                    }
                }
            }
            match &a.out {
                Some(path) => fsutil::write_atomic(path, csv.as_bytes()),
                None => out
                    .write_all(csv.as_bytes())
                    .map_err(|e| Error::io(Path::new("<stdout>"), e)),
            }
        }
        Command::Transfer(a) => {
            let reference = flo::read_flow(&a.ref_flow)?;
            let target = image_io::read_image(&a.target)?;
            image_io::write_png(&a.out, &transfer(&reference, &target)?)
        }
        Command::Exaggerate(a) => {
            let image = image_io::read_image(&a.image)?;
            let flow = flo::read_flow(&a.flow)?;
            let opts = resample_options(a.max_iter, a.tol, a.no_deriv_init, false);
            let (result, _) = exaggerate(&image, &flow, a.gain, &opts)?;
            image_io::write_png(&a.out, &result)
        }
        Command::Epe(a) => {
            let value = epe(&flo::read_flow(&a.a)?, &flo::read_flow(&a.b)?)?;
            writeln!(out, "{value}").map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
        Command::Identify(a) => {
            let ranked = identify_model_with_cells(
                &flo::read_flow(&a.flow)?,
                &ParamRange::default(),
                a.cells,
            )?;
            print_json(out, &ranked)
        }
    }
}
