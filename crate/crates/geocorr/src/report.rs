//! JSON summary written by `geocorr correct`.

use geocorr_core::fitting::FitResult;
use geocorr_core::resample::{IterationStats, ResampleOptions, RESIDUAL_BIN_EDGES};
use geocorr_core::ResampleReport;
use serde::{Deserialize, Serialize};

/// Iteration budget quoted in the report's headline fraction.
pub const QUICK_ITERATIONS: u32 = 5;
/// Residual (px) counted as a good resampling result in the trace.
pub const TRACE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBin {
    /// Exclusive upper bound in px; `null` for the open last bin.
    pub below: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: u32,
    pub mean_residual: f64,
    pub fraction_below: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub width: usize,
    pub height: usize,
    pub max_iterations: u32,
    pub tolerance: f64,
    pub init: String,
    pub mean_iterations: f64,
    pub fraction_converged: f64,
    pub fraction_converged_within_5: f64,
    pub fraction_invalid: f64,
    /// `iteration_histogram[i]` pixels stopped after `i + 1` iterations.
    pub iteration_histogram: Vec<usize>,
    pub residual_histogram: Vec<ResidualBin>,
    /// Residual threshold used by `trace[].fraction_below`.
    pub trace_threshold: f64,
    pub trace: Vec<TraceEntry>,
    /// Model fit used to regenerate the flow, when refinement was requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit: Option<FitResult>,
}

impl CorrectionReport {
    pub fn new(
        report: &ResampleReport,
        opts: &ResampleOptions,
        trace: &[IterationStats],
        fit: Option<FitResult>,
    ) -> Self {
        let mut iteration_histogram = vec![0; opts.max_iterations as usize];
        for it in &report.iterations {
            if let Some(slot) = (*it as usize)
                .checked_sub(1)
                .and_then(|i| iteration_histogram.get_mut(i))
            {
                *slot += 1;
            }
        }
        let residual_histogram = RESIDUAL_BIN_EDGES
            .iter()
            .zip(&report.residuals.counts)
            .map(|(edge, count)| ResidualBin {
                below: edge.is_finite().then_some(*edge),
                count: *count,
            })
            .collect();
        CorrectionReport {
            width: report.width,
            height: report.height,
            max_iterations: opts.max_iterations,
            tolerance: opts.tolerance,
            init: format!("{:?}", opts.init).to_lowercase(),
            mean_iterations: report.mean_iterations(),
            fraction_converged: report.fraction_converged,
            fraction_converged_within_5: report.fraction_converged_within(QUICK_ITERATIONS),
            fraction_invalid: report.fraction_invalid,
            iteration_histogram,
            residual_histogram,
            trace_threshold: TRACE_THRESHOLD,
            trace: trace
                .iter()
                .map(|s| TraceEntry {
                    iteration: s.iteration,
                    mean_residual: s.mean_residual,
                    fraction_below: s.fraction_below,
                })
                .collect(),
            fit,
        }
    }
}
