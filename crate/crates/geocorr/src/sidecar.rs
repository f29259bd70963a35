//! Per-image prediction sidecar: the distortion type, the six class scores and
//! the flow file they belong to.

use std::path::{Path, PathBuf};

use geocorr_core::{DistortionType, FlowField};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionSidecar {
    #[serde(rename = "type")]
    pub kind: DistortionType,
    /// One score per type, in the order barrel, pincushion, rotation, shear,
    /// perspective, wave.
    pub scores: [f64; 6],
    /// Flow file, relative to the sidecar's directory.
    pub flow: PathBuf,
}

impl PredictionSidecar {
    /// Type with the highest score; ties go to the earlier type.
    pub fn argmax(&self) -> DistortionType {
        let mut best = 0;
        for (i, s) in self.scores.iter().enumerate() {
            if *s > self.scores[best] {
                best = i;
            }
        }
        DistortionType::ALL[best]
    }

    pub fn flow_path(&self, sidecar_path: &Path) -> PathBuf {
        sidecar_path
            .parent()
            .unwrap_or(Path::new(""))
            .join(&self.flow)
    }
}

/// Reads and validates a sidecar, returning it with its parsed flow.
pub fn read_sidecar(path: &Path) -> Result<(PredictionSidecar, FlowField)> {
    let sidecar: PredictionSidecar = crate::fsutil::read_json(path)?;
    if sidecar.scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid_file(path, "scores must be finite"));
    }
    if sidecar.flow.is_absolute() {
        return Err(Error::invalid_file(path, "flow path must be relative"));
    }
    let flow = crate::flo::read_flow(&sidecar.flow_path(path))?;
    Ok((sidecar, flow))
}

pub fn write_sidecar(path: &Path, sidecar: &PredictionSidecar) -> Result<()> {
    if sidecar.scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Usage("sidecar scores must be finite".into()));
    }
    crate::fsutil::write_json(path, sidecar)
}
