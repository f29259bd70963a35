//! Synthetic (distorted image, ground-truth flow) dataset generation.

use std::path::{Path, PathBuf};

use geocorr_core::models::{DistortionParams, DistortionType, ParamRange};
use geocorr_core::synth::{synthesize_pair, working_size, CropRect};
use geocorr_core::ImageBuffer;
use image::imageops::FilterType;
use image::DynamicImage;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    /// Size of every emitted image and flow.
    pub width: usize,
    pub height: usize,
    /// Frame the sources are resized to before warping; `rho` and `crop` refer to it.
    pub working_width: usize,
    pub working_height: usize,
    pub records: Vec<DatasetRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    /// Paths relative to the manifest's directory, `/`-separated.
    pub image: String,
    pub flow: String,
    #[serde(flatten)]
    pub params: DistortionParams,
    pub crop: CropRect,
    /// File name of the source image.
    pub source: String,
    /// Seed of the record's parameter draws.
    pub seed: u64,
}

impl DatasetRecord {
    pub fn kind(&self) -> DistortionType {
        self.params.kind()
    }
}

#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub sources: PathBuf,
    pub out: PathBuf,
    /// Records per distortion type.
    pub count: usize,
    pub types: Vec<DistortionType>,
    pub ranges: ParamRange,
    pub seed: u64,
    pub size: (usize, usize),
}

impl DatasetOptions {
    pub fn new(sources: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        DatasetOptions {
            sources: sources.into(),
            out: out.into(),
            count: 1,
            types: DistortionType::ALL.to_vec(),
            ranges: ParamRange::default(),
            seed: 0,
            size: (256, 256),
        }
    }
}

struct Source {
    name: String,
    working: ImageBuffer,
}

fn load_sources(dir: &Path, working: (usize, usize)) -> Result<Vec<Source>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let loaded: Vec<Option<Source>> = paths
        .par_iter()
        .map(|path| match image_io::read_dynamic(path) {
            Ok(img) => {
                let resized =
                    img.resize_exact(working.0 as u32, working.1 as u32, FilterType::Triangle);
                Some(Source {
                    name: path
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    working: image_io::from_dynamic(&DynamicImage::ImageRgb8(resized.to_rgb8())),
                })
            }
            Err(e) => {
                log::warn!("skipping unreadable source {e}");
                None
            }
        })
        .collect();
    let sources: Vec<Source> = loaded.into_iter().flatten().collect();
    if sources.is_empty() {
        return Err(Error::invalid_file(dir, "no readable source images"));
    }
    Ok(sources)
}

/// Generates `count` pairs per type from the images in `opts.sources` and writes
/// `images/`, `flows/` and the manifest under `opts.out`.
///
/// Output is a pure function of the options and the source files: every record
/// draws from its own seeded generator and records are assembled in plan order.
pub fn generate_dataset(opts: &DatasetOptions) -> Result<DatasetManifest> {
    let (w, h) = opts.size;
    if w == 0 || h == 0 {
        return Err(Error::Usage("output size must be positive".into()));
    }
    if opts.types.is_empty() {
        return Err(Error::Usage(
            "at least one distortion type is required".into(),
        ));
    }
    let working = working_size(opts.size);
    let sources = load_sources(&opts.sources, working)?;
    for sub in ["images", "flows"] {
        let dir = opts.out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    // Interleave types so consecutive records rotate through the sources per type.
    let mut master = ChaCha8Rng::seed_from_u64(opts.seed);
    let plan: Vec<(usize, DistortionType, u64)> = (0..opts.count)
        .flat_map(|i| opts.types.iter().map(move |k| (i, *k)))
        .enumerate()
        .map(|(index, (_, kind))| (index, kind, master.next_u64()))
        .collect();

    let records: Vec<Option<DatasetRecord>> = plan
        .par_iter()
        .map(|&(index, kind, seed)| -> Result<Option<DatasetRecord>> {
            let source = &sources[index % sources.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pair =
                match synthesize_pair(&source.working, kind, &opts.ranges, opts.size, &mut rng) {
                    Ok(pair) => pair,
                    Err(e @ geocorr_core::Error::CropTooSmall { .. }) => {
                        log::warn!("record {index} ({kind}) from {}: {e}; skipped", source.name);
                        return Ok(None);
                    }
                    Err(e) => return Err(e.into()),
                };
            let stem = format!("{index:05}_{kind}");
            let image = format!("images/{stem}.png");
            let flow = format!("flows/{stem}.flo");
            image_io::write_png(&opts.out.join(&image), &pair.image)?;
            crate::flo::write_flow(&opts.out.join(&flow), &pair.flow)?;
            Ok(Some(DatasetRecord {
                image,
                flow,
                params: pair.params,
                crop: pair.crop,
                source: source.name.clone(),
                seed,
            }))
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed: opts.seed,
        width: w,
        height: h,
        working_width: working.0,
        working_height: working.1,
        records: records.into_iter().flatten().collect(),
    };
    crate::fsutil::write_json(&opts.out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = crate::fsutil::read_json(path)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::invalid_file(
            path,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    Ok(manifest)
}
