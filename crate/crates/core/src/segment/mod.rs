//! Airway and lung segmentation.
//!
//! Segmenters and voxel predictors are looked up by name, so the pipeline can
//! swap the classical region grower for a sliding-window predictor without
//! changing the surrounding crop, binarize and re-embed steps.

mod components;
mod grow;
mod lung;
mod window;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use components::{connected_components, largest_component, Components, Connectivity};
pub use grow::{
    find_trachea_seed, minimax_levels, region_grow_airway, GrowParams, GrowthTrace, SeedParams, StopReason,
};
pub use lung::{fill_holes_axial, segment_lung_coarse, LungParams};
pub use window::{
    binarize, infer_windows, sliding_window_infer, window_origins, window_starts, ConstantPredictor, OraclePredictor,
    Predictor, ThresholdPredictor,
};

use crate::grid::{GridError, Mask, Volume};
use crate::transform::{clip_normalize, crop_to_bbox, embed, resample_trilinear, BBox, TransformError};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("no air-like lung component found")]
    EmptyLung,
    #[error("seed voxel {0:?} lies outside the volume")]
    SeedOutOfBounds([usize; 3]),
    #[error("seed intensity {value} HU is not below the starting threshold {limit} HU")]
    SeedNotAir { value: f64, limit: f64 },
    #[error("region growing reaches the volume border at every threshold")]
    UnboundedLeak,
    #[error("no trachea candidate in the top slices; supply a seed")]
    NoSeedCandidate,
    #[error("window {window} exceeds volume extent {dim}")]
    WindowTooLarge { window: usize, dim: usize },
    #[error("invalid segmentation parameter: {0}")]
    BadParam(String),
    #[error("predictor failed: {0}")]
    Predictor(String),
    #[error("unknown {kind} '{name}' (known: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },
}

/// Probabilities (or a 0/1 map) on the input grid, plus optional diagnostics.
#[derive(Clone, Debug)]
pub struct SegmenterOutput {
    pub prob: Volume<f32>,
    pub trace: Option<GrowthTrace>,
}

/// Produces airway probabilities from a HU volume.
pub trait Segmenter: Send + Sync {
    fn name(&self) -> &str;
    fn segment(&self, intensity_hu: &Volume<f32>) -> Result<SegmenterOutput, SegmentError>;
}

pub struct RegionGrowSegmenter {
    pub grow: GrowParams,
    pub seed: SeedParams,
    /// Explicit seed in the coordinates of the volume handed to `segment`.
    pub manual_seed: Option<[usize; 3]>,
}

impl Segmenter for RegionGrowSegmenter {
    fn name(&self) -> &str {
        "region-grow"
    }

    fn segment(&self, intensity_hu: &Volume<f32>) -> Result<SegmenterOutput, SegmentError> {
        let seed = match self.manual_seed {
            Some(s) => s,
            None => find_trachea_seed(intensity_hu, &self.seed)?,
        };
        debug!("region growing from seed {seed:?}");
        let (mask, trace) = region_grow_airway(intensity_hu, seed, &self.grow)?;
        info!(
            "region growing chose {} HU ({} voxels, stop: {:?})",
            trace.chosen_threshold,
            mask.count(),
            trace.stop
        );
        Ok(SegmenterOutput {
            prob: mask.map(|&m| if m { 1.0 } else { 0.0 }),
            trace: Some(trace),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowParams {
    /// Intensity clip range mapped onto [0, 1].
    pub clip_hu: [f64; 2],
    /// Resample the crop to these dims before inference; `null` keeps it as is.
    pub resample: Option<[usize; 3]>,
    pub window: [usize; 3],
    pub overlap: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            clip_hu: [-1000.0, 400.0],
            resample: Some([128, 128, 128]),
            window: [96, 96, 96],
            overlap: 0.5,
        }
    }
}

pub struct SlidingWindowSegmenter {
    pub params: WindowParams,
    pub predictor: Box<dyn Predictor>,
}

impl Segmenter for SlidingWindowSegmenter {
    fn name(&self) -> &str {
        "sliding-window"
    }

    fn segment(&self, intensity_hu: &Volume<f32>) -> Result<SegmenterOutput, SegmentError> {
        let p = &self.params;
        let norm = clip_normalize(intensity_hu, p.clip_hu[0], p.clip_hu[1])?;
        let work = match p.resample {
            Some(dims) => resample_trilinear(&norm, dims)?,
            None => norm,
        };
        let dims = work.dims();
        let mut window = p.window;
        for a in 0..3 {
            if window[a] > dims[a] {
                warn!(
                    "window axis {a} shrunk from {} to the volume extent {}",
                    window[a], dims[a]
                );
                window[a] = dims[a];
            }
        }
        let prob = sliding_window_infer(&work, window, p.overlap, self.predictor.as_ref())?;
        let prob = if prob.dims() == intensity_hu.dims() {
            prob
        } else {
            resample_trilinear(&prob, intensity_hu.dims())?.with_geometry(*intensity_hu.geom())?
        };
        Ok(SegmenterOutput { prob, trace: None })
    }
}

pub const SEGMENTERS: [&str; 2] = ["region-grow", "sliding-window"];
pub const PREDICTORS: [&str; 3] = ["constant", "threshold", "oracle"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorParams {
    pub name: String,
    /// Output of the constant predictor.
    pub constant: f32,
    /// The threshold predictor fires below this HU (converted with the clip range).
    pub threshold_hu: f64,
}

impl Default for PredictorParams {
    fn default() -> Self {
        Self {
            name: "threshold".into(),
            constant: 0.7,
            threshold_hu: -900.0,
        }
    }
}

fn unknown(kind: &'static str, name: &str, known: &[&str]) -> SegmentError {
    SegmentError::UnknownName {
        kind,
        name: name.to_string(),
        known: known.join(", "),
    }
}

/// Build a predictor by name. `oracle` needs the ground-truth mask.
pub fn predictor_by_name(
    params: &PredictorParams,
    clip_hu: [f64; 2],
    gt: Option<Mask>,
) -> Result<Box<dyn Predictor>, SegmentError> {
    match params.name.as_str() {
        "constant" => {
            if !(0.0..=1.0).contains(&params.constant) {
                return Err(SegmentError::BadParam(format!(
                    "constant probability {}",
                    params.constant
                )));
            }
            Ok(Box::new(ConstantPredictor(params.constant)))
        }
        "threshold" => {
            let t = (params.threshold_hu - clip_hu[0]) / (clip_hu[1] - clip_hu[0]);
            Ok(Box::new(ThresholdPredictor(t as f32)))
        }
        "oracle" => gt
            .map(|m| Box::new(OraclePredictor(m)) as Box<dyn Predictor>)
            .ok_or_else(|| SegmentError::BadParam("the oracle predictor needs a ground-truth mask".into())),
        other => Err(unknown("predictor", other, &PREDICTORS)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentParams {
    pub method: String,
    pub lung: LungParams,
    /// Voxels kept around the lung bounding box.
    pub crop_margin: usize,
    pub grow: GrowParams,
    pub seed: SeedParams,
    /// Manual seed in full-volume voxel coordinates.
    pub manual_seed: Option<[usize; 3]>,
    pub window: WindowParams,
    pub predictor: PredictorParams,
    pub binarize_threshold: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            method: "region-grow".into(),
            lung: LungParams::default(),
            crop_margin: 8,
            grow: GrowParams::default(),
            seed: SeedParams::default(),
            manual_seed: None,
            window: WindowParams::default(),
            predictor: PredictorParams::default(),
            binarize_threshold: 0.5,
        }
    }
}

/// Build a segmenter by name. `crop` shifts a manual seed into crop coordinates.
pub fn segmenter_by_name(
    params: &SegmentParams,
    crop: Option<&BBox>,
    gt: Option<Mask>,
) -> Result<Box<dyn Segmenter>, SegmentError> {
    match params.method.as_str() {
        "region-grow" => {
            let manual_seed = match (params.manual_seed, crop) {
                (Some(s), Some(b)) => {
                    if !b.contains(s) {
                        return Err(SegmentError::SeedOutOfBounds(s));
                    }
                    Some([s[0] - b.lo[0], s[1] - b.lo[1], s[2] - b.lo[2]])
                }
                (s, _) => s,
            };
            Ok(Box::new(RegionGrowSegmenter {
                grow: params.grow.clone(),
                seed: params.seed.clone(),
                manual_seed,
            }))
        }
        "sliding-window" => Ok(Box::new(SlidingWindowSegmenter {
            params: params.window.clone(),
            predictor: predictor_by_name(&params.predictor, params.window.clip_hu, gt)?,
        })),
        other => Err(unknown("segmenter", other, &SEGMENTERS)),
    }
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub airway: Mask,
    pub lung: Mask,
    pub crop: BBox,
    pub trace: Option<GrowthTrace>,
}

/// Lung mask, crop to it, segment, binarize, keep the largest 26-connected
/// airway component and re-embed into the input geometry.
pub fn run_segmentation(
    intensity_hu: &Volume<f32>,
    params: &SegmentParams,
    gt: Option<Mask>,
) -> Result<Segmentation, SegmentError> {
    let lung = segment_lung_coarse(intensity_hu, &params.lung)?;
    let (crop, bbox) = crop_to_bbox(intensity_hu, &lung, params.crop_margin)?;
    debug!("lung crop {:?}..={:?}", bbox.lo, bbox.hi);
    let segmenter = segmenter_by_name(params, Some(&bbox), gt)?;
    let out = segmenter.segment(&crop)?;
    let mask = binarize(&out.prob, params.binarize_threshold);
    let airway = largest_component(&mask, Connectivity::TwentySix);
    let airway = embed(&airway, &bbox, *intensity_hu.geom(), false)?;
    Ok(Segmentation {
        airway,
        lung,
        crop: bbox,
        trace: out.trace,
    })
}
