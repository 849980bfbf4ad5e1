use std::fs;
use std::path::{Path, PathBuf};

use airway_core::loss::LossParams;
use airway_core::phantom::PhantomConfig;
use airway_core::quant::{Group, Sex};
use airway_core::segment::SegmentParams;
use airway_core::stats::TTestVariant;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every tunable of every command. Omitted keys take their defaults and
/// unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `phantom.tree.seed` when set.
    pub seed: Option<u64>,
    pub phantom: PhantomConfig,
    pub segment: SegmentParams,
    pub eval: EvalConfig,
    pub loss: LossParams,
    pub loss_check: LossCheckConfig,
    pub quant: QuantConfig,
    pub compare: CompareConfig,
    pub paths: PathsConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Centerline points count as found within this distance of the prediction.
    pub tolerance_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossCheckConfig {
    pub fd_step: f64,
    /// Gradients smaller than this are compared in absolute terms.
    pub small_gradient: f64,
    /// Voxels probed by finite differences; 0 probes every voxel.
    pub fd_voxels: usize,
}

impl Default for LossCheckConfig {
    fn default() -> Self {
        Self {
            fd_step: 1e-6,
            small_gradient: 1e-8,
            fd_voxels: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    pub subject_id: String,
    pub group: Group,
    pub sex: Option<Sex>,
    pub age: Option<f64>,
    pub height_cm: Option<f64>,
    pub weight_kg: Option<f64>,
    /// Drop airway voxels outside the lung mask before measuring.
    pub restrict_to_lung: bool,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            subject_id: "subject".into(),
            group: Group::NonIld,
            sex: None,
            age: None,
            height_cm: None,
            weight_kg: None,
            restrict_to_lung: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub variant: TTestVariant,
    /// Also emit BSA-normalized lobar and segmental tables for raw cohorts.
    pub normalized: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            variant: TTestVariant::Pooled,
            normalized: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    pub intensity: Option<PathBuf>,
    pub airway_gt: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub lung_mask: Option<PathBuf>,
    pub region_labels: Option<PathBuf>,
    pub lobe_labels: Option<PathBuf>,
    pub centerlines: Option<PathBuf>,
    /// Subject table: `quant` appends to it, `compare` reads it.
    pub cohort: Option<PathBuf>,
    /// Per-region (n, mean, sd) of both groups.
    pub summary: Option<PathBuf>,
    /// Per-variable group counts for Fisher's exact test.
    pub categorical: Option<PathBuf>,
    /// Foreground probabilities for `loss-check`.
    pub prob: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            intensity: None,
            airway_gt: None,
            pred: None,
            lung_mask: None,
            region_labels: None,
            lobe_labels: None,
            centerlines: None,
            cohort: None,
            summary: None,
            categorical: None,
            prob: None,
        }
    }
}

pub const ECHO_FILE: &str = "config.json";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fold the seed override into the sections that consume it.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.phantom.tree.seed = s;
        }
    }

    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(ECHO_FILE);
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

/// A configured path, or a usage error naming the key to set.
pub fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("missing input path: set paths.{key} or pass the matching flag")))
}
