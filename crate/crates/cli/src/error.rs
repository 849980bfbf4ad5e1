use std::path::Path;

use airway_core::distance::DistanceError;
use airway_core::grid::GridError;
use airway_core::loss::LossError;
use airway_core::metrics::MetricsError;
use airway_core::nifti::NiftiError;
use airway_core::phantom::PhantomError;
use airway_core::quant::QuantError;
use airway_core::segment::SegmentError;
use airway_core::stats::StatsError;
use airway_core::transform::TransformError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;
    pub const GEOMETRY: u8 = 4;
    pub const DEGENERATE: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("degenerate statistics: {0}")]
    Degenerate(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io(_) => exit::IO,
            CliError::Geometry(_) => exit::GEOMETRY,
            CliError::Degenerate(_) => exit::DEGENERATE,
            CliError::Other(_) => exit::FAILURE,
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        CliError::Geometry(e.to_string())
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        match e {
            TransformError::Grid(g) => g.into(),
            TransformError::BadRange { .. } | TransformError::BadTarget(_) => CliError::Config(e.to_string()),
            TransformError::EmptyMask => CliError::Other(e.to_string()),
        }
    }
}

impl From<NiftiError> for CliError {
    fn from(e: NiftiError) -> Self {
        match e {
            NiftiError::Io { .. } => CliError::Io(e.to_string()),
            NiftiError::Grid(g) => g.into(),
            _ => CliError::Other(e.to_string()),
        }
    }
}

fn csv_error(e: csv::Error) -> CliError {
    if e.is_io_error() {
        CliError::Io(e.to_string())
    } else {
        CliError::Other(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Grid(g) => g.into(),
            MetricsError::Csv(c) => csv_error(c),
            MetricsError::BadTolerance(_) => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<PhantomError> for CliError {
    fn from(e: PhantomError) -> Self {
        match e {
            PhantomError::BadParams(_) => CliError::Config(e.to_string()),
            PhantomError::Grid(g) => g.into(),
            PhantomError::Nifti(n) => n.into(),
            PhantomError::Metrics(m) => m.into(),
            PhantomError::Io { .. } => CliError::Io(e.to_string()),
            PhantomError::Csv(c) => csv_error(c),
        }
    }
}

impl From<SegmentError> for CliError {
    fn from(e: SegmentError) -> Self {
        match e {
            SegmentError::Grid(g) => g.into(),
            SegmentError::Transform(t) => t.into(),
            SegmentError::BadParam(_)
            | SegmentError::UnknownName { .. }
            | SegmentError::WindowTooLarge { .. }
            | SegmentError::SeedOutOfBounds(_) => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<QuantError> for CliError {
    fn from(e: QuantError) -> Self {
        match e {
            QuantError::Grid(g) => g.into(),
            QuantError::Io { .. } => CliError::Io(e.to_string()),
            QuantError::Csv(c) => csv_error(c),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Degenerate(_) | StatsError::AllZeroTable | StatsError::SingleGroup(_) => {
                CliError::Degenerate(e.to_string())
            }
            StatsError::InsufficientSamples { .. } => CliError::Degenerate(e.to_string()),
            StatsError::Io(_) => CliError::Io(e.to_string()),
            StatsError::Csv(c) => csv_error(c),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Grid(g) => g.into(),
            LossError::BadParam(_) => CliError::Config(e.to_string()),
            LossError::BadProbability(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<DistanceError> for CliError {
    fn from(e: DistanceError) -> Self {
        CliError::Other(e.to_string())
    }
}
