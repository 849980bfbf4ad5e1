#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

//! Airway CT quantification: phantoms, segmentation, losses, metrics,
//! regional volumetry and group statistics.

pub mod distance;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod nifti;
pub mod phantom;
pub mod quant;
pub mod region;
pub mod segment;
pub mod stats;
pub mod transform;
pub mod vec3;
