//! Interpretable convective-structure features for tropical-cyclone infrared
//! imagery and the statistical pipeline built on them.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`stamp`] – storm-centred brightness-temperature rasters, tracks, file
//!   formats and sample filtering.
//! * [`features`] – organization (DAV), radial (RAD) and bulk-morphology
//!   (SIZE/SKEW/SHAPE/ECC) functions of a stamp.
//! * [`eof`] – per-basin PCA of feature curves into EOF coefficients, plus
//!   EWMA smoothing of coefficient time series.
//! * [`dataset`] – rapid-change labels, lagged predictor sets and assembly.
//! * [`lasso`] – L1-penalised logistic regression with storm-grouped CV.
//! * [`eval`] – ROC/AUC, balanced accuracy, bootstrap intervals and
//!   permutation tests.
//! * [`synth`] – synthetic stamps and datasets with known ground truth.
//! * [`pipeline`] / [`trajectory`] – in-memory orchestration and
//!   phase-space summaries.

pub mod numeric;
pub mod stamp;
pub mod dataset;
pub mod eof;
pub mod eval;
pub mod features;
pub mod lasso;
pub mod pipeline;
pub mod synth;
pub mod trajectory;
