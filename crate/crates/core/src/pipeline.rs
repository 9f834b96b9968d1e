//! In-memory pipeline stages shared by the command-line tool and the
//! end-to-end tests: parallel extraction, per-basin basis fitting, projection,
//! model fitting and the two AUC comparison tests.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    assemble, AssembleInputs, AssemblyReport, Dataset, DatasetError, PredictorSet, ShipsTable, Split, Target,
    ORB_COUNTS,
};
use crate::eof::{fit_basis, project_function, ComponentCount, EofBasis, EofError, OrbCoefficients};
use crate::eval::{evaluate, permutation_test, Direction, EvalError, EvalReport, PermutationOptions, TestResult};
use crate::features::{extract_features, FeatureConfig, FeatureError, StampFeatures, Statistic};
use crate::lasso::{fit_model, predict_dataset, CvConfig, FittedModel, LassoError, LassoOptions};
use crate::stamp::{apply_filter, Basin, SampleFilter, Stamp, TrackPoint};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("feature extraction failed for {storm_id} at {time}: {source}")]
    Feature {
        storm_id: String,
        time: String,
        source: FeatureError,
    },
    #[error("basis {basin}/{statistic}: {source}")]
    Basis {
        basin: Basin,
        statistic: Statistic,
        source: EofError,
    },
    #[error("no basis for {basin}/{statistic}")]
    MissingBasis { basin: Basin, statistic: Statistic },
    #[error("basis {basin}/{statistic} keeps {k} components but the predictor table needs {needed}")]
    BasisTooNarrow {
        basin: Basin,
        statistic: Statistic,
        k: usize,
        needed: usize,
    },
    #[error("{set}: {source}")]
    Model { set: String, source: LassoError },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("split {0:?} has no rows")]
    EmptySplit(Split),
}

/// Features of one stamp, keyed for joining with the track.
#[derive(Debug, Clone)]
pub struct StampRecord {
    pub storm_id: String,
    pub time: DateTime<Utc>,
    pub basin: Basin,
    pub features: StampFeatures,
}

/// Extracts features from every stamp in parallel. Results keep input order.
pub fn extract_all(stamps: &[Stamp], cfg: &FeatureConfig) -> Vec<Result<StampFeatures, FeatureError>> {
    stamps.par_iter().map(|s| extract_features(s, cfg)).collect()
}

/// Components kept per statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    pub counts: BTreeMap<Statistic, ComponentCount>,
}

impl Default for BasisConfig {
    /// The predictor-table widths.
    fn default() -> Self {
        BasisConfig {
            counts: ORB_COUNTS.iter().map(|(s, k)| (*s, ComponentCount::Fixed(*k))).collect(),
        }
    }
}

impl BasisConfig {
    pub fn variance_target(target: f64) -> BasisConfig {
        BasisConfig {
            counts: Statistic::ALL.iter().map(|s| (*s, ComponentCount::VarianceTarget(target))).collect(),
        }
    }

    pub fn count(&self, stat: Statistic) -> ComponentCount {
        self.counts.get(&stat).copied().unwrap_or_default()
    }
}

pub type Bases = BTreeMap<(Basin, Statistic), EofBasis>;

/// Fits one basis per (basin, statistic) present in `records`, in parallel
/// across combinations. Records are used in the order given.
pub fn fit_bases(records: &[StampRecord], cfg: &BasisConfig) -> Result<Bases, PipelineError> {
    let mut keys: Vec<(Basin, Statistic)> = Vec::new();
    for b in Basin::ALL {
        if records.iter().any(|r| r.basin == b) {
            keys.extend(Statistic::ALL.iter().map(|s| (b, *s)));
        }
    }
    keys.par_iter()
        .map(|&(basin, statistic)| {
            let members: Vec<&StampRecord> = records.iter().filter(|r| r.basin == basin).collect();
            let thresholds = members[0].features.get(statistic).thresholds.clone();
            let curves: Vec<Vec<f64>> = members.iter().map(|r| r.features.get(statistic).values.clone()).collect();
            fit_basis(statistic, basin, &thresholds, &curves, cfg.count(statistic))
                .map(|b| ((basin, statistic), b))
                .map_err(|source| PipelineError::Basis {
                    basin,
                    statistic,
                    source,
                })
        })
        .collect()
}

/// Projects every record onto its basin's bases.
pub fn project_all(records: &[StampRecord], bases: &Bases) -> Result<Vec<OrbCoefficients>, PipelineError> {
    records
        .par_iter()
        .map(|r| {
            let mut alphas = BTreeMap::new();
            for stat in Statistic::ALL {
                let basis = bases.get(&(r.basin, stat)).ok_or(PipelineError::MissingBasis {
                    basin: r.basin,
                    statistic: stat,
                })?;
                let a = project_function(r.features.get(stat), basis).map_err(|source| PipelineError::Basis {
                    basin: r.basin,
                    statistic: stat,
                    source,
                })?;
                alphas.insert(stat, a);
            }
            Ok(OrbCoefficients {
                storm_id: r.storm_id.clone(),
                time: r.time,
                alphas,
            })
        })
        .collect()
}

/// Checks each basis keeps at least as many components as the predictor
/// table reads.
pub fn check_basis_widths(bases: &Bases, orb_counts: &[(Statistic, usize)]) -> Result<(), PipelineError> {
    for ((basin, statistic), b) in bases {
        if let Some((_, needed)) = orb_counts.iter().find(|(s, _)| s == statistic) {
            if b.k() < *needed {
                return Err(PipelineError::BasisTooNarrow {
                    basin: *basin,
                    statistic: *statistic,
                    k: b.k(),
                    needed: *needed,
                });
            }
        }
    }
    Ok(())
}

/// `(storm_id, time)` of track points passing the sample filter.
pub fn filtered_sample(track: &[TrackPoint], stamps: &[Stamp], filter: &SampleFilter) -> Vec<(String, DateTime<Utc>)> {
    apply_filter(track, stamps, filter)
        .into_iter()
        .map(|(p, _)| (p.storm_id.clone(), p.time))
        .collect()
}

/// Settings for an in-memory run from stamps to test results.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub seed: u64,
    pub target: Target,
    pub basin: Basin,
    pub split_year: i32,
    pub filter: SampleFilter,
    pub folds: usize,
    pub path_len: usize,
    pub one_se: bool,
    pub bootstrap_resamples: usize,
    pub level: f64,
    pub permutation_rounds: usize,
    pub paired: bool,
    pub add_one: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            seed: 0,
            target: Target::RI,
            basin: Basin::NAL,
            split_year: 2010,
            filter: SampleFilter::default(),
            folds: 10,
            path_len: 100,
            one_se: false,
            bootstrap_resamples: 250,
            level: 0.95,
            permutation_rounds: 1000,
            paired: false,
            add_one: false,
        }
    }
}

impl RunSettings {
    pub fn cv(&self) -> CvConfig {
        CvConfig {
            folds: self.folds,
            seed: self.seed,
            path_len: self.path_len,
            one_se: self.one_se,
            ..CvConfig::default()
        }
    }

    pub fn permutation(&self, direction_seed: u64) -> PermutationOptions {
        PermutationOptions {
            rounds: self.permutation_rounds,
            seed: self.seed ^ direction_seed,
            paired: self.paired,
            add_one: self.add_one,
        }
    }
}

/// A fitted model with its test-set predictions and evaluation.
#[derive(Debug, Clone)]
pub struct ModelOutcome {
    pub model: FittedModel,
    pub test_predictions: Vec<f64>,
    pub test_labels: Vec<bool>,
    pub report: EvalReport,
}

/// Fits on the training split and evaluates on the test split.
pub fn fit_and_evaluate(data: &Dataset, set: PredictorSet, s: &RunSettings) -> Result<ModelOutcome, PipelineError> {
    let train = data.subset(Split::Train);
    let test = data.subset(Split::Test);
    if train.rows.is_empty() {
        return Err(PipelineError::EmptySplit(Split::Train));
    }
    if test.rows.is_empty() {
        return Err(PipelineError::EmptySplit(Split::Test));
    }
    let model = fit_model(&train, s.target, set.as_str(), &s.cv(), &LassoOptions::default(), "")
        .map_err(|source| PipelineError::Model {
            set: set.as_str().into(),
            source,
        })?;
    let p = predict_dataset(&model, &test).map_err(|source| PipelineError::Model {
        set: set.as_str().into(),
        source,
    })?;
    let y = test.labels(s.target);
    let report = evaluate(&p, &y, model.p_star, s.bootstrap_resamples, s.level, s.seed)?;
    Ok(ModelOutcome {
        model,
        test_predictions: p,
        test_labels: y,
        report,
    })
}

/// Test 1: is ORB-only worse than SHIPS-only (`less`).
pub fn test_one(orb_only: &ModelOutcome, ships_only: &ModelOutcome, s: &RunSettings) -> Result<TestResult, PipelineError> {
    Ok(permutation_test(
        &orb_only.test_predictions,
        &ships_only.test_predictions,
        &orb_only.test_labels,
        Direction::Less,
        &s.permutation(1),
    )?)
}

/// Test 2: does SHIPS + ORB improve on SHIPS-only (`greater`).
pub fn test_two(combined: &ModelOutcome, ships_only: &ModelOutcome, s: &RunSettings) -> Result<TestResult, PipelineError> {
    Ok(permutation_test(
        &combined.test_predictions,
        &ships_only.test_predictions,
        &combined.test_labels,
        Direction::Greater,
        &s.permutation(2),
    )?)
}

/// Everything between raw inputs and assembled datasets.
pub struct Prepared {
    pub records: Vec<StampRecord>,
    pub bases: Bases,
    pub coefficients: Vec<OrbCoefficients>,
    pub sample: Vec<(String, DateTime<Utc>)>,
}

/// Extracts features, fits bases on every stamp of each basin and projects.
/// Stamps whose storm is not on the track are skipped.
pub fn prepare(
    stamps: &[Stamp],
    track: &[TrackPoint],
    features: &FeatureConfig,
    basis: &BasisConfig,
    filter: &SampleFilter,
) -> Result<Prepared, PipelineError> {
    let basin_of: BTreeMap<&str, Basin> = track.iter().map(|p| (p.storm_id.as_str(), p.basin)).collect();
    let extracted = extract_all(stamps, features);
    let mut records = Vec::with_capacity(stamps.len());
    for (st, f) in stamps.iter().zip(extracted) {
        let Some(&basin) = basin_of.get(st.storm_id()) else {
            continue;
        };
        let features = f.map_err(|source| PipelineError::Feature {
            storm_id: st.storm_id().into(),
            time: crate::stamp::format_time(&st.time()),
            source,
        })?;
        records.push(StampRecord {
            storm_id: st.storm_id().into(),
            time: st.time(),
            basin,
            features,
        });
    }
    let bases = fit_bases(&records, basis)?;
    let coefficients = project_all(&records, &bases)?;
    let sample = filtered_sample(track, stamps, filter);
    Ok(Prepared {
        records,
        bases,
        coefficients,
        sample,
    })
}

/// Assembles one predictor set from prepared inputs.
pub fn assemble_set(
    prepared: &Prepared,
    ships: &ShipsTable,
    track: &[TrackPoint],
    set: PredictorSet,
    s: &RunSettings,
) -> Result<(Dataset, AssemblyReport), PipelineError> {
    check_basis_widths(&prepared.bases, &ORB_COUNTS)?;
    let basin_track: Vec<TrackPoint> = track.iter().filter(|p| p.basin == s.basin).cloned().collect();
    Ok(assemble(&AssembleInputs {
        predictor_set: set,
        orb_counts: &ORB_COUNTS,
        orb: &prepared.coefficients,
        ships,
        track: &basin_track,
        sample: &prepared.sample,
        rapid_threshold: s.filter.rapid_threshold,
        split_year: s.split_year,
    })?)
}
