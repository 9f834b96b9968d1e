//! One function per subcommand. Each reads its upstream artifacts from the
//! output directory, writes its own and leaves a manifest behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use log::{info, warn};
use orb_core::dataset::{assemble, AssembleInputs, Dataset, PredictorSet, ShipsTable, Split, ORB_COUNTS};
use orb_core::eof::{read_coefficients_csv, write_coefficients_csv, EofBasis, OrbCoefficients};
use orb_core::eval::{evaluate, permutation_test, roc_auc, write_roc_csv, Direction};
use orb_core::features::{extract_features, StampFeatures, Statistic};
use orb_core::lasso::{fit_model, predict_dataset, FittedModel, LassoOptions};
use orb_core::pipeline::{check_basis_widths, fit_bases, project_all, Bases, StampRecord};
use orb_core::stamp::{
    apply_filter, decode_stamp, format_time, parse_time, read_track_csv, write_stamp, write_track_csv, Basin,
    StampMeta, TrackPoint,
};
use orb_core::synth::{make_dataset, DatasetOptions, Scenario};
use orb_core::trajectory::{build_trajectory, dominant_period};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Flags, Paths, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::{create_dir, read_json, sha256_bytes, sha256_file, write_json, Manifest};

const FEATURES_DIR: &str = "features";
const INDEX_FILE: &str = "features/index.json";
const BASIS_DIR: &str = "basis";
const COEFFICIENTS_FILE: &str = "coefficients.csv";
const DATASETS_DIR: &str = "datasets";
const MODELS_DIR: &str = "models";
const EVAL_DIR: &str = "eval";
const TESTS_FILE: &str = "tests.json";
const TRAJECTORY_DIR: &str = "trajectory";

fn require(path: PathBuf, what: &'static str, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingUpstream { what, path, stage })
    }
}

fn load_track(cfg: &RunConfig, m: &mut Manifest) -> Result<Vec<TrackPoint>> {
    m.input(&cfg.paths.track_csv)?;
    read_track_csv(&cfg.paths.track_csv).map_err(|e| CliError::Data(format!("{}: {e}", cfg.paths.track_csv.display())))
}

fn load_ships(cfg: &RunConfig, m: &mut Manifest) -> Result<ShipsTable> {
    let p = &cfg.paths.ships_csv;
    m.input(p)?;
    let f = fs::File::open(p).map_err(CliError::io(format!("opening {}", p.display())))?;
    ShipsTable::read_csv(f).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(CliError::io(format!("creating {}", path.display())))
}

fn open_file(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(CliError::io(format!("opening {}", path.display())))
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

/// One stamp's entry in the extraction index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub stamp_sha256: String,
    pub storm_id: String,
    pub time: String,
    pub missing_fraction: f64,
    /// Features file relative to the output directory, absent on failure.
    pub features: Option<String>,
    pub features_sha256: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractIndex {
    /// Hash of the feature settings the entries were computed with.
    pub features_config: String,
    /// Keyed by stamp file name.
    pub entries: BTreeMap<String, IndexEntry>,
}

struct Meta {
    storm_id: String,
    time: DateTime<Utc>,
    missing: f64,
}

impl StampMeta for Meta {
    fn storm_id(&self) -> &str {
        &self.storm_id
    }
    fn time(&self) -> DateTime<Utc> {
        self.time
    }
    fn missing_fraction(&self) -> f64 {
        self.missing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExtractSummary {
    pub stamps: usize,
    pub extracted: usize,
    pub reused: usize,
    pub failed: usize,
}

fn stamp_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(CliError::io(format!("listing {}", dir.display())))?;
    let mut files = Vec::new();
    for e in rd {
        let p = e.map_err(CliError::io(format!("listing {}", dir.display())))?.path();
        if p.extension().is_some_and(|x| x == "stamp") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn features_is_current(cfg: &RunConfig, entry: &IndexEntry, hash: &str) -> bool {
    if entry.stamp_sha256 != hash {
        return false;
    }
    match (&entry.features, &entry.features_sha256) {
        (Some(f), Some(h)) => sha256_file(&cfg.out(f)).is_ok_and(|got| &got == h),
        _ => entry.error.is_some(),
    }
}

/// Extracts all six feature functions from every stamp. Stamps whose bytes
/// and feature settings are unchanged since the last run are skipped.
pub fn extract(cfg: &RunConfig) -> Result<ExtractSummary> {
    let start = Instant::now();
    let mut m = Manifest::new("extract", &cfg.hash());
    create_dir(&cfg.out(FEATURES_DIR))?;
    let features_config = sha256_bytes(serde_json::to_string(&cfg.features).map_err(CliError::data)?.as_bytes());
    let index_path = cfg.out(INDEX_FILE);
    let previous: ExtractIndex = if index_path.exists() {
        read_json(&index_path)?
    } else {
        ExtractIndex::default()
    };
    let reusable = previous.features_config == features_config;

    let files = stamp_files(&cfg.paths.stamps_dir)?;
    let results: Vec<Result<(String, IndexEntry, bool)>> = files
        .par_iter()
        .map(|path| {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let bytes = fs::read(path).map_err(CliError::io(format!("reading {}", path.display())))?;
            let hash = sha256_bytes(&bytes);
            if reusable {
                if let Some(e) = previous.entries.get(&name) {
                    if features_is_current(cfg, e, &hash) {
                        return Ok((name, e.clone(), true));
                    }
                }
            }
            let stamp = decode_stamp(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let mut entry = IndexEntry {
                stamp_sha256: hash,
                storm_id: stamp.storm_id().into(),
                time: format_time(&stamp.time()),
                missing_fraction: stamp.missing_fraction(),
                features: None,
                features_sha256: None,
                error: None,
            };
            match extract_features(&stamp, &cfg.features) {
                Ok(f) => {
                    let rel = format!("{FEATURES_DIR}/{}.json", name.trim_end_matches(".stamp"));
                    let out = cfg.out(&rel);
                    write_json(&out, &f)?;
                    entry.features_sha256 = Some(sha256_file(&out)?);
                    entry.features = Some(rel);
                }
                Err(e) => {
                    warn!("{name}: {e}");
                    entry.error = Some(e.to_string());
                }
            }
            Ok((name, entry, false))
        })
        .collect();

    let mut index = ExtractIndex {
        features_config,
        entries: BTreeMap::new(),
    };
    let mut summary = ExtractSummary {
        stamps: files.len(),
        extracted: 0,
        reused: 0,
        failed: 0,
    };
    let mut listing = String::new();
    for r in results {
        let (name, entry, reused) = r?;
        listing.push_str(&format!("{name} {}\n", entry.stamp_sha256));
        if entry.error.is_some() {
            summary.failed += 1;
        } else if reused {
            summary.reused += 1;
        } else {
            summary.extracted += 1;
        }
        index.entries.insert(name, entry);
    }
    // drop features of stamps that have disappeared
    for (name, e) in &previous.entries {
        if !index.entries.contains_key(name) {
            if let Some(f) = &e.features {
                let _ = fs::remove_file(cfg.out(f));
            }
        }
    }
    write_json(&index_path, &index)?;
    m.inputs.insert(cfg.paths.stamps_dir.display().to_string(), sha256_bytes(listing.as_bytes()));
    m.output(&index_path)?;
    m.summary = serde_json::to_value(summary).map_err(CliError::data)?;
    m.write(&cfg.paths.output_dir)?;
    let secs = start.elapsed().as_secs_f64();
    info!(
        "extract: {} stamps ({} new, {} reused, {} failed) in {secs:.2} s, {:.1} stamps/s",
        summary.stamps,
        summary.extracted,
        summary.reused,
        summary.failed,
        summary.stamps as f64 / secs.max(1e-9)
    );
    Ok(summary)
}

fn load_index(cfg: &RunConfig) -> Result<(PathBuf, ExtractIndex)> {
    let p = require(cfg.out(INDEX_FILE), "extraction index", "extract")?;
    let idx = read_json(&p)?;
    Ok((p, idx))
}

// ---------------------------------------------------------------------------
// basis
// ---------------------------------------------------------------------------

fn basis_file(basin: Basin, stat: Statistic) -> String {
    format!("{BASIS_DIR}/{}_{}.json", basin.as_str(), stat.as_str())
}

/// Fits per-basin EOF bases on all extracted stamps and projects them.
pub fn basis(cfg: &RunConfig) -> Result<usize> {
    let mut m = Manifest::new("basis", &cfg.hash());
    let (index_path, index) = load_index(cfg)?;
    m.input(&index_path)?;
    let track = load_track(cfg, &mut m)?;
    let basin_of: BTreeMap<&str, Basin> = track.iter().map(|p| (p.storm_id.as_str(), p.basin)).collect();

    let mut records = Vec::new();
    for e in index.entries.values() {
        let Some(rel) = &e.features else { continue };
        let Some(&basin) = basin_of.get(e.storm_id.as_str()) else {
            warn!("{} is not on the track; skipped", e.storm_id);
            continue;
        };
        let features: StampFeatures = read_json(&cfg.out(rel))?;
        records.push(StampRecord {
            storm_id: e.storm_id.clone(),
            time: parse_time(&e.time).map_err(CliError::Data)?,
            basin,
            features,
        });
    }
    if records.is_empty() {
        return Err(CliError::Data("no extracted stamps belong to a storm on the track".into()));
    }
    let bases = fit_bases(&records, &cfg.basis_config()).map_err(CliError::data)?;
    let coefficients = project_all(&records, &bases).map_err(CliError::data)?;

    create_dir(&cfg.out(BASIS_DIR))?;
    let mut ks = BTreeMap::new();
    for ((basin, stat), b) in &bases {
        let p = cfg.out(&basis_file(*basin, *stat));
        let text = b.to_json().map_err(CliError::data)?;
        fs::write(&p, text).map_err(CliError::io(format!("writing {}", p.display())))?;
        m.output(&p)?;
        ks.insert(format!("{}_{}", basin.as_str(), stat.as_str()), b.k());
    }
    let cp = cfg.out(COEFFICIENTS_FILE);
    write_coefficients_csv(create_file(&cp)?, &coefficients).map_err(CliError::data)?;
    m.output(&cp)?;
    m.summary = json!({ "stamps": records.len(), "components": ks });
    m.write(&cfg.paths.output_dir)?;
    info!("basis: {} bases from {} stamps", bases.len(), records.len());
    Ok(records.len())
}

fn load_bases(cfg: &RunConfig) -> Result<Bases> {
    let dir = require(cfg.out(BASIS_DIR), "EOF bases", "basis")?;
    let mut bases = Bases::new();
    for basin in Basin::ALL {
        for stat in Statistic::ALL {
            let p = cfg.out(&basis_file(basin, stat));
            if p.exists() {
                let text = fs::read_to_string(&p).map_err(CliError::io(format!("reading {}", p.display())))?;
                let b = EofBasis::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                bases.insert((basin, stat), b);
            }
        }
    }
    if bases.is_empty() {
        return Err(CliError::MissingUpstream {
            what: "EOF bases",
            path: dir,
            stage: "basis",
        });
    }
    Ok(bases)
}

fn load_coefficients(cfg: &RunConfig, m: &mut Manifest) -> Result<Vec<OrbCoefficients>> {
    let p = require(cfg.out(COEFFICIENTS_FILE), "ORB coefficients", "basis")?;
    m.input(&p)?;
    read_coefficients_csv(open_file(&p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

// ---------------------------------------------------------------------------
// assemble
// ---------------------------------------------------------------------------

fn dataset_file(set: PredictorSet) -> String {
    format!("{DATASETS_DIR}/{}.csv", set.as_str())
}

/// Applies the sample filter and builds one labelled table per configured
/// predictor set.
pub fn assemble_sets(cfg: &RunConfig) -> Result<BTreeMap<PredictorSet, usize>> {
    let mut m = Manifest::new("assemble", &cfg.hash());
    let (index_path, index) = load_index(cfg)?;
    m.input(&index_path)?;
    let coefficients = load_coefficients(cfg, &mut m)?;
    if cfg.predictor_sets.iter().any(|s| s != &PredictorSet::SHIPS_only && s != &PredictorSet::SHIPS_plus_Persistence) {
        check_basis_widths(&load_bases(cfg)?, &ORB_COUNTS).map_err(CliError::data)?;
    }
    let track = load_track(cfg, &mut m)?;
    let ships = load_ships(cfg, &mut m)?;
    let metas: Vec<Meta> = index
        .entries
        .values()
        .map(|e| {
            Ok(Meta {
                storm_id: e.storm_id.clone(),
                time: parse_time(&e.time).map_err(CliError::Data)?,
                missing: e.missing_fraction,
            })
        })
        .collect::<Result<_>>()?;
    let basin_track: Vec<TrackPoint> = track.into_iter().filter(|p| p.basin == cfg.basin).collect();
    let sample: Vec<(String, DateTime<Utc>)> = apply_filter(&basin_track, &metas, &cfg.filter)
        .into_iter()
        .map(|(p, _)| (p.storm_id.clone(), p.time))
        .collect();

    create_dir(&cfg.out(DATASETS_DIR))?;
    let mut reports = BTreeMap::new();
    let mut kept = BTreeMap::new();
    for &set in &cfg.predictor_sets {
        let (ds, rep) = assemble(&AssembleInputs {
            predictor_set: set,
            orb_counts: &ORB_COUNTS,
            orb: &coefficients,
            ships: &ships,
            track: &basin_track,
            sample: &sample,
            rapid_threshold: cfg.filter.rapid_threshold,
            split_year: cfg.split_year,
        })
        .map_err(|e| CliError::Data(format!("{}: {e}", set.as_str())))?;
        if !rep.missing_columns.is_empty() {
            warn!("{}: no source provides {:?}", set.as_str(), rep.missing_columns);
        }
        let p = cfg.out(&dataset_file(set));
        ds.write_csv(create_file(&p)?).map_err(CliError::data)?;
        m.output(&p)?;
        info!("assemble: {} keeps {} of {} sampled points", set.as_str(), rep.kept, rep.requested);
        kept.insert(set, rep.kept);
        reports.insert(set.as_str(), rep);
    }
    let rp = cfg.out(&format!("{DATASETS_DIR}/report.json"));
    write_json(&rp, &reports)?;
    m.output(&rp)?;
    m.summary = json!({ "sample": sample.len(), "sets": reports });
    m.write(&cfg.paths.output_dir)?;
    Ok(kept)
}

fn load_dataset(cfg: &RunConfig, set: PredictorSet, m: &mut Manifest) -> Result<Dataset> {
    let p = require(cfg.out(&dataset_file(set)), "assembled dataset", "assemble")?;
    m.input(&p)?;
    Dataset::read_csv(open_file(&p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn model_file(set: PredictorSet) -> String {
    format!("{MODELS_DIR}/{}.json", set.as_str())
}

/// Fits one cross-validated logistic lasso per configured predictor set on
/// the training split.
pub fn fit(cfg: &RunConfig) -> Result<BTreeMap<PredictorSet, FittedModel>> {
    let mut m = Manifest::new("fit", &cfg.hash());
    m.seeds.insert("cv_folds".into(), cfg.seed);
    let s = cfg.settings();
    create_dir(&cfg.out(MODELS_DIR))?;
    let mut out = BTreeMap::new();
    let mut summary = serde_json::Map::new();
    for &set in &cfg.predictor_sets {
        let ds = load_dataset(cfg, set, &mut m)?;
        let fingerprint = sha256_file(&cfg.out(&dataset_file(set)))?;
        let train = ds.subset(Split::Train);
        if train.rows.is_empty() {
            return Err(CliError::Data(format!("{}: training split is empty", set.as_str())));
        }
        let model = fit_model(&train, s.target, set.as_str(), &s.cv(), &LassoOptions::default(), &fingerprint)
            .map_err(|e| CliError::Data(format!("{}: {e}", set.as_str())))?;
        if let Some(w) = &model.warning {
            warn!("{}: {w}", set.as_str());
        }
        let p = cfg.out(&model_file(set));
        write_json(&p, &model)?;
        m.output(&p)?;
        let nz = model.coefficients.iter().filter(|c| **c != 0.0).count();
        info!("fit: {} lambda {:.4e}, {nz} non-zero, p* {:.3}", set.as_str(), model.lambda, model.p_star);
        summary.insert(
            set.as_str().into(),
            json!({ "train_rows": train.rows.len(), "lambda": model.lambda, "nonzero": nz, "p_star": model.p_star }),
        );
        out.insert(set, model);
    }
    m.summary = summary.into();
    m.write(&cfg.paths.output_dir)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub predictor_set: PredictorSet,
    pub seed: u64,
    #[serde(flatten)]
    pub report: orb_core::eval::EvalReport,
}

fn predictions_file(set: PredictorSet) -> String {
    format!("{EVAL_DIR}/{}_predictions.csv", set.as_str())
}

/// Scores the test split with each fitted model: AUC with a bootstrap
/// interval, balanced accuracy at the training cutoff and the ROC curve.
pub fn eval(cfg: &RunConfig) -> Result<BTreeMap<PredictorSet, SetReport>> {
    let mut m = Manifest::new("eval", &cfg.hash());
    m.seeds.insert("bootstrap".into(), cfg.seed);
    create_dir(&cfg.out(EVAL_DIR))?;
    let mut out = BTreeMap::new();
    for &set in &cfg.predictor_sets {
        let mp = require(cfg.out(&model_file(set)), "fitted model", "fit")?;
        m.input(&mp)?;
        let model: FittedModel = read_json(&mp)?;
        let test = load_dataset(cfg, set, &mut m)?.subset(Split::Test);
        if test.rows.is_empty() {
            return Err(CliError::Data(format!("{}: test split is empty", set.as_str())));
        }
        let p = predict_dataset(&model, &test).map_err(CliError::data)?;
        let y = test.labels(cfg.target);
        let report = evaluate(&p, &y, model.p_star, cfg.bootstrap_resamples, cfg.settings().level, cfg.seed)
            .map_err(|e| CliError::Data(format!("{}: {e}", set.as_str())))?;
        let roc = roc_auc(&p, &y).map_err(CliError::data)?;

        let rocp = cfg.out(&format!("{EVAL_DIR}/{}_roc.csv", set.as_str()));
        write_roc_csv(create_file(&rocp)?, &roc).map_err(CliError::data)?;
        let pp = cfg.out(&predictions_file(set));
        let mut w = csv::Writer::from_writer(create_file(&pp)?);
        w.write_record(["storm_id", "time", "p", "y"]).map_err(CliError::data)?;
        for ((r, pi), yi) in test.rows.iter().zip(&p).zip(&y) {
            w.write_record([r.storm_id.clone(), format_time(&r.time), pi.to_string(), u8::from(*yi).to_string()])
                .map_err(CliError::data)?;
        }
        w.flush().map_err(CliError::io(format!("writing {}", pp.display())))?;
        let rep = SetReport {
            predictor_set: set,
            seed: cfg.seed,
            report,
        };
        let rp = cfg.out(&format!("{EVAL_DIR}/{}_report.json", set.as_str()));
        write_json(&rp, &rep)?;
        for f in [&rocp, &pp, &rp] {
            m.output(f)?;
        }
        info!(
            "eval: {} AUC {:.3} [{:.3}, {:.3}], balanced accuracy {:.3}",
            set.as_str(),
            rep.report.auc,
            rep.report.ci.lower,
            rep.report.ci.upper,
            rep.report.balanced_accuracy
        );
        out.insert(set, rep);
    }
    m.summary = serde_json::to_value(&out).map_err(CliError::data)?;
    m.write(&cfg.paths.output_dir)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// test
// ---------------------------------------------------------------------------

type Predictions = BTreeMap<(String, String), (f64, bool)>;

fn load_predictions(cfg: &RunConfig, set: PredictorSet, m: &mut Manifest) -> Result<Predictions> {
    let p = require(cfg.out(&predictions_file(set)), "test-set predictions", "eval")?;
    m.input(&p)?;
    let mut rdr = csv::Reader::from_reader(open_file(&p)?);
    let mut out = Predictions::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        let bad = || CliError::Data(format!("{}: malformed row {:?}", p.display(), rec));
        let prob: f64 = rec.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let y = match rec.get(3) {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(bad()),
        };
        out.insert((rec[0].to_string(), rec[1].to_string()), (prob, y));
    }
    Ok(out)
}

/// Predictions of two sets on the rows both scored.
fn paired(a: &Predictions, b: &Predictions) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let (mut pa, mut pb, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (k, (p, ya)) in a {
        if let Some((q, yb)) = b.get(k) {
            if ya != yb {
                return Err(CliError::Data(format!("labels disagree for {} at {}", k.0, k.1)));
            }
            pa.push(*p);
            pb.push(*q);
            y.push(*ya);
        }
    }
    Ok((pa, pb, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    /// ORB-only against SHIPS-only, alternative `less`.
    pub test1: orb_core::eval::TestResult,
    /// SHIPS + ORB against SHIPS-only, alternative `greater`.
    pub test2: orb_core::eval::TestResult,
    pub rows_test1: usize,
    pub rows_test2: usize,
}

/// Runs both permutation tests on the evaluated test-set predictions.
pub fn test(cfg: &RunConfig) -> Result<TestReport> {
    let mut m = Manifest::new("test", &cfg.hash());
    let s = cfg.settings();
    let orb = load_predictions(cfg, PredictorSet::ORB_only, &mut m)?;
    let ships = load_predictions(cfg, PredictorSet::SHIPS_only, &mut m)?;
    let both = load_predictions(cfg, PredictorSet::SHIPS_plus_ORB, &mut m)?;

    let (o, s1, y1) = paired(&orb, &ships)?;
    let p1 = s.permutation(1);
    let test1 = permutation_test(&o, &s1, &y1, Direction::Less, &p1).map_err(|e| CliError::Data(format!("test 1: {e}")))?;
    let (c, s2, y2) = paired(&both, &ships)?;
    let p2 = s.permutation(2);
    let test2 =
        permutation_test(&c, &s2, &y2, Direction::Greater, &p2).map_err(|e| CliError::Data(format!("test 2: {e}")))?;
    m.seeds.insert("test1".into(), p1.seed);
    m.seeds.insert("test2".into(), p2.seed);

    let rep = TestReport {
        test1,
        test2,
        rows_test1: y1.len(),
        rows_test2: y2.len(),
    };
    let p = cfg.out(TESTS_FILE);
    write_json(&p, &rep)?;
    m.output(&p)?;
    m.summary = serde_json::to_value(&rep).map_err(CliError::data)?;
    m.write(&cfg.paths.output_dir)?;
    info!(
        "test: T1 = {:.4} (p = {:.4}), T2 = {:.4} (p = {:.4}), B = {}",
        rep.test1.statistic, rep.test1.p_value, rep.test2.statistic, rep.test2.p_value, rep.test2.rounds
    );
    Ok(rep)
}

// ---------------------------------------------------------------------------
// trajectory
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub csv: PathBuf,
    pub points: usize,
    /// Dominant period in hours of each smoothed component.
    pub periods_hours: Vec<Option<f64>>,
}

/// Writes one storm's coefficient trajectory for `statistic`.
pub fn trajectory(cfg: &RunConfig, storm_id: &str, statistic: Statistic, roughness: f64) -> Result<TrajectorySummary> {
    let mut m = Manifest::new("trajectory", &cfg.hash());
    let coefficients = load_coefficients(cfg, &mut m)?;
    let tr = build_trajectory(&coefficients, storm_id, statistic, roughness).map_err(CliError::data)?;
    create_dir(&cfg.out(TRAJECTORY_DIR))?;
    let p = cfg.out(&format!("{TRAJECTORY_DIR}/{storm_id}_{}.csv", statistic.as_str()));
    tr.write_csv(create_file(&p)?).map_err(CliError::data)?;
    m.output(&p)?;
    let k = tr.raw.first().map_or(0, |r| r.len());
    let periods_hours = (0..k).map(|i| dominant_period(&tr.component(i, true), tr.dt_hours)).collect();
    let summary = TrajectorySummary {
        csv: p,
        points: tr.times.len(),
        periods_hours,
    };
    m.summary = json!({ "storm_id": storm_id, "statistic": statistic, "roughness_target": roughness, "points": summary.points, "periods_hours": summary.periods_hours });
    m.write(&cfg.paths.output_dir)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub stamps: usize,
    pub track_points: usize,
    /// Config file pointing at the generated inputs, absent for the
    /// table-only sparse-signal scenario.
    pub config: Option<PathBuf>,
}

/// Writes a synthetic input set with known truth to `dir`.
pub fn synth(dir: &Path, scenario: Scenario, n_storms: usize, seed: u64) -> Result<SynthSummary> {
    let ds = make_dataset(n_storms, scenario, seed, &DatasetOptions::for_scenario(scenario))
        .map_err(|e| CliError::Validation(e.to_string()))?;
    create_dir(dir)?;
    let mut m = Manifest::new("synth", "");
    m.seeds.insert("synth".into(), seed);
    let truth = dir.join("truth.json");
    write_json(&truth, &ds.truth)?;
    m.output(&truth)?;

    if let Some(table) = &ds.table {
        let p = dir.join("table.csv");
        table.write_csv(create_file(&p)?).map_err(CliError::data)?;
        m.output(&p)?;
        m.summary = json!({ "scenario": scenario, "storms": n_storms, "rows": table.rows.len() });
        m.write(dir)?;
        return Ok(SynthSummary {
            stamps: 0,
            track_points: 0,
            config: None,
        });
    }

    let stamps_dir = dir.join("stamps");
    create_dir(&stamps_dir)?;
    let stamps = ds.render_all().map_err(CliError::data)?;
    stamps
        .par_iter()
        .map(|s| {
            let p = stamps_dir.join(orb_core::stamp::stamp_file_name(s.storm_id(), &s.time()));
            write_stamp(s, &p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<()>>>()?;
    let track = dir.join("track.csv");
    write_track_csv(create_file(&track)?, &ds.track).map_err(CliError::data)?;
    let ships = dir.join("ships.csv");
    ds.ships.write_csv(create_file(&ships)?).map_err(CliError::data)?;
    for p in [&track, &ships] {
        m.output(p)?;
    }

    let cfg = RunConfig {
        seed,
        paths: Paths {
            stamps_dir: "stamps".into(),
            track_csv: "track.csv".into(),
            ships_csv: "ships.csv".into(),
            output_dir: "run".into(),
        },
        filter: Default::default(),
        var_target: None,
        predictor_sets: PredictorSet::ALL.to_vec(),
        target: orb_core::dataset::Target::RI,
        basin: ds.track.first().map_or(Basin::NAL, |p| p.basin),
        flags: Flags::default(),
        split_year: 2010,
        folds: 10,
        bootstrap_resamples: 250,
        permutation_rounds: 1000,
        features: Default::default(),
    };
    let cp = dir.join("config.json");
    write_json(&cp, &cfg)?;
    m.output(&cp)?;
    m.summary = json!({ "scenario": scenario, "storms": n_storms, "stamps": stamps.len(), "track_points": ds.track.len() });
    m.write(dir)?;
    info!("synth: {} stamps, {} track points in {}", stamps.len(), ds.track.len(), dir.display());
    Ok(SynthSummary {
        stamps: stamps.len(),
        track_points: ds.track.len(),
        config: Some(cp),
    })
}
