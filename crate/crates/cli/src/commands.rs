use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use fishlen::dataset::{
    load_dataset, load_predictions, read_json, select, DatasetIndex, Prediction, Regime, Selection, SplitConfig,
};
use fishlen::evallen::{
    aggregation_curve, group_by_fish, length_report, match_lengths_gt, match_lengths_pd, EvalLenError,
    LengthReport, LengthUnit, MatchSummary, DEFAULT_BIN_CM, DEFAULT_CLIP_CM,
};
use fishlen::evalseg::{coco_thresholds, evaluate_segmentation};
use fishlen::geometry::{
    calibrate_planar, CalibrationFile, CalibrationOptions, CalibrationSummary, CameraFile, CameraModel,
    GeometryError,
};
use fishlen::length::{
    read_length_records, run_skl, LengthRecord, SklInput, SklOptions, DEFAULT_CONF_THRESHOLD, DEFAULT_STEP_PX,
};
use fishlen::synth::{generate_dataset, OcclusionSpec, SynthConfig};
use fishlen::{par, Error};

use crate::output::OutputPlan;

pub fn init_threads(threads: Option<usize>) -> Result<(), Error> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        return Err(Error::Input("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        log::warn!("built without parallel support; running on one thread");
    }
    Ok(())
}

/// Which groups a run covers.
#[derive(Debug, Clone, PartialEq)]
enum GroupSpec {
    All,
    List(BTreeSet<u32>),
    Test,
    Validation,
    Train,
}

fn parse_groups(s: Option<&str>) -> Result<GroupSpec, Error> {
    let Some(s) = s.map(str::trim) else {
        return Ok(GroupSpec::All);
    };
    match s {
        "all" => return Ok(GroupSpec::All),
        "test" => return Ok(GroupSpec::Test),
        "validation" => return Ok(GroupSpec::Validation),
        "train" => return Ok(GroupSpec::Train),
        _ => {}
    }
    let bad = || Error::Input(format!("invalid --groups value {s:?} (expected e.g. 1-5,8 or test)"));
    let mut out = BTreeSet::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => {
                out.insert(part.parse().map_err(|_| bad())?);
            }
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(GroupSpec::List(out))
}

impl GroupSpec {
    /// Concrete group set given every group that exists.
    fn resolve(&self, available: impl IntoIterator<Item = u32>) -> Option<BTreeSet<u32>> {
        let split = SplitConfig::default();
        match self {
            GroupSpec::All => None,
            GroupSpec::List(g) => Some(g.clone()),
            GroupSpec::Test => Some(split.test_groups),
            GroupSpec::Validation => Some(split.validation_groups),
            GroupSpec::Train => Some(
                available
                    .into_iter()
                    .filter(|g| !split.test_groups.contains(g) && !split.validation_groups.contains(g))
                    .collect(),
            ),
        }
    }
}

fn parse_regime(s: Option<&str>) -> Result<Option<Regime>, Error> {
    s.map(|r| r.parse::<Regime>().map_err(Error::Input)).transpose()
}

fn selection(index: &DatasetIndex, groups: &GroupSpec, regime: Regime) -> Selection {
    Selection {
        groups: groups.resolve(index.groups().keys().copied()),
        regime,
    }
}

fn check_threshold(t: f64) -> Result<f64, Error> {
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(Error::Input(format!("confidence threshold must lie in [0, 1], got {t}")))
    }
}

fn group_from_name(path: &Path) -> Option<u32> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

/// JSON files of a directory, sorted by name.
fn json_files(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Input(format!("{}: no .json files found", dir.display())));
    }
    Ok(files)
}

/// Reads per-group JSON files, taking the group from `group_of` or the file name.
fn per_group<T: serde::de::DeserializeOwned>(
    dir: &Path,
    group_of: impl Fn(&T) -> Option<u32>,
) -> Result<BTreeMap<u32, (PathBuf, T)>, Error> {
    let mut out: BTreeMap<u32, (PathBuf, T)> = BTreeMap::new();
    for path in json_files(dir)? {
        let value: T = read_json(&path)?;
        let group = group_of(&value)
            .or_else(|| group_from_name(&path))
            .ok_or_else(|| Error::Input(format!("{}: cannot tell which group this file is for", path.display())))?;
        if let Some((first, _)) = out.get(&group) {
            return Err(Error::Input(format!(
                "group {group} appears in both {} and {}",
                first.display(),
                path.display()
            )));
        }
        out.insert(group, (path, value));
    }
    Ok(out)
}

const ROUND_TRIP_TOL_PX: f64 = 1e-6;

/// Pixel → belt → pixel must come back to the start across the image.
fn round_trip_check(camera: &CameraModel, size: [usize; 2]) -> Result<(), GeometryError> {
    let (w, h) = (size[0] as f64, size[1] as f64);
    for i in 0..=4 {
        for j in 0..=4 {
            let p = [w * (0.05 + 0.225 * i as f64), h * (0.05 + 0.225 * j as f64)];
            let q = camera.belt_to_pixel(camera.pixel_to_belt(p)?)?;
            if (q[0] - p[0]).hypot(q[1] - p[1]) > ROUND_TRIP_TOL_PX {
                return Err(GeometryError::Numerical(format!(
                    "pixel {p:?} does not survive the belt round trip (got {q:?})"
                )));
            }
        }
    }
    Ok(())
}

pub fn calibrate(input: &Path, out: &Path, groups: Option<String>, refine: bool, force: bool) -> Result<(), Error> {
    let spec = parse_groups(groups.as_deref())?;
    let files = per_group::<CalibrationFile>(input, |f| f.group)?;
    let wanted = spec.resolve(files.keys().copied());
    let jobs: Vec<(u32, &CalibrationFile)> = files
        .iter()
        .filter(|(g, _)| wanted.as_ref().is_none_or(|w| w.contains(g)))
        .map(|(&g, (_, f))| (g, f))
        .collect();
    if let Some(w) = &wanted {
        let missing: Vec<u32> = w.iter().filter(|g| !files.contains_key(g)).copied().collect();
        if !missing.is_empty() {
            return Err(Error::Input(format!("no calibration file for groups {missing:?}")));
        }
    }
    let options = CalibrationOptions {
        refine,
        ..CalibrationOptions::default()
    };
    let results = par::map(&jobs, |&(g, file)| -> Result<CameraFile, Error> {
        file.validate()?;
        let res = calibrate_planar(&file.views, &options)?;
        let size = file.image_size.unwrap_or([
            (2.0 * res.camera.intrinsics.cx + 1.0).round() as usize,
            (2.0 * res.camera.intrinsics.cy + 1.0).round() as usize,
        ]);
        round_trip_check(&res.camera, size)?;
        let mut cf = CameraFile::from_model(&res.camera);
        cf.group = Some(g);
        cf.image_size = file.image_size;
        cf.calibration = Some(CalibrationSummary {
            views: file.views.len(),
            flat_views: res.flat_views,
            rms_reprojection_closed_form_px: res.rms_closed_form_px,
            rms_reprojection_px: res.rms_refined_px,
            belt_rms_transfer_mm: res.belt_rms_transfer_mm,
        });
        Ok(cf)
    });
    let mut plan = OutputPlan::default();
    for (&(g, _), res) in jobs.iter().zip(results) {
        let cf = res.map_err(|e| e.context(format!("group {g}")))?;
        if let Some(s) = &cf.calibration {
            println!(
                "group {g:02}: fx {:.2} fy {:.2} k1 {:.5} reprojection {:.4} px (closed form {:.4} px), belt fit {:.4} mm",
                cf.fx, cf.fy, cf.distortion.k1, s.rms_reprojection_px, s.rms_reprojection_closed_form_px,
                s.belt_rms_transfer_mm
            );
        }
        plan.add_json(out.join(format!("group_{g:02}.json")), &cf)?;
    }
    plan.write(force)?;
    Ok(())
}

fn load_cameras(dir: &Path) -> Result<BTreeMap<u32, CameraModel>, Error> {
    per_group::<CameraFile>(dir, |c| c.group)?
        .into_iter()
        .map(|(g, (path, c))| {
            c.to_model()
                .map(|m| (g, m))
                .map_err(|e| Error::from(e).context(path.display().to_string()))
        })
        .collect()
}

fn predictions_in(preds: Vec<Prediction>, index: &DatasetIndex) -> Vec<Prediction> {
    preds.into_iter().filter(|p| index.image(p.image_id).is_some()).collect()
}

pub struct SklArgs {
    pub annotations: PathBuf,
    pub cameras: PathBuf,
    pub predictions: Option<PathBuf>,
    pub groups: Option<String>,
    pub regime: Option<String>,
    pub conf_threshold: Option<f64>,
    pub step_px: Option<f64>,
    pub out: PathBuf,
    pub force: bool,
}

pub fn skl(a: SklArgs) -> Result<(), Error> {
    let spec = parse_groups(a.groups.as_deref())?;
    let regime = parse_regime(a.regime.as_deref())?.unwrap_or(Regime::Combined);
    let options = SklOptions {
        conf_threshold: check_threshold(a.conf_threshold.unwrap_or(DEFAULT_CONF_THRESHOLD))?,
        step_px: a.step_px.unwrap_or(DEFAULT_STEP_PX),
    };
    let index = load_dataset(&a.annotations)?;
    let sub = select(&index, &selection(&index, &spec, regime))?;
    let cameras = load_cameras(&a.cameras)?;
    let preds = match &a.predictions {
        Some(p) => Some(predictions_in(load_predictions(p, &index)?, &sub)),
        None => None,
    };
    let input = match &preds {
        Some(p) => SklInput::Predictions {
            index: &sub,
            predictions: p,
        },
        None => SklInput::GroundTruth(&sub),
    };
    let output = run_skl(input, &cameras, &options)?;
    let records: Vec<LengthRecord> = output.estimates.iter().map(|e| e.to_record("skl")).collect();
    let mut plan = OutputPlan::default();
    plan.add_json(&a.out, &records)?;
    plan.check(a.force)?;
    println!("{} estimates, {} instances skipped", records.len(), output.skipped.len());
    if preds.is_none() && !records.is_empty() {
        let m = match_lengths_gt(&records, &sub);
        let r = length_report(&m.pairs, LengthUnit::Mm, DEFAULT_CLIP_CM, DEFAULT_BIN_CM)?;
        println!(
            "against annotated lengths ({} regime, {} fish): MAE {:.3} cm, MAPE {:.3}%",
            regime, r.count, r.mae_cm, r.mape_pct
        );
    }
    plan.write(a.force)?;
    Ok(())
}

pub fn eval_seg(
    annotations: &Path,
    predictions: &Path,
    groups: Option<String>,
    regime: Option<String>,
    out: &Path,
    force: bool,
) -> Result<(), Error> {
    let spec = parse_groups(groups.as_deref())?;
    let regime = parse_regime(regime.as_deref())?.unwrap_or(Regime::Combined);
    let index = load_dataset(annotations)?;
    let sub = select(&index, &selection(&index, &spec, regime))?;
    let preds = predictions_in(load_predictions(predictions, &index)?, &sub);
    let report = evaluate_segmentation(&preds, sub.instances(), sub.categories(), &coco_thresholds())?;
    let mut plan = OutputPlan::default();
    plan.add_json(out.join("seg_report.json"), &report)?;
    plan.add(out.join("seg_report.csv"), report.to_csv());
    plan.check(force)?;
    for c in &report.classes {
        println!("{:<20} gt {:>6}  pred {:>6}  mAP {:.4}", c.name, c.gt_count, c.prediction_count, c.map);
    }
    println!("mAP {:.4} ({} regime)", report.map, regime);
    plan.write(force)?;
    Ok(())
}

pub struct EvalLenArgs {
    pub annotations: PathBuf,
    pub lengths: PathBuf,
    pub predictions: Option<PathBuf>,
    pub groups: Option<String>,
    pub regime: Option<String>,
    pub conf_threshold: Option<f64>,
    pub clip_cm: Option<f64>,
    pub bin_cm: Option<f64>,
    pub samples: Option<String>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub force: bool,
}

fn parse_samples(s: Option<&str>) -> Result<Vec<usize>, Error> {
    let Some(s) = s else {
        return Ok((1..=5).collect());
    };
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Input(format!("invalid --samples entry {p:?}")))
        })
        .collect()
}

#[derive(serde::Serialize)]
struct RegimeReport {
    #[serde(flatten)]
    report: LengthReport,
    unmatched_estimates: usize,
    unmatched_truths: usize,
}

pub fn eval_len(a: EvalLenArgs) -> Result<(), Error> {
    let spec = parse_groups(a.groups.as_deref())?;
    let regimes = match parse_regime(a.regime.as_deref())? {
        Some(r) => vec![r],
        None => vec![Regime::Separated, Regime::Touching, Regime::Combined],
    };
    let threshold = check_threshold(a.conf_threshold.unwrap_or(DEFAULT_CONF_THRESHOLD))?;
    let clip = a.clip_cm.unwrap_or(DEFAULT_CLIP_CM);
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(Error::Input(format!("--clip-cm must be positive, got {clip}")));
    }
    let bin = a.bin_cm.unwrap_or(DEFAULT_BIN_CM);
    let samples = parse_samples(a.samples.as_deref())?;
    let trials = a.trials.unwrap_or(200);
    let seed = a.seed.unwrap_or(0);

    let index = load_dataset(&a.annotations)?;
    let records: Vec<LengthRecord> = read_length_records(&a.lengths)?
        .into_iter()
        .filter(|r| r.score.is_none_or(|s| s >= threshold))
        .collect();
    let preds = match &a.predictions {
        Some(p) => Some(load_predictions(p, &index)?),
        None => None,
    };

    let mut reports = Vec::new();
    let mut last_pairs = None;
    for &regime in &regimes {
        let sub = select(&index, &selection(&index, &spec, regime))?;
        let recs: Vec<LengthRecord> = records.iter().filter(|r| sub.image(r.image_id).is_some()).cloned().collect();
        let m: MatchSummary = match &preds {
            Some(p) => match_lengths_pd(&recs, p, &sub)?,
            None => match_lengths_gt(&recs, &sub),
        };
        match length_report(&m.pairs, LengthUnit::Mm, clip, bin) {
            Ok(mut r) => {
                r.regime = Some(regime.name().to_string());
                println!(
                    "{:<10} n {:>6}  MAE {:.3} cm  MAPE {:.3}%  mean {:+.3} cm  std {:.3} cm",
                    regime, r.count, r.mae_cm, r.mape_pct, r.mean_error_cm, r.std_error_cm
                );
                reports.push(RegimeReport {
                    report: r,
                    unmatched_estimates: m.unmatched_estimates,
                    unmatched_truths: m.unmatched_truths,
                });
                last_pairs = Some(m.pairs);
            }
            Err(EvalLenError::NoPairs) => log::warn!("no matched estimates in the {regime} regime"),
            Err(e) => return Err(e.into()),
        }
    }
    let Some(pairs) = last_pairs else {
        return Err(EvalLenError::NoPairs.into());
    };

    let mut plan = OutputPlan::default();
    plan.add_json(a.out.join("length_report.json"), &reports)?;
    for r in &reports {
        let name = r.report.regime.as_deref().unwrap_or("all");
        plan.add(a.out.join(format!("histogram_{name}.csv")), r.report.histogram.to_csv());
    }
    let fish = group_by_fish(&pairs);
    match aggregation_curve(&fish, LengthUnit::Mm, &samples, trials, seed) {
        Ok(curve) => {
            for (n, (m, s)) in curve.n_values.iter().zip(curve.mae_cm.iter().zip(&curve.std_cm)) {
                println!("aggregate n {n:>3}: MAE {m:.3} cm (std {s:.3})");
            }
            plan.add_json(a.out.join("aggregation_curve.json"), &curve)?;
            plan.add(a.out.join("aggregation_curve.csv"), curve.to_csv());
        }
        Err(EvalLenError::NoFishWithSamples(n)) => {
            log::warn!("no fish has {n} estimates; aggregation curve not written")
        }
        Err(e) => return Err(e.into()),
    }
    plan.write(a.force)?;
    Ok(())
}

pub struct SynthArgs {
    pub seed: Option<u64>,
    pub groups: Option<String>,
    pub fish_per_group: Option<usize>,
    pub images_per_set: Option<usize>,
    pub no_occlusion: bool,
    pub out: PathBuf,
    pub force: bool,
}

pub fn synth(a: SynthArgs) -> Result<(), Error> {
    let mut cfg = SynthConfig::default();
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    match parse_groups(a.groups.as_deref())? {
        GroupSpec::All => {}
        GroupSpec::List(g) => cfg.groups = g.into_iter().collect(),
        other => {
            let split = SplitConfig::default();
            cfg.groups = match other {
                GroupSpec::Test => split.test_groups.into_iter().collect(),
                GroupSpec::Validation => split.validation_groups.into_iter().collect(),
                _ => (1..=25)
                    .filter(|g| !split.test_groups.contains(g) && !split.validation_groups.contains(g))
                    .collect(),
            };
        }
    }
    if let Some(n) = a.fish_per_group {
        cfg.fish_per_group = n;
    }
    if let Some(n) = a.images_per_set {
        cfg.images_per_set = n;
    }
    cfg.occlusion = if a.no_occlusion { None } else { Some(OcclusionSpec::default()) };
    let data = generate_dataset(&cfg)?;
    let mut plan = OutputPlan::default();
    for (path, contents) in data.files()? {
        plan.add(a.out.join(path), contents);
    }
    plan.add_json(a.out.join("synth_config.json"), &cfg)?;
    plan.check(a.force)?;
    println!(
        "{} images, {} annotations, {} groups, seed {}",
        data.annotations.images.len(),
        data.annotations.annotations.len(),
        data.calibrations.len(),
        cfg.seed
    );
    plan.write(a.force)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_lists_and_keywords() {
        assert_eq!(parse_groups(Some("1-3,7")).unwrap(), GroupSpec::List([1, 2, 3, 7].into()));
        assert_eq!(parse_groups(Some("test")).unwrap(), GroupSpec::Test);
        assert_eq!(parse_groups(None).unwrap(), GroupSpec::All);
        assert!(parse_groups(Some("4-2")).is_err());
        assert!(parse_groups(Some("x")).is_err());
        assert_eq!(
            GroupSpec::Train.resolve(1..=25).unwrap().len(),
            15
        );
    }

    #[test]
    fn group_from_file_name() {
        assert_eq!(group_from_name(Path::new("calib/group_07.json")), Some(7));
        assert_eq!(group_from_name(Path::new("g12_cal.json")), Some(12));
        assert_eq!(group_from_name(Path::new("camera.json")), None);
    }

    #[test]
    fn sample_counts() {
        assert_eq!(parse_samples(Some("1,3, 5")).unwrap(), vec![1, 3, 5]);
        assert!(parse_samples(Some("0")).is_err());
    }
}
