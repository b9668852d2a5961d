//! Subcommand implementations. Each returns the path of the manifest it wrote.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mieval::clinfeat::{crossval, ClinicalPipeline, ClinicalRecord};
use mieval::dataio::nifti::gzip;
use mieval::dataio::{split_dataset, write_label_map, write_volume, DatasetIndex};
use mieval::imgclassify::{classifier_registry, classify_from_segmentation, CaseInputs, ClassifierContext};
use mieval::metrics::{accuracy, create_metrics, evaluate_case, reports_to_csv, summarize, summary_to_csv};
use mieval::nn::Checkpoint;
use mieval::preproc::{preprocess_volume, resize_labels_to};
use mieval::segnet::{refine_and_merge, train, SegModel, SegRole};
use mieval::synth::{clinical_pairs, phantom, PhantomConfig};
use mieval::{CaseClass, LabelMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{clinical_records, load_index, prediction_files, read_labels, training_case};
use crate::error::{CliError, CliResult};
use crate::run::Run;

fn start(cfg: &RunConfig, sub: &str, command: String) -> CliResult<Run> {
    Run::new(cfg.output_dir.join(sub), command, cfg.seed, cfg.to_toml())
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(mieval::Error::from)?;
    for r in rows {
        w.write_record(r).map_err(mieval::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

fn opt_class(c: Option<CaseClass>) -> String {
    c.map(|c| c.as_str().to_string()).unwrap_or_default()
}

/// Trains one segmentation network on the training split.
pub fn train_seg(cfg: &RunConfig, role: SegRole) -> CliResult<PathBuf> {
    let idx = load_index(cfg)?;
    let s = cfg.dataset.split;
    let (train_idx, val_idx) = if s.n_val == 0 {
        (idx, DatasetIndex::default())
    } else {
        split_dataset(&idx, s.n_val, s.val_pathological, s.val_normal, cfg.seed)?
    };
    let train_cases = train_idx
        .cases
        .iter()
        .map(|e| training_case(e, cfg))
        .collect::<CliResult<Vec<_>>>()?;
    let val_cases = val_idx
        .cases
        .iter()
        .map(|e| training_case(e, cfg))
        .collect::<CliResult<Vec<_>>>()?;
    let mut model = SegModel::build(role, cfg.unet_spec(role), cfg.seed)?;
    let history = train(&mut model, &train_cases, &val_cases, &cfg.train)?;

    let mut run = start(cfg, role.as_str(), format!("train-seg --role {}", role.as_str()))?;
    run.write("model.ckpt", model.to_checkpoint(None).to_bytes())?;
    run.write("history.csv", history.to_csv())?;
    let split = json!({
        "train": train_idx.ids(),
        "validation": val_idx.ids(),
        "best_epoch": history.best_epoch,
        "best_val_loss": history.best_val_loss,
        "stopped_early": history.stopped_early,
    });
    run.write("training.json", to_json(&split))?;
    run.finish()
}

fn load_model(cfg: &RunConfig, role: SegRole) -> CliResult<SegModel> {
    let path = cfg.checkpoint_path(role);
    let bytes = fs::read(&path).map_err(|e| {
        CliError::Data(format!(
            "missing {} checkpoint {}: {e} (run `train-seg --role {}` first)",
            role.as_str(),
            path.display(),
            role.as_str()
        ))
    })?;
    let model = SegModel::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)?;
    if model.role != role {
        return Err(CliError::Data(format!(
            "{} holds a {} model, expected {}",
            path.display(),
            model.role.as_str(),
            role.as_str()
        )));
    }
    if model.spec().input_size != cfg.preproc.target_h {
        return Err(CliError::config(
            "preproc.target_h",
            format!(
                "{} but the {} checkpoint expects {}",
                cfg.preproc.target_h,
                role.as_str(),
                model.spec().input_size
            ),
        ));
    }
    Ok(model)
}

fn select_cases<'a>(idx: &'a DatasetIndex, cases: &[String]) -> CliResult<Vec<&'a mieval::dataio::CaseEntry>> {
    if cases.is_empty() {
        return Ok(idx.cases.iter().collect());
    }
    let unknown: Vec<&str> = cases.iter().filter(|c| idx.get(c).is_none()).map(String::as_str).collect();
    if !unknown.is_empty() {
        return Err(CliError::Data(format!("unknown case id(s): {}", unknown.join(", "))));
    }
    Ok(cases.iter().filter_map(|c| idx.get(c)).collect())
}

/// Segments each case with both networks and writes the merged labels on
/// the native grid.
pub fn predict(cfg: &RunConfig, cases: &[String]) -> CliResult<PathBuf> {
    let anat = load_model(cfg, SegRole::Anatomical)?;
    let path = load_model(cfg, SegRole::Pathological)?;
    let idx = load_index(cfg)?;
    let selected = select_cases(&idx, cases)?;
    let mut command = "predict".to_string();
    if !cases.is_empty() {
        let _ = write!(command, " --cases {}", cases.join(","));
    }
    let mut run = start(cfg, "predictions", command)?;
    for entry in selected {
        let image = entry.load_image()?;
        let d = image.dims();
        let input = preprocess_volume(&image, &cfg.preproc)?;
        let merged = refine_and_merge(&anat.predict_case(&input)?, &path.predict_case(&input)?)?;
        let native = resize_labels_to(&merged, d.height, d.width)?;
        let native = LabelMap::new(d, image.spacing(), native.into_labels())?;
        run.write(&format!("{}.nii.gz", entry.case_id), gzip(&write_label_map(&native)))?;
    }
    run.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifyMode {
    Clinical,
    Image,
    Both,
}

impl ClassifyMode {
    fn names(self) -> &'static [&'static str] {
        match self {
            ClassifyMode::Clinical => &["clinical"],
            ClassifyMode::Image => &["image"],
            ClassifyMode::Both => &["clinical", "image"],
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ClassifyMode::Clinical => "clinical",
            ClassifyMode::Image => "image",
            ClassifyMode::Both => "both",
        }
    }
}

fn load_pipeline(cfg: &RunConfig) -> CliResult<ClinicalPipeline> {
    let path = cfg.pipeline_path();
    let text = fs::read_to_string(&path).map_err(|e| {
        CliError::Data(format!(
            "missing clinical pipeline {}: {e} (run `fit-clinical` first)",
            path.display()
        ))
    })?;
    Ok(ClinicalPipeline::from_json(&text)?)
}

/// Case classification from clinical records, predicted segmentations, or both.
pub fn classify(cfg: &RunConfig, mode: ClassifyMode) -> CliResult<PathBuf> {
    let idx = load_index(cfg)?;
    let names = mode.names();
    let mut ctx = ClassifierContext {
        pipeline: None,
        slice_rule: cfg.slice_rule,
    };
    let mut records: BTreeMap<String, ClinicalRecord> = BTreeMap::new();
    if names.contains(&"clinical") {
        ctx.pipeline = Some(load_pipeline(cfg)?);
        records = clinical_records(&idx, cfg, false)?
            .into_iter()
            .map(|r| (r.case_id.clone(), r))
            .collect();
    }
    let mut segs: BTreeMap<String, LabelMap> = BTreeMap::new();
    if names.contains(&"image") {
        let dir = cfg.predictions_dir();
        let files = prediction_files(&dir)?;
        let missing: Vec<&str> = idx.ids().into_iter().filter(|c| !files.contains_key(*c)).collect();
        if !missing.is_empty() {
            return Err(CliError::Data(format!(
                "no predicted segmentation in {} for case(s): {}",
                dir.display(),
                missing.join(", ")
            )));
        }
        for entry in &idx.cases {
            segs.insert(entry.case_id.clone(), read_labels(&files[&entry.case_id])?);
        }
    }
    let registry = classifier_registry();
    let classifiers = names
        .iter()
        .map(|n| registry.create(n, &ctx))
        .collect::<mieval::Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut per_mode: BTreeMap<&str, Vec<(CaseClass, Option<CaseClass>)>> = BTreeMap::new();
    for entry in &idx.cases {
        let inputs = CaseInputs {
            case_id: &entry.case_id,
            clinical: records.get(&entry.case_id),
            segmentation: segs.get(&entry.case_id),
        };
        for c in &classifiers {
            let d = c.classify(&inputs)?;
            per_mode.entry(c.name()).or_default().push((d.class, entry.class));
            rows.push(vec![
                entry.case_id.clone(),
                c.name().to_string(),
                d.class.as_str().to_string(),
                d.score.to_string(),
                opt_class(entry.class),
            ]);
        }
    }

    let mut summary = serde_json::Map::new();
    summary.insert("mode".into(), json!(mode.as_str()));
    summary.insert("n_cases".into(), json!(idx.len()));
    for (name, preds) in &per_mode {
        let known: Vec<(CaseClass, CaseClass)> = preds.iter().filter_map(|&(p, t)| t.map(|t| (p, t))).collect();
        let acc = if known.is_empty() {
            None
        } else {
            let (p, t): (Vec<_>, Vec<_>) = known.iter().copied().unzip();
            Some(accuracy(&p, &t)?)
        };
        summary.insert(
            (*name).to_string(),
            json!({ "accuracy": acc, "n_with_truth": known.len() }),
        );
    }
    if let (Some(a), Some(b)) = (per_mode.get("clinical"), per_mode.get("image")) {
        let pa: Vec<CaseClass> = a.iter().map(|x| x.0).collect();
        let pb: Vec<CaseClass> = b.iter().map(|x| x.0).collect();
        summary.insert("agreement".into(), json!(accuracy(&pa, &pb)?));
    }

    let mut run = start(cfg, "classify", format!("classify --mode {}", mode.as_str()))?;
    let file = format!("predictions_{}.csv", mode.as_str());
    run.write(&file, csv_bytes(&["case_id", "mode", "prediction", "score", "truth"], &rows)?)?;
    run.write(&format!("summary_{}.json", mode.as_str()), to_json(&summary))?;
    run.finish()
}

/// Per-case 3D metrics of predicted against ground-truth label maps.
pub fn evaluate(cfg: &RunConfig, predictions: Option<&Path>) -> CliResult<PathBuf> {
    let idx = load_index(cfg)?;
    let dir = predictions.map(Path::to_path_buf).unwrap_or_else(|| cfg.predictions_dir());
    let files = prediction_files(&dir)?;
    let truth_ids: BTreeSet<&str> = idx
        .cases
        .iter()
        .filter(|e| e.label.is_some())
        .map(|e| e.case_id.as_str())
        .collect();
    let pred_ids: BTreeSet<&str> = files.keys().map(String::as_str).collect();
    let no_pred: Vec<&str> = truth_ids.difference(&pred_ids).copied().collect();
    let no_truth: Vec<&str> = pred_ids.difference(&truth_ids).copied().collect();
    if !no_pred.is_empty() || !no_truth.is_empty() {
        return Err(CliError::Data(format!(
            "case sets differ; without prediction: [{}]; without ground truth: [{}]",
            no_pred.join(", "),
            no_truth.join(", ")
        )));
    }
    if truth_ids.is_empty() {
        return Err(CliError::Data("no labeled cases to evaluate".into()));
    }
    let metrics = create_metrics(&cfg.evaluate.metrics)?;
    let mut reports = Vec::new();
    for id in &truth_ids {
        let entry = idx.get(id).expect("listed case");
        let truth = entry.load_labels()?.expect("filtered on label");
        let pred = read_labels(&files[*id])?;
        let mut report = evaluate_case(id, &pred, &truth, &cfg.evaluate.structures, &metrics)?;
        report.predicted_class = Some(classify_from_segmentation(&pred, &cfg.slice_rule).class);
        report.truth_class = entry.class;
        reports.push(report);
    }
    let summary = summarize(&reports, cfg.evaluate.std)?;
    let mut run = start(cfg, "evaluate", "evaluate".to_string())?;
    run.write("cases.csv", reports_to_csv(&reports)?)?;
    run.write("summary.csv", summary_to_csv(&summary)?)?;
    run.write("summary.json", to_json(&summary))?;
    run.finish()
}

/// Fits the clinical pipeline on every labeled case.
pub fn fit_clinical(cfg: &RunConfig) -> CliResult<PathBuf> {
    let idx = load_index(cfg)?;
    let records = clinical_records(&idx, cfg, true)?;
    let refs: Vec<&ClinicalRecord> = records.iter().collect();
    let pipeline = ClinicalPipeline::fit(&refs, &cfg.clinical.schema.feature_names(), &cfg.clinical.pipeline)?;
    let mut run = start(cfg, "clinical", "fit-clinical".to_string())?;
    run.write("pipeline.json", pipeline.to_json())?;
    run.write("selected_features.txt", pipeline.selected_names().join("\n") + "\n")?;
    run.finish()
}

/// Stratified k-fold evaluation of the clinical pipeline.
pub fn crossval_cmd(cfg: &RunConfig) -> CliResult<PathBuf> {
    let idx = load_index(cfg)?;
    let records = clinical_records(&idx, cfg, true)?;
    let truth: BTreeMap<&str, CaseClass> = records
        .iter()
        .filter_map(|r| r.label.map(|l| (r.case_id.as_str(), l)))
        .collect();
    let k = cfg.clinical.folds;
    let report = crossval(&records, &cfg.clinical.schema.feature_names(), &cfg.clinical.pipeline, k, cfg.seed)?;
    let mut rows = Vec::new();
    let mut folds = Vec::new();
    for (i, (fold, model)) in report.folds.iter().zip(&report.models).enumerate() {
        for (case, class, decision) in &fold.predictions {
            rows.push(vec![
                i.to_string(),
                case.clone(),
                opt_class(truth.get(case.as_str()).copied()),
                class.as_str().to_string(),
                decision.to_string(),
            ]);
        }
        folds.push(json!({
            "fold": i,
            "accuracy": fold.accuracy,
            "n_test": fold.test_indices.len(),
            "selected_features": model.selected_names(),
        }));
    }
    let summary = json!({
        "k": k,
        "seed": report.seed,
        "n_records": records.len(),
        "mean_accuracy": report.mean_accuracy,
        "folds": folds,
    });
    let mut run = start(cfg, "crossval", "crossval".to_string())?;
    run.write("folds.csv", csv_bytes(&["fold", "case_id", "truth", "prediction", "decision"], &rows)?)?;
    run.write("summary.json", to_json(&summary))?;
    run.finish()
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub pathological: usize,
    pub normal: usize,
    pub phantom: PhantomConfig,
}

/// Writes a dataset of phantoms in the per-case folder layout: image and
/// contour NIfTI files plus a clinical text file per case.
pub fn synth(out: &Path, cfg: &SynthConfig) -> CliResult<PathBuf> {
    if cfg.pathological + cfg.normal == 0 {
        return Err(CliError::config("--pathological/--normal", "at least one case is required"));
    }
    let mut run = Run::new(
        out.to_path_buf(),
        "synth",
        cfg.seed,
        toml::to_string(cfg).expect("serializable"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plan = (1..=cfg.pathological)
        .map(|i| (format!("Case_P{i:03}"), CaseClass::Pathological))
        .chain((1..=cfg.normal).map(|i| (format!("Case_N{i:03}"), CaseClass::Normal)));
    for (id, class) in plan {
        let sick = class == CaseClass::Pathological;
        let pc = PhantomConfig {
            infarct: sick,
            no_reflow: sick && rng.gen_bool(0.5),
            ..cfg.phantom.clone()
        };
        let (image, labels) = phantom(&pc, &id, rng.gen())?;
        run.write(&format!("{id}/Images/{id}.nii.gz"), gzip(&write_volume(&image)))?;
        run.write(&format!("{id}/Contours/{id}.nii.gz"), gzip(&write_label_map(&labels)))?;
        let mut text = String::new();
        for (k, v) in clinical_pairs(class, rng.gen()) {
            let _ = writeln!(text, "{k}: {v}");
        }
        run.write(&format!("{id}/{id}.txt"), text)?;
    }
    run.finish()
}
