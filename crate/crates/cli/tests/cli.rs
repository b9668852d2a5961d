use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mieval::dataio::nifti::gzip;
use mieval::dataio::{read_label_map, read_volume, write_label_map};
use mieval::{LabelMap, Volume};

fn mieval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mieval"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mieval(args);
    assert!(
        out.status.success(),
        "mieval {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, pathological: usize, normal: usize, size: usize) -> PathBuf {
    let data = dir.join("data");
    ok(&[
        "synth",
        "--out",
        p(&data),
        "--pathological",
        &pathological.to_string(),
        "--normal",
        &normal.to_string(),
        "--slices",
        "4",
        "--size",
        &size.to_string(),
        "--seed",
        "5",
    ]);
    data
}

/// Depth 2, 32x32, no held-out cases.
fn smoke_config(dir: &Path, data: &Path, epochs: usize) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "seed = 1\noutput_dir = \"out\"\n\n[dataset]\nroot = {:?}\n\n[dataset.split]\nn_val = 0\nval_pathological = 0\nval_normal = 0\n\n\
         [preproc]\ntarget_h = 32\ntarget_w = 32\n\n[anatomical]\nbase_features = 8\ndepth = 2\n\n\
         [pathological]\nbase_features = 8\ndepth = 2\n\n[train]\nmax_epochs = {epochs}\nearly_stop_patience = {epochs}\nbatch_size = 8\n\n\
         [clinical]\nfolds = 2\n",
        p(data)
    );
    fs::write(&path, text).unwrap();
    path
}

fn read_lm(path: &Path) -> LabelMap {
    read_label_map(&fs::read(path).unwrap()).unwrap()
}

fn output_lines(manifest: &Path) -> Vec<String> {
    fs::read_to_string(manifest)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("output:"))
        .map(str::to_string)
        .collect()
}

#[test]
fn missing_dataset_root_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[dataset]\nroot = \"nowhere\"\n").unwrap();
    let out = mieval(&["train-seg", "--role", "anatomical", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dataset.root"), "{err}");

    let out = mieval(&["crossval"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset.root"));
}

#[test]
fn malformed_config_values_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 1, 1, 16);
    let cases = [
        ("[train]\nmax_epochs = \"many\"\n", "train.max_epochs"),
        ("[train]\nloss = \"hinge\"\n", "train.loss"),
        ("[clinical.pipeline.svm]\nkernel = \"poly\"\n", "clinical.pipeline.svm.kernel"),
        ("[slice_rule]\nmin_slices = 2\n", "slice_rule"),
    ];
    for (body, field) in cases {
        let cfg = tmp.path().join("c.toml");
        fs::write(&cfg, format!("{body}\n[dataset]\nroot = {:?}\n", p(&data))).unwrap();
        let out = mieval(&["crossval", "--config", p(&cfg)]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(field), "{body}: {err}");
    }
}

#[test]
fn missing_checkpoint_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 1, 1, 32);
    let cfg = smoke_config(tmp.path(), &data, 2);
    let out = mieval(&["predict", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
    let out = mieval(&["classify", "--mode", "clinical", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn smoke_training_is_reproducible_and_predicts_valid_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 2, 2, 40);
    let cfg = smoke_config(tmp.path(), &data, 50);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&["train-seg", "--role", "anatomical", "--config", p(&cfg), "--out", p(out)]);
    }
    for file in ["history.csv", "model.ckpt"] {
        assert_eq!(
            fs::read(a.join("anatomical").join(file)).unwrap(),
            fs::read(b.join("anatomical").join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
    assert_eq!(
        output_lines(&a.join("anatomical/manifest.txt")),
        output_lines(&b.join("anatomical/manifest.txt"))
    );
    let history = fs::read_to_string(a.join("anatomical/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 51);

    ok(&["train-seg", "--role", "pathological", "--config", p(&cfg), "--out", p(&a)]);
    ok(&["predict", "--config", p(&cfg), "--out", p(&a)]);
    for case in ["Case_N001", "Case_N002", "Case_P001", "Case_P002"] {
        let pred = read_lm(&a.join(format!("predictions/{case}.nii.gz")));
        let truth = read_lm(&data.join(format!("{case}/Contours/{case}.nii.gz")));
        assert_eq!(pred.dims(), truth.dims());
        assert_eq!(pred.spacing(), truth.spacing());
        assert!(pred.labels().iter().all(|&l| l <= 4));
    }
    ok(&["evaluate", "--config", p(&cfg), "--out", p(&a)]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("evaluate/summary.json")).unwrap()).unwrap();
    let lv = &summary["structures"][0];
    assert_eq!(lv["structure"], "lv_cavity");
    let dsc = lv["metrics"]["dsc"]["mean"].as_f64().unwrap();
    assert!(dsc > 0.8, "LV Dice after smoke training {dsc}");
}

#[test]
fn evaluate_ground_truth_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 3, 2, 24);
    let cfg = smoke_config(tmp.path(), &data, 2);
    let preds = tmp.path().join("preds");
    fs::create_dir(&preds).unwrap();
    for entry in fs::read_dir(&data).unwrap() {
        let dir = entry.unwrap().path();
        if dir.is_dir() {
            let case = dir.file_name().unwrap().to_str().unwrap().to_string();
            fs::copy(
                dir.join(format!("Contours/{case}.nii.gz")),
                preds.join(format!("{case}.nii.gz")),
            )
            .unwrap();
        }
    }
    ok(&["evaluate", "--config", p(&cfg), "--predictions", p(&preds)]);
    let out = tmp.path().join("out/evaluate");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["accuracy"], 1.0);
    assert_eq!(summary["n_cases"], 5);
    for s in summary["structures"].as_array().unwrap() {
        for (metric, want) in [("dsc", 1.0), ("hd_mm", 0.0), ("rvd", 0.0)] {
            let m = &s["metrics"][metric];
            if m["n"].as_u64().unwrap() > 0 {
                assert_eq!(m["min"].as_f64().unwrap(), want, "{s}");
                assert_eq!(m["max"].as_f64().unwrap(), want, "{s}");
            }
        }
    }
    let csv = fs::read_to_string(out.join("cases.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "case_id,structure,dsc,hd_mm,rvd,predicted_class,truth_class");
    assert_eq!(csv.lines().count(), 1 + 5 * 4);

    fs::remove_file(preds.join("Case_P003.nii.gz")).unwrap();
    fs::write(preds.join("Case_X001.nii.gz"), b"").unwrap();
    let out = mieval(&["evaluate", "--config", p(&cfg), "--predictions", p(&preds)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Case_P003") && err.contains("Case_X001"), "{err}");
}

#[test]
fn image_mode_on_empty_predictions_is_all_normal() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 2, 2, 16);
    let cfg = smoke_config(tmp.path(), &data, 2);
    let preds = tmp.path().join("out/predictions");
    fs::create_dir_all(&preds).unwrap();
    for case in ["Case_N001", "Case_N002", "Case_P001", "Case_P002"] {
        let v: Volume = read_volume(&fs::read(data.join(format!("{case}/Images/{case}.nii.gz"))).unwrap(), case).unwrap();
        let lm = LabelMap::zeros(v.dims(), v.spacing());
        fs::write(preds.join(format!("{case}.nii.gz")), gzip(&write_label_map(&lm))).unwrap();
    }
    ok(&["classify", "--mode", "image", "--config", p(&cfg)]);
    let csv = fs::read_to_string(tmp.path().join("out/classify/predictions_image.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').nth(2) == Some("normal")), "{csv}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/classify/summary_image.json")).unwrap()).unwrap();
    assert_eq!(summary["image"]["accuracy"], 0.5);
}

#[test]
fn clinical_fit_classify_and_crossval() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 6, 6, 16);
    let cfg = smoke_config(tmp.path(), &data, 2);
    ok(&["fit-clinical", "--config", p(&cfg)]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let pipeline_cfg = tmp.path().join("out/clinical/pipeline.json");
        let with_pipeline = tmp.path().join("run2.toml");
        let text = fs::read_to_string(&cfg).unwrap()
            + &format!("\n[paths]\nclinical_pipeline = {:?}\n", p(&pipeline_cfg));
        fs::write(&with_pipeline, text).unwrap();
        ok(&["classify", "--mode", "clinical", "--config", p(&with_pipeline), "--out", p(out)]);
    }
    let read = |d: &Path| fs::read(d.join("classify/predictions_clinical.csv")).unwrap();
    assert_eq!(read(&a), read(&b));

    ok(&["crossval", "--config", p(&cfg), "--out", p(&a)]);
    ok(&["crossval", "--config", p(&cfg), "--out", p(&b), "--seed", "99"]);
    let summary = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(d.join("crossval/summary.json")).unwrap()).unwrap()
    };
    let (sa, sb) = (summary(&a), summary(&b));
    assert_eq!(sb["seed"], 99);
    for s in [&sa, &sb] {
        let folds = s["folds"].as_array().unwrap();
        assert_eq!(folds.len(), 2);
        let n: u64 = folds.iter().map(|f| f["n_test"].as_u64().unwrap()).sum();
        assert_eq!(n, 12);
        assert!(folds.iter().all(|f| !f["selected_features"].as_array().unwrap().is_empty()));
        let mean = s["mean_accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mean));
    }
    let fold_cases = |d: &Path| -> Vec<String> {
        fs::read_to_string(d.join("crossval/folds.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_ne!(fold_cases(&a), fold_cases(&b), "a different seed should change the folds");
}
