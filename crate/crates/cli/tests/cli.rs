//! End-to-end tests of the `skelex` binary: every verb, exit codes,
//! replay determinism and the config precedence chain.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skelex"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn skelex")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "skelex {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every file under `dir`, keyed by path relative to it.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One shared corpus + trained checkpoint, built once per test binary.
struct Trained {
    _dir: tempfile::TempDir,
    data: PathBuf,
    manifest: PathBuf,
    out: PathBuf,
}

static TRAINED: OnceLock<Trained> = OnceLock::new();

fn trained() -> &'static Trained {
    TRAINED.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let out = dir.path().join("out");
        run_ok(&["gen-synthetic", "--data", s(&data), "--count", "8", "--size", "32", "--seed", "3"]);
        run_ok(&["split", "--data", s(&data), "--ratio", "0.75", "--seed", "1"]);
        let manifest = data.join("split.tsv");
        run_ok(&[
            "train",
            "--data", s(&data),
            "--out", s(&out),
            "--input-height", "32",
            "--input-width", "32",
            "--base-channels", "4",
            "--max-epochs", "2",
            "--batch-size", "4",
            "--seed", "0",
            "--init-seed", "0",
        ]);
        Trained { _dir: dir, data, manifest, out }
    })
}

#[test]
fn gen_synthetic_writes_matched_pairs_and_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let stdout = run_ok(&["gen-synthetic", "--data", s(&a), "--count", "6", "--size", "24", "--seed", "5"]);
    assert!(stdout.contains("6 shape/skeleton pairs"), "stdout: {stdout}");

    let shapes = file_names(&a.join("shapes"));
    let skeletons = file_names(&a.join("skeletons"));
    assert_eq!(shapes.len(), 6);
    assert_eq!(shapes, skeletons, "shape and skeleton file sets must match");

    run_ok(&["gen-synthetic", "--data", s(&b), "--count", "6", "--size", "24", "--seed", "5"]);
    assert_eq!(tree(&a), tree(&b), "same seed must reproduce every byte");
}

#[test]
fn split_prints_a_class_histogram_and_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(&["gen-synthetic", "--data", s(&data), "--count", "12", "--size", "24", "--seed", "2"]);

    let stdout = run_ok(&["split", "--data", s(&data), "--ratio", "0.8", "--seed", "7"]);
    assert!(stdout.contains("class "), "histogram missing: {stdout}");
    assert!(stdout.contains("total: 12 pairs"), "totals missing: {stdout}");

    let manifest = data.join("split.tsv");
    let first = fs::read(&manifest).unwrap();
    assert!(!first.is_empty());
    fs::remove_file(&manifest).unwrap();
    run_ok(&["split", "--data", s(&data), "--ratio", "0.8", "--seed", "7"]);
    assert_eq!(first, fs::read(&manifest).unwrap(), "same seed must rewrite the same manifest");
}

#[test]
fn split_rejects_a_train_ratio_of_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(&["gen-synthetic", "--data", s(&data), "--count", "4", "--size", "24", "--seed", "0"]);
    let out = run(&["split", "--data", s(&data), "--ratio", "1.0", "--seed", "0"]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("ratio"), "stderr: {}", stderr(&out));
}

#[test]
fn augment_reaches_the_target_and_rewrites_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(&["gen-synthetic", "--data", s(&data), "--count", "6", "--size", "24", "--seed", "4"]);
    run_ok(&["split", "--data", s(&data), "--ratio", "0.5", "--seed", "1"]);

    let manifest = data.join("split.tsv");
    let before = fs::read_to_string(&manifest).unwrap();
    let val_before: Vec<&str> = before.lines().filter(|l| l.ends_with("\tval")).collect();
    let train_before = before.lines().filter(|l| l.ends_with("\ttrain")).count();
    assert!(train_before < 7);

    let stdout = run_ok(&["augment", "--data", s(&data), "--target", "7", "--seed", "9"]);
    assert!(stdout.contains("to 7 pairs"), "stdout: {stdout}");

    let after = fs::read_to_string(&manifest).unwrap();
    let train_after = after.lines().filter(|l| l.ends_with("\ttrain")).count();
    let val_after: Vec<&str> = after.lines().filter(|l| l.ends_with("\tval")).collect();
    assert_eq!(train_after, 7, "manifest after augment:\n{after}");
    assert_eq!(val_after, val_before, "validation rows must be untouched");
    assert_eq!(file_names(&data.join("shapes")).len(), 7 + val_after.len());
}

#[test]
fn train_writes_checkpoint_history_and_validation_report() {
    let t = trained();
    assert!(t.out.join("checkpoint.bin").exists());
    assert!(t.manifest.exists());

    let history = fs::read_to_string(t.out.join("history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,train_loss,val_loss,lr,f1_side1,f1_side2,f1_side3,f1_side4,f1_fused"
    );
    assert_eq!(lines.count(), 2, "one row per epoch:\n{history}");

    let report = fs::read_to_string(t.out.join("report.txt")).unwrap();
    for head in ["side1", "side2", "side3", "side4", "fused", "ensembled"] {
        assert!(report.contains(&format!("{head}.f1 = ")), "report:\n{report}");
    }
}

#[test]
fn same_seed_training_runs_are_byte_identical() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let out2 = dir.path().join("out2");
    run_ok(&[
        "train",
        "--data", s(&t.data),
        "--out", s(&out2),
        "--input-height", "32",
        "--input-width", "32",
        "--base-channels", "4",
        "--max-epochs", "2",
        "--batch-size", "4",
        "--seed", "0",
        "--init-seed", "0",
    ]);
    assert_eq!(
        fs::read(t.out.join("history.csv")).unwrap(),
        fs::read(out2.join("history.csv")).unwrap(),
        "histories must replay byte-identically"
    );
    assert_eq!(
        fs::read(t.out.join("checkpoint.bin")).unwrap(),
        fs::read(out2.join("checkpoint.bin")).unwrap(),
        "checkpoints must replay byte-identically"
    );
}

#[test]
fn predict_writes_the_full_panel_and_honors_the_head_selector() {
    let t = trained();
    let ck = t.out.join("checkpoint.bin");
    let image_name = file_names(&t.data.join("shapes"))[0].clone();
    let image = t.data.join("shapes").join(&image_name);
    let id = image_name.trim_end_matches(".png");

    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    run_ok(&["predict", "--checkpoint", s(&ck), "--input", s(&image), "--out", s(&full)]);
    let names = file_names(&full);
    assert_eq!(names.len(), 12, "6 heads x (probability, mask): {names:?}");
    for head in ["side1", "side2", "side3", "side4", "fused", "ensembled"] {
        assert!(names.contains(&format!("{id}_{head}_prob.png")), "{names:?}");
        assert!(names.contains(&format!("{id}_{head}_mask.png")), "{names:?}");
    }

    let fused_only = dir.path().join("fused");
    run_ok(&[
        "predict", "--checkpoint", s(&ck), "--input", s(&image), "--out", s(&fused_only), "--heads", "fused",
    ]);
    assert_eq!(file_names(&fused_only).len(), 2);

    let unknown = run(&[
        "predict", "--checkpoint", s(&ck), "--input", s(&image), "--out", s(&fused_only), "--heads", "side9",
    ]);
    assert_eq!(code(&unknown), 2);
}

#[test]
fn predict_reruns_are_byte_identical_and_threshold_leaves_probabilities_alone() {
    let t = trained();
    let ck = t.out.join("checkpoint.bin");
    let image_name = file_names(&t.data.join("shapes"))[0].clone();
    let image = t.data.join("shapes").join(image_name);

    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let hi = dir.path().join("hi");
    run_ok(&["predict", "--checkpoint", s(&ck), "--input", s(&image), "--out", s(&a)]);
    run_ok(&["predict", "--checkpoint", s(&ck), "--input", s(&image), "--out", s(&b)]);
    assert_eq!(tree(&a), tree(&b), "reruns must reproduce every byte");

    run_ok(&[
        "predict", "--checkpoint", s(&ck), "--input", s(&image), "--out", s(&hi), "--threshold", "0.9",
    ]);
    let base = tree(&a);
    for (name, bytes) in tree(&hi) {
        if name.ends_with("_prob.png") {
            assert_eq!(&bytes, &base[&name], "{name} must not depend on the threshold");
        }
    }
}

#[test]
fn predict_rejects_images_that_do_not_match_the_checkpoint() {
    let t = trained();
    let ck = t.out.join("checkpoint.bin");
    let dir = tempfile::tempdir().unwrap();
    let other = dir.path().join("other");
    run_ok(&["gen-synthetic", "--data", s(&other), "--count", "1", "--size", "24", "--seed", "0"]);
    let image = other.join("shapes").join(&file_names(&other.join("shapes"))[0]);

    let out = run(&["predict", "--checkpoint", s(&ck), "--input", s(&image), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("32x32"), "stderr: {}", stderr(&out));
}

#[test]
fn eval_reports_six_heads_and_can_search_the_ensemble_weight() {
    let t = trained();
    let ck = t.out.join("checkpoint.bin");
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("eval");

    let stdout = run_ok(&[
        "eval",
        "--checkpoint", s(&ck),
        "--data", s(&t.data),
        "--split", "val",
        "--out", s(&out_dir),
    ]);
    for head in ["side1", "side2", "side3", "side4", "fused", "ensembled"] {
        assert!(stdout.contains(&format!("{head}.f1 = ")), "stdout:\n{stdout}");
    }
    assert!(out_dir.join("report.txt").exists());

    let csv = dir.path().join("per_image.csv");
    let searched = run_ok(&[
        "eval",
        "--checkpoint", s(&ck),
        "--data", s(&t.data),
        "--split", "val",
        "--out", s(&out_dir),
        "--search-weight",
        "--grid-step", "0.25",
        "--per-image-csv", s(&csv),
    ]);
    assert!(searched.contains("searched ensemble weight"), "stdout:\n{searched}");
    let val_count = fs::read_to_string(&t.manifest)
        .unwrap()
        .lines()
        .filter(|l| l.ends_with("\tval"))
        .count();
    let rows = fs::read_to_string(&csv).unwrap();
    assert!(rows.starts_with("id,"), "csv:\n{rows}");
    assert_eq!(rows.lines().count(), 1 + val_count, "header plus one row per validation image:\n{rows}");
}

#[test]
fn eval_with_an_empty_selection_is_a_data_error() {
    let t = trained();
    let ck = t.out.join("checkpoint.bin");
    let dir = tempfile::tempdir().unwrap();

    // A manifest that sends every pair to train leaves val empty.
    let all_train: String = fs::read_to_string(&t.manifest)
        .unwrap()
        .lines()
        .map(|l| format!("{}\ttrain\n", l.split('\t').next().unwrap()))
        .collect();
    let manifest = dir.path().join("all_train.tsv");
    fs::write(&manifest, all_train).unwrap();

    let out = run(&[
        "eval",
        "--checkpoint", s(&ck),
        "--data", s(&t.data),
        "--manifest", s(&manifest),
        "--split", "val",
        "--out", s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("no pairs"), "stderr: {}", stderr(&out));
}

#[test]
fn config_file_values_apply_and_flags_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!("data.dir = {:?}\ngen.count = 4\ngen.size = 24\ngen.seed = 1\n", s(&a)),
    )
    .unwrap();

    run_ok(&["--config", s(&cfg), "gen-synthetic"]);
    assert_eq!(file_names(&a.join("shapes")).len(), 4, "file value must apply");

    run_ok(&["--config", s(&cfg), "gen-synthetic", "--data", s(&b), "--count", "6"]);
    assert_eq!(file_names(&b.join("shapes")).len(), 6, "flags must beat the file");
}

#[test]
fn unknown_or_ill_typed_config_keys_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");

    fs::write(&cfg, "gen.cuont = 4\n").unwrap();
    let out = run(&["--config", s(&cfg), "gen-synthetic"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("gen.cuont"), "stderr: {}", stderr(&out));

    fs::write(&cfg, "train.lr0 = \"fast\"\n").unwrap();
    let out = run(&["--config", s(&cfg), "gen-synthetic"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("train.lr0"), "stderr: {}", stderr(&out));
}

#[test]
fn help_lists_every_config_key_with_its_default() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for spec in skelex_cli::config::KEYS {
        assert!(text.contains(spec.key), "--help must mention {}", spec.key);
        assert!(
            text.contains(spec.default),
            "--help must show the default of {} ({})",
            spec.key,
            spec.default
        );
    }
    for verb in ["split", "augment", "train", "predict", "eval", "gen-synthetic"] {
        assert!(text.contains(verb), "--help must list the {verb} verb");
    }
}

#[test]
fn a_corrupt_checkpoint_is_a_data_error() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("bad.bin");
    fs::write(&ck, b"not a checkpoint at all").unwrap();
    let image = t.data.join("shapes").join(&file_names(&t.data.join("shapes"))[0]);

    let out = run(&["predict", "--checkpoint", s(&ck), "--input", s(&image), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
}

#[test]
fn ablation_flags_train_a_single_head_model_end_to_end() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("vanilla");
    let stdout = run_ok(&[
        "train",
        "--data", s(&t.data),
        "--out", s(&out_dir),
        "--input-height", "32",
        "--input-width", "32",
        "--base-channels", "4",
        "--max-epochs", "1",
        "--batch-size", "4",
        "--no-coordconv",
        "--no-side-layers",
        "--loss", "bce-only",
        "--deterministic",
    ]);
    assert!(stdout.contains("bce-only"), "stdout: {stdout}");

    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("side1.f1 = NaN"), "no side heads to score:\n{report}");

    // `all` narrows to the heads that exist: fused and ensembled.
    let image = t.data.join("shapes").join(&file_names(&t.data.join("shapes"))[0]);
    let pred = dir.path().join("pred");
    run_ok(&[
        "predict",
        "--checkpoint", s(&out_dir.join("checkpoint.bin")),
        "--input", s(&image),
        "--out", s(&pred),
    ]);
    assert_eq!(file_names(&pred).len(), 4, "fused and ensembled, probability and mask each");
}
