//! Command implementations. Each command resolves everything it needs from
//! a [`RunConfig`], validates before writing anything, and reports through
//! stdout; warnings go to stderr.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use skelex_core::data::{augment_rotations, split_by_object, DatasetSplit};
use skelex_core::metrics::{binarize, ensemble, evaluate_dataset_with, f1_score, search_ensemble_weight};
use skelex_core::synth;
use skelex_core::train::train;
use skelex_core::{Mask, Model, Pair, PredictionSet};

use crate::config::{describe_loss, RunConfig};
use crate::corpus;
use crate::error::CliError;
use crate::png_io;
use crate::report;
use crate::checkpoint;

/// Forward batch size for prediction and evaluation passes.
const PREDICT_CHUNK: usize = 8;

pub fn cmd_gen_synthetic(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.gen_size < 16 {
        return Err(CliError::Config(format!(
            "gen.size must be at least 16, got {}",
            cfg.gen_size
        )));
    }
    let dir = PathBuf::from(&cfg.data_dir);
    let pairs = synth::generate(cfg.gen_count, cfg.gen_size, cfg.gen_seed);
    corpus::write_pairs(&dir, &pairs)?;
    println!(
        "wrote {} shape/skeleton pairs ({}x{}) to {}",
        pairs.len(),
        cfg.gen_size,
        cfg.gen_size,
        dir.display()
    );
    Ok(())
}

pub fn cmd_split(cfg: &RunConfig) -> Result<(), CliError> {
    let pairs = corpus::scan(Path::new(&cfg.data_dir))?;
    let split = split_by_object(&pairs, cfg.ratio, cfg.split_seed)?;
    let manifest = cfg.manifest_path();
    corpus::write_manifest(&manifest, &split)?;

    let train_ids: BTreeSet<&str> = split.train.iter().map(|s| s.as_str()).collect();
    let mut per_class: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for pair in &pairs {
        let counts = per_class.entry(pair.class.as_str()).or_default();
        if train_ids.contains(pair.id.as_str()) {
            counts.0 += 1;
        } else {
            counts.1 += 1;
        }
    }
    for (class, (tr, va)) in &per_class {
        println!("class {class}: {} pairs ({tr} train, {va} val)", tr + va);
    }
    println!(
        "total: {} pairs -> {} train, {} val (ratio {}, seed {})",
        pairs.len(),
        split.train.len(),
        split.validation.len(),
        cfg.ratio,
        cfg.split_seed
    );
    println!("manifest: {}", manifest.display());
    Ok(())
}

pub fn cmd_augment(cfg: &RunConfig) -> Result<(), CliError> {
    let data_dir = PathBuf::from(&cfg.data_dir);
    let pairs = corpus::scan(&data_dir)?;
    let manifest = cfg.manifest_path();
    let (train_ids, val_ids) = corpus::read_manifest(&manifest)?;
    let train_pairs = corpus::select_pairs(&pairs, &train_ids)?;

    let augmented = augment_rotations(&train_pairs, cfg.augment_target, cfg.augment_seed)?;
    let new_pairs = &augmented[train_pairs.len()..];
    corpus::write_pairs(&data_dir, new_pairs)?;

    let split = DatasetSplit {
        train: augmented.iter().map(|p| p.id.clone()).collect(),
        validation: val_ids,
        seed: cfg.split_seed,
    };
    corpus::write_manifest(&manifest, &split)?;
    println!(
        "augmented train split from {} to {} pairs ({} new rotations)",
        train_pairs.len(),
        augmented.len(),
        new_pairs.len()
    );
    println!("manifest: {}", manifest.display());
    Ok(())
}

/// Input dimension check shared by train/predict/eval: images must match
/// the configured network size exactly.
fn check_input_dims(pairs: &[Pair], input_size: (usize, usize)) -> Result<(), CliError> {
    for pair in pairs {
        if (pair.shape.h, pair.shape.w) != input_size {
            return Err(CliError::Config(format!(
                "image `{}` is {}x{} but the network is configured for {}x{}; set network.input_height/network.input_width",
                pair.id, pair.shape.h, pair.shape.w, input_size.0, input_size.1
            )));
        }
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let pairs = corpus::scan(Path::new(&cfg.data_dir))?;
    let manifest = cfg.manifest_path();
    let (train_ids, val_ids) = corpus::read_manifest(&manifest)?;
    let train_set = corpus::drop_empty(corpus::select_pairs(&pairs, &train_ids)?);
    let val_set = corpus::drop_empty(corpus::select_pairs(&pairs, &val_ids)?);

    cfg.network.validate().map_err(CliError::from)?;
    cfg.train.validate().map_err(CliError::from)?;
    check_input_dims(&train_set, cfg.network.input_size)?;
    check_input_dims(&val_set, cfg.network.input_size)?;

    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;

    println!(
        "training on {} pairs, validating on {} ({} {}, coords {}, side layers {}, seed {})",
        train_set.len(),
        val_set.len(),
        describe_loss(&cfg.train.loss),
        match cfg.train.loss.bce_reduction {
            skelex_core::loss::Reduction::Mean => "mean",
            skelex_core::loss::Reduction::Sum => "sum",
        },
        cfg.network.coord_enabled,
        cfg.network.side_layers_enabled,
        cfg.train.seed
    );

    let mut model = Model::<f32>::build(cfg.network.clone()).map_err(CliError::from)?;
    let history_path = out_dir.join("history.csv");
    let result = match train(&mut model, &train_set, &val_set, &cfg.train) {
        Ok(r) => r,
        Err(failure) => {
            fs::write(&history_path, report::history_csv(&failure.history))
                .map_err(|e| CliError::io(&history_path, e))?;
            eprintln!(
                "training aborted after {} epochs; partial history saved to {}",
                failure.history.records.len(),
                history_path.display()
            );
            return Err(failure.error.into());
        }
    };

    fs::write(&history_path, report::history_csv(&result.history))
        .map_err(|e| CliError::io(&history_path, e))?;
    let ck_path = out_dir.join("checkpoint.bin");
    checkpoint::save(&ck_path, &mut model)?;

    let best = &result.history.records[result.history.best_epoch - 1];
    println!(
        "trained {} epochs; best epoch {} (val loss {:.6})",
        result.history.records.len(),
        result.history.best_epoch,
        best.val_loss
    );
    println!("checkpoint: {}", ck_path.display());
    println!("history: {}", history_path.display());

    // final validation report with the ensemble weight searched on the
    // validation split
    let preds = predict_all(&mut model, &val_set)?;
    let gts: Vec<&Mask> = val_set.iter().map(|p| &p.skeleton).collect();
    let (weight, _) = search_ensemble_weight(&preds, &gts, cfg.grid_step, cfg.eval_threshold)
        .map_err(CliError::from)?;
    let metrics = evaluate_dataset_with(&mut model, &val_set, cfg.eval_threshold, weight, false)
        .map_err(CliError::from)?;
    let text = report::format_report(&metrics);
    let report_path = out_dir.join("report.txt");
    fs::write(&report_path, &text).map_err(|e| CliError::io(&report_path, e))?;
    print!("{text}");
    println!("report: {}", report_path.display());
    Ok(())
}

/// Inference over all pairs in fixed-size batches.
fn predict_all(model: &mut Model<f32>, pairs: &[Pair]) -> Result<Vec<PredictionSet>, CliError> {
    let mut preds = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(PREDICT_CHUNK) {
        let inputs: Vec<&Mask> = chunk.iter().map(|p| &p.shape).collect();
        preds.extend(model.predict(&inputs).map_err(CliError::from)?);
    }
    Ok(preds)
}

/// The six output heads a prediction can expose.
const ALL_HEADS: [&str; 6] = ["side1", "side2", "side3", "side4", "fused", "ensembled"];

fn parse_heads(selector: &str, has_sides: bool) -> Result<Vec<&'static str>, CliError> {
    if selector == "all" {
        return Ok(ALL_HEADS
            .iter()
            .copied()
            .filter(|h| has_sides || !h.starts_with("side"))
            .collect());
    }
    let mut heads = Vec::new();
    for name in selector.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let head = ALL_HEADS
            .iter()
            .copied()
            .find(|h| *h == name)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "unknown head `{name}`; expected side1..side4, fused, ensembled or all"
                ))
            })?;
        if !has_sides && head.starts_with("side") {
            return Err(CliError::Config(format!(
                "head `{name}` requested but the checkpoint was trained without side layers"
            )));
        }
        if !heads.contains(&head) {
            heads.push(head);
        }
    }
    if heads.is_empty() {
        return Err(CliError::Config("no output heads selected".to_string()));
    }
    Ok(heads)
}

fn head_map<'p>(preds: &'p PredictionSet, head: &str, weight: f64) -> Result<std::borrow::Cow<'p, Mask>, CliError> {
    use std::borrow::Cow;
    Ok(match head {
        "side1" => Cow::Borrowed(&preds.side[0]),
        "side2" => Cow::Borrowed(&preds.side[1]),
        "side3" => Cow::Borrowed(&preds.side[2]),
        "side4" => Cow::Borrowed(&preds.side[3]),
        "fused" => Cow::Borrowed(&preds.fused),
        "ensembled" => {
            if preds.side.is_empty() {
                Cow::Borrowed(&preds.fused)
            } else {
                Cow::Owned(ensemble(&preds.side[0], &preds.fused, weight).map_err(CliError::from)?)
            }
        }
        other => unreachable!("head selector `{other}` was validated"),
    })
}

/// Input images for prediction: a single file, a directory of PNGs, or a
/// dataset directory with a shapes/ subdirectory.
fn predict_inputs(cfg: &RunConfig) -> Result<Vec<(String, PathBuf)>, CliError> {
    let raw = if cfg.predict_input.is_empty() {
        Path::new(&cfg.data_dir).join(corpus::SHAPES_DIR)
    } else {
        PathBuf::from(&cfg.predict_input)
    };
    let dir = if raw.is_dir() && raw.join(corpus::SHAPES_DIR).is_dir() {
        raw.join(corpus::SHAPES_DIR)
    } else {
        raw
    };
    if dir.is_file() {
        let id = dir
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::Data(format!("{}: non-UTF-8 filename", dir.display())))?
            .to_string();
        return Ok(vec![(id, dir)]);
    }
    let entries = fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut inputs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(&dir, e))?.path();
        if path.extension().map(|e| e == "png").unwrap_or(false) {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::Data(format!("{}: non-UTF-8 filename", path.display())))?
                .to_string();
            inputs.push((id, path));
        }
    }
    inputs.sort();
    if inputs.is_empty() {
        return Err(CliError::Data(format!("no PNG inputs found in {}", dir.display())));
    }
    Ok(inputs)
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<(), CliError> {
    let ck_path = cfg.checkpoint_path();
    let mut model = checkpoint::load_model(&ck_path)?;
    let has_sides = model.config.side_layers_enabled;
    let heads = parse_heads(&cfg.predict_heads, has_sides)?;
    let inputs = predict_inputs(cfg)?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;

    let mut written = 0usize;
    for chunk in inputs.chunks(PREDICT_CHUNK) {
        let mut masks = Vec::with_capacity(chunk.len());
        for (id, path) in chunk {
            let mask = png_io::load_mask(path)?;
            if (mask.h, mask.w) != model.config.input_size {
                return Err(CliError::Config(format!(
                    "image `{id}` is {}x{} but the checkpoint expects {}x{}",
                    mask.h, mask.w, model.config.input_size.0, model.config.input_size.1
                )));
            }
            masks.push(mask);
        }
        let refs: Vec<&Mask> = masks.iter().collect();
        let preds = model.predict(&refs).map_err(CliError::from)?;
        for ((id, _), pred) in chunk.iter().zip(&preds) {
            for head in &heads {
                let prob = head_map(pred, head, cfg.predict_weight)?;
                let mask = binarize(&prob, cfg.predict_threshold);
                png_io::save_mask(&out_dir.join(format!("{id}_{head}_prob.png")), &prob)?;
                png_io::save_mask(&out_dir.join(format!("{id}_{head}_mask.png")), &mask)?;
                written += 2;
            }
        }
    }
    println!(
        "wrote {written} maps for {} images ({} heads) to {}",
        inputs.len(),
        heads.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, search_weight: bool) -> Result<(), CliError> {
    let ck_path = cfg.checkpoint_path();
    let mut model = checkpoint::load_model(&ck_path)?;
    let pairs = corpus::scan(Path::new(&cfg.data_dir))?;
    let subset = match cfg.eval_split.as_str() {
        "all" => pairs,
        "train" | "val" => {
            let (train_ids, val_ids) = corpus::read_manifest(&cfg.manifest_path())?;
            let ids = if cfg.eval_split == "train" { train_ids } else { val_ids };
            corpus::select_pairs(&pairs, &ids)?
        }
        other => {
            return Err(CliError::Config(format!(
                "eval.split must be \"train\", \"val\" or \"all\", got \"{other}\""
            )))
        }
    };
    if subset.is_empty() {
        return Err(CliError::Data("no pairs selected for evaluation".to_string()));
    }
    check_input_dims(&subset, model.config.input_size)?;

    let need_preds = search_weight || !cfg.per_image_csv.is_empty();
    let preds = if need_preds { predict_all(&mut model, &subset)? } else { Vec::new() };

    let weight = if search_weight {
        let gts: Vec<&Mask> = subset.iter().map(|p| &p.skeleton).collect();
        let (w, f1) = search_ensemble_weight(&preds, &gts, cfg.grid_step, cfg.eval_threshold)
            .map_err(CliError::from)?;
        println!("searched ensemble weight: {w} (ensembled f1 {f1:.6})");
        w
    } else {
        cfg.eval_weight
    };

    let metrics = evaluate_dataset_with(&mut model, &subset, cfg.eval_threshold, weight, cfg.global_pool)
        .map_err(CliError::from)?;
    let text = report::format_report(&metrics);
    print!("{text}");

    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let report_path = out_dir.join("report.txt");
    fs::write(&report_path, &text).map_err(|e| CliError::io(&report_path, e))?;
    println!("report: {}", report_path.display());

    if !cfg.per_image_csv.is_empty() {
        let csv_path = PathBuf::from(&cfg.per_image_csv);
        let csv = per_image_csv(&subset, &preds, cfg.eval_threshold, weight)?;
        fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path, e))?;
        println!("per-image csv: {}", csv_path.display());
    }
    Ok(())
}

fn per_image_csv(
    pairs: &[Pair],
    preds: &[PredictionSet],
    threshold: f32,
    weight: f64,
) -> Result<String, CliError> {
    let mut s = String::from("id,f1_side1,f1_side2,f1_side3,f1_side4,f1_fused,f1_ensembled\n");
    for (pair, pred) in pairs.iter().zip(preds) {
        let _ = write!(s, "{}", pair.id);
        for si in 0..4 {
            if pred.side.len() == 4 {
                let f1 = f1_score(&binarize(&pred.side[si], threshold), &pair.skeleton)
                    .map_err(CliError::from)?;
                let _ = write!(s, ",{f1:.6}");
            } else {
                let _ = write!(s, ",NaN");
            }
        }
        let fused = f1_score(&binarize(&pred.fused, threshold), &pair.skeleton).map_err(CliError::from)?;
        let ens_map = head_map(pred, "ensembled", weight)?;
        let ens = f1_score(&binarize(&ens_map, threshold), &pair.skeleton).map_err(CliError::from)?;
        let _ = writeln!(s, ",{fused:.6},{ens:.6}");
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use skelex_core::network::batch_from_masks;

    #[test]
    fn head_selector_parses_lists_and_rejects_unknowns() {
        assert_eq!(parse_heads("all", true).unwrap().len(), 6);
        assert_eq!(parse_heads("all", false).unwrap(), ["fused", "ensembled"]);
        assert_eq!(parse_heads("fused", true).unwrap(), ["fused"]);
        assert_eq!(parse_heads("side2, fused", true).unwrap(), ["side2", "fused"]);
        assert!(parse_heads("side9", true).is_err());
        assert!(parse_heads("side1", false).is_err());
        assert!(parse_heads("", true).is_err());
    }

    #[test]
    fn ensembled_head_without_sides_falls_back_to_fused() {
        let fused = Mask::from_pixels(1, 2, vec![0.25, 0.75]).unwrap();
        let preds = PredictionSet { side: Vec::new(), fused: fused.clone() };
        let map = head_map(&preds, "ensembled", 0.9).unwrap();
        assert_eq!(map.as_ref(), &fused);
    }

    #[test]
    fn input_dim_mismatch_names_the_image_and_both_sizes() {
        let pair = corpus::test_pair("rect-0", 8, 8);
        let err = check_input_dims(&[pair], (16, 16)).unwrap_err();
        match err {
            CliError::Config(msg) => {
                assert!(msg.contains("rect-0") && msg.contains("8x8") && msg.contains("16x16"), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn batch_builder_is_reachable_for_checkpointed_models() {
        // guards the predict path: a built model accepts exactly its
        // configured input size
        let cfg = skelex_core::NetworkConfig {
            input_size: (32, 32),
            base_channels: 4,
            ..Default::default()
        };
        let mask = Mask::zeros(32, 32);
        assert!(batch_from_masks::<f32>(&[&mask], cfg.input_size).is_ok());
        assert!(batch_from_masks::<f32>(&[&mask], (64, 64)).is_err());
    }
}
