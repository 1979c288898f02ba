//! Run configuration: every tunable of the pipeline as a flat dotted key.
//! Values resolve with precedence command-line flags > config file > built-in
//! defaults. The same key syntax appears in config files (TOML, either
//! literal dotted keys or section tables) and in checkpoint headers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use skelex_core::loss::{LossConfig, Reduction};
use skelex_core::train::TrainConfig;
use skelex_core::NetworkConfig;

use crate::error::CliError;

/// One configuration key: name, default (as written in a config file), and
/// a short description for `--help`.
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const KEYS: &[KeySpec] = &[
    KeySpec { key: "network.input_height", default: "256", help: "input image height, divisible by 16" },
    KeySpec { key: "network.input_width", default: "256", help: "input image width, divisible by 16" },
    KeySpec { key: "network.base_channels", default: "16", help: "first encoder stage width; later stages scale x2,x4,x8, bottleneck x16" },
    KeySpec { key: "network.se_ratio", default: "8", help: "channel reduction ratio of the squeeze-excitation bottleneck" },
    KeySpec { key: "network.dilation_rate", default: "2", help: "dilation of the 3x3 fusion convolution" },
    KeySpec { key: "network.coord_enabled", default: "true", help: "append row/column coordinate channels to the input" },
    KeySpec { key: "network.coord_normalize", default: "true", help: "map coordinate channels onto [-1, 1] instead of literal indices" },
    KeySpec { key: "network.side_layers_enabled", default: "true", help: "emit four gated side outputs plus a fused head; false = single-head decoder" },
    KeySpec { key: "network.seed", default: "0", help: "weight initialization seed" },
    KeySpec { key: "train.lr0", default: "0.001", help: "initial Adam learning rate" },
    KeySpec { key: "train.plateau_patience", default: "10", help: "epochs without improvement before the learning rate is cut" },
    KeySpec { key: "train.plateau_factor", default: "0.1", help: "learning-rate multiplier applied on plateau" },
    KeySpec { key: "train.batch_size", default: "4", help: "mini-batch size; the last partial batch is kept" },
    KeySpec { key: "train.max_epochs", default: "500", help: "upper bound on training epochs" },
    KeySpec { key: "train.early_stop_patience", default: "20", help: "epochs without improvement before training stops" },
    KeySpec { key: "train.seed", default: "0", help: "epoch shuffling seed" },
    KeySpec { key: "loss.epsilon", default: "1.0", help: "Dice smoothing term keeping the denominator positive" },
    KeySpec { key: "loss.clip_delta", default: "1e-7", help: "probability clipping bound keeping cross-entropy logs finite" },
    KeySpec { key: "loss.bce_reduction", default: "\"mean\"", help: "cross-entropy reduction: \"mean\" or \"sum\"" },
    KeySpec { key: "loss.dice_enabled", default: "true", help: "add the Dice term to cross-entropy; false = cross-entropy only" },
    KeySpec { key: "loss.head_weights", default: "[1.0, 1.0, 1.0, 1.0, 1.0]", help: "loss weights for side1..side4 and the fused head" },
    KeySpec { key: "data.dir", default: "\"data\"", help: "dataset directory holding shapes/ and skeletons/" },
    KeySpec { key: "data.manifest", default: "\"\"", help: "split manifest path; empty = <data.dir>/split.tsv" },
    KeySpec { key: "data.ratio", default: "0.8", help: "train fraction of the object-wise split, exclusive (0, 1)" },
    KeySpec { key: "data.seed", default: "0", help: "split shuffling seed" },
    KeySpec { key: "augment.target", default: "1296", help: "training-set size after rotation augmentation" },
    KeySpec { key: "augment.seed", default: "0", help: "rotation angle seed" },
    KeySpec { key: "checkpoint.path", default: "\"\"", help: "model checkpoint to load; empty = <out.dir>/checkpoint.bin" },
    KeySpec { key: "out.dir", default: "\"out\"", help: "directory for checkpoints, reports, histories and predictions" },
    KeySpec { key: "predict.input", default: "\"\"", help: "image file or directory to predict on; empty = data.dir shapes" },
    KeySpec { key: "predict.heads", default: "\"all\"", help: "comma list of side1..side4, fused, ensembled, or \"all\"" },
    KeySpec { key: "predict.threshold", default: "0.5", help: "binarization threshold for predicted mask images" },
    KeySpec { key: "predict.ensemble_weight", default: "0.5", help: "side1 weight of the ensembled head at prediction time" },
    KeySpec { key: "eval.split", default: "\"val\"", help: "manifest subset to evaluate: \"train\", \"val\" or \"all\"" },
    KeySpec { key: "eval.threshold", default: "0.5", help: "binarization threshold for scoring" },
    KeySpec { key: "eval.ensemble_weight", default: "0.5", help: "side1 weight of the ensembled head; --search-weight overrides" },
    KeySpec { key: "eval.grid_step", default: "0.05", help: "weight grid step used by --search-weight" },
    KeySpec { key: "eval.global_pool", default: "false", help: "pool confusion counts over all pixels instead of averaging per-image F1" },
    KeySpec { key: "eval.per_image_csv", default: "\"\"", help: "write per-image F1 rows to this CSV path; empty = off" },
    KeySpec { key: "gen.count", default: "200", help: "number of synthetic shape/skeleton pairs to generate" },
    KeySpec { key: "gen.size", default: "64", help: "side length of generated images, at least 16" },
    KeySpec { key: "gen.seed", default: "0", help: "synthetic geometry seed" },
];

/// Fully resolved configuration shared by all commands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data_dir: String,
    pub manifest: String,
    pub ratio: f64,
    pub split_seed: u64,
    pub augment_target: usize,
    pub augment_seed: u64,
    pub checkpoint: String,
    pub out_dir: String,
    pub predict_input: String,
    pub predict_heads: String,
    pub predict_threshold: f32,
    pub predict_weight: f64,
    pub eval_split: String,
    pub eval_threshold: f32,
    pub eval_weight: f64,
    pub grid_step: f64,
    pub global_pool: bool,
    pub per_image_csv: String,
    pub gen_count: usize,
    pub gen_size: usize,
    pub gen_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            data_dir: "data".into(),
            manifest: String::new(),
            ratio: 0.8,
            split_seed: 0,
            augment_target: 1296,
            augment_seed: 0,
            checkpoint: String::new(),
            out_dir: "out".into(),
            predict_input: String::new(),
            predict_heads: "all".into(),
            predict_threshold: 0.5,
            predict_weight: 0.5,
            eval_split: "val".into(),
            eval_threshold: 0.5,
            eval_weight: 0.5,
            grid_step: 0.05,
            global_pool: false,
            per_image_csv: String::new(),
            gen_count: 200,
            gen_size: 64,
            gen_seed: 0,
        }
    }
}

impl RunConfig {
    /// Merge a TOML config file over the current values. Unknown keys and
    /// wrong types are rejected before anything is applied.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.load_str(&text)
            .map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
                other => other,
            })
    }

    pub fn load_str(&mut self, text: &str) -> Result<(), CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("config parse failed: {e}")))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat)?;
        let mut staged = self.clone();
        for (key, value) in &flat {
            staged.set(key, value)?;
        }
        *self = staged;
        Ok(())
    }

    /// Set one key from a TOML value. Every key in [`KEYS`] is accepted and
    /// nothing else.
    pub fn set(&mut self, key: &str, value: &toml::Value) -> Result<(), CliError> {
        match key {
            "network.input_height" => self.network.input_size.0 = usize_of(key, value)?,
            "network.input_width" => self.network.input_size.1 = usize_of(key, value)?,
            "network.base_channels" => self.network.base_channels = usize_of(key, value)?,
            "network.se_ratio" => self.network.se_ratio = usize_of(key, value)?,
            "network.dilation_rate" => self.network.dilation_rate = usize_of(key, value)?,
            "network.coord_enabled" => self.network.coord_enabled = bool_of(key, value)?,
            "network.coord_normalize" => self.network.coord_normalize = bool_of(key, value)?,
            "network.side_layers_enabled" => self.network.side_layers_enabled = bool_of(key, value)?,
            "network.seed" => self.network.seed = u64_of(key, value)?,
            "train.lr0" => self.train.lr0 = f64_of(key, value)?,
            "train.plateau_patience" => self.train.plateau_patience = usize_of(key, value)?,
            "train.plateau_factor" => self.train.plateau_factor = f64_of(key, value)?,
            "train.batch_size" => self.train.batch_size = usize_of(key, value)?,
            "train.max_epochs" => self.train.max_epochs = usize_of(key, value)?,
            "train.early_stop_patience" => self.train.early_stop_patience = usize_of(key, value)?,
            "train.seed" => self.train.seed = u64_of(key, value)?,
            "loss.epsilon" => self.train.loss.epsilon = f64_of(key, value)?,
            "loss.clip_delta" => self.train.loss.clip_delta = f64_of(key, value)?,
            "loss.bce_reduction" => {
                self.train.loss.bce_reduction = match str_of(key, value)? {
                    "mean" => Reduction::Mean,
                    "sum" => Reduction::Sum,
                    other => {
                        return Err(CliError::Config(format!(
                            "{key}: expected \"mean\" or \"sum\", got \"{other}\""
                        )))
                    }
                }
            }
            "loss.dice_enabled" => self.train.loss.dice_enabled = bool_of(key, value)?,
            "loss.head_weights" => {
                let arr = value
                    .as_array()
                    .ok_or_else(|| CliError::Config(format!("{key}: expected an array of 5 numbers")))?;
                if arr.len() != 5 {
                    return Err(CliError::Config(format!("{key}: expected 5 weights, got {}", arr.len())));
                }
                for (i, v) in arr.iter().enumerate() {
                    self.train.loss.head_weights[i] = f64_of(key, v)?;
                }
            }
            "data.dir" => self.data_dir = str_of(key, value)?.into(),
            "data.manifest" => self.manifest = str_of(key, value)?.into(),
            "data.ratio" => self.ratio = f64_of(key, value)?,
            "data.seed" => self.split_seed = u64_of(key, value)?,
            "augment.target" => self.augment_target = usize_of(key, value)?,
            "augment.seed" => self.augment_seed = u64_of(key, value)?,
            "checkpoint.path" => self.checkpoint = str_of(key, value)?.into(),
            "out.dir" => self.out_dir = str_of(key, value)?.into(),
            "predict.input" => self.predict_input = str_of(key, value)?.into(),
            "predict.heads" => self.predict_heads = str_of(key, value)?.into(),
            "predict.threshold" => self.predict_threshold = f64_of(key, value)? as f32,
            "predict.ensemble_weight" => self.predict_weight = f64_of(key, value)?,
            "eval.split" => self.eval_split = str_of(key, value)?.into(),
            "eval.threshold" => self.eval_threshold = f64_of(key, value)? as f32,
            "eval.ensemble_weight" => self.eval_weight = f64_of(key, value)?,
            "eval.grid_step" => self.grid_step = f64_of(key, value)?,
            "eval.global_pool" => self.global_pool = bool_of(key, value)?,
            "eval.per_image_csv" => self.per_image_csv = str_of(key, value)?.into(),
            "gen.count" => self.gen_count = usize_of(key, value)?,
            "gen.size" => self.gen_size = usize_of(key, value)?,
            "gen.seed" => self.gen_seed = u64_of(key, value)?,
            other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Current value of a key, formatted the way a config file would write it.
    pub fn get(&self, key: &str) -> String {
        match key {
            "network.input_height" => self.network.input_size.0.to_string(),
            "network.input_width" => self.network.input_size.1.to_string(),
            "network.base_channels" => self.network.base_channels.to_string(),
            "network.se_ratio" => self.network.se_ratio.to_string(),
            "network.dilation_rate" => self.network.dilation_rate.to_string(),
            "network.coord_enabled" => self.network.coord_enabled.to_string(),
            "network.coord_normalize" => self.network.coord_normalize.to_string(),
            "network.side_layers_enabled" => self.network.side_layers_enabled.to_string(),
            "network.seed" => self.network.seed.to_string(),
            "train.lr0" => fmt_f64(self.train.lr0),
            "train.plateau_patience" => self.train.plateau_patience.to_string(),
            "train.plateau_factor" => fmt_f64(self.train.plateau_factor),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.max_epochs" => self.train.max_epochs.to_string(),
            "train.early_stop_patience" => self.train.early_stop_patience.to_string(),
            "train.seed" => self.train.seed.to_string(),
            "loss.epsilon" => fmt_f64(self.train.loss.epsilon),
            "loss.clip_delta" => fmt_f64(self.train.loss.clip_delta),
            "loss.bce_reduction" => match self.train.loss.bce_reduction {
                Reduction::Mean => "\"mean\"".into(),
                Reduction::Sum => "\"sum\"".into(),
            },
            "loss.dice_enabled" => self.train.loss.dice_enabled.to_string(),
            "loss.head_weights" => {
                let inner: Vec<String> = self.train.loss.head_weights.iter().map(|&w| fmt_f64(w)).collect();
                format!("[{}]", inner.join(", "))
            }
            "data.dir" => format!("{:?}", self.data_dir),
            "data.manifest" => format!("{:?}", self.manifest),
            "data.ratio" => fmt_f64(self.ratio),
            "data.seed" => self.split_seed.to_string(),
            "augment.target" => self.augment_target.to_string(),
            "augment.seed" => self.augment_seed.to_string(),
            "checkpoint.path" => format!("{:?}", self.checkpoint),
            "out.dir" => format!("{:?}", self.out_dir),
            "predict.input" => format!("{:?}", self.predict_input),
            "predict.heads" => format!("{:?}", self.predict_heads),
            "predict.threshold" => fmt_f64(self.predict_threshold as f64),
            "predict.ensemble_weight" => fmt_f64(self.predict_weight),
            "eval.split" => format!("{:?}", self.eval_split),
            "eval.threshold" => fmt_f64(self.eval_threshold as f64),
            "eval.ensemble_weight" => fmt_f64(self.eval_weight),
            "eval.grid_step" => fmt_f64(self.grid_step),
            "eval.global_pool" => self.global_pool.to_string(),
            "eval.per_image_csv" => format!("{:?}", self.per_image_csv),
            "gen.count" => self.gen_count.to_string(),
            "gen.size" => self.gen_size.to_string(),
            "gen.seed" => self.gen_seed.to_string(),
            other => panic!("unknown config key `{other}`"),
        }
    }

    /// Manifest path with the empty-value default applied.
    pub fn manifest_path(&self) -> PathBuf {
        if self.manifest.is_empty() {
            Path::new(&self.data_dir).join("split.tsv")
        } else {
            PathBuf::from(&self.manifest)
        }
    }

    /// Checkpoint path with the empty-value default applied.
    pub fn checkpoint_path(&self) -> PathBuf {
        if self.checkpoint.is_empty() {
            Path::new(&self.out_dir).join("checkpoint.bin")
        } else {
            PathBuf::from(&self.checkpoint)
        }
    }
}

/// Nested TOML tables collapse into dotted keys, so `[train]\nlr0 = 1` and
/// `train.lr0 = 1` configure identically.
fn flatten(
    prefix: &str,
    table: &toml::Table,
    out: &mut BTreeMap<String, toml::Value>,
) -> Result<(), CliError> {
    for (name, value) in table {
        let key = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
        match value {
            toml::Value::Table(inner) => flatten(&key, inner, out)?,
            other => {
                out.insert(key, other.clone());
            }
        }
    }
    Ok(())
}

/// Shortest float spelling that still reads as a float in TOML.
fn fmt_f64(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        return format!("{v:e}");
    }
    let plain = format!("{v}");
    if plain.contains('.') || plain.contains('e') || plain.contains("inf") || plain.contains("NaN") {
        plain
    } else {
        format!("{plain}.0")
    }
}

fn usize_of(key: &str, value: &toml::Value) -> Result<usize, CliError> {
    match value.as_integer() {
        Some(i) if i >= 0 => Ok(i as usize),
        _ => Err(CliError::Config(format!("{key}: expected a non-negative integer, got {value}"))),
    }
}

fn u64_of(key: &str, value: &toml::Value) -> Result<u64, CliError> {
    match value.as_integer() {
        Some(i) if i >= 0 => Ok(i as u64),
        _ => Err(CliError::Config(format!("{key}: expected a non-negative integer, got {value}"))),
    }
}

fn f64_of(key: &str, value: &toml::Value) -> Result<f64, CliError> {
    value
        .as_float()
        .or_else(|| value.as_integer().map(|i| i as f64))
        .ok_or_else(|| CliError::Config(format!("{key}: expected a number, got {value}")))
}

fn bool_of(key: &str, value: &toml::Value) -> Result<bool, CliError> {
    value
        .as_bool()
        .ok_or_else(|| CliError::Config(format!("{key}: expected true or false, got {value}")))
}

fn str_of<'v>(key: &str, value: &'v toml::Value) -> Result<&'v str, CliError> {
    value
        .as_str()
        .ok_or_else(|| CliError::Config(format!("{key}: expected a string, got {value}")))
}

/// Config-key reference appended to `--help`.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|k| k.key.len()).max().unwrap_or(0);
    let mut s = String::from(
        "Configuration keys (config file via --config; flat dotted keys, e.g. `train.lr0 = 0.0005`;\nflags override file values, file values override the defaults below):\n",
    );
    for k in KEYS {
        let _ = writeln!(s, "  {:width$}  default {:24}  {}", k.key, k.default, k.help);
    }
    s
}

/// The network section of a checkpoint header, one dotted key per line.
pub fn network_toml(cfg: &NetworkConfig) -> String {
    let rc = RunConfig { network: cfg.clone(), ..RunConfig::default() };
    let mut s = String::new();
    for k in KEYS.iter().filter(|k| k.key.starts_with("network.")) {
        let _ = writeln!(s, "{} = {}", k.key, rc.get(k.key));
    }
    s
}

/// Parse a checkpoint header back into a network configuration.
pub fn network_from_toml(text: &str) -> Result<NetworkConfig, CliError> {
    let mut rc = RunConfig::default();
    rc.load_str(text)?;
    Ok(rc.network)
}

/// Keep the training loss ablation-consistent: a loss with the Dice term
/// disabled is the cross-entropy-only configuration.
pub fn describe_loss(loss: &LossConfig) -> &'static str {
    if loss.dice_enabled {
        "bce+dice"
    } else {
        "bce-only"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips_its_default() {
        let cfg = RunConfig::default();
        for k in KEYS {
            let line = format!("v = {}", k.default);
            let parsed: toml::Table = line.parse().expect(k.key);
            let mut fresh = RunConfig::default();
            fresh.set(k.key, &parsed["v"]).expect(k.key);
            assert_eq!(cfg.get(k.key), k.default, "default mismatch for {}", k.key);
        }
    }

    #[test]
    fn dotted_and_sectioned_files_configure_identically() {
        let mut a = RunConfig::default();
        a.load_str("train.lr0 = 0.5\nnetwork.base_channels = 8").unwrap();
        let mut b = RunConfig::default();
        b.load_str("[train]\nlr0 = 0.5\n[network]\nbase_channels = 8").unwrap();
        assert_eq!(a.train.lr0, 0.5);
        assert_eq!(b.train.lr0, 0.5);
        assert_eq!(a.network.base_channels, b.network.base_channels);
    }

    #[test]
    fn unknown_key_is_rejected_and_nothing_is_applied() {
        let mut cfg = RunConfig::default();
        let err = cfg.load_str("train.lr0 = 0.5\ntrain.lr9 = 1.0").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert_eq!(cfg.train.lr0, 0.001, "partial application after a bad key");
    }

    #[test]
    fn wrong_types_are_rejected_with_the_key_in_the_message() {
        let mut cfg = RunConfig::default();
        let err = cfg.load_str("train.batch_size = \"four\"").unwrap_err();
        match err {
            CliError::Config(msg) => assert!(msg.contains("train.batch_size"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        assert!(cfg.load_str("loss.head_weights = [1.0, 2.0]").is_err());
        assert!(cfg.load_str("loss.bce_reduction = \"median\"").is_err());
    }

    #[test]
    fn network_header_round_trips_every_field() {
        let net = NetworkConfig {
            input_size: (64, 64),
            base_channels: 8,
            coord_enabled: false,
            seed: 17,
            ..NetworkConfig::default()
        };
        let text = network_toml(&net);
        let back = network_from_toml(&text).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn keys_help_mentions_every_key() {
        let help = keys_help();
        for k in KEYS {
            assert!(help.contains(k.key), "help missing {}", k.key);
        }
    }
}
