//! Run configuration: a flat `key = value` file plus command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sgnn_core::{Activation, FeatureNorm, LossNormalization, Normalization, SamplerKind, TrainConfig};
use sgnn_core::{HwSource, SplitKind};

use crate::CliError;

/// One `key=value` assignment and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub origin: String,
}

impl Setting {
    pub fn flag(key: &str, value: impl ToString) -> Self {
        Self {
            key: key.to_string(),
            value: value.to_string(),
            origin: format!("--{}", key.replace('_', "-")),
        }
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_settings(text: &str, source: &Path) -> Result<Vec<Setting>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let origin = format!("{}:{}", source.display(), i + 1);
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("{origin}: expected 'key = value', found '{line}'")));
        };
        out.push(Setting {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            origin,
        });
    }
    Ok(out)
}

pub fn read_settings(path: &Path) -> Result<Vec<Setting>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_settings(&text, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    /// Dataset name whose recommended settings seed the training config.
    pub preset: Option<String>,
    pub train: TrainConfig,
    /// `eval`: parameter file to score.
    pub params: Option<PathBuf>,
    /// `eval`: split to score.
    pub split: SplitKind,
    /// `lab`: random instances per check.
    pub lab_instances: usize,
    /// `lab`: Monte-Carlo trials per instance.
    pub lab_trials: usize,
    /// `lab`: swap in a biased estimator (negative control).
    pub inject_bias: bool,
    /// `ablate-init`: HW initial value of the pessimistic run.
    pub pessimistic_init: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            out: PathBuf::from("runs/latest"),
            preset: None,
            train: TrainConfig::default(),
            params: None,
            split: SplitKind::Test,
            lab_instances: 5,
            lab_trials: 100_000,
            inject_bias: false,
            pessimistic_init: 1.0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset",
    "out",
    "preset",
    "sampler",
    "num_layers",
    "hidden",
    "activation",
    "dropout",
    "batch_size",
    "layer_sizes",
    "epochs",
    "learning_rate",
    "weight_decay",
    "seed",
    "hw_init",
    "hw_source",
    "normalization",
    "feature_norm",
    "loss_normalization",
    "pool_size",
    "params",
    "split",
    "lab_instances",
    "lab_trials",
    "inject_bias",
    "pessimistic_init",
];

fn parse<T: FromStr>(s: &Setting) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    s.value
        .parse()
        .map_err(|e| CliError::Usage(format!("{}: bad value '{}' for {}: {e}", s.origin, s.value, s.key)))
}

fn last<'a>(settings: &'a [Setting], key: &str) -> Option<&'a Setting> {
    settings.iter().rev().find(|s| s.key == key)
}

impl RunConfig {
    /// Builds a config from settings applied in order, so later entries win.
    ///
    /// The training section starts from [`TrainConfig::recommended`] for the
    /// chosen sampler and the `preset` name, falling back to the dataset
    /// directory name.
    pub fn resolve(settings: &[Setting]) -> Result<Self, CliError> {
        if let Some(s) = settings.iter().find(|s| !KEYS.contains(&s.key.as_str())) {
            return Err(CliError::Usage(format!(
                "{}: unknown key '{}' (known keys: {})",
                s.origin,
                s.key,
                KEYS.join(", ")
            )));
        }
        let sampler: SamplerKind = match last(settings, "sampler") {
            Some(s) => parse(s)?,
            None => SamplerKind::default(),
        };
        let dataset = last(settings, "dataset").map(|s| PathBuf::from(&s.value));
        let preset = last(settings, "preset").map(|s| s.value.clone());
        let preset_name = preset.clone().or_else(|| {
            dataset
                .as_ref()
                .and_then(|d| d.file_name())
                .map(|n| n.to_string_lossy().into_owned())
        });
        let mut cfg = RunConfig {
            dataset,
            preset,
            train: TrainConfig::recommended(sampler, preset_name.as_deref().unwrap_or("")),
            ..Default::default()
        };
        for s in settings {
            let t = &mut cfg.train;
            match s.key.as_str() {
                "dataset" | "preset" | "sampler" => {}
                "out" => cfg.out = PathBuf::from(&s.value),
                "num_layers" => t.num_layers = parse(s)?,
                "hidden" => t.hidden = parse(s)?,
                "activation" => t.activation = parse::<Activation>(s)?,
                "dropout" => t.dropout = parse(s)?,
                "batch_size" => t.batch_size = parse(s)?,
                "layer_sizes" => {
                    t.layer_sizes = if s.value.is_empty() {
                        Vec::new()
                    } else {
                        s.value
                            .split(',')
                            .map(|v| {
                                v.trim().parse().map_err(|_| {
                                    CliError::Usage(format!("{}: bad layer size '{v}'", s.origin))
                                })
                            })
                            .collect::<Result<_, _>>()?
                    }
                }
                "epochs" => t.epochs = parse(s)?,
                "learning_rate" => t.learning_rate = parse(s)?,
                "weight_decay" => t.weight_decay = parse(s)?,
                "seed" => t.seed = parse(s)?,
                "hw_init" => t.hw_init = parse(s)?,
                "hw_source" => t.hw_source = parse::<HwSource>(s)?,
                "normalization" => t.normalization = parse::<Normalization>(s)?,
                "feature_norm" => t.feature_norm = parse::<FeatureNorm>(s)?,
                "loss_normalization" => t.loss_normalization = parse::<LossNormalization>(s)?,
                "pool_size" => {
                    t.pool_size = match s.value.as_str() {
                        "" | "auto" => None,
                        _ => Some(parse(s)?),
                    }
                }
                "params" => cfg.params = Some(PathBuf::from(&s.value)),
                "split" => cfg.split = parse::<SplitKind>(s)?,
                "lab_instances" => cfg.lab_instances = parse(s)?,
                "lab_trials" => cfg.lab_trials = parse(s)?,
                "inject_bias" => cfg.inject_bias = parse(s)?,
                "pessimistic_init" => cfg.pessimistic_init = parse(s)?,
                other => unreachable!("key '{other}' is listed but not handled"),
            }
        }
        cfg.train.sampler = sampler;
        cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Training settings as a config file that [`RunConfig::resolve`] reads
    /// back to the same training config.
    pub fn training_config_text(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("sampler", t.sampler.name().into());
        kv("num_layers", t.num_layers.to_string());
        kv("hidden", t.hidden.to_string());
        kv("activation", t.activation.name().into());
        kv("dropout", t.dropout.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv(
            "layer_sizes",
            t.layer_sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        );
        kv("epochs", t.epochs.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("weight_decay", t.weight_decay.to_string());
        kv("seed", t.seed.to_string());
        kv("hw_init", t.hw_init.to_string());
        kv("hw_source", t.hw_source.name().into());
        kv("normalization", t.normalization.name().into());
        kv("feature_norm", t.feature_norm.name().into());
        kv("loss_normalization", t.loss_normalization.name().into());
        kv("pool_size", t.pool_size.map_or("auto".into(), |p| p.to_string()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Vec<Setting> {
        parse_settings(text, Path::new("run.cfg")).unwrap()
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let s = settings("# header\n\nhidden = 32  # wider\nepochs=3\n");
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].key.as_str(), s[0].value.as_str()), ("hidden", "32"));
        assert_eq!(s[1].origin, "run.cfg:4");
    }

    #[test]
    fn later_settings_override_earlier_ones() {
        let mut s = settings("epochs = 3\nseed = 4\n");
        s.push(Setting::flag("epochs", 9));
        let cfg = RunConfig::resolve(&s).unwrap();
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.train.seed, 4);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = RunConfig::resolve(&settings("epochs = 3\nhiden = 3\n")).unwrap_err();
        assert!(err.to_string().contains("run.cfg:2"), "{err}");
        assert!(err.to_string().contains("hiden"));
    }

    #[test]
    fn bad_values_and_lines_are_rejected() {
        assert!(parse_settings("epochs 3\n", Path::new("x")).is_err());
        assert!(RunConfig::resolve(&settings("epochs = many\n")).is_err());
        assert!(RunConfig::resolve(&settings("dropout = 1.5\n")).is_err());
        assert!(RunConfig::resolve(&settings("sampler = fastest\n")).is_err());
    }

    #[test]
    fn subgraph_presets_follow_the_dataset_name() {
        let s = vec![Setting::flag("sampler", "subgraph-node"), Setting::flag("dataset", "data/pubmed")];
        let cfg = RunConfig::resolve(&s).unwrap();
        assert_eq!(cfg.train, TrainConfig::recommended(SamplerKind::SubgraphNode, "pubmed"));
        let cfg = RunConfig::resolve(&[Setting::flag("sampler", "subgraph-node")]).unwrap();
        assert_eq!(cfg.train.activation, Activation::Relu);
        assert_eq!(cfg.train.batch_size, 512);
    }

    #[test]
    fn every_field_has_a_default() {
        let cfg = RunConfig::resolve(&[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn dumped_training_config_reads_back() {
        let s = settings("sampler = subgraph-edge\nlayer_sizes = 10,20\nnum_layers = 2\npool_size = 7\nhw_source = pre\n");
        let cfg = RunConfig::resolve(&s).unwrap();
        let again = RunConfig::resolve(&settings(&cfg.training_config_text())).unwrap();
        assert_eq!(again.train, cfg.train);
    }
}
