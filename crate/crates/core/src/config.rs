//! `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::layers::{Aggregator, LEAKY_SLOPE};
use crate::model::{LayerKind, ModalitySpec, Mode, ModelConfig};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub min_count: usize,
    pub stopwords_file: Option<PathBuf>,
    pub graph: GraphConfig,
    pub mode: Mode,
    pub layer_kind: LayerKind,
    pub d_embed: usize,
    pub layer_widths: Vec<usize>,
    pub leaky_slope: f64,
    pub sage_sample_size: usize,
    pub sage_aggregator: Aggregator,
    pub d_fuse: usize,
    /// Declared modalities, in declaration order.
    pub modalities: Vec<ModalitySpec>,
    pub train: TrainConfig,
    /// Share of documents held out for evaluation by ablation runs.
    pub holdout_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            min_count: 1,
            stopwords_file: None,
            graph: GraphConfig::default(),
            mode: Mode::Full,
            layer_kind: LayerKind::Gat,
            d_embed: 128,
            layer_widths: vec![128, 64],
            leaky_slope: LEAKY_SLOPE,
            sage_sample_size: 10,
            sage_aggregator: Aggregator::Mean,
            d_fuse: 64,
            modalities: Vec::new(),
            train: TrainConfig::default(),
            holdout_fraction: 0.2,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip_config(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "min_count" => self.min_count = parse_value(key, value)?,
            "stopwords_file" => self.stopwords_file = Some(PathBuf::from(value)),
            "window_size" => self.graph.window_size = parse_value(key, value)?,
            "ppmi_threshold" => self.graph.ppmi_threshold = parse_value(key, value)?,
            "top_k_per_node" => self.graph.top_k_per_node = parse_value(key, value)?,
            "mode" => self.mode = value.parse()?,
            "layer_kind" => self.layer_kind = value.parse()?,
            "d_embed" => self.d_embed = parse_value(key, value)?,
            "layer_widths" => self.layer_widths = parse_list(key, value)?,
            "leaky_slope" => self.leaky_slope = parse_value(key, value)?,
            "sage_sample_size" => self.sage_sample_size = parse_value(key, value)?,
            "sage_aggregator" => self.sage_aggregator = value.parse()?,
            "d_fuse" => self.d_fuse = parse_value(key, value)?,
            "epochs" => self.train.epochs = parse_value(key, value)?,
            "batch_size" => self.train.batch_size = parse_value(key, value)?,
            "lr0" => self.train.lr0 = parse_value(key, value)?,
            "decay" => self.train.decay = parse_value(key, value)?,
            "momentum" => self.train.momentum = parse_value(key, value)?,
            "seed" => self.train.seed = parse_value(key, value)?,
            "holdout_fraction" => self.holdout_fraction = parse_value(key, value)?,
            _ => match key.strip_prefix("modality.") {
                Some(name) if !name.is_empty() => {
                    let dim = parse_value(key, value)?;
                    match self.modalities.iter_mut().find(|m| m.name == name) {
                        Some(m) => m.dim = dim,
                        None => self.modalities.push(ModalitySpec { name: name.to_string(), dim }),
                    }
                }
                _ => return Err(Error::Config(format!("unknown key {key:?}"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.train.validate()?;
        if self.d_embed == 0 || self.d_fuse == 0 {
            return Err(Error::Config("d_embed and d_fuse must be positive".into()));
        }
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(Error::Config("layer_widths must be a nonempty list of positive widths".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config("leaky_slope must lie in (0, 1)".into()));
        }
        if self.sage_sample_size == 0 {
            return Err(Error::Config("sage_sample_size must be >= 1".into()));
        }
        if let Some(m) = self.modalities.iter().find(|m| m.dim == 0) {
            return Err(Error::Config(format!("modality.{} must be positive", m.name)));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let widths: Vec<String> = self.layer_widths.iter().map(usize::to_string).collect();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("min_count", self.min_count.to_string());
        if let Some(p) = &self.stopwords_file {
            kv("stopwords_file", p.display().to_string());
        }
        kv("window_size", self.graph.window_size.to_string());
        kv("ppmi_threshold", format!("{:?}", self.graph.ppmi_threshold));
        kv("top_k_per_node", self.graph.top_k_per_node.to_string());
        kv("mode", self.mode.to_string());
        kv("layer_kind", self.layer_kind.to_string());
        kv("d_embed", self.d_embed.to_string());
        kv("layer_widths", widths.join(","));
        kv("leaky_slope", format!("{:?}", self.leaky_slope));
        kv("sage_sample_size", self.sage_sample_size.to_string());
        kv("sage_aggregator", self.sage_aggregator.as_str().to_string());
        kv("d_fuse", self.d_fuse.to_string());
        for m in &self.modalities {
            kv(&format!("modality.{}", m.name), m.dim.to_string());
        }
        kv("epochs", self.train.epochs.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("lr0", format!("{:?}", self.train.lr0));
        kv("decay", format!("{:?}", self.train.decay));
        kv("momentum", format!("{:?}", self.train.momentum));
        kv("seed", self.train.seed.to_string());
        kv("holdout_fraction", format!("{:?}", self.holdout_fraction));
        s
    }

    pub fn model_config(&self, vocab_size: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            mode: self.mode,
            layer_kind: self.layer_kind,
            vocab_size,
            classes,
            d_embed: self.d_embed,
            widths: self.layer_widths.clone(),
            modalities: self.modalities.clone(),
            d_fuse: self.d_fuse,
            slope: self.leaky_slope,
            sage_sample_size: self.sage_sample_size,
            sage_aggregator: self.sage_aggregator,
            graph: self.graph.clone(),
            sample_seed: self.train.seed,
        }
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.layer_widths, vec![128, 64]);
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.layer_kind, LayerKind::Gat);
    }

    #[test]
    fn parses_assignments_and_comments() {
        let c = RunConfig::parse(
            "# header\nmode = gnn-only\nlayer_kind=sage  # inline\nlayer_widths = 8, 4\n\
             modality.image = 16\nmodality.meta = 3\nseed = 42\nlr0 = 0.05\n",
        )
        .unwrap();
        assert_eq!(c.mode, Mode::GnnOnly);
        assert_eq!(c.layer_kind, LayerKind::Sage);
        assert_eq!(c.layer_widths, vec![8, 4]);
        assert_eq!(c.modalities[0], ModalitySpec { name: "image".into(), dim: 16 });
        assert_eq!(c.modalities[1].name, "meta");
        assert_eq!(c.train.seed, 42);
        assert_eq!(c.train.lr0, 0.05);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        for bad in [
            "widnow_size = 3",
            "window_size",
            "window_size = three",
            "mode = both",
            "window_size = 1",
            "batch_size = 0",
            "momentum = 1.0",
            "layer_widths = ",
            "modality.x = 0",
            "holdout_fraction = 1.0",
        ] {
            let err = RunConfig::parse(bad).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad}: {err:?}");
        }
        let msg = RunConfig::parse("\n\nfoo = 1").unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    proptest! {
        #[test]
        fn text_round_trips(window in 2usize..6, k in 1usize..20, widths in proptest::collection::vec(1usize..300, 1..4),
                            lr in 0.0f64..1.0, seed in any::<u64>(), mode in 0usize..3, kind in 0usize..4,
                            dims in proptest::collection::vec(1usize..50, 0..3)) {
            let mut c = RunConfig::default();
            c.graph.window_size = window;
            c.graph.top_k_per_node = k;
            c.layer_widths = widths;
            c.train.lr0 = lr;
            c.train.seed = seed;
            c.mode = Mode::ALL[mode];
            c.layer_kind = LayerKind::ALL[kind];
            c.modalities = dims.iter().enumerate().map(|(i, &d)| ModalitySpec { name: format!("m{i}"), dim: d }).collect();
            prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        }
    }
}
