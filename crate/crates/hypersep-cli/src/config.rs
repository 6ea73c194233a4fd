//! Run configuration: TOML file, CLI overrides, and the desk-scale
//! preset, resolved into one effective config before any work starts.

use crate::CmdError;
use hypersep_core::augment::TransformSpec;
use hypersep_core::data::DatasetKind;
use hypersep_core::nn::AdamConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: String,
    pub scheme: String,
    /// Layer widths; empty derives the standard architecture for the scheme.
    pub sizes: Vec<usize>,
    pub tau: f64,
    /// Contrastive pair count N; a minibatch holds 2N views.
    pub pairs: usize,
    /// Supervised minibatch size.
    pub batch_size: usize,
    /// Unset falls back to the scheme/dataset default.
    pub epochs: Option<usize>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub transform: TransformSpec,
    pub seeds: Seeds,
    pub adam: AdamSettings,
    pub probe: ProbeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "mnist".to_string(),
            scheme: "contrastive".to_string(),
            sizes: Vec::new(),
            tau: 1.0,
            pairs: 1000,
            batch_size: 1000,
            epochs: None,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            transform: TransformSpec::default(),
            seeds: Seeds::default(),
            adam: AdamSettings::default(),
            probe: ProbeSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub augment: u64,
    pub probe: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSettings {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        let a = AdamConfig::default();
        AdamSettings {
            alpha: a.alpha,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
        }
    }
}

impl From<AdamSettings> for AdamConfig {
    fn from(s: AdamSettings) -> AdamConfig {
        AdamConfig {
            alpha: s.alpha,
            beta1: s.beta1,
            beta2: s.beta2,
            epsilon: s.epsilon,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    /// `enumerate`, `sample`, or `auto` (enumerate when the class count
    /// allows it, otherwise sample).
    pub masks: String,
    pub count: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub workers: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            masks: "auto".to_string(),
            count: 1000,
            epochs: 10,
            batch_size: 256,
            workers: 0,
        }
    }
}

/// CLI-side overrides; `None` leaves the config value in place. Applied
/// after the desk-scale preset so explicit flags always win.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub dataset: Option<String>,
    pub scheme: Option<String>,
    pub tau: Option<f64>,
    pub pairs: Option<usize>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed_data: Option<u64>,
    pub seed_init: Option<u64>,
    pub seed_augment: Option<u64>,
    pub seed_probe: Option<u64>,
    pub probe_masks: Option<String>,
    pub probe_count: Option<usize>,
    pub probe_epochs: Option<usize>,
    pub probe_batch_size: Option<usize>,
    pub probe_workers: Option<usize>,
    pub desk_scale: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CmdError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::new(1, format!("config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CmdError::new(1, format!("config {}: {e}", path.display())))
    }

    pub fn resolve(file: Option<&Path>, over: &Overrides) -> Result<RunConfig, CmdError> {
        let mut cfg = match file {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if over.desk_scale {
            cfg.epochs = Some(if cfg_scheme(&cfg, over) == "supervised" { 10 } else { 40 });
            cfg.pairs = 256;
        }
        macro_rules! put {
            ($field:expr, $src:expr) => {
                if let Some(v) = &$src {
                    $field = v.clone();
                }
            };
        }
        put!(cfg.dataset, over.dataset);
        put!(cfg.scheme, over.scheme);
        put!(cfg.tau, over.tau);
        put!(cfg.pairs, over.pairs);
        put!(cfg.batch_size, over.batch_size);
        if over.epochs.is_some() {
            cfg.epochs = over.epochs;
        }
        put!(cfg.data_dir, over.data_dir);
        put!(cfg.out_dir, over.out_dir);
        put!(cfg.seeds.data, over.seed_data);
        put!(cfg.seeds.init, over.seed_init);
        put!(cfg.seeds.augment, over.seed_augment);
        put!(cfg.seeds.probe, over.seed_probe);
        put!(cfg.probe.masks, over.probe_masks);
        put!(cfg.probe.count, over.probe_count);
        put!(cfg.probe.epochs, over.probe_epochs);
        put!(cfg.probe.batch_size, over.probe_batch_size);
        put!(cfg.probe.workers, over.probe_workers);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CmdError> {
        self.kind()?;
        match self.scheme.as_str() {
            "contrastive" | "supervised" => {}
            s => return Err(CmdError::new(1, format!("unknown scheme `{s}`"))),
        }
        match self.probe.masks.as_str() {
            "auto" | "enumerate" | "sample" => {}
            s => return Err(CmdError::new(1, format!("unknown mask source `{s}`"))),
        }
        self.transform
            .validate()
            .map_err(|e| CmdError::new(1, e.to_string()))?;
        Ok(())
    }

    pub fn kind(&self) -> Result<DatasetKind, CmdError> {
        DatasetKind::from_tag(&self.dataset).map_err(|e| CmdError::new(1, e.to_string()))
    }

    /// Epoch budget: explicit setting, else the headline counts
    /// (contrastive 200 MNIST / 300 EMNIST, supervised 50).
    pub fn effective_epochs(&self) -> usize {
        if let Some(e) = self.epochs {
            return e;
        }
        match (self.scheme.as_str(), self.dataset.as_str()) {
            ("contrastive", "emnist-balanced") => 300,
            ("contrastive", _) => 200,
            _ => 50,
        }
    }

    /// Layer widths: configured, else 784-400-400-100 for contrastive and
    /// 784-400-400-C for supervised.
    pub fn effective_sizes(&self, n_classes: usize) -> Vec<usize> {
        if !self.sizes.is_empty() {
            return self.sizes.clone();
        }
        let head = if self.scheme == "supervised" { n_classes } else { 100 };
        vec![784, 400, 400, head]
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn cfg_scheme<'a>(cfg: &'a RunConfig, over: &'a Overrides) -> &'a str {
    over.scheme.as_deref().unwrap_or(&cfg.scheme)
}
