use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::net::NetworkConfig;
use crate::train::LossNormalization;

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub lr_decay_factor: f64,
    pub plateau_patience: usize,
    pub max_epochs: usize,
    /// Training stops once the decayed learning rate falls below this.
    pub min_learning_rate: f64,
    pub seed: u64,
    pub loss: LossNormalization,
    /// Where the last finite parameters are written if training diverges.
    pub failure_checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch_size: 256,
            batch_size: 8,
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            lr_decay_factor: 10.0,
            plateau_patience: 3,
            max_epochs: 100,
            min_learning_rate: 1e-7,
            seed: 0,
            loss: LossNormalization::PerPatch,
            failure_checkpoint: None,
        }
    }
}

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    /// Applies one setting. Keys prefixed `net.` go to `net`.
    pub fn set(&mut self, net: &mut NetworkConfig, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("net.") {
            return net.set(k, value);
        }
        match key {
            "patch_size" => self.patch_size = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(key, value)?,
            "plateau_patience" => self.plateau_patience = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "min_learning_rate" => self.min_learning_rate = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "per_pixel_loss" => {
                self.loss = if parse::<bool>(key, value)? {
                    LossNormalization::PerPixel
                } else {
                    LossNormalization::PerPatch
                }
            }
            "failure_checkpoint" => self.failure_checkpoint = Some(PathBuf::from(value)),
            _ => return Err(Error::config(format!("unknown training setting `{key}`"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str, net: &mut NetworkConfig) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(net, &k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.batch_size == 0 {
            return Err(Error::config("patch_size and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if !(self.lr_decay_factor > 1.0) {
            return Err(Error::config("lr_decay_factor must exceed 1"));
        }
        if self.plateau_patience == 0 {
            return Err(Error::config("plateau_patience must be positive"));
        }
        Ok(())
    }
}
