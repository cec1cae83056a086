//! Training configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! lr0 = 0.01
//! mode = multitask_uncertainty
//! channels = 16, 32, 64
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossMode};
use crate::net::NetworkConfig;

/// How scenes are chosen for mini-batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSampling {
    /// A uniformly random scene for every batch.
    PerBatch,
    /// A uniformly random scene for every patch.
    PerPatch,
    /// Walk a shuffled scene list, drawing `n` batches from each scene.
    Sequential(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_step_iters: usize,
    pub lr_factor: f64,
    pub max_iters: usize,
    pub patch: usize,
    pub patches_per_batch: usize,
    pub seed: u64,
    pub mode: LossMode,
    pub init_from: Option<PathBuf>,
    pub lambda_seg: f64,
    pub lambda_dist: f64,
    pub radius: f64,
    pub bins: usize,
    pub channels: Vec<usize>,
    pub convs_per_stage: Vec<usize>,
    pub sampling: SceneSampling,
    /// Checkpoint cadence; `0` means at every learning-rate step.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_step_iters: 2000,
            lr_factor: 0.1,
            max_iters: 5000,
            patch: 128,
            patches_per_batch: 4,
            seed: 1,
            mode: LossMode::SegOnly,
            init_from: None,
            lambda_seg: 1.0,
            lambda_dist: 1.0,
            radius: 20.0,
            bins: 10,
            channels: vec![16, 32, 64],
            convs_per_stage: vec![2, 2, 2],
            sampling: SceneSampling::PerBatch,
            checkpoint_every: 0,
        }
    }
}

fn parse_list(v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad list entry {s:?}")))
        })
        .collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl TrainConfig {
    pub const KEYS: [&'static str; 20] = [
        "lr0",
        "momentum",
        "weight_decay",
        "lr_step_iters",
        "lr_factor",
        "max_iters",
        "patch",
        "patches_per_batch",
        "seed",
        "mode",
        "init_from",
        "lambda_seg",
        "lambda_dist",
        "radius",
        "bins",
        "channels",
        "convs_per_stage",
        "sampling",
        "checkpoint_every",
        "stages",
    ];

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            mode: self.mode,
            lambda_seg: self.lambda_seg,
            lambda_dist: self.lambda_dist,
        }
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            stages: self.channels.len(),
            channels_per_stage: self.channels.clone(),
            convs_per_stage: self.convs_per_stage.clone(),
            num_distance_classes: self.bins,
            heads: self.mode.heads(),
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad(format!("lr_factor must be in (0, 1), got {}", self.lr_factor));
        }
        if self.lr_step_iters == 0 || self.patches_per_batch == 0 {
            return bad("lr_step_iters and patches_per_batch must be positive".into());
        }
        if let SceneSampling::Sequential(0) = self.sampling {
            return bad("sequential sampling needs at least one batch per scene".into());
        }
        self.loss_config().validate()?;
        let net = self.network();
        net.validate()?;
        net.check_extent(self.patch, self.patch)?;
        crate::distxform::BinSpec::new(self.bins, self.radius)?;
        Ok(())
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "lr0" => self.lr0 = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "lr_step_iters" => self.lr_step_iters = num(key, value)?,
            "lr_factor" => self.lr_factor = num(key, value)?,
            "max_iters" => self.max_iters = num(key, value)?,
            "patch" => self.patch = num(key, value)?,
            "patches_per_batch" => self.patches_per_batch = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "init_from" => self.init_from = (!value.is_empty()).then(|| PathBuf::from(value)),
            "lambda_seg" => self.lambda_seg = num(key, value)?,
            "lambda_dist" => self.lambda_dist = num(key, value)?,
            "radius" => self.radius = num(key, value)?,
            "bins" => self.bins = num(key, value)?,
            "channels" => self.channels = parse_list(value)?,
            "convs_per_stage" => self.convs_per_stage = parse_list(value)?,
            "stages" => {
                let n: usize = num(key, value)?;
                if n != self.channels.len() {
                    return Err(Error::InvalidConfig(format!(
                        "stages = {n} but channels lists {} stages",
                        self.channels.len()
                    )));
                }
            }
            "sampling" => {
                self.sampling = match value {
                    "per_batch" => SceneSampling::PerBatch,
                    "per_patch" => SceneSampling::PerPatch,
                    v => match v.strip_prefix("sequential:") {
                        Some(n) => SceneSampling::Sequential(num(key, n)?),
                        None => {
                            return Err(Error::InvalidConfig(format!(
                                "sampling must be per_batch, per_patch or sequential:<n>, got {v:?}"
                            )))
                        }
                    },
                }
            }
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", n + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Renders every key in the file format; [`TrainConfig::parse`] reads it back.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let sampling = match self.sampling {
            SceneSampling::PerBatch => "per_batch".to_string(),
            SceneSampling::PerPatch => "per_patch".to_string(),
            SceneSampling::Sequential(n) => format!("sequential:{n}"),
        };
        let init = self
            .init_from
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let _ = writeln!(s, "lr0 = {}", self.lr0);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "lr_step_iters = {}", self.lr_step_iters);
        let _ = writeln!(s, "lr_factor = {}", self.lr_factor);
        let _ = writeln!(s, "max_iters = {}", self.max_iters);
        let _ = writeln!(s, "patch = {}", self.patch);
        let _ = writeln!(s, "patches_per_batch = {}", self.patches_per_batch);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "init_from = {init}");
        let _ = writeln!(s, "lambda_seg = {}", self.lambda_seg);
        let _ = writeln!(s, "lambda_dist = {}", self.lambda_dist);
        let _ = writeln!(s, "radius = {}", self.radius);
        let _ = writeln!(s, "bins = {}", self.bins);
        let _ = writeln!(s, "channels = {}", join(&self.channels));
        let _ = writeln!(s, "convs_per_stage = {}", join(&self.convs_per_stage));
        let _ = writeln!(s, "sampling = {sampling}");
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn parse_and_render_roundtrip() {
        let text = "# staged run\nlr0 = 0.001\nmode = multitask_uncertainty\n\nchannels = 8, 16\nconvs_per_stage = 1,2\nstages = 2\ninit_from = runs/dist/final.fckp  # from the distance run\nsampling = sequential:10\n";
        let cfg = TrainConfig::parse(text).unwrap();
        assert_eq!(cfg.lr0, 0.001);
        assert_eq!(cfg.mode, LossMode::MultitaskUncertainty);
        assert_eq!(cfg.channels, vec![8, 16]);
        assert_eq!(cfg.init_from, Some(PathBuf::from("runs/dist/final.fckp")));
        assert_eq!(cfg.sampling, SceneSampling::Sequential(10));
        assert_eq!(TrainConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(TrainConfig::parse("learning_rate = 0.1").is_err());
        assert!(TrainConfig::parse("lr0 0.1").is_err());
        assert!(TrainConfig::parse("lr0 = fast").is_err());
        assert!(TrainConfig::parse("stages = 4").is_err());
    }

    #[test]
    fn validation_bounds() {
        let bad = [
            "lr0 = 0",
            "momentum = 1",
            "lr_factor = 1",
            "patch = 100",
            "bins = 7",
            "lambda_seg = 0",
        ];
        for b in bad {
            assert!(TrainConfig::parse(b).unwrap().validate().is_err(), "{b}");
        }
    }
}
