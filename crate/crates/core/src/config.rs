//! Run configuration: `key = value` files, flag overrides and the `FF_SEED`
//! environment variable.
//!
//! Precedence, lowest first: built-in defaults, `FF_SEED`, the config file,
//! command-line flags. Unknown keys and unparsable values are errors.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::data::SynthDataset;
use crate::error::{Error, Result};
use crate::inversion::{InitKind, InversionConfig};
use crate::models::GeneratorConfig;
use crate::slerp::schedule_count;
use crate::train::TrainConfig;

pub const SEED_ENV: &str = "FF_SEED";

pub struct ConfigKey {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

/// Every accepted key with its default.
pub const SCHEMA: &[ConfigKey] = &[
    ConfigKey { name: "seed", default: "1", help: "master seed for initialization, data and latent draws" },
    ConfigKey { name: "latent_dim", default: "16", help: "latent width h (>= 2)" },
    ConfigKey { name: "base_size", default: "4", help: "side of the first generator feature map" },
    ConfigKey { name: "channels", default: "16", help: "feature channels per stage" },
    ConfigKey { name: "stages", default: "2", help: "upsampling stages; image side = base_size * 2^stages" },
    ConfigKey { name: "batch_size", default: "16", help: "images per step, even (half originals, half mirrors)" },
    ConfigKey { name: "gamma", default: "0.5", help: "equilibrium ratio in (0, 1]" },
    ConfigKey { name: "lambda_k", default: "0.001", help: "proportional gain of the k controller" },
    ConfigKey { name: "lr", default: "0.001", help: "Adam learning rate for both networks" },
    ConfigKey { name: "steps", default: "2000", help: "training steps" },
    ConfigKey { name: "checkpoint_every", default: "0", help: "checkpoint interval in steps (0 = end only)" },
    ConfigKey { name: "identities", default: "64", help: "synthetic identities sampled during training" },
    ConfigKey { name: "angle_min", default: "20", help: "smallest synthetic training pose, degrees" },
    ConfigKey { name: "angle_max", default: "60", help: "largest synthetic training pose, degrees" },
    ConfigKey { name: "data_manifest", default: "", help: "manifest CSV of PGM training images (empty = synthetic)" },
    ConfigKey { name: "inversion_steps", default: "200", help: "Adam steps per embedding inversion" },
    ConfigKey { name: "inversion_lr", default: "0.05", help: "Adam learning rate for inversion" },
    ConfigKey { name: "inversion_init", default: "uniform", help: "inversion start: uniform | encoder" },
    ConfigKey { name: "t_ceil", default: "1", help: "upper bound of the interpolation parameter" },
    ConfigKey { name: "t_floor", default: "0", help: "lower bound of the interpolation parameter" },
    ConfigKey { name: "delta", default: "0.1", help: "interpolation interval; strip length = (t_ceil - t_floor) / delta" },
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: GeneratorConfig,
    pub batch_size: usize,
    pub gamma: f64,
    pub lambda_k: f64,
    pub lr: f64,
    pub steps: usize,
    pub checkpoint_every: usize,
    pub identities: u64,
    pub angle_min: f64,
    pub angle_max: f64,
    pub data_manifest: Option<PathBuf>,
    pub inversion_steps: usize,
    pub inversion_lr: f64,
    pub inversion_init: InitKind,
    pub t_ceil: f64,
    pub t_floor: f64,
    pub delta: f64,
    explicit: BTreeSet<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            seed: 0,
            model: GeneratorConfig::default(),
            batch_size: 0,
            gamma: 0.0,
            lambda_k: 0.0,
            lr: 0.0,
            steps: 0,
            checkpoint_every: 0,
            identities: 0,
            angle_min: 0.0,
            angle_max: 0.0,
            data_manifest: None,
            inversion_steps: 0,
            inversion_lr: 0.0,
            inversion_init: InitKind::Uniform,
            t_ceil: 0.0,
            t_floor: 0.0,
            delta: 0.0,
            explicit: BTreeSet::new(),
        };
        for key in SCHEMA {
            cfg.set(key.name, key.default).expect("schema defaults parse");
        }
        cfg.explicit.clear();
        cfg
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    /// Defaults with `FF_SEED` applied when set.
    pub fn from_env() -> Result<Self> {
        let mut cfg = Self::default();
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.set("seed", &seed)
                .map_err(|e| Error::Config(format!("{SEED_ENV}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "latent_dim" => self.model.latent_dim = parse(key, v)?,
            "base_size" => self.model.base_size = parse(key, v)?,
            "channels" => self.model.channels = parse(key, v)?,
            "stages" => self.model.stages = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "lambda_k" => self.lambda_k = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "identities" => self.identities = parse(key, v)?,
            "angle_min" => self.angle_min = parse(key, v)?,
            "angle_max" => self.angle_max = parse(key, v)?,
            "data_manifest" => self.data_manifest = (!v.is_empty()).then(|| PathBuf::from(v)),
            "inversion_steps" => self.inversion_steps = parse(key, v)?,
            "inversion_lr" => self.inversion_lr = parse(key, v)?,
            "inversion_init" => self.inversion_init = v.parse()?,
            "t_ceil" => self.t_ceil = parse(key, v)?,
            "t_floor" => self.t_floor = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        let name = SCHEMA.iter().find(|k| k.name == key).expect("matched key is in the schema").name;
        self.explicit.insert(name);
        Ok(())
    }

    /// Whether `key` was assigned after the defaults, by `FF_SEED`, a file or a flag.
    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Applies `key = value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            seed: self.seed,
            batch_size: self.batch_size,
            model: self.model,
            gamma: self.gamma,
            lambda_k: self.lambda_k,
            lr: self.lr,
            steps: self.steps,
            checkpoint_every: self.checkpoint_every,
            checkpoint_path: None,
            metrics_path: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn inversion_config(&self) -> Result<InversionConfig> {
        if self.inversion_steps == 0 || !(self.inversion_lr > 0.0) {
            return Err(Error::Config("inversion_steps and inversion_lr must be positive".into()));
        }
        Ok(InversionConfig {
            steps: self.inversion_steps,
            lr: self.inversion_lr,
            init: self.inversion_init,
            seed: self.seed,
        })
    }

    /// Strip length from the interpolation bounds and interval.
    pub fn strip_len(&self) -> Result<usize> {
        schedule_count(self.t_ceil, self.t_floor, self.delta)
    }

    pub fn synth_dataset(&self) -> Result<SynthDataset> {
        SynthDataset::new(self.identities, self.angle_min, self.angle_max, self.model.out_size())
    }
}
