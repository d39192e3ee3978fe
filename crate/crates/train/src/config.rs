//! `key = value` configuration text and the training configuration.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use pidd_core::{Error, MaskKind, Result};
use pidd_nn::blocks::{AttentionKind, FcaConfig};
use pidd_nn::gan::{GanConfig, GeneratorConfig, LossWeights};

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys may not repeat.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::invalid(format!("config line {}: empty key", n + 1)));
        }
        if out.iter().any(|(e, _)| e == k) {
            return Err(Error::invalid(format!("config line {}: key {k} repeated", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// Dual discriminators on multi-coil data.
    Pidd,
    /// Image discriminator only.
    Pisd,
    /// Dual discriminators on single-coil data.
    NPidd,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Pidd => "PIDD",
            TrainMode::Pisd => "PISD",
            TrainMode::NPidd => "nPIDD",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PIDD" => Ok(TrainMode::Pidd),
            "PISD" => Ok(TrainMode::Pisd),
            "nPIDD" => Ok(TrainMode::NPidd),
            other => Err(Error::invalid(format!("unknown mode '{other}' (PIDD, PISD or nPIDD)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub lr_min: f64,
    pub lr_decay: f64,
    /// Epochs between decays.
    pub lr_step: usize,
    pub batch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub patience: usize,
    pub epochs_max: usize,
    pub early_stop: bool,
    /// Stop after this many optimizer steps; 0 means no cap.
    pub max_steps: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub mask_kind: MaskKind,
    pub mask_fraction: f64,
    pub mask_seed: u64,
    pub noise_level: f64,
    pub gen_base: usize,
    pub disc_base: usize,
    pub use_gr: bool,
    pub use_lr: bool,
    pub attention: AttentionKind,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 1e-3,
            lr_min: 1e-5,
            lr_decay: 0.5,
            lr_step: 5,
            batch: 8,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: 8,
            epochs_max: 30,
            early_stop: true,
            max_steps: 0,
            seed: 0,
            mode: TrainMode::Pidd,
            mask_kind: MaskKind::Gaussian2d,
            mask_fraction: 0.3,
            mask_seed: 0,
            noise_level: 0.0,
            gen_base: 32,
            disc_base: 16,
            use_gr: true,
            use_lr: true,
            attention: AttentionKind::Fca(FcaConfig::default()),
            weights: LossWeights::default(),
        }
    }
}

/// Every accepted key, in the order [`TrainConfig::to_text`] writes them.
pub const TRAIN_KEYS: &[&str] = &[
    "lr_init",
    "lr_min",
    "lr_decay",
    "lr_step",
    "batch",
    "beta1",
    "beta2",
    "adam_eps",
    "patience",
    "epochs_max",
    "early_stop",
    "max_steps",
    "seed",
    "mode",
    "mask_kind",
    "mask_fraction",
    "mask_seed",
    "noise_level",
    "gen_base",
    "disc_base",
    "use_gr",
    "use_lr",
    "attention",
    "fca_freqs",
    "reduction",
    "alpha",
    "beta",
    "gamma",
    "mu",
    "nu",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("config key {key}: cannot parse '{v}'")))
}

fn parse_freqs(v: &str) -> Result<Vec<(usize, usize)>> {
    v.split(',')
        .map(|pair| {
            let (u, w) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("frequency '{pair}' is not u:v")))?;
            Ok((parse("fca_freqs", u.trim())?, parse("fca_freqs", w.trim())?))
        })
        .collect()
}

impl TrainConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "lr_init" => self.lr_init = parse(key, v)?,
            "lr_min" => self.lr_min = parse(key, v)?,
            "lr_decay" => self.lr_decay = parse(key, v)?,
            "lr_step" => self.lr_step = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "adam_eps" => self.adam_eps = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "epochs_max" => self.epochs_max = parse(key, v)?,
            "early_stop" => self.early_stop = parse(key, v)?,
            "max_steps" => self.max_steps = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "mode" => self.mode = v.parse()?,
            "mask_kind" => self.mask_kind = v.parse()?,
            "mask_fraction" => self.mask_fraction = parse(key, v)?,
            "mask_seed" => self.mask_seed = parse(key, v)?,
            "noise_level" => self.noise_level = parse(key, v)?,
            "gen_base" => self.gen_base = parse(key, v)?,
            "disc_base" => self.disc_base = parse(key, v)?,
            "use_gr" => self.use_gr = parse(key, v)?,
            "use_lr" => self.use_lr = parse(key, v)?,
            "attention" => {
                self.attention = match v {
                    "none" => AttentionKind::None,
                    "fca" => AttentionKind::Fca(FcaConfig::default()),
                    "se" => AttentionKind::Se { reduction: 4 },
                    other => return Err(Error::invalid(format!("unknown attention '{other}' (none, fca or se)"))),
                }
            }
            "fca_freqs" => match &mut self.attention {
                AttentionKind::Fca(cfg) => cfg.freqs = parse_freqs(v)?,
                _ => return Err(Error::invalid("fca_freqs requires attention = fca")),
            },
            "reduction" => {
                let r = parse(key, v)?;
                match &mut self.attention {
                    AttentionKind::Fca(cfg) => cfg.reduction = r,
                    AttentionKind::Se { reduction } => *reduction = r,
                    AttentionKind::None => return Err(Error::invalid("reduction requires attention = fca or se")),
                }
            }
            "alpha" => self.weights.alpha = parse(key, v)?,
            "beta" => self.weights.beta = parse(key, v)?,
            "gamma" => self.weights.gamma = parse(key, v)?,
            "mu" => self.weights.mu = parse(key, v)?,
            "nu" => self.weights.nu = parse(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init > 0.0 && self.lr_min > 0.0 && self.lr_min <= self.lr_init) {
            return Err(Error::invalid("learning rates must satisfy 0 < lr_min <= lr_init"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.lr_step == 0 {
            return Err(Error::invalid("lr_decay must lie in (0, 1] and lr_step be positive"));
        }
        if self.batch < 2 {
            return Err(Error::invalid("batch must be at least 2 for batch normalization"));
        }
        if self.patience == 0 || self.epochs_max == 0 {
            return Err(Error::invalid("patience and epochs_max must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return Err(Error::invalid("Adam needs beta1, beta2 in [0, 1) and a positive epsilon"));
        }
        if self.gen_base == 0 || self.disc_base == 0 {
            return Err(Error::invalid("network widths must be positive"));
        }
        self.weights.validate()
    }

    /// Loss weights after applying the mode: PISD forces μ = 1, ν = 0.
    pub fn effective_weights(&self) -> LossWeights {
        match self.mode {
            TrainMode::Pisd => LossWeights {
                mu: 1.0,
                nu: 0.0,
                ..self.weights
            },
            _ => self.weights,
        }
    }

    pub fn gan_config(&self, height: usize, width: usize) -> GanConfig {
        GanConfig {
            height,
            width,
            generator: GeneratorConfig {
                base: self.gen_base,
                use_gr: self.use_gr,
                use_lr: self.use_lr,
                attention: self.attention.clone(),
            },
            disc_base: self.disc_base,
            dual: self.mode != TrainMode::Pisd,
            weights: self.effective_weights(),
        }
    }

    /// The fully resolved configuration, one `key = value` per line, readable
    /// by [`Self::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &self.weights;
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("lr_init", self.lr_init.to_string());
        put("lr_min", self.lr_min.to_string());
        put("lr_decay", self.lr_decay.to_string());
        put("lr_step", self.lr_step.to_string());
        put("batch", self.batch.to_string());
        put("beta1", self.beta1.to_string());
        put("beta2", self.beta2.to_string());
        put("adam_eps", self.adam_eps.to_string());
        put("patience", self.patience.to_string());
        put("epochs_max", self.epochs_max.to_string());
        put("early_stop", self.early_stop.to_string());
        put("max_steps", self.max_steps.to_string());
        put("seed", self.seed.to_string());
        put("mode", self.mode.to_string());
        put("mask_kind", self.mask_kind.to_string());
        put("mask_fraction", self.mask_fraction.to_string());
        put("mask_seed", self.mask_seed.to_string());
        put("noise_level", self.noise_level.to_string());
        put("gen_base", self.gen_base.to_string());
        put("disc_base", self.disc_base.to_string());
        put("use_gr", self.use_gr.to_string());
        put("use_lr", self.use_lr.to_string());
        put("attention", self.attention.name().to_string());
        match &self.attention {
            AttentionKind::Fca(cfg) => {
                let f: Vec<String> = cfg.freqs.iter().map(|(u, v)| format!("{u}:{v}")).collect();
                put("fca_freqs", f.join(","));
                put("reduction", cfg.reduction.to_string());
            }
            AttentionKind::Se { reduction } => put("reduction", reduction.to_string()),
            AttentionKind::None => {}
        }
        put("alpha", w.alpha.to_string());
        put("beta", w.beta.to_string());
        put("gamma", w.gamma.to_string());
        put("mu", w.mu.to_string());
        put("nu", w.nu.to_string());
        s
    }

    /// Learning rate for a zero-based epoch:
    /// `max(lr_init · lr_decay^⌊epoch / lr_step⌋, lr_min)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = (epoch / self.lr_step) as i32;
        (self.lr_init * self.lr_decay.powi(k)).max(self.lr_min)
    }
}
