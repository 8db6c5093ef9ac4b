//! Model and training configuration, plus the plain-text `key = value`
//! config-file format used by the CLI. Unknown keys are rejected by name.

use crate::asb::AttentionNorm;
use crate::data::MotionConfig;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Where the latent-matching statistics are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentStats {
    /// One scalar mean/variance over the whole latent code.
    Global,
    /// Per-channel statistics within each latent component.
    PerChannel,
}

/// How the target time is drawn during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeMode {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Pyramid levels.
    pub levels: usize,
    pub channel_plan: Vec<usize>,
    pub vnet_hidden: usize,
    pub pam_hidden: usize,
    pub pam_taps: usize,
    pub adm_channels: usize,
    pub se_hidden: usize,
    /// Mask-noise amplitude during training.
    pub adm_alpha: f64,
    /// Occlusion salience inside the mask tanh.
    pub adm_beta: f64,
    pub attention_norm: AttentionNorm,
    pub occlusion_eps: f64,
    /// Generator blocks (one squeeze each).
    pub flow_blocks: usize,
    /// Flow steps per block.
    pub flow_steps: usize,
    pub cond_channels: usize,
    pub coupling_hidden: usize,
    /// Channels of the frozen perceptual feature net.
    pub featnet_channels: usize,
    pub latent_stats: LatentStats,
    /// Sample the auxiliary latent without gradients through its statistics.
    pub detach_latent_stats: bool,
    /// Default sampling temperature at inference.
    pub tau: f64,
}

impl ModelConfig {
    /// Full-scale defaults (3 levels, 16 flow steps).
    pub fn paper() -> Self {
        ModelConfig {
            levels: 3,
            channel_plan: vec![32, 64, 96],
            vnet_hidden: 32,
            pam_hidden: 32,
            pam_taps: 9,
            adm_channels: 16,
            se_hidden: 8,
            adm_alpha: 1e-3,
            adm_beta: 2.0,
            attention_norm: AttentionNorm::Sigmoid,
            occlusion_eps: 0.5,
            flow_blocks: 3,
            flow_steps: 16,
            cond_channels: 16,
            coupling_hidden: 64,
            featnet_channels: 16,
            latent_stats: LatentStats::Global,
            detach_latent_stats: false,
            tau: 0.3,
        }
    }

    /// Desk-scale defaults: small channel plan, 4 flow steps.
    pub fn toy() -> Self {
        ModelConfig {
            levels: 3,
            channel_plan: vec![8, 12, 16],
            vnet_hidden: 8,
            pam_hidden: 8,
            pam_taps: 9,
            adm_channels: 8,
            se_hidden: 4,
            adm_alpha: 1e-3,
            adm_beta: 2.0,
            attention_norm: AttentionNorm::Sigmoid,
            occlusion_eps: 0.5,
            flow_blocks: 3,
            flow_steps: 4,
            cond_channels: 16,
            coupling_hidden: 32,
            featnet_channels: 8,
            latent_stats: LatentStats::Global,
            detach_latent_stats: false,
            tau: 0.3,
        }
    }

    /// Input dimensions must be divisible by `2^(levels + flow_blocks)`.
    pub fn required_divisor(&self) -> usize {
        1 << (self.levels + self.flow_blocks)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_plan.len() != self.levels {
            return Err(Error::Config(format!(
                "channel_plan has {} entries but levels = {}",
                self.channel_plan.len(),
                self.levels
            )));
        }
        if self.levels < 2 {
            return Err(Error::Config("need at least 2 pyramid levels".into()));
        }
        if self.flow_blocks == 0 || self.flow_steps == 0 {
            return Err(Error::Config("generator needs blocks >= 1 and steps >= 1".into()));
        }
        if self.tau < 0.0 {
            return Err(Error::Config(format!("tau must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub patch: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// Learning rate halves every this many epochs.
    pub lr_half_epochs: usize,
    /// Iterations per (synthetic) epoch.
    pub iters_per_epoch: usize,
    /// Weight of the perceptual term.
    pub mu: f64,
    pub iterations: usize,
    pub dataset_size: usize,
    pub seed: u64,
    pub time_mode: TimeMode,
    pub motion: MotionConfig,
    pub checkpoint_every: usize,
    pub log_every: usize,
    pub out_dir: PathBuf,
}

impl TrainConfig {
    /// Full-scale settings (256x256 patches, batch 16, lr 5e-4).
    pub fn paper() -> Self {
        TrainConfig {
            model: ModelConfig::paper(),
            patch: 256,
            batch: 16,
            learning_rate: 5e-4,
            lr_half_epochs: 20,
            iters_per_epoch: 500,
            mu: 0.2,
            iterations: 32_000,
            dataset_size: 50_000,
            seed: 1,
            time_mode: TimeMode::Uniform { lo: 0.1, hi: 0.9 },
            motion: MotionConfig::toy(),
            checkpoint_every: 2000,
            log_every: 10,
            out_dir: PathBuf::from("runs/full"),
        }
    }

    /// Desk-scale settings: 64x64 patches, batch 8.
    pub fn toy() -> Self {
        TrainConfig {
            model: ModelConfig::toy(),
            patch: 64,
            batch: 8,
            learning_rate: 5e-4,
            lr_half_epochs: 20,
            iters_per_epoch: 500,
            mu: 0.2,
            iterations: 2000,
            dataset_size: 2000,
            seed: 1,
            time_mode: TimeMode::Fixed(0.5),
            motion: MotionConfig::toy(),
            checkpoint_every: 500,
            log_every: 10,
            out_dir: PathBuf::from("runs/toy"),
        }
    }

    /// Learning rate at a given iteration (halved every `lr_half_epochs`).
    pub fn lr_at(&self, iteration: usize) -> f64 {
        let epoch = iteration / self.iters_per_epoch.max(1);
        self.learning_rate / (1u64 << (epoch / self.lr_half_epochs.max(1)).min(62)) as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let div = self.model.required_divisor();
        if self.patch % div != 0 {
            return Err(Error::Config(format!(
                "patch size {} not divisible by {div} (2^(levels+flow_blocks))",
                self.patch
            )));
        }
        if self.batch == 0 || self.iterations == 0 || self.dataset_size == 0 {
            return Err(Error::Config("batch, iterations, dataset_size must be positive".into()));
        }
        if let TimeMode::Fixed(t) = self.time_mode {
            if !(0.0 < t && t < 1.0) {
                return Err(Error::Config(format!("fixed t must lie in (0,1), got {t}")));
            }
        }
        Ok(())
    }

    /// Serializes every key in the config-file format.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let _ = writeln!(s, "# model");
        let _ = writeln!(s, "model.levels = {}", m.levels);
        let plan: Vec<String> = m.channel_plan.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "model.channel_plan = {}", plan.join(","));
        let _ = writeln!(s, "model.vnet_hidden = {}", m.vnet_hidden);
        let _ = writeln!(s, "model.pam_hidden = {}", m.pam_hidden);
        let _ = writeln!(s, "model.pam_taps = {}", m.pam_taps);
        let _ = writeln!(s, "model.adm_channels = {}", m.adm_channels);
        let _ = writeln!(s, "model.se_hidden = {}", m.se_hidden);
        let _ = writeln!(s, "model.adm_alpha = {}", m.adm_alpha);
        let _ = writeln!(s, "model.adm_beta = {}", m.adm_beta);
        let _ = writeln!(
            s,
            "model.attention_norm = {}",
            match m.attention_norm {
                AttentionNorm::Sigmoid => "sigmoid",
                AttentionNorm::Softmax => "softmax",
            }
        );
        let _ = writeln!(s, "model.occlusion_eps = {}", m.occlusion_eps);
        let _ = writeln!(s, "model.flow_blocks = {}", m.flow_blocks);
        let _ = writeln!(s, "model.flow_steps = {}", m.flow_steps);
        let _ = writeln!(s, "model.cond_channels = {}", m.cond_channels);
        let _ = writeln!(s, "model.coupling_hidden = {}", m.coupling_hidden);
        let _ = writeln!(s, "model.featnet_channels = {}", m.featnet_channels);
        let _ = writeln!(
            s,
            "model.latent_stats = {}",
            match m.latent_stats {
                LatentStats::Global => "global",
                LatentStats::PerChannel => "per_channel",
            }
        );
        let _ = writeln!(s, "model.detach_latent_stats = {}", m.detach_latent_stats);
        let _ = writeln!(s, "model.tau = {}", m.tau);
        let _ = writeln!(s, "# training");
        let _ = writeln!(s, "train.patch = {}", self.patch);
        let _ = writeln!(s, "train.batch = {}", self.batch);
        let _ = writeln!(s, "train.learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "train.lr_half_epochs = {}", self.lr_half_epochs);
        let _ = writeln!(s, "train.iters_per_epoch = {}", self.iters_per_epoch);
        let _ = writeln!(s, "train.mu = {}", self.mu);
        let _ = writeln!(s, "train.iterations = {}", self.iterations);
        let _ = writeln!(s, "train.dataset_size = {}", self.dataset_size);
        let _ = writeln!(s, "train.seed = {}", self.seed);
        let _ = writeln!(
            s,
            "train.time_mode = {}",
            match self.time_mode {
                TimeMode::Fixed(t) => format!("fixed:{t}"),
                TimeMode::Uniform { lo, hi } => format!("uniform:{lo}:{hi}"),
            }
        );
        let _ = writeln!(s, "train.checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "train.log_every = {}", self.log_every);
        let _ = writeln!(s, "train.out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "# motion");
        let mo = &self.motion;
        let _ = writeln!(s, "motion.background_speed = {}", mo.background_speed);
        let _ = writeln!(s, "motion.min_shapes = {}", mo.min_shapes);
        let _ = writeln!(s, "motion.max_shapes = {}", mo.max_shapes);
        let _ = writeln!(s, "motion.shape_speed = {}", mo.shape_speed);
        let _ = writeln!(s, "motion.max_rotation = {}", mo.max_rotation);
        let _ = writeln!(s, "motion.min_size = {}", mo.min_size);
        let _ = writeln!(s, "motion.max_size = {}", mo.max_size);
        let _ = writeln!(s, "motion.edge_softness = {}", mo.edge_softness);
        let _ = writeln!(s, "motion.texture_waves = {}", mo.texture_waves);
        let _ = writeln!(s, "motion.texture_max_freq = {}", mo.texture_max_freq);
        s
    }

    /// Parses the config-file format; starts from toy defaults so files list
    /// only the keys they change. Unknown keys are an error, listed by name.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut cfg = TrainConfig::toy();
        let mut take = |k: &str| map.remove(k);

        macro_rules! parse {
            ($key:expr, $slot:expr, $ty:ty) => {
                if let Some(v) = take($key) {
                    $slot = v.parse::<$ty>().map_err(|_| {
                        Error::Config(format!("key {}: cannot parse `{v}`", $key))
                    })?;
                }
            };
        }

        parse!("model.levels", cfg.model.levels, usize);
        if let Some(v) = take("model.channel_plan") {
            cfg.model.channel_plan = v
                .split(',')
                .map(|p| {
                    p.trim().parse::<usize>().map_err(|_| {
                        Error::Config(format!("model.channel_plan: bad entry `{p}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        }
        parse!("model.vnet_hidden", cfg.model.vnet_hidden, usize);
        parse!("model.pam_hidden", cfg.model.pam_hidden, usize);
        parse!("model.pam_taps", cfg.model.pam_taps, usize);
        parse!("model.adm_channels", cfg.model.adm_channels, usize);
        parse!("model.se_hidden", cfg.model.se_hidden, usize);
        parse!("model.adm_alpha", cfg.model.adm_alpha, f64);
        parse!("model.adm_beta", cfg.model.adm_beta, f64);
        if let Some(v) = take("model.attention_norm") {
            cfg.model.attention_norm = match v.as_str() {
                "sigmoid" => AttentionNorm::Sigmoid,
                "softmax" => AttentionNorm::Softmax,
                other => {
                    return Err(Error::Config(format!(
                        "model.attention_norm: `{other}` (expected sigmoid|softmax)"
                    )))
                }
            };
        }
        parse!("model.occlusion_eps", cfg.model.occlusion_eps, f64);
        parse!("model.flow_blocks", cfg.model.flow_blocks, usize);
        parse!("model.flow_steps", cfg.model.flow_steps, usize);
        parse!("model.cond_channels", cfg.model.cond_channels, usize);
        parse!("model.coupling_hidden", cfg.model.coupling_hidden, usize);
        parse!("model.featnet_channels", cfg.model.featnet_channels, usize);
        if let Some(v) = take("model.latent_stats") {
            cfg.model.latent_stats = match v.as_str() {
                "global" => LatentStats::Global,
                "per_channel" => LatentStats::PerChannel,
                other => {
                    return Err(Error::Config(format!(
                        "model.latent_stats: `{other}` (expected global|per_channel)"
                    )))
                }
            };
        }
        if let Some(v) = take("model.detach_latent_stats") {
            cfg.model.detach_latent_stats = v.parse().map_err(|_| {
                Error::Config(format!("model.detach_latent_stats: cannot parse `{v}`"))
            })?;
        }
        parse!("model.tau", cfg.model.tau, f64);
        parse!("train.patch", cfg.patch, usize);
        parse!("train.batch", cfg.batch, usize);
        parse!("train.learning_rate", cfg.learning_rate, f64);
        parse!("train.lr_half_epochs", cfg.lr_half_epochs, usize);
        parse!("train.iters_per_epoch", cfg.iters_per_epoch, usize);
        parse!("train.mu", cfg.mu, f64);
        parse!("train.iterations", cfg.iterations, usize);
        parse!("train.dataset_size", cfg.dataset_size, usize);
        parse!("train.seed", cfg.seed, u64);
        if let Some(v) = take("train.time_mode") {
            cfg.time_mode = if let Some(rest) = v.strip_prefix("fixed:") {
                TimeMode::Fixed(rest.parse().map_err(|_| {
                    Error::Config(format!("train.time_mode: bad fixed value `{rest}`"))
                })?)
            } else if let Some(rest) = v.strip_prefix("uniform:") {
                let parts: Vec<&str> = rest.split(':').collect();
                if parts.len() != 2 {
                    return Err(Error::Config(
                        "train.time_mode: expected uniform:<lo>:<hi>".into(),
                    ));
                }
                TimeMode::Uniform {
                    lo: parts[0]
                        .parse()
                        .map_err(|_| Error::Config("train.time_mode: bad lo".into()))?,
                    hi: parts[1]
                        .parse()
                        .map_err(|_| Error::Config("train.time_mode: bad hi".into()))?,
                }
            } else {
                return Err(Error::Config(format!(
                    "train.time_mode: `{v}` (expected fixed:<t> or uniform:<lo>:<hi>)"
                )));
            };
        }
        parse!("train.checkpoint_every", cfg.checkpoint_every, usize);
        parse!("train.log_every", cfg.log_every, usize);
        if let Some(v) = take("train.out_dir") {
            cfg.out_dir = PathBuf::from(v);
        }
        parse!("motion.background_speed", cfg.motion.background_speed, f64);
        parse!("motion.min_shapes", cfg.motion.min_shapes, usize);
        parse!("motion.max_shapes", cfg.motion.max_shapes, usize);
        parse!("motion.shape_speed", cfg.motion.shape_speed, f64);
        parse!("motion.max_rotation", cfg.motion.max_rotation, f64);
        parse!("motion.min_size", cfg.motion.min_size, f64);
        parse!("motion.max_size", cfg.motion.max_size, f64);
        parse!("motion.edge_softness", cfg.motion.edge_softness, f64);
        parse!("motion.texture_waves", cfg.motion.texture_waves, usize);
        parse!("motion.texture_max_freq", cfg.motion.texture_max_freq, f64);

        if !map.is_empty() {
            let keys: Vec<String> = map.keys().cloned().collect();
            return Err(Error::Config(format!(
                "unknown config keys: {}",
                keys.join(", ")
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip_preserves_everything() {
        let mut cfg = TrainConfig::toy();
        cfg.model.flow_steps = 7;
        cfg.model.channel_plan = vec![4, 6, 8];
        cfg.mu = 0.35;
        cfg.time_mode = TimeMode::Uniform { lo: 0.2, hi: 0.8 };
        let text = cfg.to_text();
        let back = TrainConfig::from_text(&text).unwrap();
        assert_eq!(back.model.flow_steps, 7);
        assert_eq!(back.model.channel_plan, vec![4, 6, 8]);
        assert_eq!(back.mu, 0.35);
        assert_eq!(back.time_mode, TimeMode::Uniform { lo: 0.2, hi: 0.8 });
    }

    #[test]
    fn unknown_keys_listed_by_name() {
        let err = TrainConfig::from_text("train.batch = 4\nbogus.key = 1\nalso.bad = 2\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus.key"), "{msg}");
        assert!(msg.contains("also.bad"), "{msg}");
    }

    #[test]
    fn lr_schedule_halves_every_20_epochs() {
        let cfg = TrainConfig::toy();
        // Epoch = 500 iterations; epoch 40 begins at iteration 20000.
        assert_eq!(cfg.lr_at(0), 5e-4);
        assert_eq!(cfg.lr_at(500 * 19), 5e-4);
        assert_eq!(cfg.lr_at(500 * 20), 2.5e-4);
        assert_eq!(cfg.lr_at(500 * 40), 1.25e-4);
    }

    #[test]
    fn default_temperature_and_loss_weight() {
        assert_eq!(ModelConfig::toy().tau, 0.3);
        assert_eq!(ModelConfig::paper().tau, 0.3);
        assert_eq!(TrainConfig::toy().mu, 0.2);
        assert_eq!(TrainConfig::paper().mu, 0.2);
        assert_eq!(TrainConfig::paper().learning_rate, 5e-4);
        assert_eq!(TrainConfig::paper().patch, 256);
        assert_eq!(TrainConfig::paper().batch, 16);
        assert_eq!(ModelConfig::paper().flow_steps, 16);
        assert_eq!(ModelConfig::paper().flow_blocks, 3);
        assert_eq!(ModelConfig::paper().levels, 3);
        assert_eq!(ModelConfig::paper().channel_plan, vec![32, 64, 96]);
    }

    #[test]
    fn validation_catches_bad_patch() {
        let mut cfg = TrainConfig::toy();
        cfg.patch = 48; // not divisible by 2^(3+3)
        assert!(cfg.validate().is_err());
    }
}
