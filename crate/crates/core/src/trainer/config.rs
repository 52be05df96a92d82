use serde::{Deserialize, Serialize};

use crate::actor::{ActorKind, IntraLayer, LayerModes, NoisySanConfig};
use crate::diffcore::OptimizerKind;
use crate::envs::{EnvId, EnvSpec};
use crate::neurons::ClifParams;
use crate::noisegen::{NoiseConfig, NoiseMode};
use crate::{Error, Result};

/// Every knob of a training run. Step counts and buffer size are scaled to
/// desk-size runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub env: String,
    pub seeds: Vec<u64>,
    pub out_dir: Option<String>,
    pub actor: ActorKind,

    pub total_steps: usize,
    /// Uniform-random actions and no updates for this many steps.
    pub warmup_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Periodic checkpoint interval in steps; 0 writes only the final one.
    pub checkpoint_interval: usize,

    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    /// Std of the target-policy smoothing noise.
    pub target_noise: f64,
    pub noise_clip: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub policy_delay: usize,
    pub buffer_capacity: usize,

    pub hidden: usize,
    pub critic_hidden: usize,
    pub timesteps: usize,
    pub p_in: usize,
    pub p_out: usize,
    pub clif: ClifParams,
    pub intra_layer: IntraLayer,

    pub beta: f64,
    pub noise_mode: NoiseMode,
    /// Noise block length `N` in environment steps; defaults to the env's
    /// episode limit.
    pub episode_noise_len: Option<usize>,
    pub layer_modes: LayerModes,
    pub charge_noise: bool,
    pub transmission_noise: bool,

    pub k0: f64,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,

    /// Gaussian action-noise std for the DAN actor, relative to the bound.
    pub dan_explore_std: f64,

    pub optimizer: OptimizerKind,
    /// Include `−Q1` in the actor loss. Disabling it isolates the
    /// noise-reduction gradient.
    pub actor_q_loss: bool,
    /// Pins `k` instead of deriving it from evaluation returns.
    pub fixed_k: Option<f64>,
    /// Write real elapsed time into the `wall_ms` metrics column; when false
    /// the column is 0 so metrics files are byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: "pendulum".into(),
            seeds: vec![0],
            out_dir: None,
            actor: ActorKind::NoisySan,
            total_steps: 100_000,
            warmup_steps: 10_000,
            eval_interval: 10_000,
            eval_episodes: 10,
            checkpoint_interval: 50_000,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            target_noise: 0.2,
            noise_clip: 0.5,
            tau: 0.005,
            batch_size: 100,
            policy_delay: 2,
            buffer_capacity: 100_000,
            hidden: 256,
            critic_hidden: 256,
            timesteps: 5,
            p_in: 10,
            p_out: 10,
            clif: ClifParams::default(),
            intra_layer: IntraLayer::Population,
            beta: 1.0,
            noise_mode: NoiseMode::Full,
            episode_noise_len: None,
            layer_modes: LayerModes::default(),
            charge_noise: true,
            transmission_noise: true,
            k0: 1.0,
            r_min: None,
            r_max: None,
            dan_explore_std: 0.1,
            optimizer: OptimizerKind::Adam,
            actor_q_loss: true,
            fixed_k: None,
            record_wall_time: false,
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

impl TrainConfig {
    pub fn env_id(&self) -> Result<EnvId> {
        self.env
            .parse()
            .map_err(|_| bad("env", format!("unknown env `{}`", self.env)))
    }

    pub fn validate(&self) -> Result<()> {
        self.env_id()?;
        let positive = [
            ("eval_interval", self.eval_interval),
            ("eval_episodes", self.eval_episodes),
            ("batch_size", self.batch_size),
            ("policy_delay", self.policy_delay),
            ("buffer_capacity", self.buffer_capacity),
            ("hidden", self.hidden),
            ("critic_hidden", self.critic_hidden),
            ("timesteps", self.timesteps),
            ("p_in", self.p_in),
            ("p_out", self.p_out),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(bad(key, "must be >= 1"));
            }
        }
        if self.episode_noise_len == Some(0) {
            return Err(bad("episode_noise_len", "must be >= 1"));
        }
        if !(0.0..=3.0).contains(&self.beta) {
            return Err(bad("beta", "must lie in [0, 3]"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(bad("tau", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(bad("gamma", "must lie in [0, 1]"));
        }
        for (key, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("target_noise", self.target_noise),
            ("noise_clip", self.noise_clip),
            ("k0", self.k0),
            ("dan_explore_std", self.dan_explore_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(key, "must be finite and >= 0"));
            }
        }
        self.clif.validate().map_err(|e| bad("clif", e.to_string()))?;
        let (lo, hi) = self.reward_range()?;
        if hi <= lo {
            return Err(bad("r_max", format!("r_max ({hi}) must exceed r_min ({lo})")));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "at least one seed is required"));
        }
        Ok(())
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        Ok(self.env_id()?.make().spec())
    }

    /// `(R_min, R_max)`, falling back to the environment's range.
    pub fn reward_range(&self) -> Result<(f64, f64)> {
        let (lo, hi) = self.env_spec()?.reward_range;
        Ok((self.r_min.unwrap_or(lo), self.r_max.unwrap_or(hi)))
    }

    pub fn actor_config(&self, spec: &EnvSpec) -> NoisySanConfig {
        NoisySanConfig {
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            hidden: self.hidden,
            p_in: self.p_in,
            p_out: self.p_out,
            timesteps: self.timesteps,
            clif: self.clif,
            layer_modes: self.layer_modes,
            charge_noise: self.charge_noise,
            transmission_noise: self.transmission_noise,
            intra_layer: self.intra_layer,
        }
    }

    pub fn noise_config(&self, spec: &EnvSpec) -> NoiseConfig {
        NoiseConfig {
            beta: self.beta,
            episode_len: self.episode_noise_len.unwrap_or(spec.max_episode_len),
            timesteps: self.timesteps,
            mode: self.noise_mode,
        }
    }
}
