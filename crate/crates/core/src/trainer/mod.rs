//! TD3 training of noisy spiking (or plain MLP) actors.

mod buffer;
mod config;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use buffer::{ReplayBuffer, Transition};
pub use config::TrainConfig;

use crate::actor::{ActorKind, ActorNet, Dan, ForwardMode, NoiseRecord, NoisySan, SiteKind};
use crate::cli::{checkpoint, metrics};
use crate::critic::Critic;
use crate::diffcore::{Optimizer, ParamStore, Tape, Tensor};
use crate::envs::{Env, EnvSpec};
use crate::noisegen::{begin_episode, EpisodeNoise};
use crate::{Error, Result};

pub use metrics::MetricsRow;

/// Noise-reduction schedule state: `k = clamp(k0·(R − R_min)/(R_max − R_min), 0, k0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseReduction {
    pub k: f64,
    pub k0: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub last_eval: Option<f64>,
}

impl NoiseReduction {
    /// Starts at `k = 0` until the first evaluation.
    pub fn new(k0: f64, r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_max > r_min) {
            return Err(Error::Config {
                key: "r_max".into(),
                reason: format!("r_max ({r_max}) must exceed r_min ({r_min})"),
            });
        }
        Ok(Self {
            k: 0.0,
            k0,
            r_min,
            r_max,
            last_eval: None,
        })
    }

    pub fn update_k(&mut self, r_eval: f64) -> f64 {
        self.last_eval = Some(r_eval);
        self.k = update_k(self.k0, r_eval, self.r_min, self.r_max);
        self.k
    }
}

/// `clamp(k0·(r − r_min)/(r_max − r_min), 0, k0)`.
pub fn update_k(k0: f64, r_eval: f64, r_min: f64, r_max: f64) -> f64 {
    (k0 * (r_eval - r_min) / (r_max - r_min)).clamp(0.0, k0)
}

/// `target ← τ·online + (1 − τ)·target`, tensor by tensor.
pub fn soft_update(target: &mut ParamStore, online: &ParamStore, tau: f64) -> Result<()> {
    if !target.same_layout(online) {
        return Err(Error::InvalidArgument(
            "soft update between different parameter layouts".into(),
        ));
    }
    for (t, o) in target.tensors_mut().iter_mut().zip(online.tensors()) {
        for (t, &o) in t.data_mut().iter_mut().zip(o.data()) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    Ok(())
}

/// Clipped Gaussian used for target-policy smoothing.
pub fn smoothing_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64, clip: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    (0..n).map(|_| normal.sample(rng).clamp(-clip, clip)).collect()
}

/// `y = r + γ·(1 − terminal)·min(Q1', Q2')`.
pub fn td_targets(rewards: &[f64], terminal: &[bool], q1: &[f64], q2: &[f64], gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(terminal)
        .zip(q1.iter().zip(q2))
        .map(|((&r, &d), (&a, &b))| r + if d { 0.0 } else { gamma * a.min(b) })
        .collect()
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    rows.flat_map(|r| r.iter().copied()).collect()
}

/// One critic step on `batch`. Returns the summed MSE of both heads.
pub fn critic_update<R: Rng + ?Sized>(
    batch: &[&Transition],
    actor_target: &ActorNet,
    critic: &mut Critic,
    critic_target: &Critic,
    opt: &mut Optimizer,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let b = batch.len();
    let next_states = stack(batch.iter().map(|t| &*t.next_state));
    let mut next_actions = actor_target.act_deterministic(&next_states)?;
    let bound = actor_target.action_bound().to_vec();
    let noise = smoothing_noise(rng, next_actions.len(), config.target_noise, config.noise_clip);
    for (i, (a, n)) in next_actions.iter_mut().zip(noise).enumerate() {
        let lim = bound[i % bound.len()];
        *a = (*a + n).clamp(-lim, lim);
    }
    let (q1n, q2n) = critic_target.q_values(&next_states, &next_actions)?;
    let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    let terminal: Vec<bool> = batch.iter().map(|t| t.terminal).collect();
    let y = td_targets(&rewards, &terminal, &q1n, &q2n, config.gamma);

    let mut tape = Tape::new();
    let vars = tape.bind(critic.params(), true);
    let s = tape.constant(Tensor::matrix(
        b,
        critic.state_dim(),
        stack(batch.iter().map(|t| &*t.state)),
    ));
    let a = tape.constant(Tensor::matrix(
        b,
        critic.action_dim(),
        stack(batch.iter().map(|t| &*t.action)),
    ));
    let y = tape.constant(Tensor::matrix(b, 1, y));
    let (q1, q2) = critic.q_values_tape(&mut tape, &vars, s, a)?;
    let mut loss = None;
    for q in [q1, q2] {
        let d = tape.sub(q, y)?;
        let sq = tape.square(d);
        let m = tape.mean(sq);
        loss = Some(match loss {
            Some(acc) => tape.add(acc, m)?,
            None => m,
        });
    }
    let loss = loss.expect("two heads");
    tape.backward(loss)?;
    let grads = tape.grads_of(&vars);
    opt.step(critic.params_mut(), &grads, &[]);
    Ok(tape.value(loss).item())
}

/// One actor step: `−mean Q1(s, π(s; ε_stored))` plus the noise-reduction
/// term with strength `k`. Returns the loss, or 0 when it is empty.
pub fn actor_update(
    batch: &[&Transition],
    actor: &mut ActorNet,
    critic: &Critic,
    opt: &mut Optimizer,
    k: f64,
    q_loss: bool,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let b = batch.len();
    let records: Option<Vec<&NoiseRecord>> = if actor.noise_sites() > 0 {
        let recs = batch
            .iter()
            .map(|t| t.noise.as_ref())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::MissingNoise("transition without a noise record".into()))?;
        Some(recs)
    } else {
        None
    };

    let mut tape = Tape::new();
    let vars = tape.bind(actor.params(), true);
    let mut loss = None;
    if q_loss {
        let s = tape.constant(Tensor::matrix(
            b,
            actor.state_dim(),
            stack(batch.iter().map(|t| &*t.state)),
        ));
        let a = actor.forward_tape(&mut tape, &vars, s, records.as_deref())?;
        let critic_vars = tape.bind(critic.params(), false);
        let q1 = critic.q1_tape(&mut tape, &critic_vars, s, a)?;
        let m = tape.mean(q1);
        loss = Some(tape.scale(m, -1.0));
    }
    if let ActorNet::NoisySan(san) = &*actor {
        if let Some(term) = san.reduction_term(&mut tape, &vars, k)? {
            loss = Some(match loss {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
    }
    let Some(loss) = loss else { return Ok(0.0) };
    tape.backward(loss)?;
    let grads = tape.grads_of(&vars);
    let frozen = actor.frozen_mask();
    opt.step(actor.params_mut(), &grads, &frozen);
    actor.clamp_params();
    Ok(tape.value(loss).item())
}

/// Deterministic evaluation: mean and population std of episode returns.
/// Each episode starts from a seed drawn from `rng`.
pub fn evaluate<R: RngCore + ?Sized>(
    actor: &ActorNet,
    env: &mut Env,
    episodes: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("need at least one evaluation episode".into()));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = env.reset(rng.next_u64());
        let mut total = 0.0;
        loop {
            let action = actor.act_deterministic(&state)?;
            let step = env.step(&action)?;
            total += step.reward;
            state = step.state;
            if step.done {
                break;
            }
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Builds a freshly initialised actor for `config` on `spec`.
pub fn build_actor<R: Rng + ?Sized>(config: &TrainConfig, spec: &EnvSpec, rng: &mut R) -> Result<ActorNet> {
    Ok(match config.actor {
        ActorKind::NoisySan => ActorNet::NoisySan(NoisySan::new(
            config.actor_config(spec),
            &spec.state_bounds,
            &spec.action_bound,
            rng,
        )?),
        ActorKind::Dan => ActorNet::Dan(Dan::new(spec.state_dim, &spec.action_bound, config.hidden, rng)),
    })
}

/// Mean decoder σ and mean spiking-layer σ of an actor (0 where absent).
pub fn sigma_means(actor: &ActorNet) -> (f64, f64) {
    let ActorNet::NoisySan(san) = actor else {
        return (0.0, 0.0);
    };
    let mean = |vals: Vec<f64>| {
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let nsn = san
        .sigma(3, SiteKind::Charge)
        .map(|t| t.data().to_vec())
        .unwrap_or_default();
    let mut sn = Vec::new();
    for layer in 0..3 {
        for kind in [SiteKind::Charge, SiteKind::Transmission] {
            if let Some(t) = san.sigma(layer, kind) {
                sn.extend_from_slice(t.data());
            }
        }
    }
    (mean(nsn), mean(sn))
}

/// A single-seed TD3 run that can be advanced one environment step at a time.
pub struct Trainer {
    config: TrainConfig,
    spec: EnvSpec,
    env: Env,
    eval_env: Env,
    pub actor: ActorNet,
    pub actor_target: ActorNet,
    pub critic: Critic,
    pub critic_target: Critic,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    pub reduction: NoiseReduction,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    step: usize,
    updates: u64,
    episodes_done: usize,
    state: Option<Vec<f64>>,
    episode_step: usize,
    noise: Option<EpisodeNoise>,
    metrics: Vec<MetricsRow>,
    started: Instant,
}

impl Trainer {
    pub fn new(config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spec = config.env_spec()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = build_actor(&config, &spec, &mut rng)?;
        let critic = Critic::new(spec.state_dim, spec.action_dim, config.critic_hidden, &mut rng);
        let eval_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
        let (r_min, r_max) = config.reward_range()?;
        let mut reduction = NoiseReduction::new(config.k0, r_min, r_max)?;
        if let Some(k) = config.fixed_k {
            reduction.k = k;
        }
        let env = config.env_id()?.make();
        Ok(Self {
            actor_opt: Optimizer::new(config.optimizer, config.actor_lr, actor.params()),
            critic_opt: Optimizer::new(config.optimizer, config.critic_lr, critic.params()),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            reduction,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            eval_env: env.clone(),
            env,
            spec,
            rng,
            eval_rng,
            step: 0,
            updates: 0,
            episodes_done: 0,
            state: None,
            episode_step: 0,
            noise: None,
            metrics: Vec::new(),
            started: Instant::now(),
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Environment steps taken so far.
    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    fn begin_episode(&mut self) -> Result<()> {
        let state = self.env.reset(self.rng.next_u64());
        self.noise = match self.actor.noise_sites() {
            0 => None,
            sites => Some(begin_episode(
                self.config.noise_config(&self.spec),
                sites,
                &mut self.rng,
            )?),
        };
        self.state = Some(state);
        self.episode_step = 0;
        Ok(())
    }

    fn choose_action(&mut self, state: &[f64]) -> Result<(Vec<f64>, Option<NoiseRecord>)> {
        let bound = self.spec.action_bound.clone();
        if self.step < self.config.warmup_steps {
            let action = bound.iter().map(|&b| self.rng.random_range(-b..=b)).collect();
            let record = match &mut self.noise {
                Some(noise) => Some(NoiseRecord::new(noise.record(self.episode_step)?)),
                None => None,
            };
            return Ok((action, record));
        }
        match &self.actor {
            ActorNet::NoisySan(san) => match &mut self.noise {
                Some(noise) => san.act(
                    state,
                    ForwardMode::Explore {
                        noise,
                        step: self.episode_step,
                    },
                ),
                None => san.act(state, ForwardMode::Deterministic),
            },
            ActorNet::Dan(dan) => {
                let mut action = crate::actor::forward_dan(state, dan)?;
                for (a, &b) in action.iter_mut().zip(&bound) {
                    let n = smoothing_noise(&mut self.rng, 1, self.config.dan_explore_std * b, f64::INFINITY)[0];
                    *a = (*a + n).clamp(-b, b);
                }
                Ok((action, None))
            }
        }
    }

    /// One environment step followed by the TD3 updates due at this step.
    pub fn step_env(&mut self) -> Result<()> {
        if self.state.is_none() {
            self.begin_episode()?;
        }
        let state = self.state.take().expect("episode started");
        let (action, noise) = self.choose_action(&state)?;
        let out = self.env.step(&action)?;
        self.buffer.push(Transition {
            state: state.into(),
            action: action.into(),
            reward: out.reward,
            next_state: out.state.clone().into(),
            terminal: out.done && !out.truncated,
            noise,
        });
        self.step += 1;
        self.episode_step += 1;
        if out.done {
            self.episodes_done += 1;
        } else {
            self.state = Some(out.state);
        }
        if self.step > self.config.warmup_steps {
            self.train_once()?;
        }
        Ok(())
    }

    fn train_once(&mut self) -> Result<()> {
        let batch = self.buffer.sample(self.config.batch_size, &mut self.rng);
        critic_update(
            &batch,
            &self.actor_target,
            &mut self.critic,
            &self.critic_target,
            &mut self.critic_opt,
            &self.config,
            &mut self.rng,
        )?;
        self.updates += 1;
        if self.updates % self.config.policy_delay as u64 == 0 {
            let k = self.config.fixed_k.unwrap_or(self.reduction.k);
            actor_update(
                &batch,
                &mut self.actor,
                &self.critic,
                &mut self.actor_opt,
                k,
                self.config.actor_q_loss,
            )?;
            soft_update(self.critic_target.params_mut(), self.critic.params(), self.config.tau)?;
            soft_update(self.actor_target.params_mut(), self.actor.params(), self.config.tau)?;
        }
        Ok(())
    }

    /// Runs a deterministic evaluation, updates `k` (except at step 0 or when
    /// pinned) and appends a metrics row.
    pub fn evaluate(&mut self) -> Result<MetricsRow> {
        let (mean, std) = evaluate(
            &self.actor,
            &mut self.eval_env,
            self.config.eval_episodes,
            &mut self.eval_rng,
        )?;
        if self.step > 0 && self.config.fixed_k.is_none() {
            self.reduction.update_k(mean);
        }
        let (sigma_nsn_mean, sigma_sn_mean) = sigma_means(&self.actor);
        let row = MetricsRow {
            step: self.step,
            eval_mean: mean,
            eval_std: std,
            k: self.reduction.k,
            sigma_nsn_mean,
            sigma_sn_mean,
            episodes_done: self.episodes_done,
            wall_ms: if self.config.record_wall_time {
                self.started.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        self.metrics.push(row.clone());
        Ok(row)
    }

    /// Writes the current actor as a checkpoint file.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        checkpoint::save_actor(path, &self.actor)
    }

    /// Full run: evaluations at step 0, every `eval_interval` steps and at the
    /// end; metrics and checkpoints go to `out` when given.
    pub fn run(&mut self, out: Option<&Path>) -> Result<Vec<MetricsRow>> {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
        }
        let write_metrics = |rows: &[MetricsRow]| -> Result<()> {
            if let Some(dir) = out {
                metrics::write_csv(&dir.join("metrics.csv"), rows)?;
            }
            Ok(())
        };
        self.evaluate()?;
        write_metrics(&self.metrics)?;
        while self.step < self.config.total_steps {
            self.step_env()?;
            if self.step % self.config.eval_interval == 0 || self.step == self.config.total_steps {
                let row = self.evaluate()?;
                log::info!(
                    "step {} eval {:.2} ± {:.2} k {:.3}",
                    row.step,
                    row.eval_mean,
                    row.eval_std,
                    row.k
                );
                write_metrics(&self.metrics)?;
            }
            if let Some(dir) = out {
                let every = self.config.checkpoint_interval;
                if every > 0 && self.step % every == 0 && self.step < self.config.total_steps {
                    self.save_checkpoint(&dir.join(format!("actor_step{}.nsan", self.step)))?;
                }
            }
        }
        if let Some(dir) = out {
            self.save_checkpoint(&dir.join("actor_final.nsan"))?;
        }
        Ok(self.metrics.clone())
    }
}
