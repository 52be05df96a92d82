//! Built-in deterministic continuous-control environments.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub id: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Symmetric per-dimension action limit.
    pub action_bound: Vec<f64>,
    pub max_episode_len: usize,
    /// Per-dimension observation ranges, used to place receptive fields.
    pub state_bounds: Vec<(f64, f64)>,
    /// Reward range used by the noise-reduction schedule.
    pub reward_range: (f64, f64),
}

/// Outcome of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    /// Episode over, either by termination or by hitting the step limit.
    pub done: bool,
    /// True when `done` was caused only by the step limit.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvId {
    Pendulum,
    PointReach,
}

impl FromStr for EnvId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(Self::Pendulum),
            "point-reach" => Ok(Self::PointReach),
            other => Err(Error::InvalidArgument(format!("unknown env `{other}`"))),
        }
    }
}

impl EnvId {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pendulum => "pendulum",
            Self::PointReach => "point-reach",
        }
    }

    pub fn make(self) -> Env {
        match self {
            Self::Pendulum => Env::Pendulum(Pendulum::new()),
            Self::PointReach => Env::PointReach(PointReach::new()),
        }
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

fn check_action(action: &[f64], dim: usize, step: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::Env {
            step,
            reason: format!("expected {dim} action values, got {}", action.len()),
        });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Env {
            step,
            reason: format!("non-finite action {action:?}"),
        });
    }
    Ok(())
}

/// Torque-limited pendulum swing-up; angle 0 is upright.
#[derive(Clone, Debug)]
pub struct Pendulum {
    pub theta: f64,
    pub theta_dot: f64,
    pub steps: usize,
    pub max_steps: usize,
}

impl Pendulum {
    pub const G: f64 = 10.0;
    pub const M: f64 = 1.0;
    pub const L: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;

    pub fn new() -> Self {
        Self {
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
            max_steps: 200,
        }
    }

    pub fn spec() -> EnvSpec {
        EnvSpec {
            id: "pendulum",
            state_dim: 3,
            action_dim: 1,
            action_bound: vec![Self::MAX_TORQUE],
            max_episode_len: 200,
            state_bounds: vec![(-1.0, 1.0), (-1.0, 1.0), (-Self::MAX_SPEED, Self::MAX_SPEED)],
            reward_range: (-1600.0, 0.0),
        }
    }

    pub fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    /// Kinetic plus potential energy of the uniform rod.
    pub fn energy(&self) -> f64 {
        let inertia = Self::M * Self::L * Self::L / 3.0;
        0.5 * inertia * self.theta_dot * self.theta_dot + Self::M * Self::G * Self::L / 2.0 * self.theta.cos()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_action(action, 1, self.steps)?;
        let u = action[0].clamp(-Self::MAX_TORQUE, Self::MAX_TORQUE);
        let err = wrap_angle(self.theta);
        let cost = err * err + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u;
        let accel = 3.0 * Self::G / (2.0 * Self::L) * self.theta.sin() + 3.0 / (Self::M * Self::L * Self::L) * u;
        self.theta_dot = (self.theta_dot + accel * Self::DT).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta += self.theta_dot * Self::DT;
        self.steps += 1;
        let done = self.steps >= self.max_steps;
        Ok(Step {
            state: self.observe(),
            reward: -cost,
            done,
            truncated: done,
        })
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

/// Planar double integrator that must reach a fixed goal.
#[derive(Clone, Debug)]
pub struct PointReach {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub steps: usize,
    pub max_steps: usize,
}

impl PointReach {
    pub const GOAL: [f64; 2] = [0.5, 0.5];
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 1.0;
    pub const REACH_RADIUS: f64 = 0.05;

    pub fn new() -> Self {
        Self {
            pos: [0.0; 2],
            vel: [0.0; 2],
            steps: 0,
            max_steps: 200,
        }
    }

    pub fn spec() -> EnvSpec {
        EnvSpec {
            id: "point-reach",
            state_dim: 4,
            action_dim: 2,
            action_bound: vec![1.0, 1.0],
            max_episode_len: 200,
            state_bounds: vec![
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-Self::MAX_SPEED, Self::MAX_SPEED),
                (-Self::MAX_SPEED, Self::MAX_SPEED),
            ],
            reward_range: (-300.0, 0.0),
        }
    }

    pub fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    fn distance(&self) -> f64 {
        (self.pos[0] - Self::GOAL[0]).hypot(self.pos[1] - Self::GOAL[1])
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_action(action, 2, self.steps)?;
        for i in 0..2 {
            let a = action[i].clamp(-1.0, 1.0);
            self.vel[i] = (self.vel[i] + a * Self::DT).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
            self.pos[i] = (self.pos[i] + self.vel[i] * Self::DT).clamp(-1.0, 1.0);
        }
        self.steps += 1;
        let dist = self.distance();
        let reached = dist < Self::REACH_RADIUS;
        let timeout = self.steps >= self.max_steps;
        Ok(Step {
            state: self.observe(),
            reward: -dist,
            done: reached || timeout,
            truncated: timeout && !reached,
        })
    }
}

impl Default for PointReach {
    fn default() -> Self {
        Self::new()
    }
}

/// Any built-in environment.
#[derive(Clone, Debug)]
pub enum Env {
    Pendulum(Pendulum),
    PointReach(PointReach),
}

impl Env {
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(id.parse::<EnvId>()?.make())
    }

    pub fn spec(&self) -> EnvSpec {
        match self {
            Self::Pendulum(_) => Pendulum::spec(),
            Self::PointReach(_) => PointReach::spec(),
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            Self::Pendulum(p) => p.steps,
            Self::PointReach(p) => p.steps,
        }
    }

    /// Deterministic initial state for `seed`.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Self::Pendulum(p) => {
                p.theta = rng.random_range(-PI..PI);
                p.theta_dot = rng.random_range(-1.0..1.0);
                p.steps = 0;
                p.observe()
            }
            Self::PointReach(p) => {
                p.pos = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                p.vel = [0.0; 2];
                p.steps = 0;
                p.observe()
            }
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Step> {
        match self {
            Self::Pendulum(p) => p.step(action),
            Self::PointReach(p) => p.step(action),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_seeded() {
        let mut env = Env::from_id("pendulum").unwrap();
        let a = env.reset(7);
        let b = env.reset(7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(env.steps(), 0);
        assert!((a[0] * a[0] + a[1] * a[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let mut p = Pendulum::new();
        let mut env = Env::Pendulum(p.clone());
        let s = env.step(&[0.0]).unwrap();
        assert_eq!(s.reward, 0.0);
        assert_eq!(s.state, vec![1.0, 0.0, 0.0]);
        p.theta = PI;
        let mut env = Env::Pendulum(p);
        let s = env.step(&[0.0]).unwrap();
        assert!((s.reward + PI * PI).abs() < 1e-12);
    }

    #[test]
    fn done_at_step_limit() {
        let mut env = Env::from_id("pendulum").unwrap();
        env.reset(0);
        for i in 1..=200 {
            let s = env.step(&[0.5]).unwrap();
            assert_eq!(s.done, i == 200);
        }
    }

    #[test]
    fn non_finite_action_rejected() {
        let mut env = Env::from_id("pendulum").unwrap();
        env.reset(0);
        assert!(matches!(env.step(&[f64::NAN]), Err(Error::Env { .. })));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    #[test]
    fn point_reach_terminates_at_goal() {
        let mut p = PointReach::new();
        p.pos = PointReach::GOAL;
        let mut env = Env::PointReach(p);
        let s = env.step(&[0.0, 0.0]).unwrap();
        assert!(s.done && !s.truncated);
        assert_eq!(s.reward, 0.0);
        assert!(Env::from_id("mujoco").is_err());
    }
}
