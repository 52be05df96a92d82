//! Discrete-time neuron dynamics recorded on a [`Tape`].
//!
//! A CLIF neuron keeps a decaying synaptic current `C` and a membrane voltage
//! `V`. One step is
//!
//! ```text
//! C_t = α_C·C_{t−1} + X_t
//! H_t = α_V·V_{t−1} + C_t (+ σ_v⊙ε_v)
//! S_t = Θ(H_t − V_th)
//! V_t = H_t·(1 − S_t) + V_reset·S_t
//! ```
//!
//! and the noisy variant additionally transmits `S̃_t = S_t + σ_s⊙ε_s`
//! downstream. Integrated neurons accumulate `V_t = V_{t−1} + X_t (+ σ_v⊙ε_v)`
//! without firing.

use serde::{Deserialize, Serialize};

use crate::diffcore::{SpikeFn, Tape, Tensor, Var};
use crate::{Error, Result};

/// Constants of a CLIF layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClifParams {
    pub alpha_c: f64,
    pub alpha_v: f64,
    pub v_th: f64,
    pub v_reset: f64,
    /// Half-width of the rectangular surrogate window.
    pub window: f64,
    pub spike_fn: SpikeFn,
}

impl Default for ClifParams {
    fn default() -> Self {
        Self {
            alpha_c: 0.5,
            alpha_v: 0.75,
            v_th: 0.5,
            v_reset: 0.0,
            window: 0.5,
            spike_fn: SpikeFn::Heaviside,
        }
    }
}

impl ClifParams {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.alpha_c) {
            return Err(Error::InvalidArgument(format!(
                "alpha_c = {} outside [0, 1]",
                self.alpha_c
            )));
        }
        if !unit.contains(&self.alpha_v) {
            return Err(Error::InvalidArgument(format!(
                "alpha_v = {} outside [0, 1]",
                self.alpha_v
            )));
        }
        if self.window <= 0.0 {
            return Err(Error::InvalidArgument(format!("window = {} must be > 0", self.window)));
        }
        Ok(())
    }
}

/// Per-layer state across a batch: voltage, current and last spikes.
#[derive(Clone, Copy, Debug)]
pub struct LayerState {
    pub v: Var,
    pub c: Var,
    pub s: Var,
}

impl LayerState {
    /// `V = V_reset`, `C = 0`, `S = 0`.
    pub fn reset(tape: &mut Tape, batch: usize, width: usize, params: &ClifParams) -> Self {
        let shape = [batch, width];
        Self {
            v: tape.constant(Tensor::full(&shape, params.v_reset)),
            c: tape.constant(Tensor::zeros(&shape)),
            s: tape.constant(Tensor::zeros(&shape)),
        }
    }
}

/// A noise injection: per-neuron scale `sigma: [L]` and the matching noise
/// sample `eps: [B×L]`.
#[derive(Clone, Copy, Debug)]
pub struct NoiseDrive {
    pub sigma: Var,
    pub eps: Option<Var>,
}

impl NoiseDrive {
    pub fn new(sigma: Var, eps: Var) -> Self {
        Self { sigma, eps: Some(eps) }
    }

    /// `x + σ⊙ε`.
    fn apply(&self, tape: &mut Tape, x: Var, what: &str) -> Result<Var> {
        let eps = self.eps.ok_or_else(|| Error::MissingNoise(what.to_string()))?;
        tape.add_noise(x, eps, self.sigma)
    }
}

fn check_input(tape: &Tape, state: &LayerState, x: Var) -> Result<()> {
    if tape.shape(x) != tape.shape(state.v) {
        return Err(Error::Shape {
            op: "clif_step",
            lhs: tape.shape(state.v).to_vec(),
            rhs: tape.shape(x).to_vec(),
        });
    }
    Ok(())
}

fn fire_and_reset(tape: &mut Tape, h: Var, c: Var, params: &ClifParams) -> Result<LayerState> {
    let s = tape.spike(h, params.v_th, params.window, params.spike_fn);
    let v = tape.hard_reset(h, s, params.v_reset)?;
    Ok(LayerState { v, c, s })
}

/// Noiseless CLIF step. Returns the new state; the spikes are `state.s`.
pub fn clif_step(tape: &mut Tape, state: &LayerState, x: Var, params: &ClifParams) -> Result<LayerState> {
    check_input(tape, state, x)?;
    let c = tape.axpby(state.c, params.alpha_c, x, 1.0)?;
    let h = tape.axpby(state.v, params.alpha_v, c, 1.0)?;
    fire_and_reset(tape, h, c, params)
}

/// Noisy CLIF step.
///
/// Returns `(state', S̃)` where `state'.s` holds the binary spikes and `S̃` is
/// the transmitted signal. Without a transmission drive `S̃` is `state'.s`.
pub fn noisy_clif_step(
    tape: &mut Tape,
    state: &LayerState,
    x: Var,
    params: &ClifParams,
    charge: Option<NoiseDrive>,
    transmission: Option<NoiseDrive>,
) -> Result<(LayerState, Var)> {
    check_input(tape, state, x)?;
    let c = tape.axpby(state.c, params.alpha_c, x, 1.0)?;
    let mut h = tape.axpby(state.v, params.alpha_v, c, 1.0)?;
    if let Some(drive) = charge {
        h = drive.apply(tape, h, "charge")?;
    }
    let next = fire_and_reset(tape, h, c, params)?;
    let transmitted = match transmission {
        Some(drive) => drive.apply(tape, next.s, "transmission")?,
        None => next.s,
    };
    Ok((next, transmitted))
}

/// Noisy integrated (non-spiking) neuron step: `V + X (+ σ_v⊙ε_v)`.
pub fn integ_step(tape: &mut Tape, v: Var, x: Var, charge: Option<NoiseDrive>) -> Result<Var> {
    let next = tape.add(v, x)?;
    match charge {
        Some(drive) => drive.apply(tape, next, "integrated charge"),
        None => Ok(next),
    }
}

/// Initial noise scale for a layer of `width` neurons: `0.5 / √width`.
pub fn initial_sigma(width: usize) -> f64 {
    0.5 / (width as f64).sqrt()
}
