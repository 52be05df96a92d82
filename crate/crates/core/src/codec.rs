//! Population coding of states into spike trains and of spike trains back
//! into continuous actions.
//!
//! Each state dimension is covered by `P_in` Gaussian receptive fields. The
//! stimulation `A = exp(−(s − μ)² / (2σ²))` is fed as a constant current into
//! non-leaky integrate-and-fire neurons (threshold 1, subtract reset), which
//! yields roughly `A·T` spikes over `T` steps.
//!
//! On the output side, each action dimension owns a population of `P_out`
//! spiking neurons whose (noisy) transmissions are weighted into one
//! integrated neuron; the action is `tanh(V_T)·bound`.

use crate::diffcore::{SpikeFn, Tape, Tensor, Var};
use crate::neurons::{integ_step, NoiseDrive};
use crate::{Error, Result};

/// Threshold of the encoding neurons.
pub const ENCODER_THRESHOLD: f64 = 1.0;

/// Lower bound applied to receptive-field widths after each update.
pub const MIN_RF_WIDTH: f64 = 1e-3;

/// Receptive-field centres and widths, both `[N_S × P_in]`.
pub fn init_encoder(bounds: &[(f64, f64)], pop: usize) -> Result<(Tensor, Tensor)> {
    if pop == 0 {
        return Err(Error::InvalidArgument("population size must be >= 1".into()));
    }
    let mut mu = Vec::with_capacity(bounds.len() * pop);
    let mut sigma = Vec::with_capacity(bounds.len() * pop);
    for &(lo, hi) in bounds {
        if !lo.is_finite() || !hi.is_finite() || hi < lo {
            return Err(Error::InvalidArgument(format!("bad state bounds [{lo}, {hi}]")));
        }
        let (lo, hi) = if hi - lo == 0.0 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let width = hi - lo;
        for j in 0..pop {
            let centre = if pop == 1 {
                0.5 * (lo + hi)
            } else {
                lo + width * j as f64 / (pop - 1) as f64
            };
            mu.push(centre);
            sigma.push(width / pop as f64);
        }
    }
    let dims = bounds.len();
    Ok((Tensor::matrix(dims, pop, mu), Tensor::matrix(dims, pop, sigma)))
}

/// Encodes `state: [B×N_S]` into `T` binary spike tensors of shape
/// `[B×(N_S·P_in)]`.
pub fn encode(
    tape: &mut Tape,
    state: Var,
    mu: Var,
    sigma: Var,
    pop: usize,
    timesteps: usize,
    window: f64,
    spike_fn: SpikeFn,
) -> Result<Vec<Var>> {
    if timesteps == 0 {
        return Err(Error::InvalidArgument("timesteps must be >= 1".into()));
    }
    let stim = tape.gaussian_rf(state, mu, sigma, pop)?;
    let shape = tape.shape(stim).to_vec();
    let mut v = tape.constant(Tensor::zeros(&shape));
    let mut spikes = Vec::with_capacity(timesteps);
    for _ in 0..timesteps {
        let h = tape.add(v, stim)?;
        let s = tape.spike(h, ENCODER_THRESHOLD, window, spike_fn);
        v = tape.sub(h, s)?;
        spikes.push(s);
    }
    Ok(spikes)
}

/// Decoder weights and noise for `groups` action dimensions.
#[derive(Clone, Copy, Debug)]
pub struct Decoder {
    /// `[N_A·P_out]`, population-major.
    pub weight: Var,
    /// `[N_A]`.
    pub bias: Var,
    /// `[N_A]` noise scale of the integrated neurons, if noisy.
    pub sigma: Option<Var>,
    pub groups: usize,
}

/// Integrates transmitted output spikes into actions in `[−bound, bound]`.
///
/// `noise[t]` is the `[B×N_A]` noise sample for step `t`; it must be present
/// for every step when the decoder is noisy.
pub fn decode(tape: &mut Tape, spikes: &[Var], decoder: &Decoder, noise: Option<&[Var]>, bound: &[f64]) -> Result<Var> {
    let first = *spikes
        .first()
        .ok_or_else(|| Error::InvalidArgument("decoder needs at least one timestep".into()))?;
    let (rows, cols) = match tape.shape(first) {
        &[r, c] => (r, c),
        other => {
            return Err(Error::Shape {
                op: "decode",
                lhs: other.to_vec(),
                rhs: vec![],
            })
        }
    };
    if decoder.groups == 0 || cols % decoder.groups != 0 || bound.len() != decoder.groups {
        return Err(Error::Shape {
            op: "decode",
            lhs: vec![rows, cols],
            rhs: vec![decoder.groups, bound.len()],
        });
    }
    let mut v = tape.constant(Tensor::zeros(&[rows, decoder.groups]));
    for (t, &s) in spikes.iter().enumerate() {
        let weighted = tape.group_dot(s, decoder.weight, decoder.groups)?;
        let x = tape.add_row(weighted, decoder.bias)?;
        let drive = match decoder.sigma {
            Some(sigma) => {
                let eps = noise.and_then(|n| n.get(t).copied());
                if eps.is_none() {
                    return Err(Error::MissingNoise("decoder".into()));
                }
                Some(NoiseDrive { sigma, eps })
            }
            None => None,
        };
        v = integ_step(tape, v, x, drive)?;
    }
    let squashed = tape.tanh(v);
    let bound = tape.constant(Tensor::vector(bound.to_vec()));
    tape.mul_row(squashed, bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spike_counts(state: f64, mu: f64, sigma: f64, t: usize) -> Vec<f64> {
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::matrix(1, 1, vec![state]));
        let m = tape.param(Tensor::vector(vec![mu]));
        let g = tape.param(Tensor::vector(vec![sigma]));
        encode(&mut tape, s, m, g, 1, t, 0.5, SpikeFn::Heaviside)
            .unwrap()
            .into_iter()
            .map(|v| tape.value(v).item())
            .collect()
    }

    #[test]
    fn centred_state_fires_every_step() {
        assert_eq!(spike_counts(0.3, 0.3, 0.2, 5), vec![1.0; 5]);
    }

    #[test]
    fn one_sigma_away_fires_three_of_five() {
        // A = exp(−1/2) ≈ 0.6065: cumulative 0.61, 1.21*, 0.82, 1.43*, 1.03*.
        let s = spike_counts(0.5, 0.3, 0.2, 5);
        assert_eq!(s, vec![0.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_stimulation_is_silent() {
        assert_eq!(spike_counts(100.0, 0.0, 0.1, 5), vec![0.0; 5]);
    }

    #[test]
    fn even_spacing() {
        let (mu, sigma) = init_encoder(&[(-1.0, 1.0)], 10).unwrap();
        for (j, &m) in mu.data().iter().enumerate() {
            assert!((m - (-1.0 + 2.0 * j as f64 / 9.0)).abs() < 1e-15);
        }
        assert!(sigma.data().iter().all(|&s| (s - 0.2).abs() < 1e-15));

        let (mu, _) = init_encoder(&[(2.0, 4.0)], 1).unwrap();
        assert_eq!(mu.data(), &[3.0]);

        let (mu, sigma) = init_encoder(&[(0.0, 0.0)], 2).unwrap();
        assert_eq!(mu.data(), &[-0.5, 0.5]);
        assert_eq!(sigma.data(), &[0.5, 0.5]);
    }

    fn decoder(tape: &mut Tape, w: f64, pop: usize, groups: usize, sigma: Option<f64>) -> Decoder {
        Decoder {
            weight: tape.param(Tensor::vector(vec![w; pop * groups])),
            bias: tape.param(Tensor::vector(vec![0.0; groups])),
            sigma: sigma.map(|s| tape.param(Tensor::vector(vec![s; groups]))),
            groups,
        }
    }

    #[test]
    fn decode_zero_spikes() {
        let mut tape = Tape::new();
        let dec = decoder(&mut tape, 0.7, 3, 1, None);
        let spikes: Vec<Var> = (0..5).map(|_| tape.constant(Tensor::zeros(&[1, 3]))).collect();
        let a = decode(&mut tape, &spikes, &dec, None, &[2.0]).unwrap();
        assert_eq!(tape.value(a).item(), 0.0);
    }

    #[test]
    fn decode_full_firing() {
        let mut tape = Tape::new();
        let dec = decoder(&mut tape, 1.0, 3, 1, None);
        let spikes: Vec<Var> = (0..5)
            .map(|_| tape.constant(Tensor::matrix(1, 3, vec![1.0, 0.0, 0.0])))
            .collect();
        let a = decode(&mut tape, &spikes, &dec, None, &[2.0]).unwrap();
        assert!((tape.value(a).item() - 5f64.tanh() * 2.0).abs() < 1e-15);
    }

    #[test]
    fn decode_noise_accumulates() {
        let mut tape = Tape::new();
        let dec = decoder(&mut tape, 1.0, 3, 1, Some(0.1));
        let spikes: Vec<Var> = (0..5).map(|_| tape.constant(Tensor::zeros(&[1, 3]))).collect();
        let eps: Vec<Var> = (0..5).map(|_| tape.constant(Tensor::matrix(1, 1, vec![1.0]))).collect();
        let a = decode(&mut tape, &spikes, &dec, Some(&eps), &[1.5]).unwrap();
        assert!((tape.value(a).item() - 0.5f64.tanh() * 1.5).abs() < 1e-12);
        assert!(matches!(
            decode(&mut tape, &spikes, &dec, None, &[1.5]),
            Err(Error::MissingNoise(_))
        ));
    }

    #[test]
    fn decode_population_mismatch() {
        let mut tape = Tape::new();
        let dec = decoder(&mut tape, 1.0, 3, 2, None);
        let spikes = vec![tape.constant(Tensor::zeros(&[1, 5]))];
        assert!(decode(&mut tape, &spikes, &dec, None, &[1.0, 1.0]).is_err());
    }
}
