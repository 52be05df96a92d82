//! Twin Q networks, each `(N_S + N_A, 256, relu, 256, relu, 1)`.

use rand::Rng;

use crate::diffcore::{ParamStore, Tape, Tensor, Var};
use crate::Result;

/// Both Q networks in one store: `q1.*` first, then `q2.*`.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    params: ParamStore,
    state_dim: usize,
    action_dim: usize,
}

const PER_NET: usize = 6;

impl Critic {
    /// Weights and biases drawn from `U(±1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let dims = [state_dim + action_dim, hidden, hidden, 1];
        let mut params = ParamStore::new();
        for net in 1..=2 {
            for l in 0..3 {
                let bound = 1.0 / (dims[l] as f64).sqrt();
                let w = (0..dims[l] * dims[l + 1])
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                let b = (0..dims[l + 1]).map(|_| rng.random_range(-bound..=bound)).collect();
                params.push(format!("q{net}.l{l}.weight"), Tensor::matrix(dims[l], dims[l + 1], w));
                params.push(format!("q{net}.l{l}.bias"), Tensor::vector(b));
            }
        }
        Self {
            params,
            state_dim,
            action_dim,
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn mlp(tape: &mut Tape, vars: &[Var], input: Var) -> Result<Var> {
        let h = tape.linear(input, vars[0], Some(vars[1]))?;
        let h = tape.relu(h);
        let h = tape.linear(h, vars[2], Some(vars[3]))?;
        let h = tape.relu(h);
        tape.linear(h, vars[4], Some(vars[5]))
    }

    /// `Q1` only, for the actor objective.
    pub fn q1_tape(&self, tape: &mut Tape, vars: &[Var], state: Var, action: Var) -> Result<Var> {
        let input = tape.concat_cols(state, action)?;
        Self::mlp(tape, &vars[..PER_NET], input)
    }

    /// `(Q1, Q2)`, each `[B×1]`.
    pub fn q_values_tape(&self, tape: &mut Tape, vars: &[Var], state: Var, action: Var) -> Result<(Var, Var)> {
        let input = tape.concat_cols(state, action)?;
        let q1 = Self::mlp(tape, &vars[..PER_NET], input)?;
        let q2 = Self::mlp(tape, &vars[PER_NET..], input)?;
        Ok((q1, q2))
    }

    /// Evaluates both networks on row-major batches of states and actions.
    pub fn q_values(&self, states: &[f64], actions: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let batch = states.len() / self.state_dim.max(1);
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params, false);
        let s = tape.constant(Tensor::matrix(batch, self.state_dim, states.to_vec()));
        let a = tape.constant(Tensor::new(vec![batch, self.action_dim], actions.to_vec())?);
        let (q1, q2) = self.q_values_tape(&mut tape, &vars, s, a)?;
        Ok((tape.value(q1).data().to_vec(), tape.value(q2).data().to_vec()))
    }
}
