//! Actor networks.
//!
//! [`NoisySan`] is the noisy spiking actor: population encoder → two hidden
//! noisy-CLIF layers → noisy-CLIF output populations with intra-layer
//! connections → noisy integrated decoder. [`Dan`] is the plain MLP actor used
//! as a baseline. [`ActorNet`] wraps both behind one interface.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::codec::{self, Decoder, MIN_RF_WIDTH};
use crate::diffcore::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::neurons::{self, ClifParams, LayerState, NoiseDrive};
use crate::noisegen::EpisodeNoise;
use crate::{Error, Result};

/// Noise handling of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerNoiseMode {
    /// σ stays at its initial value.
    Fixed,
    /// σ is trained with the actor loss.
    Learnable,
    /// σ is trained and penalised by the noise-reduction term.
    Reduction,
    /// No noise at all (decoder layer only).
    Off,
}

impl LayerNoiseMode {
    fn letter(self) -> char {
        match self {
            Self::Fixed => 'F',
            Self::Learnable => 'L',
            Self::Reduction => 'R',
            Self::Off => 'N',
        }
    }
}

/// Per-layer noise modes for SN0, SN1, SN2 and the decoder, written as a
/// four-letter string such as `FFFR`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerModes(pub [LayerNoiseMode; 4]);

impl Default for LayerModes {
    fn default() -> Self {
        use LayerNoiseMode::*;
        Self([Fixed, Fixed, Fixed, Reduction])
    }
}

impl FromStr for LayerModes {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "layer modes `{s}` must have exactly 4 letters"
            )));
        }
        let mut modes = [LayerNoiseMode::Fixed; 4];
        for (i, c) in chars.iter().enumerate() {
            modes[i] = match c.to_ascii_uppercase() {
                'F' => LayerNoiseMode::Fixed,
                'L' => LayerNoiseMode::Learnable,
                'R' => LayerNoiseMode::Reduction,
                'N' if i == 3 => LayerNoiseMode::Off,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "layer modes `{s}`: invalid letter `{c}` at position {i}"
                    )))
                }
            };
        }
        Ok(Self(modes))
    }
}

impl fmt::Display for LayerModes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|m| write!(f, "{}", m.letter()))
    }
}

impl Serialize for LayerModes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LayerModes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Recurrent connections inside the output layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntraLayer {
    /// No intra-layer connections.
    None,
    /// One `P_out × P_out` matrix per output population.
    #[default]
    Population,
    /// One matrix over the whole output layer.
    Layer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisySanConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
    pub p_in: usize,
    pub p_out: usize,
    pub timesteps: usize,
    pub clif: ClifParams,
    pub layer_modes: LayerModes,
    /// Noise in the charging dynamics of spiking layers.
    pub charge_noise: bool,
    /// Noise on spike transmission of spiking layers.
    pub transmission_noise: bool,
    pub intra_layer: IntraLayer,
}

impl NoisySanConfig {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            hidden: 256,
            p_in: 10,
            p_out: 10,
            timesteps: 5,
            clif: ClifParams::default(),
            layer_modes: LayerModes::default(),
            charge_noise: true,
            transmission_noise: true,
            intra_layer: IntraLayer::Population,
        }
    }

    fn widths(&self) -> [usize; 3] {
        [self.hidden, self.hidden, self.action_dim * self.p_out]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiteKind {
    Charge,
    Transmission,
}

/// A contiguous run of noise sites belonging to one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiteBlock {
    /// 0..=2 for SN0..SN2, 3 for the decoder.
    pub layer: usize,
    pub kind: SiteKind,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SiteLayout {
    pub blocks: Vec<SiteBlock>,
    pub total: usize,
}

impl SiteLayout {
    fn find(&self, layer: usize, kind: SiteKind) -> Option<SiteBlock> {
        self.blocks.iter().copied().find(|b| b.layer == layer && b.kind == kind)
    }
}

/// Enumerates the noise sites of a configuration: one charge and one
/// transmission site per noisy spiking neuron, one charge site per noisy
/// decoder neuron.
pub fn count_noise_sites(config: &NoisySanConfig) -> SiteLayout {
    let mut layout = SiteLayout::default();
    let mut push = |layer, kind, len| {
        layout.blocks.push(SiteBlock {
            layer,
            kind,
            offset: layout.total,
            len,
        });
        layout.total += len;
    };
    for (layer, width) in config.widths().into_iter().enumerate() {
        if config.charge_noise {
            push(layer, SiteKind::Charge, width);
        }
        if config.transmission_noise {
            push(layer, SiteKind::Transmission, width);
        }
    }
    if config.layer_modes.0[3] != LayerNoiseMode::Off {
        push(3, SiteKind::Charge, config.action_dim);
    }
    layout
}

/// The noise consumed by one action selection: `T` rows of `n_sites` values.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRecord {
    data: Box<[f64]>,
}

impl NoiseRecord {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data: data.into() }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// How a forward pass treats noise.
pub enum ForwardMode<'a> {
    /// Draw the noise for environment step `step` from the episode signals.
    Explore { noise: &'a mut EpisodeNoise, step: usize },
    /// Re-use previously recorded noise.
    Replay(&'a NoiseRecord),
    /// All noise switched off.
    Deterministic,
}

/// Counts noise values read by forward passes.
#[derive(Debug, Default)]
pub struct ReadCounter(AtomicU64);

impl ReadCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }
}

impl Clone for ReadCounter {
    fn clone(&self) -> Self {
        Self(AtomicU64::new(self.get()))
    }
}

#[derive(Clone, Debug, PartialEq)]
struct SanIds {
    enc_mu: ParamId,
    enc_sigma: ParamId,
    weights: [ParamId; 3],
    biases: [ParamId; 3],
    intra: Option<ParamId>,
    dec_w: ParamId,
    dec_b: ParamId,
    sigma_v: [Option<ParamId>; 4],
    sigma_s: [Option<ParamId>; 3],
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// The noisy spiking actor network.
#[derive(Clone, Debug)]
pub struct NoisySan {
    config: NoisySanConfig,
    params: ParamStore,
    ids: SanIds,
    action_bound: Vec<f64>,
    layout: SiteLayout,
    reads: ReadCounter,
}

impl NoisySan {
    pub fn new<R: Rng + ?Sized>(
        config: NoisySanConfig,
        state_bounds: &[(f64, f64)],
        action_bound: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        config.clif.validate()?;
        if state_bounds.len() != config.state_dim || action_bound.len() != config.action_dim {
            return Err(Error::InvalidArgument(format!(
                "bounds ({} state, {} action) do not match dims ({}, {})",
                state_bounds.len(),
                action_bound.len(),
                config.state_dim,
                config.action_dim
            )));
        }
        if config.timesteps == 0 || config.hidden == 0 || config.action_dim == 0 {
            return Err(Error::InvalidArgument(
                "timesteps, hidden and action_dim must be >= 1".into(),
            ));
        }
        let mut params = ParamStore::new();
        let (mu, sigma_rf) = codec::init_encoder(state_bounds, config.p_in)?;
        let enc_mu = params.push("encoder.mu", mu);
        let enc_sigma = params.push("encoder.sigma", sigma_rf);

        let widths = config.widths();
        let fan_in = [config.state_dim * config.p_in, widths[0], widths[1]];
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..3 {
            let bound = 1.0 / (fan_in[l] as f64).sqrt();
            weights.push(params.push(format!("sn{l}.weight"), uniform(rng, &[fan_in[l], widths[l]], bound)));
            biases.push(params.push(format!("sn{l}.bias"), uniform(rng, &[widths[l]], bound)));
        }
        let out_width = widths[2];
        let intra = match config.intra_layer {
            IntraLayer::None => None,
            IntraLayer::Population => Some(params.push(
                "sn2.intra",
                Tensor::zeros(&[config.action_dim, config.p_out, config.p_out]),
            )),
            IntraLayer::Layer => Some(params.push("sn2.intra", Tensor::zeros(&[out_width, out_width]))),
        };
        let dec_bound = 1.0 / (config.p_out as f64).sqrt();
        let dec_w = params.push("decoder.weight", uniform(rng, &[out_width], dec_bound));
        let dec_b = params.push("decoder.bias", Tensor::zeros(&[config.action_dim]));

        let mut sigma_v = [None; 4];
        let mut sigma_s = [None; 3];
        for (l, &w) in widths.iter().enumerate() {
            let init = Tensor::full(&[w], neurons::initial_sigma(w));
            if config.charge_noise {
                sigma_v[l] = Some(params.push(format!("sn{l}.sigma_v"), init.clone()));
            }
            if config.transmission_noise {
                sigma_s[l] = Some(params.push(format!("sn{l}.sigma_s"), init));
            }
        }
        if config.layer_modes.0[3] != LayerNoiseMode::Off {
            let init = Tensor::full(&[config.action_dim], neurons::initial_sigma(config.action_dim));
            sigma_v[3] = Some(params.push("decoder.sigma_v", init));
        }
        let layout = count_noise_sites(&config);
        Ok(Self {
            ids: SanIds {
                enc_mu,
                enc_sigma,
                weights: [weights[0], weights[1], weights[2]],
                biases: [biases[0], biases[1], biases[2]],
                intra,
                dec_w,
                dec_b,
                sigma_v,
                sigma_s,
            },
            config,
            params,
            action_bound: action_bound.to_vec(),
            layout,
            reads: ReadCounter::default(),
        })
    }

    /// Rebuilds a network around saved parameters, which must match the
    /// layout `config` implies.
    pub fn from_params(config: NoisySanConfig, action_bound: &[f64], params: ParamStore) -> Result<Self> {
        let bounds = vec![(-1.0, 1.0); config.state_dim];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut net = Self::new(config, &bounds, action_bound, &mut rng)?;
        if !net.params.same_layout(&params) {
            return Err(Error::Checkpoint(
                "parameters do not match the actor configuration".into(),
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &NoisySanConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn action_bound(&self) -> &[f64] {
        &self.action_bound
    }

    /// Total number of noise values read by forward passes so far.
    pub fn noise_reads(&self) -> u64 {
        self.reads.get()
    }

    /// Noise scales of a layer (0..=2 spiking, 3 decoder).
    pub fn sigma(&self, layer: usize, kind: SiteKind) -> Option<&Tensor> {
        let id = match kind {
            SiteKind::Charge => self.ids.sigma_v.get(layer).copied().flatten(),
            SiteKind::Transmission => self.ids.sigma_s.get(layer).copied().flatten(),
        };
        id.map(|id| self.params.get(id))
    }

    pub fn sigma_ids(&self, layer: usize) -> Vec<ParamId> {
        let mut out: Vec<ParamId> = self.ids.sigma_v.get(layer).copied().flatten().into_iter().collect();
        out.extend(self.ids.sigma_s.get(layer).copied().flatten());
        out
    }

    /// Parameters excluded from optimisation: σ of fixed-noise layers.
    pub fn frozen_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.params.len()];
        for layer in 0..4 {
            if self.config.layer_modes.0[layer] == LayerNoiseMode::Fixed {
                for id in self.sigma_ids(layer) {
                    mask[id.index()] = true;
                }
            }
        }
        mask
    }

    /// Keeps σ ≥ 0 and receptive-field widths ≥ [`MIN_RF_WIDTH`].
    pub fn clamp_params(&mut self) {
        let sigma_ids: Vec<ParamId> = (0..4).flat_map(|l| self.sigma_ids(l)).collect();
        for id in sigma_ids {
            self.params
                .get_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|s| *s = s.max(0.0));
        }
        self.params
            .get_mut(self.ids.enc_sigma)
            .data_mut()
            .iter_mut()
            .for_each(|s| *s = s.max(MIN_RF_WIDTH));
    }

    /// `Σ_{R layers} (k / width) · Σ_i σ_i²` on the tape, or `None` when no
    /// layer uses the reduction mode.
    pub fn reduction_term(&self, tape: &mut Tape, vars: &[Var], k: f64) -> Result<Option<Var>> {
        let mut total: Option<Var> = None;
        for layer in 0..4 {
            if self.config.layer_modes.0[layer] != LayerNoiseMode::Reduction {
                continue;
            }
            let width = if layer == 3 {
                self.config.action_dim
            } else {
                self.config.widths()[layer]
            };
            for id in self.sigma_ids(layer) {
                let sq = tape.square(vars[id.index()]);
                let s = tape.sum(sq);
                let term = tape.scale(s, k / width as f64);
                total = Some(match total {
                    Some(acc) => tape.add(acc, term)?,
                    None => term,
                });
            }
        }
        Ok(total)
    }

    fn eps_tensor(&self, tape: &mut Tape, records: &[&NoiseRecord], block: SiteBlock, t: usize) -> Var {
        let stride = self.layout.total;
        let mut data = Vec::with_capacity(records.len() * block.len);
        for r in records {
            let start = t * stride + block.offset;
            data.extend_from_slice(&r.data[start..start + block.len]);
        }
        tape.constant(Tensor::matrix(records.len(), block.len, data))
    }

    fn drive(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        records: Option<&[&NoiseRecord]>,
        layer: usize,
        kind: SiteKind,
        t: usize,
    ) -> Option<NoiseDrive> {
        let records = records?;
        let block = self.layout.find(layer, kind)?;
        let id = match kind {
            SiteKind::Charge => self.ids.sigma_v[layer]?,
            SiteKind::Transmission => self.ids.sigma_s[layer]?,
        };
        let eps = self.eps_tensor(tape, records, block, t);
        Some(NoiseDrive::new(vars[id.index()], eps))
    }

    /// Batched forward pass on `tape`.
    ///
    /// `vars` are this network's parameters bound with [`Tape::bind`].
    /// `records` holds one noise record per batch row; `None` disables all
    /// noise.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        state: Var,
        records: Option<&[&NoiseRecord]>,
    ) -> Result<Var> {
        let batch = match tape.shape(state) {
            &[b, s] if s == self.config.state_dim => b,
            other => {
                return Err(Error::Shape {
                    op: "actor forward",
                    lhs: other.to_vec(),
                    rhs: vec![self.config.state_dim],
                })
            }
        };
        if let Some(recs) = records {
            if recs.len() != batch {
                return Err(Error::InvalidArgument(format!(
                    "{} noise records for a batch of {batch}",
                    recs.len()
                )));
            }
            let expected = self.layout.total * self.config.timesteps;
            if let Some(bad) = recs.iter().find(|r| r.len() != expected) {
                return Err(Error::NoiseLayout {
                    expected,
                    got: bad.len(),
                });
            }
            self.reads.add((expected * batch) as u64);
        }
        let cfg = &self.config;
        let ids = &self.ids;
        let enc = codec::encode(
            tape,
            state,
            vars[ids.enc_mu.index()],
            vars[ids.enc_sigma.index()],
            cfg.p_in,
            cfg.timesteps,
            cfg.clif.window,
            cfg.clif.spike_fn,
        )?;
        // Layer-major: each layer's input currents for all T steps come from
        // one stacked product, then its neurons are stepped through time.
        let widths = cfg.widths();
        let mut signals = enc;
        for (l, &width) in widths.iter().enumerate() {
            let stacked = tape.stack_rows(&signals)?;
            let currents = tape.linear(stacked, vars[ids.weights[l].index()], Some(vars[ids.biases[l].index()]))?;
            let mut state = LayerState::reset(tape, batch, width, &cfg.clif);
            for (t, signal) in signals.iter_mut().enumerate() {
                let mut x = tape.row_block(currents, t * batch, batch)?;
                if l == 2 {
                    if let Some(intra) = ids.intra {
                        let rec = match cfg.intra_layer {
                            IntraLayer::Population => {
                                tape.block_linear(state.s, vars[intra.index()], cfg.action_dim)?
                            }
                            _ => tape.linear(state.s, vars[intra.index()], None)?,
                        };
                        x = tape.add(x, rec)?;
                    }
                }
                let charge = self.drive(tape, vars, records, l, SiteKind::Charge, t);
                let transmission = self.drive(tape, vars, records, l, SiteKind::Transmission, t);
                let (next, transmitted) = neurons::noisy_clif_step(tape, &state, x, &cfg.clif, charge, transmission)?;
                state = next;
                *signal = transmitted;
            }
        }
        let out_signals = signals;
        let dec_noise: Option<Vec<Var>> = match (records, self.layout.find(3, SiteKind::Charge)) {
            (Some(recs), Some(block)) => Some(
                (0..cfg.timesteps)
                    .map(|t| self.eps_tensor(tape, recs, block, t))
                    .collect(),
            ),
            _ => None,
        };
        let decoder = Decoder {
            weight: vars[ids.dec_w.index()],
            bias: vars[ids.dec_b.index()],
            sigma: if dec_noise.is_some() {
                ids.sigma_v[3].map(|id| vars[id.index()])
            } else {
                None
            },
            groups: cfg.action_dim,
        };
        codec::decode(tape, &out_signals, &decoder, dec_noise.as_deref(), &self.action_bound)
    }

    /// Single-state (or batched, in replay/deterministic modes) action selection.
    pub fn act(&self, states: &[f64], mode: ForwardMode<'_>) -> Result<(Vec<f64>, Option<NoiseRecord>)> {
        let dim = self.config.state_dim;
        if dim == 0 || states.len() % dim != 0 {
            return Err(Error::Shape {
                op: "act",
                lhs: vec![states.len()],
                rhs: vec![dim],
            });
        }
        let batch = states.len() / dim;
        let record = match mode {
            ForwardMode::Deterministic => None,
            ForwardMode::Replay(r) => Some(r.clone()),
            ForwardMode::Explore { noise, step } => {
                if noise.n_sites() != self.layout.total {
                    return Err(Error::NoiseLayout {
                        expected: self.layout.total,
                        got: noise.n_sites(),
                    });
                }
                Some(NoiseRecord::new(noise.record(step)?))
            }
        };
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params, false);
        let s = tape.constant(Tensor::matrix(batch, dim, states.to_vec()));
        let recs: Option<Vec<&NoiseRecord>> = record.as_ref().map(|r| vec![r; batch]);
        let out = self.forward_tape(&mut tape, &vars, s, recs.as_deref())?;
        Ok((tape.value(out).data().to_vec(), record))
    }
}

/// Plain MLP actor: `(N_S, 256, relu, 256, relu, N_A, tanh·bound)`.
#[derive(Clone, Debug)]
pub struct Dan {
    params: ParamStore,
    state_dim: usize,
    action_bound: Vec<f64>,
}

impl Dan {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_bound: &[f64], hidden: usize, rng: &mut R) -> Self {
        let dims = [state_dim, hidden, hidden, action_bound.len()];
        let mut params = ParamStore::new();
        for l in 0..3 {
            let bound = 1.0 / (dims[l] as f64).sqrt();
            params.push(format!("dan{l}.weight"), uniform(rng, &[dims[l], dims[l + 1]], bound));
            params.push(format!("dan{l}.bias"), uniform(rng, &[dims[l + 1]], bound));
        }
        Self {
            params,
            state_dim,
            action_bound: action_bound.to_vec(),
        }
    }

    pub fn from_params(params: ParamStore, action_bound: Vec<f64>) -> Result<Self> {
        let ok = params.len() == 6 && (0..3).all(|l| params.find(&format!("dan{l}.weight")) == Some(ParamId(2 * l)));
        if !ok {
            return Err(Error::Checkpoint("not a DAN parameter set".into()));
        }
        let state_dim = params.get(ParamId(0)).shape()[0];
        if params.get(ParamId(4)).shape()[1] != action_bound.len() {
            return Err(Error::Checkpoint("DAN output width does not match action bound".into()));
        }
        Ok(Self {
            params,
            state_dim,
            action_bound,
        })
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

    pub fn action_bound(&self) -> &[f64] {
        &self.action_bound
    }

    pub fn forward_tape(&self, tape: &mut Tape, vars: &[Var], state: Var) -> Result<Var> {
        let h = tape.linear(state, vars[0], Some(vars[1]))?;
        let h = tape.relu(h);
        let h = tape.linear(h, vars[2], Some(vars[3]))?;
        let h = tape.relu(h);
        let out = tape.linear(h, vars[4], Some(vars[5]))?;
        let squashed = tape.tanh(out);
        let bound = tape.constant(Tensor::vector(self.action_bound.clone()));
        tape.mul_row(squashed, bound)
    }
}

/// Actions of a DAN for a batch of states (row-major `[B×N_S]`).
pub fn forward_dan(states: &[f64], dan: &Dan) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = tape.bind(dan.params(), false);
    let s = tape.constant(Tensor::matrix(
        states.len() / dan.state_dim.max(1),
        dan.state_dim,
        states.to_vec(),
    ));
    let out = dan.forward_tape(&mut tape, &vars, s)?;
    Ok(tape.value(out).data().to_vec())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    #[default]
    NoisySan,
    Dan,
}

/// Either actor, behind one interface.
#[derive(Clone, Debug)]
pub enum ActorNet {
    NoisySan(NoisySan),
    Dan(Dan),
}

impl ActorNet {
    pub fn kind(&self) -> ActorKind {
        match self {
            Self::NoisySan(_) => ActorKind::NoisySan,
            Self::Dan(_) => ActorKind::Dan,
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            Self::NoisySan(a) => a.params(),
            Self::Dan(a) => a.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            Self::NoisySan(a) => a.params_mut(),
            Self::Dan(a) => a.params_mut(),
        }
    }

    pub fn action_bound(&self) -> &[f64] {
        match self {
            Self::NoisySan(a) => a.action_bound(),
            Self::Dan(a) => a.action_bound(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Self::NoisySan(a) => a.config().state_dim,
            Self::Dan(a) => a.state_dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_bound().len()
    }

    /// Number of noise sites (zero for a DAN).
    pub fn noise_sites(&self) -> usize {
        match self {
            Self::NoisySan(a) => a.layout().total,
            Self::Dan(_) => 0,
        }
    }

    pub fn noise_reads(&self) -> u64 {
        match self {
            Self::NoisySan(a) => a.noise_reads(),
            Self::Dan(_) => 0,
        }
    }

    pub fn frozen_mask(&self) -> Vec<bool> {
        match self {
            Self::NoisySan(a) => a.frozen_mask(),
            Self::Dan(a) => vec![false; a.params().len()],
        }
    }

    pub fn clamp_params(&mut self) {
        if let Self::NoisySan(a) = self {
            a.clamp_params();
        }
    }

    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        state: Var,
        records: Option<&[&NoiseRecord]>,
    ) -> Result<Var> {
        match self {
            Self::NoisySan(a) => a.forward_tape(tape, vars, state, records),
            Self::Dan(a) => a.forward_tape(tape, vars, state),
        }
    }

    /// Noiseless actions for a batch of states.
    pub fn act_deterministic(&self, states: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::NoisySan(a) => Ok(a.act(states, ForwardMode::Deterministic)?.0),
            Self::Dan(a) => forward_dan(states, a),
        }
    }
}
