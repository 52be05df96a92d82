//! Binary checkpoint format.
//!
//! ```text
//! "NSAN1"
//! repeat until EOF:
//!   name_len: u32 LE, name: ASCII, rank: u32 LE, dims: u32 LE × rank,
//!   payload: f64 LE × Π dims (row-major)
//! ```
//!
//! Actor checkpoints start with `meta.*` records describing the network,
//! followed by the parameters in store order.

use std::path::Path;

use crate::actor::{ActorKind, ActorNet, Dan, IntraLayer, LayerModes, NoisySan, NoisySanConfig};
use crate::diffcore::{ParamStore, SpikeFn, Tensor};
use crate::neurons::ClifParams;
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"NSAN1";

fn corrupt(what: impl Into<String>) -> Error {
    Error::Checkpoint(what.into())
}

/// Serialises named tensors.
pub fn encode_records<'a>(records: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    for (name, tensor) in records {
        assert!(name.is_ascii(), "record names are ASCII");
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in tensor.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Parses a checkpoint into named tensors.
pub fn decode_records(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad magic; not an NSAN1 checkpoint"));
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .ok()
            .filter(|n| n.is_ascii())
            .ok_or_else(|| corrupt("record name is not ASCII"))?
            .to_string();
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| corrupt(format!("record `{name}` has an impossible size")))?;
        let payload = r.take(numel * 8)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::new(dims, data)?));
    }
    Ok(out)
}

pub fn save_records<'a>(path: &Path, records: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
    std::fs::write(path, encode_records(records))?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<(String, Tensor)>> {
    decode_records(&std::fs::read(path)?)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn san_meta(config: &NoisySanConfig) -> Vec<f64> {
    let c = &config.clif;
    let mut meta = vec![
        config.hidden as f64,
        config.p_in as f64,
        config.p_out as f64,
        config.timesteps as f64,
        c.alpha_c,
        c.alpha_v,
        c.v_th,
        c.v_reset,
        c.window,
        flag(c.spike_fn == SpikeFn::Soft),
        flag(config.charge_noise),
        flag(config.transmission_noise),
        match config.intra_layer {
            IntraLayer::None => 0.0,
            IntraLayer::Population => 1.0,
            IntraLayer::Layer => 2.0,
        },
    ];
    meta.extend(config.layer_modes.to_string().bytes().map(f64::from));
    meta
}

fn san_config(meta: &[f64], state_dim: usize, action_dim: usize) -> Result<NoisySanConfig> {
    if meta.len() != 17 {
        return Err(corrupt("meta.san has the wrong length"));
    }
    let count = |x: f64| -> Result<usize> {
        if x >= 0.0 && x.fract() == 0.0 && x < u32::MAX as f64 {
            Ok(x as usize)
        } else {
            Err(corrupt(format!("meta.san entry {x} is not a count")))
        }
    };
    let modes: String = meta[13..].iter().map(|&c| c as u8 as char).collect();
    Ok(NoisySanConfig {
        state_dim,
        action_dim,
        hidden: count(meta[0])?,
        p_in: count(meta[1])?,
        p_out: count(meta[2])?,
        timesteps: count(meta[3])?,
        clif: ClifParams {
            alpha_c: meta[4],
            alpha_v: meta[5],
            v_th: meta[6],
            v_reset: meta[7],
            window: meta[8],
            spike_fn: if meta[9] == 1.0 {
                SpikeFn::Soft
            } else {
                SpikeFn::Heaviside
            },
        },
        charge_noise: meta[10] == 1.0,
        transmission_noise: meta[11] == 1.0,
        intra_layer: match meta[12] as u8 {
            0 => IntraLayer::None,
            1 => IntraLayer::Population,
            _ => IntraLayer::Layer,
        },
        layer_modes: modes
            .parse::<LayerModes>()
            .map_err(|_| corrupt(format!("bad layer modes `{modes}`")))?,
    })
}

/// Serialises an actor with enough metadata to rebuild it.
pub fn encode_actor(actor: &ActorNet) -> Vec<u8> {
    let kind = Tensor::vector(vec![match actor.kind() {
        ActorKind::NoisySan => 0.0,
        ActorKind::Dan => 1.0,
    }]);
    let dims = Tensor::vector(vec![actor.state_dim() as f64, actor.action_dim() as f64]);
    let bound = Tensor::vector(actor.action_bound().to_vec());
    let san = match actor {
        ActorNet::NoisySan(a) => Some(Tensor::vector(san_meta(a.config()))),
        ActorNet::Dan(_) => None,
    };
    let mut records: Vec<(&str, &Tensor)> = vec![
        ("meta.actor", &kind),
        ("meta.dims", &dims),
        ("meta.action_bound", &bound),
    ];
    if let Some(san) = &san {
        records.push(("meta.san", san));
    }
    records.extend(actor.params().iter());
    encode_records(records)
}

/// Rebuilds an actor from [`encode_actor`] output.
pub fn decode_actor(bytes: &[u8]) -> Result<ActorNet> {
    let mut records = decode_records(bytes)?.into_iter().peekable();
    let mut meta = |name: &str| -> Result<Tensor> {
        match records.next_if(|(n, _)| n == name) {
            Some((_, t)) => Ok(t),
            None => Err(corrupt(format!("missing record `{name}`"))),
        }
    };
    let kind = meta("meta.actor")?;
    let dims = meta("meta.dims")?;
    let bound = meta("meta.action_bound")?.into_data();
    let (state_dim, action_dim) = match dims.data() {
        &[s, a] => (s as usize, a as usize),
        _ => return Err(corrupt("meta.dims must hold two values")),
    };
    if bound.len() != action_dim {
        return Err(corrupt("meta.action_bound does not match meta.dims"));
    }
    let san = match kind.data() {
        [k] if *k == 0.0 => Some(san_config(meta("meta.san")?.data(), state_dim, action_dim)?),
        [k] if *k == 1.0 => None,
        _ => return Err(corrupt("unknown actor kind")),
    };
    let mut params = ParamStore::new();
    for (name, tensor) in records {
        params.push(name, tensor);
    }
    Ok(match san {
        Some(config) => ActorNet::NoisySan(NoisySan::from_params(config, &bound, params)?),
        None => {
            let dan = Dan::from_params(params, bound)?;
            if dan.state_dim() != state_dim {
                return Err(corrupt("DAN input width does not match meta.dims"));
            }
            ActorNet::Dan(dan)
        }
    })
}

pub fn save_actor(path: &Path, actor: &ActorNet) -> Result<()> {
    std::fs::write(path, encode_actor(actor))?;
    Ok(())
}

pub fn load_actor(path: &Path) -> Result<ActorNet> {
    decode_actor(&std::fs::read(path)?)
}
