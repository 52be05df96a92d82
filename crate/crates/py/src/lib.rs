//! Python bindings for `noisysan`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use noisysan::actor::{ActorKind, ActorNet, ForwardMode, NoiseRecord};
use noisysan::cli::{apr, checkpoint, psd};
use noisysan::envs;
use noisysan::noisegen::{self, NoiseConfig, NoiseMode};
use noisysan::trainer::{self, TrainConfig};
use noisysan::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// One colored-noise signal with zero mean and unit variance.
#[pyfunction]
#[pyo3(signature = (length, beta, seed=0))]
fn sample_colored(length: usize, beta: f64, seed: u64) -> PyResult<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    noisegen::sample_colored(length, beta, &mut rng).map_err(to_py)
}

/// Fitted log-log periodogram slope of colored noise. Returns `(slope, ok)`
/// where `ok` means the slope lies within tolerance of `-beta`.
#[pyfunction]
#[pyo3(signature = (beta, length=16384, draws=64, seed=0))]
fn psd_check(beta: f64, length: usize, draws: usize, seed: u64) -> PyResult<(f64, bool)> {
    let report = psd::psd_check(beta, length, draws, seed).map_err(to_py)?;
    Ok((report.slope, report.within(psd::SLOPE_TOLERANCE)))
}

#[pyfunction]
fn update_k(k0: f64, r_eval: f64, r_min: f64, r_max: f64) -> f64 {
    trainer::update_k(k0, r_eval, r_min, r_max)
}

#[pyfunction]
fn compute_apr(candidate: BTreeMap<String, f64>, reference: BTreeMap<String, f64>) -> PyResult<f64> {
    apr::compute_apr(&candidate, &reference).map_err(to_py)
}

/// Per-episode colored noise for every noise site of an actor.
#[pyclass(module = "noisysan_py")]
struct EpisodeNoise {
    inner: noisegen::EpisodeNoise,
}

#[pymethods]
impl EpisodeNoise {
    #[new]
    #[pyo3(signature = (n_sites, beta=1.0, episode_len=200, timesteps=5, mode="FULL", seed=0))]
    fn new(n_sites: usize, beta: f64, episode_len: usize, timesteps: usize, mode: &str, seed: u64) -> PyResult<Self> {
        let mode: NoiseMode = mode.parse().map_err(to_py)?;
        let config = NoiseConfig {
            beta,
            episode_len,
            timesteps,
            mode,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = noisegen::begin_episode(config, n_sites, &mut rng).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    fn signal(&self, site: usize) -> PyResult<Vec<f64>> {
        if site >= self.inner.n_sites() {
            return Err(PyValueError::new_err(format!("site {site} out of range")));
        }
        Ok(self.inner.signal(site).to_vec())
    }

    /// Noise for every site at env step `n`, site-major over the inner
    /// timesteps.
    fn record(&mut self, n: usize) -> PyResult<Vec<f64>> {
        self.inner.record(n).map_err(to_py)
    }
}

/// A trained or freshly initialised actor (noisy spiking or plain MLP).
#[pyclass(module = "noisysan_py")]
struct Actor {
    inner: ActorNet,
}

#[pymethods]
impl Actor {
    /// Builds a fresh actor for `env` from a JSON config string (defaults if
    /// omitted).
    #[new]
    #[pyo3(signature = (env="pendulum", config=None, seed=0))]
    fn new(env: &str, config: Option<&str>, seed: u64) -> PyResult<Self> {
        let mut cfg: TrainConfig = match config {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => TrainConfig::default(),
        };
        cfg.env = env.to_string();
        cfg.validate().map_err(to_py)?;
        let spec = cfg.env_spec().map_err(to_py)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = trainer::build_actor(&cfg, &spec, &mut rng).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = checkpoint::load_actor(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save_actor(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind() {
            ActorKind::NoisySan => "noisysan",
            ActorKind::Dan => "dan",
        }
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    #[getter]
    fn noise_sites(&self) -> usize {
        self.inner.noise_sites()
    }

    /// Names of all parameter tensors, in checkpoint order.
    fn param_names(&self) -> Vec<String> {
        let params = self.inner.params();
        params.ids().map(|id| params.name(id).to_string()).collect()
    }

    /// Noise-free action(s) for a flat batch of states.
    fn act(&self, states: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.act_deterministic(&states).map_err(to_py)
    }

    /// Noisy action for one state at env step `step`. Returns the action and
    /// the noise record that produced it.
    fn explore(&self, state: Vec<f64>, noise: &mut EpisodeNoise, step: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let san = self.san()?;
        let (action, record) = san
            .act(
                &state,
                ForwardMode::Explore {
                    noise: &mut noise.inner,
                    step,
                },
            )
            .map_err(to_py)?;
        Ok((action, record.map(|r| r.data().to_vec()).unwrap_or_default()))
    }

    /// Recomputes an action from a stored noise record.
    fn replay(&self, state: Vec<f64>, record: Vec<f64>) -> PyResult<Vec<f64>> {
        let san = self.san()?;
        let record = NoiseRecord::new(record);
        let (action, _) = san.act(&state, ForwardMode::Replay(&record)).map_err(to_py)?;
        Ok(action)
    }
}

impl Actor {
    fn san(&self) -> PyResult<&noisysan::actor::NoisySan> {
        match &self.inner {
            ActorNet::NoisySan(a) => Ok(a),
            ActorNet::Dan(_) => Err(PyValueError::new_err("the MLP actor has no noise sites")),
        }
    }
}

/// A built-in control task.
#[pyclass(module = "noisysan_py")]
struct Env {
    inner: envs::Env,
}

#[pymethods]
impl Env {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: envs::Env::from_id(name).map_err(to_py)?,
        })
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed)
    }

    /// Returns `(state, reward, done, truncated)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, bool)> {
        let s = self.inner.step(&action).map_err(to_py)?;
        Ok((s.state, s.reward, s.done, s.truncated))
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.spec().state_dim
    }

    #[getter]
    fn action_bound(&self) -> Vec<f64> {
        self.inner.spec().action_bound
    }
}

/// TD3 training loop for one seed.
#[pyclass(module = "noisysan_py", unsendable)]
struct Trainer {
    inner: trainer::Trainer,
}

#[pymethods]
impl Trainer {
    #[new]
    #[pyo3(signature = (config="{}", seed=0))]
    fn new(config: &str, seed: u64) -> PyResult<Self> {
        let cfg: TrainConfig = serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            inner: trainer::Trainer::new(cfg, seed).map_err(to_py)?,
        })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.reduction.k
    }

    /// Advances `n` environment steps, training as configured.
    #[pyo3(signature = (n=1))]
    fn step(&mut self, n: usize) -> PyResult<()> {
        for _ in 0..n {
            self.inner.step_env().map_err(to_py)?;
        }
        Ok(())
    }

    /// Runs evaluation episodes and returns the metrics row as CSV, header
    /// included.
    fn evaluate(&mut self) -> PyResult<String> {
        let row = self.inner.evaluate().map_err(to_py)?;
        Ok(noisysan::cli::metrics::to_csv(&[row]))
    }

    /// Runs the whole schedule; returns `(step, eval_mean)` per evaluation.
    #[pyo3(signature = (out=None))]
    fn run(&mut self, out: Option<PathBuf>) -> PyResult<Vec<(usize, f64)>> {
        let rows = self.inner.run(out.as_deref()).map_err(to_py)?;
        Ok(rows.iter().map(|r| (r.step, r.eval_mean)).collect())
    }

    fn actor(&self) -> Actor {
        Actor {
            inner: self.inner.actor.clone(),
        }
    }
}

#[pymodule]
pub fn noisysan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sample_colored, m)?)?;
    m.add_function(wrap_pyfunction!(psd_check, m)?)?;
    m.add_function(wrap_pyfunction!(update_k, m)?)?;
    m.add_function(wrap_pyfunction!(compute_apr, m)?)?;
    m.add_class::<EpisodeNoise>()?;
    m.add_class::<Actor>()?;
    m.add_class::<Env>()?;
    m.add_class::<Trainer>()?;
    m.add("HEADER", noisysan::cli::metrics::HEADER)?;
    Ok(())
}
