//! Colored noise with power spectral density ∝ f^−β.
//!
//! Signals are synthesised in the frequency domain: independent complex
//! Gaussian coefficients are shaped by `f^(−β/2)`, the DC bin is zeroed, and
//! an inverse radix-2 FFT produces a real signal which is then shifted and
//! scaled to exact zero mean and unit (population) variance.
//!
//! [`EpisodeNoise`] holds one signal per noise site for a whole episode and
//! hands out the values for environment step `n` and SNN timestep `t`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How noise is laid out across an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// One colored signal of length `N·T` per site, indexed `n·T + t`.
    #[default]
    #[serde(rename = "FULL")]
    Full,
    /// One colored signal of length `N` per site, held constant across the
    /// `T` inner timesteps.
    #[serde(rename = "RLS")]
    Rls,
    /// A fresh colored signal of length `T` per site at every action selection.
    #[serde(rename = "TS")]
    Ts,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FULL" => Ok(Self::Full),
            "RLS" => Ok(Self::Rls),
            "TS" => Ok(Self::Ts),
            other => Err(Error::InvalidArgument(format!("unknown noise mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub beta: f64,
    /// Maximum episode length in environment steps.
    pub episode_len: usize,
    /// SNN timesteps per action selection.
    pub timesteps: usize,
    pub mode: NoiseMode,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_len == 0 || self.timesteps == 0 {
            return Err(Error::InvalidArgument(
                "noise episode length and timesteps must be >= 1".into(),
            ));
        }
        if !(0.0..=3.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("beta = {} outside [0, 3]", self.beta)));
        }
        Ok(())
    }
}

/// Twiddle factors `exp(±2πik/n)` for `k < n/2`.
fn twiddles(n: usize, inverse: bool) -> Vec<Complex64> {
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n / 2)
        .map(|k| {
            let a = sign * 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Complex64::new(a.cos(), a.sin())
        })
        .collect()
}

/// In-place iterative radix-2 FFT using a table from [`twiddles`] of the
/// same length and direction. The inverse does not rescale.
fn fft_with(buf: &mut [Complex64], table: &[Complex64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two() && table.len() == n / 2);
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let stride = n / len;
        for chunk in buf.chunks_mut(len) {
            let (lo, hi) = chunk.split_at_mut(len / 2);
            for (k, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                let u = *a;
                let v = *b * table[k * stride];
                *a = u + v;
                *b = u - v;
            }
        }
        len <<= 1;
    }
}

#[cfg(test)]
fn fft_radix2(buf: &mut [Complex64], inverse: bool) {
    let table = twiddles(buf.len(), inverse);
    fft_with(buf, &table);
}

/// Shifts and scales `signal` to mean 0 and population variance 1.
pub fn normalize(signal: &mut [f64]) {
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    signal.iter_mut().for_each(|x| *x -= mean);
    let var = signal.iter().map(|x| x * x).sum::<f64>() / n;
    if var > 0.0 {
        let inv = var.sqrt().recip();
        signal.iter_mut().for_each(|x| *x *= inv);
    }
}

/// Reusable synthesiser for signals of one length and exponent.
///
/// Two independent real signals come out of each inverse transform: with
/// Hermitian spectra `X` and `Y`, `ifft(X + iY) = x + iy`.
#[derive(Clone, Debug)]
pub struct ColoredSampler {
    length: usize,
    amps: Vec<f64>,
    table: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl ColoredSampler {
    pub fn new(length: usize, beta: f64) -> Result<Self> {
        if length < 2 {
            return Err(Error::InvalidArgument(format!(
                "colored noise needs length >= 2, got {length}"
            )));
        }
        let size = length.next_power_of_two();
        let amps = (0..=size / 2)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    (k as f64 / size as f64).powf(-beta / 2.0)
                }
            })
            .collect();
        Ok(Self {
            length,
            amps,
            table: twiddles(size, true),
            buf: vec![Complex64::new(0.0, 0.0); size],
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    fn fill_spectrum<R: Rng + ?Sized>(&mut self, rng: &mut R, imag: bool) {
        let size = self.buf.len();
        let half = size / 2;
        let rot = |c: Complex64| if imag { Complex64::new(-c.im, c.re) } else { c };
        for k in 1..=half {
            let amp = self.amps[k];
            let re: f64 = rng.sample(StandardNormal);
            if k == half {
                self.buf[k] += rot(Complex64::new(re * amp, 0.0));
            } else {
                let im: f64 = rng.sample(StandardNormal);
                let c = Complex64::new(re * amp, im * amp);
                self.buf[k] += rot(c);
                self.buf[size - k] += rot(c.conj());
            }
        }
    }

    /// Two independent unit-variance signals.
    pub fn sample_pair<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        self.buf.fill(Complex64::new(0.0, 0.0));
        self.fill_spectrum(rng, false);
        self.fill_spectrum(rng, true);
        fft_with(&mut self.buf, &self.table);
        let mut a: Vec<f64> = self.buf[..self.length].iter().map(|c| c.re).collect();
        let mut b: Vec<f64> = self.buf[..self.length].iter().map(|c| c.im).collect();
        normalize(&mut a);
        normalize(&mut b);
        (a, b)
    }

    /// One unit-variance signal.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        self.buf.fill(Complex64::new(0.0, 0.0));
        self.fill_spectrum(rng, false);
        fft_with(&mut self.buf, &self.table);
        let mut a: Vec<f64> = self.buf[..self.length].iter().map(|c| c.re).collect();
        normalize(&mut a);
        a
    }

    /// `count` signals appended to `out`, each expanded by `repeat`.
    fn extend_into<R: Rng + ?Sized>(&mut self, count: usize, repeat: usize, rng: &mut R, out: &mut Vec<f64>) {
        let mut push = |s: Vec<f64>| {
            for v in s {
                out.extend(std::iter::repeat_n(v, repeat));
            }
        };
        for _ in 0..count / 2 {
            let (a, b) = self.sample_pair(rng);
            push(a);
            push(b);
        }
        if count % 2 == 1 {
            push(self.sample(rng));
        }
    }
}

/// Draws one unit-variance colored-noise signal.
pub fn sample_colored<R: Rng + ?Sized>(length: usize, beta: f64, rng: &mut R) -> Result<Vec<f64>> {
    Ok(ColoredSampler::new(length, beta)?.sample(rng))
}

/// `count` unit-variance signals of any positive length, appended to `out`
/// with every value repeated `repeat` times. Length 1 degenerates to standard
/// normal draws.
fn sample_sites<R: Rng + ?Sized>(
    count: usize,
    length: usize,
    beta: f64,
    repeat: usize,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    if length == 1 {
        for _ in 0..count {
            let v: f64 = rng.sample(StandardNormal);
            out.extend(std::iter::repeat_n(v, repeat));
        }
    } else {
        let mut sampler = ColoredSampler::new(length, beta).expect("length >= 2");
        sampler.extend_into(count, repeat, rng, out);
    }
}

/// Per-episode noise for every site, stored site-major.
#[derive(Clone, Debug)]
pub struct EpisodeNoise {
    config: NoiseConfig,
    n_sites: usize,
    signals: Vec<f64>,
    signal_len: usize,
    block_start: usize,
    ts_step: Option<usize>,
    rng: ChaCha8Rng,
}

/// Samples the noise for a new episode.
pub fn begin_episode<R: RngCore + ?Sized>(config: NoiseConfig, n_sites: usize, rng: &mut R) -> Result<EpisodeNoise> {
    config.validate()?;
    let mut noise = EpisodeNoise {
        config,
        n_sites,
        signals: Vec::new(),
        signal_len: 0,
        block_start: 0,
        ts_step: None,
        rng: ChaCha8Rng::seed_from_u64(rng.next_u64()),
    };
    if config.mode != NoiseMode::Ts {
        noise.resample_block(0);
    }
    Ok(noise)
}

impl EpisodeNoise {
    fn resample_block(&mut self, start: usize) {
        let NoiseConfig {
            beta,
            episode_len,
            timesteps,
            mode,
        } = self.config;
        self.block_start = start;
        self.signal_len = episode_len * timesteps;
        self.signals.clear();
        self.signals.reserve(self.n_sites * self.signal_len);
        match mode {
            NoiseMode::Full => sample_sites(self.n_sites, self.signal_len, beta, 1, &mut self.rng, &mut self.signals),
            NoiseMode::Rls => sample_sites(
                self.n_sites,
                episode_len,
                beta,
                timesteps,
                &mut self.rng,
                &mut self.signals,
            ),
            NoiseMode::Ts => unreachable!("TS draws per action"),
        }
    }

    fn draw_ts(&mut self, n: usize) {
        let t = self.config.timesteps;
        self.signal_len = t;
        self.signals.clear();
        sample_sites(self.n_sites, t, self.config.beta, 1, &mut self.rng, &mut self.signals);
        self.ts_step = Some(n);
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn is_empty(&self) -> bool {
        self.n_sites == 0
    }

    /// Environment step at which the current block begins.
    pub fn cursor(&self) -> usize {
        self.block_start
    }

    /// Full signal of one site for the current block.
    pub fn signal(&self, site: usize) -> &[f64] {
        &self.signals[site * self.signal_len..(site + 1) * self.signal_len]
    }

    fn offset(&mut self, n: usize, t: usize) -> Result<usize> {
        let NoiseConfig {
            episode_len,
            timesteps,
            mode,
            ..
        } = self.config;
        if t >= timesteps {
            return Err(Error::InvalidArgument(format!(
                "timestep {t} out of range (T = {timesteps})"
            )));
        }
        if mode == NoiseMode::Ts {
            if self.ts_step != Some(n) {
                self.draw_ts(n);
            }
            return Ok(t);
        }
        if n < self.block_start {
            return Err(Error::InvalidArgument(format!(
                "step {n} precedes the current noise block starting at {}",
                self.block_start
            )));
        }
        if n - self.block_start >= episode_len {
            self.resample_block(n);
        }
        Ok((n - self.block_start) * timesteps + t)
    }

    /// Noise value of every site at environment step `n`, SNN timestep `t`.
    pub fn slice(&mut self, n: usize, t: usize) -> Result<Vec<f64>> {
        let idx = self.offset(n, t)?;
        Ok((0..self.n_sites)
            .map(|s| self.signals[s * self.signal_len + idx])
            .collect())
    }

    /// All noise consumed by one action selection at step `n`, laid out
    /// timestep-major: `T` rows of `n_sites` values.
    pub fn record(&mut self, n: usize) -> Result<Vec<f64>> {
        let t_steps = self.config.timesteps;
        let mut out = Vec::with_capacity(t_steps * self.n_sites);
        for t in 0..t_steps {
            let idx = self.offset(n, t)?;
            out.extend((0..self.n_sites).map(|s| self.signals[s * self.signal_len + idx]));
        }
        Ok(out)
    }
}

/// Frequency/power pairs of an averaged periodogram, DC excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct Periodogram {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

/// Averages `|FFT|²` of `draws` independent signals of `length` samples.
///
/// Uses `rustfft`, independent of the synthesis transform above.
pub fn average_periodogram<R: Rng + ?Sized>(
    beta: f64,
    length: usize,
    draws: usize,
    rng: &mut R,
) -> Result<Periodogram> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be >= 1".into()));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(length);
    let bins = length / 2;
    let mut power = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); length];
    for _ in 0..draws {
        let signal = sample_colored(length, beta, rng)?;
        buf.iter_mut()
            .zip(&signal)
            .for_each(|(b, &x)| *b = Complex64::new(x, 0.0));
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf[1..=bins]) {
            *p += c.norm_sqr() / (draws as f64 * length as f64);
        }
    }
    let freqs = (1..=bins).map(|k| k as f64 / length as f64).collect();
    Ok(Periodogram { freqs, power })
}

/// Least-squares slope of `log P` against `log f`, dropping the top 10% of
/// frequencies.
pub fn fit_log_slope(pg: &Periodogram) -> f64 {
    let keep = ((pg.freqs.len() as f64) * 0.9).floor() as usize;
    let pts: Vec<(f64, f64)> = pg
        .freqs
        .iter()
        .zip(&pg.power)
        .take(keep.max(2))
        .map(|(f, p)| (f.ln(), p.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
