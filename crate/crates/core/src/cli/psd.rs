//! Spectral audit of the colored-noise generator.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::noisegen::{average_periodogram, fit_log_slope, Periodogram};
use crate::Result;

/// Slope tolerance used by the `psd-check` subcommand.
pub const SLOPE_TOLERANCE: f64 = 0.15;

#[derive(Clone, Debug)]
pub struct PsdReport {
    pub beta: f64,
    pub periodogram: Periodogram,
    pub slope: f64,
}

impl PsdReport {
    /// True when the fitted slope lies within `tol` of `−β`.
    pub fn within(&self, tol: f64) -> bool {
        (self.slope + self.beta).abs() <= tol
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq,power\n");
        for (f, p) in self.periodogram.freqs.iter().zip(&self.periodogram.power) {
            writeln!(out, "{f},{p}").expect("writing to a String");
        }
        out
    }
}

pub fn psd_check(beta: f64, length: usize, draws: usize, seed: u64) -> Result<PsdReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let periodogram = average_periodogram(beta, length, draws, &mut rng)?;
    let slope = fit_log_slope(&periodogram);
    Ok(PsdReport {
        beta,
        periodogram,
        slope,
    })
}
