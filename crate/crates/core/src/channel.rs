//! Block-fading channel states.
//!
//! Each fading block carries two gains per secondary user: `h[i]` on the
//! secondary link to the base station and `g[i]` on the interference link to
//! the primary receiver. Under Rayleigh fading both are exponentially
//! distributed power gains.
//!
//! Sampling is counter-based: the round index selects a ChaCha stream under
//! the model seed, so round `r` always yields the same state no matter which
//! rounds were drawn before it or on which thread.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gains of one fading block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    h: Vec<f64>,
    g: Vec<f64>,
}

impl ChannelState {
    pub fn new(h: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidInput(
                "channel state needs at least one user".into(),
            ));
        }
        if h.len() != g.len() {
            return Err(Error::LengthMismatch {
                expected: h.len(),
                actual: g.len(),
            });
        }
        if let Some(bad) = h.iter().chain(&g).find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "channel gains must be finite and strictly positive, got {bad}"
            )));
        }
        Ok(Self { h, g })
    }

    /// Number of secondary users.
    pub fn k(&self) -> usize {
        self.h.len()
    }

    /// Secondary-link power gains.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Interference-link power gains.
    pub fn g(&self) -> &[f64] {
        &self.g
    }
}

/// i.i.d. Rayleigh block fading: exponential power gains with the given means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingModel {
    k: usize,
    mean_h: f64,
    mean_g: f64,
    seed: u64,
}

impl FadingModel {
    pub fn new(k: usize, mean_h: f64, mean_g: f64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("fading model needs k >= 1".into()));
        }
        for (name, v) in [("mean_h", mean_h), ("mean_g", mean_g)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            k,
            mean_h,
            mean_g,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mean_h(&self) -> f64 {
        self.mean_h
    }

    pub fn mean_g(&self) -> f64 {
        self.mean_g
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same model with a different user count (streams keyed identically).
    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::new(k, self.mean_h, self.mean_g, self.seed)
    }
}

/// Draws the channel state of fading block `round_index`.
///
/// Gains are drawn as interleaved `(h[i], g[i])` pairs, so the first `k`
/// users of a `k + 1` user model see exactly the gains of the `k` user model
/// with the same seed.
pub fn sample_state(model: &FadingModel, round_index: u64) -> ChannelState {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(round_index);
    let mut h = Vec::with_capacity(model.k);
    let mut g = Vec::with_capacity(model.k);
    for _ in 0..model.k {
        h.push(model.mean_h * positive_exp1(&mut rng));
        g.push(model.mean_g * positive_exp1(&mut rng));
    }
    ChannelState { h, g }
}

// Exact zeros are redrawn; every gain must be strictly positive.
fn positive_exp1<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.sample(Exp1);
        if x > 0.0 {
            return x;
        }
    }
}

/// Where simulation rounds get their channel states from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSource {
    Fading(FadingModel),
    /// Every round sees the same state (no fading).
    Fixed(ChannelState),
}

impl ChannelSource {
    pub fn k(&self) -> usize {
        match self {
            ChannelSource::Fading(m) => m.k(),
            ChannelSource::Fixed(s) => s.k(),
        }
    }

    pub fn state(&self, round_index: u64) -> ChannelState {
        match self {
            ChannelSource::Fading(m) => sample_state(m, round_index),
            ChannelSource::Fixed(s) => s.clone(),
        }
    }

    /// States for rounds `0..rounds`, in round order.
    pub fn states(&self, rounds: usize) -> Vec<ChannelState> {
        (0..rounds as u64).map(|r| self.state(r)).collect()
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ChannelSource::Fading(m) => Some(m.seed()),
            ChannelSource::Fixed(_) => None,
        }
    }
}

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_round_same_state() {
        let m = FadingModel::new(1, 1.0, 1.0, 17).unwrap();
        assert_eq!(sample_state(&m, 0), sample_state(&m, 0));
        assert_ne!(sample_state(&m, 0), sample_state(&m, 1));
    }

    #[test]
    fn rounds_do_not_depend_on_draw_order() {
        let m = FadingModel::new(3, 1.0, 0.5, 99).unwrap();
        let forward: Vec<_> = (0..20).map(|r| sample_state(&m, r)).collect();
        let backward: Vec<_> = (0..20).rev().map(|r| sample_state(&m, r)).collect();
        for (r, s) in forward.iter().enumerate() {
            assert_eq!(s, &backward[19 - r]);
        }
    }

    #[test]
    fn larger_model_extends_smaller_one() {
        let m3 = FadingModel::new(3, 1.0, 1.0, 5).unwrap();
        let m5 = m3.with_k(5).unwrap();
        for r in 0..50 {
            let a = sample_state(&m3, r);
            let b = sample_state(&m5, r);
            assert_eq!(a.h(), &b.h()[..3]);
            assert_eq!(a.g(), &b.g()[..3]);
        }
    }

    #[test]
    fn empirical_means() {
        let mh = FadingModel::new(1, 1.0, 0.1, 2024).unwrap();
        let n = 100_000;
        let (mut sh, mut sg) = (0.0, 0.0);
        for r in 0..n {
            let s = sample_state(&mh, r);
            sh += s.h()[0];
            sg += s.g()[0];
        }
        let (mean_h, mean_g) = (sh / n as f64, sg / n as f64);
        assert!((mean_h - 1.0).abs() < 0.01, "mean h = {mean_h}");
        assert!((mean_g - 0.1).abs() < 0.001, "mean g = {mean_g}");
    }

    #[test]
    fn kolmogorov_smirnov_against_exponential() {
        let m = FadingModel::new(1, 2.0, 1.0, 77).unwrap();
        let n = 10_000;
        let mut xs: Vec<f64> = (0..n).map(|r| sample_state(&m, r).h()[0]).collect();
        xs.sort_by(f64::total_cmp);
        let nf = n as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - (-x / 2.0).exp();
                (cdf - i as f64 / nf)
                    .abs()
                    .max(((i + 1) as f64 / nf - cdf).abs())
            })
            .fold(0.0, f64::max);
        // 1% two-sided critical value, large-sample approximation.
        let critical = 1.628 / nf.sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }

    #[test]
    fn gains_strictly_positive() {
        let m = FadingModel::new(8, 1e-3, 1e-3, 1).unwrap();
        for r in 0..2000 {
            let s = sample_state(&m, r);
            assert!(s.h().iter().chain(s.g()).all(|&v| v > 0.0));
        }
    }

    #[test]
    fn state_validation() {
        assert!(ChannelState::new(vec![], vec![]).is_err());
        assert!(ChannelState::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(ChannelState::new(vec![0.0], vec![1.0]).is_err());
        assert!(ChannelState::new(vec![1.0], vec![f64::NAN]).is_err());
        assert!(FadingModel::new(0, 1.0, 1.0, 0).is_err());
        assert!(FadingModel::new(1, -1.0, 1.0, 0).is_err());
    }

    #[test]
    fn db_conversion() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((db_to_linear(-10.0) - 0.1).abs() < 1e-15);
        assert!((linear_to_db(db_to_linear(3.7)) - 3.7).abs() < 1e-12);
    }
}
