//! Achievable rates of one fading block, in nats.
//!
//! Without SIC every user decodes against the others' received power as
//! noise: `r_i = ln(1 + h_i P_i / (σ² + Σ_{j≠i} h_j P_j))`. With SIC the sum
//! rate is `ln(1 + Σ h_i P_i / σ²)`, which upper-bounds the no-SIC sum rate
//! for every allocation.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};

/// Per-user transmit powers of one fading block (linear, same units as σ²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(Vec<f64>);

impl Allocation {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "transmit powers must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Self(p))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    /// Only user `i` transmits, at power `p`.
    pub fn single(k: usize, i: usize, p: f64) -> Self {
        let mut v = vec![0.0; k];
        v[i] = p;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn powers(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Number of users with strictly positive power.
    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&p| p > 0.0).count()
    }

    pub(crate) fn from_vec_unchecked(p: Vec<f64>) -> Self {
        debug_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self(p)
    }
}

/// Receiver noise variance σ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoisePower(f64);

impl NoisePower {
    /// σ² = 1, the reference level for dB-valued powers.
    pub const UNIT: NoisePower = NoisePower(1.0);

    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise power must be positive, got {sigma2}"
            )));
        }
        Ok(Self(sigma2))
    }

    pub fn sigma2(self) -> f64 {
        self.0
    }
}

impl Default for NoisePower {
    fn default() -> Self {
        Self::UNIT
    }
}

/// Received powers `h_i P_i` with a compensated total, so that the
/// interference seen by each user is `total - own` without cancellation
/// error.
pub(crate) struct Received {
    x: Vec<f64>,
    hi: f64,
    lo: f64,
}

impl Received {
    pub(crate) fn new(h: &[f64], p: &[f64]) -> Self {
        let x: Vec<f64> = h.iter().zip(p).map(|(h, p)| h * p).collect();
        let (mut hi, mut lo) = (0.0, 0.0);
        for &v in &x {
            let (s, e) = two_sum(hi, v);
            hi = s;
            lo += e;
        }
        Self { x, hi, lo }
    }

    pub(crate) fn own(&self, i: usize) -> f64 {
        self.x[i]
    }

    pub(crate) fn total(&self) -> f64 {
        self.hi + self.lo
    }

    /// `Σ_{j≠i} h_j P_j`.
    pub(crate) fn interference(&self, i: usize) -> f64 {
        let (d, e) = two_sum(self.hi, -self.x[i]);
        (d + (e + self.lo)).max(0.0)
    }

    pub(crate) fn user_rate(&self, i: usize, sigma2: f64) -> f64 {
        let own = self.x[i];
        if own == 0.0 {
            return 0.0;
        }
        (own / (sigma2 + self.interference(i))).ln_1p()
    }

    pub(crate) fn sum_rate(&self, sigma2: f64) -> f64 {
        (0..self.x.len()).map(|i| self.user_rate(i, sigma2)).sum()
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

fn check_len(state: &ChannelState, alloc: &Allocation) -> Result<()> {
    if alloc.len() != state.k() {
        return Err(Error::LengthMismatch {
            expected: state.k(),
            actual: alloc.len(),
        });
    }
    Ok(())
}

fn check_index(state: &ChannelState, i: usize) -> Result<()> {
    if i >= state.k() {
        return Err(Error::IndexOutOfRange {
            index: i,
            k: state.k(),
        });
    }
    Ok(())
}

/// Rate of user `i` with all other users treated as noise.
pub fn per_user_rate(
    state: &ChannelState,
    alloc: &Allocation,
    noise: NoisePower,
    i: usize,
) -> Result<f64> {
    check_len(state, alloc)?;
    check_index(state, i)?;
    Ok(Received::new(state.h(), alloc.powers()).user_rate(i, noise.sigma2()))
}

pub fn sum_rate_no_sic(state: &ChannelState, alloc: &Allocation, noise: NoisePower) -> Result<f64> {
    check_len(state, alloc)?;
    Ok(Received::new(state.h(), alloc.powers()).sum_rate(noise.sigma2()))
}

pub fn sum_rate_sic(state: &ChannelState, alloc: &Allocation, noise: NoisePower) -> Result<f64> {
    check_len(state, alloc)?;
    Ok((Received::new(state.h(), alloc.powers()).total() / noise.sigma2()).ln_1p())
}

/// Partial derivative of the no-SIC sum rate with respect to `P_n`:
///
/// `h_n / (σ² + Σ_j h_j P_j) · (1 − Σ_{i≠n} h_i P_i / (σ² + Σ_{j≠i} h_j P_j))`.
///
/// The second factor is increasing in `P_n`, so the sum rate is
/// quasiconvex along each coordinate.
pub fn rate_gradient(
    state: &ChannelState,
    alloc: &Allocation,
    noise: NoisePower,
    n: usize,
) -> Result<f64> {
    check_len(state, alloc)?;
    check_index(state, n)?;
    let sigma2 = noise.sigma2();
    let rx = Received::new(state.h(), alloc.powers());
    let sinr_sum: f64 = (0..state.k())
        .filter(|&i| i != n)
        .map(|i| rx.own(i) / (sigma2 + rx.interference(i)))
        .sum();
    Ok(state.h()[n] / (sigma2 + rx.total()) * (1.0 - sinr_sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn st(h: &[f64]) -> ChannelState {
        ChannelState::new(h.to_vec(), vec![1.0; h.len()]).unwrap()
    }

    fn al(p: &[f64]) -> Allocation {
        Allocation::new(p.to_vec()).unwrap()
    }

    #[test]
    fn single_user_unit_rate() {
        let r = per_user_rate(&st(&[1.0]), &al(&[E - 1.0]), NoisePower::default(), 0).unwrap();
        assert_relative_eq!(r, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn silent_user_has_zero_rate() {
        let r =
            per_user_rate(&st(&[1.0, 3.0]), &al(&[0.0, 2.0]), NoisePower::default(), 0).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn two_user_hand_values() {
        let s = st(&[1.0, 2.0]);
        let p = al(&[1.0, 1.0]);
        let n = NoisePower::default();
        assert_relative_eq!(
            per_user_rate(&s, &p, n, 0).unwrap(),
            (4.0f64 / 3.0).ln(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            sum_rate_no_sic(&s, &p, n).unwrap(),
            (4.0f64 / 3.0).ln() + 2f64.ln(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            sum_rate_no_sic(&s, &p, n).unwrap(),
            0.980829,
            epsilon = 1e-6
        );
        assert_relative_eq!(sum_rate_sic(&s, &p, n).unwrap(), 4f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn zero_allocation_is_exactly_zero() {
        let s = st(&[1.0, 2.0, 0.5]);
        let p = Allocation::zeros(3);
        assert_eq!(sum_rate_no_sic(&s, &p, NoisePower::default()).unwrap(), 0.0);
        assert_eq!(sum_rate_sic(&s, &p, NoisePower::default()).unwrap(), 0.0);
    }

    #[test]
    fn single_user_sic_equals_no_sic() {
        let s = st(&[0.37]);
        let p = al(&[12.5]);
        let n = NoisePower::new(0.8).unwrap();
        assert_eq!(
            sum_rate_no_sic(&s, &p, n).unwrap(),
            sum_rate_sic(&s, &p, n).unwrap()
        );
    }

    #[test]
    fn gradient_hand_values() {
        let n = NoisePower::default();
        assert_eq!(rate_gradient(&st(&[1.0]), &al(&[0.0]), n, 0).unwrap(), 1.0);
        assert_relative_eq!(
            rate_gradient(&st(&[1.0, 1.0]), &al(&[1.0, 1.0]), n, 0).unwrap(),
            1.0 / 6.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gradient_matches_central_difference() {
        let s = ChannelState::new(vec![0.7, 1.9, 0.2, 1.1], vec![1.0; 4]).unwrap();
        let p: Vec<f64> = vec![0.5, 1.5, 2.0, 0.25];
        let noise = NoisePower::default();
        for n in 0..4 {
            let step = 1e-6 * p[n].max(1.0);
            let mut up = p.clone();
            up[n] += step;
            let mut down = p.clone();
            down[n] -= step;
            let fd = (sum_rate_no_sic(&s, &al(&up), noise).unwrap()
                - sum_rate_no_sic(&s, &al(&down), noise).unwrap())
                / (2.0 * step);
            let g = rate_gradient(&s, &al(&p), noise, n).unwrap();
            assert!(
                (g - fd).abs() <= 1e-6 * g.abs().max(1e-3),
                "n={n}: {g} vs {fd}"
            );
        }
    }

    #[test]
    fn interference_has_no_cancellation_error() {
        let s = ChannelState::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let p = al(&[1e12 + 0.1, 1e-9]);
        let rx = Received::new(s.h(), p.powers());
        assert_eq!(rx.interference(0), 1e-9);
    }

    #[test]
    fn errors() {
        let s = st(&[1.0, 2.0]);
        let n = NoisePower::default();
        assert!(matches!(
            per_user_rate(&s, &al(&[1.0, 1.0]), n, 2),
            Err(Error::IndexOutOfRange { index: 2, k: 2 })
        ));
        assert!(matches!(
            sum_rate_no_sic(&s, &al(&[1.0]), n),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(sum_rate_sic(&s, &al(&[1.0, 1.0, 1.0]), n).is_err());
        assert!(rate_gradient(&s, &al(&[1.0, 1.0]), n, 5).is_err());
        assert!(Allocation::new(vec![-1.0]).is_err());
        assert!(NoisePower::new(0.0).is_err());
    }
}
