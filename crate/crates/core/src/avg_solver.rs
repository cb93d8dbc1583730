//! Ergodic sum-rate maximisation under average transmit-power and average
//! interference-power constraints.
//!
//! The no-SIC problem shares its optimum with the SIC problem, and that
//! optimum lets at most one user transmit per fading block (D-TDMA). With
//! multipliers `λ_i` on the per-user power budgets and `μ` on the
//! interference budget, user `i` faces the price `λ_i + μ g_i` and its best
//! power is the water-filling level `[1/price − σ²/h_i]^+`. Each block goes
//! to the user with the largest positive surplus `ln(1 + h_i P/σ²) − price·P`.
//!
//! Expectations are replaced by sample averages over a fixed set of fading
//! states, and the multipliers are found by projected subgradient descent on
//! the dual with per-coordinate step adaptation.
//!
//! On a finite sample the averages jump whenever a state switches users, so
//! the band `|avg/limit − 1| ≤ tol` can fall between two jumps. If the first
//! search stalls, its best multipliers are kept as *selection* prices that
//! fix which user serves each state, and the *power* prices are refitted
//! with that assignment frozen. The averages are then continuous in the
//! prices and the band is reachable, while every block keeps a single user.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSource, ChannelState};
use crate::error::{Error, Result};
use crate::rate::{sum_rate_no_sic, Allocation, NoisePower};

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 10_000;

// States per parallel chunk; fixed so the reduction order never changes.
const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgConstraints {
    p_av: Vec<f64>,
    i_av: f64,
}

impl AvgConstraints {
    pub fn new(p_av: Vec<f64>, i_av: f64) -> Result<Self> {
        if p_av.is_empty() {
            return Err(Error::InvalidInput(
                "average constraints need at least one user".into(),
            ));
        }
        if let Some(bad) = p_av
            .iter()
            .chain([&i_av])
            .find(|v| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "average limits must be positive, got {bad}"
            )));
        }
        Ok(Self { p_av, i_av })
    }

    pub fn uniform(k: usize, p_av: f64, i_av: f64) -> Result<Self> {
        Self::new(vec![p_av; k], i_av)
    }

    pub fn k(&self) -> usize {
        self.p_av.len()
    }

    pub fn p_av(&self) -> &[f64] {
        &self.p_av
    }

    pub fn i_av(&self) -> f64 {
        self.i_av
    }
}

/// Multipliers: `lambda[i]` for user `i`'s power budget, `mu` for the
/// interference budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub mu: f64,
}

impl DualState {
    pub fn new(lambda: Vec<f64>, mu: f64) -> Result<Self> {
        if let Some(bad) = lambda
            .iter()
            .chain([&mu])
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "multipliers must be nonnegative, got {bad}"
            )));
        }
        Ok(Self { lambda, mu })
    }
}

/// A D-TDMA power policy: per-state allocation from fixed multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgPolicy {
    /// Prices that set the transmit power.
    pub duals: DualState,
    /// Prices that choose the transmitting user; usually equal to `duals`.
    pub selection: DualState,
    pub noise: NoisePower,
    /// Ceiling on any single candidate power; only reached when a user's
    /// price is (near) zero, i.e. its constraints are slack.
    pub power_cap: f64,
}

impl AvgPolicy {
    /// Policy that selects and powers users with the same prices.
    pub fn new(duals: DualState, noise: NoisePower, power_cap: f64) -> Result<Self> {
        if !(power_cap.is_finite() && power_cap > 0.0) {
            return Err(Error::InvalidInput(format!(
                "power cap must be positive, got {power_cap}"
            )));
        }
        Ok(Self {
            selection: duals.clone(),
            duals,
            noise,
            power_cap,
        })
    }

    fn power(&self, state: &ChannelState, i: usize, prices: &DualState) -> (f64, f64) {
        let h = state.h()[i];
        let price = prices.lambda[i] + prices.mu * state.g()[i];
        let p = if price > 0.0 {
            (1.0 / price - self.noise.sigma2() / h).clamp(0.0, self.power_cap)
        } else {
            self.power_cap
        };
        (p, price)
    }

    /// The transmitting user and its power, or `None` for a silent block.
    pub fn serve(&self, state: &ChannelState) -> Option<(usize, f64)> {
        let sigma2 = self.noise.sigma2();
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..state.k() {
            let (p, price) = self.power(state, i, &self.selection);
            if p <= 0.0 {
                continue;
            }
            let surplus = (state.h()[i] * p / sigma2).ln_1p() - price * p;
            if surplus > 0.0 && best.is_none_or(|(_, _, s)| surplus > s) {
                best = Some((i, p, surplus));
            }
        }
        let (i, p, _) = best?;
        if self.selection == self.duals {
            return Some((i, p));
        }
        let (p, _) = self.power(state, i, &self.duals);
        (p > 0.0).then_some((i, p))
    }
}

/// `max(0, 1/price − σ²/h)`: maximiser of `ln(1 + hP/σ²) − price·P`.
pub fn waterfill_power(h: f64, price: f64, noise: NoisePower) -> Result<f64> {
    if !(price.is_finite() && price > 0.0) {
        return Err(Error::InvalidInput(format!(
            "price must be positive, got {price}"
        )));
    }
    Ok((1.0 / price - noise.sigma2() / h).max(0.0))
}

/// The policy's allocation for one state; at most one entry is positive.
pub fn per_state_allocation(state: &ChannelState, policy: &AvgPolicy) -> Result<Allocation> {
    let k = state.k();
    if policy.duals.lambda.len() != k || policy.selection.lambda.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: policy.duals.lambda.len(),
        });
    }
    Ok(match policy.serve(state) {
        Some((i, p)) => Allocation::single(state.k(), i, p),
        None => Allocation::zeros(state.k()),
    })
}

/// Knobs of [`solve_dual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualOptions {
    pub sample_count: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Defaults to `1e6 · σ² / (smallest sampled h)`.
    pub power_cap: Option<f64>,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            sample_count: 10_000,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            power_cap: None,
        }
    }
}

/// Achieved sample averages of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgReport {
    pub duals: DualState,
    pub avg_power: Vec<f64>,
    pub avg_interference: f64,
    /// Relative residuals `avg / limit − 1`, users first, interference last.
    pub residuals: Vec<f64>,
    /// Sample-average no-SIC sum rate, nats.
    pub ergodic_rate: f64,
    pub samples: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Every sampled allocation had at most one active user.
    pub dtdma_structure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgSolution {
    pub policy: AvgPolicy,
    pub report: AvgReport,
}

struct Averages {
    power: Vec<f64>,
    interference: f64,
}

fn averages(states: &[ChannelState], policy: &AvgPolicy) -> Averages {
    let k = policy.duals.lambda.len();
    let partial: Vec<(Vec<f64>, f64)> = states
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut power = vec![0.0; k];
            let mut intf = 0.0;
            for s in chunk {
                if let Some((i, p)) = policy.serve(s) {
                    power[i] += p;
                    intf += s.g()[i] * p;
                }
            }
            (power, intf)
        })
        .collect();
    let n = states.len() as f64;
    let mut power = vec![0.0; k];
    let mut interference = 0.0;
    for (p, i) in partial {
        power.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        interference += i;
    }
    power.iter_mut().for_each(|v| *v /= n);
    Averages {
        power,
        interference: interference / n,
    }
}

fn residuals(avg: &Averages, cons: &AvgConstraints) -> Vec<f64> {
    avg.power
        .iter()
        .zip(cons.p_av())
        .map(|(a, l)| a / l - 1.0)
        .chain([avg.interference / cons.i_av() - 1.0])
        .collect()
}

/// Complementary slackness and feasibility within `tol` (relative).
fn satisfied(res: &[f64], duals: &DualState, tol: f64) -> bool {
    res.iter()
        .zip(duals.lambda.iter().chain([&duals.mu]))
        .all(|(&r, &m)| r <= tol && (m < tol || r.abs() <= tol))
}

fn worst_violation(res: &[f64], duals: &DualState) -> f64 {
    res.iter()
        .zip(duals.lambda.iter().chain([&duals.mu]))
        .map(|(&r, &m)| if m > 0.0 { r.abs() } else { r.max(0.0) })
        .fold(0.0, f64::max)
}

/// Sample-average ergodic no-SIC rate of a policy and whether every
/// allocation was single-user.
pub fn evaluate_policy(states: &[ChannelState], policy: &AvgPolicy) -> Result<(f64, bool)> {
    let parts = states
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<(f64, bool)> {
            let mut sum = 0.0;
            let mut single = true;
            for s in chunk {
                let a = per_state_allocation(s, policy)?;
                single &= a.active_count() <= 1;
                sum += sum_rate_no_sic(s, &a, policy.noise)?;
            }
            Ok((sum, single))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sum, single) = parts
        .into_iter()
        .fold((0.0, true), |(a, b), (s, t)| (a + s, b && t));
    Ok((sum / states.len() as f64, single))
}

/// Finds multipliers meeting complementary slackness on the sampled states
/// `0..sample_count` of `source`.
///
/// Returns [`Error::NonConvergence`] carrying the best iterate if the
/// iteration cap is reached first.
pub fn solve_dual(
    source: &ChannelSource,
    cons: &AvgConstraints,
    noise: NoisePower,
    opts: DualOptions,
) -> Result<AvgSolution> {
    if opts.sample_count < 1000 {
        return Err(Error::InvalidInput(
            "dual search needs at least 1000 samples".into(),
        ));
    }
    let states = source.states(opts.sample_count);
    solve_dual_on(&states, cons, noise, opts)
}

/// [`solve_dual`] over an explicit state set.
pub fn solve_dual_on(
    states: &[ChannelState],
    cons: &AvgConstraints,
    noise: NoisePower,
    opts: DualOptions,
) -> Result<AvgSolution> {
    let k = cons.k();
    if states.is_empty() {
        return Err(Error::InvalidInput("no sampled states".into()));
    }
    if let Some(s) = states.iter().find(|s| s.k() != k) {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: s.k(),
        });
    }
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let sigma2 = noise.sigma2();
    let min_h = states
        .iter()
        .flat_map(|s| s.h().iter().copied())
        .fold(f64::INFINITY, f64::min);
    let power_cap = opts.power_cap.unwrap_or(1e6 * sigma2 / min_h);

    // Start each price at the water level that would spend the user's budget
    // on an average channel; the interference price starts at zero.
    let mean_h: Vec<f64> = (0..k)
        .map(|i| states.iter().map(|s| s.h()[i]).sum::<f64>() / states.len() as f64)
        .collect();
    let duals = DualState {
        lambda: (0..k)
            .map(|i| 1.0 / (cons.p_av()[i] + sigma2 / mean_h[i]))
            .collect(),
        mu: 0.0,
    };
    let mean_lambda = duals.lambda.iter().sum::<f64>() / k as f64;
    let mean_g = states.iter().flat_map(|s| s.g().iter()).sum::<f64>() / (states.len() * k) as f64;
    let init_steps: Vec<f64> = duals
        .lambda
        .iter()
        .map(|l| 0.5 * l)
        .chain([0.5 * mean_lambda / mean_g])
        .collect();

    let mut policy = AvgPolicy::new(duals, noise, power_cap)?;
    let mut search = Search {
        best: None,
        iterations: 0,
    };
    let stage_one = (opts.max_iter / 4).max(1).min(opts.max_iter);
    let mut converged = search.descend(
        states,
        cons,
        opts.tol,
        &mut policy,
        init_steps.clone(),
        stage_one,
        false,
    );
    if !converged && search.iterations < opts.max_iter {
        // Freeze the user assignment of the best iterate and refit powers.
        let (_, best) = search.best.clone().expect("at least one iteration");
        policy = best;
        let steps = policy
            .duals
            .lambda
            .iter()
            .chain([&policy.duals.mu])
            .zip(&init_steps)
            .map(|(&d, &s0)| if d > 0.0 { 0.1 * d } else { s0 })
            .collect();
        let budget = opts.max_iter - search.iterations;
        converged = search.descend(states, cons, opts.tol, &mut policy, steps, budget, true);
    }
    if !converged {
        policy = search.best.take().expect("at least one iteration").1;
    }

    let avg = averages(states, &policy);
    let res = residuals(&avg, cons);
    let (ergodic_rate, dtdma_structure) = evaluate_policy(states, &policy)?;
    let solution = AvgSolution {
        report: AvgReport {
            duals: policy.duals.clone(),
            avg_power: avg.power,
            avg_interference: avg.interference,
            residuals: res,
            ergodic_rate,
            samples: states.len(),
            iterations: search.iterations,
            converged,
            dtdma_structure,
        },
        policy,
    };
    if converged {
        Ok(solution)
    } else {
        Err(Error::NonConvergence(Box::new(solution)))
    }
}

struct Search {
    /// Smallest constraint violation seen, with its policy.
    best: Option<(f64, AvgPolicy)>,
    iterations: usize,
}

impl Search {
    /// Projected subgradient steps on `policy.duals`; a sign flip of a
    /// residual halves that coordinate's step, a repeat grows it. Unless
    /// `frozen`, the selection prices follow the power prices.
    #[allow(clippy::too_many_arguments)]
    fn descend(
        &mut self,
        states: &[ChannelState],
        cons: &AvgConstraints,
        tol: f64,
        policy: &mut AvgPolicy,
        mut steps: Vec<f64>,
        budget: usize,
        frozen: bool,
    ) -> bool {
        let k = cons.k();
        let mut last_sign = vec![0i8; k + 1];
        for _ in 0..budget {
            self.iterations += 1;
            if !frozen {
                policy.selection = policy.duals.clone();
            }
            let avg = averages(states, policy);
            let res = residuals(&avg, cons);
            let violation = worst_violation(&res, &policy.duals);
            if self.best.as_ref().is_none_or(|(v, _)| violation < *v) {
                self.best = Some((violation, policy.clone()));
            }
            if satisfied(&res, &policy.duals, tol) {
                return true;
            }
            for (c, &r) in res.iter().enumerate() {
                let sign: i8 = if r > 0.0 {
                    1
                } else if r < 0.0 {
                    -1
                } else {
                    0
                };
                if sign == 0 {
                    continue;
                }
                if last_sign[c] == -sign {
                    steps[c] *= 0.5;
                } else if last_sign[c] == sign {
                    steps[c] *= 1.2;
                }
                last_sign[c] = sign;
                let m = if c < k {
                    &mut policy.duals.lambda[c]
                } else {
                    &mut policy.duals.mu
                };
                *m = (*m + sign as f64 * steps[c]).max(0.0);
                if *m == 0.0 {
                    last_sign[c] = 0;
                }
            }
        }
        false
    }
}

/// Common power of the constant-power baseline: the tightest power budget,
/// scaled down further if the interference budget binds on the sample.
pub fn constant_power_level(states: &[ChannelState], cons: &AvgConstraints) -> f64 {
    let n = states.len() as f64;
    let sum_g: f64 = states.iter().flat_map(|s| s.g().iter()).sum::<f64>() / n;
    cons.p_av()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(cons.i_av() / sum_g)
}

/// Every user transmits [`constant_power_level`] in every block.
pub fn baseline_constant_power(
    states: &[ChannelState],
    cons: &AvgConstraints,
    noise: NoisePower,
) -> Result<f64> {
    let alloc = Allocation::new(vec![constant_power_level(states, cons); cons.k()])?;
    let total = states
        .iter()
        .map(|s| sum_rate_no_sic(s, &alloc, noise))
        .sum::<Result<f64>>()?;
    Ok(total / states.len() as f64)
}

/// Transmit power of the round-robin baseline, where block `t` goes to user
/// `t mod K`: the largest common power meeting both budgets on the sample.
pub fn round_robin_power_level(states: &[ChannelState], cons: &AvgConstraints) -> f64 {
    let k = cons.k();
    let n = states.len() as f64;
    let mut share = vec![0.0; k];
    let mut gain_per_watt = 0.0;
    for (t, s) in states.iter().enumerate() {
        share[t % k] += 1.0 / n;
        gain_per_watt += s.g()[t % k] / n;
    }
    share
        .iter()
        .zip(cons.p_av())
        .filter(|(sh, _)| **sh > 0.0)
        .map(|(sh, l)| l / sh)
        .fold(cons.i_av() / gain_per_watt, f64::min)
}

pub fn baseline_round_robin(
    states: &[ChannelState],
    cons: &AvgConstraints,
    noise: NoisePower,
) -> Result<f64> {
    let k = cons.k();
    let p_tx = round_robin_power_level(states, cons);
    let total = states
        .iter()
        .enumerate()
        .map(|(t, s)| sum_rate_no_sic(s, &Allocation::single(k, t % k, p_tx), noise))
        .sum::<Result<f64>>()?;
    Ok(total / states.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FadingModel;
    use approx::assert_relative_eq;

    const UNIT: NoisePower = NoisePower::UNIT;

    fn policy(lambda: &[f64], mu: f64) -> AvgPolicy {
        AvgPolicy::new(DualState::new(lambda.to_vec(), mu).unwrap(), UNIT, 1e6).unwrap()
    }

    #[test]
    fn waterfill_levels() {
        assert_eq!(waterfill_power(1.0, 1.0, UNIT).unwrap(), 0.0);
        assert_eq!(waterfill_power(1.0, 0.5, UNIT).unwrap(), 1.0);
        assert_eq!(waterfill_power(2.0, 0.25, UNIT).unwrap(), 3.5);
        assert!(waterfill_power(1.0, 0.0, UNIT).is_err());
        assert!(waterfill_power(1.0, -1.0, UNIT).is_err());
    }

    #[test]
    fn allocation_examples() {
        let s = ChannelState::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let a = per_state_allocation(&s, &policy(&[1.0, 1.0], 0.0)).unwrap();
        assert_eq!(a.powers(), &[0.0, 0.0]);
        let a = per_state_allocation(&s, &policy(&[0.5, 10.0], 0.0)).unwrap();
        assert_eq!(a.powers(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_price_uses_cap() {
        let s = ChannelState::new(vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        let a = per_state_allocation(&s, &policy(&[0.0, 0.0], 0.0)).unwrap();
        assert_eq!(a.powers(), &[0.0, 1e6]);
    }

    #[test]
    fn allocation_length_checked() {
        let s = ChannelState::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(per_state_allocation(&s, &policy(&[1.0], 0.0)).is_err());
    }

    #[test]
    fn constant_channel_single_user() {
        let src = ChannelSource::Fixed(ChannelState::new(vec![1.0], vec![1.0]).unwrap());
        let cons = AvgConstraints::new(vec![1.0], 1e9).unwrap();
        let sol = solve_dual(
            &src,
            &cons,
            UNIT,
            DualOptions {
                sample_count: 1000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((sol.report.avg_power[0] - 1.0).abs() <= 1e-3);
        assert_relative_eq!(sol.policy.duals.lambda[0], 0.5, max_relative = 2e-3);
        assert!(sol.policy.duals.mu < 1e-3);
    }

    #[test]
    fn slack_constraints_serve_at_cap() {
        let m = FadingModel::new(2, 1.0, 1.0, 3).unwrap();
        let cons = AvgConstraints::uniform(2, 1e15, 1e15).unwrap();
        let sol = solve_dual(
            &ChannelSource::Fading(m),
            &cons,
            UNIT,
            DualOptions {
                sample_count: 1000,
                power_cap: Some(1e6),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(sol.policy.duals.lambda.iter().all(|&l| l < 1e-3));
        assert!(sol.policy.duals.mu < 1e-3);
        for r in 0..50 {
            let a =
                per_state_allocation(&crate::channel::sample_state(&m, r), &sol.policy).unwrap();
            assert_eq!(a.powers().iter().copied().fold(0.0, f64::max), 1e6);
        }
    }

    #[test]
    fn fading_two_users_feasible() {
        let m = FadingModel::new(2, 1.0, 1.0, 11).unwrap();
        let cons = AvgConstraints::uniform(2, 1.0, 1.0).unwrap();
        let sol = solve_dual(
            &ChannelSource::Fading(m),
            &cons,
            UNIT,
            DualOptions::default(),
        )
        .unwrap();
        let r = &sol.report;
        assert!(r.converged && r.dtdma_structure);
        assert!(r.avg_power.iter().all(|&p| p <= 1.0 + 1e-3));
        assert!(r.avg_interference <= 1.0 + 1e-3);
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let m = FadingModel::new(2, 1.0, 1.0, 11).unwrap();
        let cons = AvgConstraints::uniform(2, 1.0, 1.0).unwrap();
        let err = solve_dual(
            &ChannelSource::Fading(m),
            &cons,
            UNIT,
            DualOptions {
                max_iter: 2,
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            Error::NonConvergence(sol) => {
                assert!(!sol.report.converged);
                assert_eq!(sol.report.iterations, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let m = FadingModel::new(2, 1.0, 1.0, 11).unwrap();
        let cons = AvgConstraints::uniform(2, 1.0, 1.0).unwrap();
        let opts = DualOptions {
            sample_count: 10,
            ..Default::default()
        };
        assert!(solve_dual(&ChannelSource::Fading(m), &cons, UNIT, opts).is_err());
    }
}
