//! Per-state power allocation under peak transmit-power and peak
//! interference-power constraints.
//!
//! The feasible set is the box `0 ≤ P ≤ p_pk` cut by the half-space
//! `Σ g_i P_i ≤ i_pk`. The no-SIC sum rate is quasiconvex along every
//! coordinate, so its maximum sits on a vertex of that polytope: every user
//! is either silent or at its peak power, except at most one "fractional"
//! user whose power exhausts the interference budget exactly.
//!
//! Solvers:
//!
//! - [`solve_extreme_search`]: exact, enumerates all vertices (`K ≤ 20`).
//! - [`solve_dtdma`]: the single best user at `min(p_pk, i_pk / g)`; optimal
//!   whenever [`dtdma_condition`] fires.
//! - [`solve_sorted`]: exact linear-time prefix scan for channels admitting
//!   the ordering checked by [`check_ordering`].
//! - [`solve_sic_op`]: the allocation that is optimal *with* SIC, reused
//!   as a heuristic.
//! - [`solve_hybrid`]: the better of SIC-OP and D-TDMA.

use std::cmp::Ordering;
use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::rate::{sum_rate_no_sic, sum_rate_sic, Allocation, NoisePower};

/// Largest user count accepted by vertex enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Relative tolerance for feasibility and constraint tightness.
pub const FEASIBILITY_TOL: f64 = 1e-9;

// Relative score band inside which two vertices count as tied.
const TIE_TOL: f64 = 1e-12;

/// Peak transmit-power limits per user and the peak interference limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakConstraints {
    p_pk: Vec<f64>,
    i_pk: f64,
}

impl PeakConstraints {
    pub fn new(p_pk: Vec<f64>, i_pk: f64) -> Result<Self> {
        if p_pk.is_empty() {
            return Err(Error::InvalidInput(
                "peak constraints need at least one user".into(),
            ));
        }
        if let Some(bad) = p_pk
            .iter()
            .chain([&i_pk])
            .find(|v| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "peak limits must be positive, got {bad}"
            )));
        }
        Ok(Self { p_pk, i_pk })
    }

    /// Common peak power `p_pk` for all `k` users.
    pub fn uniform(k: usize, p_pk: f64, i_pk: f64) -> Result<Self> {
        Self::new(vec![p_pk; k], i_pk)
    }

    pub fn k(&self) -> usize {
        self.p_pk.len()
    }

    pub fn p_pk(&self) -> &[f64] {
        &self.p_pk
    }

    pub fn i_pk(&self) -> f64 {
        self.i_pk
    }

    /// Box and interference constraints hold within [`FEASIBILITY_TOL`].
    pub fn is_feasible(&self, state: &ChannelState, alloc: &Allocation) -> bool {
        if alloc.len() != self.k() || state.k() != self.k() {
            return false;
        }
        let within_box = alloc
            .powers()
            .iter()
            .zip(&self.p_pk)
            .all(|(&p, &cap)| p >= 0.0 && p <= cap * (1.0 + FEASIBILITY_TOL));
        within_box && interference(state, alloc) <= self.i_pk * (1.0 + FEASIBILITY_TOL)
    }

    fn check(&self, state: &ChannelState) -> Result<()> {
        if state.k() != self.k() {
            return Err(Error::LengthMismatch {
                expected: state.k(),
                actual: self.k(),
            });
        }
        Ok(())
    }

    /// `T_i = min(p_pk_i, i_pk / g_i)`: the most power user `i` can use alone.
    fn solo_power(&self, state: &ChannelState, i: usize) -> f64 {
        self.p_pk[i].min(self.i_pk / state.g()[i])
    }
}

/// Interference `Σ g_i P_i` at the primary receiver.
pub fn interference(state: &ChannelState, alloc: &Allocation) -> f64 {
    state
        .g()
        .iter()
        .zip(alloc.powers())
        .map(|(g, p)| g * p)
        .sum()
}

/// Solver tag carried by every [`SolveReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Extreme,
    Dtdma,
    Sorted,
    SicOp,
    Hybrid,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Extreme,
        Algorithm::Dtdma,
        Algorithm::Sorted,
        Algorithm::SicOp,
        Algorithm::Hybrid,
        Algorithm::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Extreme => "extreme",
            Algorithm::Dtdma => "dtdma",
            Algorithm::Sorted => "sorted",
            Algorithm::SicOp => "sic-op",
            Algorithm::Hybrid => "hybrid",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(Algorithm::Extreme),
            _ => Algorithm::ALL
                .into_iter()
                .find(|a| a.as_str() == s)
                .ok_or_else(|| Error::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// Result of one per-state solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub alloc: Allocation,
    /// No-SIC sum rate of `alloc`, nats.
    pub rate: f64,
    /// Users transmitting exactly at their peak power.
    pub peak_set: Vec<usize>,
    /// The single user strictly between zero and its peak, if exactly one.
    pub fractional_user: Option<usize>,
    /// D-TDMA only: whether the sufficient optimality condition held.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub condition_held: Option<bool>,
    /// Hybrid only: which branch was returned.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selected: Option<Algorithm>,
}

impl SolveReport {
    pub(crate) fn build(
        algorithm: Algorithm,
        state: &ChannelState,
        cons: &PeakConstraints,
        noise: NoisePower,
        alloc: Allocation,
    ) -> Result<Self> {
        let rate = sum_rate_no_sic(state, &alloc, noise)?;
        let mut peak_set = Vec::new();
        let mut interior = Vec::new();
        for (i, (&p, &cap)) in alloc.powers().iter().zip(cons.p_pk()).enumerate() {
            if p == cap {
                peak_set.push(i);
            } else if p > 0.0 {
                interior.push(i);
            }
        }
        let fractional_user = match interior.as_slice() {
            [only] => Some(*only),
            _ => None,
        };
        Ok(Self {
            algorithm,
            alloc,
            rate,
            peak_set,
            fractional_user,
            condition_held: None,
            selected: None,
        })
    }

    /// Sum rate of the same allocation when the receiver uses SIC.
    pub fn rate_with_sic(&self, state: &ChannelState, noise: NoisePower) -> Result<f64> {
        sum_rate_sic(state, &self.alloc, noise)
    }
}

// --- vertex enumeration -----------------------------------------------------

/// A vertex: users in `mask` at peak, optionally one more user at a
/// fractional power that makes the interference constraint tight.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Vertex {
    mask: u32,
    fractional: Option<(usize, f64)>,
}

impl Vertex {
    fn active_mask(&self) -> u32 {
        match self.fractional {
            Some((j, _)) => self.mask | (1 << j),
            None => self.mask,
        }
    }

    fn allocation(&self, state: &ChannelState, cons: &PeakConstraints) -> Allocation {
        let at_peak: Vec<bool> = (0..state.k()).map(|i| self.mask & (1 << i) != 0).collect();
        let mut p: Vec<f64> = (0..state.k())
            .map(|i| if at_peak[i] { cons.p_pk[i] } else { 0.0 })
            .collect();
        if let Some((j, _)) = self.fractional {
            p[j] = completion(state, cons, &at_peak, j);
        }
        Allocation::from_vec_unchecked(p)
    }
}

/// Power at which user `j` exhausts the interference budget left by the
/// users flagged in `at_peak`. Summed in index order so that every solver
/// producing the same vertex produces the same bits.
fn completion(state: &ChannelState, cons: &PeakConstraints, at_peak: &[bool], j: usize) -> f64 {
    let g = state.g();
    let used: f64 = (0..state.k())
        .filter(|&i| at_peak[i])
        .map(|i| g[i] * cons.p_pk[i])
        .sum();
    ((cons.i_pk - used) / g[j]).clamp(0.0, cons.p_pk[j])
}

fn check_cap(k: usize, cap: usize) -> Result<()> {
    if k > cap || k > 31 {
        return Err(Error::TooManyUsers {
            k,
            cap: cap.min(31),
        });
    }
    Ok(())
}

/// Visits every vertex of `{0 ≤ P ≤ p_pk, Σ g_i P_i ≤ i_pk}` once.
///
/// Binary patterns are kept when their interference is within
/// [`FEASIBILITY_TOL`] of the limit. A fractional completion within half that
/// tolerance of `0` or of the user's peak coincides with a binary pattern and
/// is skipped.
fn for_each_vertex(state: &ChannelState, cons: &PeakConstraints, mut visit: impl FnMut(Vertex)) {
    let k = state.k();
    let cost: Vec<f64> = (0..k).map(|i| state.g()[i] * cons.p_pk[i]).collect();
    let limit = cons.i_pk * (1.0 + FEASIBILITY_TOL);
    let snap = 0.5 * FEASIBILITY_TOL;
    let full = 1u32 << k;
    let mut spent = vec![0.0f64; full as usize];
    for mask in 0..full {
        if mask != 0 {
            let low = mask.trailing_zeros() as usize;
            spent[mask as usize] = spent[(mask & (mask - 1)) as usize] + cost[low];
        }
        let used = spent[mask as usize];
        if used > limit {
            continue;
        }
        visit(Vertex {
            mask,
            fractional: None,
        });
        let budget = cons.i_pk - used;
        if budget <= 0.0 {
            continue;
        }
        for j in (0..k).filter(|&j| mask & (1 << j) == 0) {
            let v = budget / state.g()[j];
            let cap = cons.p_pk[j];
            if v > cap * snap && v < cap * (1.0 - snap) {
                visit(Vertex {
                    mask,
                    fractional: Some((j, v)),
                });
            }
        }
    }
}

/// All vertices of the feasible polytope, binary patterns first within each
/// mask.
pub fn enumerate_extreme_points(
    state: &ChannelState,
    cons: &PeakConstraints,
) -> Result<Vec<Allocation>> {
    enumerate_extreme_points_with_cap(state, cons, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_extreme_points_with_cap(
    state: &ChannelState,
    cons: &PeakConstraints,
    cap: usize,
) -> Result<Vec<Allocation>> {
    cons.check(state)?;
    check_cap(state.k(), cap)?;
    let mut out = Vec::new();
    for_each_vertex(state, cons, |v| out.push(v.allocation(state, cons)));
    Ok(out)
}

/// Monotone surrogate of the no-SIC sum rate used to rank vertices.
///
/// `exp(Σ r_i) = Π_i (σ² + S) / (σ² + S − x_i)` over active users, with
/// `x_i = h_i P_i` and `S = Σ x_i`. Interference terms are built from prefix
/// and suffix sums so no term suffers cancellation. When the product could
/// overflow the score falls back to the log domain.
struct VertexScorer {
    sigma2: f64,
    log_domain: bool,
    xs: Vec<f64>,
    prefix: Vec<f64>,
}

impl VertexScorer {
    fn new(state: &ChannelState, cons: &PeakConstraints, noise: NoisePower) -> Self {
        let sigma2 = noise.sigma2();
        let max_total: f64 = state.h().iter().zip(&cons.p_pk).map(|(h, p)| h * p).sum();
        let log_domain = state.k() as f64 * (1.0 + max_total / sigma2).log10() > 250.0;
        Self {
            sigma2,
            log_domain,
            xs: Vec::with_capacity(state.k()),
            prefix: Vec::with_capacity(state.k() + 1),
        }
    }

    fn score(&mut self, state: &ChannelState, cons: &PeakConstraints, v: &Vertex) -> f64 {
        self.xs.clear();
        let mut bits = v.mask;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            self.xs.push(state.h()[i] * cons.p_pk[i]);
            bits &= bits - 1;
        }
        if let Some((j, p)) = v.fractional {
            self.xs.push(state.h()[j] * p);
        }
        self.prefix.clear();
        self.prefix.push(0.0);
        for a in 0..self.xs.len() {
            let next = self.prefix[a] + self.xs[a];
            self.prefix.push(next);
        }
        let total = self.sigma2 + self.prefix[self.xs.len()];
        let mut suffix = 0.0;
        let mut acc = if self.log_domain { 0.0 } else { 1.0 };
        for a in (0..self.xs.len()).rev() {
            let denom = self.sigma2 + self.prefix[a] + suffix;
            if self.log_domain {
                acc += (self.xs[a] / denom).ln_1p();
            } else {
                acc *= total / denom;
            }
            suffix += self.xs[a];
        }
        acc
    }

    /// `Greater` when `a` beats `b` by more than the tie band.
    fn compare(&self, a: f64, b: f64) -> Ordering {
        let band = if self.log_domain {
            TIE_TOL * b.abs().max(1.0)
        } else {
            TIE_TOL * b
        };
        if a > b + band {
            Ordering::Greater
        } else if a < b - band {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }
}

/// Tie-break between vertices of equal rate: fewer active users first, then
/// the lexicographically smallest set of active indices.
fn preferred_on_tie(a: u32, b: u32) -> bool {
    match a.count_ones().cmp(&b.count_ones()) {
        Ordering::Less => true,
        Ordering::Greater => false,
        // Equal sizes: the lowest index where the sets differ decides.
        Ordering::Equal => {
            let diff = a ^ b;
            diff != 0 && a & (diff & diff.wrapping_neg()) != 0
        }
    }
}

/// Exact solver: the best vertex of the feasible polytope.
pub fn solve_extreme_search(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
) -> Result<SolveReport> {
    solve_extreme_search_with_cap(state, cons, noise, DEFAULT_ENUMERATION_CAP)
}

pub fn solve_extreme_search_with_cap(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
    cap: usize,
) -> Result<SolveReport> {
    cons.check(state)?;
    check_cap(state.k(), cap)?;
    let mut scorer = VertexScorer::new(state, cons, noise);
    let mut best: Option<(Vertex, f64)> = None;
    for_each_vertex(state, cons, |v| {
        let s = scorer.score(state, cons, &v);
        let better = match &best {
            None => true,
            Some((bv, bs)) => match scorer.compare(s, *bs) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => preferred_on_tie(v.active_mask(), bv.active_mask()),
            },
        };
        if better {
            best = Some((v, s));
        }
    });
    // The all-zero pattern is always feasible.
    let (vertex, _) = best.expect("zero allocation is a vertex");
    SolveReport::build(
        Algorithm::Extreme,
        state,
        cons,
        noise,
        vertex.allocation(state, cons),
    )
}

// --- D-TDMA -----------------------------------------------------------------

fn best_solo_user(state: &ChannelState, cons: &PeakConstraints) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..state.k() {
        let val = state.h()[i] * cons.solo_power(state, i);
        if val > best_val {
            best = i;
            best_val = val;
        }
    }
    best
}

/// The sufficient condition for single-user transmission to be optimal.
///
/// With `T_i = min(p_pk_i, i_pk / g_i)` and `k = argmax h_i T_i`, returns
/// `Some(k)` when `ln(1 + h_k T_k / σ²) ≥ 1`, evaluated as the equivalent
/// `h_k T_k / σ² ≥ e − 1`.
pub fn dtdma_condition(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
) -> Result<Option<usize>> {
    cons.check(state)?;
    let k = best_solo_user(state, cons);
    let snr = state.h()[k] * cons.solo_power(state, k) / noise.sigma2();
    Ok((snr >= E - 1.0).then_some(k))
}

/// Dynamic TDMA: only the user with the largest `h_i T_i` transmits, at
/// `T_i`. Defined whether or not [`dtdma_condition`] holds; the report
/// records which.
pub fn solve_dtdma(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
) -> Result<SolveReport> {
    cons.check(state)?;
    let k = best_solo_user(state, cons);
    let alloc = Allocation::single(state.k(), k, cons.solo_power(state, k));
    let mut report = SolveReport::build(Algorithm::Dtdma, state, cons, noise, alloc)?;
    report.condition_held = Some(dtdma_condition(state, cons, noise)?.is_some());
    Ok(report)
}

// --- ordered channels -------------------------------------------------------

/// Permutation `perm` (sorted position → user) with `h` strictly decreasing
/// and `g / h` strictly increasing along it, if one exists.
pub fn check_ordering(state: &ChannelState) -> Option<Vec<usize>> {
    let h = state.h();
    let g = state.g();
    let mut perm: Vec<usize> = (0..state.k()).collect();
    perm.sort_by(|&a, &b| h[b].total_cmp(&h[a]).then(a.cmp(&b)));
    let ordered = perm.windows(2).all(|w| {
        let (m, n) = (w[0], w[1]);
        h[m] > h[n] && g[m] / h[m] < g[n] / h[n]
    });
    ordered.then_some(perm)
}

/// Linear scan over peak-power prefixes for ordered channels.
///
/// Requires [`check_ordering`] to succeed and a common peak power. In sorted
/// order the optimum has the first users at peak, then possibly one
/// fractional user that exhausts the interference budget, then silence.
pub fn solve_sorted(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
) -> Result<SolveReport> {
    cons.check(state)?;
    let perm = check_ordering(state).ok_or_else(|| {
        Error::Precondition("channels do not admit the decreasing-h / increasing-g/h order".into())
    })?;
    let p = cons.p_pk[0];
    if cons.p_pk.iter().any(|&v| v != p) {
        return Err(Error::Precondition(
            "ordered solver needs a common peak power".into(),
        ));
    }
    let k = state.k();
    let g = |rank: usize| state.g()[perm[rank]];
    let i_pk = cons.i_pk;

    // Powers in sorted order, mapped back to users.
    let unsort = |sorted: &[f64]| {
        let mut out = vec![0.0; k];
        for (rank, &v) in sorted.iter().enumerate() {
            out[perm[rank]] = v;
        }
        Allocation::from_vec_unchecked(out)
    };
    let prefix = |n: usize, tail: bool| {
        let mut v = vec![0.0; k];
        v[..n].fill(p);
        let mut alloc = unsort(&v);
        if tail {
            let at_peak: Vec<bool> = alloc.powers().iter().map(|&x| x > 0.0).collect();
            let mut powers = alloc.into_inner();
            powers[perm[n]] = completion(state, cons, &at_peak, perm[n]);
            alloc = Allocation::from_vec_unchecked(powers);
        }
        alloc
    };

    let alloc = if g(0) * p > i_pk {
        prefix(0, true)
    } else {
        let mut used = 0.0;
        let mut k_last = 0;
        while k_last < k && used + g(k_last) * p <= i_pk {
            used += g(k_last) * p;
            k_last += 1;
        }
        let mut best = prefix(1, false);
        let mut best_rate = sum_rate_no_sic(state, &best, noise)?;
        for n in 2..=k_last {
            let cand = prefix(n, false);
            let r = sum_rate_no_sic(state, &cand, noise)?;
            if r > best_rate {
                best = cand;
                best_rate = r;
            }
        }
        if k_last < k {
            let tail = (i_pk - used) / g(k_last);
            if tail > 0.0 {
                let cand = prefix(k_last, true);
                if sum_rate_no_sic(state, &cand, noise)? > best_rate {
                    best = cand;
                }
            }
        }
        best
    };
    SolveReport::build(Algorithm::Sorted, state, cons, noise, alloc)
}

// --- SIC-OP and hybrid ------------------------------------------------------

/// The with-SIC optimum `max Σ h_i P_i` over the same constraints, reported
/// with its no-SIC rate.
///
/// This is a fractional knapsack: users are filled to peak in decreasing
/// `h_i / g_i` order (ties: larger `h_i`, then smaller index) until the
/// interference budget binds, leaving at most one fractional user.
pub fn solve_sic_op(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
) -> Result<SolveReport> {
    cons.check(state)?;
    let (h, g) = (state.h(), state.g());
    let mut order: Vec<usize> = (0..state.k()).collect();
    order.sort_by(|&a, &b| {
        (h[b] / g[b])
            .total_cmp(&(h[a] / g[a]))
            .then(h[b].total_cmp(&h[a]))
            .then(a.cmp(&b))
    });
    let snap = 0.5 * FEASIBILITY_TOL;
    let mut p = vec![0.0; state.k()];
    let mut at_peak = vec![false; state.k()];
    let mut budget = cons.i_pk;
    for i in order {
        let cap = cons.p_pk[i];
        let v = budget / g[i];
        if v >= cap * (1.0 - snap) {
            p[i] = cap;
            at_peak[i] = true;
            budget -= g[i] * cap;
        } else {
            if v > cap * snap {
                p[i] = completion(state, cons, &at_peak, i);
            }
            break;
        }
    }
    SolveReport::build(
        Algorithm::SicOp,
        state,
        cons,
        noise,
        Allocation::from_vec_unchecked(p),
    )
}

/// `max{SIC-OP, D-TDMA}` by no-SIC rate; D-TDMA wins ties.
pub fn solve_hybrid(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
) -> Result<SolveReport> {
    let sic = solve_sic_op(state, cons, noise)?;
    let tdma = solve_dtdma(state, cons, noise)?;
    let mut pick = if tdma.rate >= sic.rate { tdma } else { sic };
    pick.selected = Some(pick.algorithm);
    pick.algorithm = Algorithm::Hybrid;
    Ok(pick)
}

/// Runs the named solver. `Oracle` uses the default grid.
pub fn solve(
    algorithm: Algorithm,
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
) -> Result<SolveReport> {
    match algorithm {
        Algorithm::Extreme => solve_extreme_search(state, cons, noise),
        Algorithm::Dtdma => solve_dtdma(state, cons, noise),
        Algorithm::Sorted => solve_sorted(state, cons, noise),
        Algorithm::SicOp => solve_sic_op(state, cons, noise),
        Algorithm::Hybrid => solve_hybrid(state, cons, noise),
        Algorithm::Oracle => {
            crate::oracle::grid_search(state, cons, noise, crate::oracle::GridSpec::default())
        }
    }
}
