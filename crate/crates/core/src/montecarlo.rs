//! Monte Carlo estimation of ergodic sum rates over block fading.
//!
//! Round `r` always uses the channel state drawn for round index `r`, so
//! every algorithm and every sweep point sees the same states (common
//! random numbers) and comparisons can be made round by round. Per-round
//! values are computed in parallel, kept in round order, and reduced with
//! pairwise summation, so reports are bit-identical for a given seed
//! regardless of the worker count.
//!
//! # Report schema (version 1)
//!
//! CSV, one row per sweep point and algorithm:
//!
//! ```text
//! sweep_db,algorithm,mean_rate_nats,mean_rate_bits,stderr,rounds,seed
//! ```
//!
//! `stderr` is the standard error of the mean in nats; `seed` is empty for
//! fixed-state runs. When `sic-op` is requested an extra `sic-op@sic` row
//! carries the sum rate of the SIC-OP allocation *with* SIC, i.e. the
//! ergodic sum capacity with SIC.
//!
//! JSON nests the same numbers per sweep point under `points[].results[]`
//! next to `schema_version` and a `metadata` block.

use std::f64::consts::LN_2;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::avg_solver::{self, AvgConstraints, DualOptions};
use crate::channel::{db_to_linear, ChannelSource, ChannelState};
use crate::error::{Error, Result};
use crate::oracle::{grid_search, GridSpec};
use crate::peak_solver::{
    dtdma_condition, solve_dtdma, solve_extreme_search, solve_hybrid, solve_sic_op, PeakConstraints,
};
use crate::rate::{sum_rate_no_sic, Allocation, NoisePower};

pub const DEFAULT_ROUNDS: usize = 10_000;
pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "sweep_db,algorithm,mean_rate_nats,mean_rate_bits,stderr,rounds,seed";

/// Label of the extra row holding SIC-OP's rate with SIC decoding.
pub const SIC_BOUND_TAG: &str = "sic-op@sic";

/// Power policies a simulation can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Peak constraints: extreme-point search.
    Optimal,
    Dtdma,
    SicOp,
    Hybrid,
    /// Peak constraints: brute-force grid (K ≤ 4, slow).
    Oracle,
    /// Average constraints: the dual D-TDMA policy.
    Avg,
    /// Average constraints: constant equal power.
    AvgConstant,
    /// Average constraints: round-robin single user.
    AvgRoundRobin,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Optimal => "optimal",
            Policy::Dtdma => "dtdma",
            Policy::SicOp => "sic-op",
            Policy::Hybrid => "hybrid",
            Policy::Oracle => "oracle",
            Policy::Avg => "avg",
            Policy::AvgConstant => "avg-constant",
            Policy::AvgRoundRobin => "avg-round-robin",
        }
    }

    pub fn is_peak(self) -> bool {
        matches!(
            self,
            Policy::Optimal | Policy::Dtdma | Policy::SicOp | Policy::Hybrid | Policy::Oracle
        )
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "optimal" | "extreme" => Policy::Optimal,
            "dtdma" => Policy::Dtdma,
            "sic-op" => Policy::SicOp,
            "hybrid" => Policy::Hybrid,
            "oracle" => Policy::Oracle,
            "avg" => Policy::Avg,
            "avg-constant" => Policy::AvgConstant,
            "avg-round-robin" => Policy::AvgRoundRobin,
            other => return Err(Error::UnknownAlgorithm(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Value of the swept quantity in dB (relative to σ² = 1).
    pub sweep_db: f64,
    pub constraints: PeakConstraints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Peak(Vec<SweepPoint>),
    Average {
        sweep_db: f64,
        constraints: AvgConstraints,
    },
}

impl Sweep {
    /// Common peak power swept over `ppk_db` with fixed `ipk_db`.
    pub fn peak_db(k: usize, ppk_db: &[f64], ipk_db: f64) -> Result<Self> {
        let points = ppk_db
            .iter()
            .map(|&db| {
                Ok(SweepPoint {
                    sweep_db: db,
                    constraints: PeakConstraints::uniform(
                        k,
                        db_to_linear(db),
                        db_to_linear(ipk_db),
                    )?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sweep::Peak(points))
    }

    fn len(&self) -> usize {
        match self {
            Sweep::Peak(p) => p.len(),
            Sweep::Average { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub source: ChannelSource,
    pub noise: NoisePower,
    pub sweep: Sweep,
    pub rounds: usize,
    pub algorithms: Vec<Policy>,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidInput("rounds must be at least 1".into()));
        }
        if self.sweep.len() == 0 {
            return Err(Error::InvalidInput("sweep is empty".into()));
        }
        let k = self.source.k();
        match &self.sweep {
            Sweep::Peak(points) => {
                if let Some(p) = points.iter().find(|p| p.constraints.k() != k) {
                    return Err(Error::LengthMismatch {
                        expected: k,
                        actual: p.constraints.k(),
                    });
                }
                if let Some(a) = self.algorithms.iter().find(|a| !a.is_peak()) {
                    return Err(Error::InvalidInput(format!(
                        "`{a}` needs average constraints"
                    )));
                }
            }
            Sweep::Average { constraints, .. } => {
                if constraints.k() != k {
                    return Err(Error::LengthMismatch {
                        expected: k,
                        actual: constraints.k(),
                    });
                }
                if let Some(a) = self.algorithms.iter().find(|a| a.is_peak()) {
                    return Err(Error::InvalidInput(format!("`{a}` needs peak constraints")));
                }
            }
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                stderr: 0.0,
                n,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let stderr = if n > 1 {
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }

    /// Round-by-round difference `a − b` of two paired sample sets.
    pub fn paired_difference(a: &[f64], b: &[f64]) -> Self {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self::from_samples(&d)
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (l, r) = xs.split_at(xs.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub source: ChannelSource,
    pub sigma2: f64,
    pub rounds: usize,
    /// Seconds since the Unix epoch; excluded from determinism checks.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generated_at: Option<u64>,
}

impl ReportMetadata {
    fn new(source: &ChannelSource, noise: NoisePower, rounds: usize) -> Self {
        Self {
            source: source.clone(),
            sigma2: noise.sigma2(),
            rounds,
            generated_at: None,
        }
    }

    fn seed_field(&self) -> String {
        self.source
            .seed()
            .map(|s| s.to_string())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub algorithm: String,
    pub mean_rate_nats: f64,
    pub mean_rate_bits: f64,
    pub stderr: f64,
    pub rounds: usize,
    pub seed: Option<u64>,
}

impl RateRow {
    fn new(algorithm: &str, est: Estimate, seed: Option<u64>) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            mean_rate_nats: est.mean,
            mean_rate_bits: est.mean / LN_2,
            stderr: est.stderr,
            rounds: est.n,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub sweep_db: f64,
    pub results: Vec<RateRow>,
}

impl PointResult {
    pub fn row(&self, algorithm: &str) -> Option<&RateRow> {
        self.results.iter().find(|r| r.algorithm == algorithm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub points: Vec<PointResult>,
}

impl SimReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let seed = self.metadata.seed_field();
        for p in &self.points {
            for r in &p.results {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    p.sweep_db,
                    r.algorithm,
                    r.mean_rate_nats,
                    r.mean_rate_bits,
                    r.stderr,
                    r.rounds,
                    seed
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Mean no-SIC sum rate of each requested policy at each sweep point.
pub fn estimate_ergodic_rate(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let states = config.source.states(config.rounds);
    let seed = config.source.seed();
    let noise = config.noise;
    let points = match &config.sweep {
        Sweep::Peak(points) => points
            .iter()
            .map(|pt| {
                let mut results = Vec::new();
                for &policy in &config.algorithms {
                    let (no_sic, with_sic) =
                        peak_policy_rates(&states, &pt.constraints, noise, policy)?;
                    results.push(RateRow::new(
                        policy.as_str(),
                        Estimate::from_samples(&no_sic),
                        seed,
                    ));
                    if let Some(sic) = with_sic {
                        results.push(RateRow::new(
                            SIC_BOUND_TAG,
                            Estimate::from_samples(&sic),
                            seed,
                        ));
                    }
                }
                Ok(PointResult {
                    sweep_db: pt.sweep_db,
                    results,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        Sweep::Average {
            sweep_db,
            constraints,
        } => {
            let mut results = Vec::new();
            for &policy in &config.algorithms {
                let rates = avg_policy_rates(&states, constraints, noise, policy)?;
                results.push(RateRow::new(
                    policy.as_str(),
                    Estimate::from_samples(&rates),
                    seed,
                ));
            }
            vec![PointResult {
                sweep_db: *sweep_db,
                results,
            }]
        }
    };
    Ok(SimReport {
        schema_version: SCHEMA_VERSION,
        metadata: ReportMetadata::new(&config.source, noise, config.rounds),
        points,
    })
}

fn par_rates<F>(states: &[ChannelState], f: F) -> Result<Vec<f64>>
where
    F: Fn(&ChannelState) -> Result<f64> + Sync + Send,
{
    states.par_iter().map(f).collect()
}

/// Per-round no-SIC rates, plus with-SIC rates for SIC-OP.
fn peak_policy_rates(
    states: &[ChannelState],
    cons: &PeakConstraints,
    noise: NoisePower,
    policy: Policy,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    Ok(match policy {
        Policy::Optimal => (
            par_rates(states, |s| Ok(solve_extreme_search(s, cons, noise)?.rate))?,
            None,
        ),
        Policy::Dtdma => (
            par_rates(states, |s| Ok(solve_dtdma(s, cons, noise)?.rate))?,
            None,
        ),
        Policy::Hybrid => (
            par_rates(states, |s| Ok(solve_hybrid(s, cons, noise)?.rate))?,
            None,
        ),
        Policy::Oracle => (
            par_rates(states, |s| {
                Ok(grid_search(s, cons, noise, GridSpec::default())?.rate)
            })?,
            None,
        ),
        Policy::SicOp => {
            let pairs: Vec<(f64, f64)> = states
                .par_iter()
                .map(|s| {
                    let r = solve_sic_op(s, cons, noise)?;
                    Ok((r.rate, r.rate_with_sic(s, noise)?))
                })
                .collect::<Result<_>>()?;
            let (a, b) = pairs.into_iter().unzip();
            (a, Some(b))
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "`{other}` needs average constraints"
            )))
        }
    })
}

fn avg_policy_rates(
    states: &[ChannelState],
    cons: &AvgConstraints,
    noise: NoisePower,
    policy: Policy,
) -> Result<Vec<f64>> {
    let k = cons.k();
    match policy {
        Policy::Avg => {
            let opts = DualOptions {
                sample_count: states.len(),
                ..Default::default()
            };
            let sol = avg_solver::solve_dual_on(states, cons, noise, opts)?;
            par_rates(states, |s| {
                sum_rate_no_sic(s, &avg_solver::per_state_allocation(s, &sol.policy)?, noise)
            })
        }
        Policy::AvgConstant => {
            let p = avg_solver::constant_power_level(states, cons);
            let alloc = Allocation::new(vec![p; k])?;
            par_rates(states, |s| sum_rate_no_sic(s, &alloc, noise))
        }
        Policy::AvgRoundRobin => {
            let p = avg_solver::round_robin_power_level(states, cons);
            states
                .par_iter()
                .enumerate()
                .map(|(t, s)| sum_rate_no_sic(s, &Allocation::single(k, t % k, p), noise))
                .collect()
        }
        other => Err(Error::InvalidInput(format!(
            "`{other}` needs peak constraints"
        ))),
    }
}

// --- policy comparison ------------------------------------------------------

/// Rates of the compared policies on one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundComparison {
    pub optimal: f64,
    pub dtdma: f64,
    pub sic_op: f64,
    pub hybrid: f64,
    /// SIC-OP allocation decoded with SIC.
    pub sic_bound: f64,
}

pub fn compare_round(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
) -> Result<RoundComparison> {
    let sic = solve_sic_op(state, cons, noise)?;
    Ok(RoundComparison {
        optimal: solve_extreme_search(state, cons, noise)?.rate,
        dtdma: solve_dtdma(state, cons, noise)?.rate,
        sic_op: sic.rate,
        hybrid: solve_hybrid(state, cons, noise)?.rate,
        sic_bound: sic.rate_with_sic(state, noise)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub name: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub sweep_db: f64,
    pub optimal: Estimate,
    pub dtdma: Estimate,
    pub sic_op: Estimate,
    pub hybrid: Estimate,
    pub sic_bound: Estimate,
    /// Paired (round-by-round) differences.
    pub gaps: Vec<Gap>,
}

impl ComparisonRow {
    pub fn gap(&self, name: &str) -> Option<&Gap> {
        self.gaps.iter().find(|g| g.name == name)
    }
}

pub const GAP_NAMES: [&str; 5] = [
    "optimal-dtdma",
    "optimal-sic-op",
    "optimal-hybrid",
    "dtdma-sic-op",
    "sic-bound-optimal",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut header = String::from("sweep_db");
        for col in ["optimal", "dtdma", "sic_op", "hybrid", "sic_bound"] {
            let _ = write!(header, ",{col}_nats,{col}_stderr");
        }
        for g in GAP_NAMES {
            let g = g.replace('-', "_");
            let _ = write!(header, ",gap_{g},gap_{g}_stderr");
        }
        header.push_str(",rounds,seed\n");
        let seed = self.metadata.seed_field();
        let mut out = header;
        for r in &self.rows {
            let _ = write!(out, "{}", r.sweep_db);
            for e in [&r.optimal, &r.dtdma, &r.sic_op, &r.hybrid, &r.sic_bound] {
                let _ = write!(out, ",{},{}", e.mean, e.stderr);
            }
            for g in &r.gaps {
                let _ = write!(out, ",{},{}", g.mean, g.stderr);
            }
            let _ = writeln!(out, ",{},{}", r.optimal.n, seed);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Optimal, D-TDMA, SIC-OP and hybrid side by side on identical states,
/// with paired gaps. `config.algorithms` is ignored.
pub fn compare_policies(config: &SimConfig) -> Result<ComparisonReport> {
    let cfg = SimConfig {
        algorithms: Vec::new(),
        ..config.clone()
    };
    cfg.validate()?;
    let Sweep::Peak(points) = &config.sweep else {
        return Err(Error::InvalidInput(
            "policy comparison needs peak constraints".into(),
        ));
    };
    let states = config.source.states(config.rounds);
    let rows = points
        .iter()
        .map(|pt| {
            let per_round: Vec<RoundComparison> = states
                .par_iter()
                .map(|s| compare_round(s, &pt.constraints, config.noise))
                .collect::<Result<_>>()?;
            let col =
                |f: fn(&RoundComparison) -> f64| per_round.iter().map(f).collect::<Vec<f64>>();
            let optimal = col(|r| r.optimal);
            let dtdma = col(|r| r.dtdma);
            let sic_op = col(|r| r.sic_op);
            let hybrid = col(|r| r.hybrid);
            let sic_bound = col(|r| r.sic_bound);
            let pairs = [
                (&optimal, &dtdma),
                (&optimal, &sic_op),
                (&optimal, &hybrid),
                (&dtdma, &sic_op),
                (&sic_bound, &optimal),
            ];
            let gaps = GAP_NAMES
                .iter()
                .zip(pairs)
                .map(|(name, (a, b))| {
                    let e = Estimate::paired_difference(a, b);
                    Gap {
                        name: name.to_string(),
                        mean: e.mean,
                        stderr: e.stderr,
                    }
                })
                .collect();
            Ok(ComparisonRow {
                sweep_db: pt.sweep_db,
                optimal: Estimate::from_samples(&optimal),
                dtdma: Estimate::from_samples(&dtdma),
                sic_op: Estimate::from_samples(&sic_op),
                hybrid: Estimate::from_samples(&hybrid),
                sic_bound: Estimate::from_samples(&sic_bound),
                gaps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        schema_version: SCHEMA_VERSION,
        metadata: ReportMetadata::new(&config.source, config.noise, config.rounds),
        rows,
    })
}

// --- D-TDMA optimality probability --------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub probability: f64,
    /// Binomial standard error `sqrt(p(1 − p)/n)`.
    pub stderr: f64,
    pub rounds: usize,
}

/// Fraction of rounds in which the sufficient D-TDMA condition holds.
pub fn estimate_dtdma_probability(
    source: &ChannelSource,
    cons: &PeakConstraints,
    noise: NoisePower,
    rounds: usize,
) -> Result<ProbabilityEstimate> {
    if rounds < 1000 {
        return Err(Error::InvalidInput(
            "probability estimate needs at least 1000 rounds".into(),
        ));
    }
    if cons.k() != source.k() {
        return Err(Error::LengthMismatch {
            expected: source.k(),
            actual: cons.k(),
        });
    }
    let hits: Vec<f64> = (0..rounds as u64)
        .into_par_iter()
        .map(|r| {
            Ok(
                if dtdma_condition(&source.state(r), cons, noise)?.is_some() {
                    1.0
                } else {
                    0.0
                },
            )
        })
        .collect::<Result<_>>()?;
    let p = pairwise_sum(&hits) / rounds as f64;
    Ok(ProbabilityEstimate {
        probability: p,
        stderr: (p * (1.0 - p) / rounds as f64).sqrt(),
        rounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRow {
    pub k: usize,
    pub ppk_db: f64,
    pub estimate: ProbabilityEstimate,
}

pub const PROBABILITY_CSV_HEADER: &str = "k,ppk_db,probability,stderr,rounds,seed";

pub fn probability_csv(rows: &[ProbabilityRow], seed: Option<u64>) -> String {
    let mut out = String::from(PROBABILITY_CSV_HEADER);
    out.push('\n');
    let seed = seed.map(|s| s.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k, r.ppk_db, r.estimate.probability, r.estimate.stderr, r.estimate.rounds, seed
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FadingModel;
    use approx::assert_relative_eq;

    const UNIT: NoisePower = NoisePower::UNIT;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn estimate_basics() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert_relative_eq!(e.stderr, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        assert_eq!(Estimate::from_samples(&[7.0]).stderr, 0.0);
    }

    #[test]
    fn fixed_state_single_round_equals_state_rate() {
        let s = ChannelState::new(vec![1.3], vec![0.4]).unwrap();
        let cons = PeakConstraints::new(vec![2.0], 10.0).unwrap();
        let cfg = SimConfig {
            source: ChannelSource::Fixed(s.clone()),
            noise: UNIT,
            sweep: Sweep::Peak(vec![SweepPoint {
                sweep_db: 3.0,
                constraints: cons.clone(),
            }]),
            rounds: 1,
            algorithms: vec![Policy::Optimal],
        };
        let rep = estimate_ergodic_rate(&cfg).unwrap();
        let expected = solve_extreme_search(&s, &cons, UNIT).unwrap().rate;
        assert_eq!(rep.points[0].results[0].mean_rate_nats, expected);
        assert_relative_eq!(expected, (1.0 + 2.6f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn sic_op_adds_sic_row() {
        let m = FadingModel::new(3, 1.0, 1.0, 4).unwrap();
        let cfg = SimConfig {
            source: ChannelSource::Fading(m),
            noise: UNIT,
            sweep: Sweep::peak_db(3, &[0.0, 10.0], 0.0).unwrap(),
            rounds: 200,
            algorithms: vec![Policy::Optimal, Policy::SicOp],
        };
        let rep = estimate_ergodic_rate(&cfg).unwrap();
        for p in &rep.points {
            let tags: Vec<&str> = p.results.iter().map(|r| r.algorithm.as_str()).collect();
            assert_eq!(tags, vec!["optimal", "sic-op", SIC_BOUND_TAG]);
            assert!(
                p.row(SIC_BOUND_TAG).unwrap().mean_rate_nats
                    >= p.row("optimal").unwrap().mean_rate_nats
            );
        }
        let csv = rep.to_csv();
        assert!(csv.starts_with(&format!("{CSV_HEADER}\n")));
        assert_eq!(csv.lines().count(), 1 + 6);
    }

    #[test]
    fn validation_errors() {
        let m = FadingModel::new(2, 1.0, 1.0, 4).unwrap();
        let mut cfg = SimConfig {
            source: ChannelSource::Fading(m),
            noise: UNIT,
            sweep: Sweep::peak_db(2, &[0.0], 0.0).unwrap(),
            rounds: 0,
            algorithms: vec![Policy::Optimal],
        };
        assert!(estimate_ergodic_rate(&cfg).is_err());
        cfg.rounds = 10;
        cfg.algorithms = vec![Policy::Avg];
        assert!(estimate_ergodic_rate(&cfg).is_err());
        cfg.algorithms = vec![Policy::Optimal];
        cfg.sweep = Sweep::Peak(vec![]);
        assert!(estimate_ergodic_rate(&cfg).is_err());
        cfg.sweep = Sweep::peak_db(3, &[0.0], 0.0).unwrap();
        assert!(estimate_ergodic_rate(&cfg).is_err());
        assert!(matches!(
            "bogus".parse::<Policy>(),
            Err(Error::UnknownAlgorithm(_))
        ));
    }

    #[test]
    fn probability_needs_rounds() {
        let m = FadingModel::new(2, 1.0, 1.0, 4).unwrap();
        let c = PeakConstraints::uniform(2, 1.0, 1.0).unwrap();
        assert!(estimate_dtdma_probability(&ChannelSource::Fading(m), &c, UNIT, 10).is_err());
    }

    #[test]
    fn hybrid_is_roundwise_max() {
        let m = FadingModel::new(4, 1.0, 1.0, 8).unwrap();
        let c = PeakConstraints::uniform(4, 1.0, 1.0).unwrap();
        for r in 0..300 {
            let cmp = compare_round(&crate::channel::sample_state(&m, r), &c, UNIT).unwrap();
            assert_eq!(cmp.hybrid, cmp.dtdma.max(cmp.sic_op));
            assert!(cmp.optimal + 1e-12 >= cmp.hybrid);
            assert!(cmp.sic_bound + 1e-12 >= cmp.optimal);
        }
    }
}
