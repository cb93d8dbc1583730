//! Brute-force verifiers for the peak-constrained problem.
//!
//! Nothing here shares a code path with [`crate::peak_solver`]'s search:
//! the grid oracle ranks points with its own closed form of the objective
//! and only the final report goes through [`crate::rate`].

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::peak_solver::{
    check_ordering, enumerate_extreme_points, Algorithm, PeakConstraints, SolveReport,
};
use crate::rate::{sum_rate_no_sic, Allocation, NoisePower};

/// Grid search cost grows as `points^K`.
pub const GRID_MAX_USERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    points_per_axis: usize,
}

impl GridSpec {
    pub fn new(points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(Error::InvalidInput(
                "grid needs at least 2 points per axis".into(),
            ));
        }
        Ok(Self { points_per_axis })
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    fn axis(&self, cap: f64) -> Vec<f64> {
        let last = self.points_per_axis - 1;
        (0..=last)
            .map(|t| {
                if t == last {
                    cap
                } else {
                    cap * t as f64 / last as f64
                }
            })
            .collect()
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_axis: 201,
        }
    }
}

/// Ranks points by `exp(sum rate) = T^K / Π_i (T − x_i)` with
/// `T = σ² + Σ x_i`, kept as an unreduced fraction so comparisons need no
/// division or logarithm.
#[derive(Clone, Copy)]
struct Fraction {
    num: f64,
    den: f64,
}

impl Fraction {
    fn beats(&self, other: &Fraction, log_domain: bool) -> bool {
        if log_domain {
            self.num - self.den > other.num - other.den
        } else {
            self.num * other.den > other.num * self.den
        }
    }
}

struct Evaluator<'a> {
    h: &'a [f64],
    sigma2: f64,
    k: i32,
    log_domain: bool,
}

impl Evaluator<'_> {
    /// Score of an arbitrary point, interference sums formed directly.
    fn point(&self, p: &[f64]) -> Fraction {
        let x: Vec<f64> = self.h.iter().zip(p).map(|(h, p)| h * p).collect();
        let total = self.sigma2 + x.iter().sum::<f64>();
        let dens = (0..x.len()).map(|i| {
            self.sigma2
                + x.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, v)| v)
                    .sum::<f64>()
        });
        if self.log_domain {
            Fraction {
                num: self.k as f64 * total.ln(),
                den: dens.map(f64::ln).sum(),
            }
        } else {
            Fraction {
                num: total.powi(self.k),
                den: dens.product(),
            }
        }
    }
}

/// Best point of the product grid over `[0, p_pk_i]` plus, for every grid
/// column along each axis, the point where that axis exhausts the
/// interference budget. IPC-infeasible lattice points are discarded.
pub fn grid_search(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
    grid: GridSpec,
) -> Result<SolveReport> {
    let k = state.k();
    if cons.k() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: cons.k(),
        });
    }
    if k > GRID_MAX_USERS {
        return Err(Error::TooManyUsers {
            k,
            cap: GRID_MAX_USERS,
        });
    }
    let (h, g) = (state.h(), state.g());
    let sigma2 = noise.sigma2();
    let i_pk = cons.i_pk();
    let axes: Vec<Vec<f64>> = cons.p_pk().iter().map(|&c| grid.axis(c)).collect();
    let n = grid.points_per_axis();

    let max_total = sigma2 + h.iter().zip(cons.p_pk()).map(|(h, p)| h * p).sum::<f64>();
    let eval = Evaluator {
        h,
        sigma2,
        k: k as i32,
        log_domain: 2.0 * k as f64 * max_total.log10() > 300.0,
    };

    let mut best_point = vec![0.0; k];
    let mut best = eval.point(&best_point);

    // Lattice points: odometer over the first k - 1 axes, inner sweep over
    // the last axis until the interference budget runs out.
    let last = k - 1;
    let mut idx = vec![0usize; last];
    let mut p = vec![0.0; k];
    'outer: loop {
        for (i, &t) in idx.iter().enumerate() {
            p[i] = axes[i][t];
        }
        let outer_cost: f64 = (0..last).map(|i| g[i] * p[i]).sum();
        if outer_cost <= i_pk {
            let outer_x: Vec<f64> = (0..last).map(|i| h[i] * p[i]).collect();
            let outer_sum: f64 = outer_x.iter().sum();
            // Interference of each outer user, excluding the last axis.
            let base: Vec<f64> = (0..last)
                .map(|i| {
                    sigma2
                        + outer_x
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, v)| v)
                            .sum::<f64>()
                })
                .collect();
            let last_den = sigma2 + outer_sum;
            for &pl in &axes[last] {
                if outer_cost + g[last] * pl > i_pk {
                    break;
                }
                let xl = h[last] * pl;
                let total = last_den + xl;
                let f = if eval.log_domain {
                    Fraction {
                        num: k as f64 * total.ln(),
                        den: last_den.ln() + base.iter().map(|b| (b + xl).ln()).sum::<f64>(),
                    }
                } else {
                    Fraction {
                        num: total.powi(k as i32),
                        den: last_den * base.iter().map(|b| b + xl).product::<f64>(),
                    }
                };
                if f.beats(&best, eval.log_domain) {
                    best = f;
                    p[last] = pl;
                    best_point.copy_from_slice(&p);
                }
            }
        }
        // Advance the odometer.
        for d in (0..last).rev() {
            idx[d] += 1;
            if idx[d] < n {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }

    // Budget-exhausting projections along each axis.
    let mut others = vec![0usize; k.saturating_sub(1)];
    for axis in 0..k {
        others.iter_mut().for_each(|t| *t = 0);
        'col: loop {
            let mut q = vec![0.0; k];
            let mut slot = 0;
            for (i, qi) in q.iter_mut().enumerate() {
                if i != axis {
                    *qi = axes[i][others[slot]];
                    slot += 1;
                }
            }
            let cost: f64 = (0..k).filter(|&i| i != axis).map(|i| g[i] * q[i]).sum();
            if cost <= i_pk {
                let v = ((i_pk - cost) / g[axis]).min(cons.p_pk()[axis]);
                if v < cons.p_pk()[axis] {
                    q[axis] = v;
                    let f = eval.point(&q);
                    if f.beats(&best, eval.log_domain) {
                        best = f;
                        best_point.copy_from_slice(&q);
                    }
                }
            }
            for d in (0..others.len()).rev() {
                others[d] += 1;
                if others[d] < n {
                    continue 'col;
                }
                others[d] = 0;
            }
            break;
        }
    }

    SolveReport::build(
        Algorithm::Oracle,
        state,
        cons,
        noise,
        Allocation::new(best_point)?,
    )
}

/// Whether some optimal vertex is non-increasing along the channel order
/// (`P_m ≥ P_n` whenever user `m` precedes user `n`).
///
/// Requires the ordering of [`check_ordering`] and a common peak power.
/// Vertices within `1e-9` of the best rate count as optimal.
pub fn exhaustive_sorted_check(
    state: &ChannelState,
    cons: &PeakConstraints,
    noise: NoisePower,
) -> Result<bool> {
    let perm = check_ordering(state)
        .ok_or_else(|| Error::Precondition("channels are not ordered".into()))?;
    if cons.p_pk().iter().any(|&p| p != cons.p_pk()[0]) {
        return Err(Error::Precondition(
            "ordered check needs a common peak power".into(),
        ));
    }
    let points = enumerate_extreme_points(state, cons)?;
    let rates = points
        .iter()
        .map(|p| sum_rate_no_sic(state, p, noise))
        .collect::<Result<Vec<_>>>()?;
    let best = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * best.abs().max(1.0);
    Ok(points.iter().zip(&rates).any(|(p, &r)| {
        r >= best - tol
            && perm
                .windows(2)
                .all(|w| p.powers()[w[0]] >= p.powers()[w[1]])
    }))
}
