//! Shared helpers for integration tests.

#![allow(dead_code)]

use cmac_core::channel::ChannelState;

/// Central difference `(R(p + δe_n) − R(p − δe_n)) / 2δ` of the no-SIC sum
/// rate with `δ = 1e-6·max(1, p_n)`, evaluated without cancellation.
///
/// With `T = σ² + Σ h_j p_j`, `R = K ln T − Σ_i ln(T − h_i p_i)`. Moving
/// `p_n` shifts `T` and every `T − h_i p_i` with `i ≠ n` by the same amount
/// `D` and leaves `T − h_n p_n` alone, so the difference is a sum of
/// `ln_1p` terms of size `D/T` instead of a difference of two O(1) rates.
pub fn central_difference(state: &ChannelState, p: &[f64], sigma2: f64, n: usize) -> f64 {
    let step = 1e-6 * p[n].max(1.0);
    let (up, down) = (p[n] + step, p[n] - step);
    let h = state.h();
    let x: Vec<f64> = h
        .iter()
        .zip(p)
        .enumerate()
        .map(|(j, (h, p))| if j == n { h * down } else { h * p })
        .collect();
    let d = h[n] * (up - down);
    let t = sigma2 + x.iter().sum::<f64>();
    let mut diff = h.len() as f64 * (d / t).ln_1p();
    for i in (0..h.len()).filter(|&i| i != n) {
        let others = sigma2
            + x.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v)
                .sum::<f64>();
        diff -= (d / others).ln_1p();
    }
    diff / (up - down)
}
