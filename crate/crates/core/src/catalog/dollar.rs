//! Dollar game: a stopping game where the player who drops takes everything.

use serde::Serialize;

use super::centipede::{analogy, drops, fit_analogy, StoppingGame};
use crate::error::{input, Result};

fn check_k(k: usize) -> Result<()> {
    if k < 6 || k % 2 != 0 {
        return input(format!("dollar game needs an even K >= 6, got {k}"));
    }
    Ok(())
}

/// Dropping at node k pays the dropper k and the opponent 0; if P2 continues at
/// node K, P1 gets K + 2.
pub fn dollar_game(k: usize) -> StoppingGame {
    let mut p1 = Vec::with_capacity(k + 1);
    let mut p2 = Vec::with_capacity(k + 1);
    for node in 1..=k {
        let (mine, theirs) = (node as f64, 0.0);
        if node % 2 == 1 {
            p1.push(mine);
            p2.push(theirs);
        } else {
            p1.push(theirs);
            p2.push(mine);
        }
    }
    p1.push(k as f64 + 2.0);
    p2.push(0.0);
    StoppingGame { k, payoff: [p1, p2] }
}

pub fn fitness_correct(k: usize, p: f64) -> f64 {
    let k = k as f64;
    p * 0.5 + (1.0 - p) * (0.5 * (k - 1.0) + 0.5 * k)
}

pub fn fitness_analogy(k: usize, p: f64) -> f64 {
    (1.0 - p) * 0.5 * k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DollarReport {
    pub k: usize,
    /// Correct model strictly fitter at all 101 grid points.
    pub dominance: bool,
    pub maximal_continuation_verified: bool,
    pub fitness_formula_residual: f64,
    /// (p, fit_correct, fit_analogy) on the grid.
    pub grid: Vec<(f64, f64, f64)>,
}

pub fn dollar_analysis(k: usize) -> Result<DollarReport> {
    check_k(k)?;
    let game = dollar_game(k);
    let x = 2.0 / k as f64;
    let d_aa = drops(k, |_| 1.0);
    let d_ab = drops(k, |n| if n >= k - 1 { 1.0 } else { 0.0 });
    let d_ba = drops(k, |n| if n == k { 1.0 } else { 0.0 });
    let d_bb = d_ba.clone();
    let fit_odd = fit_analogy(&game, &d_ba, &d_ab, true);
    let fit_even = fit_analogy(&game, &d_ba, &d_ab, false);
    let fit_bb = fit_analogy(&game, &d_bb, &d_bb, false);
    let mut verified = [fit_odd, fit_even, fit_bb].iter().all(|v| (v - x).abs() < 1e-6);
    let conj_a = analogy(k, fit_odd, fit_even);
    let conj_b = analogy(k, 0.0, fit_bb);
    for role in 0..2 {
        verified &= game.optimal_against(role, &d_aa, &d_aa);
        verified &= game.optimal_against(role, &d_ab, &d_ba);
        verified &= game.optimal_against(role, &d_ba, &conj_a);
        verified &= game.optimal_against(role, &d_bb, &conj_b);
    }
    let mut grid = Vec::with_capacity(101);
    let mut resid: f64 = 0.0;
    for i in 0..=100 {
        let p = i as f64 / 100.0;
        let (fa, fb) = (fitness_correct(k, p), fitness_analogy(k, p));
        let ea = p * game.sym_value(&d_aa, &d_aa) + (1.0 - p) * game.sym_value(&d_ab, &d_ba);
        let eb = p * game.sym_value(&d_ba, &d_ab) + (1.0 - p) * game.sym_value(&d_bb, &d_bb);
        resid = resid.max((fa - ea).abs()).max((fb - eb).abs());
        grid.push((p, fa, fb));
    }
    Ok(DollarReport {
        k,
        dominance: grid.iter().all(|&(_, a, b)| a > b),
        maximal_continuation_verified: verified,
        fitness_formula_residual: resid,
        grid,
    })
}
