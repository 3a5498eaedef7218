//! Centipede game with analogy-based reasoners, analysed in closed form and
//! checked with a generic alternating stopping-game evaluator.

use serde::Serialize;

use crate::error::{input, Result};
use crate::stability::stable_shares_by;
use crate::tol;

/// Alternating two-player stopping game with `k` decision nodes.
///
/// Nodes are numbered 1..=k; P1 moves at odd nodes and P2 at even ones.
/// A drop vector has one entry per node; a player uses the entries of the
/// nodes where their role moves. Terminal `j < k` means a drop at node `j + 1`,
/// terminal `k` means nobody dropped.
pub struct StoppingGame {
    pub k: usize,
    /// payoff[role][terminal], role 0 = P1.
    pub payoff: [Vec<f64>; 2],
}

impl StoppingGame {
    /// Distribution over terminals when P1 uses `d1` and P2 uses `d2`.
    pub fn outcome(&self, d1: &[f64], d2: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k + 1];
        let mut reach = 1.0;
        for node in 1..=self.k {
            let d = if node % 2 == 1 { d1[node - 1] } else { d2[node - 1] };
            out[node - 1] = reach * d;
            reach *= 1.0 - d;
        }
        out[self.k] = reach;
        out
    }

    /// Expected payoff of a player in `role` using `own` against `other`.
    pub fn value(&self, role: usize, own: &[f64], other: &[f64]) -> f64 {
        let dist = if role == 0 {
            self.outcome(own, other)
        } else {
            self.outcome(other, own)
        };
        dist.iter().zip(&self.payoff[role]).map(|(p, v)| p * v).sum()
    }

    /// Role-averaged payoff.
    pub fn sym_value(&self, own: &[f64], other: &[f64]) -> f64 {
        0.5 * (self.value(0, own, other) + self.value(1, own, other))
    }

    /// True iff `own` is optimal at every own node in `role` against the conjecture `conj`.
    pub fn optimal_against(&self, role: usize, own: &[f64], conj: &[f64]) -> bool {
        let pay = &self.payoff[role];
        let mut v = pay[self.k];
        for node in (1..=self.k).rev() {
            let mover = (node + 1) % 2;
            let stop = pay[node - 1];
            if mover == role {
                let d = own[node - 1];
                if (d > 0.0 && stop < v - tol::TIE) || (d < 1.0 && v < stop - tol::TIE) {
                    return false;
                }
                v = v.max(stop);
            } else {
                let d = conj[node - 1];
                v = d * stop + (1.0 - d) * v;
            }
        }
        true
    }

    /// Consequence distribution over (role, terminal) for a player using `own`.
    pub fn consequences(&self, own: &[f64], other: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = self.outcome(own, other).iter().map(|p| 0.5 * p).collect();
        v.extend(self.outcome(other, own).iter().map(|p| 0.5 * p));
        v
    }
}

/// Drop vector from a per-node rule.
pub fn drops(k: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    (1..=k).map(f).collect()
}

/// Analogy conjecture: drop probability `odd` at odd nodes, `even` at even nodes.
pub fn analogy(k: usize, odd: f64, even: f64) -> Vec<f64> {
    drops(k, |n| if n % 2 == 1 { odd } else { even })
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            s += a * (a / b).ln();
        }
    }
    s
}

/// Minimize a function on [0, 1] by grid scan then golden-section refinement.
pub fn minimize_unit(f: impl Fn(f64) -> f64, grid: usize) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=grid {
        let x = i as f64 / grid as f64;
        let v = f(x);
        if v < best.0 {
            best = (v, x);
        }
    }
    let h = 1.0 / grid as f64;
    let (mut a, mut b) = ((best.1 - h).max(0.0), (best.1 + h).min(1.0));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Drop probability of an analogy conjecture at the nodes of one parity that
/// best fits the data `own` vs `other`.
pub fn fit_analogy(game: &StoppingGame, own: &[f64], other: &[f64], parity_odd: bool) -> f64 {
    let data = game.consequences(own, other);
    // nodes of the other parity keep the true drop rates
    let f = |x: f64| {
        let conj = drops(game.k, |n| if (n % 2 == 1) == parity_odd { x } else { other[n - 1] });
        kl(&data, &game.consequences(own, &conj))
    };
    minimize_unit(f, 10_000)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CentipedeSpec {
    pub k: usize,
    pub g: f64,
    pub l: f64,
}

impl CentipedeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 4 || self.k % 2 != 0 {
            return input(format!("centipede needs an even K >= 4, got {}", self.k));
        }
        if !(self.g > 0.0) || !(self.l > 0.0) {
            return input("centipede needs g > 0 and l > 0");
        }
        Ok(())
    }

    /// g > 2 l / (K - 2)
    pub fn condition(&self) -> bool {
        self.g > 2.0 * self.l / (self.k as f64 - 2.0)
    }

    pub fn game(&self) -> StoppingGame {
        let k = self.k;
        let (g, l) = (self.g, self.l);
        let mut p1 = Vec::with_capacity(k + 1);
        let mut p2 = Vec::with_capacity(k + 1);
        for node in 1..=k {
            let kf = node as f64;
            if node % 2 == 1 {
                p1.push(g * (kf - 1.0) / 2.0);
                p2.push(g * (kf - 1.0) / 2.0);
            } else {
                p1.push((kf - 2.0) * g / 2.0 - l);
                p2.push(kf * g / 2.0 + l);
            }
        }
        p1.push(k as f64 * g / 2.0);
        p2.push(k as f64 * g / 2.0);
        StoppingGame { k, payoff: [p1, p2] }
    }

    /// Play in the maximal-continuation EZ: (d_AA, d_AB, d_BA, d_BB), A correct, B analogy.
    pub fn maximal_continuation(&self) -> [Vec<f64>; 4] {
        let k = self.k;
        [
            drops(k, |_| 1.0),
            drops(k, |n| if n >= k - 1 { 1.0 } else { 0.0 }),
            drops(k, |n| if n == k { 1.0 } else { 0.0 }),
            drops(k, |n| if n == k { 1.0 } else { 0.0 }),
        ]
    }

    pub fn fitness_correct(&self, p: f64) -> f64 {
        let (g, l, k) = (self.g, self.l, self.k as f64);
        (1.0 - p) * (0.5 * g * (k - 2.0) / 2.0 + 0.5 * (g * k / 2.0 + l))
    }

    pub fn fitness_analogy(&self, p: f64) -> f64 {
        let (g, l, k) = (self.g, self.l, self.k as f64);
        let low = g * (k - 2.0) / 2.0;
        p * (0.5 * (low - l) + 0.5 * low) + (1.0 - p) * (0.5 * (low - l) + 0.5 * (g * k / 2.0 + l))
    }

    /// fit_correct - fit_analogy = l/2 - p g (K-2)/2
    pub fn fitness_gap(&self, p: f64) -> f64 {
        0.5 * self.l - p * self.g * (self.k as f64 - 2.0) / 2.0
    }

    /// Stable share of the analogy model.
    pub fn p_star_b(&self) -> f64 {
        1.0 - self.l / (self.g * (self.k as f64 - 2.0))
    }

    /// The KL objective for an even-node drop rate x at the maximal-continuation profile.
    pub fn analogy_objective(&self, x: f64) -> f64 {
        let h = self.k as f64 / 2.0;
        0.5 * (1.0 / ((1.0 - x).powf(h - 1.0) * x)).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentipedeReport {
    pub applicable: bool,
    pub maximal_continuation_verified: bool,
    /// Minimizer of the closed-form objective on a 1e-6 grid.
    pub analogy_minimizer_x: f64,
    /// Same minimizer from KL over outcome distributions.
    pub analogy_minimizer_generic: f64,
    pub p_star_b: f64,
    /// Stable share of the analogy model found by scanning the fitness gap.
    pub p_star_b_scan: Option<f64>,
    /// Largest gap between evaluator fitness and the closed forms on a p grid.
    pub fitness_formula_residual: f64,
}

pub fn centipede_analysis(spec: &CentipedeSpec) -> Result<CentipedeReport> {
    spec.validate()?;
    let k = spec.k;
    let game = spec.game();
    let x_star = 2.0 / k as f64;
    let n = 1_000_000;
    let mut best = (f64::INFINITY, 0.0);
    for i in 1..n {
        let x = i as f64 / n as f64;
        let v = spec.analogy_objective(x);
        if v < best.0 {
            best = (v, x);
        }
    }
    let [d_aa, d_ab, d_ba, d_bb] = spec.maximal_continuation();
    // B's fitted conjectures from the data in each match type
    let about_a_even = fit_analogy(&game, &d_ba, &d_ab, false);
    let about_a_odd = fit_analogy(&game, &d_ba, &d_ab, true);
    let about_b_even = fit_analogy(&game, &d_bb, &d_bb, false);
    let conj_a = analogy(k, about_a_odd, about_a_even);
    let conj_b = analogy(k, 0.0, about_b_even);
    let applicable = spec.condition();
    let mut verified = applicable;
    for role in 0..2 {
        // correct agents hold correct conjectures
        verified &= game.optimal_against(role, &d_aa, &d_aa);
        verified &= game.optimal_against(role, &d_ab, &d_ba);
        verified &= game.optimal_against(role, &d_ba, &conj_a);
        verified &= game.optimal_against(role, &d_bb, &conj_b);
    }
    for x in [about_a_even, about_a_odd, about_b_even] {
        verified &= (x - x_star).abs() < 1e-6;
    }
    let mut resid: f64 = 0.0;
    for i in 0..=20 {
        let p = i as f64 / 20.0;
        let fa = p * game.sym_value(&d_aa, &d_aa) + (1.0 - p) * game.sym_value(&d_ab, &d_ba);
        let fb = p * game.sym_value(&d_ba, &d_ab) + (1.0 - p) * game.sym_value(&d_bb, &d_bb);
        resid = resid
            .max((fa - spec.fitness_correct(p)).abs())
            .max((fb - spec.fitness_analogy(p)).abs());
        resid = resid.max((spec.fitness_correct(p) - spec.fitness_analogy(p) - spec.fitness_gap(p)).abs());
    }
    let scan = stable_shares_by(|p| Some(spec.fitness_gap(p)), 100, 1e-12)?;
    Ok(CentipedeReport {
        applicable,
        maximal_continuation_verified: verified,
        analogy_minimizer_x: best.1,
        analogy_minimizer_generic: about_a_even,
        p_star_b: spec.p_star_b(),
        p_star_b_scan: scan.roots.first().map(|p| 1.0 - p),
        fitness_formula_residual: resid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: CentipedeSpec = CentipedeSpec { k: 10, g: 1.0, l: 2.0 };

    #[test]
    fn terminal_payoffs() {
        let g = SPEC.game();
        assert_eq!(g.payoff[0][0], 0.0);
        assert_eq!(g.payoff[0][1], -2.0);
        assert_eq!(g.payoff[1][1], 3.0);
        assert_eq!(g.payoff[0][10], 5.0);
    }

    #[test]
    fn report_for_reference_spec() {
        let r = centipede_analysis(&SPEC).unwrap();
        assert!(r.applicable && r.maximal_continuation_verified);
        assert!((r.analogy_minimizer_x - 0.2).abs() < 1e-6);
        assert!((r.analogy_minimizer_generic - 0.2).abs() < 1e-6);
        assert!((r.p_star_b - 0.75).abs() < 1e-12);
        assert!((r.p_star_b_scan.unwrap() - 0.75).abs() < 1e-9);
        assert!(r.fitness_formula_residual < 1e-12);
    }

    #[test]
    fn condition_failure_is_reported() {
        let r = centipede_analysis(&CentipedeSpec { k: 4, g: 1.0, l: 2.0 }).unwrap();
        assert!(!r.applicable && !r.maximal_continuation_verified);
        assert!(centipede_analysis(&CentipedeSpec { k: 5, g: 1.0, l: 1.0 }).is_err());
    }
}
