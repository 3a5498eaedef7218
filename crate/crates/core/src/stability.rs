//! Evolutionary stability, stability reversal, stable shares and the
//! singleton-invasion separation check.

use serde::Serialize;

use crate::error::{input, Result};
use crate::ez::{enumerate_per_situation, situation_fitness, SituationPlay, Zeitgeist};
use crate::game::{best_responses, symmetric_nash, FitnessWeights, StageEnv};
use crate::inference::Group;
use crate::lp::{solve, Lp, LpOutcome};
use crate::model::Model;
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Stable,
    Fragile,
    Ambiguous,
    NoEZ,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsEvidence {
    pub eps: f64,
    pub ez_count: usize,
    pub min_gap: f64,
    pub max_gap: f64,
    pub mixture_supported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub classification: Classification,
    pub evidence: Vec<EpsEvidence>,
}

pub const DEFAULT_EPS: [f64; 5] = [0.1, 0.05, 0.01, 0.005, 0.001];

/// Fitness gap fit_A - fit_B range over all EZs, computed per situation since
/// the EZ set is a product and fitness is additive across situations.
fn gap_range(env: &StageEnv, per: &[Vec<SituationPlay>], q: &FitnessWeights, shares: [f64; 2]) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (sit, plays) in per.iter().enumerate() {
        let gaps = plays.iter().map(|p| {
            let f = situation_fitness(env, sit, p.quad, shares);
            f[0] - f[1]
        });
        let (a, b) = gaps.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), g| (a.min(g), b.max(g)));
        lo += q.q()[sit] * a;
        hi += q.q()[sit] * b;
    }
    (lo, hi)
}

pub fn classify_stability(
    env: &StageEnv,
    model_a: &Model,
    model_b: &Model,
    q: &FitnessWeights,
    eps_list: &[f64],
) -> Result<StabilityVerdict> {
    if eps_list.is_empty() {
        return input("epsilon list is empty");
    }
    if q.q().len() != env.n_g() {
        return input("situation weights do not match the environment");
    }
    for w in eps_list.windows(2) {
        if w[1] >= w[0] {
            return input("epsilon list must be strictly descending");
        }
    }
    let mut evidence = Vec::new();
    for &eps in eps_list {
        if !(eps > 0.0 && eps < 1.0) {
            return input(format!("epsilon {eps} outside (0,1)"));
        }
        let shares = [1.0 - eps, eps];
        let per = enumerate_per_situation(env, model_a, model_b, shares)?;
        let count = per.iter().fold(1usize, |acc, v| acc.saturating_mul(v.len()));
        let (min_gap, max_gap) = if count == 0 {
            (f64::NAN, f64::NAN)
        } else {
            gap_range(env, &per, q, shares)
        };
        let mixture_supported = per
            .iter()
            .flatten()
            .any(|p| p.mixture_supported[0] || p.mixture_supported[1]);
        evidence.push(EpsEvidence {
            eps,
            ez_count: count,
            min_gap,
            max_gap,
            mixture_supported,
        });
    }
    let classification = if evidence.iter().any(|e| e.ez_count == 0) {
        Classification::NoEZ
    } else if evidence.iter().all(|e| e.min_gap >= -tol::TIE) {
        Classification::Stable
    } else if evidence.iter().all(|e| e.max_gap < -tol::TIE) {
        Classification::Fragile
    } else {
        Classification::Ambiguous
    };
    Ok(StabilityVerdict {
        classification,
        evidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversalResult {
    pub reversal: bool,
    /// EZs at shares (1,0) and (0,1).
    pub dominant_a: Vec<Zeitgeist>,
    pub dominant_b: Vec<Zeitgeist>,
}

pub fn detect_reversal(env: &StageEnv, model_a: &Model, model_b: &Model) -> Result<ReversalResult> {
    if env.n_g() != 1 {
        return input("stability reversal is defined for single-situation environments");
    }
    let to_z = |shares: [f64; 2]| -> Result<Vec<Zeitgeist>> {
        let per = enumerate_per_situation(env, model_a, model_b, shares)?;
        Ok(per[0]
            .iter()
            .map(|p| Zeitgeist {
                shares,
                plays: vec![p.clone()],
            })
            .collect())
    };
    let za = to_z([1.0, 0.0])?;
    let zb = to_z([0.0, 1.0])?;
    let cf = |z: &Zeitgeist, g: Group, h: Group| crate::ez::conditional_fitness(z, env, 0, g, h);
    let cond_a = za.iter().all(|z| {
        cf(z, Group::A, Group::A) > cf(z, Group::B, Group::A) + tol::TIE
            && cf(z, Group::A, Group::B) > cf(z, Group::B, Group::B) + tol::TIE
    });
    let cond_b = zb.iter().all(|z| {
        let f = situation_fitness(env, 0, z.plays[0].quad, z.shares);
        f[1] > f[0] + tol::TIE
    });
    Ok(ReversalResult {
        reversal: !za.is_empty() && !zb.is_empty() && cond_a && cond_b,
        dominant_a: za,
        dominant_b: zb,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharesReport {
    /// Stable shares p_A*.
    pub roots: Vec<f64>,
    /// Grid points where the selector produced no EZ.
    pub missing: Vec<f64>,
}

/// Scan p_A on a uniform grid for + to - sign changes of `gap(p_A)` and refine by bisection.
pub fn stable_shares_by(gap: impl Fn(f64) -> Option<f64>, grid_n: usize, tolerance: f64) -> Result<SharesReport> {
    if grid_n < 10 {
        return input("grid_n must be at least 10");
    }
    let grid: Vec<f64> = (0..=grid_n).map(|i| i as f64 / grid_n as f64).collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&p| gap(p)).collect();
    let missing = grid
        .iter()
        .zip(&vals)
        .filter(|(_, v)| v.is_none())
        .map(|(p, _)| *p)
        .collect();
    let zero = |v: f64| v.abs() <= tol::TIE;
    let mut roots = Vec::new();
    for i in 0..grid_n {
        let (Some(a), Some(b)) = (vals[i], vals[i + 1]) else {
            continue;
        };
        if zero(b) && i + 2 <= grid_n {
            // exact zero at a grid point: + before, - after
            if let Some(c) = vals[i + 2] {
                if a > tol::TIE && c < -tol::TIE {
                    roots.push(grid[i + 1]);
                }
            }
            continue;
        }
        if a > tol::TIE && b < -tol::TIE {
            let (mut lo, mut hi) = (grid[i], grid[i + 1]);
            while hi - lo > tolerance {
                let mid = 0.5 * (lo + hi);
                match gap(mid) {
                    Some(v) if v > 0.0 => lo = mid,
                    Some(_) => hi = mid,
                    None => break,
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    Ok(SharesReport { roots, missing })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EzSelector {
    /// First EZ in lexicographic quadruple order, per situation.
    LexFirst,
}

pub fn stable_shares(
    env: &StageEnv,
    model_a: &Model,
    model_b: &Model,
    q: &FitnessWeights,
    grid_n: usize,
    tolerance: f64,
    selector: EzSelector,
) -> Result<SharesReport> {
    let EzSelector::LexFirst = selector;
    let gap = |p: f64| -> Option<f64> {
        let shares = [p, 1.0 - p];
        let per = enumerate_per_situation(env, model_a, model_b, shares).ok()?;
        let mut gap = 0.0;
        for (sit, plays) in per.iter().enumerate() {
            let f = situation_fitness(env, sit, plays.first()?.quad, shares);
            gap += q.q()[sit] * (f[0] - f[1]);
        }
        Some(gap)
    };
    stable_shares_by(gap, grid_n, tolerance)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationResult {
    pub v_ne: Vec<f64>,
    /// One vector per enumerated best-response correspondence; -inf marks no profile.
    pub candidate_points: Vec<Vec<f64>>,
    pub separating_q: Option<Vec<f64>>,
    pub margin: f64,
}

/// Largest number of correspondences enumerated; beyond it only functions are used.
pub const MAX_CORRESPONDENCES: usize = 1_000_000;

fn correspondence_value(env: &StageEnv, g: usize, b: &[u32], br: &[Vec<usize>]) -> f64 {
    let n = env.n_a();
    let mut v = f64::INFINITY;
    for a_minus in 0..n {
        for a_i in 0..n {
            if b[a_minus] >> a_i & 1 == 1 && br[a_i].contains(&a_minus) {
                v = v.min(env.payoff(g, a_i, a_minus));
            }
        }
    }
    if v.is_infinite() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Value vector for the correspondence encoded as bitmasks, one per opponent action.
pub fn candidate_value(env: &StageEnv, b: &[u32]) -> Vec<f64> {
    (0..env.n_g())
        .map(|g| {
            let br: Vec<Vec<usize>> = (0..env.n_a()).map(|a| best_responses(env, g, a)).collect();
            correspondence_value(env, g, b, &br)
        })
        .collect()
}

fn margin_at(q: &[f64], v_ne: &[f64], pts: &[&Vec<f64>]) -> f64 {
    let dot = |v: &[f64]| q.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let best = pts.iter().map(|v| dot(v)).fold(f64::NEG_INFINITY, f64::max);
    dot(v_ne) - best
}

pub fn singleton_fragility_check(env: &StageEnv) -> Result<SeparationResult> {
    env.validate()?;
    let n = env.n_a();
    let ng = env.n_g();
    let mut v_ne = Vec::with_capacity(ng);
    for g in 0..ng {
        match symmetric_nash(env, g).v_ne {
            Some(v) => v_ne.push(v),
            None => return input(format!("no symmetric pure Nash equilibrium in {}", env.situations[g])),
        }
    }
    let brs: Vec<Vec<Vec<usize>>> = (0..ng)
        .map(|g| (0..n).map(|a| best_responses(env, g, a)).collect())
        .collect();
    let full = (1u64 << n) - 1;
    let use_corr = (full as f64).powi(n as i32) <= MAX_CORRESPONDENCES as f64;
    let choices: Vec<u32> = if use_corr {
        (1..=full as u32).collect()
    } else {
        (0..n).map(|a| 1u32 << a).collect()
    };
    let total = (choices.len() as f64).powi(n as i32);
    if total > 1e8 {
        return input(format!("{n} strategies give too many candidate responses to enumerate"));
    }
    let mut candidate_points = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let b: Vec<u32> = idx.iter().map(|&i| choices[i]).collect();
        candidate_points.push(
            (0..ng)
                .map(|g| correspondence_value(env, g, &b, &brs[g]))
                .collect::<Vec<f64>>(),
        );
        let mut pos = 0;
        loop {
            if pos == n {
                break;
            }
            idx[pos] += 1;
            if idx[pos] < choices.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }
    let finite: Vec<&Vec<f64>> = candidate_points
        .iter()
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .collect();
    if finite.is_empty() {
        let q = vec![1.0 / ng as f64; ng];
        return Ok(SeparationResult {
            v_ne,
            candidate_points,
            separating_q: Some(q),
            margin: f64::INFINITY,
        });
    }
    // variables q_1..q_ng, m+, m-
    let mut a_ub = Vec::with_capacity(finite.len());
    for v in &finite {
        let mut row: Vec<f64> = v.iter().zip(&v_ne).map(|(x, e)| x - e).collect();
        row.push(1.0);
        row.push(-1.0);
        a_ub.push(row);
    }
    let mut eq = vec![1.0; ng];
    eq.extend([0.0, 0.0]);
    let mut c = vec![0.0; ng];
    c.extend([1.0, -1.0]);
    let lp = Lp {
        c,
        b_ub: vec![0.0; a_ub.len()],
        a_ub,
        a_eq: vec![eq],
        b_eq: vec![1.0],
    };
    let (q, margin) = match solve(&lp) {
        LpOutcome::Optimal { x, value } => (x[..ng].to_vec(), value),
        _ => {
            return Ok(SeparationResult {
                v_ne,
                candidate_points,
                separating_q: None,
                margin: f64::NAN,
            })
        }
    };
    if margin <= tol::TIE {
        return Ok(SeparationResult {
            v_ne,
            candidate_points,
            separating_q: None,
            margin,
        });
    }
    let mut q_t = q.clone();
    if q.iter().any(|&x| x <= 0.0) {
        let mut eps = 0.5;
        let mut found = false;
        for _ in 0..60 {
            let cand: Vec<f64> = q.iter().map(|&x| (1.0 - eps) * x + eps / ng as f64).collect();
            if margin_at(&cand, &v_ne, &finite) > tol::TIE {
                q_t = cand;
                found = true;
                break;
            }
            eps *= 0.5;
        }
        if !found {
            return Ok(SeparationResult {
                v_ne,
                candidate_points,
                separating_q: None,
                margin,
            });
        }
    }
    let margin = margin_at(&q_t, &v_ne, &finite);
    Ok(SeparationResult {
        v_ne,
        candidate_points,
        separating_q: Some(q_t),
        margin,
    })
}
