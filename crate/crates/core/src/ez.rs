//! Equilibrium zeitgeists: enumeration over pure quadruples, verification, fitness.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::game::{argmax_set, FitnessWeights, StageEnv};
use crate::inference::{check_shares, kl_minimizers, wmul, DataContext, ExtendedReal, Group, Scorer};
use crate::lp::simplex_feasible;
use crate::model::{Model, ParamSet};
use crate::tol;

/// Play in one situation: (a_AA, a_AB, a_BA, a_BB), where a_gh is what group g plays against group h.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quad(pub [usize; 4]);

impl Quad {
    pub fn new(aa: usize, ab: usize, ba: usize, bb: usize) -> Self {
        Quad([aa, ab, ba, bb])
    }

    /// Strategy of group `g` against group `h` (0 = A, 1 = B).
    #[inline]
    pub fn play(&self, g: usize, h: usize) -> usize {
        self.0[2 * g + h]
    }
}

/// Sparse belief: (parameter index, probability).
pub type Belief = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationPlay {
    pub quad: Quad,
    pub beliefs: [Belief; 2],
    /// Set when no single minimizer rationalizes the play and a mixture was needed.
    pub mixture_supported: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zeitgeist {
    pub shares: [f64; 2],
    pub plays: Vec<SituationPlay>,
}

impl Zeitgeist {
    pub fn mixture_supported(&self) -> bool {
        self.plays
            .iter()
            .any(|p| p.mixture_supported[0] || p.mixture_supported[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCertificate {
    pub minimizers: Vec<usize>,
    pub all_infinite: bool,
    pub min_kl: ExtendedReal,
    /// Subjective payoff of each strategy in the own-group match under the belief.
    pub payoffs_own: Vec<f64>,
    pub payoffs_cross: Vec<f64>,
    /// Payoff of the played strategy minus the best payoff; >= -1e-9 when optimal.
    pub slack_own: f64,
    pub slack_cross: f64,
    /// Support points outside the minimizer set.
    pub offending: Vec<usize>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EzCertificate {
    pub situations: Vec<[GroupCertificate; 2]>,
}

fn models_fit(env: &StageEnv, models: [&Model; 2]) -> Result<()> {
    env.validate()?;
    for m in models {
        m.check_env(env)?;
    }
    Ok(())
}

/// Expected subjective payoffs of every strategy under `belief` against conjectures about group `h`.
fn subjective_table(env: &StageEnv, model: &Model, belief: &Belief, h: usize) -> Vec<f64> {
    let n = env.n_a();
    let mut out = vec![0.0; n];
    for &(gamma, mu) in belief {
        let p = model.param(gamma);
        let k = &model.kernels[p.kernel];
        for (z, o) in out.iter_mut().enumerate() {
            *o += mu * k.expected(z, p.conj(h), &env.utility);
        }
    }
    out
}

pub fn verify_ez(z: &Zeitgeist, env: &StageEnv, model_a: &Model, model_b: &Model) -> Result<(bool, EzCertificate)> {
    models_fit(env, [model_a, model_b])?;
    check_shares(z.shares)?;
    if z.plays.len() != env.n_g() {
        return input(format!(
            "zeitgeist has {} situations, environment {}",
            z.plays.len(),
            env.n_g()
        ));
    }
    let models = [model_a, model_b];
    let n = env.n_a();
    let mut all_ok = true;
    let mut situations = Vec::new();
    for (sit, sp) in z.plays.iter().enumerate() {
        if sp.quad.0.iter().any(|&a| a >= n) {
            return input("quadruple strategy out of range");
        }
        let mut certs = Vec::new();
        for g in 0..2 {
            let model = models[g];
            let belief = &sp.beliefs[g];
            let mass: f64 = belief.iter().map(|b| b.1).sum();
            if belief.iter().any(|&(i, m)| i >= model.len() || !(m >= 0.0)) || (mass - 1.0).abs() > tol::PROB_SUM {
                return input(format!(
                    "belief of group {} in situation {} is not a distribution over the model",
                    Group::from_index(g),
                    env.situations[sit]
                ));
            }
            let ctx = DataContext::new(Group::from_index(g), z.shares, sit, sp.quad)?;
            let mins = kl_minimizers(model, &ctx, env);
            let offending: Vec<usize> = belief
                .iter()
                .filter(|b| b.1 > 0.0 && mins.indices.binary_search(&b.0).is_err())
                .map(|b| b.0)
                .collect();
            let own = subjective_table(env, model, belief, g);
            let cross = subjective_table(env, model, belief, 1 - g);
            let best = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let slack_own = own[sp.quad.play(g, g)] - best(&own);
            let slack_cross = cross[sp.quad.play(g, 1 - g)] - best(&cross);
            let ok = offending.is_empty() && slack_own >= -tol::TIE && slack_cross >= -tol::TIE;
            all_ok &= ok;
            certs.push(GroupCertificate {
                minimizers: mins.indices,
                all_infinite: mins.all_infinite,
                min_kl: mins.min,
                payoffs_own: own,
                payoffs_cross: cross,
                slack_own,
                slack_cross,
                offending,
                ok,
            });
        }
        let b = certs.pop().unwrap();
        let a = certs.pop().unwrap();
        situations.push([a, b]);
    }
    Ok((all_ok, EzCertificate { situations }))
}

/// Largest minimizer set for which the mixture program is attempted.
pub const MAX_MIXTURE_SET: usize = 4000;

/// Feasible (a_gg, a_g-g, a_-gg) triples for one group with their beliefs.
struct GroupSolution {
    triples: Vec<([usize; 3], Belief, bool)>,
}

/// Lazily computed subjective best-response sets per (kernel, conjecture).
///
/// Expected utilities are memoized per (stored row, own strategy) so kernels
/// that share a row store share the work.
struct BrCache<'a> {
    env: &'a StageEnv,
    model: &'a Model,
    cells: Vec<OnceLock<Vec<u32>>>,
    memo_of: Vec<Option<usize>>,
    memos: Vec<Vec<AtomicU64>>,
}

const MEMO_LIMIT: usize = 50_000_000;
const EMPTY: u64 = u64::MAX;

impl<'a> BrCache<'a> {
    fn new(env: &'a StageEnv, model: &'a Model) -> Self {
        let n = env.n_a();
        let size = model.kernels.len() * n;
        let mut keys: Vec<(*const Vec<crate::game::Row>, usize)> = Vec::new();
        let mut memos: Vec<Vec<AtomicU64>> = Vec::new();
        let mut total = 0usize;
        let memo_of = model
            .kernels
            .iter()
            .map(|k| {
                let key = (Arc::as_ptr(k.store()), k.own_stride());
                if let Some(i) = keys.iter().position(|&x| x == key) {
                    return Some(i);
                }
                let len = k.store().len() * n;
                if total + len > MEMO_LIMIT {
                    return None;
                }
                total += len;
                keys.push(key);
                memos.push((0..len).map(|_| AtomicU64::new(EMPTY)).collect());
                Some(memos.len() - 1)
            })
            .collect();
        BrCache {
            env,
            model,
            cells: (0..size).map(|_| OnceLock::new()).collect(),
            memo_of,
            memos,
        }
    }

    fn expected(&self, k: usize, z: usize, c: usize) -> f64 {
        let r = self.model.kernels[k].row(z, c);
        let Some(m) = self.memo_of[k] else {
            return r.expect(&self.env.utility);
        };
        let cell = &self.memos[m][r.id as usize * self.env.n_a() + z];
        let v = cell.load(Ordering::Relaxed);
        if v != EMPTY {
            return f64::from_bits(v);
        }
        let e = r.expect(&self.env.utility);
        cell.store(e.to_bits(), Ordering::Relaxed);
        e
    }

    fn contains(&self, k: usize, c: usize, a: usize) -> bool {
        let n = self.env.n_a();
        let set = self.cells[k * n + c].get_or_init(|| {
            let vals: Vec<f64> = (0..n).map(|z| self.expected(k, z, c)).collect();
            argmax_set(&vals).into_iter().map(|v| v as u32).collect()
        });
        set.binary_search(&(a as u32)).is_ok()
    }
}

/// Belief on `set` making `a` optimal against conjectures about group g and `x` against group -g.
fn rationalize(
    env: &StageEnv,
    model: &Model,
    br: &BrCache<'_>,
    g: usize,
    a: usize,
    x: usize,
    set: &[usize],
) -> Result<Option<(Belief, bool)>> {
    for &gamma in set {
        let p = model.param(gamma);
        if br.contains(p.kernel, p.conj(g), a) && br.contains(p.kernel, p.conj(1 - g), x) {
            return Ok(Some((vec![(gamma, 1.0)], false)));
        }
    }
    if set.len() < 2 {
        return Ok(None);
    }
    if set.len() > MAX_MIXTURE_SET {
        return Err(Error::Construction(format!(
            "minimizer set of size {} exceeds the mixture-program limit {MAX_MIXTURE_SET}",
            set.len()
        )));
    }
    let n = env.n_a();
    let mut rows = Vec::with_capacity(2 * (n - 1));
    for (h, play) in [(g, a), (1 - g, x)] {
        let u: Vec<Vec<f64>> = set
            .iter()
            .map(|&gamma| {
                let p = model.param(gamma);
                (0..n)
                    .map(|z| model.kernels[p.kernel].expected(z, p.conj(h), &env.utility))
                    .collect()
            })
            .collect();
        for z in 0..n {
            if z != play {
                rows.push(u.iter().map(|uj| uj[z] - uj[play]).collect::<Vec<f64>>());
            }
        }
    }
    let b = vec![0.5 * tol::TIE; rows.len()];
    Ok(simplex_feasible(&rows, &b, set.len()).map(|mu| {
        let belief = set
            .iter()
            .zip(mu)
            .filter(|(_, m)| *m > 0.0)
            .map(|(&i, m)| (i, m))
            .collect();
        (belief, true)
    }))
}

/// Per-unit own-term tables. Units are kernels (product models) or parameters (lists).
struct OwnTable {
    units: usize,
    min: Vec<f64>,
}

/// min_i (a_i + b_i), written with independent lanes so it vectorizes.
fn min_sum(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [f64::INFINITY; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            let v = x[i] + y[i];
            acc[i] = if v < acc[i] { v } else { acc[i] };
        }
    }
    let mut m = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    for (x, y) in ra.iter().zip(rb) {
        m = m.min(x + y);
    }
    m
}

/// Number of i with a_i + b_i <= thr.
fn count_le(a: &[f64], b: &[f64], thr: f64) -> usize {
    let mut acc = [0u32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += (x[i] + y[i] <= thr) as u32;
        }
    }
    let tail = ra.iter().zip(rb).filter(|(x, y)| *x + *y <= thr).count();
    acc.iter().map(|&c| c as usize).sum::<usize>() + tail
}

fn solve_group(env: &StageEnv, model: &Model, sit: usize, g: usize, shares: [f64; 2]) -> Result<GroupSolution> {
    let n = env.n_a();
    let sc = Scorer::new(env, model, sit);
    let br = BrCache::new(env, model);
    let w = shares[g];
    let own = match &model.params {
        ParamSet::Product => {
            let nk = model.kernels.len();
            let mut min = vec![f64::INFINITY; n * nk];
            for a in 0..n {
                for k in 0..nk {
                    min[a * nk + k] = sc
                        .finite(a)
                        .iter()
                        .map(|&c| wmul(w, sc.d(k, a, a, c)))
                        .fold(f64::INFINITY, f64::min);
                }
            }
            OwnTable { units: nk, min }
        }
        ParamSet::List(ps) => {
            let mut min = vec![f64::INFINITY; n * ps.len()];
            for a in 0..n {
                for (t, p) in ps.iter().enumerate() {
                    min[a * ps.len() + t] = wmul(w, sc.d(p.kernel, a, a, p.conj(g)));
                }
            }
            OwnTable { units: ps.len(), min }
        }
    };
    let u = own.units;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).collect();
    let per_pair: Vec<Result<Vec<([usize; 3], Belief, bool)>>> = pairs
        .par_iter()
        .map(|&(x, y)| {
            let cross: Vec<f64> = match &model.params {
                ParamSet::Product => (0..u)
                    .map(|k| {
                        sc.finite(y)
                            .iter()
                            .map(|&c| wmul(1.0 - w, sc.d(k, x, y, c)))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect(),
                ParamSet::List(ps) => ps
                    .iter()
                    .map(|p| wmul(1.0 - w, sc.d(p.kernel, x, y, p.conj(1 - g))))
                    .collect(),
            };
            let mut out = Vec::new();
            for a in 0..n {
                let row = &own.min[a * u..(a + 1) * u];
                let m = min_sum(row, &cross);
                let set: Vec<usize> = if m.is_infinite() {
                    (0..model.len()).collect()
                } else {
                    let thr = m + tol::TIE;
                    let unique = count_le(row, &cross, thr) == 1;
                    match &model.params {
                        ParamSet::Product if unique => {
                            let k = row
                                .iter()
                                .zip(&cross)
                                .position(|(o, c)| o + c <= thr)
                                .expect("minimum attained");
                            let mut idx = Vec::new();
                            sc.push_kernel(&mut idx, g, w, a, x, y, k, m);
                            idx.sort_unstable();
                            idx
                        }
                        ParamSet::Product => sc.expand_product(g, w, a, x, y, row, &cross).indices,
                        ParamSet::List(_) => (0..u).filter(|&t| row[t] + cross[t] <= thr).collect(),
                    }
                };
                if let Some((belief, mix)) = rationalize(env, model, &br, g, a, x, &set)? {
                    out.push(([a, x, y], belief, mix));
                }
            }
            Ok(out)
        })
        .collect();
    let mut triples = Vec::new();
    for r in per_pair {
        triples.extend(r?);
    }
    Ok(GroupSolution { triples })
}

/// All pure-quadruple EZ plays in one situation, sorted by quadruple.
pub fn enumerate_situation(
    env: &StageEnv,
    model_a: &Model,
    model_b: &Model,
    shares: [f64; 2],
    sit: usize,
) -> Result<Vec<SituationPlay>> {
    models_fit(env, [model_a, model_b])?;
    check_shares(shares)?;
    if sit >= env.n_g() {
        return input(format!("situation index {sit} out of range"));
    }
    let sa = solve_group(env, model_a, sit, 0, shares)?;
    let sb = solve_group(env, model_b, sit, 1, shares)?;
    // A triple (aAA, aAB, aBA); B triple (aBB, aBA, aAB)
    let mut by_cross: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, t) in sa.triples.iter().enumerate() {
        by_cross.entry((t.0[1], t.0[2])).or_default().push(i);
    }
    let mut out = Vec::new();
    for (tb, bb, mb) in &sb.triples {
        let (a_bb, a_ba, a_ab) = (tb[0], tb[1], tb[2]);
        if let Some(list) = by_cross.get(&(a_ab, a_ba)) {
            for &i in list {
                let (ta, ba, ma) = &sa.triples[i];
                out.push(SituationPlay {
                    quad: Quad::new(ta[0], a_ab, a_ba, a_bb),
                    beliefs: [ba.clone(), bb.clone()],
                    mixture_supported: [*ma, *mb],
                });
            }
        }
    }
    out.sort_by(|p, q| p.quad.cmp(&q.quad));
    Ok(out)
}

/// Cap on the number of cross-situation combinations materialized by `enumerate_ez`.
pub const MAX_PRODUCT: usize = 1_000_000;

/// Per-situation EZ plays; the EZ set is their Cartesian product.
pub fn enumerate_per_situation(
    env: &StageEnv,
    model_a: &Model,
    model_b: &Model,
    shares: [f64; 2],
) -> Result<Vec<Vec<SituationPlay>>> {
    (0..env.n_g())
        .map(|g| enumerate_situation(env, model_a, model_b, shares, g))
        .collect()
}

pub fn enumerate_ez(env: &StageEnv, model_a: &Model, model_b: &Model, shares: [f64; 2]) -> Result<Vec<Zeitgeist>> {
    let per = enumerate_per_situation(env, model_a, model_b, shares)?;
    combine(&per, shares)
}

pub fn combine(per: &[Vec<SituationPlay>], shares: [f64; 2]) -> Result<Vec<Zeitgeist>> {
    let total = per
        .iter()
        .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
        .unwrap_or(usize::MAX);
    if total > MAX_PRODUCT {
        return Err(Error::Construction(format!(
            "{total} cross-situation EZ combinations exceed {MAX_PRODUCT}"
        )));
    }
    let mut out = vec![Vec::new()];
    for plays in per {
        let mut next = Vec::with_capacity(out.len() * plays.len());
        for prefix in &out {
            for p in plays {
                let mut v: Vec<SituationPlay> = prefix.clone();
                v.push(p.clone());
                next.push(v);
            }
        }
        out = next;
    }
    Ok(out.into_iter().map(|plays| Zeitgeist { shares, plays }).collect())
}

/// Objective payoff of group g against group h in situation `sit`.
pub fn conditional_fitness(z: &Zeitgeist, env: &StageEnv, sit: usize, g: Group, h: Group) -> f64 {
    let q = z.plays[sit].quad;
    let (g, h) = (g.index(), h.index());
    env.payoff(sit, q.play(g, h), q.play(h, g))
}

/// Fitness contribution of one situation, before weighting by q.
pub fn situation_fitness(env: &StageEnv, sit: usize, quad: Quad, shares: [f64; 2]) -> [f64; 2] {
    let mut f = [0.0; 2];
    for g in 0..2 {
        let h = 1 - g;
        let own = env.payoff(sit, quad.play(g, g), quad.play(g, g));
        let cross = env.payoff(sit, quad.play(g, h), quad.play(h, g));
        f[g] = shares[g] * own + (1.0 - shares[g]) * cross;
    }
    f
}

pub fn fitness(z: &Zeitgeist, env: &StageEnv, q: &FitnessWeights) -> (f64, f64) {
    let mut f = (0.0, 0.0);
    for (sit, sp) in z.plays.iter().enumerate() {
        let s = situation_fitness(env, sit, sp.quad, z.shares);
        f.0 += q.q()[sit] * s[0];
        f.1 += q.q()[sit] * s[1];
    }
    f
}
