//! KL divergence and the weighted-KL belief-selection objective.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::ez::Quad;
use crate::game::{check_prob, Row, RowRef, StageEnv};
use crate::model::{Model, ParamSet, Parameter};
use crate::tol;

/// A nonnegative real or +infinity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub enum ExtendedReal {
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub fn from_f64(x: f64) -> Self {
        if x.is_infinite() && x > 0.0 {
            ExtendedReal::PosInf
        } else {
            ExtendedReal::Finite(x)
        }
    }

    pub fn value(self) -> f64 {
        match self {
            ExtendedReal::Finite(x) => x,
            ExtendedReal::PosInf => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedReal::PosInf)
    }

    /// `w * self` with 0 * inf = inf.
    pub fn scale(self, w: f64) -> Self {
        match self {
            ExtendedReal::Finite(x) => ExtendedReal::Finite(w * x),
            ExtendedReal::PosInf => ExtendedReal::PosInf,
        }
    }
}

impl std::ops::Add for ExtendedReal {
    type Output = ExtendedReal;
    fn add(self, o: Self) -> Self {
        match (self, o) {
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => ExtendedReal::Finite(a + b),
            _ => ExtendedReal::PosInf,
        }
    }
}

impl std::fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtendedReal::Finite(x) => write!(f, "{x}"),
            ExtendedReal::PosInf => write!(f, "inf"),
        }
    }
}

/// `w * d` with 0 * inf = inf.
#[inline]
pub(crate) fn wmul(w: f64, d: f64) -> f64 {
    if d.is_infinite() {
        f64::INFINITY
    } else {
        w * d
    }
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<ExtendedReal> {
    if p.len() != q.len() {
        return input(format!("KL arguments have lengths {} and {}", p.len(), q.len()));
    }
    check_prob(p, "KL first argument")?;
    check_prob(q, "KL second argument")?;
    Ok(ExtendedReal::from_f64(kl_slices(p, q)))
}

fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            s += a * (a / b).ln();
        }
    }
    s.max(0.0)
}

/// KL between two sparse kernel rows; +inf on support violation.
pub fn kl_rows(p: RowRef<'_>, q: RowRef<'_>) -> f64 {
    let mut s = 0.0;
    let q_end = q.offset + q.mass.len();
    for (i, &a) in p.mass.iter().enumerate() {
        if a <= 0.0 {
            continue;
        }
        let y = p.offset + i;
        if y < q.offset || y >= q_end {
            return f64::INFINITY;
        }
        let b = q.mass[y - q.offset];
        if b <= 0.0 {
            return f64::INFINITY;
        }
        s += a * (a / b).ln();
    }
    s.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn index(self) -> usize {
        match self {
            Group::A => 0,
            Group::B => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Group::A
        } else {
            Group::B
        }
    }

    pub fn other(self) -> Self {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::A => "A",
            Group::B => "B",
        })
    }
}

/// Shares, situation and quadruple defining the data one group fits its model to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataContext {
    pub own_group: Group,
    pub shares: [f64; 2],
    pub situation: usize,
    pub profile: Quad,
}

impl DataContext {
    pub fn new(own_group: Group, shares: [f64; 2], situation: usize, profile: Quad) -> Result<Self> {
        check_shares(shares)?;
        Ok(DataContext {
            own_group,
            shares,
            situation,
            profile,
        })
    }

    /// (own weight, own-match action, cross own action, cross opponent action)
    fn parts(&self) -> (f64, usize, usize, usize) {
        let g = self.own_group.index();
        let h = 1 - g;
        (
            self.shares[g],
            self.profile.play(g, g),
            self.profile.play(g, h),
            self.profile.play(h, g),
        )
    }
}

pub fn check_shares(s: [f64; 2]) -> Result<()> {
    if !(0.0..=1.0).contains(&s[0]) || !(0.0..=1.0).contains(&s[1]) || (s[0] + s[1] - 1.0).abs() > tol::SHARE_SUM {
        return input(format!("shares ({}, {}) must be in [0,1] and sum to 1", s[0], s[1]));
    }
    Ok(())
}

fn phi_kl_matrix(env: &StageEnv) -> Vec<f64> {
    let n = env.n_a();
    let d = &env.monitoring.dist;
    let mut m = vec![0.0; n * n];
    for y in 0..n {
        for a in 0..n {
            m[y * n + a] = kl_slices(&d[y], &d[a]);
        }
    }
    m
}

/// The weighted objective for parameter `gamma` of `model`.
pub fn weighted_kl(model: &Model, gamma: usize, ctx: &DataContext, env: &StageEnv) -> ExtendedReal {
    let p = model.param(gamma);
    let g = ctx.own_group.index();
    let (w, a, x, y) = ctx.parts();
    let truth = &env.kernels[ctx.situation];
    let k = &model.kernels[p.kernel];
    let mon = &env.monitoring.dist;
    let own = kl_rows(truth.row(a, a), k.row(a, p.conj(g))) + kl_slices(&mon[a], &mon[p.conj(g)]);
    let cross = kl_rows(truth.row(x, y), k.row(x, p.conj(1 - g))) + kl_slices(&mon[y], &mon[p.conj(1 - g)]);
    ExtendedReal::from_f64(wmul(w, own) + wmul(1.0 - w, cross))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimizers {
    pub indices: Vec<usize>,
    pub min: ExtendedReal,
    pub all_infinite: bool,
}

pub fn kl_minimizers(model: &Model, ctx: &DataContext, env: &StageEnv) -> Minimizers {
    let sc = Scorer::new(env, model, ctx.situation);
    let (w, a, x, y) = ctx.parts();
    sc.minimizers(ctx.own_group.index(), w, a, x, y)
}

/// Per-parameter scores as CSV: index, conjectures, kernel label, score.
pub fn write_scores_csv(model: &Model, ctx: &DataContext, env: &StageEnv, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,conj_a,conj_b,kernel,weighted_kl")?;
    for gamma in 0..model.len() {
        let p = model.param(gamma);
        writeln!(
            f,
            "{gamma},{},{},{},{}",
            env.strategies[p.conj_a],
            env.strategies[p.conj_b],
            model.kernel_labels[p.kernel],
            weighted_kl(model, gamma, ctx, env)
        )?;
    }
    Ok(())
}

const CACHE_LIMIT: usize = 40_000_000;

/// Memo of KL(true row || model row), valid when both kernels share `own_stride`.
struct KlCache {
    n_subj: usize,
    base: Vec<Option<usize>>,
    cells: Vec<AtomicU64>,
}

const EMPTY: u64 = u64::MAX;

/// Scores parameters for one situation, exploiting the split of the objective
/// into an own-match term and a cross-match term.
pub(crate) struct Scorer<'a> {
    pub env: &'a StageEnv,
    pub model: &'a Model,
    pub sit: usize,
    phi_kl: Vec<f64>,
    finite_c: Vec<Vec<usize>>,
    cache: Option<KlCache>,
}

impl<'a> Scorer<'a> {
    pub fn new(env: &'a StageEnv, model: &'a Model, sit: usize) -> Self {
        let truth = &env.kernels[sit];
        let mut stores: Vec<&Arc<Vec<Row>>> = Vec::new();
        let mut base = Vec::with_capacity(model.kernels.len());
        let mut offs: Vec<usize> = Vec::new();
        let mut total = 0usize;
        for k in &model.kernels {
            if k.own_stride() != truth.own_stride() {
                base.push(None);
                continue;
            }
            match stores.iter().position(|s| Arc::ptr_eq(s, k.store())) {
                Some(i) => base.push(Some(offs[i])),
                None => {
                    stores.push(k.store());
                    offs.push(total);
                    base.push(Some(total));
                    total += k.store().len();
                }
            }
        }
        let size = total.saturating_mul(truth.store().len());
        let cache = if total > 0 && size <= CACHE_LIMIT {
            Some(KlCache {
                n_subj: total,
                base,
                cells: (0..size).map(|_| AtomicU64::new(EMPTY)).collect(),
            })
        } else {
            None
        };
        let n = env.n_a();
        let phi_kl = phi_kl_matrix(env);
        let finite_c = (0..n)
            .map(|y| (0..n).filter(|&c| phi_kl[y * n + c].is_finite()).collect())
            .collect();
        Scorer {
            env,
            model,
            sit,
            phi_kl,
            finite_c,
            cache,
        }
    }

    /// Conjectures c with finite monitoring divergence from play y.
    #[inline]
    pub fn finite(&self, y: usize) -> &[usize] {
        &self.finite_c[y]
    }

    #[inline]
    pub fn phi(&self, y: usize, a: usize) -> f64 {
        self.phi_kl[y * self.env.n_a() + a]
    }

    /// KL(F(a, b, G) || F_k(a, c)).
    #[inline]
    pub fn kl_f(&self, k: usize, a: usize, b: usize, c: usize) -> f64 {
        let t = self.env.kernels[self.sit].row(a, b);
        let s = self.model.kernels[k].row(a, c);
        if let Some(cache) = &self.cache {
            if let Some(base) = cache.base[k] {
                let idx = t.id as usize * cache.n_subj + base + s.id as usize;
                let cell = &cache.cells[idx];
                let v = cell.load(Ordering::Relaxed);
                if v != EMPTY {
                    return f64::from_bits(v);
                }
                let d = kl_rows(t, s);
                cell.store(d.to_bits(), Ordering::Relaxed);
                return d;
            }
        }
        kl_rows(t, s)
    }

    /// Unweighted divergence of data from match (a, b) against kernel k with conjecture c.
    #[inline]
    pub fn d(&self, k: usize, a: usize, b: usize, c: usize) -> f64 {
        let ph = self.phi(b, c);
        if ph.is_infinite() {
            return f64::INFINITY;
        }
        self.kl_f(k, a, b, c) + ph
    }

    /// Smallest weighted cross term per kernel: min over c of (1-w) * d(k, x, y, c).
    pub fn best_term(&self, w: f64, a: usize, b: usize) -> Vec<f64> {
        (0..self.model.kernels.len())
            .map(|k| {
                self.finite(b)
                    .iter()
                    .map(|&c| wmul(w, self.d(k, a, b, c)))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    fn param_score(&self, p: &Parameter, g: usize, w: f64, a: usize, x: usize, y: usize) -> f64 {
        wmul(w, self.d(p.kernel, a, a, p.conj(g))) + wmul(1.0 - w, self.d(p.kernel, x, y, p.conj(1 - g)))
    }

    /// Expand the minimizer set given per-kernel own and cross minima (product models).
    pub fn expand_product(
        &self,
        g: usize,
        w: f64,
        a: usize,
        x: usize,
        y: usize,
        own_min: &[f64],
        cross_min: &[f64],
    ) -> Minimizers {
        let nk = self.model.kernels.len();
        let tot: Vec<f64> = (0..nk).map(|k| own_min[k] + cross_min[k]).collect();
        let m = tot.iter().cloned().fold(f64::INFINITY, f64::min);
        if m.is_infinite() {
            return Minimizers {
                indices: (0..self.model.len()).collect(),
                min: ExtendedReal::PosInf,
                all_infinite: true,
            };
        }
        let mut idx = Vec::new();
        for k in 0..nk {
            if tot[k] <= m + tol::TIE {
                self.push_kernel(&mut idx, g, w, a, x, y, k, m);
            }
        }
        idx.sort_unstable();
        Minimizers {
            indices: idx,
            min: ExtendedReal::Finite(m),
            all_infinite: false,
        }
    }

    /// Parameters with kernel `k` whose score is within tolerance of `m`, appended unsorted.
    #[allow(clippy::too_many_arguments)]
    pub fn push_kernel(&self, idx: &mut Vec<usize>, g: usize, w: f64, a: usize, x: usize, y: usize, k: usize, m: f64) {
        let n = self.env.n_a();
        for &co in self.finite(a) {
            let vo = wmul(w, self.d(k, a, a, co));
            if vo > m + tol::TIE {
                continue;
            }
            for &cc in self.finite(y) {
                let vc = wmul(1.0 - w, self.d(k, x, y, cc));
                if vo + vc <= m + tol::TIE {
                    let (ca, cb) = if g == 0 { (co, cc) } else { (cc, co) };
                    idx.push((k * n + ca) * n + cb);
                }
            }
        }
    }

    pub fn minimizers(&self, g: usize, w: f64, a: usize, x: usize, y: usize) -> Minimizers {
        match &self.model.params {
            ParamSet::Product => {
                let own = self.best_term(w, a, a);
                let cross = self.best_term(1.0 - w, x, y);
                self.expand_product(g, w, a, x, y, &own, &cross)
            }
            ParamSet::List(ps) => {
                let scores: Vec<f64> = ps.iter().map(|p| self.param_score(p, g, w, a, x, y)).collect();
                select(&scores)
            }
        }
    }
}

/// Indices within tolerance of the minimum, or all with the infinite flag.
pub(crate) fn select(scores: &[f64]) -> Minimizers {
    let m = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    if m.is_infinite() {
        return Minimizers {
            indices: (0..scores.len()).collect(),
            min: ExtendedReal::PosInf,
            all_infinite: true,
        };
    }
    Minimizers {
        indices: (0..scores.len()).filter(|&i| scores[i] <= m + tol::TIE).collect(),
        min: ExtendedReal::Finite(m),
        all_infinite: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_known_values() {
        assert_eq!(
            kl_divergence(&[0.5, 0.5], &[0.5, 0.5]).unwrap(),
            ExtendedReal::Finite(0.0)
        );
        let v = kl_divergence(&[0.4, 0.6], &[0.1, 0.9]).unwrap().value();
        let oracle = 0.4 * 4f64.ln() + 0.6 * (0.6f64 / 0.9).ln();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.31123).abs() < 1e-5);
        assert!(kl_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap().is_infinite());
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn zero_times_infinity_is_infinity() {
        assert!(ExtendedReal::PosInf.scale(0.0).is_infinite());
        assert!(wmul(0.0, f64::INFINITY).is_infinite());
        assert_eq!(wmul(0.0, 3.0), 0.0);
    }

    #[test]
    fn sparse_rows_match_dense() {
        let p = RowRef {
            offset: 1,
            mass: &[0.25, 0.75],
            id: 0,
        };
        let q = RowRef {
            offset: 0,
            mass: &[0.1, 0.3, 0.6],
            id: 0,
        };
        let dense = kl_slices(&p.to_dense(3), &q.to_dense(3));
        assert!((kl_rows(p, q) - dense).abs() < 1e-15);
        assert!(kl_rows(q, p).is_infinite());
    }

    #[test]
    fn shares_checked() {
        assert!(check_shares([0.3, 0.7]).is_ok());
        assert!(check_shares([0.3, 0.6]).is_err());
        assert!(check_shares([-0.1, 1.1]).is_err());
    }
}
