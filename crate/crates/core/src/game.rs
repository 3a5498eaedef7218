//! Finite symmetric stage games with situations.

use std::sync::Arc;

use crate::error::{input, Error, Result};
use crate::tol;

/// A probability vector over consequences stored as a contiguous window.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub offset: usize,
    pub mass: Vec<f64>,
}

impl Row {
    pub fn dense(mass: Vec<f64>) -> Self {
        Row { offset: 0, mass }
    }

    pub fn new(offset: usize, mass: Vec<f64>) -> Self {
        Row { offset, mass }
    }
}

pub(crate) fn check_prob(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return input(format!("{what}: empty probability row"));
    }
    let mut s = 0.0;
    for &x in p {
        if !x.is_finite() || x < 0.0 {
            return input(format!("{what}: entry {x} is not a nonnegative number"));
        }
        s += x;
    }
    if (s - 1.0).abs() > tol::PROB_SUM {
        return input(format!("{what}: row sums to {s}"));
    }
    Ok(())
}

/// Borrowed view of one kernel row with its absolute offset in Y.
#[derive(Debug, Clone, Copy)]
pub struct RowRef<'a> {
    pub offset: usize,
    pub mass: &'a [f64],
    pub id: u32,
}

impl<'a> RowRef<'a> {
    pub fn get(&self, y: usize) -> f64 {
        if y < self.offset {
            return 0.0;
        }
        self.mass.get(y - self.offset).copied().unwrap_or(0.0)
    }

    pub fn expect(&self, f: &[f64]) -> f64 {
        self.mass
            .iter()
            .zip(&f[self.offset..self.offset + self.mass.len()])
            .map(|(p, v)| if *p > 0.0 { p * v } else { 0.0 })
            .sum()
    }

    pub fn to_dense(&self, n_y: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_y];
        v[self.offset..self.offset + self.mass.len()].copy_from_slice(self.mass);
        v
    }
}

/// Mapping (a_i, a_-i) -> distribution over Y.
///
/// Profiles map to classes, classes to rows of a shared store. With
/// `own_stride > 0` the row window is shifted by `a_i * own_stride`, which
/// lets consequence sets of the form A x S share rows across own actions.
#[derive(Debug, Clone)]
pub struct Kernel {
    n_a: usize,
    n_y: usize,
    own_stride: usize,
    class_of: Arc<Vec<u32>>,
    class_row: Vec<u32>,
    store: Arc<Vec<Row>>,
}

impl Kernel {
    /// One row per profile, ordered `a_i * n_a + a_minus`.
    pub fn from_rows(n_a: usize, n_y: usize, rows: Vec<Row>) -> Result<Self> {
        if rows.len() != n_a * n_a {
            return input(format!("kernel needs {} rows, got {}", n_a * n_a, rows.len()));
        }
        let class_of = Arc::new((0..rows.len() as u32).collect::<Vec<_>>());
        let class_row = (0..rows.len() as u32).collect();
        Kernel::from_parts(n_a, n_y, 0, class_of, class_row, Arc::new(rows))
    }

    pub fn from_parts(
        n_a: usize,
        n_y: usize,
        own_stride: usize,
        class_of: Arc<Vec<u32>>,
        class_row: Vec<u32>,
        store: Arc<Vec<Row>>,
    ) -> Result<Self> {
        if class_of.len() != n_a * n_a {
            return input(format!("class map needs {} entries", n_a * n_a));
        }
        if let Some(&c) = class_of.iter().find(|&&c| c as usize >= class_row.len()) {
            return input(format!("class {c} has no row"));
        }
        if let Some(&r) = class_row.iter().find(|&&r| r as usize >= store.len()) {
            return input(format!("row id {r} outside store"));
        }
        let k = Kernel {
            n_a,
            n_y,
            own_stride,
            class_of,
            class_row,
            store,
        };
        for a in 0..n_a {
            for b in 0..n_a {
                let r = k.row(a, b);
                if r.offset + r.mass.len() > n_y {
                    return input(format!("row for profile ({a},{b}) exceeds {n_y} consequences"));
                }
            }
        }
        let mut seen = vec![false; k.store.len()];
        for (c, &r) in k.class_row.iter().enumerate() {
            if !std::mem::replace(&mut seen[r as usize], true) {
                check_prob(&k.store[r as usize].mass, &format!("row for profile class {c}"))?;
            }
        }
        Ok(k)
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn own_stride(&self) -> usize {
        self.own_stride
    }

    pub fn class_of(&self) -> &Arc<Vec<u32>> {
        &self.class_of
    }

    pub fn class_rows(&self) -> &[u32] {
        &self.class_row
    }

    pub fn store(&self) -> &Arc<Vec<Row>> {
        &self.store
    }

    pub fn row(&self, a_i: usize, a_minus: usize) -> RowRef<'_> {
        let id = self.class_row[self.class_of[a_i * self.n_a + a_minus] as usize];
        let r = &self.store[id as usize];
        RowRef {
            offset: r.offset + a_i * self.own_stride,
            mass: &r.mass,
            id,
        }
    }

    pub fn dense_row(&self, a_i: usize, a_minus: usize) -> Vec<f64> {
        self.row(a_i, a_minus).to_dense(self.n_y)
    }

    pub fn expected(&self, a_i: usize, a_minus: usize, utility: &[f64]) -> f64 {
        self.row(a_i, a_minus).expect(utility)
    }

    /// Dense kernel with explicit per-profile rows built by `f`.
    pub fn from_fn(n_a: usize, n_y: usize, mut f: impl FnMut(usize, usize) -> Row) -> Result<Self> {
        let mut rows = Vec::with_capacity(n_a * n_a);
        for a in 0..n_a {
            for b in 0..n_a {
                rows.push(f(a, b));
            }
        }
        Kernel::from_rows(n_a, n_y, rows)
    }

    /// Convex mixture with the uniform distribution over the row's own block.
    ///
    /// With `own_stride == 0` the block is all of Y.
    pub fn mix_uniform(&self, eps: f64) -> Result<Self> {
        let block = if self.own_stride > 0 { self.own_stride } else { self.n_y };
        Kernel::from_fn(self.n_a, self.n_y, |a, b| {
            let r = self.row(a, b);
            let start = if self.own_stride > 0 { a * self.own_stride } else { 0 };
            let mut m = vec![eps / block as f64; block];
            for (j, p) in r.mass.iter().enumerate() {
                m[r.offset - start + j] += (1.0 - eps) * p;
            }
            Row::new(start, m)
        })
    }

    /// Largest absolute difference between two kernels' rows at a profile.
    pub fn row_distance(&self, a: usize, b: usize, other: &Kernel, c: usize, d: usize) -> f64 {
        let r1 = self.row(a, b);
        let r2 = other.row(c, d);
        let lo = r1.offset.min(r2.offset);
        let hi = (r1.offset + r1.mass.len()).max(r2.offset + r2.mass.len());
        (lo..hi).map(|y| (r1.get(y) - r2.get(y)).abs()).fold(0.0, f64::max)
    }

    pub fn min_positive_mass(&self) -> f64 {
        let mut m = f64::INFINITY;
        for a in 0..self.n_a {
            for b in 0..self.n_a {
                for &p in self.row(a, b).mass {
                    if p > 0.0 && p < m {
                        m = p;
                    }
                }
            }
        }
        m
    }
}

/// Distribution of the monitoring signal given the opponent's strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringStructure {
    pub signals: Vec<String>,
    pub dist: Vec<Vec<f64>>,
}

impl MonitoringStructure {
    /// Signal equals the opponent's strategy.
    pub fn perfect(strategies: &[String]) -> Self {
        let n = strategies.len();
        let dist = (0..n)
            .map(|a| (0..n).map(|m| if a == m { 1.0 } else { 0.0 }).collect())
            .collect();
        MonitoringStructure {
            signals: strategies.to_vec(),
            dist,
        }
    }

    /// A single constant signal.
    pub fn uninformative(n_a: usize) -> Self {
        MonitoringStructure {
            signals: vec!["none".into()],
            dist: vec![vec![1.0]; n_a],
        }
    }

    /// Signal equals the opponent's strategy with probability tau, else uniform.
    pub fn noisy(strategies: &[String], tau: f64) -> Self {
        let n = strategies.len();
        let u = (1.0 - tau) / n as f64;
        let dist = (0..n)
            .map(|a| (0..n).map(|m| if a == m { tau + u } else { u }).collect())
            .collect();
        MonitoringStructure {
            signals: strategies.to_vec(),
            dist,
        }
    }

    pub fn validate(&self, n_a: usize) -> Result<()> {
        if self.dist.len() != n_a {
            return input(format!("monitoring needs {n_a} rows, got {}", self.dist.len()));
        }
        for (a, row) in self.dist.iter().enumerate() {
            if row.len() != self.signals.len() {
                return input(format!("monitoring row {a} has {} entries", row.len()));
            }
            check_prob(row, &format!("monitoring row {a}"))?;
        }
        Ok(())
    }
}

/// Situation weights q.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessWeights {
    q: Vec<f64>,
}

impl FitnessWeights {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        check_prob(&q, "situation weights")?;
        Ok(FitnessWeights { q })
    }

    pub fn uniform(n: usize) -> Self {
        FitnessWeights {
            q: vec![1.0 / n as f64; n],
        }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }
}

/// Objective primitives: strategies, consequences, situations, F, utility, monitoring.
#[derive(Debug, Clone)]
pub struct StageEnv {
    pub strategies: Vec<String>,
    pub consequences: Vec<String>,
    pub situations: Vec<String>,
    pub kernels: Vec<Kernel>,
    pub utility: Vec<f64>,
    pub monitoring: MonitoringStructure,
}

impl StageEnv {
    pub fn new(
        strategies: Vec<String>,
        consequences: Vec<String>,
        situations: Vec<String>,
        kernels: Vec<Kernel>,
        utility: Vec<f64>,
        monitoring: MonitoringStructure,
    ) -> Result<Self> {
        let env = StageEnv {
            strategies,
            consequences,
            situations,
            kernels,
            utility,
            monitoring,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        let n_a = self.n_a();
        if n_a == 0 {
            return input("no strategies");
        }
        if self.situations.is_empty() {
            return input("no situations");
        }
        if self.kernels.len() != self.situations.len() {
            return input(format!(
                "{} situations but {} kernels",
                self.situations.len(),
                self.kernels.len()
            ));
        }
        if self.utility.len() != self.n_y() {
            return input(format!(
                "utility has {} entries for {} consequences",
                self.utility.len(),
                self.n_y()
            ));
        }
        if self.utility.iter().any(|u| !u.is_finite()) {
            return input("utility entries must be finite");
        }
        for (g, k) in self.kernels.iter().enumerate() {
            if k.n_a() != n_a || k.n_y() != self.n_y() {
                return input(format!("kernel for situation {} has wrong shape", self.situations[g]));
            }
        }
        self.monitoring.validate(n_a)?;
        check_unique(&self.strategies, "strategy")?;
        check_unique(&self.situations, "situation")?;
        Ok(())
    }

    pub fn n_a(&self) -> usize {
        self.strategies.len()
    }

    pub fn n_y(&self) -> usize {
        self.consequences.len()
    }

    pub fn n_g(&self) -> usize {
        self.situations.len()
    }

    pub fn strategy_index(&self, label: &str) -> Result<usize> {
        self.strategies
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| Error::Input(format!("unknown strategy {label}")))
    }

    pub fn situation_index(&self, label: &str) -> Result<usize> {
        self.situations
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| Error::Input(format!("unknown situation {label}")))
    }

    /// Objective payoff U(a_i, a_-i; F(G)).
    pub fn payoff(&self, g: usize, a_i: usize, a_minus: usize) -> f64 {
        self.kernels[g].expected(a_i, a_minus, &self.utility)
    }
}

fn check_unique(v: &[String], what: &str) -> Result<()> {
    for (i, s) in v.iter().enumerate() {
        if v[..i].contains(s) {
            return input(format!("duplicate {what} label {s}"));
        }
    }
    Ok(())
}

/// Expected payoff of (a_i, a_minus) when consequences follow `kernel`.
pub fn expected_payoff(env: &StageEnv, g: &str, a_i: &str, a_minus: &str, kernel: Option<&Kernel>) -> Result<f64> {
    let g = env.situation_index(g)?;
    let a = env.strategy_index(a_i)?;
    let b = env.strategy_index(a_minus)?;
    let k = kernel.unwrap_or(&env.kernels[g]);
    if k.n_a() != env.n_a() || k.n_y() != env.n_y() {
        return input("kernel shape does not match environment");
    }
    Ok(k.expected(a, b, &env.utility))
}

/// Indices within `tol::TIE` of the maximum of `vals`.
pub fn argmax_set(vals: &[f64]) -> Vec<usize> {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..vals.len()).filter(|&i| vals[i] >= m - tol::TIE).collect()
}

/// Rational best responses to `a_minus` in situation `g`.
pub fn best_responses(env: &StageEnv, g: usize, a_minus: usize) -> Vec<usize> {
    let vals: Vec<f64> = (0..env.n_a()).map(|a| env.payoff(g, a, a_minus)).collect();
    argmax_set(&vals)
}

/// Best response to `a_i` breaking ties against the user of `a_i`, then by index.
pub fn min_tiebreak_best_response(env: &StageEnv, g: usize, a_i: usize) -> usize {
    let br = best_responses(env, g, a_i);
    let mut best = br[0];
    let mut worst = env.payoff(g, a_i, best);
    for &r in &br[1..] {
        let v = env.payoff(g, a_i, r);
        if v < worst - tol::TIE {
            best = r;
            worst = v;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashResult {
    pub strategies: Vec<usize>,
    /// Highest symmetric Nash payoff; `None` when no symmetric pure Nash exists.
    pub v_ne: Option<f64>,
}

pub fn symmetric_nash(env: &StageEnv, g: usize) -> NashResult {
    let strategies: Vec<usize> = (0..env.n_a())
        .filter(|&a| best_responses(env, g, a).contains(&a))
        .collect();
    let v_ne = strategies
        .iter()
        .map(|&a| env.payoff(g, a, a))
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    NashResult { strategies, v_ne }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergResult {
    pub strategy: usize,
    pub follower: usize,
    pub v_bar: f64,
    /// Leader strategies within tolerance of the maximum.
    pub ties: Vec<usize>,
}

impl StackelbergResult {
    pub fn unique(&self) -> bool {
        self.ties.len() == 1
    }
}

pub fn stackelberg(env: &StageEnv, g: usize) -> StackelbergResult {
    let vals: Vec<f64> = (0..env.n_a())
        .map(|a| env.payoff(g, a, min_tiebreak_best_response(env, g, a)))
        .collect();
    let ties = argmax_set(&vals);
    let strategy = ties
        .iter()
        .copied()
        .max_by(|&x, &y| vals[x].partial_cmp(&vals[y]).unwrap().then(y.cmp(&x)))
        .unwrap();
    let follower = min_tiebreak_best_response(env, g, strategy);
    StackelbergResult {
        strategy,
        follower,
        v_bar: env.payoff(g, strategy, follower),
        ties,
    }
}
