//! Subjective models as finite parameter lists.

use crate::error::{input, Error, Result};
use crate::game::{best_responses, min_tiebreak_best_response, stackelberg, Kernel, StageEnv};
use crate::inference::kl_rows;
use crate::tol;

/// Conjectured group-A play, group-B play and kernel (index into the model's kernels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Parameter {
    pub conj_a: usize,
    pub conj_b: usize,
    pub kernel: usize,
}

impl Parameter {
    /// Conjecture about the play of group `g` (0 = A, 1 = B).
    pub fn conj(&self, g: usize) -> usize {
        if g == 0 {
            self.conj_a
        } else {
            self.conj_b
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamSet {
    /// All of A x A x kernels, indexed `(kernel * n_a + conj_a) * n_a + conj_b`.
    Product,
    List(Vec<Parameter>),
}

#[derive(Debug, Clone)]
pub struct Model {
    pub label: String,
    pub kernels: Vec<Kernel>,
    pub kernel_labels: Vec<String>,
    pub params: ParamSet,
    pub perturb_eps: Option<f64>,
    n_a: usize,
}

impl Model {
    /// Strategic-certainty form A x A x kernels.
    pub fn product(
        label: impl Into<String>,
        n_a: usize,
        kernels: Vec<Kernel>,
        kernel_labels: Vec<String>,
    ) -> Result<Self> {
        let m = Model {
            label: label.into(),
            kernels,
            kernel_labels,
            params: ParamSet::Product,
            perturb_eps: None,
            n_a,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn list(
        label: impl Into<String>,
        n_a: usize,
        kernels: Vec<Kernel>,
        kernel_labels: Vec<String>,
        params: Vec<Parameter>,
    ) -> Result<Self> {
        let m = Model {
            label: label.into(),
            kernels,
            kernel_labels,
            params: ParamSet::List(params),
            perturb_eps: None,
            n_a,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return input(format!("model {} has no kernels", self.label));
        }
        if self.kernel_labels.len() != self.kernels.len() {
            return input(format!("model {} needs one label per kernel", self.label));
        }
        for k in &self.kernels {
            if k.n_a() != self.n_a {
                return input(format!("model {} kernel has wrong strategy count", self.label));
            }
        }
        if let ParamSet::List(ps) = &self.params {
            if ps.is_empty() {
                return input(format!("model {} has no parameters", self.label));
            }
            for p in ps {
                if p.conj_a >= self.n_a || p.conj_b >= self.n_a || p.kernel >= self.kernels.len() {
                    return input(format!("model {} parameter {p:?} out of range", self.label));
                }
            }
        }
        Ok(())
    }

    pub fn check_env(&self, env: &StageEnv) -> Result<()> {
        if self.n_a != env.n_a() {
            return input(format!(
                "model {} has {} strategies, environment {}",
                self.label,
                self.n_a,
                env.n_a()
            ));
        }
        for k in &self.kernels {
            if k.n_y() != env.n_y() {
                return input(format!("model {} kernel has wrong consequence count", self.label));
            }
        }
        Ok(())
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn len(&self) -> usize {
        match &self.params {
            ParamSet::Product => self.kernels.len() * self.n_a * self.n_a,
            ParamSet::List(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strategic_certainty_form(&self) -> bool {
        matches!(self.params, ParamSet::Product)
    }

    pub fn param(&self, gamma: usize) -> Parameter {
        match &self.params {
            ParamSet::Product => {
                let n = self.n_a;
                Parameter {
                    conj_a: (gamma / n) % n,
                    conj_b: gamma % n,
                    kernel: gamma / (n * n),
                }
            }
            ParamSet::List(p) => p[gamma],
        }
    }

    pub fn index_of(&self, p: Parameter) -> Option<usize> {
        match &self.params {
            ParamSet::Product => {
                if p.kernel < self.kernels.len() && p.conj_a < self.n_a && p.conj_b < self.n_a {
                    Some((p.kernel * self.n_a + p.conj_a) * self.n_a + p.conj_b)
                } else {
                    None
                }
            }
            ParamSet::List(ps) => ps.iter().position(|q| *q == p),
        }
    }

    pub fn kernel_of(&self, gamma: usize) -> &Kernel {
        &self.kernels[self.param(gamma).kernel]
    }

    /// Subjective expected payoff of `a_i` against conjectured `a_minus` under kernel `k`.
    pub fn subjective_payoff(&self, env: &StageEnv, k: usize, a_i: usize, a_minus: usize) -> f64 {
        self.kernels[k].expected(a_i, a_minus, &env.utility)
    }
}

fn dedup_kernels(ks: Vec<(String, Kernel)>) -> Vec<(String, Kernel)> {
    let mut out: Vec<(String, Kernel)> = Vec::new();
    for (l, k) in ks {
        let n = k.n_a();
        let dup = out
            .iter()
            .any(|(_, o)| (0..n).all(|a| (0..n).all(|b| o.row_distance(a, b, &k, a, b) <= tol::DIST_EQ)));
        if !dup {
            out.push((l, k));
        }
    }
    out
}

/// A x A x {F(., ., G)}, duplicates across situations removed.
pub fn minimal_correct_model(env: &StageEnv) -> Model {
    let ks = env
        .situations
        .iter()
        .cloned()
        .zip(env.kernels.iter().cloned())
        .collect();
    let (labels, kernels) = dedup_kernels(ks).into_iter().unzip();
    Model::product("minimal-correct", env.n_a(), kernels, labels).expect("environment kernels are valid")
}

/// A x A x {kernel}.
pub fn singleton_model(env: &StageEnv, kernel: Kernel, label: &str) -> Result<Model> {
    if kernel.n_a() != env.n_a() || kernel.n_y() != env.n_y() {
        return input("singleton kernel shape does not match environment");
    }
    Model::product(label, env.n_a(), vec![kernel], vec![label.to_string()])
}

/// Kernel ignoring the opponent: F(a_i, ., G) = F(a_i, BR-underline(a_i, G), G).
pub fn illusion_kernel(env: &StageEnv, g: usize) -> Kernel {
    let k = &env.kernels[g];
    let n = env.n_a();
    let resp: Vec<usize> = (0..n).map(|a| min_tiebreak_best_response(env, g, a)).collect();
    let class_of = (0..n * n).map(|p| (p / n) as u32).collect::<Vec<_>>();
    let store = (0..n)
        .map(|a| {
            let r = k.row(a, resp[a]);
            crate::game::Row::new(r.offset - a * k.own_stride(), r.mass.to_vec())
        })
        .collect::<Vec<_>>();
    Kernel::from_parts(
        n,
        env.n_y(),
        k.own_stride(),
        std::sync::Arc::new(class_of),
        (0..n as u32).collect(),
        std::sync::Arc::new(store),
    )
    .expect("rows copied from a valid kernel")
}

/// One opponent-independent kernel per situation, each mixed toward uniform with
/// weight `perturb_eps`, paired with every conjecture pair.
pub fn illusion_of_control_model(env: &StageEnv, perturb_eps: f64) -> Result<Model> {
    let min_mass = env
        .kernels
        .iter()
        .map(|k| k.min_positive_mass())
        .fold(f64::INFINITY, f64::min);
    if !(perturb_eps > 0.0 && perturb_eps < min_mass) {
        return Err(Error::Construction(format!(
            "perturbation {perturb_eps} must lie in (0, {min_mass})"
        )));
    }
    for g in 0..env.n_g() {
        let s = stackelberg(env, g);
        if !s.unique() {
            return Err(Error::Construction(format!(
                "Stackelberg strategy in situation {} is not unique",
                env.situations[g]
            )));
        }
    }
    let mut kernels = Vec::new();
    for g in 0..env.n_g() {
        kernels.push(illusion_kernel(env, g).mix_uniform(perturb_eps)?);
    }
    // every profile in every situation must have a unique closest kernel
    let n = env.n_a();
    for g in 0..env.n_g() {
        for a in 0..n {
            for b in 0..n {
                let truth = env.kernels[g].row(a, b);
                let scores: Vec<f64> = kernels.iter().map(|k| kl_rows(truth, k.row(a, b))).collect();
                let m = scores.iter().cloned().fold(f64::INFINITY, f64::min);
                let ties = scores.iter().filter(|&&s| s <= m + tol::TIE).count();
                if ties > 1 {
                    return Err(Error::Construction(format!(
                        "KL tie among illusion kernels at ({}, {}) in {}; try a different perturbation",
                        env.strategies[a], env.strategies[b], env.situations[g]
                    )));
                }
            }
        }
    }
    let labels = env.situations.iter().map(|s| format!("illusion-{s}")).collect();
    let mut m = Model::product("illusion-of-control", n, kernels, labels)?;
    m.perturb_eps = Some(perturb_eps);
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identifiability {
    pub situation: bool,
    pub stackelberg: bool,
}

pub fn check_identifiability(env: &StageEnv) -> Identifiability {
    let n = env.n_a();
    let ng = env.n_g();
    let mut situation = true;
    for g in 0..ng {
        for h in g + 1..ng {
            for a in 0..n {
                for b in 0..n {
                    if env.kernels[g].row_distance(a, b, &env.kernels[h], a, b) <= tol::DIST_EQ {
                        situation = false;
                    }
                }
            }
        }
    }
    let mut stack = true;
    for g in 0..ng {
        let lead = stackelberg(env, g).strategy;
        let br_g = best_responses(env, g, lead);
        for h in 0..ng {
            if h == g {
                continue;
            }
            for &x in &br_g {
                for &y in &best_responses(env, h, lead) {
                    if env.kernels[g].row_distance(lead, x, &env.kernels[h], lead, y) <= tol::DIST_EQ {
                        stack = false;
                    }
                }
            }
        }
    }
    Identifiability {
        situation,
        stackelberg: stack,
    }
}
