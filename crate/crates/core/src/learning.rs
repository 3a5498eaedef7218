//! Agent-based Bayesian learning with random matching.
//!
//! Each period every agent draws an opponent group by share, draws an
//! opponent from that group, plays against it, observes a consequence and a
//! monitoring signal, and updates a posterior over its model's parameters.
//! Randomness is drawn from per-(period, agent) streams so results do not
//! depend on thread scheduling.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::ez::{Quad, Zeitgeist};
use crate::game::{check_prob, MonitoringStructure, StageEnv};
use crate::model::Model;

fn default_burn_in() -> usize {
    5
}

fn default_kappa() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Total number of agents, split between groups by share.
    pub n_agents: usize,
    pub shares: [f64; 2],
    /// Priors over each model's parameters; uniform when absent.
    #[serde(default)]
    pub priors: Option<[Vec<f64>; 2]>,
    /// Monitoring accuracy; the environment's monitoring is used when absent.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Observations against a group before leaving uniform play against it.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Exploration rate eps0 / (1 + t / kappa) after burn-in.
    #[serde(default)]
    pub eps0: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    pub horizon: usize,
    /// Redraw the situation and reset beliefs every this many periods.
    #[serde(default)]
    pub situation_period: Option<usize>,
    /// Fixed situation; otherwise drawn from `q`.
    #[serde(default)]
    pub situation: Option<usize>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_agents: usize, shares: [f64; 2], horizon: usize, seed: u64) -> Self {
        SimConfig {
            n_agents,
            shares,
            priors: None,
            tau: None,
            burn_in: default_burn_in(),
            eps0: 0.0,
            kappa: default_kappa(),
            horizon,
            situation_period: None,
            situation: None,
            q: None,
            seed,
        }
    }

    pub fn group_sizes(&self) -> [usize; 2] {
        let a = (self.shares[0] * self.n_agents as f64).round() as usize;
        [a, self.n_agents - a.min(self.n_agents)]
    }

    fn validate(&self, env: &StageEnv, models: [&Model; 2]) -> Result<()> {
        crate::inference::check_shares(self.shares)?;
        let sizes = self.group_sizes();
        for g in 0..2 {
            if self.shares[g] > 0.0 && sizes[g] < 2 {
                return input(format!("group {g} needs at least 2 agents, has {}", sizes[g]));
            }
        }
        if let Some(t) = self.tau {
            if !(0.0..1.0).contains(&t) {
                return input(format!("tau {t} outside [0, 1)"));
            }
        }
        if let Some(p) = &self.priors {
            for g in 0..2 {
                if p[g].len() != models[g].len() {
                    return input(format!(
                        "prior {g} has {} entries, model has {}",
                        p[g].len(),
                        models[g].len()
                    ));
                }
                check_prob(&p[g], "prior")?;
                if p[g].iter().any(|&x| x < 1e-12) {
                    return input("priors need full support (every mass >= 1e-12)");
                }
            }
        }
        if let Some(s) = self.situation {
            if s >= env.n_g() {
                return input(format!("situation {s} out of range"));
            }
        }
        if let Some(q) = &self.q {
            if q.len() != env.n_g() {
                return input("q needs one weight per situation");
            }
            check_prob(q, "situation weights")?;
        }
        if self.situation_period == Some(0) {
            return input("situation_period must be positive");
        }
        if !(self.eps0 >= 0.0 && self.eps0 <= 1.0) || !(self.kappa > 0.0) {
            return input("need eps0 in [0, 1] and kappa > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub t: usize,
    pub situation: usize,
    /// play[g][h]: distribution of strategies used by group g against group h.
    pub play: [[Vec<f64>; 2]; 2],
    pub matches: [[usize; 2]; 2],
    /// Mean posterior of each group.
    pub belief: [Vec<f64>; 2],
    /// Mean realized utility of each group (NaN for an empty group).
    pub payoff: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningTrajectory {
    pub periods: Vec<PeriodRecord>,
    /// Observations ignored because every parameter gave them zero likelihood.
    pub zero_likelihood_traps: usize,
}

/// Parameters of one model collapsed to what matters against one opponent group.
struct GroupView {
    /// Distinct (kernel, conjecture) pairs.
    keys: Vec<(usize, usize)>,
    key_of: Vec<usize>,
    /// Subjective payoff [key][a].
    pay: Vec<Vec<f64>>,
}

struct ModelView {
    model: Model,
    by_group: [GroupView; 2],
    log_prior: Vec<f64>,
}

impl ModelView {
    fn new(env: &StageEnv, model: &Model, prior: Option<&Vec<f64>>) -> Self {
        let n = model.len();
        let by_group = [0, 1].map(|h| {
            let mut keys: Vec<(usize, usize)> = Vec::new();
            let mut key_of = Vec::with_capacity(n);
            for gamma in 0..n {
                let p = model.param(gamma);
                let key = (p.kernel, p.conj(h));
                let idx = keys.iter().position(|&k| k == key).unwrap_or_else(|| {
                    keys.push(key);
                    keys.len() - 1
                });
                key_of.push(idx);
            }
            let pay = keys
                .iter()
                .map(|&(k, c)| (0..env.n_a()).map(|a| model.subjective_payoff(env, k, a, c)).collect())
                .collect();
            GroupView { keys, key_of, pay }
        });
        let log_prior = match prior {
            Some(p) => p.iter().map(|x| x.ln()).collect(),
            None => vec![-(n as f64).ln(); n],
        };
        ModelView {
            model: model.clone(),
            by_group,
            log_prior,
        }
    }
}

#[derive(Clone)]
struct Agent {
    group: usize,
    log_post: Vec<f64>,
    obs: [usize; 2],
}

impl Agent {
    fn posterior(&self) -> Vec<f64> {
        let m = self.log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_post.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }
}

fn stream(seed: u64, t: usize, agent: usize, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((t as u64) << 24) ^ ((agent as u64) << 2) ^ tag);
    rng
}

fn draw(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut c = 0.0;
    for (i, &x) in p.iter().enumerate() {
        c += x;
        if u < c {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

fn myopic(view: &GroupView, post: &[f64], n_a: usize) -> usize {
    let mut w = vec![0.0; view.keys.len()];
    for (gamma, &p) in post.iter().enumerate() {
        w[view.key_of[gamma]] += p;
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for a in 0..n_a {
        let v: f64 = w.iter().zip(&view.pay).map(|(wk, pk)| wk * pk[a]).sum();
        if v > best.0 + crate::tol::TIE {
            best = (v, a);
        }
    }
    best.1
}

struct Outcome {
    h: usize,
    a: usize,
    utility: f64,
    trapped: bool,
}

pub fn run_learning(env: &StageEnv, model_a: &Model, model_b: &Model, cfg: &SimConfig) -> Result<LearningTrajectory> {
    let models = [model_a, model_b];
    cfg.validate(env, models)?;
    for m in models {
        m.check_env(env)?;
    }
    let n_a = env.n_a();
    let monitoring = match cfg.tau {
        Some(t) => MonitoringStructure::noisy(&env.strategies, t),
        None => env.monitoring.clone(),
    };
    let ln_phi: Vec<Vec<f64>> = monitoring
        .dist
        .iter()
        .map(|r| r.iter().map(|x| x.ln()).collect())
        .collect();
    let views = [0, 1].map(|g| ModelView::new(env, models[g], cfg.priors.as_ref().map(|p| &p[g])));
    let sizes = cfg.group_sizes();
    let fresh = |g: usize| Agent {
        group: g,
        log_post: views[g].log_prior.clone(),
        obs: [0; 2],
    };
    let mut agents: Vec<Agent> = (0..sizes[0])
        .map(|_| fresh(0))
        .chain((0..sizes[1]).map(|_| fresh(1)))
        .collect();
    let start = [0, sizes[0]];
    let q = cfg.q.clone().unwrap_or_else(|| vec![1.0 / env.n_g() as f64; env.n_g()]);
    let mut sit_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5157_u64);
    let mut situation = cfg.situation.unwrap_or_else(|| draw(&mut sit_rng, &q));
    let mut periods = Vec::with_capacity(cfg.horizon);
    let mut traps = 0;

    for t in 0..cfg.horizon {
        if let Some(per) = cfg.situation_period {
            if t > 0 && t % per == 0 {
                if cfg.situation.is_none() {
                    situation = draw(&mut sit_rng, &q);
                }
                for ag in agents.iter_mut() {
                    *ag = fresh(ag.group);
                }
            }
        }
        let eps = cfg.eps0 / (1.0 + t as f64 / cfg.kappa);
        // strategy of every agent against each group, from frozen beliefs
        let acts: Vec<[usize; 2]> = agents
            .par_iter()
            .enumerate()
            .map(|(i, ag)| {
                let mut rng = stream(cfg.seed, t, i, 0);
                let post = ag.posterior();
                [0, 1].map(|h| {
                    let explore: f64 = rng.gen();
                    let u: usize = rng.gen_range(0..n_a);
                    if ag.obs[h] < cfg.burn_in || explore < eps {
                        u
                    } else {
                        myopic(&views[ag.group].by_group[h], &post, n_a)
                    }
                })
            })
            .collect();
        let kernel = &env.kernels[situation];
        let outcomes: Vec<Outcome> = agents
            .par_iter_mut()
            .enumerate()
            .map(|(i, ag)| {
                let mut rng = stream(cfg.seed, t, i, 1);
                let h = if rng.gen::<f64>() < cfg.shares[1] { 1 } else { 0 };
                let j = start[h] + rng.gen_range(0..sizes[h]);
                let a = acts[i][h];
                let b = acts[j][ag.group];
                let row = kernel.row(a, b);
                let y = row.offset + draw(&mut rng, row.mass);
                let m = draw(&mut rng, &monitoring.dist[b]);
                let view = &views[ag.group];
                let gv = &view.by_group[h];
                let ll: Vec<f64> = gv
                    .keys
                    .iter()
                    .map(|&(k, c)| view.model.kernels[k].row(a, c).get(y).ln() + ln_phi[c][m])
                    .collect();
                let mut next: Vec<f64> = ag.log_post.iter().zip(&gv.key_of).map(|(lp, &k)| lp + ll[k]).collect();
                let mx = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let trapped = mx == f64::NEG_INFINITY;
                if !trapped {
                    next.iter_mut().for_each(|x| *x -= mx);
                    ag.log_post = next;
                }
                ag.obs[h] += 1;
                Outcome {
                    h,
                    a,
                    utility: env.utility[y],
                    trapped,
                }
            })
            .collect();

        let mut play = [[vec![0.0; n_a], vec![0.0; n_a]], [vec![0.0; n_a], vec![0.0; n_a]]];
        let mut matches = [[0usize; 2]; 2];
        let mut pay = [0.0; 2];
        for (ag, o) in agents.iter().zip(&outcomes) {
            play[ag.group][o.h][o.a] += 1.0;
            matches[ag.group][o.h] += 1;
            pay[ag.group] += o.utility;
            traps += o.trapped as usize;
        }
        for g in 0..2 {
            for h in 0..2 {
                if matches[g][h] > 0 {
                    play[g][h].iter_mut().for_each(|x| *x /= matches[g][h] as f64);
                }
            }
            pay[g] = if sizes[g] > 0 {
                pay[g] / sizes[g] as f64
            } else {
                f64::NAN
            };
        }
        let belief = [0, 1].map(|g| {
            let mut mean = vec![0.0; models[g].len()];
            for ag in &agents[start[g]..start[g] + sizes[g]] {
                for (m, p) in mean.iter_mut().zip(ag.posterior()) {
                    *m += p;
                }
            }
            if sizes[g] > 0 {
                mean.iter_mut().for_each(|x| *x /= sizes[g] as f64);
            }
            mean
        });
        periods.push(PeriodRecord {
            t,
            situation,
            play,
            matches,
            belief,
            payoff: pay,
        });
    }
    Ok(LearningTrajectory {
        periods,
        zero_likelihood_traps: traps,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join("|")
}

/// Tab-separated trajectory: one line per period and group, every `every` periods.
pub fn write_trajectory(traj: &LearningTrajectory, path: &Path, every: usize) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "period\tsituation\tgroup\tplay_vs_A\tplay_vs_B\tmatches_vs_A\tmatches_vs_B\tbelief_mean\tmean_payoff"
    )?;
    for r in traj.periods.iter().step_by(every.max(1)) {
        for g in 0..2 {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.t,
                r.situation,
                ["A", "B"][g],
                join(&r.play[g][0]),
                join(&r.play[g][1]),
                r.matches[g][0],
                r.matches[g][1],
                join(&r.belief[g]),
                r.payoff[g]
            )?;
        }
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentComparison {
    pub situation: usize,
    pub periods: usize,
    /// Modal strategy per match type (AA, AB, BA, BB); None when that match never occurred.
    pub modal: [Option<usize>; 4],
    pub mean_belief: [Vec<f64>; 2],
    pub mean_payoff: [f64; 2],
    /// Standard error of the mean payoff across periods.
    pub payoff_se: [f64; 2],
    pub nearest_ez: Option<usize>,
    pub play_mismatch: usize,
    /// Largest total-variation distance between mean and EZ beliefs over the two groups.
    pub belief_tv: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub window: usize,
    pub segments: Vec<SegmentComparison>,
    /// True iff no EZ was supplied.
    pub no_ez: bool,
    pub converged: bool,
}

fn tv(dense: &[f64], sparse: &[(usize, f64)]) -> f64 {
    let mut d: Vec<f64> = dense.to_vec();
    for &(i, p) in sparse {
        d[i] -= p;
    }
    0.5 * d.iter().map(|x| x.abs()).sum::<f64>()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = xs.iter().cloned().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Compare the last `window` periods, split by situation, against a list of EZs.
pub fn compare_to_ez(traj: &LearningTrajectory, ez_list: &[Zeitgeist], window: usize, tol: f64) -> Result<Comparison> {
    if window > traj.periods.len() {
        return input(format!("window {window} exceeds horizon {}", traj.periods.len()));
    }
    let tail = &traj.periods[traj.periods.len() - window..];
    let mut sits: Vec<usize> = tail.iter().map(|r| r.situation).collect();
    sits.sort_unstable();
    sits.dedup();
    let mut segments = Vec::new();
    for s in sits {
        let seg: Vec<&PeriodRecord> = tail.iter().filter(|r| r.situation == s).collect();
        let n_a = seg[0].play[0][0].len();
        let mut modal = [None; 4];
        for g in 0..2 {
            for h in 0..2 {
                let mut counts = vec![0.0; n_a];
                for r in &seg {
                    for (c, p) in counts.iter_mut().zip(&r.play[g][h]) {
                        *c += p * r.matches[g][h] as f64;
                    }
                }
                if counts.iter().any(|&c| c > 0.0) {
                    let best = counts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    modal[2 * g + h] = counts.iter().position(|&c| c == best);
                }
            }
        }
        let mean_belief = [0, 1].map(|g| {
            let mut m = vec![0.0; seg[0].belief[g].len()];
            for r in &seg {
                for (x, p) in m.iter_mut().zip(&r.belief[g]) {
                    *x += p / seg.len() as f64;
                }
            }
            m
        });
        let stats = [0, 1].map(|g| mean_se(&seg.iter().map(|r| r.payoff[g]).collect::<Vec<_>>()));
        let mut best: Option<(usize, f64, usize)> = None;
        for (i, z) in ez_list.iter().enumerate() {
            let sp = &z.plays[s];
            let mismatch = (0..4).filter(|&k| modal[k].is_some_and(|m| m != sp.quad.0[k])).count();
            let d = (0..2)
                .filter(|&g| mean_belief[g].iter().sum::<f64>() > 0.0)
                .map(|g| tv(&mean_belief[g], &sp.beliefs[g]))
                .fold(0.0, f64::max);
            if best.map_or(true, |(m, bd, _)| (mismatch, d) < (m, bd)) {
                best = Some((mismatch, d, i));
            }
        }
        let (play_mismatch, belief_tv, nearest_ez) = match best {
            Some((m, d, i)) => (m, d, Some(i)),
            None => (usize::MAX, f64::INFINITY, None),
        };
        segments.push(SegmentComparison {
            situation: s,
            periods: seg.len(),
            modal,
            mean_belief,
            mean_payoff: [stats[0].0, stats[1].0],
            payoff_se: [stats[0].1, stats[1].1],
            nearest_ez,
            play_mismatch,
            belief_tv,
            converged: nearest_ez.is_some() && play_mismatch == 0 && belief_tv <= tol,
        });
    }
    let converged = !segments.is_empty() && segments.iter().all(|s| s.converged);
    Ok(Comparison {
        window,
        segments,
        no_ez: ez_list.is_empty(),
        converged,
    })
}

/// Modal quadruple of a segment with unobserved match types filled from `fallback`.
pub fn modal_quad(seg: &SegmentComparison, fallback: Quad) -> Quad {
    Quad([0, 1, 2, 3].map(|k| seg.modal[k].unwrap_or(fallback.0[k])))
}
