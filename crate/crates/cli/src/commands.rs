use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use zeitgeist_core::catalog::centipede::{centipede_analysis, CentipedeSpec};
use zeitgeist_core::catalog::cournot::{build_cournot_discrete, cournot_closed_form, uniform_grid, CournotSpec};
use zeitgeist_core::catalog::dollar::dollar_analysis;
use zeitgeist_core::catalog::example1;
use zeitgeist_core::catalog::investment::{build_investment_game, InvestmentOptions, InvestmentSpec};
use zeitgeist_core::config::{load, load_env, load_model, save_env, save_model};
use zeitgeist_core::ez::{conditional_fitness, enumerate_ez, fitness};
use zeitgeist_core::learning::{compare_to_ez, run_learning, write_trajectory, SimConfig};
use zeitgeist_core::model::{illusion_of_control_model, minimal_correct_model};
use zeitgeist_core::report::{fmt_f, write_pair, Table};
use zeitgeist_core::stability::{classify_stability, detect_reversal, singleton_fragility_check};
use zeitgeist_core::{FitnessWeights, Group, Model, MonitoringStructure, StageEnv, Zeitgeist};

use crate::manifest::Recorder;
use crate::{Pair, Status};

fn load_pair(pair: &Pair, rec: &mut Recorder) -> anyhow::Result<(StageEnv, Model, Model)> {
    let env = load_env(&pair.env)?;
    rec.config(&pair.env);
    let a = load_model(&pair.model_a, &env)?;
    rec.config(&pair.model_a);
    let b = load_model(&pair.model_b, &env)?;
    rec.config(&pair.model_b);
    Ok((env, a, b))
}

fn weights(env: &StageEnv, q: Option<Vec<f64>>) -> anyhow::Result<FitnessWeights> {
    Ok(match q {
        Some(q) => FitnessWeights::new(q)?,
        None => FitnessWeights::uniform(env.n_g()),
    })
}

/// Parameter label: kernel label plus conjectured play against A and B.
pub fn param_label(env: &StageEnv, m: &Model, gamma: usize) -> String {
    let p = m.param(gamma);
    let s = &env.strategies;
    format!("{} [A:{} B:{}]", m.kernel_labels[p.kernel], s[p.conj_a], s[p.conj_b])
}

pub fn belief_text(env: &StageEnv, m: &Model, belief: &[(usize, f64)]) -> String {
    let parts: Vec<String> = belief
        .iter()
        .map(|&(g, w)| format!("{} {}", param_label(env, m, g), fmt_f(w)))
        .collect();
    parts.join("; ")
}

fn finish(rec: Recorder, out: &Path, files: Vec<PathBuf>) -> anyhow::Result<()> {
    let mut rec = rec;
    rec.outputs(files);
    rec.finish(out)?;
    Ok(())
}

#[derive(Serialize)]
struct EzOutput<'a> {
    shares: [f64; 2],
    q: &'a [f64],
    zeitgeists: &'a [Zeitgeist],
    fitness: Vec<[f64; 2]>,
}

pub fn solve_ez(pair: &Pair, shares: [f64; 2], q: Option<Vec<f64>>, out: &Path) -> anyhow::Result<Status> {
    let mut rec = Recorder::new("solve-ez");
    let (env, ma, mb) = load_pair(pair, &mut rec)?;
    let q = weights(&env, q)?;
    let zs = enumerate_ez(&env, &ma, &mb, shares)?;
    let fit: Vec<[f64; 2]> = zs.iter().map(|z| fitness(z, &env, &q)).map(|(a, b)| [a, b]).collect();
    let mut plays = Table::new(
        format!("Equilibrium zeitgeists at shares ({}, {})", shares[0], shares[1]),
        &[
            "ez",
            "situation",
            "a_AA",
            "a_AB",
            "a_BA",
            "a_BB",
            "belief A",
            "belief B",
        ],
    );
    let mut fits = Table::new("Fitness", &["ez", "fitness A", "fitness B"]);
    for (i, z) in zs.iter().enumerate() {
        for (s, p) in z.plays.iter().enumerate() {
            let mut row = vec![i.to_string(), env.situations[s].clone()];
            row.extend(p.quad.0.iter().map(|&a| env.strategies[a].clone()));
            row.push(belief_text(&env, &ma, &p.beliefs[0]));
            row.push(belief_text(&env, &mb, &p.beliefs[1]));
            plays.push(row);
        }
        fits.push(vec![i.to_string(), fmt_f(fit[i][0]), fmt_f(fit[i][1])]);
    }
    let data = EzOutput {
        shares,
        q: q.q(),
        zeitgeists: &zs,
        fitness: fit,
    };
    let files = write_pair(out, "ez", &[plays.clone(), fits.clone()], &data)?;
    print!("{plays}\n{fits}");
    finish(rec, out, files)?;
    Ok(if zs.is_empty() { Status::Empty } else { Status::Ok })
}

pub fn classify(pair: &Pair, q: Option<Vec<f64>>, eps: &[f64], out: &Path) -> anyhow::Result<Status> {
    let mut rec = Recorder::new("classify");
    let (env, ma, mb) = load_pair(pair, &mut rec)?;
    let q = weights(&env, q)?;
    let v = classify_stability(&env, &ma, &mb, &q, eps)?;
    let mut t = Table::new(
        format!(
            "Resident {} against entrant {}: {:?}",
            ma.label, mb.label, v.classification
        ),
        &["eps", "EZ count", "min gap", "max gap", "mixture"],
    );
    for e in &v.evidence {
        t.push(vec![
            e.eps.to_string(),
            e.ez_count.to_string(),
            fmt_f(e.min_gap),
            fmt_f(e.max_gap),
            e.mixture_supported.to_string(),
        ]);
    }
    let files = write_pair(out, "classify", std::slice::from_ref(&t), &v)?;
    print!("{t}");
    finish(rec, out, files)?;
    Ok(if v.evidence.iter().any(|e| e.ez_count == 0) {
        Status::Empty
    } else {
        Status::Ok
    })
}

pub fn separation(env_path: &Path, out: &Path) -> anyhow::Result<Status> {
    let mut rec = Recorder::new("separation");
    let env = load_env(env_path)?;
    rec.config(env_path);
    let r = singleton_fragility_check(&env)?;
    let mut t = Table::new(
        format!(
            "Separation: v_NE = {:?}, q = {}, margin = {}",
            r.v_ne,
            r.separating_q.as_ref().map_or("none".to_string(), |q| format!("{q:?}")),
            fmt_f(r.margin)
        ),
        &["correspondence values", "count"],
    );
    let mut distinct: Vec<(&Vec<f64>, usize)> = Vec::new();
    for p in &r.candidate_points {
        match distinct.iter_mut().find(|(d, _)| *d == p) {
            Some((_, n)) => *n += 1,
            None => distinct.push((p, 1)),
        }
    }
    for (p, n) in distinct {
        t.push(vec![
            p.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(", "),
            n.to_string(),
        ]);
    }
    let files = write_pair(out, "separation", std::slice::from_ref(&t), &r)?;
    print!("{t}");
    finish(rec, out, files)?;
    Ok(if r.separating_q.is_some() {
        Status::Ok
    } else {
        Status::Empty
    })
}

pub fn reversal(pair: &Pair, out: &Path) -> anyhow::Result<Status> {
    let mut rec = Recorder::new("reversal");
    let (env, ma, mb) = load_pair(pair, &mut rec)?;
    let r = detect_reversal(&env, &ma, &mb)?;
    let mut t = Table::new(
        format!("Stability reversal: {}", r.reversal),
        &["shares", "a_AA", "a_AB", "a_BA", "a_BB", "AvA", "BvA", "AvB", "BvB"],
    );
    for z in r.dominant_a.iter().chain(&r.dominant_b) {
        let mut row = vec![format!("({}, {})", z.shares[0], z.shares[1])];
        row.extend(z.plays[0].quad.0.iter().map(|&a| env.strategies[a].clone()));
        for (g, h) in [
            (Group::A, Group::A),
            (Group::B, Group::A),
            (Group::A, Group::B),
            (Group::B, Group::B),
        ] {
            row.push(fmt_f(conditional_fitness(z, &env, 0, g, h)));
        }
        t.push(row);
    }
    let files = write_pair(out, "reversal", std::slice::from_ref(&t), &r)?;
    print!("{t}");
    finish(rec, out, files)?;
    Ok(if r.dominant_a.is_empty() || r.dominant_b.is_empty() {
        Status::Empty
    } else {
        Status::Ok
    })
}

#[allow(clippy::too_many_arguments)]
pub fn learn(
    pair: &Pair,
    sim: &Path,
    seed: Option<u64>,
    shares: Option<[f64; 2]>,
    every: usize,
    window: usize,
    tol: f64,
    out: &Path,
) -> anyhow::Result<Status> {
    let mut rec = Recorder::new("learn");
    let (env, ma, mb) = load_pair(pair, &mut rec)?;
    let mut cfg: SimConfig = load(sim)?;
    rec.config(sim);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = shares {
        cfg.shares = s;
    }
    rec.seed(cfg.seed);
    let traj = run_learning(&env, &ma, &mb, &cfg)?;
    std::fs::create_dir_all(out)?;
    let tsv = out.join("trajectory.tsv");
    write_trajectory(&traj, &tsv, every.max(1))?;
    let zs = enumerate_ez(&env, &ma, &mb, cfg.shares)?;
    let cmp = compare_to_ez(&traj, &zs, window.min(traj.periods.len()), tol)?;
    let mut t = Table::new(
        format!("Learning against {} EZ(s): converged = {}", zs.len(), cmp.converged),
        &[
            "situation",
            "periods",
            "modal AA",
            "modal AB",
            "modal BA",
            "modal BB",
            "nearest EZ",
            "belief TV",
            "payoff A",
            "payoff B",
        ],
    );
    for s in &cmp.segments {
        let mut row = vec![env.situations[s.situation].clone(), s.periods.to_string()];
        row.extend(
            s.modal
                .iter()
                .map(|m| m.map_or("-".into(), |a| env.strategies[a].clone())),
        );
        row.push(s.nearest_ez.map_or("-".into(), |i| i.to_string()));
        row.push(fmt_f(s.belief_tv));
        for g in 0..2 {
            row.push(format!("{} +- {}", fmt_f(s.mean_payoff[g]), fmt_f(s.payoff_se[g])));
        }
        t.push(row);
    }
    #[derive(Serialize)]
    struct Out<'a> {
        config: &'a SimConfig,
        zero_likelihood_traps: usize,
        comparison: &'a zeitgeist_core::learning::Comparison,
    }
    let data = Out {
        config: &cfg,
        zero_likelihood_traps: traj.zero_likelihood_traps,
        comparison: &cmp,
    };
    let mut files = vec![tsv];
    files.extend(write_pair(out, "comparison", std::slice::from_ref(&t), &data)?);
    print!("{t}");
    finish(rec, out, files)?;
    Ok(Status::Ok)
}

fn write_models(out: &Path, env: &StageEnv, a: &Model, b: &Model) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let paths = [out.join("env.toml"), out.join("model-a.toml"), out.join("model-b.toml")];
    save_env(env, &paths[0]).with_context(|| format!("writing {}", paths[0].display()))?;
    save_model(a, &paths[1])?;
    save_model(b, &paths[2])?;
    Ok(paths.to_vec())
}

pub fn build_example1(eps: f64, out: &Path) -> anyhow::Result<Status> {
    let rec = Recorder::new("build-example1");
    let env = example1::build_example1();
    let a = minimal_correct_model(&env);
    let b = illusion_of_control_model(&env, eps)?;
    let files = write_models(out, &env, &a, &b)?;
    println!("wrote {} files to {}", files.len(), out.display());
    finish(rec, out, files)?;
    Ok(Status::Ok)
}

pub fn build_investment(b: f64, c: f64, m: f64, noise_sd: f64, tau: Option<f64>, out: &Path) -> anyhow::Result<Status> {
    let rec = Recorder::new("build-investment");
    let spec = InvestmentSpec { b, c, m };
    let opts = InvestmentOptions {
        noise_sd,
        ..Default::default()
    };
    let mut game = build_investment_game(&spec, &opts)?;
    if let Some(t) = tau {
        if !(0.0..1.0).contains(&t) {
            anyhow::bail!("tau {t} outside [0, 1)");
        }
        game.env.monitoring = MonitoringStructure::noisy(&game.env.strategies, t);
    }
    let mut files = write_models(out, &game.env, &game.model_a, &game.model_b)?;
    let mut t = Table::new("Investment game", &["quantity", "value"]);
    t.push(vec!["b*(1,1)".into(), fmt_f(game.report.b_star_11)]);
    t.push(vec!["b*(1,2)".into(), fmt_f(game.report.b_star_12)]);
    t.push(vec!["b*(2,2)".into(), fmt_f(game.report.b_star_22)]);
    t.push(vec![
        "medium cost".into(),
        game.report.conditions.medium_cost.to_string(),
    ]);
    t.push(vec![
        "large misspecification".into(),
        game.report.conditions.large_misspecification.to_string(),
    ]);
    files.extend(write_pair(out, "investment", std::slice::from_ref(&t), &game.report)?);
    print!("{t}");
    finish(rec, out, files)?;
    Ok(Status::Ok)
}

#[allow(clippy::too_many_arguments)]
pub fn build_cournot(
    beta: f64,
    c: f64,
    r: f64,
    r_hat: f64,
    grid: usize,
    bins: usize,
    sd: f64,
    out: &Path,
) -> anyhow::Result<Status> {
    let rec = Recorder::new("build-cournot");
    let spec = CournotSpec { beta, c, r, r_hat };
    let cf = cournot_closed_form(&spec)?;
    if grid < 2 {
        anyhow::bail!("quantity grid needs at least 2 points");
    }
    let d = build_cournot_discrete(&spec, &uniform_grid(grid, (beta - c) / r), bins, sd)?;
    for w in &d.warnings {
        eprintln!("warning: {w}");
    }
    let mut files = write_models(out, &d.env, &d.model_a, &d.model_b)?;
    let mut t = Table::new("Cournot closed forms", &["quantity", "value"]);
    t.push(vec!["a_AA".into(), fmt_f(cf.a_aa)]);
    t.push(vec!["resident fitness".into(), fmt_f(cf.resident_fitness)]);
    t.push(vec!["a_stack".into(), fmt_f(cf.a_stack)]);
    t.push(vec!["a_BA".into(), fmt_f(cf.a_ba)]);
    t.push(vec!["entrant fitness".into(), fmt_f(cf.entrant_fitness)]);
    #[derive(Serialize)]
    struct Out<'a> {
        closed_form: &'a zeitgeist_core::catalog::cournot::CournotClosedForm,
        warnings: &'a [String],
    }
    files.extend(write_pair(
        out,
        "cournot",
        std::slice::from_ref(&t),
        &Out {
            closed_form: &cf,
            warnings: &d.warnings,
        },
    )?);
    print!("{t}");
    finish(rec, out, files)?;
    Ok(Status::Ok)
}

pub fn centipede(k: usize, g: f64, l: f64, out: &Path) -> anyhow::Result<Status> {
    let rec = Recorder::new("centipede");
    let r = centipede_analysis(&CentipedeSpec { k, g, l })?;
    let mut t = Table::new(format!("Centipede K={k} g={g} l={l}"), &["quantity", "value"]);
    t.push(vec!["applicable".into(), r.applicable.to_string()]);
    t.push(vec![
        "maximal continuation verified".into(),
        r.maximal_continuation_verified.to_string(),
    ]);
    t.push(vec!["analogy minimizer x".into(), fmt_f(r.analogy_minimizer_x)]);
    t.push(vec!["stable share p_B".into(), fmt_f(r.p_star_b)]);
    t.push(vec![
        "stable share p_B (scan)".into(),
        r.p_star_b_scan.map_or("-".into(), fmt_f),
    ]);
    let files = write_pair(out, "centipede", std::slice::from_ref(&t), &r)?;
    print!("{t}");
    finish(rec, out, files)?;
    Ok(if r.applicable { Status::Ok } else { Status::Empty })
}

pub fn dollar(k: usize, out: &Path) -> anyhow::Result<Status> {
    let rec = Recorder::new("dollar");
    let r = dollar_analysis(k)?;
    let mut t = Table::new(
        format!("Dollar game K={k}: analogy dominance = {}", r.dominance),
        &["p_B", "fitness correct", "fitness analogy"],
    );
    for &(p, fa, fb) in r.grid.iter().step_by(10) {
        t.push(vec![format!("{p:.2}"), fmt_f(fa), fmt_f(fb)]);
    }
    let files = write_pair(out, "dollar", std::slice::from_ref(&t), &r)?;
    print!("{t}");
    finish(rec, out, files)?;
    Ok(Status::Ok)
}
