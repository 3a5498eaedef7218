use std::path::{Path, PathBuf};

use serde::Serialize;
use zeitgeist_core::catalog::centipede::{centipede_analysis, CentipedeSpec};
use zeitgeist_core::catalog::cournot::{best_slope_perception, cournot_closed_form, CournotSpec};
use zeitgeist_core::catalog::dollar::dollar_analysis;
use zeitgeist_core::catalog::example1::build_example1;
use zeitgeist_core::catalog::investment::{build_investment_game, InvestmentOptions, InvestmentSpec};
use zeitgeist_core::config::load_env;
use zeitgeist_core::ez::{conditional_fitness, enumerate_ez};
use zeitgeist_core::game::{stackelberg, symmetric_nash};
use zeitgeist_core::learning::{compare_to_ez, modal_quad, run_learning, SimConfig};
use zeitgeist_core::model::{illusion_of_control_model, minimal_correct_model};
use zeitgeist_core::report::{write_pair, Table};
use zeitgeist_core::stability::{classify_stability, detect_reversal, singleton_fragility_check};
use zeitgeist_core::{Classification, FitnessWeights, Group, MonitoringStructure, Quad};

use crate::manifest::Recorder;
use crate::Status;

pub const GROUPS: [&str; 6] = ["cournot", "example1", "investment", "centipede", "dollar", "learning"];

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub group: String,
    pub check: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

struct Rows {
    group: &'static str,
    rows: Vec<Row>,
}

impl Rows {
    fn num(&mut self, check: &str, expected: f64, actual: f64, tol: f64) {
        let pass = (expected - actual).abs() <= tol;
        self.push(check, format!("{expected}"), format!("{actual}"), pass);
    }

    fn eq<T: std::fmt::Debug + PartialEq>(&mut self, check: &str, expected: T, actual: T) {
        let pass = expected == actual;
        self.push(check, format!("{expected:?}"), format!("{actual:?}"), pass);
    }

    fn push(&mut self, check: &str, expected: String, actual: String, pass: bool) {
        self.rows.push(Row {
            group: self.group.into(),
            check: check.into(),
            expected,
            actual,
            pass,
        });
    }

    fn error(&mut self, e: impl std::fmt::Display) {
        self.push("runs without error", "ok".into(), e.to_string(), false);
    }
}

const COURNOT: CournotSpec = CournotSpec {
    beta: 10.0,
    c: 2.0,
    r: 1.0,
    r_hat: 0.5,
};
const INVEST: InvestmentSpec = InvestmentSpec {
    b: 1.0,
    c: 5.5,
    m: 12.0,
};

fn cournot(r: &mut Rows) -> anyhow::Result<()> {
    let cf = cournot_closed_form(&COURNOT)?;
    r.num("a_AA", 8.0 / 3.0, cf.a_aa, 1e-12);
    r.num("resident fitness", 64.0 / 9.0, cf.resident_fitness, 1e-12);
    r.num("a_stack", 4.0, cf.a_stack, 1e-12);
    r.num("a_BA at r_hat = r/2", 4.0, cf.a_ba, 1e-12);
    r.num("entrant fitness", 8.0, cf.entrant_fitness, 1e-12);
    let grid: Vec<f64> = (1..=300).map(|i| i as f64 * 0.01).collect();
    r.num(
        "best slope perception",
        0.5,
        best_slope_perception(&COURNOT, &grid)?,
        0.01,
    );
    Ok(())
}

fn example1(r: &mut Rows, env_path: Option<&Path>) -> anyhow::Result<()> {
    let env = match env_path {
        Some(p) => load_env(p)?,
        None => build_example1(),
    };
    let v = [symmetric_nash(&env, 0).v_ne, symmetric_nash(&env, 1).v_ne];
    r.eq("v_NE in G_A", Some(0.3), v[0]);
    r.eq("v_NE in G_B", Some(0.4), v[1]);
    let s = [stackelberg(&env, 0), stackelberg(&env, 1)];
    r.eq("Stackelberg value G_A", 0.3, s[0].v_bar);
    r.eq("Stackelberg value G_B", 0.5, s[1].v_bar);
    let sep = singleton_fragility_check(&env)?;
    let q_ok = sep.separating_q.as_ref().is_some_and(|q| q.iter().all(|&x| x > 0.0)) && sep.margin > 0.0;
    r.push(
        "separating q with full support",
        "exists".into(),
        sep.separating_q
            .as_ref()
            .map_or("none".into(), |q| format!("{q:?} margin {}", sep.margin)),
        q_ok,
    );
    let resident = minimal_correct_model(&env);
    let entrant = illusion_of_control_model(&env, 1e-3)?;
    let q = FitnessWeights::uniform(env.n_g());
    let verdict = classify_stability(&env, &resident, &entrant, &q, &[0.01, 0.005, 0.001])?;
    r.eq(
        "correct resident against illusion entrant",
        Classification::Fragile,
        verdict.classification,
    );
    Ok(())
}

fn investment(r: &mut Rows) -> anyhow::Result<()> {
    let game = build_investment_game(&INVEST, &InvestmentOptions::default())?;
    let rev = detect_reversal(&game.env, &game.model_a, &game.model_b)?;
    r.eq("stability reversal", true, rev.reversal);
    let quads =
        |zs: &[zeitgeist_core::Zeitgeist]| zs.iter().map(|z| levels(z.plays[0].quad)).collect::<Vec<_>>().join(" ");
    let qa: Vec<Quad> = rev.dominant_a.iter().map(|z| z.plays[0].quad).collect();
    r.push(
        "EZ play at shares (1,0)",
        "all (1,1,2,2)".into(),
        quads(&rev.dominant_a),
        !qa.is_empty() && qa.iter().all(|&q| q == Quad::new(0, 0, 1, 1)),
    );
    let qb: Vec<Quad> = rev.dominant_b.iter().map(|z| z.plays[0].quad).collect();
    r.push(
        "EZ play at shares (0,1)",
        "(1,1,1,2) only".into(),
        quads(&rev.dominant_b),
        qb == [Quad::new(0, 0, 0, 1)],
    );
    let (b, c) = (INVEST.b, INVEST.c);
    if let Some(z) = rev.dominant_a.first() {
        r.num(
            "fitness of A against A at (1,0)",
            2.0 * b,
            conditional_fitness(z, &game.env, 0, Group::A, Group::A),
            1e-9,
        );
        r.num(
            "fitness of B against A at (1,0)",
            6.0 * b - c,
            conditional_fitness(z, &game.env, 0, Group::B, Group::A),
            1e-9,
        );
    }
    if let Some(z) = rev.dominant_b.first() {
        r.num(
            "fitness of A against B at (0,1)",
            2.0 * b,
            conditional_fitness(z, &game.env, 0, Group::A, Group::B),
            1e-9,
        );
        r.num(
            "fitness of B against B at (0,1)",
            8.0 * b - c,
            conditional_fitness(z, &game.env, 0, Group::B, Group::B),
            1e-9,
        );
    }
    Ok(())
}

/// Investment levels of a quadruple, counted from 1.
fn levels(q: Quad) -> String {
    let v: Vec<String> = q.0.iter().map(|a| (a + 1).to_string()).collect();
    format!("({})", v.join(","))
}

fn centipede(r: &mut Rows) -> anyhow::Result<()> {
    let rep = centipede_analysis(&CentipedeSpec { k: 10, g: 1.0, l: 2.0 })?;
    r.eq("maximal continuation is an EZ", true, rep.maximal_continuation_verified);
    r.num(
        "analogy minimizer x (K=10, g=1, l=2)",
        0.2,
        rep.analogy_minimizer_x,
        1e-6,
    );
    r.num("stable share p_B", 0.75, rep.p_star_b, 1e-12);
    Ok(())
}

fn dollar(r: &mut Rows) -> anyhow::Result<()> {
    for k in [6, 8, 10, 12] {
        let rep = dollar_analysis(k)?;
        r.eq(
            &format!("analogy dominance K={k}"),
            true,
            rep.dominance && rep.maximal_continuation_verified,
        );
    }
    Ok(())
}

fn learning(r: &mut Rows) -> anyhow::Result<()> {
    let opts = InvestmentOptions {
        noise_sd: 3.0,
        ..Default::default()
    };
    let mut game = build_investment_game(&INVEST, &opts)?;
    game.env.monitoring = MonitoringStructure::noisy(&game.env.strategies, 0.99);
    let mut cfg = SimConfig::new(1000, [0.01, 0.99], 5000, 20240917);
    cfg.tau = Some(0.99);
    let zs = enumerate_ez(&game.env, &game.model_a, &game.model_b, cfg.shares)?;
    let traj = run_learning(&game.env, &game.model_a, &game.model_b, &cfg)?;
    let cmp = compare_to_ez(&traj, &zs, 500, 0.05)?;
    let want = Quad::new(0, 0, 0, 1);
    let seg = &cmp.segments[0];
    let modal = modal_quad(seg, want);
    r.push("modal play", levels(want), levels(modal), modal == want);
    let k4 = game.nearest_kernel(INVEST.b + INVEST.m / 4.0);
    let mass: f64 = seg.mean_belief[1]
        .iter()
        .enumerate()
        .filter(|(g, _)| game.model_b.param(*g).kernel == k4)
        .map(|(_, p)| p)
        .sum();
    r.push(
        "group B belief mass on b = 4",
        ">= 0.95".into(),
        format!("{mass:.6}"),
        mass >= 0.95,
    );
    r.eq("converged to an EZ", true, cmp.converged);
    Ok(())
}

pub fn run(only: Option<Vec<String>>, env: Option<PathBuf>, out: &Path) -> anyhow::Result<Status> {
    let mut rec = Recorder::new("reproduce");
    let selected: Vec<&str> = match &only {
        Some(v) => {
            for g in v {
                if !GROUPS.contains(&g.as_str()) {
                    anyhow::bail!("unknown group {g:?}; expected one of {}", GROUPS.join(", "));
                }
            }
            GROUPS.iter().copied().filter(|g| v.iter().any(|x| x == g)).collect()
        }
        None => GROUPS.to_vec(),
    };
    if let Some(p) = &env {
        rec.config(p);
    }
    let mut all = Vec::new();
    for g in selected {
        let mut rows = Rows {
            group: g,
            rows: Vec::new(),
        };
        let res = match g {
            "cournot" => cournot(&mut rows),
            "example1" => example1(&mut rows, env.as_deref()),
            "investment" => investment(&mut rows),
            "centipede" => centipede(&mut rows),
            "dollar" => dollar(&mut rows),
            _ => learning(&mut rows),
        };
        if let Err(e) = res {
            rows.error(format!("{e:#}"));
        }
        all.extend(rows.rows);
    }
    let passed = all.iter().filter(|r| r.pass).count();
    let mut t = Table::new(
        format!("Reproduction: {passed}/{} checks pass", all.len()),
        &["group", "check", "expected", "actual", "status"],
    );
    for r in &all {
        let status = if r.pass { "PASS" } else { "FAIL" };
        t.push(vec![
            r.group.clone(),
            r.check.clone(),
            r.expected.clone(),
            r.actual.clone(),
            status.into(),
        ]);
    }
    let files = write_pair(out, "reproduce", std::slice::from_ref(&t), &all)?;
    print!("{t}");
    rec.outputs(files);
    rec.finish(out)?;
    Ok(if passed == all.len() {
        Status::Ok
    } else {
        Status::Failed
    })
}
