//! Two-level investment game with a misspecified productivity model.

use std::sync::Arc;

use serde::Serialize;

use super::{finish_kernels, lattice_labels, LatticeStore, PendingKernel, PriceLattice};
use crate::error::{input, Result};
use crate::game::{MonitoringStructure, StageEnv};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvestmentSpec {
    pub b: f64,
    pub c: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvestmentConditions {
    /// 5b < c < 6b
    pub medium_cost: bool,
    /// c < 4b + m/3 and c < 5b + m/4
    pub large_misspecification: bool,
}

impl InvestmentSpec {
    pub fn conditions(&self) -> InvestmentConditions {
        let InvestmentSpec { b, c, m } = *self;
        InvestmentConditions {
            medium_cost: 5.0 * b < c && c < 6.0 * b,
            large_misspecification: c < 4.0 * b + m / 3.0 && c < 5.0 * b + m / 4.0,
        }
    }

    /// Fitted productivity for data from profile (a_i, a_-i).
    pub fn b_star(&self, a_i: u32, a_minus: u32) -> f64 {
        self.b + self.m / (a_i + a_minus) as f64
    }

    /// Objective payoff of investing `a_i` against `a_minus`.
    pub fn payoff(&self, a_i: u32, a_minus: u32) -> f64 {
        let p = self.b * (a_i + a_minus) as f64;
        a_i as f64 * p - (a_i as f64 - 1.0) * self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvestmentReport {
    pub b_star_11: f64,
    pub b_star_12: f64,
    pub b_star_22: f64,
    pub conditions: InvestmentConditions,
}

pub struct InvestmentGame {
    pub env: StageEnv,
    pub model_a: Model,
    pub model_b: Model,
    /// Productivity values of model B's kernels, in kernel order.
    pub b_grid: Vec<f64>,
    pub lattice: PriceLattice,
    pub report: InvestmentReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvestmentOptions {
    pub noise_sd: f64,
    /// Target price-lattice spacing.
    pub price_step: f64,
    /// Spacing of the padding grid on [b, b + m].
    pub b_step: f64,
}

impl Default for InvestmentOptions {
    fn default() -> Self {
        InvestmentOptions {
            noise_sd: 1.0,
            price_step: 0.25,
            b_step: 1.0,
        }
    }
}

/// Model B's productivity grid: a uniform grid on [b, b + m] plus b + m/2, b + m/3, b + m/4.
pub fn b_grid(spec: &InvestmentSpec, step: f64) -> Vec<f64> {
    let mut g = vec![spec.b + spec.m / 2.0, spec.b + spec.m / 3.0, spec.b + spec.m / 4.0];
    let n = (spec.m / step).floor() as usize;
    for i in 0..=n {
        g.push(spec.b + step * i as f64);
    }
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    g
}

pub fn build_investment_game(spec: &InvestmentSpec, opts: &InvestmentOptions) -> Result<InvestmentGame> {
    if !(spec.b > 0.0) || !(spec.m > 0.0) {
        return input("investment game needs b > 0 and m > 0");
    }
    if !(opts.noise_sd > 0.0) || !(opts.price_step > 0.0) || !(opts.b_step > 0.0) {
        return input("investment options must be positive");
    }
    let levels = [1u32, 2];
    let grid = b_grid(spec, opts.b_step);
    let sums = [2.0, 3.0, 4.0];
    let class_of = Arc::new(
        levels
            .iter()
            .flat_map(|&a| levels.iter().map(move |&o| (a + o - 2) as u32))
            .collect::<Vec<u32>>(),
    );
    let true_mean = |s: f64| spec.b * s;
    let model_mean = |bh: f64, s: f64| bh * s - spec.m;
    let mut lo = true_mean(2.0);
    let mut hi = true_mean(4.0);
    for &bh in &grid {
        lo = lo.min(model_mean(bh, 2.0).min(model_mean(bh, 4.0)));
        hi = hi.max(model_mean(bh, 2.0).max(model_mean(bh, 4.0)));
    }
    let span = hi - lo + 8.0 * opts.noise_sd;
    let len = (span / opts.price_step).ceil() as usize + 1;
    let lattice = PriceLattice::covering(lo, hi, opts.noise_sd, len)?;
    let mut store = LatticeStore::new(lattice, opts.noise_sd);
    let truth = PendingKernel {
        class_row: sums.iter().map(|&s| store.intern(true_mean(s))).collect(),
    };
    let pb: Vec<PendingKernel> = grid
        .iter()
        .map(|&bh| PendingKernel {
            class_row: sums.iter().map(|&s| store.intern(model_mean(bh, s))).collect(),
        })
        .collect();
    let store = store.finish();
    let truth = finish_kernels(2, &lattice, &class_of, vec![truth], &store)?
        .pop()
        .unwrap();
    let kb = finish_kernels(2, &lattice, &class_of, pb, &store)?;
    let strategies: Vec<String> = vec!["1".into(), "2".into()];
    let utility: Vec<f64> = levels
        .iter()
        .flat_map(|&a| (0..lattice.len).map(move |j| a as f64 * lattice.point(j) - (a as f64 - 1.0) * spec.c))
        .collect();
    let env = StageEnv::new(
        strategies.clone(),
        lattice_labels(&strategies, &lattice),
        vec!["invest".into()],
        vec![truth.clone()],
        utility,
        MonitoringStructure::perfect(&strategies),
    )?;
    let model_a = Model::product("investment-correct", 2, vec![truth], vec![format!("b={}", spec.b)])?;
    let labels = grid.iter().map(|b| format!("b={b}")).collect();
    let model_b = Model::product("investment-offset", 2, kb, labels)?;
    let report = InvestmentReport {
        b_star_11: spec.b_star(1, 1),
        b_star_12: spec.b_star(1, 2),
        b_star_22: spec.b_star(2, 2),
        conditions: spec.conditions(),
    };
    Ok(InvestmentGame {
        env,
        model_a,
        model_b,
        b_grid: grid,
        lattice,
        report,
    })
}

impl InvestmentGame {
    /// Index of model B's kernel with productivity closest to `b`.
    pub fn nearest_kernel(&self, b: f64) -> usize {
        let mut best = 0;
        for (i, v) in self.b_grid.iter().enumerate() {
            if (v - b).abs() < (self.b_grid[best] - b).abs() {
                best = i;
            }
        }
        best
    }
}
