//! Cournot duopoly with linear demand: closed forms and a discretized instance.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use super::{finish_kernels, lattice_labels, LatticeStore, PendingKernel, PriceLattice};
use crate::error::{input, Result};
use crate::ez::SituationPlay;
use crate::game::{MonitoringStructure, StageEnv};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CournotSpec {
    pub beta: f64,
    pub c: f64,
    pub r: f64,
    pub r_hat: f64,
}

impl CournotSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > self.c) || !(self.r > 0.0) || !(self.r_hat > 0.0) {
            return input("Cournot parameters need beta > c, r > 0, r_hat > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CournotClosedForm {
    pub a_aa: f64,
    pub resident_fitness: f64,
    pub a_stack: f64,
    pub a_ba: f64,
    pub entrant_fitness: f64,
}

pub fn cournot_closed_form(spec: &CournotSpec) -> Result<CournotClosedForm> {
    spec.validate()?;
    let CournotSpec { beta, c, r, r_hat } = *spec;
    let m = beta - c;
    let a_ba = m / (2.0 * r_hat + r);
    Ok(CournotClosedForm {
        a_aa: m / (3.0 * r),
        resident_fitness: m * m / (9.0 * r),
        a_stack: m / (2.0 * r),
        a_ba,
        entrant_fitness: entrant_fitness_at(spec, a_ba),
    })
}

/// Entrant payoff when playing `a` against residents who best respond to it.
pub fn entrant_fitness_at(spec: &CournotSpec, a: f64) -> f64 {
    0.5 * (a * (spec.beta - spec.c) - a * a * spec.r)
}

/// Slope perception in `grid` with the highest entrant fitness (first on ties).
pub fn best_slope_perception(spec: &CournotSpec, grid: &[f64]) -> Result<f64> {
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &rh in grid {
        let f = cournot_closed_form(&CournotSpec { r_hat: rh, ..*spec })?.entrant_fitness;
        if f > best.0 {
            best = (f, rh);
        }
    }
    Ok(best.1)
}

pub struct CournotDiscrete {
    pub env: StageEnv,
    pub model_a: Model,
    pub model_b: Model,
    pub quantities: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub lattice: PriceLattice,
    pub warnings: Vec<String>,
}

/// Uniform quantity grid with `n` points on `[0, hi]`.
pub fn uniform_grid(n: usize, hi: f64) -> Vec<f64> {
    (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
}

fn key(x: f64) -> i64 {
    (x * 1e9).round() as i64
}

pub fn build_cournot_discrete(
    spec: &CournotSpec,
    quantities: &[f64],
    price_bins: usize,
    noise_sd: f64,
) -> Result<CournotDiscrete> {
    spec.validate()?;
    let n = quantities.len();
    if n < 2 || quantities.windows(2).any(|w| w[1] <= w[0]) {
        return input("quantity grid must have at least 2 strictly increasing points");
    }
    let top = (spec.beta - spec.c) / spec.r;
    if quantities[0] > 1e-12 || quantities[0] < 0.0 || quantities[n - 1] < top - 1e-12 {
        return input(format!("quantity grid must cover [0, {top}]"));
    }
    if !(noise_sd > 0.0) {
        return input("noise_sd must be positive");
    }
    let bins = price_bins.max(2);
    // classes by total quantity
    let mut sums: Vec<f64> = Vec::new();
    let mut sum_id: HashMap<i64, u32> = HashMap::new();
    let mut class_of = Vec::with_capacity(n * n);
    for &qx in quantities {
        for &qy in quantities {
            let s = qx + qy;
            let id = *sum_id.entry(key(s)).or_insert_with(|| {
                sums.push(s);
                (sums.len() - 1) as u32
            });
            class_of.push(id);
        }
    }
    let class_of = Arc::new(class_of);
    let mut intercepts: Vec<f64> = sums.iter().map(|s| spec.beta + (spec.r_hat - spec.r) * s).collect();
    intercepts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    intercepts.dedup_by(|a, b| key(*a) == key(*b));
    let (s_lo, s_hi) = (2.0 * quantities[0], 2.0 * quantities[n - 1]);
    let (b_lo, b_hi) = (intercepts[intercepts.len() - 1], intercepts[0]);
    let mut lo = spec.beta - spec.r * s_hi;
    let mut hi = spec.beta - spec.r * s_lo;
    for slope in [spec.r, spec.r_hat] {
        lo = lo.min(b_lo - slope * s_hi);
        hi = hi.max(b_hi - slope * s_lo);
    }
    let lattice = PriceLattice::covering(lo, hi, noise_sd, bins)?;
    let mut store = LatticeStore::new(lattice, noise_sd);
    let family = |store: &mut LatticeStore, b: f64, slope: f64| PendingKernel {
        class_row: sums.iter().map(|s| store.intern(b - slope * s)).collect(),
    };
    let truth = family(&mut store, spec.beta, spec.r);
    let pa: Vec<PendingKernel> = intercepts.iter().map(|&b| family(&mut store, b, spec.r)).collect();
    let pb: Vec<PendingKernel> = intercepts.iter().map(|&b| family(&mut store, b, spec.r_hat)).collect();
    let store = store.finish();
    let truth = finish_kernels(n, &lattice, &class_of, vec![truth], &store)?
        .pop()
        .unwrap();
    let ka = finish_kernels(n, &lattice, &class_of, pa, &store)?;
    let kb = finish_kernels(n, &lattice, &class_of, pb, &store)?;
    let strategies: Vec<String> = quantities.iter().map(|q| format!("q{q:.6}")).collect();
    let utility: Vec<f64> = quantities
        .iter()
        .flat_map(|&q| (0..lattice.len).map(move |j| q * (lattice.point(j) - spec.c)))
        .collect();
    let env = StageEnv::new(
        strategies.clone(),
        lattice_labels(&strategies, &lattice),
        vec!["market".into()],
        vec![truth],
        utility,
        MonitoringStructure::perfect(&strategies),
    )?;
    let labels: Vec<String> = intercepts.iter().map(|b| format!("beta={b:.6}")).collect();
    let model_a = Model::product("cournot-correct-slope", n, ka, labels.clone())?;
    let model_b = Model::product("cournot-slope-misperception", n, kb, labels)?;

    let mut warnings = Vec::new();
    let cf = cournot_closed_form(spec)?;
    let max_step = quantities.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    for (what, target) in [
        ("a_AA", cf.a_aa),
        ("a_BA", cf.a_ba),
        ("a_AB", (spec.beta - spec.c - spec.r * cf.a_ba) / (2.0 * spec.r)),
    ] {
        let resid = quantities
            .iter()
            .map(|q| (q - target).abs())
            .fold(f64::INFINITY, f64::min);
        if resid > 0.5 * max_step + 1e-12 {
            warnings.push(format!("{what} = {target} is {resid} from the nearest grid point"));
        }
    }
    let b_fix =
        spec.beta + (spec.r_hat - spec.r) * (cf.a_ba + (spec.beta - spec.c - spec.r * cf.a_ba) / (2.0 * spec.r));
    let resid = intercepts
        .iter()
        .map(|b| (b - b_fix).abs())
        .fold(f64::INFINITY, f64::min);
    let b_step = intercepts.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    if resid > 0.5 * b_step + 1e-12 {
        warnings.push(format!(
            "fixed-point intercept {b_fix} is {resid} from the intercept grid"
        ));
    }
    Ok(CournotDiscrete {
        env,
        model_a,
        model_b,
        quantities: quantities.to_vec(),
        intercepts,
        lattice,
        warnings,
    })
}

impl CournotDiscrete {
    /// Deviation of (a_AA, a_BA) from the closed forms for the nearest and farthest EZ plays.
    ///
    /// Discrete best responses can tie at grid midpoints, so several EZs may
    /// coexist; the nearest one measures convergence and the farthest one
    /// bounds the spread.
    pub fn play_error(&self, spec: &CournotSpec, plays: &[SituationPlay]) -> Result<PlayError> {
        let cf = cournot_closed_form(spec)?;
        let q = &self.quantities;
        let errs = plays
            .iter()
            .map(|p| (q[p.quad.0[0]] - cf.a_aa).abs().max((q[p.quad.0[2]] - cf.a_ba).abs()));
        let (nearest, farthest) = errs.fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(e), hi.max(e)));
        Ok(PlayError { nearest, farthest })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlayError {
    pub nearest: f64,
    pub farthest: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: CournotSpec = CournotSpec {
        beta: 10.0,
        c: 2.0,
        r: 1.0,
        r_hat: 0.5,
    };

    #[test]
    fn closed_forms() {
        let cf = cournot_closed_form(&SPEC).unwrap();
        assert!((cf.a_aa - 8.0 / 3.0).abs() < 1e-12);
        assert!((cf.resident_fitness - 64.0 / 9.0).abs() < 1e-12);
        assert_eq!(cf.a_stack, 4.0);
        assert!((cf.a_ba - 4.0).abs() < 1e-12);
        assert!((cf.entrant_fitness - 8.0).abs() < 1e-12);
        let same = cournot_closed_form(&CournotSpec { r_hat: 1.0, ..SPEC }).unwrap();
        assert!((same.a_ba - same.a_aa).abs() < 1e-12);
        assert!((same.entrant_fitness - same.resident_fitness).abs() < 1e-12);
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(cournot_closed_form(&CournotSpec { beta: 1.0, ..SPEC }).is_err());
        assert!(cournot_closed_form(&CournotSpec { r_hat: 0.0, ..SPEC }).is_err());
    }

    #[test]
    fn entrant_fitness_unimodal_at_stackelberg() {
        let cf = cournot_closed_form(&SPEC).unwrap();
        let grid: Vec<f64> = (0..=800).map(|i| i as f64 * 0.01).collect();
        let vals: Vec<f64> = grid.iter().map(|&a| entrant_fitness_at(&SPEC, a)).collect();
        let peak = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((grid[peak] - cf.a_stack).abs() < 1e-9);
        assert!(vals[..peak].windows(2).all(|w| w[1] > w[0]));
        assert!(vals[peak..].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn tiny_noise_still_gives_valid_rows() {
        let d = build_cournot_discrete(&SPEC, &uniform_grid(9, 8.0), 1, 1e-6).unwrap();
        assert_eq!(d.lattice.len, 2);
        d.env.validate().unwrap();
    }
}
