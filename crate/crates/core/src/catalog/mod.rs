//! Builders and closed-form analyzers for the worked examples.

pub mod centipede;
pub mod cournot;
pub mod dollar;
pub mod example1;
pub mod investment;

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{input, Result};
use crate::game::{Kernel, Row};

/// Mass below this is clamped so distant rows keep full support.
const MASS_FLOOR: f64 = 1e-300;

/// Uniform grid of price points for a discretized normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceLattice {
    pub lo: f64,
    pub step: f64,
    pub len: usize,
}

impl PriceLattice {
    /// `len` points spanning `[lo_mean - 4 sd, hi_mean + 4 sd]`.
    pub fn covering(lo_mean: f64, hi_mean: f64, sd: f64, len: usize) -> Result<Self> {
        if len < 2 {
            return input("price lattice needs at least 2 points");
        }
        if !(sd > 0.0) || !(hi_mean >= lo_mean) {
            return input("price lattice needs sd > 0 and an ordered mean range");
        }
        let lo = lo_mean - 4.0 * sd;
        let hi = hi_mean + 4.0 * sd;
        Ok(PriceLattice {
            lo,
            step: (hi - lo) / (len - 1) as f64,
            len,
        })
    }

    pub fn point(&self, j: usize) -> f64 {
        self.lo + self.step * j as f64
    }

    /// Normal with mean `mu` restricted to the lattice, normalized after shifting by the largest log-mass.
    pub fn normal_row(&self, mu: f64, sd: f64) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.len)
            .map(|j| {
                let z = (self.point(j) - mu) / sd;
                -0.5 * z * z
            })
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| (x / s).max(MASS_FLOOR)).collect()
    }

    pub fn mean(&self, row: &[f64]) -> f64 {
        row.iter().enumerate().map(|(j, p)| p * self.point(j)).sum()
    }
}

/// Interns lattice rows by mean so kernels over `A x lattice` share storage.
pub struct LatticeStore {
    lattice: PriceLattice,
    sd: f64,
    rows: Vec<Row>,
    index: HashMap<i64, u32>,
}

impl LatticeStore {
    pub fn new(lattice: PriceLattice, sd: f64) -> Self {
        LatticeStore {
            lattice,
            sd,
            rows: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn intern(&mut self, mu: f64) -> u32 {
        let key = (mu * 1e9).round() as i64;
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.rows.len() as u32;
        self.rows.push(Row::new(0, self.lattice.normal_row(mu, self.sd)));
        self.index.insert(key, id);
        id
    }

    pub fn finish(self) -> Arc<Vec<Row>> {
        Arc::new(self.rows)
    }
}

/// Kernel skeleton: shared profile classes plus one row id per class.
pub struct PendingKernel {
    pub class_row: Vec<u32>,
}

pub fn finish_kernels(
    n_a: usize,
    lattice: &PriceLattice,
    class_of: &Arc<Vec<u32>>,
    pending: Vec<PendingKernel>,
    store: &Arc<Vec<Row>>,
) -> Result<Vec<Kernel>> {
    pending
        .into_iter()
        .map(|p| {
            Kernel::from_parts(
                n_a,
                n_a * lattice.len,
                lattice.len,
                class_of.clone(),
                p.class_row,
                store.clone(),
            )
        })
        .collect()
}

/// Labels `a:P` for the consequence set `A x lattice`.
pub fn lattice_labels(strategies: &[String], lattice: &PriceLattice) -> Vec<String> {
    strategies
        .iter()
        .flat_map(|s| (0..lattice.len).map(move |j| format!("{s}:{:.6}", lattice.point(j))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_normal_mean_is_exact_in_the_interior() {
        let lat = PriceLattice::covering(-5.0, 5.0, 1.0, 81).unwrap();
        for mu in [-2.2, 0.0, 1.7, 2.4] {
            let r = lat.normal_row(mu, 1.0);
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((lat.mean(&r) - mu).abs() < 1e-9, "mu {mu} mean {}", lat.mean(&r));
        }
    }

    #[test]
    fn far_rows_keep_full_support() {
        let lat = PriceLattice::covering(0.0, 100.0, 1.0, 201).unwrap();
        let r = lat.normal_row(0.0, 1.0);
        assert!(r.iter().all(|&p| p > 0.0));
    }
}
