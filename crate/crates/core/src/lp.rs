//! Small dense two-phase simplex (Bland's rule) for the feasibility and
//! separation programs. Sizes here are tiny, so no sparsity tricks.

use crate::tol;

/// maximize c.x  s.t.  a_ub x <= b_ub,  a_eq x = b_eq,  x >= 0
#[derive(Debug, Clone, Default)]
pub struct Lp {
    pub c: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    t: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let row = self.t[r].clone();
        for (i, other) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = other[c];
            if f.abs() > 0.0 {
                for (o, v) in other.iter_mut().zip(&row) {
                    *o -= f * v;
                }
            }
        }
        let f = self.obj[c];
        if f.abs() > 0.0 {
            for (o, v) in self.obj.iter_mut().zip(&row) {
                *o -= f * v;
            }
        }
        self.basis[r] = c;
    }

    /// Returns false when unbounded.
    fn run(&mut self, allowed: usize) -> bool {
        loop {
            let Some(c) = (0..allowed).find(|&j| self.obj[j] > tol::PIVOT) else {
                return true;
            };
            let rhs = self.width;
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[c] > tol::PIVOT {
                    let ratio = row[rhs] / row[c];
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    }
                }
            }
            match best {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

pub fn solve(lp: &Lp) -> LpOutcome {
    let n = lp.c.len();
    let n_ub = lp.a_ub.len();
    let m = n_ub + lp.a_eq.len();
    let width = n + n_ub + m;
    let mut t = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; width + 1];
        let (a, b) = if i < n_ub {
            (&lp.a_ub[i], lp.b_ub[i])
        } else {
            (&lp.a_eq[i - n_ub], lp.b_eq[i - n_ub])
        };
        row[..n].copy_from_slice(a);
        if i < n_ub {
            row[n + i] = 1.0;
        }
        row[width] = b;
        if b < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[n + n_ub + i] = 1.0;
        t.push(row);
    }
    let art0 = n + n_ub;
    let mut obj = vec![0.0; width + 1];
    for row in &t {
        for j in 0..art0 {
            obj[j] += row[j];
        }
        obj[width] += row[width];
    }
    let mut tab = Tableau {
        t,
        obj,
        basis: (art0..width).collect(),
        width,
    };
    tab.run(art0);
    if tab.obj[width] > 1e-9 {
        return LpOutcome::Infeasible;
    }
    // drive remaining artificials out of the basis
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= art0 {
            match (0..art0).find(|&j| tab.t[r][j].abs() > tol::PIVOT) {
                Some(c) => tab.pivot(r, c),
                None => {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    let mut obj = vec![0.0; width + 1];
    obj[..n].copy_from_slice(&lp.c);
    for (i, row) in tab.t.iter().enumerate() {
        let cb = if tab.basis[i] < n { lp.c[tab.basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..=width {
                obj[j] -= cb * row[j];
            }
        }
    }
    tab.obj = obj;
    if !tab.run(art0) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.t[i][width].max(0.0);
        }
    }
    let value = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpOutcome::Optimal { x, value }
}

/// A point of the simplex with `a x <= b`, or None.
pub fn simplex_feasible(a: &[Vec<f64>], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let lp = Lp {
        c: vec![0.0; n],
        a_ub: a.to_vec(),
        b_ub: b.to_vec(),
        a_eq: vec![vec![1.0; n]],
        b_eq: vec![1.0],
    };
    match solve(&lp) {
        LpOutcome::Optimal { mut x, .. } => {
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= s);
            Some(x)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = Lp {
            c: vec![3.0, 5.0],
            a_ub: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            b_ub: vec![4.0, 12.0, 18.0],
            ..Default::default()
        };
        match solve(&lp) {
            LpOutcome::Optimal { x, value } => {
                assert!((value - 36.0).abs() < 1e-9);
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = Lp {
            c: vec![1.0],
            a_ub: vec![vec![1.0]],
            b_ub: vec![-1.0],
            ..Default::default()
        };
        assert_eq!(solve(&lp), LpOutcome::Infeasible);
        let lp = Lp {
            c: vec![1.0, 0.0],
            a_ub: vec![vec![-1.0, 1.0]],
            b_ub: vec![0.0],
            ..Default::default()
        };
        assert_eq!(solve(&lp), LpOutcome::Unbounded);
    }

    #[test]
    fn simplex_point() {
        // mu0 - mu1 <= -0.2 on the 2-simplex
        let x = simplex_feasible(&[vec![1.0, -1.0]], &[-0.2], 2).unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!(x[0] - x[1] <= -0.2 + 1e-12);
        assert!(simplex_feasible(&[vec![1.0, 1.0]], &[0.5], 2).is_none());
    }
}
