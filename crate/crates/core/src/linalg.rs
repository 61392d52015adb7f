//! Minimal sparse symmetric linear algebra: CSR storage and a Jacobi-
//! preconditioned conjugate gradient solver. Everything is serial and
//! deterministic; identical inputs give bitwise-identical iterates.

use std::io::Write;

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Assembly goes through sorted triplets, so
/// construction is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Csr {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            out[r] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.entry(r, r)).collect()
    }

    /// `alpha * self + beta * other`, merging sparsity patterns.
    pub fn linear_combination(&self, alpha: f64, other: &Csr, beta: f64) -> Csr {
        assert_eq!(self.n, other.n);
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.n {
            let (ca, va) = self.row(r);
            for (c, v) in ca.iter().zip(va) {
                triplets.push((r, *c, alpha * v));
            }
            let (cb, vb) = other.row(r);
            for (c, v) in cb.iter().zip(vb) {
                triplets.push((r, *c, beta * v));
            }
        }
        Csr::from_triplets(self.n, triplets)
    }

    /// Entrywise check `A == A^T`.
    pub fn is_symmetric(&self) -> bool {
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if self.entry(*c, r) != *v {
                    return false;
                }
            }
        }
        true
    }

    /// Coordinate text export: one `row col value` line per stored entry.
    pub fn write_coo<W: Write>(&self, out: &mut W) -> Result<()> {
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(out, "{r} {c} {v}")?;
            }
        }
        Ok(())
    }

    /// Symmetric row/column elimination of constrained dofs. Constrained
    /// rows become identity; couplings move to the right-hand side via
    /// [`constrain_rhs`].
    pub fn constrained(&self, constrained: &[bool]) -> Csr {
        assert_eq!(constrained.len(), self.n);
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            if constrained[r] {
                triplets.push((r, r, 1.0));
                continue;
            }
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if !constrained[*c] {
                    triplets.push((r, *c, *v));
                }
            }
        }
        Csr::from_triplets(self.n, triplets)
    }
}

/// Move Dirichlet couplings of the unconstrained operator into the rhs:
/// `rhs_j -= A_{ji} g_i` for free `j`, then pin `rhs_i = g_i`.
pub fn constrain_rhs(a: &Csr, rhs: &mut [f64], values: &[Option<f64>]) {
    for r in 0..a.n() {
        if values[r].is_some() {
            continue;
        }
        let (cols, vals) = a.row(r);
        let mut adj = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            if let Some(g) = values[*c] {
                adj += v * g;
            }
        }
        rhs[r] -= adj;
    }
    for (r, v) in values.iter().enumerate() {
        if let Some(g) = v {
            rhs[r] = *g;
        }
    }
}

pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive
/// definite systems. Converges when `||r|| <= tol * ||b||`.
pub fn pcg(a: &Csr, b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Result<PcgOutcome> {
    let n = a.n();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(PcgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diag()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    a.matvec_into(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for iter in 0..max_iter {
        let rnorm = norm2(&r);
        if rnorm <= tol * bnorm {
            return Ok(PcgOutcome {
                x,
                iterations: iter,
                relative_residual: rnorm / bnorm,
            });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverDiverged {
                iters: iter,
                residual: rnorm / bnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = norm2(&r);
    if rnorm <= tol * bnorm {
        Ok(PcgOutcome {
            x,
            iterations: max_iter,
            relative_residual: rnorm / bnorm,
        })
    } else {
        Err(Error::SolverDiverged {
            iters: max_iter,
            residual: rnorm / bnorm,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn triplets_accumulate_duplicates() {
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 0.5)]);
        assert_eq!(a.entry(0, 0), 3.0);
        assert_eq!(a.entry(1, 0), 0.5);
        assert_eq!(a.entry(1, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n = 50;
        let a = laplacian_1d(n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x_true);
        let out = pcg(&a, &b, &vec![0.0; n], 1e-12, 1000).unwrap();
        for i in 0..n {
            assert!((out.x[i] - x_true[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn pcg_zero_rhs_returns_zero() {
        let a = laplacian_1d(5);
        let out = pcg(&a, &[0.0; 5], &[1.0; 5], 1e-12, 10).unwrap();
        assert_eq!(out.x, vec![0.0; 5]);
    }

    #[test]
    fn constraint_elimination_matches_dense_solve() {
        let n = 8;
        let a = laplacian_1d(n);
        // pin x_0 = 1, x_7 = 3, zero interior forcing
        let mut values = vec![None; n];
        values[0] = Some(1.0);
        values[n - 1] = Some(3.0);
        let mask: Vec<bool> = values.iter().map(|v| v.is_some()).collect();
        let ac = a.constrained(&mask);
        assert!(ac.is_symmetric());
        let mut rhs = vec![0.0; n];
        constrain_rhs(&a, &mut rhs, &values);
        let out = pcg(&ac, &rhs, &vec![0.0; n], 1e-13, 500).unwrap();
        // harmonic interpolation is linear between the pinned ends
        for i in 0..n {
            let want = 1.0 + 2.0 * i as f64 / (n - 1) as f64;
            assert!((out.x[i] - want).abs() < 1e-10, "i={i}: {} vs {want}", out.x[i]);
        }
    }

    #[test]
    fn coo_export_lists_entries() {
        let a = Csr::from_triplets(2, vec![(0, 1, 2.5), (1, 1, -1.0)]);
        let mut buf = Vec::new();
        a.write_coo(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1 2.5\n1 1 -1\n");
    }
}
