use rayon::prelude::*;

use crate::{Error, Result};

/// Square operator `y = A x`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Row-major dense square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidArgument(format!("{} entries for a {n}×{n} matrix", data.len())));
        }
        Ok(DenseMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut()
            .zip(self.data.par_chunks(self.n))
            .for_each(|(yi, row)| *yi = row.iter().zip(x).map(|(a, b)| a * b).sum());
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖b - Ax‖ / ‖b‖` from the Arnoldi recurrence.
    pub residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unrestarted GMRES from a zero initial guess, with modified Gram–Schmidt
/// and Givens rotations. Stops when the relative residual reaches `tol`.
pub fn gmres(op: &dyn LinearOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<GmresOutcome> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::InvalidArgument(format!("right-hand side length {} for dimension {n}", b.len())));
    }
    let beta = norm(b);
    if beta == 0.0 {
        return Ok(GmresOutcome { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let max_iter = max_iter.min(n).max(1);

    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / beta).collect()];
    // columns of the Hessenberg matrix, already rotated
    let mut h_cols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut residual = 1.0;
    let mut k = 0;

    while k < max_iter {
        let mut w = vec![0.0; n];
        op.apply(&basis[k], &mut w);
        let mut h = vec![0.0; k + 2];
        for (j, v) in basis.iter().enumerate() {
            let hj = dot(&w, v);
            h[j] = hj;
            w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hj * vi);
        }
        let hnext = norm(&w);
        h[k + 1] = hnext;

        for j in 0..k {
            let t = cs[j] * h[j] + sn[j] * h[j + 1];
            h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
            h[j] = t;
        }
        let r = h[k].hypot(h[k + 1]);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (h[k] / r, h[k + 1] / r) };
        h[k] = r;
        h[k + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        g.push(-s * g[k]);
        g[k] *= c;
        h.truncate(k + 1);
        h_cols.push(h);
        k += 1;

        residual = g[k].abs() / beta;
        if residual <= tol || hnext <= f64::EPSILON * beta {
            break;
        }
        basis.push(w.iter().map(|v| v / hnext).collect());
    }

    // back substitution on the k×k triangle
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= h_cols[j][i] * y[j];
        }
        y[i] = s / h_cols[i][i];
    }
    let mut x = vec![0.0; n];
    for (yj, v) in y.iter().zip(&basis) {
        x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += yj * vi);
    }

    if residual > tol {
        return Err(Error::NonConvergence { iterations: k, residual });
    }
    Ok(GmresOutcome { x, iterations: k, residual })
}
