//! Eigenpairs of the pencil `A x = lambda B x` near a shift, with left
//! eigenvectors for the dual problem.
//!
//! The spectral transform is `(A - s B)^{-1} B` (and its adjoint
//! `(A - s B)^{-H} B^H` for left vectors), one sparse LU serving both. The
//! transformed operator is reduced by Arnoldi with Krylov-Schur style
//! restarts on orthonormalized Ritz bases.

use std::cmp::Ordering;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::Mat;
use num_complex::Complex64;

use crate::assembly::PencilMatrices;
use crate::error::{Error, Result};
use crate::space::{FeFunction, FeSpace};
use crate::sparse::{complex_sum, CsrMatrix};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Relative backward error accepted by default.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Bound on `||A x - lambda B x|| / ((||A|| + |lambda| ||B||) ||x||)`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov dimension; `None` uses `max(20, 4 count)`.
    pub krylov_dim: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: DEFAULT_TOL,
            max_restarts: 300,
            krylov_dim: None,
        }
    }
}

/// An eigenvalue with its (unnormalized) eigenvector.
///
/// For right pairs `A x = lambda B x`; for left pairs `lambda` is the dual
/// eigenvalue `lambda*` with `A^H y = lambda* B^H y`.
#[derive(Debug, Clone)]
pub struct RawPair {
    pub lambda: C,
    pub vector: Vec<C>,
    pub backward_error: f64,
}

fn norm(x: &[C]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(x: &[C], y: &[C]) -> C {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn inf_norm(m: &CsrMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn start_vector(n: usize) -> Vec<C> {
    let v: Vec<C> = (0..n)
        .map(|i| {
            let t = i as f64;
            C::new(1.0 + 0.5 * (0.73 * t).sin(), 0.25 * (1.31 * t).cos())
        })
        .collect();
    let s = norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

/// Deterministic vector used after an Arnoldi breakdown.
fn fresh_vector(n: usize, seed: usize) -> Vec<C> {
    (0..n)
        .map(|i| {
            let t = (i * 7919 + seed * 104_729) as f64;
            C::new((0.618 * t).sin(), (0.414 * t).cos())
        })
        .collect()
}

/// Orthogonalizes `w` against `basis` twice (classical Gram-Schmidt with
/// reorthogonalization), returning the accumulated coefficients.
fn orthogonalize(basis: &[Vec<C>], w: &mut [C]) -> Vec<C> {
    let mut h = vec![ZERO; basis.len()];
    for _ in 0..2 {
        let c: Vec<C> = basis.iter().map(|v| dot(v, w)).collect();
        for (v, ci) in basis.iter().zip(&c) {
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= ci * vi;
            }
        }
        for (hi, ci) in h.iter_mut().zip(&c) {
            *hi += ci;
        }
    }
    h
}

/// Eigenpairs of largest modulus of the linear operator `op` on `C^n`.
/// `check(theta, x)` returns the backward error of the underlying pencil
/// pair for Ritz value `theta` and Ritz vector `x`. Only the leading
/// `required` of the `count` pairs have to meet the tolerance.
fn krylov_schur(
    n: usize,
    op: impl Fn(&[C]) -> Vec<C>,
    count: usize,
    required: usize,
    settings: &SolverSettings,
    check: impl Fn(C, &[C]) -> f64,
) -> Result<Vec<(C, Vec<C>, f64)>> {
    if count == 0 || count > n {
        return Err(Error::Config(format!(
            "cannot compute {count} eigenpairs of a pencil of size {n}"
        )));
    }
    let m = settings.krylov_dim.unwrap_or(20.max(4 * count)).max(count + 1).min(n);
    let keep_default = (count + (m - count) / 2).min(m - 1).max(count.min(m - 1));

    let mut basis: Vec<Vec<C>> = vec![start_vector(n)];
    let mut h = Mat::<C>::zeros(m + 1, m);
    let mut k = 0;
    let mut seed = 1;
    let mut last_errors = Vec::new();
    for _restart in 0..=settings.max_restarts {
        for j in k..m {
            let mut w = op(&basis[j]);
            let coeffs = orthogonalize(&basis[..=j], &mut w);
            for (i, c) in coeffs.iter().enumerate() {
                h[(i, j)] = *c;
            }
            let beta = norm(&w);
            let scale = coeffs.iter().map(|c| c.norm()).fold(beta, f64::max);
            if beta > 1e-12 * scale {
                h[(j + 1, j)] = C::new(beta, 0.0);
                basis.push(w.into_iter().map(|x| x / beta).collect());
            } else {
                h[(j + 1, j)] = ZERO;
                let next = if basis.len() < n {
                    let mut v = fresh_vector(n, seed);
                    seed += 1;
                    orthogonalize(&basis, &mut v);
                    let s = norm(&v);
                    v.into_iter().map(|x| x / s).collect()
                } else {
                    vec![ZERO; n]
                };
                basis.push(next);
            }
        }

        let hm = h.submatrix(0, 0, m, m).to_owned();
        let evd = hm.eigen().map_err(|_| Error::NoConvergence {
            restarts: 0,
            residuals: vec![],
        })?;
        let values: Vec<C> = evd.S().column_vector().iter().copied().collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .norm()
                .partial_cmp(&values[a].norm())
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let ritz_vec = |i: usize| -> Vec<C> {
            let s = evd.U().col(i);
            let mut x = vec![ZERO; n];
            for (l, v) in basis[..m].iter().enumerate() {
                let c = s[l];
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi += c * vi;
                }
            }
            x
        };
        let mut found = Vec::with_capacity(count);
        last_errors.clear();
        for &i in &order[..count] {
            let x = ritz_vec(i);
            let e = check(values[i], &x);
            last_errors.push(e);
            found.push((values[i], x, e));
        }
        if last_errors[..required.min(count)].iter().all(|&e| e <= settings.tol) {
            return Ok(found);
        }

        // restart on an orthonormal basis of the leading Ritz vectors
        let mut q: Vec<Vec<C>> = Vec::new();
        for &i in &order[..keep_default] {
            let mut s: Vec<C> = evd.U().col(i).iter().copied().collect();
            let before = norm(&s);
            orthogonalize(&q, &mut s);
            let after = norm(&s);
            if after > 1e-8 * before {
                q.push(s.into_iter().map(|x| x / after).collect());
            }
        }
        let p = q.len();
        let mut new_basis: Vec<Vec<C>> = Vec::with_capacity(m + 1);
        for qc in &q {
            let mut v = vec![ZERO; n];
            for (l, b) in basis[..m].iter().enumerate() {
                let c = qc[l];
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi += c * bi;
                }
            }
            new_basis.push(v);
        }
        new_basis.push(basis[m].clone());
        let mut new_h = Mat::<C>::zeros(m + 1, m);
        for a in 0..p {
            for b in 0..p {
                let mut s = ZERO;
                for r in 0..m {
                    let mut t = ZERO;
                    for c in 0..m {
                        t += hm[(r, c)] * q[b][c];
                    }
                    s += q[a][r].conj() * t;
                }
                new_h[(a, b)] = s;
            }
            let mut s = ZERO;
            for c in 0..m {
                s += h[(m, c)] * q[a][c];
            }
            new_h[(p, a)] = s;
        }
        basis = new_basis;
        h = new_h;
        k = p;
    }
    Err(Error::NoConvergence {
        restarts: settings.max_restarts,
        residuals: last_errors,
    })
}

/// Factorization of `A - s B` with the operators it induces.
///
/// Everything runs on the equilibrated pencil `(D A D, D B D)` with
/// `D = diag(A)^(-1/2)`; locally refined meshes spread the diagonal of `A`
/// over many orders of magnitude and an unscaled norm would be dominated by
/// the smallest elements. Eigenvalues are unchanged and eigenvectors are
/// mapped back by `x = D x_hat` (left ones as well).
///
/// For the transmission pencil the `omega` block is eliminated with the mass
/// matrix, so only the `n_free x n_free` complement `a_h - s K + s^2 M_b` is
/// factorized; other pencils are factorized whole.
pub struct ShiftInvert<'a> {
    pencil: &'a PencilMatrices,
    shift: C,
    factors: Factors,
    scaling: Vec<f64>,
    a_hat: CsrMatrix,
    b_hat: CsrMatrix,
    norm_a: f64,
    norm_b: f64,
}

enum Factors {
    Full(Lu<usize, C>),
    Reduced {
        schur: Lu<usize, C>,
        mass: Lu<usize, f64>,
        /// Scaled `B` blocks `(1, 2)` and `(2, 1)`.
        b12: CsrMatrix,
        b21: CsrMatrix,
    },
}

/// `A = diag(A11, A22)`, `B22 = 0` and `B21 = A22`.
fn has_transmission_structure(pencil: &PencilMatrices) -> bool {
    let nf = pencil.layout.n_free;
    let a = &pencil.a;
    let b = &pencil.b;
    let a_off = (0..2 * nf).all(|i| a.row(i).all(|(j, v)| v == 0.0 || (i < nf) == (j < nf)));
    let b22 = (nf..2 * nf).all(|i| b.row(i).all(|(j, v)| v == 0.0 || j < nf));
    a_off && b22 && a.block(nf, nf, nf, nf) == b.block(nf, 0, nf, nf)
}

impl std::fmt::Debug for ShiftInvert<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftInvert").field("shift", &self.shift).finish()
    }
}

fn equilibration(a: &CsrMatrix) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            let d = a.get(i, i).abs();
            if d > 0.0 && d.is_finite() {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

fn pencil_residual(a: &CsrMatrix, b: &CsrMatrix, lambda: C, x: &[C]) -> f64 {
    let ax = a.matvec(x);
    let bx = b.matvec(x);
    let r: Vec<C> = ax.iter().zip(&bx).map(|(a, b)| a - lambda * b).collect();
    norm(&r) / norm(x)
}

fn pencil_left_residual(a: &CsrMatrix, b: &CsrMatrix, mu: C, y: &[C]) -> f64 {
    let ay = a.transpose_matvec(y);
    let by = b.transpose_matvec(y);
    let r: Vec<C> = ay.iter().zip(&by).map(|(a, b)| a - mu * b).collect();
    norm(&r) / norm(y)
}

impl<'a> ShiftInvert<'a> {
    pub fn new(pencil: &'a PencilMatrices, shift: C) -> Result<Self> {
        let fail = || Error::Factorization { shift };
        let scaling = equilibration(&pencil.a);
        let a_hat = pencil.a.scale_symmetric(&scaling);
        let b_hat = pencil.b.scale_symmetric(&scaling);
        let nf = pencil.layout.n_free;
        let factors = if has_transmission_structure(pencil) {
            let a11 = a_hat.block(0, 0, nf, nf);
            let b11 = b_hat.block(0, 0, nf, nf);
            let b12 = b_hat.block(0, nf, nf, nf);
            let b21 = b_hat.block(nf, 0, nf, nf);
            // B12 A22^-1 B21 = D_u B12 D_u when B21 = A22
            let du = &scaling[..nf];
            let b12_u = pencil.b.block(0, nf, nf, nf).scale(du, du);
            let schur = complex_sum(&[(C::new(1.0, 0.0), &a11), (-shift, &b11), (-shift * shift, &b12_u)])?
                .sp_lu()
                .map_err(|_| fail())?;
            let mass = a_hat.block(nf, nf, nf, nf).to_faer()?.sp_lu().map_err(|_| fail())?;
            Factors::Reduced { schur, mass, b12, b21 }
        } else {
            Factors::Full(a_hat.complex_combination(-shift, &b_hat)?.sp_lu().map_err(|_| fail())?)
        };
        let norm_a = inf_norm(&a_hat);
        let norm_b = inf_norm(&b_hat);
        let this = ShiftInvert {
            pencil,
            shift,
            factors,
            scaling,
            a_hat,
            b_hat,
            norm_a,
            norm_b,
        };
        // probe solve: a singular factorization shows up as non-finite or
        // inaccurate output
        let n = pencil.layout.total();
        let r = start_vector(n);
        let z = this.solve(&r);
        if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(fail());
        }
        let az = this.a_hat.matvec(&z);
        let bz = this.b_hat.matvec(&z);
        let res: Vec<C> = az.iter().zip(&bz).zip(&r).map(|((a, b), r)| a - shift * b - r).collect();
        let scale = (this.norm_a + shift.norm() * this.norm_b) * norm(&z);
        if norm(&res) > 1e-6 * scale.max(norm(&r)) {
            return Err(fail());
        }
        Ok(this)
    }

    /// Factorizes at `shift`, retrying at `1.05^k shift` for `k = 1..=5`.
    pub fn with_retries(pencil: &'a PencilMatrices, shift: C) -> Result<Self> {
        let mut s = shift;
        let mut last = None;
        for _ in 0..=5 {
            match Self::new(pencil, s) {
                Ok(f) => return Ok(f),
                Err(e) => last = Some(e),
            }
            s = if s.norm() > 0.0 { s * 1.05 } else { C::new(1e-3, 0.0) };
        }
        Err(last.unwrap())
    }

    pub fn shift(&self) -> C {
        self.shift
    }

    pub fn pencil(&self) -> &PencilMatrices {
        self.pencil
    }

    /// `(A - s B)^-1 r` on the scaled pencil, or `(A - s B)^-H r`.
    fn apply_inverse(&self, rhs: &[C], adjoint: bool) -> Vec<C> {
        let dense_solve = |lu: &Lu<usize, C>, rhs: &[C]| -> Vec<C> {
            let mut x = Mat::<C>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
            if adjoint {
                lu.solve_adjoint_in_place(x.as_mut());
            } else {
                lu.solve_in_place(x.as_mut());
            }
            x.col(0).iter().copied().collect()
        };
        let Factors::Reduced { schur, mass, b12, b21 } = &self.factors else {
            let Factors::Full(lu) = &self.factors else { unreachable!() };
            return dense_solve(lu, rhs);
        };
        let solve_mass = |rhs: &[C]| -> Vec<C> {
            let mut x = Mat::<f64>::from_fn(rhs.len(), 2, |i, j| if j == 0 { rhs[i].re } else { rhs[i].im });
            mass.solve_in_place(x.as_mut());
            (0..rhs.len()).map(|i| C::new(x[(i, 0)], x[(i, 1)])).collect()
        };
        let nf = self.pencil.layout.n_free;
        let (r1, r2) = rhs.split_at(nf);
        let w = solve_mass(r2);
        // with s -> conj(s) and B -> B^T for the adjoint
        let (s, t) = if adjoint {
            (self.shift.conj(), b21.transpose_matvec(&w))
        } else {
            (self.shift, b12.matvec(&w))
        };
        let rhs1: Vec<C> = r1.iter().zip(&t).map(|(r, t)| r + s * t).collect();
        let z1 = dense_solve(schur, &rhs1);
        let t = if adjoint { b12.transpose_matvec(&z1) } else { b21.matvec(&z1) };
        let z2 = solve_mass(&r2.iter().zip(&t).map(|(r, t)| r + s * t).collect::<Vec<_>>());
        [z1, z2].concat()
    }

    fn solve(&self, rhs: &[C]) -> Vec<C> {
        self.apply_inverse(rhs, false)
    }

    fn solve_adjoint(&self, rhs: &[C]) -> Vec<C> {
        self.apply_inverse(rhs, true)
    }

    fn scaled(&self, x: &[C]) -> Vec<C> {
        x.iter().zip(&self.scaling).map(|(v, d)| v / *d).collect()
    }

    fn unscaled(&self, x: &[C]) -> Vec<C> {
        x.iter().zip(&self.scaling).map(|(v, d)| v * *d).collect()
    }

    fn scaled_backward_error(&self, lambda: C, x_hat: &[C]) -> f64 {
        pencil_residual(&self.a_hat, &self.b_hat, lambda, x_hat) / (self.norm_a + lambda.norm() * self.norm_b)
    }

    fn scaled_left_backward_error(&self, mu: C, y_hat: &[C]) -> f64 {
        pencil_left_residual(&self.a_hat, &self.b_hat, mu, y_hat) / (self.norm_a + mu.norm() * self.norm_b)
    }

    /// `||A x - lambda B x|| / ((||A|| + |lambda| ||B||) ||x||)` measured on
    /// the equilibrated pencil.
    pub fn backward_error(&self, lambda: C, x: &[C]) -> f64 {
        self.scaled_backward_error(lambda, &self.scaled(x))
    }

    /// Same for the adjoint pencil `A^H y = mu B^H y`.
    pub fn left_backward_error(&self, mu: C, y: &[C]) -> f64 {
        self.scaled_left_backward_error(mu, &self.scaled(y))
    }

    /// The `count` eigenpairs closest to the shift.
    pub fn right_pairs(&self, count: usize, settings: &SolverSettings) -> Result<Vec<RawPair>> {
        let n = self.pencil.layout.total();
        let s = self.shift;
        let to_lambda = move |theta: C| s + 1.0 / theta;
        let op = |x: &[C]| self.solve(&self.b_hat.matvec(x));
        let check = |theta: C, x: &[C]| self.scaled_backward_error(to_lambda(theta), x);
        let found = krylov_schur(n, op, count, count, settings, check)?;
        Ok(found
            .into_iter()
            .map(|(theta, vector, e)| {
                let (vector, e) = purify(op, check, theta, vector, e, settings.tol);
                RawPair {
                    lambda: to_lambda(theta),
                    vector: self.unscaled(&vector),
                    backward_error: e,
                }
            })
            .collect())
    }

    /// The `count` left eigenpairs closest to the shift; `lambda` holds the
    /// dual eigenvalue `lambda* = conj(lambda)`.
    pub fn left_pairs(&self, count: usize, settings: &SolverSettings) -> Result<Vec<RawPair>> {
        self.left_pairs_with(count, count, settings)
    }

    fn left_pairs_with(&self, count: usize, required: usize, settings: &SolverSettings) -> Result<Vec<RawPair>> {
        let n = self.pencil.layout.total();
        let s = self.shift.conj();
        let to_mu = move |theta: C| s + 1.0 / theta;
        let op = |y: &[C]| self.solve_adjoint(&self.b_hat.transpose_matvec(y));
        let check = |theta: C, y: &[C]| self.scaled_left_backward_error(to_mu(theta), y);
        let found = krylov_schur(n, op, count, required, settings, check)?;
        Ok(found
            .into_iter()
            .map(|(theta, vector, e)| {
                let (vector, e) = purify(op, check, theta, vector, e, settings.tol);
                RawPair {
                    lambda: to_mu(theta),
                    vector: self.unscaled(&vector),
                    backward_error: e,
                }
            })
            .collect())
    }

    /// Right pairs matched with their left partners.
    pub fn two_sided(&self, count: usize, settings: &SolverSettings) -> Result<Vec<(RawPair, RawPair)>> {
        let right = self.right_pairs(count, settings)?;
        let n = self.pencil.layout.total();
        // two extra left pairs only help to separate near ties
        let left = self.left_pairs_with((count + 2).min(n), count, settings)?;
        Ok(right
            .into_iter()
            .map(|r| {
                let y = pick_left(self.pencil, &r, &left);
                (r, y)
            })
            .collect())
    }
}

/// Two more applications of the shift-inverted operator to a converged Ritz
/// vector. The second block of the result is then tied to the first through
/// an exact mass solve, which the Krylov residual alone does not enforce when
/// the two blocks differ widely in scale. A step is kept unless it makes the
/// backward error worse than both the tolerance and the previous vector.
fn purify(
    op: impl Fn(&[C]) -> Vec<C>,
    check: impl Fn(C, &[C]) -> f64,
    theta: C,
    mut x: Vec<C>,
    mut e: f64,
    tol: f64,
) -> (Vec<C>, f64) {
    for _ in 0..2 {
        let y: Vec<C> = op(&x).into_iter().map(|v| v / theta).collect();
        let ey = check(theta, &y);
        if ey > e.max(tol) {
            break;
        }
        (x, e) = (y, ey);
    }
    (x, e)
}

/// Left pair whose eigenvalue matches `conj(right.lambda)`; among near ties
/// the one with the largest normalized `|y^H B x|`.
fn pick_left(pencil: &PencilMatrices, right: &RawPair, left: &[RawPair]) -> RawPair {
    let target = right.lambda.conj();
    let dist = |p: &RawPair| (p.lambda - target).norm();
    let best = left.iter().map(dist).fold(f64::INFINITY, f64::min);
    let window = best.max(1e-6 * target.norm().max(1.0));
    let bx = pencil.b.matvec(&right.vector);
    let overlap = |p: &RawPair| dot(&p.vector, &bx).norm() / (norm(&p.vector) * norm(&bx));
    left.iter()
        .filter(|p| dist(p) <= window)
        .max_by(|a, b| overlap(a).partial_cmp(&overlap(b)).unwrap_or(Ordering::Equal))
        .cloned()
        .expect("at least one left pair")
}

/// `||A x - lambda B x|| / ||x||`
pub fn residual(pencil: &PencilMatrices, lambda: C, x: &[C]) -> f64 {
    pencil_residual(&pencil.a, &pencil.b, lambda, x)
}

/// `||A^H y - mu B^H y|| / ||y||`
pub fn left_residual(pencil: &PencilMatrices, mu: C, y: &[C]) -> f64 {
    pencil_left_residual(&pencil.a, &pencil.b, mu, y)
}

/// The `count` eigenvalues of the pencil closest to `target_shift` with
/// right eigenvectors, accurate to backward error `tol`.
pub fn solve_pencil(pencil: &PencilMatrices, target_shift: C, count: usize, tol: f64) -> Result<Vec<(C, Vec<C>)>> {
    let settings = SolverSettings {
        tol,
        ..Default::default()
    };
    let f = ShiftInvert::with_retries(pencil, target_shift)?;
    Ok(f.right_pairs(count, &settings)?
        .into_iter()
        .map(|p| (p.lambda, p.vector))
        .collect())
}

/// Left eigenvector `y` with `A^H y = conj(lambda) B^H y` for a converged
/// right pair `(lambda, right)`.
pub fn solve_dual(pencil: &PencilMatrices, lambda: C, right: &[C], tol: f64) -> Result<Vec<C>> {
    let settings = SolverSettings {
        tol,
        ..Default::default()
    };
    let offset = 1e-3 * lambda.norm().max(1.0) * C::from_polar(1.0, std::f64::consts::FRAC_PI_4);
    let f = ShiftInvert::with_retries(pencil, lambda + offset)?;
    let n = pencil.layout.total();
    let left = f.left_pairs(3.min(n), &settings)?;
    let r = RawPair {
        lambda,
        vector: right.to_vec(),
        backward_error: 0.0,
    };
    Ok(pick_left(pencil, &r, &left).vector)
}

/// Normalized primal and dual eigenpair.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: C,
    /// Principal square root of `lambda`.
    pub k: C,
    pub u: FeFunction,
    pub omega: FeFunction,
    /// Dual eigenvalue, `conj(lambda)` up to solver accuracy.
    pub lambda_star: C,
    pub u_star: FeFunction,
    pub omega_star: FeFunction,
    /// `||A x - lambda B x|| / ||x||` for the normalized primal vector.
    pub residual: f64,
    pub backward_error: f64,
    pub dual_backward_error: f64,
    /// `B((u, omega), (u*, omega*)) = y^H B x`
    pub b_value: C,
}

impl EigenPair {
    pub fn primal_vector(&self) -> Vec<C> {
        [self.u.coefficients(), self.omega.coefficients()].concat()
    }

    pub fn dual_vector(&self) -> Vec<C> {
        [self.u_star.coefficients(), self.omega_star.coefficients()].concat()
    }
}

pub fn k_of_lambda(lambda: C) -> C {
    let k = lambda.sqrt();
    if k.re < 0.0 {
        -k
    } else {
        k
    }
}

/// Sort key: `Re k` ascending, then `Im k` descending.
pub fn compare_k(a: C, b: C) -> Ordering {
    a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im))
}

fn scale(x: &[C], s: C) -> Vec<C> {
    x.iter().map(|v| v * s).collect()
}

/// Scales `x` to `||x||_h = 1` with its largest `u` entry real positive,
/// and the dual vector per the `A_h`-projection normalization.
pub fn normalize_and_sort(raw: Vec<(RawPair, RawPair)>, pencil: &PencilMatrices, space: &Arc<FeSpace>) -> Result<Vec<EigenPair>> {
    let nf = pencil.layout.n_free;
    let mut out = Vec::with_capacity(raw.len());
    for (right, left) in raw {
        let x = &right.vector;
        let pivot = x[..nf]
            .iter()
            .copied()
            .fold(ZERO, |best, v| if v.norm() > best.norm() { v } else { best });
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            C::new(1.0, 0.0)
        };
        let hn = pencil.norm_h(x);
        let x = scale(x, phase / hn);

        let y = &left.vector;
        let ax = pencil.a.matvec(&x);
        let proj = dot(y, &ax);
        let yhn = pencil.norm_h(y);
        let dual_phase = if proj.norm() > 0.0 {
            proj / proj.norm()
        } else {
            C::new(1.0, 0.0)
        };
        let y = scale(y, dual_phase / yhn);

        let b_value = dot(&y, &pencil.b.matvec(&x));
        let residual = residual(pencil, right.lambda, &x);
        out.push(EigenPair {
            lambda: right.lambda,
            k: k_of_lambda(right.lambda),
            u: FeFunction::new(Arc::clone(space), x[..nf].to_vec())?,
            omega: FeFunction::new(Arc::clone(space), x[nf..].to_vec())?,
            lambda_star: left.lambda,
            u_star: FeFunction::new(Arc::clone(space), y[..nf].to_vec())?,
            omega_star: FeFunction::new(Arc::clone(space), y[nf..].to_vec())?,
            residual,
            backward_error: right.backward_error,
            dual_backward_error: left.backward_error,
            b_value,
        });
    }
    let keys = sort_keys(&out.iter().map(|e| e.k).collect::<Vec<_>>());
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&i, &j| compare_k(keys[i], keys[j]));
    let mut slots: Vec<Option<EigenPair>> = out.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().unwrap()).collect())
}

/// `ks` with each approximate conjugate pair given a common real part, so
/// that roundoff in `Re k` cannot swap the two members.
pub fn sort_keys(ks: &[C]) -> Vec<C> {
    let mut keys = ks.to_vec();
    for i in 0..ks.len() {
        for j in i + 1..ks.len() {
            let tol = 1e-8 * ks[i].norm().max(ks[j].norm());
            if ks[i].im != 0.0 && (ks[i] - ks[j].conj()).norm() <= tol {
                let re = ks[i].re.min(ks[j].re);
                keys[i].re = re;
                keys[j].re = re;
            }
        }
    }
    keys
}

/// All finite eigenvalues of the pencil by a dense generalized solve.
pub fn dense_eigenvalues(pencil: &PencilMatrices) -> Result<Vec<C>> {
    // the complex QZ path; the real one trips an index underflow in faer
    let a = pencil.a.to_dense();
    let b = pencil.b.to_dense();
    let a = Mat::<C>::from_fn(a.nrows(), a.ncols(), |i, j| C::new(a[(i, j)], 0.0));
    let b = Mat::<C>::from_fn(b.nrows(), b.ncols(), |i, j| C::new(b[(i, j)], 0.0));
    let g = a.generalized_eigen(&b).map_err(|_| Error::NoConvergence {
        restarts: 0,
        residuals: vec![],
    })?;
    let sa = g.S_a().column_vector();
    let sb = g.S_b().column_vector();
    Ok(sa
        .iter()
        .zip(sb.iter())
        .filter(|(_, b)| b.norm() > 1e-300)
        .map(|(a, b)| a / b)
        .filter(|l| l.re.is_finite() && l.im.is_finite())
        .collect())
}
