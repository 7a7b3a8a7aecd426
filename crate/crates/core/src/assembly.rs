//! Sparse matrices of the C0 interior penalty pencil `A x = lambda B x` and
//! the mesh-dependent norms.
//!
//! Unknowns are ordered as the free DOFs of `u` followed by the free DOFs
//! of `omega`. Entry `(i, j)` of a matrix is the form evaluated at trial
//! function `j` and test function `i`.

use rayon::prelude::*;

use crate::coefficients::ProblemCoefficients;
use crate::error::Result;
use crate::mesh::Face;
use crate::quadrature;
use crate::space::{FeFunction, FeSpace, Jet, TraceQuantity};
use crate::sparse::CsrMatrix;

/// Block layout of the product space: `u` then `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLayout {
    pub n_free: usize,
}

impl DofLayout {
    pub fn total(&self) -> usize {
        2 * self.n_free
    }

    pub fn u(&self, i: usize) -> usize {
        i
    }

    pub fn omega(&self, i: usize) -> usize {
        self.n_free + i
    }
}

#[derive(Debug, Clone)]
pub struct PencilMatrices {
    /// `[[a_h, 0], [0, M]]`
    pub a: CsrMatrix,
    /// `[[K, -M_b], [M, 0]]`
    pub b: CsrMatrix,
    /// Mass matrix of `S^h`.
    pub mass: CsrMatrix,
    /// Gram matrix of the `u` part of the squared norm `||.||_h`.
    pub norm_gram: CsrMatrix,
    pub layout: DofLayout,
}

impl PencilMatrices {
    /// `||(u, omega)||_h` from stacked free coefficients.
    pub fn norm_h(&self, x: &[num_complex::Complex64]) -> f64 {
        let n = self.layout.n_free;
        let (u, w) = x.split_at(n);
        (self.norm_gram.form(u, u).re + self.mass.form(w, w).re).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Include the penalty term on boundary faces.
    pub boundary_penalty: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { boundary_penalty: true }
    }
}

pub fn assemble_pencil(space: &FeSpace, coeffs: &ProblemCoefficients) -> Result<PencilMatrices> {
    assemble_pencil_with(space, coeffs, AssemblyOptions::default())
}

struct Local {
    dofs: Vec<Option<usize>>,
    // row-major nloc x nloc blocks
    a: Vec<f64>,
    mass: Vec<f64>,
    stiff_b: Vec<f64>,
    mass_b: Vec<f64>,
    gram: Vec<f64>,
}

fn h2_inner(p: &Jet<f64>, q: &Jet<f64>) -> f64 {
    p.value * q.value + p.d1[0] * q.d1[0] + p.d1[1] * q.d1[1] + p.d2[0] * q.d2[0] + 2.0 * p.d2[1] * q.d2[1] + p.d2[2] * q.d2[2]
}

fn element_local(space: &FeSpace, coeffs: &ProblemCoefficients, tab: &crate::space::TabulatedRule, t: usize) -> Local {
    let n = space.num_local_dofs();
    let mu = coeffs.mu;
    let eb = space.element_basis(t, tab);
    let mut loc = Local {
        dofs: space.element_free_dofs(t),
        a: vec![0.0; n * n],
        mass: vec![0.0; n * n],
        stiff_b: vec![0.0; n * n],
        mass_b: vec![0.0; n * n],
        gram: vec![0.0; n * n],
    };
    for q in 0..eb.points.len() {
        let w = eb.weights[q];
        let cv = coeffs.at(eb.points[q]);
        let phi = &eb.jets[q];
        for i in 0..n {
            let pi = &phi[i];
            let lap_i = pi.laplacian();
            for j in 0..n {
                let pj = &phi[j];
                let k = i * n + j;
                let hess = pj.d2[0] * pi.d2[0] + 2.0 * pj.d2[1] * pi.d2[1] + pj.d2[2] * pi.d2[2];
                loc.a[k] += w * (cv.a * pj.laplacian() * lap_i + mu * hess);
                loc.mass[k] += w * pj.value * pi.value;
                loc.mass_b[k] += w * cv.b * pj.value * pi.value;
                // grad(c u) . grad v + grad u . grad(b v)
                let gcu = [
                    cv.c * pj.d1[0] + pj.value * cv.grad_c[0],
                    cv.c * pj.d1[1] + pj.value * cv.grad_c[1],
                ];
                let gbv = [
                    cv.b * pi.d1[0] + pi.value * cv.grad_b[0],
                    cv.b * pi.d1[1] + pi.value * cv.grad_b[1],
                ];
                loc.stiff_b[k] += w * (gcu[0] * pi.d1[0] + gcu[1] * pi.d1[1] + pj.d1[0] * gbv[0] + pj.d1[1] * gbv[1]);
                loc.gram[k] += w * h2_inner(pj, pi);
            }
        }
    }
    loc
}

struct FaceLocal {
    dofs: Vec<Option<usize>>,
    a: Vec<f64>,
    gram: Vec<f64>,
}

/// Per-side normal-derivative jump weights and averaged fluxes of every
/// local basis function of the face patch.
fn face_local(space: &FeSpace, coeffs: &ProblemCoefficients, face: &Face, options: AssemblyOptions) -> FaceLocal {
    let order = quadrature::face_points_for_degree(space.degree());
    let fb = space.face_basis(face, order);
    let mut dofs = space.element_free_dofs(face.minus);
    if let Some(p) = face.plus {
        dofs.extend(space.element_free_dofs(p));
    }
    let n = dofs.len();
    let nloc = space.num_local_dofs();
    let (sigma, mu) = (coeffs.sigma, coeffs.mu);
    let len = face.length;
    let gamma = face.normal;
    let penalty = if face.is_interior() || options.boundary_penalty {
        sigma / len
    } else {
        0.0
    };
    let mut a = vec![0.0; n * n];
    let mut gram = vec![0.0; n * n];
    let mut jump = vec![0.0; n];
    let mut flux = vec![0.0; n];
    for (q, (p, w)) in fb.points.iter().enumerate() {
        let cv = coeffs.at(*p);
        let side = |jets: &[Jet<f64>], sign: f64, avg: f64, jump: &mut [f64], flux: &mut [f64]| {
            for (k, j) in jets.iter().enumerate() {
                jump[k] = sign * j.normal_derivative(gamma);
                flux[k] = avg * (cv.a * j.laplacian() + mu * j.second_normal_derivative(gamma));
            }
        };
        match &fb.plus {
            Some(plus) => {
                side(&fb.minus[q], -1.0, 0.5, &mut jump[..nloc], &mut flux[..nloc]);
                side(&plus[q], 1.0, 0.5, &mut jump[nloc..], &mut flux[nloc..]);
            }
            None => side(&fb.minus[q], -1.0, 1.0, &mut jump, &mut flux),
        }
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                a[k] += w * (flux[j] * jump[i] + flux[i] * jump[j] + penalty * jump[j] * jump[i]);
                gram[k] += w * sigma / len * jump[j] * jump[i];
            }
        }
    }
    FaceLocal { dofs, a, gram }
}

fn scatter(out: &mut Vec<(usize, usize, f64)>, dofs: &[Option<usize>], block: &[f64], row_shift: usize, col_shift: usize) {
    let n = dofs.len();
    for (i, di) in dofs.iter().enumerate() {
        let Some(di) = di else { continue };
        for (j, dj) in dofs.iter().enumerate() {
            let Some(dj) = dj else { continue };
            let v = block[i * n + j];
            if v != 0.0 {
                out.push((di + row_shift, dj + col_shift, v));
            }
        }
    }
}

pub fn assemble_pencil_with(space: &FeSpace, coeffs: &ProblemCoefficients, options: AssemblyOptions) -> Result<PencilMatrices> {
    let nf = space.num_free();
    let layout = DofLayout { n_free: nf };
    let tab = space.tabulate_degree(quadrature::form_degree(space.degree()))?;
    let mesh = space.mesh();

    let elements: Vec<Local> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| element_local(space, coeffs, &tab, t))
        .collect();
    let faces: Vec<FaceLocal> = mesh
        .faces()
        .par_iter()
        .map(|f| face_local(space, coeffs, f, options))
        .collect();

    let (mut ta, mut tb, mut tm, mut tg) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for loc in &elements {
        scatter(&mut ta, &loc.dofs, &loc.a, 0, 0);
        scatter(&mut ta, &loc.dofs, &loc.mass, nf, nf);
        scatter(&mut tb, &loc.dofs, &loc.stiff_b, 0, 0);
        let neg: Vec<f64> = loc.mass_b.iter().map(|v| -v).collect();
        scatter(&mut tb, &loc.dofs, &neg, 0, nf);
        scatter(&mut tb, &loc.dofs, &loc.mass, nf, 0);
        scatter(&mut tm, &loc.dofs, &loc.mass, 0, 0);
        scatter(&mut tg, &loc.dofs, &loc.gram, 0, 0);
    }
    for loc in &faces {
        scatter(&mut ta, &loc.dofs, &loc.a, 0, 0);
        scatter(&mut tg, &loc.dofs, &loc.gram, 0, 0);
    }
    Ok(PencilMatrices {
        a: CsrMatrix::from_triplets(2 * nf, 2 * nf, &ta),
        b: CsrMatrix::from_triplets(2 * nf, 2 * nf, &tb),
        mass: CsrMatrix::from_triplets(nf, nf, &tm),
        norm_gram: CsrMatrix::from_triplets(nf, nf, &tg),
        layout,
    })
}

fn face_sum(u: &FeFunction, quantity: TraceQuantity, weight: impl Fn(&Face) -> f64, use_average: bool) -> Result<f64> {
    let mut total = 0.0;
    for face in u.space().mesh().faces() {
        let tr = u.face_trace(face, quantity, None)?;
        let vals = if use_average { &tr.average } else { &tr.jump };
        let s: f64 = tr.points.iter().zip(vals).map(|((_, w), v)| w * v.norm_sqr()).sum();
        total += weight(face) * s;
    }
    Ok(total)
}

fn norm_h_squared(u: &FeFunction, omega: &FeFunction, coeffs: &ProblemCoefficients) -> Result<f64> {
    let space = u.space();
    let tab = space.tabulate_degree(quadrature::form_degree(space.degree()))?;
    let mut volume = 0.0;
    for t in 0..space.mesh().num_triangles() {
        let eb = space.element_basis(t, &tab);
        let lu = u.local_coefficients(t);
        let lw = omega.local_coefficients(t);
        for q in 0..eb.points.len() {
            let ju = Jet::combine(&lu, &eb.jets[q]);
            let jw = Jet::combine(&lw, &eb.jets[q]);
            let h2 = ju.value.norm_sqr()
                + ju.d1[0].norm_sqr()
                + ju.d1[1].norm_sqr()
                + ju.d2[0].norm_sqr()
                + 2.0 * ju.d2[1].norm_sqr()
                + ju.d2[2].norm_sqr();
            volume += eb.weights[q] * (h2 + jw.value.norm_sqr());
        }
    }
    let sigma = coeffs.sigma;
    let jumps = face_sum(u, TraceQuantity::NormalDerivative, |f| sigma / f.length, false)?;
    Ok(volume + jumps)
}

/// `||(u, omega)||_h`
pub fn norm_h(u: &FeFunction, omega: &FeFunction, coeffs: &ProblemCoefficients) -> Result<f64> {
    Ok(norm_h_squared(u, omega, coeffs)?.sqrt())
}

/// `|||(u, omega)|||_h`: `||.||_h` plus `sigma^{-1}`-weighted face averages of
/// `Delta u` and the second normal derivative.
pub fn norm_h_triple(u: &FeFunction, omega: &FeFunction, coeffs: &ProblemCoefficients) -> Result<f64> {
    let sigma = coeffs.sigma;
    let base = norm_h_squared(u, omega, coeffs)?;
    let lap = face_sum(u, TraceQuantity::Laplacian, |f| f.length / sigma, true)?;
    let second = face_sum(u, TraceQuantity::SecondNormalDerivative, |f| f.length / sigma, true)?;
    Ok((base + lap + second).sqrt())
}
