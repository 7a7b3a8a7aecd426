//! Residual a posteriori indicators for primal and dual eigenpairs.
//!
//! With `c = 1/(n-1)` and `b = n/(n-1)` the volume residuals are
//!
//! * primal: `F = -Delta(c f) - b Delta f - b g`
//! * dual:   `F* = -c Delta f - Delta(b f) + g`
//!
//! and the element term is `h^2 ||F - Delta(c Delta psi)||`. Products are
//! differentiated with the product rule using the coefficient gradients
//! and Laplacians.

use std::io::Write;
use std::path::Path;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::coefficients::{CoefficientValues, ProblemCoefficients};
use crate::eigen::EigenPair;
use crate::error::Result;
use crate::mesh::{Face, Point};
use crate::quadrature;
use crate::space::{ElementMap, FeFunction, FeSpace, Jet, MonomialBasis, TabulatedRule};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Primal,
    Dual,
}

/// Data of one indicator evaluation: the discrete solution `(psi, phi)` and
/// the right-hand side `(f, g)`.
#[derive(Debug, Clone)]
pub struct ResidualData {
    pub mode: Mode,
    pub psi: FeFunction,
    pub phi: FeFunction,
    pub f: FeFunction,
    pub g: FeFunction,
}

impl ResidualData {
    /// `f = lambda u`, `g = lambda omega`, `psi = u`.
    pub fn primal(pair: &EigenPair) -> Self {
        ResidualData {
            mode: Mode::Primal,
            psi: pair.u.clone(),
            phi: pair.omega.clone(),
            f: pair.u.scaled(pair.lambda),
            g: pair.omega.scaled(pair.lambda),
        }
    }

    /// `f = lambda* u*`, `g = lambda* omega*`, `psi = u*`.
    pub fn dual(pair: &EigenPair) -> Self {
        ResidualData {
            mode: Mode::Dual,
            psi: pair.u_star.clone(),
            phi: pair.omega_star.clone(),
            f: pair.u_star.scaled(pair.lambda_star),
            g: pair.omega_star.scaled(pair.lambda_star),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EstimatorOptions {
    /// Add the `h^4`-weighted face terms that are dropped for eigenpairs.
    pub higher_order_terms: bool,
    /// Add `||f - phi||^2` (identically zero for primal eigenpairs).
    pub source_terms: bool,
}

/// `Delta(k w)` from the jets of `w` and the coefficient data of `k`.
fn lap_product(k: f64, grad_k: [f64; 2], lap_k: f64, w: &Jet<C>) -> C {
    w.laplacian() * k + (w.d1[0] * grad_k[0] + w.d1[1] * grad_k[1]) * 2.0 + w.value * lap_k
}

/// `F` (or `F*`) at a point.
pub fn volume_residual(mode: Mode, cv: &CoefficientValues, f: &Jet<C>, g: &Jet<C>) -> C {
    match mode {
        Mode::Primal => -lap_product(cv.c, cv.grad_c, cv.lap_c, f) - f.laplacian() * cv.b - g.value * cv.b,
        Mode::Dual => -f.laplacian() * cv.c - lap_product(cv.b, cv.grad_b, cv.lap_b, f) + g.value,
    }
}

/// `Delta(c Delta psi)` at a point.
pub fn principal_part(cv: &CoefficientValues, psi: &Jet<C>) -> C {
    let lap = psi.laplacian();
    let grad_lap = psi.grad_laplacian();
    psi.bilaplacian() * cv.c + (grad_lap[0] * cv.grad_c[0] + grad_lap[1] * cv.grad_c[1]) * 2.0 + lap * cv.lap_c
}

fn element_residual_with(
    space: &FeSpace,
    coeffs: &ProblemCoefficients,
    data: &ResidualData,
    tab: &TabulatedRule,
    t: usize,
) -> f64 {
    let eb = space.element_basis(t, tab);
    let (lp, lf, lg) = (
        data.psi.local_coefficients(t),
        data.f.local_coefficients(t),
        data.g.local_coefficients(t),
    );
    let mut sum = 0.0;
    for q in 0..eb.points.len() {
        let cv = coeffs.at(eb.points[q]);
        let jets = &eb.jets[q];
        let r = volume_residual(data.mode, &cv, &Jet::combine(&lf, jets), &Jet::combine(&lg, jets))
            - principal_part(&cv, &Jet::combine(&lp, jets));
        sum += eb.weights[q] * r.norm_sqr();
    }
    let h = space.mesh().diameter(t);
    h * h * sum.sqrt()
}

fn indicator_rule(space: &FeSpace) -> TabulatedRule {
    space
        .tabulate_degree(quadrature::indicator_degree(space.degree()))
        .expect("indicator degree is within the supported range")
}

/// `eta_kappa = h_kappa^2 ||F - Delta(c Delta psi)||_{0,kappa}`
pub fn element_residual(space: &FeSpace, coeffs: &ProblemCoefficients, data: &ResidualData, t: usize) -> f64 {
    element_residual_with(space, coeffs, data, &indicator_rule(space), t)
}

/// Per-side value of `c dDelta(psi)/dgamma + (dc/dgamma) Delta psi`.
pub fn flux_derivative(cv: &CoefficientValues, psi: &Jet<C>, gamma: [f64; 2]) -> C {
    let dc = cv.grad_c[0] * gamma[0] + cv.grad_c[1] * gamma[1];
    psi.normal_grad_laplacian(gamma) * cv.c + psi.laplacian() * dc
}

/// `(eta_1, eta_2, eta_3, eta_4)` of a face; the last three vanish on
/// boundary faces.
pub fn face_indicators(space: &FeSpace, coeffs: &ProblemCoefficients, psi: &FeFunction, face: &Face) -> [f64; 4] {
    let order = quadrature::face_points_for_degree(space.degree());
    let (points, minus, plus) = psi.face_jets(face, order);
    let gamma = face.normal;
    let len = face.length;
    let mut s = [0.0; 4];
    for (q, (p, w)) in points.iter().enumerate() {
        let m = &minus[q];
        match &plus {
            Some(plus) => {
                let pl = &plus[q];
                let cv = coeffs.at(*p);
                s[0] += w * (pl.normal_derivative(gamma) - m.normal_derivative(gamma)).norm_sqr();
                s[1] += w * (pl.second_normal_derivative(gamma) - m.second_normal_derivative(gamma)).norm_sqr();
                s[2] += w * (flux_derivative(&cv, pl, gamma) - flux_derivative(&cv, m, gamma)).norm_sqr();
                s[3] += w * ((pl.laplacian() - m.laplacian()) * cv.a).norm_sqr();
            }
            None => s[0] += w * m.normal_derivative(gamma).norm_sqr(),
        }
    }
    [
        coeffs.sigma / len.sqrt() * s[0].sqrt(),
        coeffs.mu * len.sqrt() * s[1].sqrt(),
        len.powf(1.5) * s[2].sqrt(),
        len.sqrt() * s[3].sqrt(),
    ]
}

/// `L^2` face norm from squared values at the face Gauss points.
fn face_l2(points: &[(Point, f64)], vals: impl Iterator<Item = f64>) -> f64 {
    points.iter().zip(vals).map(|((_, w), v)| w * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Default)]
pub struct IndicatorField {
    /// `eta^2(kappa)` per triangle.
    pub per_element: Vec<f64>,
    /// `eta_kappa` per triangle.
    pub element_residuals: Vec<f64>,
    /// `(eta_1, eta_2, eta_3, eta_4)` per face.
    pub faces: Vec<[f64; 4]>,
    /// `eta^2(Omega)`
    pub total: f64,
}

impl IndicatorField {
    /// Writes `triangle_id,eta_sq` rows.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "triangle_id,eta_sq")?;
        for (t, v) in self.per_element.iter().enumerate() {
            writeln!(out, "{t},{v:.12e}")?;
        }
        Ok(())
    }

    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Elementwise sum of two fields on the same mesh.
    pub fn combined(&self, other: &IndicatorField) -> Vec<f64> {
        self.per_element.iter().zip(&other.per_element).map(|(a, b)| a + b).collect()
    }
}

/// All indicators of one residual, with the eigenpair combination
/// `eta_kappa^2 + sum_boundary eta_1^2 + 1/2 sum_interior (eta_1^2 + ... + eta_4^2)`.
pub fn compute_indicators(
    space: &FeSpace,
    coeffs: &ProblemCoefficients,
    data: &ResidualData,
    options: EstimatorOptions,
) -> IndicatorField {
    let mesh = space.mesh();
    let tab = indicator_rule(space);
    let faces: Vec<[f64; 4]> = mesh
        .faces()
        .par_iter()
        .map(|f| face_indicators(space, coeffs, &data.psi, f))
        .collect();
    let residuals: Vec<f64> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| element_residual_with(space, coeffs, data, &tab, t))
        .collect();
    let extra: Vec<f64> = if options.higher_order_terms || options.source_terms {
        (0..mesh.num_triangles())
            .into_par_iter()
            .map(|t| extra_terms(space, coeffs, data, &tab, t, options))
            .collect()
    } else {
        vec![0.0; mesh.num_triangles()]
    };
    let per_element: Vec<f64> = (0..mesh.num_triangles())
        .map(|t| {
            let mut v = residuals[t] * residuals[t] + extra[t];
            for fi in mesh.triangle_faces(t) {
                let e = &faces[fi];
                if mesh.faces()[fi].is_interior() {
                    v += 0.5 * e.iter().map(|x| x * x).sum::<f64>();
                } else {
                    v += e[0] * e[0];
                }
            }
            v
        })
        .collect();
    let total = per_element.iter().sum();
    IndicatorField {
        per_element,
        element_residuals: residuals,
        faces,
        total,
    }
}

/// `eta^2(kappa)` of a single triangle.
pub fn element_indicator(space: &FeSpace, coeffs: &ProblemCoefficients, data: &ResidualData, t: usize) -> f64 {
    let mesh = space.mesh();
    let eta = element_residual(space, coeffs, data, t);
    let mut v = eta * eta;
    for fi in mesh.triangle_faces(t) {
        let face = &mesh.faces()[fi];
        let e = face_indicators(space, coeffs, &data.psi, face);
        if face.is_interior() {
            v += 0.5 * e.iter().map(|x| x * x).sum::<f64>();
        } else {
            v += e[0] * e[0];
        }
    }
    v
}

// h^4-weighted face terms and ||f - phi||^2 of the source-problem indicator
fn extra_terms(
    space: &FeSpace,
    coeffs: &ProblemCoefficients,
    data: &ResidualData,
    tab: &TabulatedRule,
    t: usize,
    options: EstimatorOptions,
) -> f64 {
    let mesh = space.mesh();
    let mut v = 0.0;
    if options.higher_order_terms {
        let h = mesh.diameter(t);
        let order = quadrature::face_points_for_degree(space.degree());
        for fi in mesh.triangle_faces(t) {
            let face = &mesh.faces()[fi];
            let hl = face.length;
            let pts = mesh.face_quadrature_points(face, order);
            let ratio = face_l2(
                &pts,
                pts.iter().map(|(p, _)| {
                    let cv = coeffs.at(*p);
                    (cv.c + cv.b).powi(2)
                }),
            );
            let eta_f = face_indicators(space, coeffs, &data.f, face)[0];
            let eta_phi = face_indicators(space, coeffs, &data.phi, face)[0];
            v += ratio * hl.powi(4) * eta_f * eta_f + h.powi(4) * eta_phi * eta_phi;
        }
    }
    if options.source_terms {
        let eb = space.element_basis(t, tab);
        let (lf, lphi) = (data.f.local_coefficients(t), data.phi.local_coefficients(t));
        for q in 0..eb.points.len() {
            let d = Jet::combine(&lf, &eb.jets[q]).value - Jet::combine(&lphi, &eb.jets[q]).value;
            v += eb.weights[q] * d.norm_sqr();
        }
    }
    v
}

/// Elementwise `L^2` projection onto `P_j` in reference monomials.
#[derive(Debug, Clone)]
pub struct Projector {
    degree: usize,
    monomials: MonomialBasis,
    tab: TabulatedRule,
    /// Reference monomial jets at the rule points, `mono[q][k]`.
    mono: Vec<Vec<Jet<f64>>>,
    gram_inverse: Mat<f64>,
}

impl Projector {
    pub fn new(space: &FeSpace, degree: usize) -> Result<Self> {
        let monomials = MonomialBasis::new(degree);
        let rule_degree = (2 * degree)
            .max(quadrature::indicator_degree(space.degree()))
            .min(quadrature::MAX_TRIANGLE_DEGREE);
        let tab = space.tabulate_degree(rule_degree)?;
        let mono: Vec<Vec<Jet<f64>>> = (0..tab.rule.len())
            .map(|q| {
                let x = tab.rule.reference_point(q);
                (0..monomials.len()).map(|k| monomials.jet(k, x)).collect()
            })
            .collect();
        let n = monomials.len();
        let mut gram = Mat::<f64>::zeros(n, n);
        for (q, row) in mono.iter().enumerate() {
            let w = tab.rule.weights[q];
            for a in 0..n {
                for b in 0..n {
                    gram[(a, b)] += w * row[a].value * row[b].value;
                }
            }
        }
        let gram_inverse = gram.partial_piv_lu().inverse();
        Ok(Projector {
            degree,
            monomials,
            tab,
            mono,
            gram_inverse,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Projects `g` (given at physical points) on triangle `t`.
    pub fn project(&self, map: &ElementMap, g: impl Fn(Point) -> C) -> LocalPolynomial {
        let n = self.monomials.len();
        let mut rhs = vec![C::new(0.0, 0.0); n];
        for (q, row) in self.mono.iter().enumerate() {
            let p = map.to_physical(self.tab.rule.reference_point(q));
            let v = g(p) * self.tab.rule.weights[q];
            for (k, m) in row.iter().enumerate() {
                rhs[k] += v * m.value;
            }
        }
        let coeffs = (0..n)
            .map(|a| (0..n).map(|b| rhs[b] * self.gram_inverse[(a, b)]).sum())
            .collect();
        LocalPolynomial {
            coeffs,
            monomials: self.monomials.clone(),
        }
    }
}

/// A polynomial on one element in reference monomials.
#[derive(Debug, Clone)]
pub struct LocalPolynomial {
    coeffs: Vec<C>,
    monomials: MonomialBasis,
}

impl LocalPolynomial {
    pub fn jet(&self, map: &ElementMap, p: Point) -> Jet<C> {
        let x = map.to_reference(p);
        let jets: Vec<Jet<f64>> = (0..self.monomials.len())
            .map(|k| map.push_forward(&self.monomials.jet(k, x)))
            .collect();
        Jet::combine(&self.coeffs, &jets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Oscillations {
    pub volume: f64,
    pub eta3: f64,
    pub eta4: f64,
}

struct ElementProjections {
    /// projected coefficient (c, or c - mu) used in the principal part
    c: LocalPolynomial,
    a: LocalPolynomial,
    /// `F - F_hat` squared norm times `h^4`
    volume: f64,
}

fn project_element(
    space: &FeSpace,
    coeffs: &ProblemCoefficients,
    data: &ResidualData,
    proj: &Projector,
    tab: &TabulatedRule,
    t: usize,
) -> ElementProjections {
    let map = space.element_map(t);
    let (lp, lf, lg) = (
        data.psi.local_coefficients(t),
        data.f.local_coefficients(t),
        data.g.local_coefficients(t),
    );
    let jets_at = |local: &[C], p: Point| Jet::combine(local, &space.basis_jets_at(t, p));
    let real = |v: f64| C::new(v, 0.0);
    let pc = proj.project(map, |p| real(coeffs.at(p).c));
    let pa = proj.project(map, |p| real(coeffs.at(p).a));
    // projected coefficient-times-data products
    let (p1, p2, p3) = match data.mode {
        Mode::Primal => (
            proj.project(map, |p| jets_at(&lf, p).value * coeffs.at(p).c),
            proj.project(map, |p| jets_at(&lf, p).laplacian() * coeffs.at(p).b),
            proj.project(map, |p| jets_at(&lg, p).value * coeffs.at(p).b),
        ),
        Mode::Dual => (
            proj.project(map, |p| jets_at(&lf, p).value * coeffs.at(p).b),
            proj.project(map, |p| jets_at(&lf, p).laplacian() * coeffs.at(p).c),
            proj.project(map, |p| jets_at(&lg, p).value),
        ),
    };
    let eb = space.element_basis(t, tab);
    let mut sum = 0.0;
    for q in 0..eb.points.len() {
        let p = eb.points[q];
        let cv = coeffs.at(p);
        let jets = &eb.jets[q];
        let f = Jet::combine(&lf, jets);
        let g = Jet::combine(&lg, jets);
        let exact = volume_residual(data.mode, &cv, &f, &g) - principal_part(&cv, &Jet::combine(&lp, jets));
        let psi = Jet::combine(&lp, jets);
        let c_hat = pc.jet(map, p);
        let lap = psi.laplacian();
        let gl = psi.grad_laplacian();
        // Delta(c_hat Delta psi)
        let principal_hat =
            c_hat.value * psi.bilaplacian() + (c_hat.d1[0] * gl[0] + c_hat.d1[1] * gl[1]) * 2.0 + c_hat.laplacian() * lap;
        let f_hat = match data.mode {
            Mode::Primal => -p1.jet(map, p).laplacian() - p2.jet(map, p).value - p3.jet(map, p).value,
            Mode::Dual => -p2.jet(map, p).value - p1.jet(map, p).laplacian() + p3.jet(map, p).value,
        };
        sum += eb.weights[q] * (exact - (f_hat - principal_hat)).norm_sqr();
    }
    let h = space.mesh().diameter(t);
    ElementProjections {
        c: pc,
        a: pa,
        volume: h.powi(4) * sum,
    }
}

/// Data oscillations with projection degree `j`: the volume term compares
/// the element residuals with all coefficient-times-data products
/// projected, the face terms compare `eta_3`, `eta_4` with their projected
/// counterparts. Each interior face contributes once per adjacent element.
pub fn oscillations(space: &FeSpace, coeffs: &ProblemCoefficients, data: &ResidualData, j: usize) -> Result<Oscillations> {
    let mesh = space.mesh();
    let proj = Projector::new(space, j)?;
    let tab = indicator_rule(space);
    let elems: Vec<ElementProjections> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| project_element(space, coeffs, data, &proj, &tab, t))
        .collect();
    let order = quadrature::face_points_for_degree(space.degree());
    let face_terms: Vec<(f64, f64)> = mesh
        .faces()
        .par_iter()
        .filter(|f| f.is_interior())
        .map(|face| {
            let (points, minus, plus) = data.psi.face_jets(face, order);
            let plus = plus.expect("interior face");
            let (tm, tp) = (face.minus, face.plus.unwrap());
            let (mm, mp) = (space.element_map(tm), space.element_map(tp));
            let gamma = face.normal;
            let mut s = [0.0; 4];
            for (q, (p, w)) in points.iter().enumerate() {
                let cv = coeffs.at(*p);
                let exact3 = flux_derivative(&cv, &plus[q], gamma) - flux_derivative(&cv, &minus[q], gamma);
                let side3 = |jc: Jet<C>, psi: &Jet<C>| {
                    let dc = jc.d1[0] * gamma[0] + jc.d1[1] * gamma[1];
                    jc.value * psi.normal_grad_laplacian(gamma) + dc * psi.laplacian()
                };
                let hat3 = side3(elems[tp].c.jet(mp, *p), &plus[q]) - side3(elems[tm].c.jet(mm, *p), &minus[q]);
                let exact4 = (plus[q].laplacian() - minus[q].laplacian()) * cv.a;
                let hat4 =
                    elems[tp].a.jet(mp, *p).value * plus[q].laplacian() - elems[tm].a.jet(mm, *p).value * minus[q].laplacian();
                s[0] += w * exact3.norm_sqr();
                s[1] += w * hat3.norm_sqr();
                s[2] += w * exact4.norm_sqr();
                s[3] += w * hat4.norm_sqr();
            }
            let len = face.length;
            let d3 = len.powf(1.5) * (s[0].sqrt() - s[1].sqrt());
            let d4 = len.sqrt() * (s[2].sqrt() - s[3].sqrt());
            (d3 * d3, d4 * d4)
        })
        .collect();
    Ok(Oscillations {
        volume: elems.iter().map(|e| e.volume).sum::<f64>().sqrt(),
        eta3: (2.0 * face_terms.iter().map(|x| x.0).sum::<f64>()).sqrt(),
        eta4: (2.0 * face_terms.iter().map(|x| x.1).sum::<f64>()).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Builtin, ConstantIndex};
    use crate::mesh::{Domain, Mesh};
    use std::sync::Arc;

    fn c(v: f64) -> C {
        C::new(v, 0.0)
    }

    fn data_from(psi: FeFunction, f: FeFunction, g: FeFunction) -> ResidualData {
        ResidualData {
            mode: Mode::Primal,
            phi: g.clone(),
            psi,
            f,
            g,
        }
    }

    fn one_triangle(m: usize) -> Arc<FeSpace> {
        let mesh = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        Arc::new(FeSpace::new(Arc::new(mesh), m).unwrap())
    }

    /// Function on a single-triangle space from nodal values of `f`,
    /// bypassing the boundary constraint through the local coefficients.
    fn local_values(space: &FeSpace, f: impl Fn(Point) -> f64) -> Vec<C> {
        space.element_dofs(0).iter().map(|&g| c(f(space.node_point(g)))).collect()
    }

    #[test]
    fn zero_data_gives_zero() {
        let mesh = Mesh::make_uniform(Domain::UnitSquare, std::f64::consts::SQRT_2 / 4.0).unwrap();
        let space = Arc::new(FeSpace::new(Arc::new(mesh), 2).unwrap());
        let coeffs = ProblemCoefficients::builtin(Builtin::N16);
        let z = FeFunction::zero(Arc::clone(&space));
        let d = data_from(z.clone(), z.clone(), z);
        let field = compute_indicators(&space, &coeffs, &d, EstimatorOptions::default());
        assert_eq!(field.total, 0.0);
        assert!(field.per_element.iter().all(|&v| v == 0.0));
        let osc = oscillations(&space, &coeffs, &d, 2).unwrap();
        assert_eq!(osc, Oscillations::default());
    }

    #[test]
    fn hand_computed_residual_of_x2y() {
        // psi = x^2 y with n = 8 + x - y, f = g = 0: Delta psi = 2y, Delta^2 psi = 0,
        // so the residual is -Delta(2y c) = -(2y Delta c + 4 dc/dy) with
        // c = 1/(7 + x - y), dc/dy = 1/d^2, Delta c = 4/d^3.
        let mesh = Mesh::make_uniform(Domain::UnitSquare, std::f64::consts::SQRT_2 / 8.0).unwrap();
        let space = Arc::new(FeSpace::new(Arc::new(mesh), 3).unwrap());
        let coeffs = ProblemCoefficients::builtin(Builtin::Affine);
        let psi = space.interpolate_real(|[x, y]| x * x * y);
        let z = FeFunction::zero(Arc::clone(&space));
        let d = data_from(psi, z.clone(), z);
        let tab = space.tabulate_degree(12).unwrap();
        let mut checked = 0;
        for t in 0..space.mesh().num_triangles() {
            if space.element_dofs(t).iter().any(|&g| space.is_boundary_dof(g)) {
                continue;
            }
            let eb = space.element_basis(t, &tab);
            let mut sum = 0.0;
            for q in 0..eb.points.len() {
                let [x, y] = eb.points[q];
                let dd = 7.0 + x - y;
                let r = 2.0 * y * 4.0 / dd.powi(3) + 4.0 / (dd * dd);
                sum += eb.weights[q] * r * r;
            }
            let h = space.mesh().diameter(t);
            let expect = h * h * sum.sqrt();
            let got = element_residual(&space, &coeffs, &d, t);
            assert!((got - expect).abs() < 1e-12 * expect.max(1e-300) + 1e-15, "{got} vs {expect}");
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn constant_index_quadratic_reduces_to_f_norm() {
        let mesh = Mesh::make_uniform(Domain::UnitSquare, std::f64::consts::SQRT_2 / 4.0).unwrap();
        let space = Arc::new(FeSpace::new(Arc::new(mesh), 2).unwrap());
        let coeffs = ProblemCoefficients::new(Arc::new(ConstantIndex(16.0)), 30.0, 1.0 / 15.0);
        let n = space.num_free();
        let v: Vec<C> = (0..n).map(|i| C::new((i as f64).sin(), 0.2)).collect();
        let psi = FeFunction::new(Arc::clone(&space), v.clone()).unwrap();
        let f = psi.scaled(c(3.0));
        let g = psi.scaled(c(-1.0));
        let d = data_from(psi, f.clone(), g.clone());
        let tab = indicator_rule(&space);
        for t in 0..space.mesh().num_triangles() {
            let eta = element_residual(&space, &coeffs, &d, t);
            let eb = space.element_basis(t, &tab);
            let (lf, lg) = (f.local_coefficients(t), g.local_coefficients(t));
            let mut s = 0.0;
            for q in 0..eb.points.len() {
                let jf = Jet::combine(&lf, &eb.jets[q]);
                let jg = Jet::combine(&lg, &eb.jets[q]);
                let (cc, b) = (1.0 / 15.0, 16.0 / 15.0);
                let r = -jf.laplacian() * cc - jf.laplacian() * b - jg.value * b;
                s += eb.weights[q] * r.norm_sqr();
            }
            let h = space.mesh().diameter(t);
            assert!((eta - h * h * s.sqrt()).abs() < 1e-12 * (1.0 + eta));
        }
    }

    #[test]
    fn unit_normal_jump_on_boundary_face() {
        // psi = y on the face y = 0 of the reference triangle: d psi / d gamma
        // with gamma = (0, -1) is -1, so eta_1 = sigma * len^{-1/2} * len^{1/2}.
        let space = one_triangle(2);
        let coeffs = ProblemCoefficients::builtin(Builtin::N16);
        let local = local_values(&space, |[_, y]| y);
        let mesh = space.mesh();
        let face = mesh.faces().iter().find(|f| f.normal[1] < -0.5).unwrap();
        let pts = mesh.face_quadrature_points(face, 4);
        let mut s = 0.0;
        for (p, w) in &pts {
            let j = Jet::combine(&local, &space.basis_jets_at(0, *p));
            s += w * j.normal_derivative(face.normal).norm_sqr();
        }
        let eta1 = coeffs.sigma / face.length.sqrt() * s.sqrt();
        assert!((eta1 - coeffs.sigma).abs() < 1e-12);
    }

    #[test]
    fn smooth_function_has_no_interior_jump_indicators() {
        let mesh = Mesh::make_uniform(Domain::UnitSquare, std::f64::consts::SQRT_2 / 4.0).unwrap();
        let space = Arc::new(FeSpace::new(Arc::new(mesh), 3).unwrap());
        let coeffs = ProblemCoefficients::builtin(Builtin::N16);
        let psi = space.interpolate_real(|[x, y]| x * x * y + 0.5 * y * y - x);
        for face in space.mesh().faces().iter().filter(|f| f.is_interior()) {
            let sides = [face.minus, face.plus.unwrap()];
            if sides
                .iter()
                .any(|&t| space.element_dofs(t).iter().any(|&d| space.is_boundary_dof(d)))
            {
                continue;
            }
            let e = face_indicators(&space, &coeffs, &psi, face);
            assert!(e.iter().all(|v| v.abs() < 1e-10), "{e:?}");
        }
    }

    #[test]
    fn additivity_and_nonnegativity() {
        let mesh = Mesh::make_uniform(Domain::LShape, std::f64::consts::SQRT_2 / 4.0).unwrap();
        let space = Arc::new(FeSpace::new(Arc::new(mesh), 2).unwrap());
        let coeffs = ProblemCoefficients::builtin(Builtin::Affine);
        let n = space.num_free();
        let psi = FeFunction::new(
            Arc::clone(&space),
            (0..n).map(|i| C::new((0.3 * i as f64).cos(), 0.1)).collect(),
        )
        .unwrap();
        let d = data_from(psi.clone(), psi.scaled(c(2.0)), psi.scaled(c(4.0)));
        let field = compute_indicators(&space, &coeffs, &d, EstimatorOptions::default());
        let sum: f64 = field.per_element.iter().sum();
        assert!((sum - field.total).abs() <= 1e-12 * field.total);
        assert!(field.per_element.iter().all(|&v| v >= 0.0));
        for t in [0, 7, 20] {
            let single = element_indicator(&space, &coeffs, &d, t);
            assert!((single - field.per_element[t]).abs() < 1e-10 * (1.0 + single));
        }
        let with = compute_indicators(
            &space,
            &coeffs,
            &d,
            EstimatorOptions {
                higher_order_terms: true,
                source_terms: true,
            },
        );
        assert!(with.total >= field.total);
    }

    #[test]
    fn polynomial_data_has_no_oscillation() {
        let mesh = Mesh::make_uniform(Domain::UnitSquare, std::f64::consts::SQRT_2 / 4.0).unwrap();
        let space = Arc::new(FeSpace::new(Arc::new(mesh), 2).unwrap());
        let coeffs = ProblemCoefficients::new(Arc::new(ConstantIndex(16.0)), 30.0, 1.0 / 15.0);
        let n = space.num_free();
        let psi = FeFunction::new(Arc::clone(&space), (0..n).map(|i| C::new((i as f64).sin(), 0.0)).collect()).unwrap();
        let d = data_from(psi.clone(), psi.scaled(c(5.0)), psi.scaled(c(25.0)));
        let osc = oscillations(&space, &coeffs, &d, 2).unwrap();
        assert!(osc.volume < 1e-10 && osc.eta3 < 1e-10 && osc.eta4 < 1e-10, "{osc:?}");
    }

    #[test]
    fn csv_dump() {
        let field = IndicatorField {
            per_element: vec![1.5, 0.25],
            ..Default::default()
        };
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "triangle_id,eta_sq");
        assert_eq!(lines.len(), 3);
        let v: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 0.25);
    }
}
