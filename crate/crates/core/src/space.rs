//! Continuous P_m Lagrange spaces with homogeneous Dirichlet constraint.
//!
//! Basis functions live on the reference triangle as monomial expansions.
//! Physical derivatives of any order follow from the constant inverse
//! Jacobian of the affine map, so element polynomials can be
//! differentiated exactly up to fourth order.

use std::ops::{Add, AddAssign, Mul};
use std::sync::Arc;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64;

use crate::coefficients::ProblemCoefficients;
use crate::error::{Error, Result};
use crate::mesh::{Face, Mesh, Point};
use crate::quadrature::{self, TriangleRule};

/// Highest derivative order carried by a [`Jet`].
pub const MAX_DERIVATIVE: usize = 4;

/// Value and all partial derivatives up to fourth order at one point.
///
/// Entries of order `r` are indexed by the number of `y` (or `eta`)
/// derivatives: `d2 = [xx, xy, yy]`, `d3 = [xxx, xxy, xyy, yyy]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet<T> {
    pub value: T,
    pub d1: [T; 2],
    pub d2: [T; 3],
    pub d3: [T; 4],
    pub d4: [T; 5],
}

impl<T> Jet<T>
where
    T: Copy + Default + Add<Output = T> + AddAssign + Mul<f64, Output = T>,
{
    pub fn gradient(&self) -> [T; 2] {
        self.d1
    }

    pub fn hessian(&self) -> [[T; 2]; 2] {
        [[self.d2[0], self.d2[1]], [self.d2[1], self.d2[2]]]
    }

    pub fn laplacian(&self) -> T {
        self.d2[0] + self.d2[2]
    }

    pub fn grad_laplacian(&self) -> [T; 2] {
        [self.d3[0] + self.d3[2], self.d3[1] + self.d3[3]]
    }

    pub fn bilaplacian(&self) -> T {
        self.d4[0] + self.d4[2] * 2.0 + self.d4[4]
    }

    pub fn normal_derivative(&self, n: [f64; 2]) -> T {
        self.d1[0] * n[0] + self.d1[1] * n[1]
    }

    /// `n . (D^2 v) n`
    pub fn second_normal_derivative(&self, n: [f64; 2]) -> T {
        self.d2[0] * (n[0] * n[0]) + self.d2[1] * (2.0 * n[0] * n[1]) + self.d2[2] * (n[1] * n[1])
    }

    pub fn normal_grad_laplacian(&self, n: [f64; 2]) -> T {
        let g = self.grad_laplacian();
        g[0] * n[0] + g[1] * n[1]
    }
}

impl Jet<Complex64> {
    /// `sum_i coeffs[i] * basis[i]`
    pub fn combine(coeffs: &[Complex64], basis: &[Jet<f64>]) -> Self {
        let mut out = Jet::<Complex64>::default();
        for (c, b) in coeffs.iter().zip(basis) {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            out.value += c * b.value;
            for k in 0..2 {
                out.d1[k] += c * b.d1[k];
            }
            for k in 0..3 {
                out.d2[k] += c * b.d2[k];
            }
            for k in 0..4 {
                out.d3[k] += c * b.d3[k];
            }
            for k in 0..5 {
                out.d4[k] += c * b.d4[k];
            }
        }
        out
    }
}

/// Monomials `xi^p eta^q` with `p + q <= degree`.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    exponents: Vec<(u32, u32)>,
}

impl MonomialBasis {
    pub fn new(degree: usize) -> Self {
        let mut exponents = Vec::new();
        for total in 0..=degree as u32 {
            for q in 0..=total {
                exponents.push((total - q, q));
            }
        }
        MonomialBasis { exponents }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// `d^(a+b) / dxi^a deta^b` of monomial `k` at `(xi, eta)`.
    pub fn derivative(&self, k: usize, a: u32, b: u32, [xi, eta]: [f64; 2]) -> f64 {
        let (p, q) = self.exponents[k];
        if a > p || b > q {
            return 0.0;
        }
        let falling = |n: u32, k: u32| (0..k).map(|i| f64::from(n - i)).product::<f64>();
        falling(p, a) * falling(q, b) * xi.powi((p - a) as i32) * eta.powi((q - b) as i32)
    }

    /// Jet of monomial `k` in reference coordinates.
    pub fn jet(&self, k: usize, x: [f64; 2]) -> Jet<f64> {
        let mut j = Jet::<f64> {
            value: self.derivative(k, 0, 0, x),
            ..Default::default()
        };
        for b in 0..2u32 {
            j.d1[b as usize] = self.derivative(k, 1 - b, b, x);
        }
        for b in 0..3u32 {
            j.d2[b as usize] = self.derivative(k, 2 - b, b, x);
        }
        for b in 0..4u32 {
            j.d3[b as usize] = self.derivative(k, 3 - b, b, x);
        }
        for b in 0..5u32 {
            j.d4[b as usize] = self.derivative(k, 4 - b, b, x);
        }
        j
    }
}

/// Lagrange element of degree `m` on the reference triangle.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    degree: usize,
    monomials: MonomialBasis,
    nodes: Vec<[f64; 2]>,
    /// `coefficients[(k, i)]`: weight of monomial `k` in basis function `i`.
    coefficients: Mat<f64>,
}

impl ReferenceElement {
    pub fn new(degree: usize) -> Result<Self> {
        if degree < 2 {
            return Err(Error::Degree(degree));
        }
        let m = degree as f64;
        let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mut nodes: Vec<[f64; 2]> = corners.to_vec();
        for e in 0..3 {
            let (s, t) = (corners[(e + 1) % 3], corners[(e + 2) % 3]);
            for k in 1..degree {
                let r = k as f64 / m;
                nodes.push([s[0] + r * (t[0] - s[0]), s[1] + r * (t[1] - s[1])]);
            }
        }
        for j in 1..degree {
            for k in 1..degree - j {
                nodes.push([j as f64 / m, k as f64 / m]);
            }
        }
        let monomials = MonomialBasis::new(degree);
        let n = monomials.len();
        debug_assert_eq!(nodes.len(), n);
        let vandermonde = Mat::<f64>::from_fn(n, n, |i, k| monomials.derivative(k, 0, 0, nodes[i]));
        let coefficients = vandermonde.partial_piv_lu().inverse();
        Ok(ReferenceElement {
            degree,
            monomials,
            nodes,
            coefficients,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `(m + 1)(m + 2) / 2`
    pub fn num_local_dofs(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Reference-coordinate jets of every basis function at `x`.
    pub fn jets(&self, x: [f64; 2]) -> Vec<Jet<f64>> {
        let mono: Vec<Jet<f64>> = (0..self.monomials.len()).map(|k| self.monomials.jet(k, x)).collect();
        (0..self.num_local_dofs())
            .map(|i| {
                let mut j = Jet::<f64>::default();
                for (k, mk) in mono.iter().enumerate() {
                    let c = self.coefficients[(k, i)];
                    if c == 0.0 {
                        continue;
                    }
                    j.value += c * mk.value;
                    for r in 0..2 {
                        j.d1[r] += c * mk.d1[r];
                    }
                    for r in 0..3 {
                        j.d2[r] += c * mk.d2[r];
                    }
                    for r in 0..4 {
                        j.d3[r] += c * mk.d3[r];
                    }
                    for r in 0..5 {
                        j.d4[r] += c * mk.d4[r];
                    }
                }
                j
            })
            .collect()
    }
}

/// Affine map `x = x0 + J xi` of one triangle with its derivative
/// transforms.
#[derive(Debug, Clone)]
pub struct ElementMap {
    origin: Point,
    jacobian: [[f64; 2]; 2],
    inverse: [[f64; 2]; 2],
    det: f64,
    // transform[r][beta][b]: weight of the reference derivative with b eta's
    // in the physical derivative with beta y's, order r
    transform: [Vec<Vec<f64>>; MAX_DERIVATIVE + 1],
}

impl ElementMap {
    pub fn new([p0, p1, p2]: [Point; 3]) -> Self {
        let jacobian = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        let inverse = [
            [jacobian[1][1] / det, -jacobian[0][1] / det],
            [-jacobian[1][0] / det, jacobian[0][0] / det],
        ];
        // d/dx_i = sum_a inverse[a][i] d/dxi_a
        let along_x = [inverse[0][0], inverse[1][0]];
        let along_y = [inverse[0][1], inverse[1][1]];
        let transform = std::array::from_fn(|r| {
            (0..=r)
                .map(|beta| {
                    let mut poly = vec![1.0];
                    for step in 0..r {
                        let l = if step < r - beta { along_x } else { along_y };
                        let mut next = vec![0.0; poly.len() + 1];
                        for (b, w) in poly.iter().enumerate() {
                            next[b] += w * l[0];
                            next[b + 1] += w * l[1];
                        }
                        poly = next;
                    }
                    poly
                })
                .collect()
        });
        ElementMap {
            origin: p0,
            jacobian,
            inverse,
            det,
            transform,
        }
    }

    /// `|det J|`, twice the triangle area.
    pub fn det(&self) -> f64 {
        self.det.abs()
    }

    pub fn to_physical(&self, [xi, eta]: [f64; 2]) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi + j[0][1] * eta,
            self.origin[1] + j[1][0] * xi + j[1][1] * eta,
        ]
    }

    pub fn to_reference(&self, [x, y]: Point) -> [f64; 2] {
        let (dx, dy) = (x - self.origin[0], y - self.origin[1]);
        let g = &self.inverse;
        [g[0][0] * dx + g[0][1] * dy, g[1][0] * dx + g[1][1] * dy]
    }

    pub fn push_forward(&self, r: &Jet<f64>) -> Jet<f64> {
        let t = &self.transform;
        let apply = |order: usize, src: &[f64], dst: &mut [f64]| {
            for (beta, d) in dst.iter_mut().enumerate() {
                *d = t[order][beta].iter().zip(src).map(|(w, s)| w * s).sum();
            }
        };
        let mut out = Jet {
            value: r.value,
            ..Default::default()
        };
        apply(1, &r.d1, &mut out.d1);
        apply(2, &r.d2, &mut out.d2);
        apply(3, &r.d3, &mut out.d3);
        apply(4, &r.d4, &mut out.d4);
        out
    }
}

/// Reference basis jets tabulated at the points of a triangle rule.
#[derive(Debug, Clone)]
pub struct TabulatedRule {
    pub rule: TriangleRule,
    /// `jets[q][i]`
    pub jets: Vec<Vec<Jet<f64>>>,
}

#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    reference: ReferenceElement,
    maps: Vec<ElementMap>,
    /// Global DOFs of each triangle, `num_local_dofs` per triangle.
    element_dofs: Vec<usize>,
    node_points: Vec<Point>,
    on_boundary: Vec<bool>,
    free_of_global: Vec<usize>,
    global_of_free: Vec<usize>,
}

const NOT_FREE: usize = usize::MAX;

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        let reference = ReferenceElement::new(degree)?;
        let nloc = reference.num_local_dofs();
        let nv = mesh.num_vertices();
        let nf = mesh.faces().len();
        let per_edge = degree - 1;
        let per_interior = nloc - 3 - 3 * per_edge;
        let ndofs = nv + nf * per_edge + mesh.num_triangles() * per_interior;

        let mut node_points = vec![[0.0; 2]; ndofs];
        let mut element_dofs = Vec::with_capacity(nloc * mesh.num_triangles());
        let maps: Vec<ElementMap> = (0..mesh.num_triangles()).map(|t| ElementMap::new(mesh.corners(t))).collect();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let faces = mesh.triangle_faces(t);
            element_dofs.extend_from_slice(tri);
            for e in 0..3 {
                let f = &mesh.faces()[faces[e]];
                let start = tri[(e + 1) % 3];
                for k in 1..degree {
                    let along = if start == f.vertices[0] { k } else { degree - k };
                    element_dofs.push(nv + faces[e] * per_edge + along - 1);
                }
            }
            for k in 0..per_interior {
                element_dofs.push(nv + nf * per_edge + t * per_interior + k);
            }
            let dofs = &element_dofs[t * nloc..(t + 1) * nloc];
            for (i, &g) in dofs.iter().enumerate() {
                node_points[g] = maps[t].to_physical(reference.nodes()[i]);
            }
        }

        let mut on_boundary = vec![false; ndofs];
        for (fi, f) in mesh.faces().iter().enumerate() {
            if f.is_interior() {
                continue;
            }
            on_boundary[f.vertices[0]] = true;
            on_boundary[f.vertices[1]] = true;
            for k in 0..per_edge {
                on_boundary[nv + fi * per_edge + k] = true;
            }
        }
        let mut free_of_global = vec![NOT_FREE; ndofs];
        let mut global_of_free = Vec::with_capacity(ndofs);
        for g in 0..ndofs {
            if !on_boundary[g] {
                free_of_global[g] = global_of_free.len();
                global_of_free.push(g);
            }
        }
        Ok(FeSpace {
            mesh,
            reference,
            maps,
            element_dofs,
            node_points,
            on_boundary,
            free_of_global,
            global_of_free,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.reference.degree()
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    pub fn num_local_dofs(&self) -> usize {
        self.reference.num_local_dofs()
    }

    pub fn num_dofs(&self) -> usize {
        self.node_points.len()
    }

    /// Unknowns of `S^h` after the boundary constraint.
    pub fn num_free(&self) -> usize {
        self.global_of_free.len()
    }

    pub fn element_map(&self, t: usize) -> &ElementMap {
        &self.maps[t]
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        let n = self.num_local_dofs();
        &self.element_dofs[t * n..(t + 1) * n]
    }

    pub fn node_point(&self, global: usize) -> Point {
        self.node_points[global]
    }

    pub fn is_boundary_dof(&self, global: usize) -> bool {
        self.on_boundary[global]
    }

    /// Free index of a global DOF, `None` on the boundary.
    pub fn free_index(&self, global: usize) -> Option<usize> {
        match self.free_of_global[global] {
            NOT_FREE => None,
            i => Some(i),
        }
    }

    pub fn global_index(&self, free: usize) -> usize {
        self.global_of_free[free]
    }

    /// Free indices of the local DOFs of `t` (`None` for constrained ones).
    pub fn element_free_dofs(&self, t: usize) -> Vec<Option<usize>> {
        self.element_dofs(t).iter().map(|&g| self.free_index(g)).collect()
    }

    /// Local coefficients of a free-DOF vector on triangle `t`.
    pub fn local_coefficients(&self, coeffs: &[Complex64], t: usize) -> Vec<Complex64> {
        self.element_dofs(t)
            .iter()
            .map(|&g| match self.free_of_global[g] {
                NOT_FREE => Complex64::new(0.0, 0.0),
                i => coeffs[i],
            })
            .collect()
    }

    pub fn tabulate(&self, rule: TriangleRule) -> TabulatedRule {
        let jets = (0..rule.len())
            .map(|q| self.reference.jets(rule.reference_point(q)))
            .collect();
        TabulatedRule { rule, jets }
    }

    /// Tabulated rule of the given exactness degree.
    pub fn tabulate_degree(&self, degree: usize) -> Result<TabulatedRule> {
        Ok(self.tabulate(quadrature::rule_for_degree(degree)?))
    }

    /// Physical basis jets of triangle `t` at every point of `tab`, with the
    /// physical points and weights.
    pub fn element_basis(&self, t: usize, tab: &TabulatedRule) -> ElementBasis {
        let map = &self.maps[t];
        let det = map.det();
        let points = (0..tab.rule.len())
            .map(|q| map.to_physical(tab.rule.reference_point(q)))
            .collect();
        let weights = tab.rule.weights.iter().map(|w| w * det).collect();
        let jets = tab
            .jets
            .iter()
            .map(|row| row.iter().map(|j| map.push_forward(j)).collect())
            .collect();
        ElementBasis { points, weights, jets }
    }

    /// Physical basis jets of triangle `t` at physical points on or inside
    /// it (no containment check).
    pub fn basis_jets_at(&self, t: usize, p: Point) -> Vec<Jet<f64>> {
        let map = &self.maps[t];
        self.reference
            .jets(map.to_reference(p))
            .iter()
            .map(|j| map.push_forward(j))
            .collect()
    }

    pub fn contains(&self, t: usize, p: Point) -> bool {
        let [xi, eta] = self.maps[t].to_reference(p);
        let tol = 1e-12;
        xi >= -tol && eta >= -tol && xi + eta <= 1.0 + tol
    }

    /// Basis jets of both sides of a face at its Gauss points.
    pub fn face_basis(&self, face: &Face, order: usize) -> FaceBasis {
        let points = self.mesh.face_quadrature_points(face, order);
        let side = |t: usize| -> Vec<Vec<Jet<f64>>> { points.iter().map(|(p, _)| self.basis_jets_at(t, *p)).collect() };
        FaceBasis {
            minus: side(face.minus),
            plus: face.plus.map(side),
            points,
        }
    }

    /// Nodal interpolant; boundary DOFs are left at zero.
    pub fn interpolate(self: &Arc<Self>, f: impl Fn(Point) -> Complex64) -> FeFunction {
        let coeffs = self.global_of_free.iter().map(|&g| f(self.node_points[g])).collect();
        FeFunction {
            space: Arc::clone(self),
            coeffs,
        }
    }

    /// Same as [`FeSpace::interpolate`] for a real function.
    pub fn interpolate_real(self: &Arc<Self>, f: impl Fn(Point) -> f64) -> FeFunction {
        self.interpolate(|p| Complex64::new(f(p), 0.0))
    }
}

/// Physical basis jets on one element at quadrature points.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// `jets[q][i]`
    pub jets: Vec<Vec<Jet<f64>>>,
}

/// Basis jets of the two triangles adjacent to a face.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    pub points: Vec<(Point, f64)>,
    /// `minus[q][i]` for the local DOFs of `face.minus`
    pub minus: Vec<Vec<Jet<f64>>>,
    pub plus: Option<Vec<Vec<Jet<f64>>>>,
}

/// Face quantities available through [`FeFunction::face_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceQuantity {
    /// `dv/dgamma`
    NormalDerivative,
    /// `gamma . D^2 v gamma`
    SecondNormalDerivative,
    /// `Delta v`
    Laplacian,
    /// `(1/(n-1) - mu) Delta v`
    CoefficientLaplacian,
}

/// Jump and average of a face quantity at the face Gauss points.
///
/// Interior jumps are `(+) - (-)` with the face normal pointing from minus
/// to plus. On boundary faces the jump is `-(value)` and the average is
/// the one-sided value.
#[derive(Debug, Clone)]
pub struct FaceTrace {
    pub points: Vec<(Point, f64)>,
    pub jump: Vec<Complex64>,
    pub average: Vec<Complex64>,
}

/// A discrete function in `S^h`, stored by its free coefficients.
#[derive(Debug, Clone)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    coeffs: Vec<Complex64>,
}

impl FeFunction {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != space.num_free() {
            return Err(Error::Config(format!(
                "coefficient vector has length {}, space has {} free DOFs",
                coeffs.len(),
                space.num_free()
            )));
        }
        Ok(FeFunction { space, coeffs })
    }

    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.num_free();
        FeFunction {
            space,
            coeffs: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn scaled(&self, s: Complex64) -> FeFunction {
        FeFunction {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn local_coefficients(&self, t: usize) -> Vec<Complex64> {
        self.space.local_coefficients(&self.coeffs, t)
    }

    /// Exact derivatives of the local polynomial on triangle `t`.
    pub fn eval_derivatives(&self, t: usize, points: &[Point]) -> Result<Vec<Jet<Complex64>>> {
        let local = self.local_coefficients(t);
        points
            .iter()
            .map(|&p| {
                if !self.space.contains(t, p) {
                    return Err(Error::PointOutsideTriangle {
                        triangle: t,
                        x: p[0],
                        y: p[1],
                    });
                }
                Ok(Jet::combine(&local, &self.space.basis_jets_at(t, p)))
            })
            .collect()
    }

    /// Jets of both sides of `face` at its Gauss points.
    pub fn face_jets(&self, face: &Face, order: usize) -> (Vec<(Point, f64)>, Vec<Jet<Complex64>>, Option<Vec<Jet<Complex64>>>) {
        let basis = self.space.face_basis(face, order);
        let side = |t: usize, jets: &Vec<Vec<Jet<f64>>>| -> Vec<Jet<Complex64>> {
            let local = self.local_coefficients(t);
            jets.iter().map(|b| Jet::combine(&local, b)).collect()
        };
        let minus = side(face.minus, &basis.minus);
        let plus = face.plus.zip(basis.plus.as_ref()).map(|(t, j)| side(t, j));
        (basis.points, minus, plus)
    }

    /// Jump and average of `quantity` on `face`. `coeffs` is required for
    /// [`TraceQuantity::CoefficientLaplacian`].
    pub fn face_trace(&self, face: &Face, quantity: TraceQuantity, coeffs: Option<&ProblemCoefficients>) -> Result<FaceTrace> {
        let order = quadrature::face_points_for_degree(self.space.degree());
        let (points, minus, plus) = self.face_jets(face, order);
        let normal = face.normal;
        let eval = |j: &Jet<Complex64>, p: Point| -> Result<Complex64> {
            Ok(match quantity {
                TraceQuantity::NormalDerivative => j.normal_derivative(normal),
                TraceQuantity::SecondNormalDerivative => j.second_normal_derivative(normal),
                TraceQuantity::Laplacian => j.laplacian(),
                TraceQuantity::CoefficientLaplacian => {
                    let c = coeffs.ok_or_else(|| Error::Config("coefficient-weighted trace needs coefficients".into()))?;
                    j.laplacian() * c.at(p).a
                }
            })
        };
        let mut jump = Vec::with_capacity(points.len());
        let mut average = Vec::with_capacity(points.len());
        for (q, (p, _)) in points.iter().enumerate() {
            let m = eval(&minus[q], *p)?;
            match &plus {
                Some(plus) => {
                    let pl = eval(&plus[q], *p)?;
                    jump.push(pl - m);
                    average.push(0.5 * (pl + m));
                }
                None => {
                    jump.push(-m);
                    average.push(m);
                }
            }
        }
        Ok(FaceTrace { points, jump, average })
    }
}
