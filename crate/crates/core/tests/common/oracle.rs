//! Entry-by-entry evaluation of the bilinear forms with a Lagrange basis
//! built in physical coordinates, compared against the assembled pencil.

use std::collections::BTreeSet;
use std::sync::Arc;

use transeig::assembly::assemble_pencil;
use transeig::coefficients::{Builtin, ProblemCoefficients};
use transeig::mesh::{Domain, Mesh};
use transeig::quadrature::{face_points_for_degree, form_degree, gauss_legendre, rule_for_degree};
use transeig::space::FeSpace;

type P = [f64; 2];

#[derive(Clone, Copy)]
pub enum Index {
    Sixteen,
    Affine,
}

/// (c, grad c, b, grad b) with c = 1/(n-1), b = n/(n-1).
fn coefficient(index: Index, [x, y]: P) -> (f64, P, f64, P) {
    let (n, grad) = match index {
        Index::Sixteen => (16.0, [0.0, 0.0]),
        Index::Affine => (8.0 + x - y, [1.0, -1.0]),
    };
    let c = 1.0 / (n - 1.0);
    let gc = [-grad[0] * c * c, -grad[1] * c * c];
    (c, gc, 1.0 + c, gc)
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut rhs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        rhs.swap(k, p);
        for i in 0..n {
            if i != k {
                let f = a[i][k] / a[k][k];
                for j in 0..n {
                    a[i][j] -= f * a[k][j];
                }
                for j in 0..rhs[i].len() {
                    rhs[i][j] -= f * rhs[k][j];
                }
            }
        }
    }
    for k in 0..n {
        let d = a[k][k];
        for v in rhs[k].iter_mut() {
            *v /= d;
        }
    }
    rhs
}

/// Value, gradient and Hessian `[xx, xy, yy]` of a local basis function.
#[derive(Clone, Copy, Default)]
struct Eval {
    v: f64,
    g: P,
    h: [f64; 3],
}

/// Nodal basis of one element expressed in scaled physical monomials.
struct PhysicalBasis {
    origin: P,
    scale: f64,
    powers: Vec<(i32, i32)>,
    coeffs: Vec<Vec<f64>>,
}

impl PhysicalBasis {
    fn new(nodes: &[P], degree: usize) -> Self {
        let origin = nodes[0];
        let scale = nodes
            .iter()
            .map(|p| ((p[0] - origin[0]).powi(2) + (p[1] - origin[1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        let mut powers = Vec::new();
        for total in 0..=degree as i32 {
            for a in (0..=total).rev() {
                powers.push((a, total - a));
            }
        }
        assert_eq!(powers.len(), nodes.len());
        let mut basis = PhysicalBasis {
            origin,
            scale,
            powers,
            coeffs: Vec::new(),
        };
        let v: Vec<Vec<f64>> = nodes
            .iter()
            .map(|&p| basis.monomials(p).iter().map(|e| e.v).collect())
            .collect();
        let n = nodes.len();
        let identity: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
        // columns of V^-1 are the nodal coefficient vectors
        let inv = solve_dense(v, identity);
        basis.coeffs = (0..n).map(|i| (0..n).map(|k| inv[k][i]).collect()).collect();
        basis
    }

    fn monomials(&self, [x, y]: P) -> Vec<Eval> {
        let s = self.scale;
        let (u, w) = ((x - self.origin[0]) / s, (y - self.origin[1]) / s);
        let pw = |t: f64, e: i32| if e < 0 { 0.0 } else { t.powi(e) };
        self.powers
            .iter()
            .map(|&(a, b)| {
                let (af, bf) = (f64::from(a), f64::from(b));
                Eval {
                    v: pw(u, a) * pw(w, b),
                    g: [af * pw(u, a - 1) * pw(w, b) / s, bf * pw(u, a) * pw(w, b - 1) / s],
                    h: [
                        af * (af - 1.0) * pw(u, a - 2) * pw(w, b) / (s * s),
                        af * bf * pw(u, a - 1) * pw(w, b - 1) / (s * s),
                        bf * (bf - 1.0) * pw(u, a) * pw(w, b - 2) / (s * s),
                    ],
                }
            })
            .collect()
    }

    fn eval(&self, i: usize, p: P) -> Eval {
        let mono = self.monomials(p);
        let mut e = Eval::default();
        for (c, m) in self.coeffs[i].iter().zip(&mono) {
            e.v += c * m.v;
            e.g[0] += c * m.g[0];
            e.g[1] += c * m.g[1];
            for k in 0..3 {
                e.h[k] += c * m.h[k];
            }
        }
        e
    }
}

struct Oracle {
    n: usize,
    a: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    mb: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
}

fn oracle(space: &FeSpace, index: Index, sigma: f64, mu: f64) -> Oracle {
    let mesh = space.mesh();
    let m = space.degree();
    let n = space.num_free();
    let zero = || vec![vec![0.0; n]; n];
    let mut o = Oracle {
        n,
        a: zero(),
        k: zero(),
        mb: zero(),
        m: zero(),
    };
    let bases: Vec<PhysicalBasis> = (0..mesh.num_triangles())
        .map(|t| {
            let nodes: Vec<P> = space.element_dofs(t).iter().map(|&g| space.node_point(g)).collect();
            PhysicalBasis::new(&nodes, m)
        })
        .collect();
    let free = |t: usize| -> Vec<(usize, usize)> {
        space
            .element_dofs(t)
            .iter()
            .enumerate()
            .filter_map(|(local, &g)| space.free_index(g).map(|f| (local, f)))
            .collect()
    };

    let rule = rule_for_degree(form_degree(m)).unwrap();
    for t in 0..mesh.num_triangles() {
        let [p0, p1, p2] = mesh.corners(t);
        let e1 = [p1[0] - p0[0], p1[1] - p0[1]];
        let e2 = [p2[0] - p0[0], p2[1] - p0[1]];
        let det = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        let dofs = free(t);
        for q in 0..rule.len() {
            let [xi, eta] = rule.reference_point(q);
            let p = [p0[0] + xi * e1[0] + eta * e2[0], p0[1] + xi * e1[1] + eta * e2[1]];
            let w = rule.weights[q] * det;
            let (c, gc, b, gb) = coefficient(index, p);
            for &(lj, j) in &dofs {
                let u = bases[t].eval(lj, p);
                for &(li, i) in &dofs {
                    let v = bases[t].eval(li, p);
                    let lap_u = u.h[0] + u.h[2];
                    let lap_v = v.h[0] + v.h[2];
                    let ddot = u.h[0] * v.h[0] + 2.0 * u.h[1] * v.h[1] + u.h[2] * v.h[2];
                    o.a[i][j] += w * ((c - mu) * lap_u * lap_v + mu * ddot);
                    let left = [c * u.g[0] + u.v * gc[0], c * u.g[1] + u.v * gc[1]];
                    let right = [b * v.g[0] + v.v * gb[0], b * v.g[1] + v.v * gb[1]];
                    o.k[i][j] += w * (left[0] * v.g[0] + left[1] * v.g[1] + u.g[0] * right[0] + u.g[1] * right[1]);
                    o.mb[i][j] += w * b * u.v * v.v;
                    o.m[i][j] += w * u.v * v.v;
                }
            }
        }
    }

    let (gx, gw) = gauss_legendre(face_points_for_degree(m));
    for face in mesh.faces() {
        let [va, vb] = face.vertices.map(|v| mesh.vertices()[v]);
        let d = [vb[0] - va[0], vb[1] - va[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        // unit normal pointing away from the minus element
        let mut gamma = [d[1] / len, -d[0] / len];
        let cm = mesh.centroid(face.minus);
        if (cm[0] - va[0]) * gamma[0] + (cm[1] - va[1]) * gamma[1] > 0.0 {
            gamma = [-gamma[0], -gamma[1]];
        }
        let sides: Vec<usize> = std::iter::once(face.minus).chain(face.plus).collect();
        let dofs: BTreeSet<usize> = sides.iter().flat_map(|&t| free(t).into_iter().map(|(_, f)| f)).collect();
        for (s, w) in gx.iter().zip(&gw) {
            let p = [va[0] + s * d[0], va[1] + s * d[1]];
            let w = w * len;
            let (c, _, _, _) = coefficient(index, p);
            // (jump of the normal derivative, average of the moment)
            let trace = |f: usize| -> (f64, f64) {
                let side = |t: usize| -> Option<(f64, f64)> {
                    let local = free(t).into_iter().find(|&(_, g)| g == f)?.0;
                    let e = bases[t].eval(local, p);
                    let dn = e.g[0] * gamma[0] + e.g[1] * gamma[1];
                    let dnn = e.h[0] * gamma[0] * gamma[0] + 2.0 * e.h[1] * gamma[0] * gamma[1] + e.h[2] * gamma[1] * gamma[1];
                    Some((dn, (c - mu) * (e.h[0] + e.h[2]) + mu * dnn))
                };
                let minus = side(face.minus).unwrap_or((0.0, 0.0));
                match face.plus {
                    Some(t) => {
                        let plus = side(t).unwrap_or((0.0, 0.0));
                        (plus.0 - minus.0, 0.5 * (plus.1 + minus.1))
                    }
                    None => (-minus.0, minus.1),
                }
            };
            for &j in &dofs {
                let (ju, au) = trace(j);
                for &i in &dofs {
                    let (jv, av) = trace(i);
                    o.a[i][j] += w * (au * jv + av * ju + sigma / len * ju * jv);
                }
            }
        }
    }
    o
}

pub fn check(mesh: Mesh, degree: usize, index: Index) {
    let space = Arc::new(FeSpace::new(Arc::new(mesh), degree).unwrap());
    let builtin = match index {
        Index::Sixteen => Builtin::N16,
        Index::Affine => Builtin::Affine,
    };
    let coeffs = ProblemCoefficients::builtin(builtin);
    let (sigma, mu) = builtin.default_parameters();
    let pencil = assemble_pencil(&space, &coeffs).unwrap();
    let o = oracle(&space, index, sigma, mu);
    let n = o.n;
    assert!(n > 0);
    let compare = |name: &str, expected: &Vec<Vec<f64>>, got: &dyn Fn(usize, usize) -> f64| {
        let scale = expected.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..n {
                let (e, g) = (expected[i][j], got(i, j));
                assert!((e - g).abs() <= 1e-11 * scale, "{name}[{i}][{j}]: oracle {e}, assembled {g}");
            }
        }
    };
    compare("a_h", &o.a, &|i, j| pencil.a.get(i, j));
    compare("M (A block)", &o.m, &|i, j| pencil.a.get(n + i, n + j));
    compare("K", &o.k, &|i, j| pencil.b.get(i, j));
    compare(
        "-M_b",
        &o.mb.iter().map(|r| r.iter().map(|v| -v).collect()).collect(),
        &|i, j| pencil.b.get(i, n + j),
    );
    compare("M (B block)", &o.m, &|i, j| pencil.b.get(n + i, j));
    for i in 0..n {
        for j in 0..n {
            assert_eq!(pencil.a.get(i, n + j), 0.0);
            assert_eq!(pencil.a.get(n + i, j), 0.0);
            assert_eq!(pencil.b.get(n + i, n + j), 0.0);
        }
    }
}

pub fn square8() -> Mesh {
    let mesh = Mesh::make_uniform(Domain::UnitSquare, std::f64::consts::SQRT_2 / 2.0).unwrap();
    assert_eq!(mesh.num_triangles(), 8);
    mesh
}

/// Four triangles around an off-center interior vertex.
pub fn skewed4() -> Mesh {
    let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.43, 0.58]];
    Mesh::new(v, vec![[4, 0, 1], [4, 1, 2], [4, 2, 3], [4, 3, 0]]).unwrap()
}

/// Two triangles, one of them bisected: a mesh with a mix of face sizes.
pub fn bisected() -> Mesh {
    let m = Mesh::make_uniform(Domain::UnitSquare, std::f64::consts::SQRT_2).unwrap();
    let m = m.refine(&[0]);
    assert!(m.num_triangles() <= 8);
    m
}
