//! Structural checks on small meshes, shared by the unit-style tests and the
//! acceptance report. Each check panics on failure.

use std::sync::Arc;

use faer::Side;
use proptest::prelude::*;
use transeig::adapt::mark;
use transeig::assembly::{assemble_pencil, PencilMatrices};
use transeig::coefficients::{Builtin, ProblemCoefficients};
use transeig::eigen::{dense_eigenvalues, normalize_and_sort, EigenPair, ShiftInvert, SolverSettings};
use transeig::estimator::face_indicators;
use transeig::mesh::{Domain, FaceKind, Mesh};
use transeig::space::{FeSpace, TraceQuantity};
use transeig::Complex64 as C;

pub const S2: f64 = std::f64::consts::SQRT_2;

pub fn setup(domain: Domain, h0: f64, degree: usize, index: Builtin) -> (Arc<FeSpace>, ProblemCoefficients, PencilMatrices) {
    let mesh = Mesh::make_uniform(domain, h0).unwrap();
    let space = Arc::new(FeSpace::new(Arc::new(mesh), degree).unwrap());
    let coeffs = ProblemCoefficients::builtin(index);
    let pencil = assemble_pencil(&space, &coeffs).unwrap();
    (space, coeffs, pencil)
}

pub fn eigenpairs(space: &Arc<FeSpace>, pencil: &PencilMatrices, shift: C, count: usize) -> Vec<EigenPair> {
    let solver = ShiftInvert::new(pencil, shift).unwrap();
    let raw = solver.two_sided(count, &SolverSettings::default()).unwrap();
    normalize_and_sort(raw, pencil, space).unwrap()
}

pub fn a_is_symmetric_and_positive_definite() {
    for index in [Builtin::N16, Builtin::Affine] {
        let (_, _, p) = setup(Domain::UnitSquare, S2 / 8.0, 2, index);
        assert!(p.a.asymmetry() <= 1e-12 * p.a.max_abs());
        let dense = p.a.to_dense();
        assert!(dense.llt(Side::Lower).is_ok(), "{index:?}: A is not positive definite");
    }
}

/// Relative defects of `omega = lambda u` and `lambda = conj(lambda*)`.
pub fn pair_relation_errors(e: &EigenPair) -> (f64, f64) {
    let u = e.u.coefficients();
    let w = e.omega.coefficients();
    let un = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let diff = w
        .iter()
        .zip(u)
        .map(|(w, u)| (w - e.lambda * u).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale = e.lambda.norm();
    (diff / (scale * un), (e.lambda - e.lambda_star.conj()).norm() / scale)
}

/// Both relations to 1e-8.
pub fn check_pair(e: &EigenPair) {
    let (omega, dual) = pair_relation_errors(e);
    assert!(omega <= 1e-8, "omega - lambda u: {omega:e}");
    assert!(dual <= 1e-8, "lambda - conj(lambda*): {dual:e}");
}

pub fn eigenpair_relations() {
    let cases = [
        (Domain::UnitSquare, S2 / 8.0, 2, Builtin::N16),
        (Domain::UnitSquare, S2 / 4.0, 3, Builtin::Affine),
        (Domain::LShape, S2 / 4.0, 2, Builtin::Affine),
        (Domain::Slit, S2 / 8.0, 2, Builtin::N16),
    ];
    for (domain, h0, m, index) in cases {
        let (space, _, p) = setup(domain, h0, m, index);
        for e in eigenpairs(&space, &p, C::new(0.0, 0.0), 4) {
            check_pair(&e);
        }
    }
}

pub fn arnoldi_matches_dense_on_small_meshes() {
    let cases = [
        (Domain::UnitSquare, S2 / 4.0, 2, Builtin::N16),
        (Domain::UnitSquare, S2 / 4.0, 3, Builtin::Affine),
        (Domain::UnitSquare, S2 / 8.0, 2, Builtin::Affine),
        (Domain::LShape, S2 / 2.0, 3, Builtin::N16),
        (Domain::LShape, S2 / 4.0, 2, Builtin::Affine),
        (Domain::Slit, S2 / 4.0, 2, Builtin::N16),
        (Domain::Slit, S2 / 4.0, 3, Builtin::Affine),
    ];
    let mut checked = 0;
    for (domain, h0, m, index) in cases {
        let (space, _, p) = setup(domain, h0, m, index);
        if p.layout.n_free > 200 {
            continue;
        }
        checked += 1;
        let dense = dense_eigenvalues(&p).unwrap();
        for shift in [C::new(0.0, 0.0), C::new(20.0, 5.0)] {
            let mut expected = dense.clone();
            expected.sort_by(|a, b| (a - shift).norm().total_cmp(&(b - shift).norm()));
            let count = 6.min(expected.len());
            let found: Vec<C> = eigenpairs(&space, &p, shift, count).iter().map(|e| e.lambda).collect();
            assert_eq!(found.len(), count);
            // conjugate pairs tie in distance, so match as sets
            let radius = (expected[count - 1] - shift).norm();
            let mut used = vec![false; expected.len()];
            for f in &found {
                let tol = 1e-8 * f.norm().max(1.0);
                let hit = (0..expected.len()).find(|&i| !used[i] && (expected[i] - f).norm() <= tol);
                let Some(i) = hit else {
                    panic!("{domain:?} m={m}: {f} is not a dense eigenvalue")
                };
                used[i] = true;
                assert!(
                    (f - shift).norm() <= radius + tol,
                    "{domain:?} m={m}: {f} is not among the {count} nearest"
                );
            }
        }
    }
    assert!(checked >= 5);
}

/// Mesh with graded local refinement towards the origin.
fn graded_square() -> Mesh {
    let mut mesh = Mesh::make_uniform(Domain::UnitSquare, S2 / 4.0).unwrap();
    for _ in 0..4 {
        let near: Vec<usize> = (0..mesh.num_triangles())
            .filter(|&t| {
                let [x, y] = mesh.centroid(t);
                x + y < 0.8
            })
            .collect();
        mesh = mesh.refine(&near);
    }
    mesh
}

pub fn jumps_vanish_for_smooth_functions() {
    let polys: [(usize, fn([f64; 2]) -> f64); 2] = [
        (2, |[x, y]| 1.0 + x - 2.0 * y + 3.0 * x * y - x * x + 0.5 * y * y),
        (3, |[x, y]| x * x * y - 3.0 * x * y * y + 0.5 * x * x * x - y + 2.0),
    ];
    let coeffs = ProblemCoefficients::builtin(Builtin::Affine);
    for (m, f) in polys {
        let space = Arc::new(FeSpace::new(Arc::new(graded_square()), m).unwrap());
        let u = space.interpolate_real(f);
        let inside = |t: usize| space.element_dofs(t).iter().all(|&g| !space.is_boundary_dof(g));
        let mut faces = 0;
        for face in space.mesh().faces() {
            let Some(plus) = face.plus else { continue };
            if !(inside(face.minus) && inside(plus)) {
                continue;
            }
            faces += 1;
            // roundoff in a k-th derivative grows like h^-k
            for (q, k) in [
                (TraceQuantity::NormalDerivative, 1),
                (TraceQuantity::SecondNormalDerivative, 2),
                (TraceQuantity::Laplacian, 2),
            ] {
                let tr = u.face_trace(face, q, None).unwrap();
                let scale = tr.average.iter().fold(1.0f64, |s, a| s.max(a.norm())) * face.length.powi(-k);
                assert!(tr.jump.iter().all(|j| j.norm() < 1e-12 * scale), "m={m} {q:?}: {:?}", tr.jump);
            }
            let tr = u
                .face_trace(face, TraceQuantity::CoefficientLaplacian, Some(&coeffs))
                .unwrap();
            let scale = tr.average.iter().fold(1.0f64, |s, a| s.max(a.norm())) * face.length.powi(-2);
            assert!(tr.jump.iter().all(|j| j.norm() < 1e-12 * scale));
            let eta = face_indicators(&space, &coeffs, &u, face);
            assert!(eta.iter().all(|e| *e < 1e-10), "{eta:?}");
        }
        assert!(faces > 20);
    }
}

/// Panics unless `mark` returns a minimal bulk set in increasing order.
pub fn check_marking(values: &[f64], theta: f64) {
    let marked = mark(values, theta).unwrap();
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        assert!(marked.is_empty());
        return;
    }
    let sum: f64 = marked.iter().map(|&i| values[i]).sum();
    assert!(sum >= theta * total);
    assert_eq!(marked.len(), brute_force_minimum(values, theta), "{values:?} theta={theta}");
    assert!(marked.windows(2).all(|w| w[0] < w[1]));
}

fn brute_force_minimum(values: &[f64], theta: f64) -> usize {
    let total: f64 = values.iter().sum();
    let n = values.len();
    (0u32..1 << n)
        .filter(|s| {
            let sum: f64 = (0..n).filter(|i| s >> i & 1 == 1).map(|i| values[i]).sum();
            sum >= theta * total
        })
        .map(|s| s.count_ones() as usize)
        .min()
        .unwrap()
}

pub fn indicator_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0, (1u32..4).prop_map(f64::from)], 1..=15)
}

fn on_boundary(domain: Domain, [x, y]: [f64; 2]) -> bool {
    let eps = 1e-12;
    let near = |a: f64, b: f64| (a - b).abs() < eps;
    match domain {
        Domain::UnitSquare => near(x, 0.0) || near(x, 1.0) || near(y, 0.0) || near(y, 1.0),
        Domain::Slit => near(x, 0.0) || near(x, 1.0) || near(y, 0.0) || near(y, 1.0) || (near(y, 0.5) && x >= 0.5 - eps),
        Domain::LShape => {
            near(x, -1.0)
                || near(x, 1.0) && y >= -eps
                || near(y, 1.0)
                || near(y, -1.0) && x <= eps
                || near(x, 0.0) && y <= eps
                || near(y, 0.0) && x >= -eps
        }
    }
}

fn check_conforming(domain: Domain, mesh: &Mesh, area: f64) {
    assert!((mesh.total_area() - area).abs() < 1e-12 * area);
    let mut owners = vec![0usize; mesh.num_triangles()];
    for face in mesh.faces() {
        owners[face.minus] += 1;
        if let Some(p) = face.plus {
            owners[p] += 1;
        }
        if face.kind == FaceKind::Boundary {
            for v in face.vertices {
                assert!(on_boundary(domain, mesh.vertices()[v]), "interior face without a partner");
            }
            let [a, b] = face.vertices.map(|v| mesh.vertices()[v]);
            assert!(on_boundary(domain, [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]));
        }
    }
    assert!(owners.iter().all(|&k| k == 3));
}

pub fn refinement_stays_conforming_and_shape_regular() {
    for (domain, h0) in [
        (Domain::UnitSquare, S2 / 4.0),
        (Domain::LShape, S2 / 2.0),
        (Domain::Slit, S2 / 4.0),
    ] {
        let mut mesh = Mesh::make_uniform(domain, h0).unwrap();
        let area = mesh.total_area();
        let angle0 = mesh.global_min_angle();
        let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
        for round in 0..20 {
            let n = mesh.num_triangles();
            // a few pseudo-random triangles plus the one nearest a corner
            let mut marked: Vec<usize> = (0..3 + n / 20)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (state >> 33) as usize % n
                })
                .collect();
            let corner = (0..n)
                .min_by(|&a, &b| {
                    let d = |t: usize| {
                        let [x, y] = mesh.centroid(t);
                        (x - 0.5).powi(2) + (y - 0.5).powi(2)
                    };
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            marked.push(corner);
            marked.sort_unstable();
            marked.dedup();
            let refined = mesh.refine(&marked);
            assert!(refined.num_triangles() >= n + marked.len(), "round {round}");
            for &t in &marked {
                assert!(refined.parent(t).is_some());
            }
            mesh = refined;
            check_conforming(domain, &mesh, area);
            assert!(mesh.global_min_angle() >= 0.5 * angle0 - 1e-12, "round {round}");
        }
    }
}
