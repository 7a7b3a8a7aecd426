//! Quadrature rules on the reference triangle and on segments.
//!
//! Triangle rules of degree 1 and 2 are the classical centroid and
//! three-point interior rules. Higher degrees use the collapsed
//! (Duffy) product of two Gauss–Legendre rules, which keeps every weight
//! positive and is exact for any requested degree.

use crate::error::{Error, Result};

/// Highest polynomial degree served by [`rule_for_degree`].
pub const MAX_TRIANGLE_DEGREE: usize = 12;

/// A quadrature rule on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    /// Polynomial exactness degree.
    pub degree: usize,
    /// Barycentric coordinates `(l0, l1, l2)` of each point; the reference
    /// coordinates are `(l1, l2)`.
    pub points: Vec<[f64; 3]>,
    /// Weights summing to the reference area `1/2`.
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference coordinates `(xi, eta)` of point `q`.
    pub fn reference_point(&self, q: usize) -> [f64; 2] {
        [self.points[q][1], self.points[q][2]]
    }

    /// Integrates `f(xi, eta)` over the reference triangle.
    pub fn integrate(&self, mut f: impl FnMut([f64; 2]) -> f64) -> f64 {
        (0..self.len()).map(|q| self.weights[q] * f(self.reference_point(q))).sum()
    }
}

/// Returns a rule integrating every bivariate polynomial of total degree
/// `<= degree` exactly on the reference triangle.
pub fn rule_for_degree(degree: usize) -> Result<TriangleRule> {
    match degree {
        0 => Err(Error::QuadratureDegree(degree)),
        1 => Ok(TriangleRule {
            degree,
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
        }),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            Ok(TriangleRule {
                degree,
                points: vec![[a, b, b], [b, a, b], [b, b, a]],
                weights: vec![1.0 / 6.0; 3],
            })
        }
        d if d <= MAX_TRIANGLE_DEGREE => Ok(collapsed_rule(d)),
        d => Err(Error::QuadratureDegree(d)),
    }
}

// xi = s, eta = (1 - s) t, dxi deta = (1 - s) ds dt. A degree-d integrand is
// a polynomial of degree <= d in t and <= d + 1 in s after the Jacobian.
fn collapsed_rule(degree: usize) -> TriangleRule {
    let (s_nodes, s_weights) = gauss_legendre((degree + 2).div_ceil(2));
    let (t_nodes, t_weights) = gauss_legendre((degree + 1).div_ceil(2));
    let mut points = Vec::with_capacity(s_nodes.len() * t_nodes.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (s, ws) in s_nodes.iter().zip(&s_weights) {
        for (t, wt) in t_nodes.iter().zip(&t_weights) {
            let xi = *s;
            let eta = (1.0 - s) * t;
            points.push([1.0 - xi - eta, xi, eta]);
            weights.push(ws * wt * (1.0 - s));
        }
    }
    TriangleRule { degree, points, weights }
}

/// Gauss–Legendre rule with `n` points on `[0, 1]`; weights sum to 1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Number of Gauss points used on faces for degree-`m` elements.
pub fn face_points_for_degree(m: usize) -> usize {
    (2 * m + 3).div_ceil(2)
}

/// Triangle-rule degree for the bilinear forms.
pub fn form_degree(m: usize) -> usize {
    (2 * m + 2).min(MAX_TRIANGLE_DEGREE)
}

/// Triangle-rule degree for estimator volume terms.
pub fn indicator_degree(m: usize) -> usize {
    (2 * m + 4).min(MAX_TRIANGLE_DEGREE)
}
