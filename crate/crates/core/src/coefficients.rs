//! Refraction index and the coefficient combinations used by the forms and
//! the estimators.
//!
//! With `c = 1/(n-1)` and `b = n/(n-1) = 1 + c`, the derivatives follow
//! from the index callbacks: `grad c = -grad n / (n-1)^2` and
//! `lap c = -lap n / (n-1)^2 + 2 |grad n|^2 / (n-1)^3`; `b` shares them.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::quadrature;
use crate::space::FeSpace;

/// A refraction index with analytic first and second derivatives.
pub trait RefractionIndex: Send + Sync + fmt::Debug {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> [f64; 2];
    fn laplacian(&self, p: Point) -> f64;
}

/// `n(x) = value` everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantIndex(pub f64);

impl RefractionIndex for ConstantIndex {
    fn value(&self, _: Point) -> f64 {
        self.0
    }
    fn gradient(&self, _: Point) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn laplacian(&self, _: Point) -> f64 {
        0.0
    }
}

/// `n(x, y) = constant + gx * x + gy * y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineIndex {
    pub constant: f64,
    pub gradient: [f64; 2],
}

impl RefractionIndex for AffineIndex {
    fn value(&self, [x, y]: Point) -> f64 {
        self.constant + self.gradient[0] * x + self.gradient[1] * y
    }
    fn gradient(&self, _: Point) -> [f64; 2] {
        self.gradient
    }
    fn laplacian(&self, _: Point) -> f64 {
        0.0
    }
}

/// Built-in indices of the reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// `n = 16`
    N16,
    /// `n = 8 + x - y`
    Affine,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::N16 => "n16",
            Builtin::Affine => "affine",
        }
    }

    /// Default `(sigma, mu)`.
    pub fn default_parameters(self) -> (f64, f64) {
        match self {
            Builtin::N16 => (30.0, 1.0 / 15.0),
            Builtin::Affine => (20.0, 1.0 / 9.0),
        }
    }
}

impl std::str::FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n16" => Ok(Builtin::N16),
            "affine" => Ok(Builtin::Affine),
            other => Err(Error::UnknownCoefficient(other.to_string())),
        }
    }
}

/// Pointwise values of every derived coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientValues {
    pub n: f64,
    /// `c = 1/(n-1)`
    pub c: f64,
    pub grad_c: [f64; 2],
    pub lap_c: f64,
    /// `a = c - mu`
    pub a: f64,
    /// `b = n/(n-1)`
    pub b: f64,
    pub grad_b: [f64; 2],
    pub lap_b: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemCoefficients {
    index: Arc<dyn RefractionIndex>,
    pub sigma: f64,
    pub mu: f64,
}

impl ProblemCoefficients {
    pub fn new(index: Arc<dyn RefractionIndex>, sigma: f64, mu: f64) -> Self {
        ProblemCoefficients { index, sigma, mu }
    }

    /// Built-in index with its default `(sigma, mu)`.
    pub fn builtin(which: Builtin) -> Self {
        let (sigma, mu) = which.default_parameters();
        Self::builtin_with(which, sigma, mu)
    }

    pub fn builtin_with(which: Builtin, sigma: f64, mu: f64) -> Self {
        let index: Arc<dyn RefractionIndex> = match which {
            Builtin::N16 => Arc::new(ConstantIndex(16.0)),
            Builtin::Affine => Arc::new(AffineIndex {
                constant: 8.0,
                gradient: [1.0, -1.0],
            }),
        };
        ProblemCoefficients::new(index, sigma, mu)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::builtin(name.parse()?))
    }

    pub fn index(&self) -> &dyn RefractionIndex {
        self.index.as_ref()
    }

    pub fn at(&self, p: Point) -> CoefficientValues {
        let n = self.index.value(p);
        let gn = self.index.gradient(p);
        let ln = self.index.laplacian(p);
        let d = n - 1.0;
        let c = 1.0 / d;
        let grad_c = [-gn[0] / (d * d), -gn[1] / (d * d)];
        let lap_c = -ln / (d * d) + 2.0 * (gn[0] * gn[0] + gn[1] * gn[1]) / (d * d * d);
        CoefficientValues {
            n,
            c,
            grad_c,
            lap_c,
            a: c - self.mu,
            b: n * c,
            grad_b: grad_c,
            lap_b: lap_c,
        }
    }

    /// Checks `n - 1 > 0`, `1/(n-1) - mu >= 0` and `sigma > 1` at every
    /// element quadrature point of the space's mesh.
    pub fn validate(&self, space: &FeSpace) -> Result<ValidationReport> {
        if self.sigma.partial_cmp(&1.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Coefficients {
                x: f64::NAN,
                y: f64::NAN,
                reason: format!("penalty sigma = {} must exceed 1", self.sigma),
            });
        }
        if self.mu.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Coefficients {
                x: f64::NAN,
                y: f64::NAN,
                reason: format!("splitting parameter mu = {} must be positive", self.mu),
            });
        }
        let rule = quadrature::rule_for_degree(quadrature::form_degree(space.degree()))?;
        let mesh = space.mesh();
        let mut report = ValidationReport {
            min_n_minus_one: f64::INFINITY,
            min_c_minus_mu: f64::INFINITY,
            sigma: self.sigma,
        };
        for t in 0..mesh.num_triangles() {
            let [p0, p1, p2] = mesh.corners(t);
            for bary in &rule.points {
                let p = [
                    bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0],
                    bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1],
                ];
                let n = self.index.value(p);
                if !(n - 1.0 > 0.0) {
                    return Err(Error::Coefficients {
                        x: p[0],
                        y: p[1],
                        reason: format!("n = {n} does not exceed 1"),
                    });
                }
                let a = 1.0 / (n - 1.0) - self.mu;
                // 1/(n-1) - mu = 0 exactly when mu is chosen as 1/(n-1)
                if a < -1e-14 * self.mu {
                    return Err(Error::Coefficients {
                        x: p[0],
                        y: p[1],
                        reason: format!("1/(n-1) - mu = {a} is negative"),
                    });
                }
                report.min_n_minus_one = report.min_n_minus_one.min(n - 1.0);
                report.min_c_minus_mu = report.min_c_minus_mu.min(a);
            }
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    /// Empirical `delta`.
    pub min_n_minus_one: f64,
    pub min_c_minus_mu: f64,
    pub sigma: f64,
}
