//! Small quadrature helpers shared by the integral routines.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on [-1, 1], stored as (node, weight) pairs.
#[derive(Debug, Clone)]
pub struct Legendre {
    pts: Vec<(f64, f64)>,
}

impl Legendre {
    pub fn new(n: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
        let pts = rule.iter().map(|(x, w)| (*x, *w)).collect();
        Self { pts }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.pts.iter().map(move |&(x, w)| (c + h * x, h * w))
    }

    /// Composite rule over consecutive breakpoints.
    pub fn composite(&self, breaks: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.pts.len() * breaks.len().saturating_sub(1));
        for w in breaks.windows(2) {
            out.extend(self.mapped(w[0], w[1]));
        }
        out
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Trapezoid rule for a 2π-periodic integrand; spectrally accurate for analytic f.
pub fn trapezoid_periodic<F: FnMut(f64) -> f64>(n: usize, mut f: F) -> f64 {
    let h = std::f64::consts::TAU / n as f64;
    (0..n).map(|k| f(k as f64 * h)).sum::<f64>() * h
}

/// Double-exponential quadrature on [a, b] with an error check.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let out = quadrature::double_exponential::integrate(f, a, b, tol);
    if !out.integral.is_finite() {
        return Err(Error::Accuracy { requested: tol, achieved: f64::INFINITY });
    }
    let scale = out.integral.abs().max(1e-300);
    if out.error_estimate > 1e3 * tol * scale.max(1.0) {
        return Err(Error::Accuracy { requested: tol, achieved: out.error_estimate });
    }
    Ok(out.integral)
}

/// Geometric breakpoints in (0, b]: 0, b q^{m-1}, ..., b q, b.  Graded toward the origin.
pub fn graded_breaks(b: f64, levels: usize, q: f64) -> Vec<f64> {
    let mut v = vec![0.0];
    for k in (0..levels).rev() {
        v.push(b * q.powi(k as i32));
    }
    v
}
