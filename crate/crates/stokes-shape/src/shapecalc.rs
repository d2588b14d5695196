//! First-order shape calculus on clusters of Dirichlet eigenpairs.
//!
//! Conventions: a domain variation u moves the boundary by (u·n)n, sampled
//! on the nodes of the unperturbed boundary. For a cluster of orthonormal
//! eigenfields the Hadamard matrix is
//!
//!   M_ij = ∫ (u·n) ⟨∂φ_i/∂n, ∂φ_j/∂n⟩ dσ,
//!
//! and the branch derivatives λ′ are the eigenvalues of −M.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::eigensolver::{EigenField, EigenPair};
use crate::error::{Error, Result};
use crate::geometry::Surface;
use crate::kernels::{Mat3, Vec3};
use crate::potentials::BoundaryField;

/// Largest complexity bound accepted by [`resonance_scan`].
pub const MAX_COMPLEXITY: usize = 30;

#[derive(Debug, Clone)]
pub struct HadamardMatrix {
    pub m: DMatrix<f64>,
}

impl HadamardMatrix {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.m - self.m.transpose()).norm()
    }

    /// M(vS) = SᵀM(v)S.
    pub fn congruent(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        s.transpose() * &self.m * s
    }
}

fn check_sampling(traces: &[BoundaryField], surface: &Surface, u_normal: &[f64]) -> Result<()> {
    let n = surface.panels.len();
    if traces.is_empty() {
        return Err(Error::Input("empty cluster".into()));
    }
    if u_normal.len() != n || traces.iter().any(|t| t.len() != n) {
        return Err(Error::Input(format!(
            "sampling mismatch: surface has {n} nodes, u·n has {}, traces have {:?}",
            u_normal.len(),
            traces.iter().map(|t| t.len()).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

pub fn hadamard_matrix(traces: &[BoundaryField], surface: &Surface, u_normal: &[f64]) -> Result<HadamardMatrix> {
    check_sampling(traces, surface, u_normal)?;
    let w = &surface.panels.weights;
    let m = traces.len();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let s: f64 = (0..w.len()).map(|k| u_normal[k] * traces[i].values[k].dot(&traces[j].values[k]) * w[k]).sum();
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    Ok(HadamardMatrix { m: out })
}

/// Branch derivatives λ′ of a cluster, ascending.
pub fn eigenvalue_derivative(traces: &[BoundaryField], surface: &Surface, u_normal: &[f64]) -> Result<Vec<f64>> {
    let h = hadamard_matrix(traces, surface, u_normal)?;
    let mut ev: Vec<f64> = if h.dim() == 1 {
        vec![-h.m[(0, 0)]]
    } else {
        (-h.m).symmetric_eigenvalues().iter().copied().collect()
    };
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Traces of a slice of eigenpairs (convenience for cluster calls).
pub fn cluster_traces(pairs: &[&EigenPair]) -> Vec<BoundaryField> {
    pairs.iter().map(|p| p.trace.clone()).collect()
}

/// Linear recombination v_i = Σ_j S_ji φ_j.
pub fn rotate_traces(traces: &[BoundaryField], s: &DMatrix<f64>) -> Vec<BoundaryField> {
    let n = traces[0].len();
    (0..s.ncols())
        .map(|i| BoundaryField {
            values: (0..n).map(|k| (0..traces.len()).map(|j| traces[j].values[k] * s[(j, i)]).sum()).collect(),
        })
        .collect()
}

/// Shape derivative of the unit normal, n′ = −∇_{∂Ω}V_n, from the tangential
/// gradient of the normal velocity.
pub fn normal_shape_derivative(tangential_grad_vn: &Vec3) -> Vec3 {
    -tangential_grad_vn
}

// --- (C1)–(C3) ---------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct OzReport {
    pub multiplicity: usize,
    /// max |⟨∂φ_i/∂n, n⟩| over nodes and cluster members
    pub c1: f64,
    /// max |⟨∂v_1/∂n, ∂v_2/∂n⟩| in the best basis
    pub c2: f64,
    /// max ||∂v_1/∂n| − |∂v_2/∂n|| in the best basis
    pub c3: f64,
    /// columns: best basis in terms of the input one
    pub rotation: Vec<Vec<f64>>,
    pub tol: f64,
    pub holds: bool,
}

fn c23(a: &BoundaryField, b: &BoundaryField) -> (f64, f64) {
    a.values.iter().zip(&b.values).fold((0.0f64, 0.0f64), |(c2, c3), (x, y)| {
        (c2.max(x.dot(y).abs()), c3.max((x.norm() - y.norm()).abs()))
    })
}

fn rot2(t: f64) -> DMatrix<f64> {
    let (s, c) = t.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn rot3(w: &[f64; 3]) -> DMatrix<f64> {
    let r = Rotation3::from_scaled_axis(Vector3::new(w[0], w[1], w[2]));
    DMatrix::from_iterator(3, 3, r.matrix().iter().copied())
}

fn objective(traces: &[BoundaryField], s: &DMatrix<f64>) -> f64 {
    let v = rotate_traces(traces, &s.columns(0, 2).into_owned());
    let (c2, c3) = c23(&v[0], &v[1]);
    c2 + c3
}

fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Compass search on the rotation vector.
fn local_search3(traces: &[BoundaryField], mut w: [f64; 3]) -> ([f64; 3], f64) {
    let mut best = objective(traces, &rot3(&w));
    let mut step = 0.2;
    while step > 1e-7 {
        let mut moved = false;
        for i in 0..3 {
            for sgn in [1.0, -1.0] {
                let mut t = w;
                t[i] += sgn * step;
                let f = objective(traces, &rot3(&t));
                if f < best {
                    best = f;
                    w = t;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (w, best)
}

/// Checks (C1)–(C3) on a cluster of multiplicity 2 or 3, minimising the
/// (C2)+(C3) residual over in-cluster rotations.
pub fn oz_condition_check(traces: &[BoundaryField], surface: &Surface, tol: f64, seed: u64) -> Result<OzReport> {
    let m = traces.len();
    if !(2..=3).contains(&m) {
        return Err(Error::Input(format!("(C1)–(C3) need a cluster of multiplicity 2 or 3, got {m}")));
    }
    check_sampling(traces, surface, &vec![0.0; surface.panels.len()])?;
    let normals = &surface.panels.normals;
    let c1 = traces
        .iter()
        .flat_map(|t| t.values.iter().zip(normals).map(|(v, n)| v.dot(n).abs()))
        .fold(0.0, f64::max);

    let s = if m == 2 {
        let f = |t: f64| objective(traces, &rot2(t));
        let step = PI / 180.0;
        let i0 = (0..180).min_by(|&i, &j| f(i as f64 * step).total_cmp(&f(j as f64 * step))).unwrap();
        let t = golden(f, (i0 as f64 - 1.0) * step, (i0 as f64 + 1.0) * step, 1e-10);
        rot2(t)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = (objective(traces, &DMatrix::identity(3, 3)), [0.0; 3]);
        for restart in 0..50 {
            let w0 = if restart == 0 {
                [0.0; 3]
            } else {
                // uniform axis, uniform angle
                let v = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                let a = rng.random::<f64>() * PI;
                let v = v.normalize() * a;
                [v.x, v.y, v.z]
            };
            let (w, f) = local_search3(traces, w0);
            if f < best.0 {
                best = (f, w);
            }
        }
        rot3(&best.1)
    };
    let v = rotate_traces(traces, &s);
    let (c2, c3) = c23(&v[0], &v[1]);
    Ok(OzReport {
        multiplicity: m,
        c1,
        c2,
        c3,
        rotation: s.column_iter().map(|c| c.iter().copied().collect()).collect(),
        tol,
        holds: c1 <= tol && c2 <= tol && c3 <= tol,
    })
}

// --- shape-derivative system ------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShapeResidual {
    /// L² norm of −(Δ+λ)φ′ + ∇p′ − λ′φ over the interior rule
    pub momentum: f64,
    /// L² norm of div φ′
    pub divergence: f64,
    /// L² norm of φ′ + (u·n)∂φ/∂n on the boundary
    pub boundary: f64,
}

/// Difference quotient φ′ = (φ_t − φ)/t of two eigenfields.
pub struct FieldQuotient<'a> {
    pub base: &'a EigenField,
    pub perturbed: &'a EigenField,
    pub t: f64,
}

impl FieldQuotient<'_> {
    pub fn velocity(&self, y: &Vec3) -> Vec3 {
        (self.perturbed.velocity(y) - self.base.velocity(y)) / self.t
    }
    pub fn gradient(&self, y: &Vec3) -> Mat3 {
        (self.perturbed.gradient(y) - self.base.gradient(y)) / self.t
    }
    pub fn pressure(&self, y: &Vec3) -> f64 {
        (self.perturbed.pressure(y) - self.base.pressure(y)) / self.t
    }
}

const LAPLACE_STEP: f64 = 1e-4;

fn laplacian(g: &dyn Fn(&Vec3) -> Mat3, y: &Vec3, dim: usize) -> Vec3 {
    let mut out = Vec3::zeros();
    for a in 0..dim {
        let mut e = Vec3::zeros();
        e[a] = LAPLACE_STEP;
        out += (g(&(y + e)) - g(&(y - e))).column(a) / (2.0 * LAPLACE_STEP);
    }
    out
}

fn pressure_gradient(p: &dyn Fn(&Vec3) -> f64, y: &Vec3, dim: usize) -> Vec3 {
    let mut out = Vec3::zeros();
    for a in 0..dim {
        let mut e = Vec3::zeros();
        e[a] = LAPLACE_STEP;
        out[a] = (p(&(y + e)) - p(&(y - e))) / (2.0 * LAPLACE_STEP);
    }
    out
}

/// Residuals of the linearised Stokes system satisfied by (φ′, p′).
pub fn shape_system_residual(
    pair: &EigenPair,
    candidate: &FieldQuotient<'_>,
    lambda_prime: f64,
    u_normal: &[f64],
    boundary: &Surface,
    interior: &[(Vec3, f64)],
) -> Result<ShapeResidual> {
    check_sampling(std::slice::from_ref(&pair.trace), boundary, u_normal)?;
    let dim = if pair.field.is_planar() { 2 } else { 3 };
    let lam = pair.eigenvalue;
    let (mut mom, mut div) = (0.0, 0.0);
    for (y, w) in interior {
        let lap = laplacian(&|v| candidate.gradient(v), y, dim);
        let gp = pressure_gradient(&|v| candidate.pressure(v), y, dim);
        let r = -lap - candidate.velocity(y) * lam + gp - pair.field.velocity(y) * lambda_prime;
        mom += r.norm_squared() * w;
        div += candidate.gradient(y).trace().powi(2) * w;
    }
    let p = &boundary.panels;
    let bnd: f64 = (0..p.len())
        .map(|k| (candidate.velocity(&p.nodes[k]) + pair.trace.values[k] * u_normal[k]).norm_squared() * p.weights[k])
        .sum();
    Ok(ShapeResidual { momentum: mom.sqrt(), divergence: div.sqrt(), boundary: bnd.sqrt() })
}

// --- resonances --------------------------------------------------------------

/// λ_k = Σ_j m_j λ_j over j < k (1-based indices).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceRelation {
    pub target: usize,
    pub coefficients: Vec<u32>,
    pub defect: f64,
}

impl ResonanceRelation {
    pub fn complexity(&self) -> usize {
        self.target + self.coefficients.iter().map(|&m| m as usize).sum::<usize>()
    }
}

/// All relations with k + Σm_j ≤ n and |λ_k − Σm_jλ_j| ≤ tol·λ_k.
pub fn resonance_scan(spectrum: &[f64], n: usize, tol: f64) -> Result<Vec<ResonanceRelation>> {
    if n > MAX_COMPLEXITY {
        return Err(Error::Resource(format!("complexity bound {n} exceeds {MAX_COMPLEXITY}")));
    }
    if spectrum.iter().any(|l| !(*l > 0.0)) || spectrum.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input("spectrum must be positive and sorted".into()));
    }
    let mut out = vec![];
    for k in 2..=spectrum.len().min(n) {
        let target = spectrum[k - 1];
        let slack = tol * target;
        let mut m = vec![0u32; k - 1];
        search(&spectrum[..k - 1], 0, n - k, target, slack, 0.0, &mut m, &mut |m, s| {
            out.push(ResonanceRelation { target: k, coefficients: m.to_vec(), defect: (target - s).abs() });
        });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn search(
    lam: &[f64],
    j: usize,
    budget: usize,
    target: f64,
    slack: f64,
    sum: f64,
    m: &mut [u32],
    emit: &mut dyn FnMut(&[u32], f64),
) {
    if sum > target + slack {
        return;
    }
    if j == lam.len() {
        if m.iter().any(|&c| c > 0) && (target - sum).abs() <= slack {
            emit(m, sum);
        }
        return;
    }
    for c in 0..=budget {
        let s = sum + c as f64 * lam[j];
        if s > target + slack {
            break;
        }
        m[j] = c as u32;
        search(lam, j + 1, budget - c, target, slack, s, m, emit);
    }
    m[j] = 0;
}
