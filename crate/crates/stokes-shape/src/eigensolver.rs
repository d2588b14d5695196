//! Stokes Dirichlet eigenpairs on model domains.
//!
//! * Unit disk: clamped stream-function problem Δ²ψ = −λΔψ, ψ = ∂ₙψ = 0,
//!   velocity φ = ∇^⊥ψ = (∂_yψ, −∂_xψ). Modes are J_n(kr) − J_n(k)rⁿ with
//!   k = j_{n+1,m}.
//! * Radially perturbed disks: method of particular solutions in the span of
//!   J_n(kr)·trig(nθ) and rⁿ·trig(nθ). The smallest singular value of the
//!   boundary block of an orthonormalized basis matrix vanishes at eigenvalues.
//! * Unit ball: toroidal fields j_l(kr)/r^l · x × ∇H with H a solid harmonic of
//!   degree l and k a zero of j_l; pressure is constant.
//!
//! Planar fields live in the z = 0 plane of `Vec3`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, SVector};
use num_dual::{jacobian, Dual, DualNum, DualSVec64};

use crate::error::{Error, Result};
use crate::geometry::{solid_harmonic, RadialCurve, Surface};
use crate::kernels::{Mat3, Vec3};
use crate::potentials::{BoundaryField, VectorField};
use crate::quad::Legendre;
use crate::specfun::{bessel_j_orders, bessel_j_zero, sph_bessel_j, sph_bessel_j_generic, sph_bessel_j_zero};

/// Boundary nodes used for planar Neumann traces.
pub const DISK_NODES: usize = 256;
/// Relative clustering tolerance for analytic spectra.
pub const ANALYTIC_CLUSTER_TOL: f64 = 1e-6;
/// Relative clustering tolerance for numerically solved spectra.
pub const PERTURBED_CLUSTER_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trig {
    Cos,
    Sin,
}

impl Trig {
    fn eval(self, n: f64, th: f64) -> (f64, f64) {
        // value and θ-derivative
        match self {
            Trig::Cos => ((n * th).cos(), -n * (n * th).sin()),
            Trig::Sin => ((n * th).sin(), n * (n * th).cos()),
        }
    }
}

/// One term c·R(r)·trig(nθ) of a planar stream function; R = J_n(kr) or rⁿ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamTerm {
    pub n: u32,
    pub trig: Trig,
    pub bessel: bool,
    pub coef: f64,
}

/// Radial factor and its first two derivatives; `js` holds J_0..J_{n+1}(kr).
fn radial(n: u32, bessel: bool, k: f64, r: f64, js: &[f64]) -> (f64, f64, f64) {
    let nf = n as f64;
    let n = n as usize;
    if bessel {
        let x = k * r;
        let j = js[n];
        let jp = if n == 0 { -js[1] } else { 0.5 * (js[n - 1] - js[n + 1]) };
        let jpp = if x.abs() < 1e-12 {
            // J_n'' at 0
            match n {
                0 => -0.5,
                2 => 0.25,
                _ => 0.0,
            }
        } else {
            -jp / x - (1.0 - nf * nf / (x * x)) * j
        };
        (j, k * jp, k * k * jpp)
    } else {
        let p = |e: i32| if e < 0 { 0.0 } else { r.powi(e) };
        let n = n as i32;
        (p(n), nf * p(n - 1), nf * (nf - 1.0) * p(n - 2))
    }
}

/// Polar partials (ψ, ψ_r, ψ_θ, ψ_rr, ψ_rθ, ψ_θθ) of a single term.
fn term_partials(t: &StreamTerm, k: f64, r: f64, th: f64, js: &[f64]) -> [f64; 6] {
    let nf = t.n as f64;
    let (rv, rd, rdd) = radial(t.n, t.bessel, k, r, js);
    let (tv, td) = t.trig.eval(nf, th);
    let c = t.coef;
    [c * rv * tv, c * rd * tv, c * rv * td, c * rdd * tv, c * rd * td, -c * nf * nf * rv * tv]
}

fn polar_to_jet(q: [f64; 6], r: f64, th: f64) -> StreamJet {
    let [p, pr, pt, prr, prt, ptt] = q;
    let (c, s) = (th.cos(), th.sin());
    let hrr = prr;
    let hrt = prt / r - pt / (r * r);
    let htt = ptt / (r * r) + pr / r;
    let gt = pt / r;
    let grad = [pr * c - gt * s, pr * s + gt * c];
    let hxx = c * c * hrr - 2.0 * c * s * hrt + s * s * htt;
    let hxy = c * s * (hrr - htt) + (c * c - s * s) * hrt;
    let hyy = s * s * hrr + 2.0 * c * s * hrt + c * c * htt;
    StreamJet { psi: p, grad, hess: [hxx, hxy, hyy] }
}

/// Planar stream function Σ c·R(r)·trig(nθ) for wavenumber k = √λ.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFunction {
    pub k: f64,
    pub terms: Vec<StreamTerm>,
    /// Subtracted from the pressure so that it has zero mean on the domain.
    pub pressure_shift: f64,
}

/// ψ with its gradient and Hessian (xx, xy, yy).
#[derive(Debug, Clone, Copy, Default)]
pub struct StreamJet {
    pub psi: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

impl StreamFunction {
    pub fn jet(&self, x: f64, y: f64) -> StreamJet {
        let r = x.hypot(y).max(1e-300);
        let th = y.atan2(x);
        let n_max = self.terms.iter().map(|t| t.n as usize).max().unwrap_or(0);
        let js = bessel_j_orders(n_max + 1, self.k * r);
        let mut q = [0.0; 6];
        for t in &self.terms {
            let d = term_partials(t, self.k, r, th, &js);
            for (a, b) in q.iter_mut().zip(d) {
                *a += b;
            }
        }
        polar_to_jet(q, r, th)
    }

    /// Pressure −k²·(harmonic conjugate of the polynomial part) − shift.
    ///
    /// With ψ = u + v, Δu = −k²u, Δv = 0, the momentum equation gives
    /// ∇p = ∇^⊥(λψ + Δψ) = k²∇^⊥v.
    pub fn pressure(&self, x: f64, y: f64) -> f64 {
        let r = x.hypot(y);
        let th = y.atan2(x);
        let k2 = self.k * self.k;
        let mut p = 0.0;
        for t in self.terms.iter().filter(|t| !t.bessel) {
            let nf = t.n as f64;
            let rn = r.powi(t.n as i32);
            p += match t.trig {
                Trig::Cos => -k2 * t.coef * rn * (nf * th).sin(),
                Trig::Sin => k2 * t.coef * rn * (nf * th).cos(),
            };
        }
        p - self.pressure_shift
    }

    fn scale(&mut self, a: f64) {
        for t in &mut self.terms {
            t.coef *= a;
        }
        self.pressure_shift *= a;
    }
}

/// Ball toroidal eigenfield scale · j_l(kr)/r^l · x × ∇H_lm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToroidalMode {
    pub l: usize,
    pub m: i32,
    pub k: f64,
    pub scale: f64,
}

impl ToroidalMode {
    /// Unit-L² mode for the `root`-th zero of j_l.
    pub fn new(l: usize, m: i32, root: usize) -> Result<Self> {
        if l == 0 || m.unsigned_abs() as usize > l {
            return Err(Error::Input(format!("invalid toroidal index (l={l}, m={m})")));
        }
        let k = sph_bessel_j_zero(l, root)?;
        // ‖φ‖² = l(l+1)·∫₀¹ j_l(kr)² r² dr = l(l+1) j_{l+1}(k)²/2 at a zero of j_l
        let norm2 = (l * (l + 1)) as f64 * 0.5 * sph_bessel_j(l + 1, k).powi(2);
        Ok(Self { l, m, k, scale: 1.0 / norm2.sqrt() })
    }

    /// Velocity for any dual-number type (used for exact derivatives).
    pub fn velocity_generic<D: DualNum<Primitive = f64> + Copy>(&self, p: [D; 3]) -> [D; 3] {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let g = sph_bessel_j_generic(self.l, r * self.k) / r.powi(self.l as i32) * self.scale;
        let gh: [D; 3] = [0, 1, 2].map(|i| {
            let q = [0, 1, 2].map(|j| if i == j { Dual::new(p[j], D::one()) } else { Dual::from_re(p[j]) });
            solid_harmonic(self.l, self.m, q[0], q[1], q[2]).eps
        });
        [
            (p[1] * gh[2] - p[2] * gh[1]) * g,
            (p[2] * gh[0] - p[0] * gh[2]) * g,
            (p[0] * gh[1] - p[1] * gh[0]) * g,
        ]
    }

    pub fn velocity(&self, p: &Vec3) -> Vec3 {
        let v = self.velocity_generic([p.x, p.y, p.z]);
        Vec3::new(v[0], v[1], v[2])
    }

    pub fn gradient(&self, p: &Vec3) -> Mat3 {
        let f = |v: SVector<DualSVec64<3>, 3>| SVector::from(self.velocity_generic([v[0], v[1], v[2]]));
        let (_, j) = jacobian(f, &SVector::from([p.x, p.y, p.z]));
        j
    }
}

/// Eigenfield representations.
#[derive(Debug, Clone, PartialEq)]
pub enum EigenField {
    Planar(StreamFunction),
    Toroidal(ToroidalMode),
}

impl EigenField {
    pub fn velocity(&self, p: &Vec3) -> Vec3 {
        match self {
            EigenField::Planar(s) => {
                let j = s.jet(p.x, p.y);
                Vec3::new(j.grad[1], -j.grad[0], 0.0)
            }
            EigenField::Toroidal(t) => t.velocity(p),
        }
    }

    /// Full gradient, entry (m, k) = ∂_k φ^m.
    pub fn gradient(&self, p: &Vec3) -> Mat3 {
        match self {
            EigenField::Planar(s) => {
                let [hxx, hxy, hyy] = s.jet(p.x, p.y).hess;
                Mat3::new(hxy, hyy, 0.0, -hxx, -hxy, 0.0, 0.0, 0.0, 0.0)
            }
            EigenField::Toroidal(t) => t.gradient(p),
        }
    }

    pub fn pressure(&self, p: &Vec3) -> f64 {
        match self {
            EigenField::Planar(s) => s.pressure(p.x, p.y),
            EigenField::Toroidal(_) => 0.0,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        match self {
            EigenField::Planar(s) => {
                let mut s = s.clone();
                s.scale(a);
                EigenField::Planar(s)
            }
            EigenField::Toroidal(t) => EigenField::Toroidal(ToroidalMode { scale: t.scale * a, ..*t }),
        }
    }

    pub fn is_planar(&self) -> bool {
        matches!(self, EigenField::Planar(_))
    }
}

impl VectorField for EigenField {
    fn value(&self, y: &Vec3) -> Vec3 {
        self.velocity(y)
    }
    fn jacobian(&self, y: &Vec3, n: &Vec3) -> Mat3 {
        self.gradient(y) * (Mat3::identity() - n * n.transpose())
    }
}

/// An eigenpair with its boundary Neumann trace ∂φ/∂n.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub eigenvalue: f64,
    pub field: EigenField,
    pub trace: BoundaryField,
    pub cluster: usize,
}

impl EigenPair {
    pub fn pressure(&self, p: &Vec3) -> f64 {
        self.field.pressure(p)
    }
}

/// Ordered eigenpairs, their clusters and the boundary they are traced on.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub pairs: Vec<EigenPair>,
    pub tolerance: f64,
    pub boundary: Surface,
    /// Relative eigenvalue change against a coarser resolution (solved spectra).
    pub refinement: Vec<f64>,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.eigenvalue).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Index lists of the clusters, in order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = vec![];
        for (i, p) in self.pairs.iter().enumerate() {
            match out.last_mut() {
                Some(c) if self.pairs[c[0]].cluster == p.cluster => c.push(i),
                _ => out.push(vec![i]),
            }
        }
        out
    }

    pub fn cluster(&self, id: usize) -> Vec<&EigenPair> {
        self.pairs.iter().filter(|p| p.cluster == id).collect()
    }

    pub fn multiplicity(&self, i: usize) -> usize {
        let id = self.pairs[i].cluster;
        self.pairs.iter().filter(|p| p.cluster == id).count()
    }
}

/// Cluster ids of a nondecreasing sequence: consecutive values within
/// `rel_tol`·value are chained into one (maximal) cluster.
pub fn cluster_ids(values: &[f64], rel_tol: f64) -> Vec<usize> {
    let mut ids = Vec::with_capacity(values.len());
    let mut id = 0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 && (v - values[i - 1]).abs() > rel_tol * v.abs().max(values[i - 1].abs()) {
            id += 1;
        }
        ids.push(id);
    }
    ids
}

/// Per-node ∂φ/∂n on a boundary.
pub fn neumann_trace_on(field: &EigenField, boundary: &Surface) -> BoundaryField {
    let p = &boundary.panels;
    BoundaryField { values: p.nodes.iter().zip(&p.normals).map(|(x, n)| field.gradient(x) * n).collect() }
}

/// Neumann trace of a pair on its own boundary sampling.
pub fn neumann_trace(pair: &EigenPair, boundary: &Surface) -> BoundaryField {
    neumann_trace_on(&pair.field, boundary)
}

fn planar_norm2_disk(n: u32, bessel_coef: f64, power_coef: f64, k: f64) -> f64 {
    // ∫|∇ψ|² = c_n ∫₀¹ (R'² + n²R²/r²) r dr, c_n = π (n ≥ 1) or 2π
    let g = Legendre::new(48);
    let nf = n as f64;
    let rad = g.integrate(0.0, 1.0, |r| {
        let js = bessel_j_orders(n as usize + 1, k * r);
        let (a, ad, _) = radial(n, true, k, r, &js);
        let (b, bd, _) = radial(n, false, k, r, &js);
        let rv = bessel_coef * a + power_coef * b;
        let rd = bessel_coef * ad + power_coef * bd;
        (rd * rd + nf * nf * rv * rv / (r * r)) * r
    });
    rad * if n == 0 { TAU } else { PI }
}

/// Disk spectrum for angular indices 0..=n_max and radial indices 1..=k_max.
pub fn disk_spectrum_2d(n_max: u32, k_max: usize) -> Result<Spectrum> {
    if k_max == 0 {
        return Err(Error::Input("k_max must be at least 1".into()));
    }
    let boundary = Surface::curve(RadialCurve::circle(1.0), DISK_NODES);
    let mut modes = vec![];
    for n in 0..=n_max {
        for root in 1..=k_max {
            let k = bessel_j_zero(n + 1, root)?;
            let pc = -puruspe::Jn(n, k);
            let norm = planar_norm2_disk(n, 1.0, pc, k).sqrt();
            let trigs: &[Trig] = if n == 0 { &[Trig::Cos] } else { &[Trig::Cos, Trig::Sin] };
            for &trig in trigs {
                let terms = vec![
                    StreamTerm { n, trig, bessel: true, coef: 1.0 / norm },
                    StreamTerm { n, trig, bessel: false, coef: pc / norm },
                ];
                modes.push((k * k, n, trig, StreamFunction { k, terms, pressure_shift: 0.0 }));
            }
        }
    }
    modes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then((a.2 == Trig::Sin).cmp(&(b.2 == Trig::Sin))));
    let values: Vec<f64> = modes.iter().map(|m| m.0).collect();
    let ids = cluster_ids(&values, ANALYTIC_CLUSTER_TOL);
    let pairs = modes
        .into_iter()
        .zip(ids)
        .map(|((lam, _, _, s), cluster)| {
            let field = EigenField::Planar(s);
            let trace = neumann_trace_on(&field, &boundary);
            EigenPair { eigenvalue: lam, field, trace, cluster }
        })
        .collect();
    Ok(Spectrum { pairs, tolerance: ANALYTIC_CLUSTER_TOL, boundary, refinement: vec![] })
}

/// Toroidal spectrum of the unit ball for 1 ≤ l ≤ l_max, radial roots
/// 1..=k_max, each with multiplicity 2l + 1. Traces are sampled on `boundary`,
/// which must be the unit sphere.
pub fn ball_toroidal_spectrum_3d(l_max: usize, k_max: usize, boundary: &Surface) -> Result<Spectrum> {
    if l_max == 0 || k_max == 0 {
        return Err(Error::Input("l_max and k_max must be at least 1".into()));
    }
    let mut modes = vec![];
    for l in 1..=l_max {
        for root in 1..=k_max {
            for m in -(l as i32)..=(l as i32) {
                let t = ToroidalMode::new(l, m, root)?;
                modes.push((t.k * t.k, t));
            }
        }
    }
    modes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.l.cmp(&b.1.l)).then(a.1.m.cmp(&b.1.m)));
    let values: Vec<f64> = modes.iter().map(|m| m.0).collect();
    let ids = cluster_ids(&values, ANALYTIC_CLUSTER_TOL);
    let pairs = modes
        .into_iter()
        .zip(ids)
        .map(|((lam, t), cluster)| {
            let field = EigenField::Toroidal(t);
            let trace = neumann_trace_on(&field, boundary);
            EigenPair { eigenvalue: lam, field, trace, cluster }
        })
        .collect();
    Ok(Spectrum { pairs, tolerance: ANALYTIC_CLUSTER_TOL, boundary: boundary.clone(), refinement: vec![] })
}

// --- particular solutions on perturbed disks ---------------------------------

/// Discretization of the particular-solution solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpsResolution {
    /// Highest angular index in the basis.
    pub n_angular: u32,
    /// Collocation points on the boundary.
    pub n_boundary: usize,
    /// Interior points fixing the normalization.
    pub n_interior: usize,
    /// Nodes of the returned boundary sampling.
    pub boundary_nodes: usize,
    /// k-scan step.
    pub scan_step: f64,
    pub cluster_tol: f64,
}

impl Default for MpsResolution {
    fn default() -> Self {
        Self {
            n_angular: 20,
            n_boundary: 120,
            n_interior: 40,
            boundary_nodes: DISK_NODES,
            scan_step: 0.02,
            cluster_tol: PERTURBED_CLUSTER_TOL,
        }
    }
}

/// σ below which a minimum counts as an eigenvalue.
const MPS_ACCEPT: f64 = 1e-6;

struct Mps<'a> {
    curve: &'a RadialCurve,
    basis: Vec<(u32, Trig, bool)>,
    boundary: Vec<(f64, f64, Vec3)>, // (x, y, normal)
    interior: Vec<(f64, f64)>,
}

impl<'a> Mps<'a> {
    fn new(curve: &'a RadialCurve, res: &MpsResolution) -> Self {
        let mut basis = vec![];
        for n in 0..=res.n_angular {
            for bessel in [true, false] {
                basis.push((n, Trig::Cos, bessel));
                if n > 0 {
                    basis.push((n, Trig::Sin, bessel));
                }
            }
        }
        let boundary = (0..res.n_boundary)
            .map(|i| {
                let th = TAU * (i as f64 + 0.5) / res.n_boundary as f64;
                let p = curve.point(th);
                (p.x, p.y, curve.normal(th))
            })
            .collect();
        // golden-angle spiral at fixed relative depth
        let golden = PI * (3.0 - 5f64.sqrt());
        let interior = (0..res.n_interior)
            .map(|i| {
                let th = golden * i as f64;
                let s = 0.2 + 0.6 * ((i as f64 + 0.5) / res.n_interior as f64).sqrt();
                let r = curve.r(th) * s;
                (r * th.cos(), r * th.sin())
            })
            .collect();
        Self { curve, basis, boundary, interior }
    }

    /// Jets of every basis function at one point.
    fn basis_jets(&self, k: f64, x: f64, y: f64) -> Vec<StreamJet> {
        let r = x.hypot(y).max(1e-300);
        let th = y.atan2(x);
        let n_max = self.basis.iter().map(|b| b.0 as usize).max().unwrap_or(0);
        let js = bessel_j_orders(n_max + 1, k * r);
        self.basis
            .iter()
            .map(|&(n, trig, bessel)| {
                polar_to_jet(term_partials(&StreamTerm { n, trig, bessel, coef: 1.0 }, k, r, th, &js), r, th)
            })
            .collect()
    }

    /// Basis matrix: boundary values, boundary normal derivatives / k, interior values.
    fn matrix(&self, k: f64) -> (DMatrix<f64>, Vec<f64>) {
        let nb = self.boundary.len();
        let rows = 2 * nb + self.interior.len();
        let mut a = DMatrix::zeros(rows, self.basis.len());
        for (i, (x, y, n)) in self.boundary.iter().enumerate() {
            for (j, jet) in self.basis_jets(k, *x, *y).iter().enumerate() {
                a[(i, j)] = jet.psi;
                a[(nb + i, j)] = (jet.grad[0] * n.x + jet.grad[1] * n.y) / k;
            }
        }
        for (i, (x, y)) in self.interior.iter().enumerate() {
            for (j, jet) in self.basis_jets(k, *x, *y).iter().enumerate() {
                a[(2 * nb + i, j)] = jet.psi;
            }
        }
        let mut scales = vec![0.0; self.basis.len()];
        for (j, sc) in scales.iter_mut().enumerate() {
            let nrm = a.column(j).norm();
            *sc = if nrm > 0.0 { 1.0 / nrm } else { 1.0 };
            a.column_mut(j).scale_mut(*sc);
        }
        (a, scales)
    }

    /// Ascending singular values of the boundary block of Q, with right
    /// singular vectors when requested, plus the R factor and column scales.
    #[allow(clippy::type_complexity)]
    fn tension(&self, k: f64, vectors: bool) -> (Vec<f64>, Option<DMatrix<f64>>, DMatrix<f64>, Vec<f64>) {
        let (a, scales) = self.matrix(k);
        let qr = a.qr();
        let q = qr.q();
        let r = qr.r();
        let qb = q.rows(0, 2 * self.boundary.len()).into_owned();
        let svd = qb.svd(false, vectors);
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let sv: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
        let vt = svd.v_t.map(|vt| {
            let mut m = DMatrix::zeros(vt.ncols(), idx.len());
            for (c, &i) in idx.iter().enumerate() {
                m.set_column(c, &vt.row(i).transpose());
            }
            m
        });
        (sv, vt, r, scales)
    }

    fn sigma(&self, k: f64, which: usize) -> f64 {
        self.tension(k, false).0[which]
    }

    /// Golden-section minimization of σ₁ on [a, b].
    fn refine(&self, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (self.sigma(c, 0), self.sigma(d, 0));
        while b - a > 1e-13 * b.abs().max(1.0) {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.sigma(c, 0);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.sigma(d, 0);
            }
        }
        0.5 * (a + b)
    }

    /// Local minima of σ₁ on a uniform grid (bracketed by neighbours).
    fn scan(&self, lo: f64, hi: f64, step: f64) -> Vec<(f64, f64)> {
        let n = ((hi - lo) / step).ceil() as usize + 1;
        let ks: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        let s: Vec<f64> = ks.iter().map(|&k| self.sigma(k, 0)).collect();
        (1..n - 1).filter(|&i| s[i] < s[i - 1] && s[i] <= s[i + 1]).map(|i| (ks[i - 1], ks[i + 1])).collect()
    }

    /// Stream functions spanning the near-null space at k (first `count`).
    fn fields(&self, k: f64, count: usize) -> Vec<StreamFunction> {
        let (_, v, r, scales) = self.tension(k, true);
        let v = v.expect("vectors requested");
        (0..count)
            .map(|c| {
                let coef = r.clone().solve_upper_triangular(&DVector::from_column_slice(v.column(c).as_slice()));
                let coef = coef.unwrap_or_else(|| DVector::zeros(scales.len()));
                let terms = self
                    .basis
                    .iter()
                    .enumerate()
                    .map(|(j, &(n, trig, bessel))| StreamTerm { n, trig, bessel, coef: coef[j] * scales[j] })
                    .collect();
                StreamFunction { k, terms, pressure_shift: 0.0 }
            })
            .collect()
    }

    /// Polar quadrature on the mapped disk: (x, y, weight).
    fn area_rule(&self) -> Vec<(f64, f64, f64)> {
        let g = Legendre::new(40);
        let nt = 256;
        let mut out = Vec::with_capacity(40 * nt);
        for i in 0..nt {
            let th = TAU * i as f64 / nt as f64;
            let rb = self.curve.r(th);
            for (s, w) in g.mapped(0.0, 1.0) {
                let r = s * rb;
                out.push((r * th.cos(), r * th.sin(), w * rb * r * TAU / nt as f64));
            }
        }
        out
    }
}

fn l2_inner(rule: &[(f64, f64, f64)], a: &StreamFunction, b: &StreamFunction) -> f64 {
    rule.iter()
        .map(|&(x, y, w)| {
            let (ga, gb) = (a.jet(x, y).grad, b.jet(x, y).grad);
            (ga[0] * gb[0] + ga[1] * gb[1]) * w
        })
        .sum()
}

/// Mean of the pressure over the mapped disk.
fn pressure_mean(rule: &[(f64, f64, f64)], s: &StreamFunction) -> f64 {
    let area: f64 = rule.iter().map(|r| r.2).sum();
    rule.iter().map(|&(x, y, w)| s.pressure(x, y) * w).sum::<f64>() / area
}

fn check_curve(curve: &RadialCurve) -> Result<()> {
    for i in 0..4096 {
        let th = TAU * i as f64 / 4096.0;
        if curve.r(th) <= 0.0 {
            return Err(Error::Domain(format!("radial map degenerates at θ = {th:.4}")));
        }
    }
    Ok(())
}

/// The `count` lowest eigenpairs of the clamped stream-function problem on
/// the domain bounded by `curve`.
pub fn perturbed_disk_spectrum(curve: &RadialCurve, res: &MpsResolution, count: usize) -> Result<Spectrum> {
    check_curve(curve)?;
    let mps = Mps::new(curve, res);
    let scale = curve.radius;
    // domain monotonicity: Ω ⊂ B(r_max) gives k₁(Ω) ≥ j₁,₁/r_max
    let r_max = (0..4096).map(|i| curve.r(TAU * i as f64 / 4096.0)).fold(0.0, f64::max);
    let mut lo = 0.95 * bessel_j_zero(1, 1)? / r_max;
    let mut found: Vec<(f64, StreamFunction)> = vec![];
    let rule = mps.area_rule();
    while found.len() < count {
        let hi = lo + 2.0 / scale;
        for (a, b) in mps.scan(lo, hi, res.scan_step) {
            let mut ks = vec![mps.refine(a, b)];
            if mps.sigma(ks[0], 0) > MPS_ACCEPT {
                continue;
            }
            // split pairs closer than the scan step: σ₂ at the minimum is about
            // slope·(k_b − k_a), which sizes the fine search
            let s2 = mps.sigma(ks[0], 1);
            if s2 < 0.05 && s2 > MPS_ACCEPT {
                let h = 1e-3 * res.scan_step;
                let slope = ((mps.sigma(ks[0] + h, 0) - mps.sigma(ks[0], 0)) / h)
                    .abs()
                    .max(((mps.sigma(ks[0] - h, 0) - mps.sigma(ks[0], 0)) / h).abs());
                let dk = (s2 / slope.max(1e-12)).min(res.scan_step);
                let w = 3.0 * dk;
                for (c, d) in mps.scan(ks[0] - w, ks[0] + w, dk / 8.0) {
                    let kk = mps.refine(c, d);
                    if mps.sigma(kk, 0) < MPS_ACCEPT && !ks.iter().any(|k| (k - kk).abs() < 1e-7) {
                        ks.push(kk);
                    }
                }
            }
            for k in ks {
                if found.iter().any(|(kk, _)| (kk - k).abs() < 1e-7) {
                    continue;
                }
                let (sv, _, _, _) = mps.tension(k, false);
                let mult = sv.iter().take_while(|s| **s < MPS_ACCEPT).count().max(1);
                let mut fs = mps.fields(k, mult);
                // Gram–Schmidt in L²(Ω)
                for i in 0..fs.len() {
                    for j in 0..i {
                        let c = l2_inner(&rule, &fs[i], &fs[j]);
                        let prev = fs[j].terms.clone();
                        for (t, p) in fs[i].terms.iter_mut().zip(prev) {
                            t.coef -= c * p.coef;
                        }
                    }
                    let n = l2_inner(&rule, &fs[i], &fs[i]).sqrt();
                    // sign: positive ψ-weighted mean, so repeated solves agree
                    let m: f64 = rule.iter().map(|&(x, y, w)| fs[i].jet(x, y).psi * w).sum();
                    fs[i].scale(if m < 0.0 { -1.0 / n } else { 1.0 / n });
                    fs[i].pressure_shift = pressure_mean(&rule, &fs[i]);
                }
                for f in fs {
                    found.push((k, f));
                }
            }
        }
        lo = hi - res.scan_step;
        if lo > 200.0 / scale {
            return Err(Error::Convergence("eigenvalue scan exceeded k = 200".into()));
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    found.truncate(count);
    // coarser basis for the refinement report
    let coarse = MpsResolution { n_angular: res.n_angular.saturating_sub(6).max(4), ..*res };
    let cm = Mps::new(curve, &coarse);
    let refinement = found
        .iter()
        .map(|(k, _)| {
            // bracket excludes neighbouring distinct eigenvalues
            let gap = found
                .iter()
                .map(|(kk, _)| (kk - k).abs())
                .filter(|d| *d > 1e-7)
                .fold(res.scan_step, f64::min);
            let kc = cm.refine(k - 0.4 * gap, k + 0.4 * gap);
            ((kc * kc) - k * k).abs() / (k * k)
        })
        .collect();
    let boundary = Surface::curve(curve.clone(), res.boundary_nodes);
    let values: Vec<f64> = found.iter().map(|(k, _)| k * k).collect();
    let ids = cluster_ids(&values, res.cluster_tol);
    let pairs = found
        .into_iter()
        .zip(ids)
        .map(|((k, s), cluster)| {
            let field = EigenField::Planar(s);
            let trace = neumann_trace_on(&field, &boundary);
            EigenPair { eigenvalue: k * k, field, trace, cluster }
        })
        .collect();
    Ok(Spectrum { pairs, tolerance: res.cluster_tol, boundary, refinement })
}

/// Area rule on the domain bounded by `curve` (used by volume checks).
pub fn planar_area_rule(curve: &RadialCurve) -> Vec<(Vec3, f64)> {
    let res = MpsResolution { n_angular: 1, ..Default::default() };
    Mps::new(curve, &res).area_rule().into_iter().map(|(x, y, w)| (Vec3::new(x, y, 0.0), w)).collect()
}

/// Ball volume rule: Gauss in r × cubed-sphere directions.
pub fn ball_volume_rule(n_radial: usize, n_sphere: usize) -> Vec<(Vec3, f64)> {
    let (dirs, wts, _) = crate::geometry::cubed_sphere(n_sphere, 4);
    let g = Legendre::new(n_radial);
    let mut out = vec![];
    for (r, wr) in g.mapped(0.0, 1.0) {
        for (d, w) in dirs.iter().zip(&wts) {
            out.push((d * r, wr * w * r * r));
        }
    }
    out
}
