//! Nyström-style boundary operators on panelized surfaces.
//!
//! On-surface weakly singular operators use the self-omitted node rule (first
//! order). Hypersingular and p.v. integrals at a target x use a local rule: the
//! chart disk around x in polar coordinates (the θ-average kills the odd 1/r²
//! part, which is the symmetric-exclusion p.v.), blended with the panel rule
//! through the cutoff β_δ, so both pieces see smooth integrands.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{bump_tangential_gradient, bump_value, chart_at, chart_jacobian, cutoff, BumpVariation, Surface, Vec2};
use crate::kernels::{
    adjoint_kernel, conormal_second_kernel, double_layer_kernel, gamma_lambda, ConormalData, Mat3, Vec3,
};
use crate::quad::Legendre;

/// Scalar field on the surface with its tangential gradient.
pub trait ScalarField: Sync {
    fn value(&self, y: &Vec3) -> f64;
    /// Surface gradient at y (n is the unit normal at y).
    fn gradient(&self, y: &Vec3, n: &Vec3) -> Vec3;
}

/// Vector field on the surface with its tangential Jacobian J_{mk} = ∂_k u^m.
pub trait VectorField: Sync {
    fn value(&self, y: &Vec3) -> Vec3;
    fn jacobian(&self, y: &Vec3, n: &Vec3) -> Mat3;
}

impl ScalarField for BumpVariation {
    fn value(&self, y: &Vec3) -> f64 {
        bump_value(self, y)
    }
    fn gradient(&self, y: &Vec3, _n: &Vec3) -> Vec3 {
        bump_tangential_gradient(self, y)
    }
}

const FD_STEP: f64 = 1e-6;

fn tangents(n: &Vec3) -> (Vec3, Vec3) {
    crate::geometry::tangent_frame(n)
}

/// Tangential Jacobian of an ambient map by central differences.
pub fn fd_jacobian<F: Fn(&Vec3) -> Vec3>(f: F, y: &Vec3, n: &Vec3) -> Mat3 {
    let (t1, t2) = tangents(n);
    let mut j = Mat3::zeros();
    for t in [t1, t2] {
        let d = (f(&(y + t * FD_STEP)) - f(&(y - t * FD_STEP))) / (2.0 * FD_STEP);
        j += d * t.transpose();
    }
    j
}

/// Ambient scalar function restricted to the surface (gradient by differences).
pub struct FnScalar<F>(pub F);

impl<F: Fn(&Vec3) -> f64 + Sync> ScalarField for FnScalar<F> {
    fn value(&self, y: &Vec3) -> f64 {
        (self.0)(y)
    }
    fn gradient(&self, y: &Vec3, n: &Vec3) -> Vec3 {
        let (t1, t2) = tangents(n);
        [t1, t2].iter().fold(Vec3::zeros(), |g, t| {
            g + t * (((self.0)(&(y + t * FD_STEP)) - (self.0)(&(y - t * FD_STEP))) / (2.0 * FD_STEP))
        })
    }
}

/// Ambient vector function restricted to the surface (Jacobian by differences).
pub struct FnVector<F>(pub F);

impl<F: Fn(&Vec3) -> Vec3 + Sync> VectorField for FnVector<F> {
    fn value(&self, y: &Vec3) -> Vec3 {
        (self.0)(y)
    }
    fn jacobian(&self, y: &Vec3, n: &Vec3) -> Mat3 {
        fd_jacobian(&self.0, y, n)
    }
}

/// Constant vector field.
pub struct ConstVector(pub Vec3);

impl VectorField for ConstVector {
    fn value(&self, _y: &Vec3) -> Vec3 {
        self.0
    }
    fn jacobian(&self, _y: &Vec3, _n: &Vec3) -> Mat3 {
        Mat3::zeros()
    }
}

/// Linear field y ↦ Ay with its tangential Jacobian A(I − nnᵀ).
#[derive(Debug, Clone, Copy)]
pub struct LinearField(pub Mat3);

impl VectorField for LinearField {
    fn value(&self, y: &Vec3) -> Vec3 {
        self.0 * y
    }
    fn jacobian(&self, _y: &Vec3, n: &Vec3) -> Mat3 {
        self.0 * (Mat3::identity() - n * n.transpose())
    }
}

/// Product α ψ, differentiated numerically as a single field.
pub struct Product<'a> {
    pub alpha: &'a dyn ScalarField,
    pub psi: &'a dyn VectorField,
}

impl VectorField for Product<'_> {
    fn value(&self, y: &Vec3) -> Vec3 {
        self.psi.value(y) * self.alpha.value(y)
    }
    fn jacobian(&self, y: &Vec3, n: &Vec3) -> Mat3 {
        fd_jacobian(|p| self.value(p), y, n)
    }
}

// --- fields on nodes ----------------------------------------------------------

/// Per-node 3-vectors on a panelized surface.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    pub values: Vec<Vec3>,
}

impl BoundaryField {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![Vec3::zeros(); n] }
    }

    pub fn sample(surface: &Surface, f: &dyn VectorField) -> Self {
        Self { values: surface.panels.nodes.iter().map(|y| f.value(y)).collect() }
    }

    pub fn from_fn<F: Fn(&Vec3) -> Vec3>(surface: &Surface, f: F) -> Self {
        Self { values: surface.panels.nodes.iter().map(f).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self, surface: &Surface) -> Result<()> {
        if self.values.len() != surface.panels.len() {
            return Err(Error::Input(format!(
                "field has {} nodes, surface has {}",
                self.values.len(),
                surface.panels.len()
            )));
        }
        if self.values.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Input("non-finite density".into()));
        }
        Ok(())
    }

    /// Weighted L² norm.
    pub fn l2_norm(&self, surface: &Surface) -> f64 {
        self.values.iter().zip(&surface.panels.weights).map(|(v, w)| v.norm_squared() * w).sum::<f64>().sqrt()
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self { values: self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self { values: self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { values: self.values.iter().map(|a| a * s).collect() }
    }
}

// --- single and double layers ----------------------------------------------

/// ∫ over a flat square of area w of Γ⁰(x−y) dσ_y, centred at x with normal n.
fn self_panel_gamma0(w: f64, n: &Vec3) -> Mat3 {
    let c = 4.0 * (1.0 + 2f64.sqrt()).ln() * w.sqrt();
    let proj = Mat3::identity() - n * n.transpose();
    (Mat3::identity() + proj * 0.5) * (c / (8.0 * PI))
}

fn node_index(surface: &Surface, x: &Vec3) -> Option<usize> {
    let tol = 1e-12 * (1.0 + x.norm());
    surface.panels.nodes.iter().position(|y| (y - x).norm() <= tol)
}

/// S^λ[φ](x) and the pressure F[φ](x). When x is a node, the self panel is
/// integrated in its tangent plane (Γ⁰ part only; Γ^λ − Γ⁰ is bounded).
pub fn single_layer(surface: &Surface, density: &BoundaryField, lambda: f64, x: &Vec3) -> Result<(Vec3, f64)> {
    density.check(surface)?;
    let p = &surface.panels;
    let me = node_index(surface, x);
    let mut u = Vec3::zeros();
    let mut pr = 0.0;
    for k in 0..p.len() {
        if Some(k) == me {
            u += self_panel_gamma0(p.weights[k], &p.normals[k]) * density.values[k];
            continue;
        }
        let kv = gamma_lambda(&(x - p.nodes[k]), lambda)?;
        u += kv.g * density.values[k] * p.weights[k];
        pr += kv.f.dot(&density.values[k]) * p.weights[k];
    }
    Ok((u, pr))
}

/// D^λ[φ](x) by the plain node rule (x away from the surface).
pub fn double_layer(surface: &Surface, density: &BoundaryField, lambda: f64, x: &Vec3) -> Result<Vec3> {
    density.check(surface)?;
    let p = &surface.panels;
    let mut u = Vec3::zeros();
    for k in 0..p.len() {
        u += double_layer_kernel(&(x - p.nodes[k]), &p.normals[k], lambda)? * density.values[k] * p.weights[k];
    }
    Ok(u)
}

/// K^λ[φ] at node i by the self-omitted rule.
fn k_at_node(surface: &Surface, density: &BoundaryField, lambda: f64, i: usize) -> Result<Vec3> {
    let p = &surface.panels;
    let x = p.nodes[i];
    let mut u = Vec3::zeros();
    for k in 0..p.len() {
        if k != i {
            u += double_layer_kernel(&(x - p.nodes[k]), &p.normals[k], lambda)? * density.values[k] * p.weights[k];
        }
    }
    Ok(u)
}

/// K^λ[φ] on all nodes.
pub fn k_apply(surface: &Surface, density: &BoundaryField, lambda: f64) -> Result<BoundaryField> {
    density.check(surface)?;
    let values = (0..surface.panels.len())
        .into_par_iter()
        .map(|i| k_at_node(surface, density, lambda, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundaryField { values })
}

/// (½I + K^λ)[φ] on the nodes.
pub fn double_layer_trace(surface: &Surface, density: &BoundaryField, lambda: f64) -> Result<BoundaryField> {
    let k = k_apply(surface, density, lambda)?;
    Ok(k.add(&density.scale(0.5)))
}

/// (K^λ)*[φ] on all nodes (self-omitted).
pub fn k_adjoint_apply(surface: &Surface, density: &BoundaryField, lambda: f64) -> Result<BoundaryField> {
    density.check(surface)?;
    let p = &surface.panels;
    let values = (0..p.len())
        .into_par_iter()
        .map(|i| {
            let x = p.nodes[i];
            let mut u = Vec3::zeros();
            for k in 0..p.len() {
                if k != i {
                    u += adjoint_kernel(&(x - p.nodes[k]), &p.normals[i], lambda)? * density.values[k] * p.weights[k];
                }
            }
            Ok(u)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundaryField { values })
}

/// K⁰[φ](x) = −(3/4π)∫ (x−y)⟨x−y,n_y⟩⟨x−y,φ(y)⟩/|x−y|⁵ dσ_y, self-omitted if
/// x is a node. On a sphere of radius R the identity ⟨x−y,n_y⟩ = −|x−y|²/2R
/// replaces the normal product.
pub fn k0_apply(surface: &Surface, density: &BoundaryField, x: &Vec3) -> Result<Vec3> {
    density.check(surface)?;
    let p = &surface.panels;
    let me = node_index(surface, x);
    let sphere_r = match surface.kind {
        crate::geometry::SurfaceKind::Sphere { radius } => Some(radius),
        _ => None,
    };
    let mut u = Vec3::zeros();
    for k in 0..p.len() {
        if Some(k) == me {
            continue;
        }
        let z = x - p.nodes[k];
        let r2 = z.norm_squared();
        let zn = match sphere_r {
            Some(rad) if me.is_some() => -r2 / (2.0 * rad),
            _ => z.dot(&p.normals[k]),
        };
        u += z * (-3.0 / (4.0 * PI) * zn * z.dot(&density.values[k]) / (r2 * r2 * r2.sqrt()) * p.weights[k]);
    }
    Ok(u)
}

/// max over node pairs of |⟨x−y,n_y⟩ + |x−y|²/2R| on a sphere.
pub fn sphere_identity_residual(surface: &Surface) -> Result<f64> {
    let crate::geometry::SurfaceKind::Sphere { radius } = surface.kind else {
        return Err(Error::Input("sphere identity needs a sphere".into()));
    };
    let p = &surface.panels;
    let res = (0..p.len())
        .into_par_iter()
        .map(|i| {
            let mut m: f64 = 0.0;
            for k in 0..p.len() {
                let z = p.nodes[i] - p.nodes[k];
                m = m.max((z.dot(&p.normals[k]) + z.norm_squared() / (2.0 * radius)).abs());
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    Ok(res)
}

/// Limit of D⁰[φ] from inside at x − h n_x, using D⁰[const] = const in Ω to
/// subtract the near-singular part, plus the smooth D^λ − D⁰ remainder.
pub fn double_layer_interior(surface: &Surface, density: &BoundaryField, lambda: f64, i: usize, h: f64) -> Result<Vec3> {
    let p = &surface.panels;
    let x = p.nodes[i] - p.normals[i] * h;
    let phi_x = density.values[i];
    let mut u = phi_x;
    for k in 0..p.len() {
        let z = x - p.nodes[k];
        let k0 = double_layer_kernel(&z, &p.normals[k], 0.0)?;
        u += k0 * (density.values[k] - phi_x) * p.weights[k];
        if lambda != 0.0 {
            let kl = double_layer_kernel(&z, &p.normals[k], lambda)?;
            u += (kl - k0) * density.values[k] * p.weights[k];
        }
    }
    Ok(u)
}

/// ‖interior-limit D^λφ − (½I + K^λ)φ‖ / ‖φ‖ on all nodes.
pub fn jump_relation_error(surface: &Surface, density: &BoundaryField, lambda: f64, h: f64) -> Result<f64> {
    let trace = double_layer_trace(surface, density, lambda)?;
    let inner = (0..surface.panels.len())
        .into_par_iter()
        .map(|i| double_layer_interior(surface, density, lambda, i, h))
        .collect::<Result<Vec<_>>>()?;
    let diff = BoundaryField { values: inner }.sub(&trace);
    Ok(diff.l2_norm(surface) / density.l2_norm(surface))
}

// --- dense assembly ------------------------------------------------------------

/// Which boundary operator a matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelTag {
    Single,
    Double,
    Adjoint,
    DeltaPart,
}

impl KernelTag {
    pub fn name(&self) -> &'static str {
        match self {
            KernelTag::Single => "S",
            KernelTag::Double => "K",
            KernelTag::Adjoint => "K*",
            KernelTag::DeltaPart => "Delta-nn",
        }
    }
}

/// Dense 3N×3N operator matrix.
#[derive(Debug, Clone)]
pub struct OperatorAssembly {
    pub matrix: DMatrix<f64>,
    pub tag: KernelTag,
    pub lambda: f64,
}

fn block(surface: &Surface, tag: KernelTag, lambda: f64, i: usize, k: usize) -> Result<Mat3> {
    let p = &surface.panels;
    if i == k {
        return Ok(match tag {
            KernelTag::Single => self_panel_gamma0(p.weights[i], &p.normals[i]),
            _ => Mat3::zeros(),
        });
    }
    let z = p.nodes[i] - p.nodes[k];
    let w = p.weights[k];
    Ok(match tag {
        KernelTag::Single => gamma_lambda(&z, lambda)?.g * w,
        KernelTag::Double => double_layer_kernel(&z, &p.normals[k], lambda)? * w,
        KernelTag::Adjoint => adjoint_kernel(&z, &p.normals[i], lambda)? * w,
        KernelTag::DeltaPart => {
            let x = ConormalData::new(p.nodes[i], p.normals[i]);
            let y = ConormalData::new(p.nodes[k], p.normals[k]);
            conormal_second_kernel(&x, &y, lambda)?.delta_part * w
        }
    })
}

/// Assemble the node-rule matrix of an operator (rows in parallel).
pub fn assemble(surface: &Surface, tag: KernelTag, lambda: f64) -> Result<OperatorAssembly> {
    let n = surface.panels.len();
    if n == 0 {
        return Err(Error::Input("surface has no panelization".into()));
    }
    if n > 6000 {
        return Err(Error::Resource(format!("dense assembly of {n} nodes")));
    }
    let rows = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|k| block(surface, tag, lambda, i, k)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    for (i, row) in rows.iter().enumerate() {
        for (k, b) in row.iter().enumerate() {
            m.view_mut((3 * i, 3 * k), (3, 3)).copy_from(b);
        }
    }
    Ok(OperatorAssembly { matrix: m, tag, lambda })
}

impl OperatorAssembly {
    pub fn apply(&self, f: &BoundaryField) -> BoundaryField {
        let v = nalgebra::DVector::from_iterator(3 * f.len(), f.values.iter().flat_map(|v| v.iter().copied()));
        let out = &self.matrix * v;
        BoundaryField { values: out.as_slice().chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect() }
    }

    /// Flat little-endian f64 array (row-major) after a one-line text header.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::Resource(e.to_string()))?;
        let (r, c) = self.matrix.shape();
        let hdr = format!("stokes-operator v1 tag={} lambda={} rows={r} cols={c} f64le row-major\n", self.tag.name(), self.lambda);
        let mut buf = hdr.into_bytes();
        for i in 0..r {
            for j in 0..c {
                buf.extend_from_slice(&self.matrix[(i, j)].to_le_bytes());
            }
        }
        f.write_all(&buf).map_err(|e| Error::Resource(e.to_string()))
    }
}

// --- local p.v. rule and the hypersingular operator ---------------------------

/// Polar chart rule: Gauss–Legendre on radial breaks, trapezoid in angle.
#[derive(Debug, Clone)]
pub struct PolarRule {
    pub breaks: Vec<f64>,
    pub n_gauss: usize,
    pub n_theta: usize,
}

impl PolarRule {
    /// Breaks graded from the panel size h out to the chart radius.
    pub fn for_mesh(h: f64, radius: f64) -> Self {
        let mut b = vec![0.0, 0.5 * h];
        let mut r = h;
        while r < radius {
            b.push(r);
            r *= 2.0;
        }
        b.push(radius);
        Self { breaks: b, n_gauss: 8, n_theta: 32 }
    }

    /// Rule resolving a Gaussian bump of width ε centred within ε of x.
    pub fn for_bump(eps: f64, radius: f64) -> Self {
        let mut b = vec![0.0];
        for f in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0] {
            if f * eps < radius {
                b.push(f * eps);
            }
        }
        let mut r = 8.0 * eps;
        while r < radius {
            b.push(r);
            r *= 2.0;
        }
        b.push(radius);
        Self { breaks: b, n_gauss: 16, n_theta: 96 }
    }
}

/// Quadrature points (y, n_y, w) for integrals at a fixed target x.
#[derive(Debug, Clone)]
pub struct LocalRule {
    pub x: Vec3,
    pub n_x: Vec3,
    pub points: Vec<(Vec3, Vec3, f64)>,
}

/// Chart disk in polar coordinates blended with the panel rule by β_δ. On a
/// surface without panels (flat patch) the chart disk is used alone.
pub fn local_rule(surface: &Surface, x: &Vec3, rule: &PolarRule) -> Result<LocalRule> {
    if surface.is_curve() {
        return Err(Error::Input("local rules are for surfaces in ℝ³".into()));
    }
    let chart = chart_at(surface, x)?;
    let delta = chart.delta();
    let blended = !surface.panels.is_empty();
    let gl = Legendre::new(rule.n_gauss);
    let mut pts = Vec::new();
    for (rho, wr) in gl.composite(&rule.breaks) {
        let beta = if blended { cutoff(rho, delta) } else { 1.0 };
        if beta == 0.0 {
            continue;
        }
        for k in 0..rule.n_theta {
            let th = TAU * k as f64 / rule.n_theta as f64;
            let eta = Vec2::new(rho * th.cos(), rho * th.sin());
            let y = chart.map(&eta)?;
            let ny = chart.normal_at(&eta)?;
            let j = chart_jacobian(&chart, &eta)?;
            pts.push((y, ny, beta * j * rho * wr * TAU / rule.n_theta as f64));
        }
    }
    if blended {
        let p = &surface.panels;
        for k in 0..p.len() {
            let y = p.nodes[k];
            let eta = chart.inverse(&y);
            let mut w = p.weights[k];
            if eta.norm() < 2.0 * delta {
                if let Ok(back) = chart.map(&eta) {
                    if (back - y).norm() < 1e-9 {
                        w *= 1.0 - cutoff(eta.norm(), delta);
                    }
                }
            }
            if w > 0.0 {
                pts.push((y, p.normals[k], w));
            }
        }
    }
    Ok(LocalRule { x: *x, n_x: chart.normal, points: pts })
}

/// (Jᵀn − n tr J): the Günter derivative M(∂, n)u for u with Jacobian J.
fn gunter(j: &Mat3, n: &Vec3) -> Vec3 {
    j.transpose() * n - n * j.trace()
}

/// The weakly singular pieces for a field with Jacobian j at y:
/// −⟨z,n_y⟩/r³ (J + Jᵀ)n_x − 2⟨n_x,z⟩/r³ (I − 3ẑẑᵀ) M(∂_y,n_y)u.
/// The Günter term carries the factor 2 of M_x(zzᵀ/r³) and the normal at x.
fn weak_pieces(z: &Vec3, nx: &Vec3, ny: &Vec3, j: &Mat3) -> Vec3 {
    let r2 = z.norm_squared();
    let r3 = r2 * r2.sqrt();
    let s = z.dot(ny) / r3;
    let sx = nx.dot(z) / r3;
    let sym = j + j.transpose();
    let m = gunter(j, ny);
    -(sym * nx) * s - (m - z * (3.0 * z.dot(&m) / r2)) * (2.0 * sx)
}

/// A₁…A₅ of the decomposition 4πE(αψ)(x) = ΣAᵢ(x).
pub fn hypersingular_decomposed(
    surface: &Surface,
    alpha: &dyn ScalarField,
    psi: &dyn VectorField,
    x: &Vec3,
    rule: &PolarRule,
) -> Result<[Vec3; 5]> {
    let lr = local_rule(surface, x, rule)?;
    Ok(a_terms_on(&lr, alpha, psi))
}

/// A-terms on a precomputed local rule.
pub fn a_terms_on(lr: &LocalRule, alpha: &dyn ScalarField, psi: &dyn VectorField) -> [Vec3; 5] {
    let (x, nx) = (lr.x, lr.n_x);
    let mut a = [Vec3::zeros(); 5];
    for (y, ny, w) in &lr.points {
        let av = alpha.value(y);
        let ga = alpha.gradient(y, ny);
        if av == 0.0 && ga.norm_squared() == 0.0 {
            continue;
        }
        let z = x - y;
        let r2 = z.norm_squared();
        let r3 = r2 * r2.sqrt();
        let nn = nx.dot(ny);
        let pv = psi.value(y);
        let jp = psi.jacobian(y, ny);
        let gz = ga.dot(&z);
        a[0] += (ga * pv.dot(&z) + pv * gz) * (w * nn / r3);
        a[1] += ((jp + jp.transpose()) * z) * (w * av * nn / r3);
        a[2] += ny * (w * (nx.dot(&pv) * gz - pv.dot(&z) * ga.dot(&nx)) / r3);
        a[3] += ny * (w * av * nx.dot(&((jp - jp.transpose()) * z)) / r3);
        let ju = jp * av + pv * ga.transpose();
        a[4] += weak_pieces(&z, &nx, ny, &ju) * *w;
    }
    a
}

/// 4πE(u)(x) through EE1–EE4, with u differentiated as a whole.
pub fn hypersingular_hsiao(surface: &Surface, u: &dyn VectorField, x: &Vec3, rule: &PolarRule) -> Result<Vec3> {
    let lr = local_rule(surface, x, rule)?;
    Ok(hsiao_on(&lr, u))
}

pub fn hsiao_on(lr: &LocalRule, u: &dyn VectorField) -> Vec3 {
    let (x, nx) = (lr.x, lr.n_x);
    let mut out = Vec3::zeros();
    for (y, ny, w) in &lr.points {
        let j = u.jacobian(y, ny);
        if j.amax() == 0.0 {
            continue;
        }
        let z = x - y;
        let r2 = z.norm_squared();
        let r3 = r2 * r2.sqrt();
        let nn = nx.dot(ny);
        out += ((j + j.transpose()) * z) * (w * nn / r3);
        out += ny * (w * nx.dot(&((j - j.transpose()) * z)) / r3);
        out += weak_pieces(&z, &nx, ny, &j) * *w;
    }
    out
}

/// E(u)(x) from the hypersingular kernel directly; valid only when u vanishes
/// near x (no singularity in the integrand).
pub fn hypersingular_direct(surface: &Surface, u: &dyn VectorField, x: &Vec3) -> Result<Vec3> {
    let p = &surface.panels;
    let xd = ConormalData::new(*x, surface.normal_at(x));
    let mut out = Vec3::zeros();
    for k in 0..p.len() {
        let v = u.value(&p.nodes[k]);
        if v.norm_squared() == 0.0 || (p.nodes[k] - x).norm() < 1e-12 {
            continue;
        }
        let yd = ConormalData::new(p.nodes[k], p.normals[k]);
        out += conormal_second_kernel(&xd, &yd, 0.0)?.gamma0_part * v * p.weights[k];
    }
    Ok(out)
}

// --- conormal derivative via the truncated Neumann series ---------------------

/// Result of the truncated resolvent representation.
#[derive(Debug, Clone)]
pub struct ConormalResult {
    pub field: BoundaryField,
    /// Norms of the summed terms C^k(b + e), k = 0..=N.
    pub term_norms: Vec<f64>,
    /// Norm of the first omitted term C^{N+1}(b + e), relative to ‖field‖.
    pub defect: f64,
    /// b⁰ = E[φ] and e^λ on the nodes.
    pub b0: BoundaryField,
    pub e_lambda: BoundaryField,
}

/// ∂φ/∂ν from Dirichlet data through (½I + K*)ν = b⁰ + e^λ, solved by the
/// truncated Neumann series ν ≈ 2 Σ_{k≤N} C^k (b⁰ + e^λ), C = −2(K^λ)*.
pub fn conormal_representation(
    surface: &Surface,
    lambda: f64,
    dirichlet: &dyn VectorField,
    n_trunc: usize,
) -> Result<ConormalResult> {
    let p = &surface.panels;
    if p.is_empty() {
        return Err(Error::Input("surface has no panelization".into()));
    }
    // compatibility ∫ φ·n dσ = 0
    let flux: f64 = p.nodes.iter().zip(&p.normals).zip(&p.weights).map(|((y, n), w)| dirichlet.value(y).dot(n) * w).sum();
    let scale: f64 = p.nodes.iter().zip(&p.weights).map(|(y, w)| dirichlet.value(y).norm() * w).sum();
    if flux.abs() > 1e-8 * scale.max(1.0) {
        return Err(Error::Input(format!("Dirichlet data violate ∫φ·n = 0 (flux {flux:e})")));
    }
    let n = p.len();
    if scale == 0.0 {
        return Ok(ConormalResult {
            field: BoundaryField::zeros(n),
            term_norms: vec![0.0; n_trunc + 1],
            defect: 0.0,
            b0: BoundaryField::zeros(n),
            e_lambda: BoundaryField::zeros(n),
        });
    }
    let rule = PolarRule::for_mesh(p.h, 2.0 * crate::geometry::DEFAULT_DELTA);
    let b0 = (0..n)
        .into_par_iter()
        .map(|i| Ok(hypersingular_hsiao(surface, dirichlet, &p.nodes[i], &rule)? / (4.0 * PI)))
        .collect::<Result<Vec<_>>>()?;
    let b0 = BoundaryField { values: b0 };
    let data = BoundaryField::sample(surface, dirichlet);
    let e = if lambda == 0.0 {
        BoundaryField::zeros(n)
    } else {
        let vals = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = ConormalData::new(p.nodes[i], p.normals[i]);
                let mut v = Vec3::zeros();
                for k in 0..n {
                    if k != i {
                        let y = ConormalData::new(p.nodes[k], p.normals[k]);
                        v += conormal_second_kernel(&x, &y, lambda)?.delta_part * data.values[k] * p.weights[k];
                    }
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        BoundaryField { values: vals }
    };
    let rhs = b0.add(&e);
    let mut term = rhs.clone();
    let mut sum = rhs.clone();
    let mut norms = vec![term.l2_norm(surface)];
    for _ in 0..n_trunc {
        term = k_adjoint_apply(surface, &term, lambda)?.scale(-2.0);
        norms.push(term.l2_norm(surface));
        sum = sum.add(&term);
    }
    let next = k_adjoint_apply(surface, &term, lambda)?.scale(-2.0);
    let field = sum.scale(2.0);
    let first = norms[0].max(1e-300);
    if *norms.last().unwrap() > first * (1.0 + 1e-9) && n_trunc > 0 {
        return Err(Error::Convergence(format!(
            "Neumann terms grow: ‖C^k v‖/‖v‖ = {:?}",
            norms.iter().map(|t| t / first).collect::<Vec<_>>()
        )));
    }
    let defect = 2.0 * next.l2_norm(surface) / field.l2_norm(surface).max(1e-300);
    Ok(ConormalResult { field, term_norms: norms, defect, b0, e_lambda: e })
}
