//! Analytic model surfaces, their panelizations, local graph charts and the
//! Gaussian bump variations used as shape directions.
//!
//! A chart at x writes nearby surface points as
//! `h_x(η) = x + η₁t₁ + η₂t₂ − ν_x(η) n_x`, with ν_x ≥ 0 the depth below the
//! tangent plane. Inverse: η = (t₁·(p − x), t₂·(p − x)).

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use nalgebra::{Matrix2, SVector, Vector2};
use num_dual::{gradient, DualNum, DualSVec64};

use crate::error::{Error, Result};
use crate::kernels::{Mat3, Vec3};
use crate::quad::Legendre;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Default chart half-radius δ (chart disk radius is 2δ).
pub const DEFAULT_DELTA: f64 = 0.3;
/// Distance beyond which a point is not considered on the surface.
pub const ON_SURFACE_TOL: f64 = 1e-8;

// --- real spherical harmonics ------------------------------------------------

/// Regular solid harmonic r^l Y_lm with Y_lm the real orthonormal spherical
/// harmonic (m < 0 ↔ sine). Generic so that callers can differentiate it.
pub fn solid_harmonic<D: DualNum<Primitive = f64> + Copy>(l: usize, m: i32, x: D, y: D, z: D) -> D {
    let am = m.unsigned_abs() as usize;
    // Π_l^m(z, r²) recursion with r² = 1 on the unit sphere
    let r2 = x * x + y * y + z * z;
    let mut pmm = D::from((1..=am).map(|k| (2 * k - 1) as f64).product::<f64>());
    let poly = if l == am {
        pmm
    } else {
        let mut p1 = z * pmm * D::from((2 * am + 1) as f64);
        for ll in (am + 2)..=l {
            let next = (z * p1 * D::from((2 * ll - 1) as f64) - r2 * pmm * D::from((ll + am - 1) as f64))
                / D::from((ll - am) as f64);
            pmm = p1;
            p1 = next;
        }
        p1
    };
    // (x + iy)^|m|
    let (mut re, mut im) = (D::one(), D::zero());
    for _ in 0..am {
        let nr = re * x - im * y;
        let ni = re * y + im * x;
        re = nr;
        im = ni;
    }
    let ang = if m > 0 {
        re
    } else if m < 0 {
        im
    } else {
        D::one()
    };
    let lf = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let mut norm = ((2 * l + 1) as f64 / (4.0 * PI) * lf(l - am) / lf(l + am)).sqrt();
    if m != 0 {
        norm *= 2f64.sqrt();
    }
    poly * ang * D::from(norm)
}

/// Closed planar curve r(θ) = R(1 + t·g(θ)) with g a finite Fourier sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialCurve {
    pub radius: f64,
    pub t: f64,
    /// (n, a_n): a_n cos nθ
    pub cos: Vec<(u32, f64)>,
    /// (n, b_n): b_n sin nθ
    pub sin: Vec<(u32, f64)>,
}

impl RadialCurve {
    pub fn circle(radius: f64) -> Self {
        Self { radius, t: 0.0, cos: vec![], sin: vec![] }
    }

    /// Truncated Fourier series of a 2π-periodic `g` (trapezoid coefficients).
    pub fn fourier_fit(radius: f64, t: f64, g: impl Fn(f64) -> f64, n_modes: u32) -> Self {
        let m = 8 * (n_modes as usize + 1);
        let samples: Vec<f64> = (0..m).map(|i| g(TAU * i as f64 / m as f64)).collect();
        let coef = |n: u32, f: fn(f64) -> f64| {
            let s: f64 = samples.iter().enumerate().map(|(i, v)| v * f(n as f64 * TAU * i as f64 / m as f64)).sum();
            s * if n == 0 { 1.0 } else { 2.0 } / m as f64
        };
        Self {
            radius,
            t,
            cos: (0..=n_modes).map(|n| (n, coef(n, f64::cos))).collect(),
            sin: (1..=n_modes).map(|n| (n, coef(n, f64::sin))).collect(),
        }
    }

    pub fn g(&self, th: f64) -> f64 {
        self.cos.iter().map(|&(n, a)| a * (n as f64 * th).cos()).sum::<f64>()
            + self.sin.iter().map(|&(n, b)| b * (n as f64 * th).sin()).sum::<f64>()
    }

    pub fn dg(&self, th: f64) -> f64 {
        self.cos.iter().map(|&(n, a)| -a * n as f64 * (n as f64 * th).sin()).sum::<f64>()
            + self.sin.iter().map(|&(n, b)| b * n as f64 * (n as f64 * th).cos()).sum::<f64>()
    }

    pub fn d2g(&self, th: f64) -> f64 {
        self.cos.iter().map(|&(n, a)| -a * (n * n) as f64 * (n as f64 * th).cos()).sum::<f64>()
            - self.sin.iter().map(|&(n, b)| b * (n * n) as f64 * (n as f64 * th).sin()).sum::<f64>()
    }

    pub fn r(&self, th: f64) -> f64 {
        self.radius * (1.0 + self.t * self.g(th))
    }

    pub fn dr(&self, th: f64) -> f64 {
        self.radius * self.t * self.dg(th)
    }

    pub fn d2r(&self, th: f64) -> f64 {
        self.radius * self.t * self.d2g(th)
    }

    pub fn point(&self, th: f64) -> Vec3 {
        let r = self.r(th);
        Vec3::new(r * th.cos(), r * th.sin(), 0.0)
    }

    /// Outward unit normal in the plane.
    pub fn normal(&self, th: f64) -> Vec3 {
        let (r, dr) = (self.r(th), self.dr(th));
        let (c, s) = (th.cos(), th.sin());
        // tangent (dr c − r s, dr s + r c); outward normal rotates it by −90°
        let tx = dr * c - r * s;
        let ty = dr * s + r * c;
        Vec3::new(ty, -tx, 0.0).normalize()
    }

    /// |dγ/dθ|
    pub fn speed(&self, th: f64) -> f64 {
        self.r(th).hypot(self.dr(th))
    }

    /// Signed curvature (1/R for the circle).
    pub fn curvature(&self, th: f64) -> f64 {
        let (r, dr, d2r) = (self.r(th), self.dr(th), self.d2r(th));
        (r * r + 2.0 * dr * dr - r * d2r) / (r * r + dr * dr).powf(1.5)
    }

    /// Distance-like test: |p| − r(θ(p)).
    pub fn level(&self, p: &Vec3) -> f64 {
        p.z.abs() + ((p.x.hypot(p.y)) - self.r(p.y.atan2(p.x))).abs()
    }
}

/// Parameterization handle for the analytic model surfaces.
#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceKind {
    /// Sphere of the given radius centred at the origin.
    Sphere { radius: f64 },
    /// The plane z = 0 with normal e₃ (flat test patch, unbounded).
    Flat,
    /// r(û) = 1 + Σ c Y_lm(û).
    StarShaped { terms: Vec<(usize, i32, f64)> },
    /// Planar closed curve in z = 0 (boundary of a 2D domain).
    Curve(RadialCurve),
}

/// Nodes, unit normals and quadrature weights.
#[derive(Debug, Clone, Default)]
pub struct Panelization {
    pub nodes: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// Panel index of each node and the nominal panel size.
    pub panel_of: Vec<usize>,
    pub h: f64,
}

impl Panelization {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// A closed surface (or curve) with an optional panelization.
#[derive(Debug, Clone)]
pub struct Surface {
    pub kind: SurfaceKind,
    pub panels: Panelization,
    pub smoothness: u32,
}

fn face_frame(face: usize) -> (Vec3, Vec3, Vec3) {
    // (axis, u-direction, v-direction), right-handed so u × v = axis
    match face {
        0 => (Vec3::x(), Vec3::y(), Vec3::z()),
        1 => (-Vec3::x(), Vec3::z(), Vec3::y()),
        2 => (Vec3::y(), Vec3::z(), Vec3::x()),
        3 => (-Vec3::y(), Vec3::x(), Vec3::z()),
        4 => (Vec3::z(), Vec3::x(), Vec3::y()),
        _ => (-Vec3::z(), Vec3::y(), Vec3::x()),
    }
}

fn solid_angle_corner(x: f64, y: f64) -> f64 {
    (x * y / (1.0 + x * x + y * y).sqrt()).atan()
}

/// Equiangular cubed-sphere directions with solid-angle weights (sum 4π).
/// q = 1 gives panel midpoints with exact panel solid angles; q ≥ 2 uses a
/// q×q Gauss–Legendre rule inside every panel.
pub fn cubed_sphere(n: usize, q: usize) -> (Vec<Vec3>, Vec<f64>, Vec<usize>) {
    let mut dirs = Vec::with_capacity(6 * n * n * q * q);
    let mut wts = Vec::with_capacity(dirs.capacity());
    let mut owner = Vec::with_capacity(dirs.capacity());
    let da = 2.0 * FRAC_PI_4 / n as f64;
    let gl = Legendre::new(q.max(1));
    let mut panel = 0;
    for face in 0..6 {
        let (ax, u, v) = face_frame(face);
        for i in 0..n {
            for j in 0..n {
                let a0 = -FRAC_PI_4 + i as f64 * da;
                let b0 = -FRAC_PI_4 + j as f64 * da;
                if q == 1 {
                    let (x0, x1) = (a0.tan(), (a0 + da).tan());
                    let (y0, y1) = (b0.tan(), (b0 + da).tan());
                    let w = solid_angle_corner(x1, y1) - solid_angle_corner(x0, y1) - solid_angle_corner(x1, y0)
                        + solid_angle_corner(x0, y0);
                    let (x, y) = ((a0 + 0.5 * da).tan(), (b0 + 0.5 * da).tan());
                    dirs.push((ax + u * x + v * y).normalize());
                    wts.push(w);
                    owner.push(panel);
                } else {
                    for (a, wa) in gl.mapped(a0, a0 + da) {
                        for (b, wb) in gl.mapped(b0, b0 + da) {
                            let (x, y) = (a.tan(), b.tan());
                            let jac = (1.0 + x * x) * (1.0 + y * y) / (1.0 + x * x + y * y).powf(1.5);
                            dirs.push((ax + u * x + v * y).normalize());
                            wts.push(wa * wb * jac);
                            owner.push(panel);
                        }
                    }
                }
                panel += 1;
            }
        }
    }
    (dirs, wts, owner)
}

impl Surface {
    /// Sphere with 6n² cubed-sphere panels and q² nodes per panel.
    pub fn sphere(radius: f64, n: usize, q: usize) -> Result<Self> {
        if radius <= 0.0 || n == 0 {
            return Err(Error::Input("sphere needs radius > 0 and n ≥ 1".into()));
        }
        let (dirs, w, owner) = cubed_sphere(n, q);
        let panels = Panelization {
            nodes: dirs.iter().map(|d| d * radius).collect(),
            normals: dirs.clone(),
            weights: w.iter().map(|w| w * radius * radius).collect(),
            panel_of: owner,
            h: radius * PI / (2.0 * n as f64),
        };
        Ok(Self { kind: SurfaceKind::Sphere { radius }, panels, smoothness: u32::MAX })
    }

    /// Sphere with no panelization (charts only).
    pub fn sphere_analytic(radius: f64) -> Self {
        Self { kind: SurfaceKind::Sphere { radius }, panels: Panelization::default(), smoothness: u32::MAX }
    }

    pub fn flat() -> Self {
        Self { kind: SurfaceKind::Flat, panels: Panelization::default(), smoothness: u32::MAX }
    }

    /// Star-shaped surface over the cubed sphere.
    pub fn star_shaped(terms: Vec<(usize, i32, f64)>, n: usize, q: usize) -> Result<Self> {
        for &(l, m, _) in &terms {
            if m.unsigned_abs() as usize > l {
                return Err(Error::Input(format!("invalid harmonic ({l}, {m})")));
            }
        }
        let kind = SurfaceKind::StarShaped { terms };
        let mut s = Self { kind, panels: Panelization::default(), smoothness: u32::MAX };
        let (dirs, w, owner) = cubed_sphere(n, q);
        let mut p = Panelization { panel_of: owner, h: PI / (2.0 * n as f64), ..Default::default() };
        for (d, w) in dirs.iter().zip(&w) {
            let r = s.star_radius(d);
            if r <= 0.0 {
                return Err(Error::Domain("radial function must stay positive".into()));
            }
            let x = d * r;
            let nrm = s.implicit_grad(&x).normalize();
            p.nodes.push(x);
            p.normals.push(nrm);
            p.weights.push(w * r * r / nrm.dot(d));
        }
        s.panels = p;
        Ok(s)
    }

    /// Planar curve with `n` equispaced parameter nodes (trapezoid weights).
    pub fn curve(curve: RadialCurve, n: usize) -> Self {
        let mut p = Panelization { h: TAU / n as f64, ..Default::default() };
        for k in 0..n {
            let th = TAU * k as f64 / n as f64;
            p.nodes.push(curve.point(th));
            p.normals.push(curve.normal(th));
            p.weights.push(curve.speed(th) * TAU / n as f64);
            p.panel_of.push(k);
        }
        Self { kind: SurfaceKind::Curve(curve), panels: p, smoothness: u32::MAX }
    }

    /// G(p) = |p| − R(p/|p|) and its gradient.
    fn star_eval(&self, p: &Vec3) -> (f64, Vec3) {
        let g = |v: SVector<DualSVec64<3>, 3>| {
            let rho = v.norm();
            let (ux, uy, uz) = (v[0] / rho, v[1] / rho, v[2] / rho);
            let mut rad = DualSVec64::<3>::from(1.0);
            if let SurfaceKind::StarShaped { terms } = &self.kind {
                for &(l, m, c) in terms {
                    rad += solid_harmonic(l, m, ux, uy, uz) * c;
                }
            }
            rho - rad
        };
        let (v, d) = gradient(g, &SVector::from([p.x, p.y, p.z]));
        (v, Vec3::new(d[0], d[1], d[2]))
    }

    fn star_radius(&self, u: &Vec3) -> f64 {
        1.0 - self.star_eval(u).0 + (u.norm() - 1.0)
    }

    /// Implicit function G with G = 0 on the surface, G < 0 inside.
    pub fn implicit(&self, p: &Vec3) -> f64 {
        match &self.kind {
            SurfaceKind::Sphere { radius } => p.norm() - radius,
            SurfaceKind::Flat => p.z,
            SurfaceKind::StarShaped { .. } => self.star_eval(p).0,
            SurfaceKind::Curve(c) => c.level(p),
        }
    }

    /// ∇G (outward, not normalized).
    pub fn implicit_grad(&self, p: &Vec3) -> Vec3 {
        match &self.kind {
            SurfaceKind::Sphere { .. } => p.normalize(),
            SurfaceKind::Flat => Vec3::z(),
            SurfaceKind::StarShaped { .. } => self.star_eval(p).1,
            SurfaceKind::Curve(c) => c.normal(p.y.atan2(p.x)),
        }
    }

    /// Outward unit normal at a surface point.
    pub fn normal_at(&self, p: &Vec3) -> Vec3 {
        self.implicit_grad(p).normalize()
    }

    /// Analytic area where available.
    pub fn analytic_area(&self) -> Option<f64> {
        match &self.kind {
            SurfaceKind::Sphere { radius } => Some(4.0 * PI * radius * radius),
            _ => None,
        }
    }

    pub fn is_curve(&self) -> bool {
        matches!(self.kind, SurfaceKind::Curve(_))
    }
}

// --- charts -----------------------------------------------------------------

#[derive(Debug, Clone)]
enum ChartShape {
    Sphere { radius: f64 },
    Flat,
    Implicit(Box<Surface>),
}

/// Local graph chart of the surface above the tangent plane at `base`.
#[derive(Debug, Clone)]
pub struct SurfaceChart {
    pub base: Vec3,
    pub normal: Vec3,
    pub t1: Vec3,
    pub t2: Vec3,
    pub curvature: Mat2,
    /// Chart disk radius 2δ.
    pub radius: f64,
    shape: ChartShape,
}

/// Tangent frame: Gram–Schmidt of the coordinate axis along which |n| is
/// smallest, then t₂ = n × t₁.
pub fn tangent_frame(n: &Vec3) -> (Vec3, Vec3) {
    let k = (0..3).min_by(|&a, &b| n[a].abs().partial_cmp(&n[b].abs()).unwrap()).unwrap();
    let mut e = Vec3::zeros();
    e[k] = 1.0;
    let t1 = (e - n * n.dot(&e)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Chart at x with the default δ.
pub fn chart_at(surface: &Surface, x: &Vec3) -> Result<SurfaceChart> {
    chart_at_with(surface, x, DEFAULT_DELTA)
}

pub fn chart_at_with(surface: &Surface, x: &Vec3, delta: f64) -> Result<SurfaceChart> {
    if surface.is_curve() {
        return Err(Error::Input("charts are defined for surfaces in ℝ³".into()));
    }
    let g = surface.implicit(x);
    if !g.is_finite() || g.abs() > ON_SURFACE_TOL {
        return Err(Error::Domain(format!("point is not on the surface (|G| = {:e})", g.abs())));
    }
    let n = surface.normal_at(x);
    let (t1, t2) = tangent_frame(&n);
    let shape = match &surface.kind {
        SurfaceKind::Sphere { radius } => ChartShape::Sphere { radius: *radius },
        SurfaceKind::Flat => ChartShape::Flat,
        _ => ChartShape::Implicit(Box::new(Surface {
            kind: surface.kind.clone(),
            panels: Panelization::default(),
            smoothness: surface.smoothness,
        })),
    };
    let curvature = match &shape {
        ChartShape::Sphere { radius } => Mat2::identity() / *radius,
        ChartShape::Flat => Mat2::zeros(),
        ChartShape::Implicit(s) => {
            // K = Pᵀ H P / |∇G| with H the Hessian of G (central differences of ∇G)
            let h = 1e-5;
            let gn = s.implicit_grad(x).norm();
            let frame = [t1, t2];
            let mut k = Mat2::zeros();
            for a in 0..2 {
                let dg = (s.implicit_grad(&(x + frame[a] * h)) - s.implicit_grad(&(x - frame[a] * h))) / (2.0 * h);
                for b in 0..2 {
                    k[(a, b)] = frame[b].dot(&dg) / gn;
                }
            }
            (k + k.transpose()) * 0.5
        }
    };
    Ok(SurfaceChart { base: *x, normal: n, t1, t2, curvature, radius: 2.0 * delta, shape })
}

impl SurfaceChart {
    pub fn delta(&self) -> f64 {
        0.5 * self.radius
    }

    fn check(&self, eta: &Vec2) -> Result<()> {
        if eta.norm() > self.radius * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("|η| = {} outside chart radius {}", eta.norm(), self.radius)));
        }
        Ok(())
    }

    fn plane_point(&self, eta: &Vec2) -> Vec3 {
        self.base + self.t1 * eta.x + self.t2 * eta.y
    }

    /// (ν(η), ν′(η)) without range checks.
    fn height_raw(&self, eta: &Vec2) -> Result<(f64, Vec2)> {
        match &self.shape {
            ChartShape::Flat => Ok((0.0, Vec2::zeros())),
            ChartShape::Sphere { radius } => {
                let e2 = eta.norm_squared();
                let s = (radius * radius - e2).sqrt();
                if !(s > 0.0) {
                    return Err(Error::Domain("chart leaves the hemisphere".into()));
                }
                // R − √(R² − |η|²) without cancellation
                Ok((e2 / (radius + s), eta / s))
            }
            ChartShape::Implicit(surf) => {
                let p0 = self.plane_point(eta);
                let mut nu = 0.5 * eta.dot(&(self.curvature * eta));
                for _ in 0..60 {
                    let p = p0 - self.normal * nu;
                    let g = surf.implicit(&p);
                    let dg = -surf.implicit_grad(&p).dot(&self.normal);
                    let step = g / dg;
                    nu -= step;
                    if step.abs() < 1e-15 * (1.0 + nu.abs()) {
                        break;
                    }
                }
                let p = p0 - self.normal * nu;
                if surf.implicit(&p).abs() > 1e-12 {
                    return Err(Error::Convergence("chart height Newton solve".into()));
                }
                let gr = surf.implicit_grad(&p);
                let gn = gr.dot(&self.normal);
                Ok((nu, Vec2::new(gr.dot(&self.t1) / gn, gr.dot(&self.t2) / gn)))
            }
        }
    }

    /// Height ν_x(η).
    pub fn height(&self, eta: &Vec2) -> Result<f64> {
        self.check(eta)?;
        Ok(self.height_raw(eta)?.0)
    }

    /// ∇ν_x(η).
    pub fn height_grad(&self, eta: &Vec2) -> Result<Vec2> {
        self.check(eta)?;
        Ok(self.height_raw(eta)?.1)
    }

    /// h_x(η).
    pub fn map(&self, eta: &Vec2) -> Result<Vec3> {
        let nu = self.height(eta)?;
        Ok(self.plane_point(eta) - self.normal * nu)
    }

    /// Tangent-plane coordinates of a point.
    pub fn inverse(&self, p: &Vec3) -> Vec2 {
        let d = p - self.base;
        Vec2::new(self.t1.dot(&d), self.t2.dot(&d))
    }

    /// Outward unit normal at h_x(η).
    pub fn normal_at(&self, eta: &Vec2) -> Result<Vec3> {
        let g = self.height_grad(eta)?;
        Ok((self.normal + self.t1 * g.x + self.t2 * g.y) / (1.0 + g.norm_squared()).sqrt())
    }

    /// Tangent-plane projection matrix P_x = I − n nᵀ, and the 2×3 frame.
    pub fn frame(&self) -> Mat3 {
        Mat3::from_columns(&[self.t1, self.t2, self.normal])
    }

    /// Express a tangent-plane 2-vector in ℝ³.
    pub fn lift(&self, v: &Vec2) -> Vec3 {
        self.t1 * v.x + self.t2 * v.y
    }

    /// Tangent-plane components of a 3-vector.
    pub fn project(&self, v: &Vec3) -> Vec2 {
        Vec2::new(self.t1.dot(v), self.t2.dot(v))
    }
}

/// ⟨n_x, n_y⟩ = 1/√(1 + |ν′(η)|²).
pub fn normal_inner_product(chart: &SurfaceChart, eta: &Vec2) -> Result<f64> {
    let g = chart.height_grad(eta)?;
    Ok(1.0 / (1.0 + g.norm_squared()).sqrt())
}

/// Surface measure factor dσ = J dη with J = 1/⟨n_x, n_y⟩.
pub fn chart_jacobian(chart: &SurfaceChart, eta: &Vec2) -> Result<f64> {
    let g = chart.height_grad(eta)?;
    Ok((1.0 + g.norm_squared()).sqrt())
}

// --- bump variation ---------------------------------------------------------

/// C^∞ cutoff: 1 on [0, 3δ/2], exp(1 − 1/(1−s²)) on the transition, 0 beyond 2δ.
pub fn cutoff(rho: f64, delta: f64) -> f64 {
    let a = 1.5 * delta;
    if rho <= a {
        return 1.0;
    }
    if rho >= 2.0 * delta {
        return 0.0;
    }
    let s = (rho - a) / (0.5 * delta);
    (1.0 - 1.0 / (1.0 - s * s)).exp()
}

/// d/dρ of [`cutoff`].
pub fn cutoff_deriv(rho: f64, delta: f64) -> f64 {
    let a = 1.5 * delta;
    if rho <= a || rho >= 2.0 * delta {
        return 0.0;
    }
    let s = (rho - a) / (0.5 * delta);
    let q = 1.0 - s * s;
    cutoff(rho, delta) * (-2.0 * s / (q * q)) / (0.5 * delta)
}

/// Gaussian bump V_n = (α_{ε,η₀} β_δ) ∘ h_x⁻¹.
#[derive(Debug, Clone)]
pub struct BumpVariation {
    pub chart: SurfaceChart,
    pub eta0: Vec2,
    pub eps: f64,
    pub delta: f64,
    /// Multiply by the cutoff β_δ (off for exact-Gaussian flat patches).
    pub use_cutoff: bool,
}

impl BumpVariation {
    pub fn new(chart: SurfaceChart, eta0: Vec2, eps: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::Input("ε must be positive".into()));
        }
        if eta0.norm() > eps * (1.0 + 1e-12) {
            return Err(Error::Input("|η₀| must not exceed ε".into()));
        }
        let delta = chart.delta();
        Ok(Self { chart, eta0, eps, delta, use_cutoff: true })
    }

    /// Bump from (r̄₀, θ₀) in the chart frame.
    pub fn from_polar(chart: SurfaceChart, eps: f64, rbar0: f64, theta0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rbar0) {
            return Err(Error::Input("r̄₀ must lie in [0, 1]".into()));
        }
        Self::new(chart, Vec2::new(theta0.cos(), theta0.sin()) * (rbar0 * eps), eps)
    }

    pub fn without_cutoff(mut self) -> Self {
        self.use_cutoff = false;
        self
    }

    pub fn rbar0(&self) -> f64 {
        (self.eta0.norm() / self.eps).min(1.0)
    }

    pub fn theta0(&self) -> f64 {
        self.eta0.y.atan2(self.eta0.x)
    }

    /// η̄₀ = η₀/ε.
    pub fn eta0_bar(&self) -> Vec2 {
        self.eta0 / self.eps
    }

    /// α_{ε,η₀}(η)
    pub fn alpha(&self, eta: &Vec2) -> f64 {
        (-(eta - self.eta0).norm_squared() / (self.eps * self.eps)).exp() / (self.eps * self.eps)
    }

    fn beta(&self, eta: &Vec2) -> f64 {
        if self.use_cutoff {
            cutoff(eta.norm(), self.delta)
        } else {
            1.0
        }
    }

    /// (αβ)(η)
    pub fn value_eta(&self, eta: &Vec2) -> f64 {
        self.alpha(eta) * self.beta(eta)
    }

    /// ∇_η(αβ)
    pub fn grad_eta(&self, eta: &Vec2) -> Vec2 {
        let a = self.alpha(eta);
        let ga = (eta - self.eta0) * (-2.0 * a / (self.eps * self.eps));
        if !self.use_cutoff {
            return ga;
        }
        let rho = eta.norm();
        let b = cutoff(rho, self.delta);
        let db = if rho > 0.0 { eta * (cutoff_deriv(rho, self.delta) / rho) } else { Vec2::zeros() };
        ga * b + db * a
    }

    /// Chart coordinates of a surface point, if it lies in the chart image.
    pub fn locate(&self, y: &Vec3) -> Option<Vec2> {
        let eta = self.chart.inverse(y);
        if eta.norm() >= 2.0 * self.delta && self.use_cutoff {
            return None;
        }
        if eta.norm() > self.chart.radius {
            return None;
        }
        // reject far-side points that share tangent coordinates
        let back = self.chart.map(&eta).ok()?;
        if (back - y).norm() > 1e-6 * (1.0 + y.norm()) {
            return None;
        }
        Some(eta)
    }
}

/// V_n(y); zero outside the chart image.
pub fn bump_value(v: &BumpVariation, y: &Vec3) -> f64 {
    v.locate(y).map(|eta| v.value_eta(&eta)).unwrap_or(0.0)
}

/// Surface gradient of V_n at y; zero outside the chart image.
pub fn bump_tangential_gradient(v: &BumpVariation, y: &Vec3) -> Vec3 {
    let Some(eta) = v.locate(y) else { return Vec3::zeros() };
    let Ok(nup) = v.chart.height_grad(&eta) else { return Vec3::zeros() };
    let g = v.grad_eta(&eta);
    let w = g - nup * (nup.dot(&g) / (1.0 + nup.norm_squared()));
    v.chart.t1 * w.x + v.chart.t2 * w.y - v.chart.normal * w.dot(&nup)
}
