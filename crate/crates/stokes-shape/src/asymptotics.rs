//! ε-expansions for Gaussian bump variations: the leading A-term vector,
//! remainder terms W₁–W₄ of the conormal representation, the closed-form
//! second-order quantities a₁–a₃, α₁–α₃, and the final series identity.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use rayon::prelude::*;
use serde::Serialize;

use crate::eigensolver::ToroidalMode;
use crate::error::{Error, Result};
use crate::geometry::{chart_at, BumpVariation, Surface, SurfaceChart, Vec2};
use crate::kernels::{Mat3, Vec3};
use crate::kernels::{adjoint_kernel, conormal_second_kernel, ConormalData};
use crate::potentials::{a_terms_on, hypersingular_decomposed, local_rule, LinearField, LocalRule, PolarRule,
    ScalarField, VectorField};
use crate::quad::Legendre;
use crate::specfun::{m_series, Combination, EntireSeries, MTag};

/// Relative RMS fit residual above which a sweep is rejected.
pub const FIT_TOL: f64 = 0.05;

/// 8 geometric points from 0.1 down to 0.02.
pub fn default_eps_grid() -> Vec<f64> {
    geometric_grid(0.1, 0.02, 8)
}

pub fn geometric_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![hi];
    }
    let q = (lo / hi).powf(1.0 / (n - 1) as f64);
    (0..n).map(|k| hi * q.powi(k as i32)).collect()
}

fn rot(th: f64) -> Matrix2<f64> {
    Matrix2::new(th.cos(), -th.sin(), th.sin(), th.cos())
}

fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

// --- leading vector -----------------------------------------------------------

/// ε³-scaled leading vector of P_x(ΣAᵢ):
/// 2e^{−r̄₀²}[(M₂+M₅−r̄₀²M₃)ψ + M₄⟨η̄₀,ψ⟩η̄₀], η̄₀ = r̄₀(cos θ₀, sin θ₀).
pub fn predicted_leading(psi: &Vec2, rbar0: f64, theta0: f64) -> Vec2 {
    let z = rbar0;
    let eb = Vec2::new(theta0.cos(), theta0.sin()) * z;
    let m = |t| m_series(t, z);
    let s = m(MTag::M2A1) + m(MTag::M5A1) - z * z * m(MTag::M3A1);
    (psi * s + eb * (m(MTag::M4A1) * eb.dot(psi))) * (2.0 * (-z * z).exp())
}

// --- A-term sweep -------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonSweep {
    pub eps: Vec<f64>,
    pub rbar0: f64,
    pub theta0: f64,
    /// ψ(x) in the chart frame (t₁, t₂), after tangential projection.
    pub psi: [f64; 2],
    /// P_x(ΣAᵢ) in the chart frame, per ε.
    pub measured: Vec<[f64; 2]>,
    /// ‖P_x Aᵢ‖ per ε.
    pub term_norms: Vec<[f64; 5]>,
    pub c3: [f64; 2],
    pub c2: [f64; 2],
    /// RMS of ε³·measured − (c₃ + c₂ε), relative to the data scale.
    pub fit_residual: f64,
    /// c₃ refitted without the largest ε.
    pub c3_drop_largest: [f64; 2],
    pub c3_shift: f64,
    /// −slope of log‖measured‖ against log ε.
    pub exponent: f64,
    pub predicted: [f64; 2],
}

impl EpsilonSweep {
    pub fn c3_vec(&self) -> Vec2 {
        Vec2::new(self.c3[0], self.c3[1])
    }

    pub fn predicted_vec(&self) -> Vec2 {
        Vec2::new(self.predicted[0], self.predicted[1])
    }

    /// |c₃ − predicted| / |predicted|
    pub fn relative_error(&self) -> f64 {
        (self.c3_vec() - self.predicted_vec()).norm() / self.predicted_vec().norm().max(1e-300)
    }
}

/// Straight-line fit v ≈ p + q·t; returns (p, q).
fn line_fit(t: &[f64], v: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    let stv: f64 = t.iter().zip(v).map(|(a, b)| (a - mt) * (b - mv)).sum();
    let q = if stt > 0.0 { stv / stt } else { 0.0 };
    (mv - q * mt, q)
}

/// Fit of ε³y = c₃ + c₂ε, equivalent to c₃/ε³ + c₂/ε² with relative weights.
fn fit_c3c2(eps: &[f64], y: &[[f64; 2]]) -> ([f64; 2], [f64; 2], f64) {
    let mut c3 = [0.0; 2];
    let mut c2 = [0.0; 2];
    let mut ss = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..2 {
        let v: Vec<f64> = eps.iter().zip(y).map(|(e, m)| m[k] * e.powi(3)).collect();
        let (p, q) = line_fit(eps, &v);
        c3[k] = p;
        c2[k] = q;
        for (e, vi) in eps.iter().zip(&v) {
            ss += (vi - p - q * e).powi(2);
            scale = scale.max(vi.abs());
        }
    }
    let rms = (ss / eps.len() as f64).sqrt();
    (c3, c2, if scale > 0.0 { rms / scale } else { 0.0 })
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.len() < 3 {
        return Err(Error::Input("an ε sweep needs at least three values".into()));
    }
    if eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Input("ε list must be positive and strictly decreasing".into()));
    }
    Ok(())
}

fn chart_components(chart: &SurfaceChart, v: &Vec3) -> [f64; 2] {
    [v.dot(&chart.t1), v.dot(&chart.t2)]
}

/// Tangential part of a field, (I − nnᵀ)ψ, with the normal taken at each point.
struct Tangential<'a> {
    psi: &'a dyn VectorField,
    surface: &'a Surface,
}

impl VectorField for Tangential<'_> {
    fn value(&self, y: &Vec3) -> Vec3 {
        let n = self.surface.normal_at(y);
        let v = self.psi.value(y);
        v - n * n.dot(&v)
    }
    fn jacobian(&self, y: &Vec3, n: &Vec3) -> Mat3 {
        crate::potentials::fd_jacobian(|p| self.value(p), y, n)
    }
}

/// P_x(ΣAᵢ) over an ε grid for bumps at (r̄₀, θ₀) in the chart at x, fitted
/// to c₃/ε³ + c₂/ε². A ψ with a normal component at x is projected first.
pub fn a_terms_sweep(
    surface: &Surface,
    x: &Vec3,
    psi: &dyn VectorField,
    rbar0: f64,
    theta0: f64,
    eps: &[f64],
    use_cutoff: bool,
) -> Result<EpsilonSweep> {
    check_eps(eps)?;
    let chart = chart_at(surface, x)?;
    let pv = psi.value(x);
    let projected = Tangential { psi, surface };
    let psi_t: &dyn VectorField =
        if pv.dot(&chart.normal).abs() > 1e-12 * pv.norm().max(1.0) { &projected } else { psi };
    let pc = chart_components(&chart, &psi_t.value(x));
    let rows = eps
        .par_iter()
        .map(|&e| {
            let mut bump = BumpVariation::from_polar(chart.clone(), e, rbar0, theta0)?;
            if !use_cutoff {
                bump = bump.without_cutoff();
            }
            let a = hypersingular_decomposed(surface, &bump, psi_t, x, &PolarRule::for_bump(e, chart.radius))?;
            let proj = |v: &Vec3| v - chart.normal * chart.normal.dot(v);
            let sum = a.iter().fold(Vec3::zeros(), |s, v| s + v);
            Ok((chart_components(&chart, &sum), a.map(|v| proj(&v).norm())))
        })
        .collect::<Result<Vec<_>>>()?;
    let measured: Vec<[f64; 2]> = rows.iter().map(|r| r.0).collect();
    let term_norms: Vec<[f64; 5]> = rows.iter().map(|r| r.1).collect();
    let (c3, c2, fit_residual) = fit_c3c2(eps, &measured);
    let (c3d, _, _) = fit_c3c2(&eps[1..], &measured[1..]);
    let c3n = Vec2::new(c3[0], c3[1]).norm();
    let c3_shift = if c3n > 0.0 { (Vec2::new(c3d[0] - c3[0], c3d[1] - c3[1])).norm() / c3n } else { 0.0 };
    let norms: Vec<f64> = measured.iter().map(|m| Vec2::new(m[0], m[1]).norm()).collect();
    let exponent = if norms.iter().all(|n| *n > 0.0) {
        let le: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let ln: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
        -line_fit(&le, &ln).1
    } else {
        0.0
    };
    let pred = predicted_leading(&Vec2::new(pc[0], pc[1]), rbar0, theta0);
    let sweep = EpsilonSweep {
        eps: eps.to_vec(),
        rbar0,
        theta0,
        psi: pc,
        measured,
        term_norms,
        c3,
        c2,
        fit_residual,
        c3_drop_largest: c3d,
        c3_shift,
        exponent,
        predicted: [pred.x, pred.y],
    };
    if fit_residual > FIT_TOL {
        return Err(Error::Fit(format!(
            "fit residual {fit_residual:.3e} exceeds {FIT_TOL}; ε = {:?}, measured = {:?}",
            sweep.eps, sweep.measured
        )));
    }
    Ok(sweep)
}

// --- eigenfield traces ----------------------------------------------------------

/// Neumann trace of an l = 1 toroidal ball mode. On the unit sphere it is the
/// linear field y ↦ Ay, returned with the eigenvalue k².
pub fn toroidal_l1_trace(m: i32) -> Result<(LinearField, f64)> {
    let t = ToroidalMode::new(1, m, 1)?;
    let cols: Vec<Vec3> = (0..3)
        .map(|i| {
            let mut e = Vec3::zeros();
            e[i] = 1.0;
            t.gradient(&e) * e
        })
        .collect();
    Ok((LinearField(Mat3::from_columns(&cols)), t.k * t.k))
}

// --- remainder terms ------------------------------------------------------------

/// Quadrature settings for the W-term compositions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WResolution {
    /// Outer grid around x (Gauss points per break interval, angles).
    pub n_gauss: usize,
    pub n_theta: usize,
    /// Targets within this many ε of the bump centre get centred rules;
    /// farther ones use the bump's monopole.
    pub near: f64,
}

impl Default for WResolution {
    fn default() -> Self {
        Self { n_gauss: 6, n_theta: 32, near: 10.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WTerms {
    pub eps: f64,
    pub w: [[f64; 3]; 4],
    /// ‖P_x Wᵢ‖
    pub projected: [f64; 4],
    /// ε³‖P_x W₁‖, then ε²‖P_x Wᵢ‖ for i = 2, 3, 4.
    pub scaled: [f64; 4],
    /// ‖W₄‖ / ‖W₁ + W₂ + W₃‖: size of the first omitted Neumann term.
    pub next_term: f64,
}

/// −V_nψ
struct Data<'a> {
    bump: &'a BumpVariation,
    psi: &'a dyn VectorField,
}

impl Data<'_> {
    fn value(&self, y: &Vec3) -> Vec3 {
        let v = self.bump.value(y);
        if v == 0.0 {
            Vec3::zeros()
        } else {
            -self.psi.value(y) * v
        }
    }
}

/// Polar rule centred at a target a distance d from the bump centre.
fn centred_rule(eps: f64, d: f64, radius: f64, n_gauss: usize, n_theta_min: usize) -> PolarRule {
    let top = (d + 6.0 * eps).min(radius);
    let mut b = vec![0.0];
    for f in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0] {
        if f * eps < top {
            b.push(f * eps);
        }
    }
    let mut r = 8.0 * eps;
    while r < top {
        b.push(r);
        r += 2.0 * eps;
    }
    b.push(top);
    let n_theta = ((TAU_F * (d + eps) / (0.4 * eps)).ceil() as usize).max(n_theta_min).div_ceil(8) * 8;
    PolarRule { breaks: b, n_gauss, n_theta: n_theta.min(512) }
}

const TAU_F: f64 = 2.0 * PI;

fn delta_apply(lr: &LocalRule, data: &Data, lambda: f64) -> Result<Vec3> {
    if lambda == 0.0 {
        return Ok(Vec3::zeros());
    }
    let xd = ConormalData::new(lr.x, lr.n_x);
    let mut v = Vec3::zeros();
    for (y, ny, w) in &lr.points {
        let g = data.value(y);
        if g.norm_squared() == 0.0 || (y - lr.x).norm() < 1e-14 {
            continue;
        }
        v += conormal_second_kernel(&xd, &ConormalData::new(*y, *ny), lambda)?.delta_part * g * *w;
    }
    Ok(v)
}

/// C f(x) = −2(K^λ)* f(x) over the points of a rule (self-omitted).
fn c_apply(x: &Vec3, nx: &Vec3, pts: &[(Vec3, Vec3, f64)], f: &[Vec3], lambda: f64) -> Result<Vec3> {
    let mut u = Vec3::zeros();
    for ((y, _, w), fv) in pts.iter().zip(f) {
        if fv.norm_squared() == 0.0 || (x - y).norm() < 1e-12 {
            continue;
        }
        u += adjoint_kernel(&(x - y), nx, lambda)? * fv * *w;
    }
    Ok(u * -2.0)
}

/// W₁…W₄ at the chart base x of `bump` for Dirichlet data −V_nψ, with the
/// Neumann series truncated at N = 1:
///   W₁ = 2E(−V_nψ), W₂ = 2C·E(−V_nψ), W₃ = 2(I + C)e^λ(−V_nψ),
///   W₄ = 2C²(E + e^λ)(−V_nψ), the first omitted term.
/// `None` stands for the zero variation.
pub fn w_terms(
    surface: &Surface,
    lambda: f64,
    psi: &dyn VectorField,
    bump: Option<&BumpVariation>,
    eps_if_none: f64,
    res: &WResolution,
) -> Result<WTerms> {
    let Some(bump) = bump else {
        return Ok(WTerms { eps: eps_if_none, w: [[0.0; 3]; 4], projected: [0.0; 4], scaled: [0.0; 4], next_term: 0.0 });
    };
    let chart = &bump.chart;
    let eps = bump.eps;
    let x = chart.base;
    let nx = chart.normal;
    let x0 = chart.map(&bump.eta0)?;
    let data = Data { bump, psi };
    let radius = chart.radius;

    // b and e at x
    let lr_x = local_rule(surface, &x, &PolarRule::for_bump(eps, radius))?;
    let b_x = sum5(&a_terms_on(&lr_x, bump, psi)) / (-4.0 * PI);
    let e_x = delta_apply(&lr_x, &data, lambda)?;

    // monopole of the data for far targets
    let lr_b = local_rule(surface, &x0, &centred_rule(eps, 0.0, radius, 8, 48))?;
    let g0: Vec3 = lr_b.points.iter().map(|(y, _, w)| data.value(y) * *w).sum();
    let n0 = surface.normal_at(&x0);

    // outer grid and b, e on it
    let grid = local_rule(
        surface,
        &x,
        &PolarRule { breaks: PolarRule::for_bump(eps, radius).breaks, n_gauss: res.n_gauss, n_theta: res.n_theta },
    )?;
    let be = grid
        .points
        .par_iter()
        .map(|(y, ny, _)| {
            let d = (y - x0).norm();
            if d <= res.near * eps {
                let lr = local_rule(surface, y, &centred_rule(eps, d, radius, 8, 48))?;
                let b = sum5(&a_terms_on(&lr, bump, psi)) / (-4.0 * PI);
                let lr_c = local_rule(surface, y, &centred_rule(eps, d, radius, 4, 24))?;
                Ok((b, delta_apply(&lr_c, &data, lambda)?))
            } else {
                let k = conormal_second_kernel(&ConormalData::new(*y, *ny), &ConormalData::new(x0, n0), lambda)?;
                Ok((k.gamma0_part * g0, k.delta_part * g0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let b: Vec<Vec3> = be.iter().map(|p| p.0).collect();
    let e: Vec<Vec3> = be.iter().map(|p| p.1).collect();
    let pts = &grid.points;

    let w1 = b_x * 2.0;
    let w2 = c_apply(&x, &nx, pts, &b, lambda)? * 2.0;
    let w3 = (e_x + c_apply(&x, &nx, pts, &e, lambda)?) * 2.0;
    let s: Vec<Vec3> = b.iter().zip(&e).map(|(u, v)| u + v).collect();
    let cs = pts
        .par_iter()
        .map(|(y, ny, _)| c_apply(y, ny, pts, &s, lambda))
        .collect::<Result<Vec<_>>>()?;
    let w4 = c_apply(&x, &nx, pts, &cs, lambda)? * 2.0;
    let ws = [w1, w2, w3, w4];
    if ws.iter().any(|w| !w.iter().all(|c| c.is_finite())) {
        return Err(Error::Convergence("W-term composition produced non-finite values".into()));
    }
    let proj = |v: &Vec3| (v - nx * nx.dot(v)).norm();
    let projected = ws.map(|w| proj(&w));
    let head = (w1 + w2 + w3).norm();
    Ok(WTerms {
        eps,
        w: ws.map(|w| [w.x, w.y, w.z]),
        projected,
        scaled: [
            projected[0] * eps.powi(3),
            projected[1] * eps * eps,
            projected[2] * eps * eps,
            projected[3] * eps * eps,
        ],
        next_term: if head > 0.0 { w4.norm() / head } else { 0.0 },
    })
}

fn sum5(a: &[Vec3; 5]) -> Vec3 {
    a.iter().fold(Vec3::zeros(), |s, v| s + v)
}

#[derive(Debug, Clone, Serialize)]
pub struct WSweep {
    pub rows: Vec<WTerms>,
    /// max/min of each scaled norm over the sweep.
    pub variation: [f64; 4],
}

pub fn w_terms_sweep(
    surface: &Surface,
    lambda: f64,
    psi: &dyn VectorField,
    x: &Vec3,
    rbar0: f64,
    theta0: f64,
    eps: &[f64],
    res: &WResolution,
) -> Result<WSweep> {
    check_eps(eps)?;
    let chart = chart_at(surface, x)?;
    let rows = eps
        .iter()
        .map(|&e| {
            let bump = BumpVariation::from_polar(chart.clone(), e, rbar0, theta0)?;
            w_terms(surface, lambda, psi, Some(&bump), e, res)
        })
        .collect::<Result<Vec<_>>>()?;
    let variation = [0, 1, 2, 3].map(|i| {
        let v: Vec<f64> = rows.iter().map(|r| r.scaled[i]).collect();
        let hi = v.iter().cloned().fold(0.0, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo > 0.0 {
            hi / lo
        } else if hi == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    });
    Ok(WSweep { rows, variation })
}

// --- bump moments --------------------------------------------------------------

/// p.v.∫α_{ε,η₀}(η) η/|η|³ dη in closed form: (e^{−r̄₀²}/ε²) M₃(r̄₀) η̄₀.
pub fn pv_moment_closed(eps: f64, eta0: &Vec2) -> Vec2 {
    let eb = eta0 / eps;
    let z = eb.norm();
    eb * ((-z * z).exp() / (eps * eps) * m_series(MTag::M3A1, z))
}

/// ε^{1−m}∫α_{ε,η₀}(η)|η|^{m−1} dη, the constant C(m) of the bump bound.
pub fn bump_power_constant(eps: f64, eta0: &Vec2, m: f64) -> Result<f64> {
    if m <= -1.0 {
        return Err(Error::Input("the power |η|^{m−1} is not integrable for m ≤ −1".into()));
    }
    if eps <= 0.0 {
        return Err(Error::Input("ε must be positive".into()));
    }
    // polar about the origin: ∫∫ α r^m dr dθ; the singular factor r^m is
    // absorbed by grading towards 0
    let gl = Legendre::new(24);
    let top = eta0.norm() + 9.0 * eps;
    let mut breaks = vec![0.0];
    let mut r = 1e-6 * eps;
    while r < top {
        breaks.push(r);
        r *= 2.0;
    }
    breaks.push(top);
    let nt = 128;
    let mut s = 0.0;
    for (rho, wr) in gl.composite(&breaks) {
        let mut a = 0.0;
        for k in 0..nt {
            let th = TAU_F * k as f64 / nt as f64;
            let eta = Vec2::new(rho * th.cos(), rho * th.sin());
            a += (-(eta - eta0).norm_squared() / (eps * eps)).exp();
        }
        s += wr * rho.powf(m) * a * TAU_F / nt as f64;
    }
    Ok(s / (eps * eps) * eps.powf(1.0 - m))
}

// --- second-order closed forms -----------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SecondOrderTerms {
    pub f: [[f64; 2]; 2],
    pub rho: f64,
    pub eps: f64,
    pub rbar0: f64,
    pub theta0: f64,
    pub a1: [f64; 2],
    /// a₁ with the printed M₉/M₁₀ coefficients (no r̄₀ factor).
    pub a1_as_displayed: [f64; 2],
    pub a2: [f64; 2],
    pub a3: [f64; 2],
    /// α₁, α₂, α₃ in the frame with η̄₀ along e₁ (F rotated by θ₀).
    pub alpha: [f64; 3],
    pub alpha_as_displayed: [f64; 3],
}

impl SecondOrderTerms {
    /// a₁ + a₂ + ρa₃
    pub fn d_leading(&self) -> Vec2 {
        let v = |a: [f64; 2]| Vec2::new(a[0], a[1]);
        v(self.a1) + v(self.a2) + v(self.a3) * self.rho
    }

    /// e^{−r̄₀²}/ε
    pub fn prefactor(&self) -> f64 {
        (-self.rbar0 * self.rbar0).exp() / self.eps
    }
}

struct Ms {
    m1: f64,
    m5: f64,
    m6: f64,
    m7: f64,
    m8: f64,
    m9: f64,
    m10: f64,
}

impl Ms {
    fn at(z: f64) -> Self {
        Self {
            m1: m_series(MTag::M1A1, z),
            m5: m_series(MTag::M5A1, z),
            m6: m_series(MTag::M6, z),
            m7: m_series(MTag::M7, z),
            m8: m_series(MTag::M8, z),
            m9: m_series(MTag::M9, z),
            m10: m_series(MTag::M10, z),
        }
    }
}

/// s scales the M₉/M₁₀ terms: s = r̄₀ for the quadrature-consistent form,
/// s = 1 as printed.
fn a1_with(m: &Ms, ft: &Matrix2<f64>, psi: &Vec2, e0: &Vec2, s: f64) -> Vec2 {
    let (f11, f12, f22) = (ft[(0, 0)], ft[(0, 1)], ft[(1, 1)]);
    let pe = psi.dot(e0);
    let pp = psi.dot(&perp(e0));
    let c_psi = 2.0 * f22 * m.m6 + (2.0 * f11 - 3.0 * f22) * m.m7
        - (f11 - f22) * (m.m8 + s * m.m10)
        - s * f22 * m.m9;
    let c_e0 = (s * f22 * m.m9 + (f11 - f22) * (s * m.m10 - 2.0 * m.m8) + (f11 - 3.0 * f22) * m.m7 + f22 * m.m6)
        * pe
        + s * 2.0 * f12 * (m.m9 - m.m10) * pp;
    let g = f12 * (m.m7 - m.m8);
    psi * c_psi - e0 * c_e0 - perp(psi) * (2.0 * g) + perp(e0) * (4.0 * g * pe)
}

fn alpha_with(m: &Ms, ft: &Matrix2<f64>, rho: f64, s: f64) -> [f64; 3] {
    let (f11, f12, f22) = (ft[(0, 0)], ft[(0, 1)], ft[(1, 1)]);
    let a1 = 2.0 * f22 * m.m6 + (2.0 * f11 - 3.0 * f22) * m.m7
        - (f11 - f22) * (m.m8 + s * m.m10)
        - s * f22 * m.m9
        - ((f22 + 0.5 * rho) * m.m5 + (f11 - f22 - 0.5 * rho) * m.m1);
    let a2 = 2.0 * f12 * (s * m.m9 + m.m8 - s * m.m10 - m.m7);
    [a1, a2, -(m.m5 - m.m1)]
}

/// a₁, a₂, a₃ (each carrying e^{−r̄₀²}/ε) and α₁–α₃ for the bump at
/// (r̄₀, θ₀) with width ε.
pub fn second_order_terms(
    f: &Matrix2<f64>,
    rho: f64,
    psi: &Vec2,
    rbar0: f64,
    theta0: f64,
    eps: f64,
) -> Result<SecondOrderTerms> {
    if (f[(0, 1)] - f[(1, 0)]).abs() > 1e-12 * f.amax().max(1.0) {
        return Err(Error::Input("F_x must be symmetric".into()));
    }
    if !(0.0..=1.0).contains(&rbar0) {
        return Err(Error::Input("r̄₀ must lie in [0, 1]".into()));
    }
    if eps <= 0.0 {
        return Err(Error::Input("ε must be positive".into()));
    }
    let r = rot(theta0);
    let ft = r.transpose() * f * r;
    let e0 = Vec2::new(theta0.cos(), theta0.sin());
    let m = Ms::at(rbar0);
    let big_e = (-rbar0 * rbar0).exp() / eps;
    let k = big_e / (4.0 * PI);
    let a1 = a1_with(&m, &ft, psi, &e0, rbar0) * k;
    let a1d = a1_with(&m, &ft, psi, &e0, 1.0) * k;
    let pe = psi.dot(&e0);
    let inner = psi * (m.m5 - m.m1) + e0 * ((2.0 * m.m1 - m.m5) * pe);
    let a2 = -(psi * (ft[(1, 1)] * m.m5 + (ft[(0, 0)] - ft[(1, 1)]) * m.m1) + f * inner) * k;
    let a3 = -inner * (big_e / (8.0 * PI));
    let arr = |v: Vec2| [v.x, v.y];
    Ok(SecondOrderTerms {
        f: [[f[(0, 0)], f[(0, 1)]], [f[(1, 0)], f[(1, 1)]]],
        rho,
        eps,
        rbar0,
        theta0,
        a1: arr(a1),
        a1_as_displayed: arr(a1d),
        a2: arr(a2),
        a3: arr(a3),
        alpha: alpha_with(&m, &ft, rho, rbar0),
        alpha_as_displayed: alpha_with(&m, &ft, rho, 1.0),
    })
}

// --- final identity -------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub k: usize,
    pub f11_series: f64,
    pub f11_displayed: f64,
    pub f22_series: f64,
    pub f22_displayed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalIdentityReport {
    pub f11: f64,
    pub f22: f64,
    pub rho: f64,
    /// (z, F¹¹·[F11 bracket](z) + F²²·[F22 bracket](z) + (ρ/2)(M₁ − M₅)(z))
    pub residual: Vec<(f64, f64)>,
    /// Same with the M₉/M₁₀ terms multiplied by z.
    pub residual_corrected: Vec<(f64, f64)>,
    pub coefficients: Vec<CoefficientRow>,
    /// Largest |series − displayed| / max(1, |series|) over the first six
    /// coefficients of both brackets.
    pub coefficient_mismatch: f64,
    /// Singular values of the odd-coefficient system in (F¹¹, F²²).
    pub odd_singular_values: Vec<f64>,
    /// The odd coefficients alone force F¹¹ = F²² = 0.
    pub odd_forces_zero: bool,
    /// Singular values of the full coefficient system in (F¹¹, F²², ρ) with
    /// the z-corrected brackets, and a null vector when it is deficient.
    pub corrected_singular_values: Vec<f64>,
    pub corrected_null_vector: Option<[f64; 3]>,
}

const SHOWN: usize = 6;

fn coeff(t: MTag, k: usize) -> f64 {
    EntireSeries::table(t).coeff(k)
}

/// z^k coefficients of the brackets with zM₉, zM₁₀ in place of M₉, M₁₀.
fn corrected_coeff(c: Combination, k: usize) -> f64 {
    c.terms()
        .iter()
        .map(|&(w, t)| match t {
            MTag::M9 | MTag::M10 => {
                if k == 0 {
                    0.0
                } else {
                    w * coeff(t, k - 1)
                }
            }
            _ => w * coeff(t, k),
        })
        .sum()
}

fn corrected_series(c: Combination, z: f64) -> f64 {
    c.terms()
        .iter()
        .map(|&(w, t)| {
            let v = m_series(t, z);
            match t {
                MTag::M9 | MTag::M10 => w * z * v,
                _ => w * v,
            }
        })
        .sum()
}

fn half_m1_m5(z: f64) -> f64 {
    0.5 * (m_series(MTag::M1A1, z) - m_series(MTag::M5A1, z))
}

pub fn final_identity_check(f: &Matrix2<f64>, rho: f64, z: &[f64]) -> FinalIdentityReport {
    let (f11, f22) = (f[(0, 0)], f[(1, 1)]);
    let residual = z
        .iter()
        .map(|&t| (t, f11 * Combination::F11.series(t) + f22 * Combination::F22.series(t) + rho * half_m1_m5(t)))
        .collect();
    let residual_corrected = z
        .iter()
        .map(|&t| {
            (
                t,
                f11 * corrected_series(Combination::F11, t)
                    + f22 * corrected_series(Combination::F22, t)
                    + rho * half_m1_m5(t),
            )
        })
        .collect();
    let coefficients: Vec<CoefficientRow> = (0..SHOWN)
        .map(|k| CoefficientRow {
            k,
            f11_series: Combination::F11.series_coeff(k),
            f11_displayed: Combination::F11.displayed_coeff(k),
            f22_series: Combination::F22.series_coeff(k),
            f22_displayed: Combination::F22.displayed_coeff(k),
        })
        .collect();
    let coefficient_mismatch = coefficients
        .iter()
        .flat_map(|r| {
            [
                (r.f11_series - r.f11_displayed).abs() / r.f11_series.abs().max(1.0),
                (r.f22_series - r.f22_displayed).abs() / r.f22_series.abs().max(1.0),
            ]
        })
        .fold(0.0, f64::max);

    let odd: Vec<usize> = (0..SHOWN).filter(|k| k % 2 == 1).collect();
    let a = DMatrix::from_fn(odd.len(), 2, |i, j| {
        Combination::ALL[j].displayed_coeff(odd[i])
    });
    let sv = a.singular_values();
    let odd_singular_values: Vec<f64> = sv.iter().cloned().collect();
    let odd_forces_zero = sv.min() > 1e-10 * sv.max();

    let n = 12;
    let half = |k: usize| 0.5 * (coeff(MTag::M1A1, k) - coeff(MTag::M5A1, k));
    let c = DMatrix::from_fn(n, 3, |k, j| match j {
        0 => corrected_coeff(Combination::F11, k),
        1 => corrected_coeff(Combination::F22, k),
        _ => half(k),
    });
    let svd = c.clone().svd(false, true);
    let mut csv: Vec<(f64, usize)> = svd.singular_values.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    csv.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let smax = csv[0].0;
    let (smin, imin) = *csv.last().unwrap();
    let corrected_null_vector = if smin < 1e-10 * smax {
        svd.v_t.map(|vt| {
            let r = vt.row(imin);
            // normalize so the first nonzero entry is 1
            let piv = r.iter().cloned().find(|v| v.abs() > 1e-8).unwrap_or(1.0);
            [r[0] / piv, r[1] / piv, r[2] / piv]
        })
    } else {
        None
    };

    FinalIdentityReport {
        f11,
        f22,
        rho,
        residual,
        residual_corrected,
        coefficients,
        coefficient_mismatch,
        odd_singular_values,
        odd_forces_zero,
        corrected_singular_values: csv.iter().map(|p| p.0).collect(),
        corrected_null_vector,
    }
}
