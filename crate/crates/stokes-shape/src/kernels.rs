//! Fundamental tensors of the Stokes resolvent (−Δ − λ) with pressure, and the
//! derived double-layer, adjoint and second-conormal kernels.
//!
//! Γ^λ is written as a radial tensor a(r)δ + b(r)xxᵀ, with
//!
//! ```text
//! Γ^λ = −δ e^{ikr}/(4πr) − (1/4πλ) ∂∂[(e^{ikr} − 1)/r],   k = √λ
//! ```
//!
//! evaluated in complex arithmetic. The public real-valued API returns the
//! real part. Near the origin (λr² small) every radial quantity is summed as a
//! Laurent series in r, which sidesteps the 1/λ cancellation entirely.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat3c = Matrix3<Complex64>;

/// λr² below which Γ^λ is summed by series.
pub const SERIES_CUTOFF: f64 = 1e-4;
/// λr² below which Δ^λ = Γ^λ − Γ⁰ is summed by series (the closed form would
/// cancel two leading orders).
pub const DELTA_SERIES_CUTOFF: f64 = 0.25;
const SERIES_TERMS: usize = 34;

/// Velocity tensor and pressure vector of a fundamental solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub g: Mat3,
    pub f: Vec3,
    pub lambda: Option<f64>,
}

/// A boundary point with its unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConormalData {
    pub point: Vec3,
    pub normal: Vec3,
    pub pressure: Option<f64>,
}

impl ConormalData {
    pub fn new(point: Vec3, normal: Vec3) -> Self {
        Self { point, normal: normal.normalize(), pressure: None }
    }
}

/// Radial profile of a tensor a(r)δ + b(r)xxᵀ together with the scaled
/// derivatives a₁ = a′/r, a₂ = a₁′/r (same for b).
#[derive(Debug, Clone, Copy, Default)]
pub struct Radial<T> {
    pub a: T,
    pub a1: T,
    pub a2: T,
    pub b: T,
    pub b1: T,
    pub b2: T,
}

impl Radial<Complex64> {
    pub fn re(&self) -> Radial<f64> {
        Radial { a: self.a.re, a1: self.a1.re, a2: self.a2.re, b: self.b.re, b1: self.b1.re, b2: self.b2.re }
    }
    pub fn im(&self) -> Radial<f64> {
        Radial { a: self.a.im, a1: self.a1.im, a2: self.a2.im, b: self.b.im, b1: self.b1.im, b2: self.b2.im }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Domain(format!("λ must be finite and ≥ 0, got {lambda}")));
    }
    Ok(())
}

/// Radial profile of Γ⁰.
pub fn radial_gamma0(r: f64) -> Radial<f64> {
    let c = 1.0 / (8.0 * PI);
    Radial {
        a: -c / r,
        a1: c / r.powi(3),
        a2: -3.0 * c / r.powi(5),
        b: -c / r.powi(3),
        b1: 3.0 * c / r.powi(5),
        b2: -15.0 * c / r.powi(7),
    }
}

/// (1/r d/dr)^j applied to r^p, as the multiplier of r^{p−2j}.
fn fall(p: i32, j: usize) -> f64 {
    (0..j as i32).map(|t| (p - 2 * t) as f64).product()
}

/// Series branch. F_j(E/r) = Σ (ik)^n/n! fall(n−1, j) r^{n−1−2j} and
/// F_j(g)/λ = −Σ (ik)^{n−2}/n! fall(n−1, j) r^{n−1−2j}; `drop_free` removes
/// the two terms that make up Γ⁰.
fn radial_series(r: f64, lambda: f64, drop_free: bool) -> Radial<Complex64> {
    let ik = Complex64::new(0.0, lambda.sqrt());
    let mut fe = [Complex64::new(0.0, 0.0); 3];
    let mut fg = [Complex64::new(0.0, 0.0); 5];
    let mut pow_ik = Complex64::new(1.0, 0.0); // (ik)^n
    let mut nfact = 1.0;
    for n in 0..SERIES_TERMS {
        if n > 0 {
            pow_ik *= ik;
            nfact *= n as f64;
        }
        let p = n as i32 - 1;
        let c = pow_ik / nfact;
        if !(drop_free && n == 0) {
            for (j, slot) in fe.iter_mut().enumerate() {
                let m = fall(p, j);
                if m != 0.0 {
                    *slot += c * m * r.powi(p - 2 * j as i32);
                }
            }
        }
        // n = 1 only reaches F₀(g), which never enters Γ.
        if n >= 2 && !(drop_free && n == 2) {
            let cg = -(if n == 2 { Complex64::new(1.0, 0.0) } else { ik.powi(n as i32 - 2) }) / nfact;
            for (j, slot) in fg.iter_mut().enumerate().skip(1) {
                let m = fall(p, j);
                if m != 0.0 {
                    *slot += cg * m * r.powi(p - 2 * j as i32);
                }
            }
        }
    }
    assemble(fe, fg)
}

/// Γ radial parts from F_j(E/r) (j ≤ 2) and F_j(g)/λ (1 ≤ j ≤ 4).
fn assemble(fe: [Complex64; 3], fg: [Complex64; 5]) -> Radial<Complex64> {
    let c = -1.0 / (4.0 * PI);
    Radial {
        a: c * (fe[0] + fg[1]),
        a1: c * (fe[1] + fg[2]),
        a2: c * (fe[2] + fg[3]),
        b: c * fg[2],
        b1: c * fg[3],
        b2: c * fg[4],
    }
}

/// Closed form through polynomials in s = 1/r: F_j(E/r) = E·P_j(s) with
/// P₀ = s and P_{j+1} = s(ik P_j − s² P_j′).
fn radial_closed(r: f64, lambda: f64) -> Radial<Complex64> {
    let k = lambda.sqrt();
    let ik = Complex64::new(0.0, k);
    let e = Complex64::new(0.0, k * r).exp();
    let s = 1.0 / r;
    let mut polys: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]];
    for j in 0..4 {
        let pj = &polys[j];
        let mut next = vec![Complex64::new(0.0, 0.0); pj.len() + 2];
        for (deg, &c) in pj.iter().enumerate() {
            next[deg + 1] += ik * c;
            if deg > 0 {
                next[deg + 2] -= c * deg as f64;
            }
        }
        polys.push(next);
    }
    let eval = |p: &Vec<Complex64>| p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c);
    // F_j(1/r) = (−1)^j (2j−1)!! / r^{2j+1}
    let inv = |j: usize| -> f64 {
        let dfact: f64 = (0..j).map(|t| (2 * t + 1) as f64).product();
        (if j % 2 == 0 { dfact } else { -dfact }) * s.powi(2 * j as i32 + 1)
    };
    let mut fe = [Complex64::new(0.0, 0.0); 3];
    let mut fg = [Complex64::new(0.0, 0.0); 5];
    for j in 0..3 {
        fe[j] = e * eval(&polys[j]);
    }
    for j in 1..5 {
        fg[j] = (e * eval(&polys[j]) - inv(j)) / lambda;
    }
    assemble(fe, fg)
}

/// Complex radial profile of Γ^λ.
pub fn radial_gamma_lambda(r: f64, lambda: f64) -> Radial<Complex64> {
    if lambda == 0.0 {
        let g = radial_gamma0(r);
        let c = |v: f64| Complex64::new(v, 0.0);
        return Radial { a: c(g.a), a1: c(g.a1), a2: c(g.a2), b: c(g.b), b1: c(g.b1), b2: c(g.b2) };
    }
    if lambda * r * r < SERIES_CUTOFF {
        radial_series(r, lambda, false)
    } else {
        radial_closed(r, lambda)
    }
}

/// Complex radial profile of Δ^λ = Γ^λ − Γ⁰.
pub fn radial_delta(r: f64, lambda: f64) -> Radial<Complex64> {
    if lambda == 0.0 {
        return Radial::default();
    }
    if lambda * r * r < DELTA_SERIES_CUTOFF {
        radial_series(r, lambda, true)
    } else {
        let full = radial_closed(r, lambda);
        let g0 = radial_gamma0(r);
        Radial {
            a: full.a - g0.a,
            a1: full.a1 - g0.a1,
            a2: full.a2 - g0.a2,
            b: full.b - g0.b,
            b1: full.b1 - g0.b1,
            b2: full.b2 - g0.b2,
        }
    }
}

fn stokes_pressure(x: &Vec3, r: f64) -> Vec3 {
    -x / (4.0 * PI * r.powi(3))
}

fn tensor(rad_a: f64, rad_b: f64, x: &Vec3) -> Mat3 {
    Mat3::identity() * rad_a + x * x.transpose() * rad_b
}

fn nonzero(x: &Vec3) -> Result<f64> {
    let r = x.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Singularity);
    }
    Ok(r)
}

/// Γ⁰ and its pressure vector.
pub fn gamma0(x: &Vec3) -> Result<KernelValue> {
    let r = nonzero(x)?;
    let c = 1.0 / (8.0 * PI);
    Ok(KernelValue {
        g: tensor(-c / r, -c / r.powi(3), x),
        f: stokes_pressure(x, r),
        lambda: None,
    })
}

/// Real part of Γ^λ; the pressure vector is the Laplace one for every λ.
pub fn gamma_lambda(x: &Vec3, lambda: f64) -> Result<KernelValue> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return gamma0(x);
    }
    let r = nonzero(x)?;
    let rad = radial_gamma_lambda(r, lambda);
    Ok(KernelValue { g: tensor(rad.a.re, rad.b.re, x), f: stokes_pressure(x, r), lambda: Some(lambda) })
}

/// Complex Γ^λ.
pub fn gamma_lambda_complex(x: &Vec3, lambda: f64) -> Result<Mat3c> {
    check_lambda(lambda)?;
    let r = nonzero(x)?;
    let rad = radial_gamma_lambda(r, lambda);
    Ok(Mat3c::from_fn(|i, j| {
        let d = if i == j { rad.a } else { Complex64::new(0.0, 0.0) };
        d + rad.b * x[i] * x[j]
    }))
}

/// Complex Δ^λ; finite at the origin, where it equals −iδ√λ/(6π).
pub fn delta_lambda_complex(x: &Vec3, lambda: f64) -> Result<Mat3c> {
    check_lambda(lambda)?;
    let r = x.norm();
    if r == 0.0 {
        let v = Complex64::new(0.0, -lambda.sqrt() / (6.0 * PI));
        return Ok(Mat3c::identity() * v);
    }
    let rad = radial_delta(r, lambda);
    Ok(Mat3c::from_fn(|i, j| {
        let d = if i == j { rad.a } else { Complex64::new(0.0, 0.0) };
        d + rad.b * x[i] * x[j]
    }))
}

/// Real part of Δ^λ with zero pressure (the pressures of Γ^λ and Γ⁰ coincide).
pub fn delta_lambda(x: &Vec3, lambda: f64) -> Result<KernelValue> {
    let c = delta_lambda_complex(x, lambda)?;
    Ok(KernelValue { g: c.map(|v| v.re), f: Vec3::zeros(), lambda: Some(lambda) })
}

/// Two-term small-|x| expansion of Δ^λ, as derived from the series:
/// −iδ√λ/(6π) + (λ/32π)(3δ|x| − xxᵀ/|x|).
pub fn delta_lambda_expansion(x: &Vec3, lambda: f64) -> Mat3c {
    let r = x.norm();
    let c0 = Complex64::new(0.0, -lambda.sqrt() / (6.0 * PI));
    let mut m = Mat3c::identity() * c0;
    if r > 0.0 {
        let lin = (Mat3::identity() * 3.0 * r - x * x.transpose() / r) * (lambda / (32.0 * PI));
        m += lin.map(|v| Complex64::new(v, 0.0));
    }
    m
}

/// ∂_l of a radial tensor: out[l][(i,j)].
fn radial_grad(rad: &Radial<f64>, x: &Vec3) -> [Mat3; 3] {
    let mut out = [Mat3::zeros(); 3];
    for (l, m) in out.iter_mut().enumerate() {
        *m = Mat3::from_fn(|i, j| {
            let mut v = x[l] * x[i] * x[j] * rad.b1;
            if i == j {
                v += x[l] * rad.a1;
            }
            if i == l {
                v += rad.b * x[j];
            }
            if j == l {
                v += rad.b * x[i];
            }
            v
        });
    }
    out
}

fn kd(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// ∂_l∂_m of a radial tensor at (i, j).
fn radial_hess(rad: &Radial<f64>, x: &Vec3, i: usize, j: usize, l: usize, m: usize) -> f64 {
    let mut v = kd(i, j) * (kd(l, m) * rad.a1 + x[l] * x[m] * rad.a2);
    v += (kd(l, m) * rad.b1 + x[l] * x[m] * rad.b2) * x[i] * x[j];
    v += rad.b1 * x[l] * (kd(m, i) * x[j] + x[i] * kd(m, j));
    v += rad.b1 * x[m] * (kd(l, i) * x[j] + x[i] * kd(l, j));
    v += rad.b * (kd(l, i) * kd(m, j) + kd(m, i) * kd(l, j));
    v
}

/// ∂_l Γ^λ_{ij}(x), real part.
pub fn gamma_lambda_grad(x: &Vec3, lambda: f64) -> Result<[Mat3; 3]> {
    check_lambda(lambda)?;
    let r = nonzero(x)?;
    Ok(radial_grad(&radial_gamma_lambda(r, lambda).re(), x))
}

/// Central-difference residuals of Γ^λ at x with step h: the largest entry of
/// (Δ+λ)Γ − ∇F and of the column divergences.
pub fn pde_residual(x: &Vec3, lambda: f64, h: f64) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    nonzero(x)?;
    if !(h > 0.0) {
        return Err(Error::Input("step must be positive".into()));
    }
    let c = gamma_lambda(x, lambda)?;
    let mut lap = Mat3::zeros();
    let mut div = Vec3::zeros();
    let mut grad_f = Mat3::zeros();
    for d in 0..3 {
        let mut e = Vec3::zeros();
        e[d] = h;
        let p = gamma_lambda(&(x + e), lambda)?;
        let m = gamma_lambda(&(x - e), lambda)?;
        lap += (p.g - c.g * 2.0 + m.g) / (h * h);
        let dg = (p.g - m.g) / (2.0 * h);
        div += dg.row(d).transpose();
        grad_f.set_column(d, &((p.f - m.f) / (2.0 * h)));
    }
    Ok(((lap + c.g * lambda - grad_f).amax(), div.amax()))
}

/// Velocity kernel of the double layer, ∂Γ_{ij}/∂N(y)(x−y) + F_i(x−y)n_j(y),
/// evaluated at z = x − y.
pub fn double_layer_kernel(z: &Vec3, n_y: &Vec3, lambda: f64) -> Result<Mat3> {
    let r = nonzero(z)?;
    if lambda == 0.0 {
        let s = z.dot(n_y);
        return Ok(z * z.transpose() * (-3.0 * s / (4.0 * PI * r.powi(5))));
    }
    let grad = gamma_lambda_grad(z, lambda)?;
    let f = stokes_pressure(z, r);
    // derivatives in y are minus derivatives in z
    Ok(Mat3::from_fn(|i, j| {
        let mut v = f[i] * n_y[j];
        for l in 0..3 {
            v -= (grad[l][(i, j)] + grad[j][(i, l)]) * n_y[l];
        }
        v
    }))
}

/// Kernel of (K^λ)*, the L²-adjoint of the double-layer trace operator:
/// entry (i, j) equals the double-layer kernel (j, i) with x and y exchanged.
pub fn adjoint_kernel(z: &Vec3, n_x: &Vec3, lambda: f64) -> Result<Mat3> {
    Ok(double_layer_kernel(&(-z), n_x, lambda)?.transpose())
}

/// Second conormal kernel split into its Γ⁰ and Δ^λ parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondKernel {
    pub gamma0_part: Mat3,
    pub delta_part: Mat3,
}

impl SecondKernel {
    pub fn total(&self) -> Mat3 {
        self.gamma0_part + self.delta_part
    }
}

/// ∂_{N(x)}∂_{N(y)} of a radial tensor without pressure, at z = x − y.
fn second_conormal_radial(rad: &Radial<f64>, z: &Vec3, n_x: &Vec3, n_y: &Vec3) -> Mat3 {
    Mat3::from_fn(|i, j| {
        let mut v = 0.0;
        for l in 0..3 {
            for m in 0..3 {
                let w = n_y[l] * n_x[m];
                if w == 0.0 {
                    continue;
                }
                let h = radial_hess(rad, z, i, j, m, l)
                    + radial_hess(rad, z, i, l, m, j)
                    + radial_hess(rad, z, m, j, i, l)
                    + radial_hess(rad, z, m, l, i, j);
                v -= h * w;
            }
        }
        v
    })
}

/// Hypersingular kernel of Γ⁰: conormal derivative in x (with the double-layer
/// pressure) of the double-layer kernel.
fn second_conormal_gamma0(z: &Vec3, n_x: &Vec3, n_y: &Vec3) -> Mat3 {
    let r = z.norm();
    let c = -3.0 / (4.0 * PI);
    let s = z.dot(n_y);
    let r5 = r.powi(5);
    let r7 = r.powi(7);
    // ∂_m T_ij
    let dt = |i: usize, j: usize, m: usize| -> f64 {
        c * ((kd(m, i) * z[j] + z[i] * kd(m, j)) * s / r5 + z[i] * z[j] * n_y[m] / r5
            - 5.0 * z[i] * z[j] * s * z[m] / r7)
    };
    // pressure of the double layer, column j: −2 ∂_l F_j n_y,l
    let p = |j: usize| -> f64 {
        let mut v = 0.0;
        for l in 0..3 {
            let dlf = -(kd(l, j) / r.powi(3) - 3.0 * z[l] * z[j] / r5) / (4.0 * PI);
            v += -2.0 * dlf * n_y[l];
        }
        v
    };
    Mat3::from_fn(|i, j| {
        let mut v = -p(j) * n_x[i];
        for m in 0..3 {
            v += (dt(i, j, m) + dt(m, j, i)) * n_x[m];
        }
        v
    })
}

/// ∂²Γ^λ(x−y)/∂N(x)∂N(y), split into the hypersingular Γ⁰ part and the
/// weakly singular Δ^λ part (real part).
pub fn conormal_second_kernel(x: &ConormalData, y: &ConormalData, lambda: f64) -> Result<SecondKernel> {
    check_lambda(lambda)?;
    let z = x.point - y.point;
    let r = nonzero(&z)?;
    let g0 = second_conormal_gamma0(&z, &x.normal, &y.normal);
    let delta = if lambda == 0.0 {
        Mat3::zeros()
    } else {
        second_conormal_radial(&radial_delta(r, lambda).re(), &z, &x.normal, &y.normal)
    };
    Ok(SecondKernel { gamma0_part: g0, delta_part: delta })
}

/// Second conormal derivative of the leading term (λ/32π)(3δ|z| − zzᵀ/|z|)
/// of Δ^λ, by exact differentiation.
pub fn delta_nn_leading(x: &ConormalData, y: &ConormalData, lambda: f64) -> Result<Mat3> {
    let z = x.point - y.point;
    let r = nonzero(&z)?;
    let c = lambda / (32.0 * PI);
    let rad = Radial {
        a: 3.0 * c * r,
        a1: 3.0 * c / r,
        a2: -3.0 * c / r.powi(3),
        b: -c / r,
        b1: c / r.powi(3),
        b2: -3.0 * c / r.powi(5),
    };
    Ok(second_conormal_radial(&rad, &z, &x.normal, &y.normal))
}

/// The leading Δ^λ second-conormal form −(λ/8π)[⟨n_x,n_y⟩zzᵀ/|z|³ + n_y n_xᵀ/|z|]
/// in the shape it is usually quoted, kept for comparison with
/// [`delta_nn_leading`]. The two agree in the normal–normal entry only.
pub fn delta_nn_leading_displayed(x: &ConormalData, y: &ConormalData, lambda: f64) -> Result<Mat3> {
    let z = x.point - y.point;
    let r = nonzero(&z)?;
    let nn = x.normal.dot(&y.normal);
    Ok((z * z.transpose() * (nn / r.powi(3)) + y.normal * x.normal.transpose() / r) * (-lambda / (8.0 * PI)))
}
