use std::f64::consts::PI;

use proptest::prelude::*;
use stokes_shape::geometry::{
    bump_tangential_gradient, bump_value, chart_at, chart_jacobian, normal_inner_product, BumpVariation,
    RadialCurve, Surface, Vec2,
};
use stokes_shape::kernels::Vec3;
use stokes_shape::quad::Legendre;

fn star() -> Surface {
    Surface::star_shaped(vec![(2, 0, 0.08), (3, 1, -0.05), (1, -1, 0.03)], 10, 3).unwrap()
}

#[test]
fn sphere_panelization_invariants() {
    for q in [1, 3] {
        let s = Surface::sphere(1.0, 12, q).unwrap();
        let p = &s.panels;
        assert_eq!(p.len(), 6 * 144 * q * q);
        for ((x, n), w) in p.nodes.iter().zip(&p.normals).zip(&p.weights) {
            assert!((n.norm() - 1.0).abs() <= 1e-12);
            assert!(*w > 0.0);
            assert!(n.dot(x) > 0.0);
        }
        let a = s.analytic_area().unwrap();
        assert!((p.area() - a).abs() / a < if q == 1 { 1e-12 } else { 1e-9 }, "q={q}: {}", p.area());
    }
}

#[test]
fn star_surface_invariants() {
    let s = star();
    let p = &s.panels;
    let centroid = p.nodes.iter().zip(&p.weights).fold(Vec3::zeros(), |c, (x, w)| c + x * *w) / p.area();
    for (x, n) in p.nodes.iter().zip(&p.normals) {
        assert!((n.norm() - 1.0).abs() <= 1e-12);
        assert!(s.implicit(x).abs() < 1e-13);
        assert!(n.dot(&(x - centroid)) > 0.0);
    }
    // refining the rule leaves the area unchanged
    let fine = Surface::star_shaped(vec![(2, 0, 0.08), (3, 1, -0.05), (1, -1, 0.03)], 16, 4).unwrap();
    assert!((fine.panels.area() - p.area()).abs() / p.area() < 1e-8);
    // divergence theorem: ∫ x·n dσ = 3|Ω|, and |Ω| = ∫ R³/3 dΩ
    let flux: f64 = p.nodes.iter().zip(&p.normals).zip(&p.weights).map(|((x, n), w)| x.dot(n) * w).sum();
    let (dirs, wts, _) = stokes_shape::geometry::cubed_sphere(16, 4);
    let vol: f64 = dirs
        .iter()
        .zip(&wts)
        .map(|(u, w)| {
            // radial distance by bisection on the implicit function
            let (mut lo, mut hi) = (0.5, 1.5);
            for _ in 0..80 {
                let m = 0.5 * (lo + hi);
                if s.implicit(&(u * m)) > 0.0 {
                    hi = m
                } else {
                    lo = m
                }
            }
            lo.powi(3) / 3.0 * w
        })
        .sum();
    assert!((flux - 3.0 * vol).abs() / flux < 1e-8, "{flux} {vol}");
}

#[test]
fn circle_curve_panelization() {
    let c = Surface::curve(RadialCurve::circle(1.0), 256);
    assert!((c.panels.area() - 2.0 * PI).abs() < 1e-12);
    for (x, n) in c.panels.nodes.iter().zip(&c.panels.normals) {
        assert!((n - x).norm() < 1e-14);
    }
    let mut rc = RadialCurve::circle(1.0);
    rc.t = 0.1;
    rc.cos = vec![(3, 1.0)];
    let th = 0.7;
    let h = 1e-5;
    let tan = (rc.point(th + h) - rc.point(th - h)) / (2.0 * h);
    assert!(tan.dot(&rc.normal(th)).abs() < 1e-9);
    // curvature from the turning of the normal
    let dn = (rc.normal(th + h) - rc.normal(th - h)).norm() / (2.0 * h);
    assert!((dn / rc.speed(th) - rc.curvature(th).abs()).abs() < 1e-7);
}

#[test]
fn sphere_chart_examples() {
    let s = Surface::sphere_analytic(1.0);
    let c = chart_at(&s, &Vec3::z()).unwrap();
    assert!((c.curvature - nalgebra::Matrix2::identity()).amax() < 1e-15);
    assert!((c.map(&Vec2::zeros()).unwrap() - Vec3::z()).norm() < 1e-15);
    let eta = Vec2::new(0.06, 0.08);
    let nu = c.height(&eta).unwrap();
    assert!((nu - (1.0 - 0.99f64.sqrt())).abs() < 1e-15);
    assert!((nu - 0.005012562893380).abs() < 1e-12);
    assert!((0.5 * eta.dot(&(c.curvature * eta)) - 0.005).abs() < 1e-15);

    assert_eq!(normal_inner_product(&c, &Vec2::zeros()).unwrap(), 1.0);
    let e2 = Vec2::new(0.2, 0.0);
    assert!((normal_inner_product(&c, &e2).unwrap() - 0.979795897113271).abs() < 1e-12);
    assert!((chart_jacobian(&c, &e2).unwrap() - 1.020620726159658).abs() < 1e-12);
    assert_eq!(chart_jacobian(&c, &Vec2::zeros()).unwrap(), 1.0);

    // exact normal equals the position on the unit sphere
    let y = c.map(&eta).unwrap();
    assert!((c.normal_at(&eta).unwrap() - y).norm() < 1e-15);
    assert!(c.height(&Vec2::new(0.7, 0.0)).is_err());
}

#[test]
fn flat_patch_examples() {
    let s = Surface::flat();
    let c = chart_at(&s, &Vec3::new(0.3, -0.2, 0.0)).unwrap();
    assert_eq!(c.curvature, nalgebra::Matrix2::zeros());
    for eta in [Vec2::new(0.1, 0.2), Vec2::new(-0.5, 0.3)] {
        assert_eq!(c.height(&eta).unwrap(), 0.0);
        assert_eq!(normal_inner_product(&c, &eta).unwrap(), 1.0);
        assert_eq!(chart_jacobian(&c, &eta).unwrap(), 1.0);
    }
    assert!(chart_at(&s, &Vec3::new(0.0, 0.0, 1e-3)).is_err());
}

fn taylor_exponent(c: &stokes_shape::geometry::SurfaceChart, dir: Vec2) -> f64 {
    let hs: Vec<f64> = (0..7).map(|k| 0.08 * 0.5f64.powi(k)).collect();
    let ers: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let eta = dir * h;
            (c.height(&eta).unwrap() - 0.5 * eta.dot(&(c.curvature * eta))).abs()
        })
        .collect();
    // least-squares slope in log–log
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = ers.iter().map(|e| e.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

#[test]
fn height_is_quadratic_to_third_order() {
    let s = star();
    for x in [Vec3::new(0.3, 0.4, 0.8), Vec3::new(-0.6, 0.1, -0.7)] {
        let p = s.panels.nodes[s.panels.nodes.iter().position(|n| (n.normalize() - x.normalize()).norm() < 0.2).unwrap()];
        let c = chart_at(&s, &p).unwrap();
        assert!(c.height(&Vec2::zeros()).unwrap().abs() < 1e-14);
        assert!(c.height_grad(&Vec2::zeros()).unwrap().norm() < 1e-12);
        assert!((c.curvature - c.curvature.transpose()).amax() < 1e-14);
        let slope = taylor_exponent(&c, Vec2::new(0.6, 0.8));
        assert!(slope >= 2.9, "slope {slope}");
        // normal inner product vs 1 − ½|Kη|²
        let eta = Vec2::new(0.01, -0.02);
        let ni = normal_inner_product(&c, &eta).unwrap();
        assert!((ni - (1.0 - 0.5 * (c.curvature * eta).norm_squared())).abs() < 5e-6);
    }
}

#[test]
fn sphere_height_exponent() {
    let s = Surface::sphere_analytic(1.0);
    let c = chart_at(&s, &Vec3::new(0.0, 0.6, 0.8)).unwrap();
    // on the sphere the remainder is O(|η|⁴)
    assert!(taylor_exponent(&c, Vec2::new(1.0, 0.0)) >= 2.9);
}

#[test]
fn chart_map_injective_and_on_surface() {
    let s = star();
    let c = chart_at(&s, &s.panels.nodes[17]).unwrap();
    let mut pts = vec![];
    for i in -6..=6 {
        for j in -6..=6 {
            let eta = Vec2::new(i as f64, j as f64) * 0.09;
            if eta.norm() <= c.radius {
                let y = c.map(&eta).unwrap();
                assert!(s.implicit(&y).abs() < 1e-12);
                assert!((c.inverse(&y) - eta).norm() < 1e-14);
                pts.push(y);
            }
        }
    }
    for a in 0..pts.len() {
        for b in (a + 1)..pts.len() {
            assert!((pts[a] - pts[b]).norm() > 1e-3);
        }
    }
}

#[test]
fn chart_measure_reproduces_cap_area() {
    // ∫_{|η|<ρ} J dη is the area of a spherical cap of chord-radius ρ
    let s = Surface::sphere_analytic(1.0);
    let c = chart_at(&s, &Vec3::new(0.0, 0.0, -1.0)).unwrap();
    let rho = 0.5;
    let gl = Legendre::new(40);
    let a: f64 = gl.integrate(0.0, rho, |r| 2.0 * PI * r * chart_jacobian(&c, &Vec2::new(r, 0.0)).unwrap());
    let cap = 2.0 * PI * (1.0 - (1.0 - rho * rho).sqrt());
    assert!((a - cap).abs() < 1e-12);
}

#[test]
fn bump_examples() {
    let s = Surface::sphere_analytic(1.0);
    let c = chart_at(&s, &Vec3::z()).unwrap();
    let eps = 0.1;
    let v = BumpVariation::new(c.clone(), Vec2::zeros(), eps).unwrap();
    let y = c.map(&Vec2::new(0.1, 0.0)).unwrap();
    assert!((bump_value(&v, &y) - 100.0 * (-1.0f64).exp()).abs() < 1e-12);
    assert!((bump_value(&v, &y) - 36.787944117144).abs() < 1e-9);
    assert!((bump_value(&v, &Vec3::z()) - 100.0).abs() < 1e-12);
    // beyond the cutoff, and on the far side
    assert_eq!(bump_value(&v, &c.map(&Vec2::new(0.6, 0.0)).unwrap()), 0.0);
    assert_eq!(bump_value(&v, &-Vec3::z()), 0.0);

    let g = bump_tangential_gradient(&v, &y);
    let ny = s.normal_at(&y);
    assert!(g.dot(&ny).abs() <= 1e-10 * g.norm());
    assert!(g.dot(&ny).abs() <= 1e-10);
    assert_eq!(bump_tangential_gradient(&v, &-Vec3::z()), Vec3::zeros());

    let off = BumpVariation::new(c.clone(), Vec2::new(0.03, -0.04), eps).unwrap();
    let peak = c.map(&off.eta0).unwrap();
    assert!((bump_value(&off, &peak) - 1.0 / (eps * eps)).abs() < 1e-12);
    assert!((off.rbar0() - 0.5).abs() < 1e-15);
    assert!(BumpVariation::new(c.clone(), Vec2::new(0.2, 0.0), eps).is_err());
}

#[test]
fn flat_bump_gradient_is_plain_gaussian() {
    let c = chart_at(&Surface::flat(), &Vec3::zeros()).unwrap();
    let eps = 0.05;
    let eta0 = Vec2::new(0.01, 0.02);
    let v = BumpVariation::new(c.clone(), eta0, eps).unwrap();
    assert_eq!(bump_tangential_gradient(&v, &c.map(&eta0).unwrap()).norm(), 0.0);
    let eta = Vec2::new(0.04, -0.03);
    let y = c.map(&eta).unwrap();
    let a = (-(eta - eta0).norm_squared() / (eps * eps)).exp() / (eps * eps);
    let expect = c.lift(&((eta - eta0) * (-2.0 * a / (eps * eps))));
    assert!((bump_tangential_gradient(&v, &y) - expect).norm() < 1e-12 * expect.norm());
}

#[test]
fn flat_bump_mass_tends_to_pi() {
    let c = chart_at(&Surface::flat(), &Vec3::zeros()).unwrap();
    let delta = c.delta();
    let gl = Legendre::new(64);
    let mut prev = f64::INFINITY;
    for eps in [delta / 2.0, delta / 5.0, delta / 10.0, delta / 40.0] {
        let v = BumpVariation::new(c.clone(), Vec2::zeros(), eps).unwrap();
        let breaks = [0.0, 3.0 * eps, 6.0 * eps, 1.5 * delta, 2.0 * delta];
        let mass = gl.composite(&breaks).iter().map(|&(r, w)| w * 2.0 * PI * r * v.value_eta(&Vec2::new(r, 0.0))).sum::<f64>();
        let err = (mass - PI).abs() / PI;
        if (eps - delta / 10.0).abs() < 1e-15 {
            assert!(err <= 0.05);
        }
        assert!(err <= prev + 1e-15);
        prev = err;
    }
    assert!(prev < 1e-12);
}

#[test]
fn gradient_matches_geodesic_differences() {
    let s = Surface::sphere_analytic(1.0);
    let x = Vec3::new(1.0, 2.0, 2.0) / 3.0;
    let c = chart_at(&s, &x).unwrap();
    let v = BumpVariation::new(c.clone(), Vec2::new(0.05, 0.0), 0.1).unwrap();
    let h = 1e-5;
    for eta in [Vec2::new(0.1, 0.0), Vec2::new(-0.04, 0.11), Vec2::new(0.0, 0.2)] {
        let y = c.map(&eta).unwrap();
        let g = bump_tangential_gradient(&v, &y);
        for k in 0..3 {
            // great circle through y with unit tangent d
            let mut e = Vec3::zeros();
            e[k] = 1.0;
            let d = (e - y * y.dot(&e)).normalize();
            let geo = |t: f64| y * t.cos() + d * t.sin();
            let fd = (bump_value(&v, &geo(h)) - bump_value(&v, &geo(-h))) / (2.0 * h);
            assert!((fd - g.dot(&d)).abs() <= 1e-5 * g.norm(), "fd {fd} vs {}", g.dot(&d));
        }
    }
}

#[test]
fn star_gradient_matches_chart_differences() {
    let s = star();
    let c = chart_at(&s, &s.panels.nodes[300]).unwrap();
    let v = BumpVariation::new(c.clone(), Vec2::new(0.02, 0.03), 0.08).unwrap();
    let h = 1e-5;
    for eta in [Vec2::new(0.05, 0.0), Vec2::new(-0.06, 0.1)] {
        let y = c.map(&eta).unwrap();
        let g = bump_tangential_gradient(&v, &y);
        assert!(g.dot(&s.normal_at(&y)).abs() <= 1e-10 * g.norm());
        for dir in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)] {
            let yp = c.map(&(eta + dir * h)).unwrap();
            let ym = c.map(&(eta - dir * h)).unwrap();
            let fd = bump_value(&v, &yp) - bump_value(&v, &ym);
            assert!((fd - g.dot(&(yp - ym))).abs() <= 1e-5 * g.norm() * (yp - ym).norm());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jacobian_times_inner_product_is_one(ex in -0.4f64..0.4, ey in -0.4f64..0.4, th in 0.0f64..3.0, ph in 0.0f64..6.2) {
        let s = Surface::sphere_analytic(1.0);
        let x = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
        let c = chart_at(&s, &x).unwrap();
        let eta = Vec2::new(ex, ey);
        let p = chart_jacobian(&c, &eta).unwrap() * normal_inner_product(&c, &eta).unwrap();
        prop_assert!((p - 1.0).abs() <= 1e-14);
        // frame is orthonormal and right-handed
        prop_assert!((c.t1.cross(&c.t2) - c.normal).norm() < 1e-14);
        prop_assert!(c.t1.dot(&c.normal).abs() < 1e-15);
    }

    #[test]
    fn bump_is_tangential_and_supported(ex in -0.55f64..0.55, ey in -0.55f64..0.55, rb in 0.0f64..1.0, t0 in 0.0f64..6.2) {
        let s = Surface::sphere_analytic(1.0);
        let c = chart_at(&s, &Vec3::new(0.0, -0.6, 0.8)).unwrap();
        let v = BumpVariation::from_polar(c.clone(), 0.05, rb, t0).unwrap();
        prop_assert!((0.0..=1.0).contains(&v.rbar0()));
        let eta = Vec2::new(ex, ey);
        prop_assume!(eta.norm() < c.radius);
        let y = c.map(&eta).unwrap();
        let val = bump_value(&v, &y);
        prop_assert!(val >= 0.0 && val <= 1.0 / (0.05 * 0.05) * (1.0 + 1e-14));
        if eta.norm() >= 2.0 * v.delta { prop_assert_eq!(val, 0.0); }
        let g = bump_tangential_gradient(&v, &y);
        prop_assert!(g.dot(&s.normal_at(&y)).abs() <= 1e-10 * g.norm().max(1e-300));
    }
}
