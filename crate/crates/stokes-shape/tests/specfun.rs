use std::f64::consts::PI;

use proptest::prelude::*;
use stokes_shape::specfun::{
    coeff_quadrature, gamma, gamma_quadrature, identity_suite, m_quadrature, m_series, wallis,
    wallis_quadrature, Combination, EntireSeries, MTag,
};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn series_matches_quadrature_on_unit_interval() {
    for tag in MTag::ALL {
        for z in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let s = m_series(tag, z);
            let q = m_quadrature(tag, z).unwrap();
            let err = if s.abs() < 1e-12 { (s - q).abs() } else { rel(q, s) };
            assert!(err < 1e-8, "{tag} z={z}: series {s} quad {q}");
        }
    }
}

#[test]
fn series_holds_up_at_larger_argument() {
    for tag in [MTag::M3A1, MTag::M4A1, MTag::M8] {
        let s = m_series(tag, 3.0);
        let q = m_quadrature(tag, 3.0).unwrap();
        assert!(rel(q, s) < 1e-8, "{tag}: {s} {q}");
    }
}

#[test]
fn cv_m3_closed_form_agrees_with_wallis_form() {
    // 2 Σ 2^{2p+1}/(2p+1)! I_{2p+2} Γ(p+½) z^{2p}
    let t = EntireSeries::table(MTag::M3A1);
    for p in 0..20usize {
        let mut fact = 1.0;
        for i in 1..=(2 * p + 1) {
            fact *= i as f64;
        }
        let w = 2.0 * 2f64.powi(2 * p as i32 + 1) / fact
            * wallis(2 * p as i64 + 2).unwrap()
            * gamma(p as f64 + 0.5);
        assert!(rel(t.coeff(2 * p), w) < 1e-12);
    }
}

#[test]
fn termwise_quadrature_reproduces_tables() {
    for tag in MTag::ALL {
        let t = EntireSeries::table(tag);
        for k in 0..8 {
            let q = coeff_quadrature(tag, k).unwrap();
            let c = t.coeff(k);
            if c == 0.0 {
                assert!(q.abs() < 1e-13, "{tag} k={k}: {q}");
            } else {
                assert!(rel(q, c) < 1e-10, "{tag} k={k}: {q} vs {c}");
            }
        }
    }
}

#[test]
fn identity_suite_structure() {
    let rep = identity_suite();
    for c in rep.checks.iter().filter(|c| !c.name.contains("displayed")) {
        assert!(c.passed(), "{} at {}: {:e}", c.name, c.at, c.residual);
    }
    // The odd powers of both combinations agree with the closed forms.
    for c in rep.checks.iter().filter(|c| c.name.contains("displayed") && (c.at as usize) % 2 == 1) {
        assert!(c.passed(), "{} : {:e}", c.name, c.residual);
    }
    assert!(rep.m4_samples.iter().all(|&(_, v)| v != 0.0));
}

#[test]
fn wallis_and_gamma_oracles() {
    for k in 0..12 {
        assert!(rel(wallis(k).unwrap(), wallis_quadrature(k).unwrap()) < 1e-13);
    }
    for p in 0..6 {
        let s = p as f64 + 0.5;
        assert!(rel(gamma(s), gamma_quadrature(s).unwrap()) < 1e-10);
    }
    assert!(rel(gamma(0.5), PI.sqrt()) < 1e-15);
}

#[test]
fn combinations_series_vs_quadrature() {
    for c in Combination::ALL {
        for z in [0.25, 0.75] {
            assert!(rel(c.quadrature(z).unwrap(), c.series(z)) < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parity(z in 0.0f64..3.0, i in 0usize..10) {
        let tag = MTag::ALL[i];
        let a = m_series(tag, z);
        let b = m_series(tag, -z);
        if tag.is_odd() {
            prop_assert!((a + b).abs() <= 1e-13 * a.abs().max(1.0));
        } else {
            prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }

    #[test]
    fn gamma_recursion_on_half_integers(p in 0u32..60) {
        let s = p as f64 + 0.5;
        prop_assert!(rel(gamma(s + 1.0), s * gamma(s)) < 1e-14);
    }

    #[test]
    fn m5_splits(z in 0.0f64..4.0) {
        let r = m_series(MTag::M5A1, z) - m_series(MTag::M1A1, z) - m_series(MTag::M2A1, z);
        prop_assert!(r.abs() <= 1e-12 * m_series(MTag::M5A1, z));
    }

    #[test]
    fn m4_relation(z in 0.0f64..2.0) {
        let lhs = z * z * m_series(MTag::M4A1, z);
        let rhs = m_series(MTag::M1A1, z) - z * z * m_series(MTag::M3A1, z) - m_series(MTag::M2A1, z);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * m_series(MTag::M5A1, z));
    }
}
