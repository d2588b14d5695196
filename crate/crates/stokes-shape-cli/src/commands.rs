use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use stokes_shape::asymptotics::{a_terms_sweep, geometric_grid, toroidal_l1_trace, w_terms_sweep, WResolution};
use stokes_shape::eigensolver::{
    ball_toroidal_spectrum_3d, disk_spectrum_2d, perturbed_disk_spectrum, MpsResolution, Spectrum,
};
use stokes_shape::geometry::{RadialCurve, Surface};
use stokes_shape::kernels::{pde_residual, Vec3};
use stokes_shape::potentials::{jump_relation_error, BoundaryField, ConstVector, VectorField};
use stokes_shape::shapecalc::{eigenvalue_derivative, resonance_scan};
use stokes_shape::specfun::{
    gamma, gamma_quadrature, identity_suite, m_quadrature, m_series, wallis, wallis_quadrature, Combination, MTag,
};

use crate::config::{Domain, ExperimentConfig, SurfaceChoice, Variation};
use crate::output::{num, Check, Failure, Outcome, Table};
use crate::Cmd;

type Run = Result<Outcome, Failure>;

/// |a − b| / max(|b|, 1): relative for O(1) values and above, absolute
/// near the zeros of the odd functions.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn plan(cmd: Cmd, cfg: &ExperimentConfig, out: &Path, seed: u64) -> serde_json::Value {
    let section = match cmd {
        Cmd::Specfun => json!(cfg.specfun),
        Cmd::KernelsCheck => json!(cfg.kernels_check),
        Cmd::Eigs => json!(cfg.eigs),
        Cmd::ShapeDerivative => json!(cfg.shape_derivative),
        Cmd::Resonance => json!(cfg.resonance),
        Cmd::Asymptotics => json!(cfg.asymptotics),
    };
    json!({
        "subcommand": cmd.name(),
        "seed": seed,
        "outputs": [
            out.join(format!("{}.csv", cmd.name())).display().to_string(),
            out.join(format!("{}.json", cmd.name())).display().to_string(),
        ],
        "config": section,
    })
}

pub fn run(cmd: Cmd, cfg: &ExperimentConfig, seed: u64) -> Run {
    match cmd {
        Cmd::Specfun => specfun(cfg),
        Cmd::KernelsCheck => kernels_check(cfg, seed),
        Cmd::Eigs => eigs(cfg),
        Cmd::ShapeDerivative => shape_derivative(cfg),
        Cmd::Resonance => resonance(cfg),
        Cmd::Asymptotics => asymptotics(cfg),
    }
}

fn specfun(cfg: &ExperimentConfig) -> Run {
    let c = &cfg.specfun;
    let mut t = Table::new(&["tag", "z", "series", "quadrature", "rel_err"]);
    let mut worst: f64 = 0.0;
    for tag in MTag::ALL {
        for &z in &c.z {
            let s = m_series(tag, z);
            let q = m_quadrature(tag, z)?;
            let e = rel_err(s, q);
            worst = worst.max(e);
            t.push(vec![tag.name().into(), num(z), num(s), num(q), num(e)]);
        }
    }
    let mut combos: f64 = 0.0;
    for comb in Combination::ALL {
        for &z in &c.z {
            combos = combos.max(rel_err(comb.series(z), comb.quadrature(z)?));
        }
    }
    let mut w: f64 = 0.0;
    for k in 0..=12 {
        w = w.max(rel_err(wallis(k)?, wallis_quadrature(k)?));
    }
    let mut g: f64 = 0.0;
    for j in 0..10 {
        let s = j as f64 + 0.5;
        g = g.max(rel_err(gamma(s), gamma_quadrature(s)?));
    }
    let ids = identity_suite();
    let identity = ids
        .checks
        .iter()
        .filter(|ch| !ch.name.contains("displayed"))
        .map(|ch| ch.residual)
        .fold(0.0, f64::max);
    Ok(Outcome {
        tables: vec![t],
        summary: json!({ "z": c.z, "m4_samples": ids.m4_samples }),
        checks: vec![
            Check::at_most("M-functions series vs quadrature (max rel)", worst, c.tol),
            Check::at_most("combinations series vs quadrature (max rel)", combos, c.tol),
            Check::at_most("Wallis integrals (max rel)", w, c.tol),
            Check::at_most("Gamma on half-integers (max rel)", g, c.tol),
            Check::at_most("M5 = M1 + M2 and z²M4 = M1 − z²M3 − M2 (max abs)", identity, c.identity_tol),
        ],
    })
}

fn kernels_check(cfg: &ExperimentConfig, seed: u64) -> Run {
    let c = &cfg.kernels_check;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Table::new(&["lambda", "x", "y", "z", "momentum", "divergence"]);
    let mut checks = vec![];
    for &lam in &c.lambdas {
        let (mut m, mut d): (f64, f64) = (0.0, 0.0);
        for _ in 0..c.points {
            let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let x = dir.normalize() * rng.random_range(0.3..1.5);
            let (r1, r2) = pde_residual(&x, lam, c.step)?;
            m = m.max(r1);
            d = d.max(r2);
            t.push(vec![num(lam), num(x.x), num(x.y), num(x.z), num(r1), num(r2)]);
        }
        checks.push(Check::at_most(format!("(Δ+λ)Γ − ∇F residual, λ = {lam}"), m, c.tol));
        checks.push(Check::at_most(format!("div Γ residual, λ = {lam}"), d, c.tol));
    }
    let mut summary = json!({ "points": c.points, "step": c.step });
    if c.jump_n > 0 {
        let s = Surface::sphere(1.0, c.jump_n, 1)?;
        let dens = BoundaryField::from_fn(&s, |y| Vec3::new(1.0 + y.x, y.y * y.z, 0.3 * y.y));
        let e = jump_relation_error(&s, &dens, 0.0, 1e-3)?;
        summary["jump_panels"] = json!(s.panels.len());
        checks.push(Check::at_most("jump relation D⁰ − (½I + K⁰)", e, c.jump_tol));
    }
    Ok(Outcome { tables: vec![t], summary, checks })
}

fn spectrum_table(sp: &Spectrum) -> Table {
    let mut t = Table::new(&["index", "eigenvalue", "cluster", "multiplicity"]);
    for (i, p) in sp.pairs.iter().enumerate() {
        t.push(vec![i.to_string(), num(p.eigenvalue), p.cluster.to_string(), sp.multiplicity(i).to_string()]);
    }
    t
}

fn eigs(cfg: &ExperimentConfig) -> Run {
    let c = &cfg.eigs;
    let sp = match c.domain {
        Domain::Disk => disk_spectrum_2d(c.n_max, c.k_max)?,
        Domain::Ball => {
            let s = Surface::sphere(1.0, c.sphere_n, 2)?;
            ball_toroidal_spectrum_3d(c.l_max, c.k_max, &s)?
        }
        Domain::PerturbedDisk => {
            let curve = RadialCurve { radius: 1.0, t: c.t, cos: c.cos.clone(), sin: c.sin.clone() };
            perturbed_disk_spectrum(&curve, &MpsResolution::default(), c.count)?
        }
    };
    let clusters: Vec<Vec<usize>> = sp.clusters();
    Ok(Outcome {
        tables: vec![spectrum_table(&sp)],
        summary: json!({
            "domain": c.domain,
            "eigenvalues": sp.eigenvalues(),
            "clusters": clusters,
            "cluster_tolerance": sp.tolerance,
            "refinement": sp.refinement,
        }),
        checks: vec![],
    })
}

fn shape_derivative(cfg: &ExperimentConfig) -> Run {
    let c = &cfg.shape_derivative;
    let res = MpsResolution::default();
    let base = perturbed_disk_spectrum(&RadialCurve::circle(1.0), &res, c.count)?;
    let n = base.boundary.panels.len();
    let g = match c.variation {
        Variation::Dilation => RadialCurve { radius: 1.0, t: 1.0, cos: vec![(0, 1.0)], sin: vec![] },
        Variation::Bump => {
            let (th0, w) = (c.bump_centre, c.bump_width);
            RadialCurve::fourier_fit(
                1.0,
                1.0,
                move |th: f64| {
                    let d = (th - th0 + TAU / 2.0).rem_euclid(TAU) - TAU / 2.0;
                    (-(d / w).powi(2)).exp()
                },
                c.fourier_modes,
            )
        }
    };
    let un: Vec<f64> = (0..n).map(|k| g.g(TAU * k as f64 / n as f64)).collect();
    let mut t = Table::new(&["index", "eigenvalue", "multiplicity", "derivative", "reference"]);
    let mut checks = vec![];
    let mut fd: Option<Vec<f64>> = None;
    if c.fd_step > 0.0 && c.variation == Variation::Bump {
        let h = c.fd_step;
        let solve = |t: f64| perturbed_disk_spectrum(&RadialCurve { t, ..g.clone() }, &res, c.count);
        let (p, m) = (solve(h)?, solve(-h)?);
        fd = Some(p.eigenvalues().iter().zip(m.eigenvalues()).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    for idx in base.clusters() {
        let traces: Vec<BoundaryField> = idx.iter().map(|&i| base.pairs[i].trace.clone()).collect();
        let d = eigenvalue_derivative(&traces, &base.boundary, &un)?;
        for (j, &i) in idx.iter().enumerate() {
            let lam = base.pairs[i].eigenvalue;
            let reference = match c.variation {
                Variation::Dilation => Some(-2.0 * lam),
                // sorted finite differences only follow simple eigenvalues
                Variation::Bump => fd.as_ref().filter(|_| idx.len() == 1).map(|f| f[i]),
            };
            if let Some(r) = reference {
                checks.push(Check::at_most(format!("λ′ of eigenvalue {i} (rel)"), rel_err(d[j], r), c.tol));
            }
            t.push(vec![
                i.to_string(),
                num(lam),
                idx.len().to_string(),
                num(d[j]),
                reference.map(num).unwrap_or_default(),
            ]);
        }
    }
    Ok(Outcome {
        tables: vec![t],
        summary: json!({ "variation": c.variation, "eigenvalues": base.eigenvalues(), "finite_differences": fd }),
        checks,
    })
}

fn resonance(cfg: &ExperimentConfig) -> Run {
    let c = &cfg.resonance;
    let rel = resonance_scan(&c.spectrum, c.n, c.tol)?;
    let mut t = Table::new(&["target", "coefficients", "complexity", "defect"]);
    for r in &rel {
        let coeffs: Vec<String> = r.coefficients.iter().map(|m| m.to_string()).collect();
        t.push(vec![r.target.to_string(), coeffs.join(";"), r.complexity().to_string(), num(r.defect)]);
    }
    Ok(Outcome {
        tables: vec![t],
        summary: json!({ "spectrum": c.spectrum, "n": c.n, "tol": c.tol, "count": rel.len(), "relations": rel }),
        checks: vec![],
    })
}

fn asymptotics(cfg: &ExperimentConfig) -> Run {
    let c = &cfg.asymptotics;
    let eps = geometric_grid(c.eps_max, c.eps_min, c.eps_count);
    let flat = Surface::flat();
    let (surface, x, psi, lambda, cutoff): (Surface, Vec3, Box<dyn VectorField>, f64, bool) = match c.surface {
        SurfaceChoice::Flat => (flat, Vec3::zeros(), Box::new(ConstVector(Vec3::new(c.psi[0], c.psi[1], 0.0))), 0.0, false),
        SurfaceChoice::Sphere => {
            let (tr, lam) = toroidal_l1_trace(c.mode_m)?;
            let x = Vec3::new(c.x[0], c.x[1], c.x[2]);
            if x.norm() == 0.0 {
                return Err(Failure::Input("asymptotics.x must be nonzero".into()));
            }
            (Surface::sphere(1.0, c.sphere_n, c.sphere_q)?, x.normalize(), Box::new(tr), lam, true)
        }
    };
    let sw = a_terms_sweep(&surface, &x, psi.as_ref(), c.rbar0, c.theta0, &eps, cutoff)?;
    let mut t = Table::new(&[
        "eps",
        "measured_1",
        "measured_2",
        "c3_1",
        "c3_2",
        "predicted_1",
        "predicted_2",
    ]);
    for (e, m) in sw.eps.iter().zip(&sw.measured) {
        t.push(vec![
            num(*e),
            num(m[0]),
            num(m[1]),
            num(sw.c3[0]),
            num(sw.c3[1]),
            num(sw.predicted[0]),
            num(sw.predicted[1]),
        ]);
    }
    let mut checks = vec![
        Check::at_most("|c₃ − predicted| / |predicted|", sw.relative_error(), c.tol),
        Check::at_least("log-log exponent", sw.exponent, c.min_exponent),
        Check::at_most("c₃ shift when dropping the largest ε", sw.c3_shift, 0.1),
    ];
    let mut tables = vec![t];
    let mut summary = json!({ "surface": c.surface, "sweep": sw });
    if c.w_terms {
        let ws = w_terms_sweep(&surface, lambda, psi.as_ref(), &x, c.rbar0, c.theta0, &eps, &WResolution::default())?;
        let mut wt = Table::new(&["eps", "eps3_w1", "eps2_w2", "eps2_w3", "eps2_w4", "next_term"]);
        wt.suffix = "_w";
        for r in &ws.rows {
            wt.push(vec![
                num(r.eps),
                num(r.scaled[0]),
                num(r.scaled[1]),
                num(r.scaled[2]),
                num(r.scaled[3]),
                num(r.next_term),
            ]);
        }
        for i in 1..4 {
            checks.push(Check::at_most(format!("variation of ε²‖P_x W{}‖", i + 1), ws.variation[i], c.w_tol));
        }
        summary["w_terms"] = json!(ws);
        tables.push(wt);
    }
    Ok(Outcome { tables, summary, checks })
}
