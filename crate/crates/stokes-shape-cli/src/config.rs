//! Experiment configuration: a TOML file with one optional section per
//! subcommand. Every key has a default, so an absent file means "defaults";
//! an empty file is rejected as a probable mistake.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub specfun: SpecfunConfig,
    #[serde(rename = "kernels-check")]
    pub kernels_check: KernelsConfig,
    pub eigs: EigsConfig,
    #[serde(rename = "shape-derivative")]
    pub shape_derivative: ShapeConfig,
    pub resonance: ResonanceConfig,
    pub asymptotics: AsymptoticsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecfunConfig {
    pub z: Vec<f64>,
    pub tol: f64,
    pub identity_tol: f64,
}

impl Default for SpecfunConfig {
    fn default() -> Self {
        Self { z: vec![0.0, 0.25, 0.5, 0.75, 1.0], tol: 1e-8, identity_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelsConfig {
    pub lambdas: Vec<f64>,
    pub points: usize,
    pub step: f64,
    pub tol: f64,
    /// Cubed-sphere subdivision for the jump-relation check; 0 skips it.
    pub jump_n: usize,
    pub jump_tol: f64,
}

impl Default for KernelsConfig {
    fn default() -> Self {
        Self { lambdas: vec![0.0, 1.0, 10.0], points: 20, step: 1e-4, tol: 1e-3, jump_n: 0, jump_tol: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Disk,
    Ball,
    PerturbedDisk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigsConfig {
    pub domain: Domain,
    pub n_max: u32,
    pub k_max: usize,
    pub l_max: usize,
    /// Perturbed disk r = 1 + t·g(θ), g = Σ a_n cos nθ + Σ b_n sin nθ.
    pub t: f64,
    pub cos: Vec<(u32, f64)>,
    pub sin: Vec<(u32, f64)>,
    pub count: usize,
    /// Cubed-sphere subdivision for ball traces.
    pub sphere_n: usize,
}

impl Default for EigsConfig {
    fn default() -> Self {
        Self {
            domain: Domain::Disk,
            n_max: 4,
            k_max: 2,
            l_max: 2,
            t: 0.0,
            cos: vec![],
            sin: vec![],
            count: 4,
            sphere_n: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variation {
    Dilation,
    Bump,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeConfig {
    pub variation: Variation,
    /// Bump g(θ) = exp(−((θ − centre)/width)²) on the unit circle.
    pub bump_centre: f64,
    pub bump_width: f64,
    pub fourier_modes: u32,
    /// Central-difference step in t; 0 skips the comparison.
    pub fd_step: f64,
    pub tol: f64,
    /// Number of eigenvalues to differentiate (from the bottom).
    pub count: usize,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self {
            variation: Variation::Dilation,
            bump_centre: 2.0,
            bump_width: 0.7,
            fourier_modes: 12,
            fd_step: 0.0,
            tol: 1e-4,
            count: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonanceConfig {
    pub spectrum: Vec<f64>,
    pub n: usize,
    pub tol: f64,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        Self { spectrum: vec![1.0, 2.0, 3.0], n: 5, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceChoice {
    Flat,
    Sphere,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticsConfig {
    pub surface: SurfaceChoice,
    pub rbar0: f64,
    pub theta0: f64,
    pub eps_max: f64,
    pub eps_min: f64,
    pub eps_count: usize,
    /// Tangential ψ on the flat patch.
    pub psi: [f64; 2],
    /// Sphere: cubed-sphere subdivision, panel order, base point, l = 1 mode m.
    pub sphere_n: usize,
    pub sphere_q: usize,
    pub x: [f64; 3],
    pub mode_m: i32,
    /// Allowed |c₃ − predicted|/|predicted| and minimal log-log exponent.
    pub tol: f64,
    pub min_exponent: f64,
    pub w_terms: bool,
    pub w_tol: f64,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self {
            surface: SurfaceChoice::Flat,
            rbar0: 0.5,
            theta0: 0.0,
            eps_max: 0.1,
            eps_min: 0.02,
            eps_count: 8,
            psi: [0.7, -0.4],
            sphere_n: 8,
            sphere_q: 2,
            x: [0.6, 0.0, 0.8],
            mode_m: 0,
            tol: 0.05,
            min_exponent: 2.9,
            w_terms: false,
            w_tol: 2.0,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        if text.trim().is_empty() {
            return Err("configuration file is empty".into());
        }
        let cfg: Self = toml::from_str(text).map_err(|e| format!("malformed configuration: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let tols = [
            ("specfun.tol", self.specfun.tol),
            ("specfun.identity_tol", self.specfun.identity_tol),
            ("kernels-check.tol", self.kernels_check.tol),
            ("kernels-check.step", self.kernels_check.step),
            ("kernels-check.jump_tol", self.kernels_check.jump_tol),
            ("shape-derivative.tol", self.shape_derivative.tol),
            ("shape-derivative.bump_width", self.shape_derivative.bump_width),
            ("resonance.tol", self.resonance.tol),
            ("asymptotics.tol", self.asymptotics.tol),
            ("asymptotics.w_tol", self.asymptotics.w_tol),
        ];
        for (k, v) in tols {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{k} must be a positive number (got {v})"));
            }
        }
        if self.shape_derivative.fd_step < 0.0 {
            return Err("shape-derivative.fd_step must be non-negative".into());
        }
        let a = &self.asymptotics;
        if !(a.eps_max > a.eps_min && a.eps_min > 0.0) || a.eps_count < 3 {
            return Err("asymptotics needs 0 < eps_min < eps_max and eps_count ≥ 3".into());
        }
        if self.specfun.z.is_empty() {
            return Err("specfun.z must not be empty".into());
        }
        Ok(())
    }
}
