use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sle_lab::spectral::ConstraintSpec;

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SLE_LAB_OUT";
pub const DEFAULT_OUT: &str = "sle-lab-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Cone,
    Sigma2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub dimension: usize,
    pub constraint: ConstraintKind,
    pub eps: Option<f64>,
    /// Generating spectrum of the quadratic boundary data.
    pub spectrum: Option<Vec<f64>>,
    /// Phase; the boundary data is then `½ tan(θ/n) |x|^2`.
    pub theta: Option<f64>,
    pub amplitude: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self { dimension: 3, constraint: ConstraintKind::Cone, eps: None, spectrum: None, theta: None, amplitude: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { half_width: 2.0, points: 17 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySection {
    pub seed: u64,
    pub count: usize,
    pub amplitudes: Vec<f64>,
}

impl Default for FamilySection {
    fn default() -> Self {
        Self { seed: 1, count: 8, amplitudes: sle_lab::solver::DEFAULT_AMPLITUDES.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub newton: f64,
    pub max_iter: usize,
    /// Lower bound accepted for `T_A(φ)`.
    pub quadrature: f64,
    /// `K` in the Jacobi threshold `-K Δx`.
    pub jacobi_k: f64,
    /// Upper bound asserted for the gradient ratio.
    pub gradient_cap: f64,
    /// Constraint-violation fraction above which an instance is not asserted on.
    pub violation_gate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton: 1e-10,
            max_iter: 50,
            quadrature: crate::pipeline::QUADRATURE_TOL,
            jacobi_k: crate::pipeline::JACOBI_K,
            gradient_cap: crate::pipeline::GRADIENT_CAP,
            violation_gate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzSection {
    pub samples: usize,
    pub seed: u64,
    pub bounds: Vec<f64>,
}

impl Default for FuzzSection {
    fn default() -> Self {
        Self { samples: 100_000, seed: 7, bounds: sle_lab::spectral::DEFAULT_BOUNDS.to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Jacobi,
    Appendix,
    Cutoff,
    Doubling,
    Gradient,
    Measures,
    Hessian,
}

impl Check {
    pub const ALL: [Check; 7] =
        [Check::Jacobi, Check::Appendix, Check::Cutoff, Check::Doubling, Check::Gradient, Check::Measures, Check::Hessian];

    pub fn id(self) -> &'static str {
        match self {
            Check::Jacobi => "jacobi",
            Check::Appendix => "appendix",
            Check::Cutoff => "cutoff",
            Check::Doubling => "doubling",
            Check::Gradient => "gradient",
            Check::Measures => "measures",
            Check::Hessian => "hessian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub checks: Vec<Check>,
    /// Small radius of the doubling check.
    pub r: f64,
    /// Directory of a previous `sweep` whose solutions are reused.
    pub solutions: Option<PathBuf>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { checks: Check::ALL.to_vec(), r: 0.125, solutions: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Complete run configuration; every section is optional in the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub family: FamilySection,
    pub tolerances: Tolerances,
    pub fuzz: FuzzSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::ConfigIo { path: path.display().to_string(), source })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn constraint(&self) -> CliResult<ConstraintSpec> {
        let spec = match self.problem.constraint {
            ConstraintKind::Cone => {
                if self.problem.eps.is_some() {
                    return Err(CliError::Config("eps only applies to the sigma2 constraint".into()));
                }
                ConstraintSpec::gamma_cone(self.problem.dimension)
            }
            ConstraintKind::Sigma2 => {
                if self.problem.dimension != 3 {
                    return Err(CliError::Config(format!(
                        "the sigma2 constraint is three-dimensional, got dimension {}",
                        self.problem.dimension
                    )));
                }
                ConstraintSpec::sigma2_lower(self.problem.eps.unwrap_or(1.0))
            }
        };
        spec.map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks every field that does not need a solve.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let n = self.problem.dimension;
        if !(2..=sle_lab::field::MAX_DIM).contains(&n) {
            return bad(format!("dimension {n} outside 2..={}", sle_lab::field::MAX_DIM));
        }
        self.constraint()?;
        if self.problem.spectrum.is_some() && self.problem.theta.is_some() {
            return bad("give either problem.spectrum or problem.theta, not both".into());
        }
        if let Some(s) = &self.problem.spectrum {
            if s.len() != n || s.iter().any(|v| !v.is_finite()) {
                return bad(format!("problem.spectrum needs {n} finite values"));
            }
        }
        if let Some(t) = self.problem.theta {
            let cap = n as f64 * std::f64::consts::FRAC_PI_2;
            if !(t.is_finite() && t.abs() < cap) {
                return bad(format!("theta = {t} unreachable: |theta| must be below n*pi/2 = {cap}"));
            }
        }
        if !(self.problem.amplitude.is_finite() && self.problem.amplitude >= 0.0) {
            return bad("problem.amplitude must be finite and nonnegative".into());
        }
        if !(self.grid.half_width > 0.0 && self.grid.half_width.is_finite()) {
            return bad("grid.half_width must be positive".into());
        }
        if self.grid.points < 5 || self.grid.points.is_multiple_of(2) {
            return bad(format!("grid.points = {} must be odd and at least 5", self.grid.points));
        }
        if self.family.count == 0 || self.family.amplitudes.is_empty() {
            return bad("family.count and family.amplitudes must be nonempty".into());
        }
        if self.family.amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("family.amplitudes must be finite and nonnegative".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("newton", t.newton),
            ("quadrature", t.quadrature),
            ("jacobi_k", t.jacobi_k),
            ("gradient_cap", t.gradient_cap),
            ("violation_gate", t.violation_gate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("tolerances.{name} must be finite and nonnegative"));
            }
        }
        if t.newton == 0.0 || t.max_iter == 0 {
            return bad("tolerances.newton and tolerances.max_iter must be positive".into());
        }
        if self.fuzz.samples == 0 || self.fuzz.bounds.is_empty() || self.fuzz.bounds.iter().any(|b| !(*b > 0.0)) {
            return bad("fuzz.samples must be positive and fuzz.bounds positive".into());
        }
        if !(self.verify.r > 0.0 && self.verify.r <= 0.25) {
            return bad(format!("verify.r = {} outside (0, 1/4]", self.verify.r));
        }
        if self.verify.checks.is_empty() {
            return bad("verify.checks is empty".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// `--out`, then `output.dir`, then `$SLE_LAB_OUT`, then `./sle-lab-out`.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output.dir {
            return p.clone();
        }
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(DEFAULT_OUT),
        }
    }
}
