use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::newton::{PhaseProblem, ProblemMeta};
use crate::error::{Error, Result};
use crate::field::{Grid, GridFunction};
use crate::spectral::{eigen_desc, is_admissible, phase, ConstraintSpec, Spectrum};

/// `u(x) = ½ (x - c)^T A (x - c)` on the grid and its phase `Σ arctan λ_i(A)`.
pub fn quadratic_solution(a: &DMatrix<f64>, grid: &Grid) -> Result<(GridFunction, f64)> {
    let n = grid.dim();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
    }
    let theta = phase(&eigen_desc(a)?);
    let c = grid.center().to_vec();
    let u = GridFunction::from_fn(grid.clone(), |x| quadratic_form(a, x, &c))?;
    Ok((u, theta))
}

fn quadratic_form(a: &DMatrix<f64>, x: &[f64], c: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * (x[i] - c[i]) * (x[j] - c[j]);
        }
    }
    0.5 * s
}

/// Grid-independent description of one family member: a rotated quadratic
/// core plus a plane-wave perturbation of the boundary data
/// `amplitude · L_ref^2 · sin(ω·x / L_ref + φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: String,
    pub constraint: ConstraintSpec,
    pub spectrum: Vec<f64>,
    /// Row-major `n × n` core Hessian.
    pub hessian: Vec<f64>,
    pub amplitude: f64,
    pub direction: Vec<f64>,
    pub wave_phase: f64,
    pub reference_length: f64,
}

impl InstanceSpec {
    /// Unrotated, unperturbed instance with the given core spectrum.
    pub fn diagonal(id: &str, constraint: ConstraintSpec, spectrum: &[f64]) -> Result<Self> {
        let s = Spectrum::new(spectrum.to_vec())?;
        let n = s.len();
        if n != constraint.dim() {
            return Err(Error::DimensionMismatch { expected: constraint.dim(), got: n });
        }
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(s.values()));
        Ok(InstanceSpec {
            id: id.into(),
            constraint,
            spectrum: s.values().to_vec(),
            hessian: a.transpose().as_slice().to_vec(),
            amplitude: 0.0,
            direction: unit(n),
            wave_phase: 0.0,
            reference_length: 2.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    pub fn hessian_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.hessian)
    }

    /// Phase of the core.
    pub fn theta(&self) -> f64 {
        phase(&Spectrum::new(self.spectrum.clone()).expect("finite spectrum"))
    }

    /// Boundary data at a point.
    pub fn boundary_value(&self, x: &[f64]) -> f64 {
        let zero = vec![0.0; x.len()];
        let core = quadratic_form(&self.hessian_matrix(), x, &zero);
        if self.amplitude == 0.0 {
            return core;
        }
        let l = self.reference_length;
        let arg: f64 = self.direction.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() / l + self.wave_phase;
        core + self.amplitude * l * l * arg.sin()
    }

    /// Exact solution for unperturbed members.
    pub fn exact_solution(&self, grid: &Grid) -> Option<GridFunction> {
        (self.amplitude == 0.0).then(|| GridFunction::from_fn(grid.clone(), |x| self.boundary_value(x)).expect("finite"))
    }

    pub fn problem(&self, grid: &Grid) -> Result<PhaseProblem> {
        if grid.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: grid.dim() });
        }
        let mut p = PhaseProblem::from_boundary_fn(grid.clone(), self.theta(), Some(self.constraint), |x| {
            self.boundary_value(x)
        })?;
        p.meta = ProblemMeta {
            id: self.id.clone(),
            generating_spectrum: Some(self.spectrum.clone()),
            amplitude: self.amplitude,
        };
        Ok(p)
    }
}

fn unit(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v
}

/// Knobs of [`instance_family`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub seed: u64,
    pub constraint: ConstraintSpec,
    pub count: usize,
    /// Perturbation amplitudes, cycled over members.
    pub amplitudes: Vec<f64>,
    /// Eigenvalues are drawn in `[-scale, scale]`.
    pub scale: f64,
    /// Every eigenvalue may move by `±margin` without leaving the admissible set.
    pub margin: f64,
    /// Lower bound on the largest core eigenvalue.
    pub min_top: f64,
    /// Lower bound on `λ_1 - λ_2` of the core.
    pub min_gap: f64,
}

pub const DEFAULT_AMPLITUDES: [f64; 4] = [0.0, 0.01, 0.05, 0.1];

impl FamilyConfig {
    pub fn new(seed: u64, constraint: ConstraintSpec, count: usize) -> Self {
        FamilyConfig {
            seed,
            constraint,
            count,
            amplitudes: DEFAULT_AMPLITUDES.to_vec(),
            scale: 8.0,
            margin: 0.3,
            min_top: 6.0,
            min_gap: 3.0,
        }
    }
}

const FAMILY_ATTEMPTS: usize = 2_000_000;

fn robustly_admissible(s: &Spectrum, spec: &ConstraintSpec, margin: f64) -> bool {
    let n = s.len();
    (0..(1usize << n)).all(|mask| {
        let v = s
            .values()
            .iter()
            .enumerate()
            .map(|(i, l)| if mask >> i & 1 == 1 { l + margin } else { l - margin })
            .collect();
        is_admissible(&Spectrum::new(v).expect("finite"), spec)
    })
}

/// FNV-1a hash of the constraint label, so families of different constraints
/// draw from different streams.
fn label_tag(spec: &ConstraintSpec) -> u64 {
    let mut h: u32 = 0x811c_9dc5;
    for b in spec.label().bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    u64::from(h)
}

fn random_rotation(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    
    m.qr().q()
}

/// Deterministic family of admissible problems. Member `k` alternates
/// between an all-positive core and one with a negative smallest eigenvalue
/// every `amplitudes.len()` members, and cycles through the amplitudes.
pub fn instance_family(cfg: &FamilyConfig) -> Result<Vec<InstanceSpec>> {
    if cfg.count == 0 {
        return Err(Error::InvalidArgument("family count must be at least 1".into()));
    }
    if cfg.amplitudes.is_empty() || cfg.amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::InvalidArgument(format!("bad amplitudes {:?}", cfg.amplitudes)));
    }
    let n = cfg.constraint.dim();
    let na = cfg.amplitudes.len();
    (0..cfg.count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((label_tag(&cfg.constraint) << 32) | k as u64);
            let negative = (k / na) % 2 == 1;
            let mut found = None;
            for _ in 0..FAMILY_ATTEMPTS {
                let v = (0..n).map(|_| rng.random_range(-cfg.scale..=cfg.scale)).collect();
                let s = Spectrum::new(v)?;
                let l = s.values();
                let sign_ok = if negative { s.min() < -cfg.margin } else { s.min() > cfg.margin };
                if sign_ok
                    && l[0] >= cfg.min_top
                    && l[0] - l[1] >= cfg.min_gap
                    && robustly_admissible(&s, &cfg.constraint, cfg.margin)
                {
                    found = Some(s);
                    break;
                }
            }
            let s = found.ok_or_else(|| Error::SamplingFailed {
                constraint: cfg.constraint.label(),
                attempts: FAMILY_ATTEMPTS,
            })?;
            let q = random_rotation(&mut rng, n);
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(s.values()));
            let a = &q * d * q.transpose();
            let a = (&a + a.transpose()) * 0.5;
            let mut dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            dir.iter_mut().for_each(|x| *x /= norm);
            let wave_phase = rng.random_range(0.0..std::f64::consts::TAU);
            Ok(InstanceSpec {
                id: format!("{}-s{}-k{}", cfg.constraint.label(), cfg.seed, k),
                constraint: cfg.constraint,
                spectrum: s.values().to_vec(),
                hessian: a.transpose().as_slice().to_vec(),
                amplitude: cfg.amplitudes[k % na],
                direction: dir,
                wave_phase,
                reference_length: 2.0,
            })
        })
        .collect()
}
