//! One-dimensional lattice CSL with a Gaussian-smeared mass density.
//!
//! `A(x) = Σ_p (m_p/m₀) (πa²)^{−1/4} exp(−(x − y_p)²/(2a²))` for particles at
//! sites `y_p`. The field has one value per site and step; the amplitude of
//! configuration `c` picks up `exp(dt h [Σ_x A_c(x) w_x − λ Σ_x A_c(x)²])`
//! times a configuration-independent factor that is tracked in the log norm.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{pick, CslNoiseRecord, DensityMatrix, ProjectorAccumulator};
use crate::ensemble::fold_ordered;
use crate::error::{invalid, require_positive, Error, Result};
use crate::lattice::{circular_convolve, periodic_kernel, Grid1};
use crate::rng::RngStreamPolicy;
use crate::sl::LatticeWavefunction;

/// Largest grid for dense density-matrix propagation.
pub const MAX_DENSE_SITES: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeCslModel {
    pub grid: Grid1,
    pub smear_a: f64,
    pub m0: f64,
    /// Mass of each particle (one or two).
    pub masses: Vec<f64>,
    pub lambda: f64,
    /// Site potential for one particle, or configuration potential for two.
    pub potential: Option<Vec<f64>>,
    /// Include `p²/2m`; with no kinetic term and no potential `H = 0`.
    pub kinetic: bool,
    pub dt: f64,
    pub n_steps: usize,
}

impl LatticeCslModel {
    pub fn validate(&self) -> Result<()> {
        require_positive("smear_a", self.smear_a)?;
        require_positive("m0", self.m0)?;
        require_positive("dt", self.dt)?;
        let h = self.grid.h();
        if self.smear_a < 2.0 * h {
            return Err(Error::Resolution {
                width: self.smear_a,
                bound: 2.0 * h,
            });
        }
        if self.grid.extent < 10.0 * self.smear_a {
            return Err(invalid("extent", format!("grid extent {} is below 10a = {}", self.grid.extent, 10.0 * self.smear_a)));
        }
        if !(1..=2).contains(&self.masses.len()) || self.masses.iter().any(|m| !(*m > 0.0)) {
            return Err(invalid("masses", "one or two positive masses are required"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be finite and non-negative"));
        }
        if self.n_steps == 0 {
            return Err(invalid("n_steps", "must be >= 1"));
        }
        if let Some(v) = &self.potential {
            if v.len() != self.configurations() {
                return Err(invalid("potential", "one value per configuration is required"));
            }
        }
        Ok(())
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    pub fn configurations(&self) -> usize {
        self.grid.n.pow(self.masses.len() as u32)
    }
}

/// The smeared mass-density operator, diagonal in configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct SmearedDensity {
    pub grid: Grid1,
    /// `(πa²)^{−1/4} exp(−d_j²/(2a²))` at periodic displacement `d_j = x_j − x_0`.
    pub kernel: Vec<f64>,
    /// `m_p / m₀`.
    pub couplings: Vec<f64>,
    /// `Σ_x g(x − y) g(x − y − d_j)`.
    autocorrelation: Vec<f64>,
}

pub fn smeared_mass_density(model: &LatticeCslModel) -> Result<SmearedDensity> {
    model.validate()?;
    let a = model.smear_a;
    let pref = (std::f64::consts::PI * a * a).powf(-0.25);
    let kernel = periodic_kernel(&model.grid, |d| pref * (-d * d / (2.0 * a * a)).exp());
    let autocorrelation = circular_convolve(&kernel, &kernel);
    Ok(SmearedDensity {
        grid: model.grid,
        kernel,
        couplings: model.masses.iter().map(|m| m / model.m0).collect(),
        autocorrelation,
    })
}

impl SmearedDensity {
    fn sites(&self, config: usize) -> Vec<usize> {
        let n = self.grid.n;
        if self.couplings.len() == 1 {
            vec![config]
        } else {
            vec![config / n, config % n]
        }
    }

    /// `A_c(x)` on every site for configuration `c`.
    pub fn eigenvalues(&self, config: usize) -> Vec<f64> {
        let n = self.grid.n;
        let mut out = vec![0.0; n];
        for (p, y) in self.sites(config).into_iter().enumerate() {
            for (x, v) in out.iter_mut().enumerate() {
                *v += self.couplings[p] * self.kernel[(x + n - y) % n];
            }
        }
        out
    }

    /// `⟨A(x)⟩_ψ` per site.
    pub fn expectation(&self, psi: &LatticeWavefunction) -> Vec<f64> {
        let h = self.grid.h();
        let mut out = vec![0.0; self.grid.n];
        for p in 0..self.couplings.len() {
            let rho: Vec<f64> = psi.marginal(p).iter().map(|r| r * h * self.couplings[p]).collect();
            for (o, v) in out.iter_mut().zip(circular_convolve(&rho, &self.kernel)) {
                *o += v;
            }
        }
        out
    }

    /// `Σ_x A_c(x)²` for every configuration.
    fn norms_sq(&self) -> Vec<f64> {
        let n = self.grid.n;
        let g2 = self.autocorrelation[0];
        if self.couplings.len() == 1 {
            return vec![self.couplings[0].powi(2) * g2; n];
        }
        let (k1, k2) = (self.couplings[0], self.couplings[1]);
        (0..n * n)
            .map(|c| {
                let d = (c % n + n - c / n) % n;
                (k1 * k1 + k2 * k2) * g2 + 2.0 * k1 * k2 * self.autocorrelation[d]
            })
            .collect()
    }

    /// `Σ_x A_c(x) w_x` for every configuration.
    fn project(&self, w: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let gw = circular_convolve(w, &self.kernel);
        if self.couplings.len() == 1 {
            return gw.iter().map(|v| v * self.couplings[0]).collect();
        }
        let (k1, k2) = (self.couplings[0], self.couplings[1]);
        (0..n * n).map(|c| k1 * gw[c / n] + k2 * gw[c % n]).collect()
    }

    /// `Σ_x (A_y(x) − A_y'(x))²` for single-particle sites `y`, `y'`.
    pub fn distance_sq(&self, y: usize, yp: usize) -> f64 {
        let n = self.grid.n;
        let k = self.couplings[0];
        2.0 * k * k * (self.autocorrelation[0] - self.autocorrelation[(y + n - yp) % n])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeRun {
    pub psi: LatticeWavefunction,
    /// `ln ⟨ψ,t|ψ,t⟩` of the unnormalized linear evolution.
    pub log_norm_sq: f64,
    pub snapshots: Vec<LatticeWavefunction>,
}

struct LatticeStepper<'a> {
    model: &'a LatticeCslModel,
    density: SmearedDensity,
    norms: Vec<f64>,
}

impl<'a> LatticeStepper<'a> {
    fn new(model: &'a LatticeCslModel) -> Result<Self> {
        let density = smeared_mass_density(model)?;
        let norms = density.norms_sq();
        Ok(Self { model, density, norms })
    }

    fn half_unitary(&self, psi: &mut LatticeWavefunction) -> Result<()> {
        half_step(self.model, psi)
    }

    /// Multiplies by the step weight and renormalizes; returns the change in
    /// `ln ‖ψ‖²`.
    fn weight(&self, psi: &mut LatticeWavefunction, w: &[f64]) -> Result<f64> {
        let m = self.model;
        if m.lambda == 0.0 {
            return Ok(0.0);
        }
        let h = m.grid.h();
        let proj = self.density.project(w);
        let ell: Vec<f64> = proj.iter().zip(&self.norms).map(|(p, q)| m.dt * h * (p - m.lambda * q)).collect();
        let emax = ell.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (z, l) in psi.values.iter_mut().zip(&ell) {
            *z *= (l - emax).exp();
        }
        let common = -m.dt * h / (4.0 * m.lambda) * w.iter().map(|v| v * v).sum::<f64>();
        let n2 = psi.normalize()?;
        Ok(2.0 * (emax + common) + n2.ln())
    }

    fn sample(&self, psi: &LatticeWavefunction, rng: &mut crate::rng::StreamRng) -> Vec<f64> {
        let m = self.model;
        let n = m.grid.n;
        if m.lambda == 0.0 {
            return vec![0.0; n];
        }
        let cell = psi.grid.h().powi(psi.n_particles as i32);
        let p: Vec<f64> = psi.values.iter().map(|z| z.norm_sqr() * cell).collect();
        let c = pick(&p, rng);
        let a = self.density.eigenvalues(c);
        let sd = (m.lambda / (m.grid.h() * m.dt)).sqrt();
        a.iter()
            .map(|ax| {
                let xi: f64 = rng.sample(StandardNormal);
                2.0 * m.lambda * ax + sd * xi
            })
            .collect()
    }
}

fn half_step(model: &LatticeCslModel, psi: &mut LatticeWavefunction) -> Result<()> {
    let half = 0.5 * model.dt;
    match (model.kinetic, model.potential.as_deref()) {
        (true, v) => psi.evolve(v, half, 1),
        (false, Some(v)) => {
            for (z, u) in psi.values.iter_mut().zip(v) {
                *z *= Complex64::from_polar(1.0, -half * u);
            }
            Ok(())
        }
        (false, None) => Ok(()),
    }
}

fn check_state(model: &LatticeCslModel, psi0: &LatticeWavefunction) -> Result<()> {
    model.validate()?;
    if psi0.grid != model.grid || psi0.n_particles != model.n_particles() {
        return Err(invalid("psi0", "grid or particle count differs from the model"));
    }
    Ok(())
}

fn run_lattice<F>(model: &LatticeCslModel, psi0: &LatticeWavefunction, record_stride: Option<usize>, mut noise: F) -> Result<LatticeRun>
where
    F: FnMut(usize, &LatticeStepper, &LatticeWavefunction) -> Vec<f64>,
{
    check_state(model, psi0)?;
    let stepper = LatticeStepper::new(model)?;
    let mut psi = psi0.clone();
    let mut log_norm_sq = psi.normalize()?.ln();
    let mut snapshots = Vec::new();
    if record_stride.is_some() {
        snapshots.push(psi.clone());
    }
    for k in 0..model.n_steps {
        stepper.half_unitary(&mut psi)?;
        let w = noise(k, &stepper, &psi);
        log_norm_sq += stepper.weight(&mut psi, &w)?;
        stepper.half_unitary(&mut psi)?;
        if let Some(s) = record_stride {
            if (k + 1) % s == 0 {
                snapshots.push(psi.clone());
            }
        }
    }
    Ok(LatticeRun { psi, log_norm_sq, snapshots })
}

/// Linear evolution of `psi0` (normalization irrelevant) under a fixed field
/// record with one mode per site.
pub fn evolve_csl_lattice_with_noise(model: &LatticeCslModel, psi0: &LatticeWavefunction, noise: &CslNoiseRecord) -> Result<LatticeRun> {
    if noise.n_modes != model.grid.n || noise.n_steps() < model.n_steps {
        return Err(invalid("noise", "need one mode per site and at least n_steps steps"));
    }
    run_lattice(model, psi0, None, |k, _, _| noise.step(k).to_vec())
}

/// Physical-measure trajectory; the field is drawn each step from the
/// state at the weight sub-step.
pub fn evolve_csl_lattice(model: &LatticeCslModel, psi0: &LatticeWavefunction, policy: &RngStreamPolicy, record_stride: Option<usize>) -> Result<LatticeRun> {
    let mut rng = policy.rng();
    run_lattice(model, psi0, record_stride, |_, st, psi| st.sample(psi, &mut rng))
}

#[derive(Debug, Clone)]
pub struct LatticeEnsemble {
    /// Weight of particle 0 in `{x < split}` at the end of each trajectory.
    pub split_weights: Vec<f64>,
    pub rho: Option<ProjectorAccumulator>,
}

impl LatticeEnsemble {
    /// Fraction of trajectories whose final state sits mostly below `split`.
    pub fn below_frequency(&self) -> crate::stats::Estimate {
        let k = self.split_weights.iter().filter(|&&w| w > 0.5).count() as u64;
        crate::stats::Estimate::proportion(k, self.split_weights.len() as u64)
    }

    pub fn density(&self) -> Option<super::DensityEstimate> {
        self.rho.as_ref().map(|r| r.estimate("position"))
    }
}

/// Trajectory `i` uses stream `(master_seed, i)`. The projector average is
/// kept only for single-particle grids within the dense limit.
pub fn run_lattice_ensemble(
    model: &LatticeCslModel,
    psi0: &LatticeWavefunction,
    n_trajectories: u64,
    master_seed: u64,
    split: f64,
    accumulate_rho: bool,
) -> Result<LatticeEnsemble> {
    check_state(model, psi0)?;
    let keep_rho = accumulate_rho && model.n_particles() == 1 && model.grid.n <= MAX_DENSE_SITES;
    if accumulate_rho && !keep_rho {
        return Err(Error::TooLarge {
            sites: model.configurations(),
            limit: MAX_DENSE_SITES,
        });
    }
    let init = LatticeEnsemble {
        split_weights: Vec::with_capacity(n_trajectories as usize),
        rho: keep_rho.then(|| ProjectorAccumulator::new(model.grid.n)),
    };
    let mut err = None;
    let ens = fold_ordered(
        n_trajectories,
        init,
        |i| evolve_csl_lattice(model, psi0, &RngStreamPolicy::new(master_seed, i), None),
        |acc, _, r| match r {
            Ok(run) => {
                acc.split_weights.push(run.psi.weight_below(0, split));
                if let Some(rho) = acc.rho.as_mut() {
                    rho.push(&run.psi.values);
                }
            }
            Err(e) => {
                err.get_or_insert(e);
            }
        },
    );
    match err {
        Some(e) => Err(e),
        None => Ok(ens),
    }
}

/// Deterministic propagation of a single-particle position-space density
/// matrix with the same splitting as the trajectories: half-step unitary,
/// decay `ρ_{yy'} ← ρ_{yy'} exp(−(λ/2) dt h Σ_x (A_y − A_y')²)`, half-step
/// unitary. `rho0` is normalized to unit trace in the grid's `h`-weighted
/// sense, i.e. as the average of `ψψ†/‖ψ‖²` over the coefficient vectors.
pub fn density_matrix_evolution_lattice(model: &LatticeCslModel, rho0: &DensityMatrix, mass: f64) -> Result<DensityMatrix> {
    model.validate()?;
    let n = model.grid.n;
    if model.n_particles() != 1 {
        return Err(invalid("masses", "dense propagation supports one particle"));
    }
    if n > MAX_DENSE_SITES {
        return Err(Error::TooLarge {
            sites: n,
            limit: MAX_DENSE_SITES,
        });
    }
    if rho0.dim != n {
        return Err(invalid("rho0", "dimension differs from the grid"));
    }
    let density = smeared_mass_density(model)?;
    let mut u = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let mut e = vec![Complex64::default(); n];
        e[j] = Complex64::new(1.0, 0.0);
        let mut psi = LatticeWavefunction {
            grid: model.grid,
            n_particles: 1,
            mass,
            values: e,
        };
        half_step(model, &mut psi)?;
        for i in 0..n {
            u[(i, j)] = psi.values[i];
        }
    }
    let ud = u.adjoint();
    let h = model.grid.h();
    let decay = DMatrix::<f64>::from_fn(n, n, |y, yp| (-0.5 * model.lambda * model.dt * h * density.distance_sq(y, yp)).exp());
    let mut rho = rho0.to_matrix();
    for _ in 0..model.n_steps {
        rho = &u * rho * &ud;
        rho.zip_apply(&decay, |r, d| *r *= d);
        rho = &u * rho * &ud;
    }
    DensityMatrix::new(n, rho.transpose().iter().cloned().collect(), "position")
}
