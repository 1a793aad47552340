//! Continuous spontaneous localization.
//!
//! The state evolves linearly under a white-noise field `w`; noise
//! realizations are weighted by the squared norm they produce. All
//! per-basis weights are carried in log space, so the linear evolution never
//! overflows even when branches separate by hundreds of e-folds.
//!
//! Discretization: per step the field takes one value per mode (or lattice
//! site) with physical-measure law `Σ_n x_n N(2λ a_n, λ/dt)` (sites:
//! variance `λ/(h dt)`), the exact mixture implied by the step's norm weight.

mod commuting;
mod density;
mod general;
mod lattice;
mod unitary;

pub use commuting::{
    asymptotic_collapse_check, density_matrix_analytic, evolve_csl_commuting, raw_measure_normalization_check, run_commuting_ensemble,
    sample_physical_noise, AsymptoticReport, CommutingRun, CslEnsemble, CslOutcome, NoiseScheme,
};
pub use density::{DensityEstimate, DensityMatrix, ProjectorAccumulator};
pub use general::{evolve_csl_general, run_general_trajectory, sample_general_step, GeneralCslModel, GeneralRun, Hamiltonian};
pub use lattice::{
    density_matrix_evolution_lattice, evolve_csl_lattice, evolve_csl_lattice_with_noise, run_lattice_ensemble, smeared_mass_density, LatticeCslModel,
    LatticeEnsemble, LatticeRun, SmearedDensity, MAX_DENSE_SITES,
};
pub use unitary::{gauss_hermite, unitary_representation_check, MIN_QUADRATURE_ORDER};

use crate::error::{invalid, require_positive, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CommutingCslModel {
    /// Spectrum `a_n` of the collapse operator in the preferred basis.
    pub eigenvalues: Vec<f64>,
    pub lambda: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl CommutingCslModel {
    pub fn validate(&self) -> Result<()> {
        if self.eigenvalues.is_empty() {
            return Err(invalid("eigenvalues", "empty spectrum"));
        }
        if self.eigenvalues.iter().any(|a| !a.is_finite()) {
            return Err(invalid("eigenvalues", "must be finite"));
        }
        require_positive("lambda", self.lambda)?;
        require_positive("dt", self.dt)?;
        if self.n_steps == 0 {
            return Err(invalid("n_steps", "must be >= 1"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// A sampled noise path: `w[k * n_modes + j]` is mode `j` on step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CslNoiseRecord {
    pub dt: f64,
    pub n_modes: usize,
    pub w: Vec<f64>,
    /// Accumulated Gaussian exponent `−(4λ)⁻¹ Σ dt (w − 2λ a_n)²` per basis
    /// state, when the sampler tracked it.
    pub raw_log_weight: Vec<f64>,
    /// Branch drawn at `t = 0` by the mixture scheme.
    pub branch: Option<usize>,
}

impl CslNoiseRecord {
    pub fn n_steps(&self) -> usize {
        if self.n_modes == 0 {
            0
        } else {
            self.w.len() / self.n_modes
        }
    }

    pub fn step(&self, k: usize) -> &[f64] {
        &self.w[k * self.n_modes..(k + 1) * self.n_modes]
    }

    /// Time average of mode `j`.
    pub fn mean(&self, j: usize) -> f64 {
        let n = self.n_steps();
        (0..n).map(|k| self.w[k * self.n_modes + j]).sum::<f64>() / n as f64
    }
}

/// `ln Σ_n exp(v_n)`, ignoring `−∞` entries.
pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Draws an index with probability `p_i` (which must sum to 1) by inverse CDF.
pub(crate) fn pick<R: rand::Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
}
