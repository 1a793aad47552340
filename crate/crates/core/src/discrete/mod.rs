//! N-state collapse dynamics on the probability simplex.
//!
//! Two amplitude models are provided: the deterministic random-phase
//! equation (phases drawn once, RK4 integration) and the stochastic
//! amplitude equation driven by Hermitian matrix noise. Both are
//! checked against the collapse conditions (simplex, martingale, vanishing
//! cross moments) and against a 1-D Fokker–Planck oracle for two states.

mod amplitude_sde;
mod compare;
mod conditions;
mod fp_two_state;
mod random_phase;

pub use amplitude_sde::{evolve_sde_amplitudes, evolve_sde_amplitudes_streamed, SimplexDiffusion};
pub use compare::{compare_sde_to_fp, ComparePoint};
pub use conditions::{check_collapse_conditions, CollapseReport, MartingaleDrift, PairMoment, SIMPLEX_CHECK_TOLERANCE};
pub use fp_two_state::{fp_solve_two_state, FpBoundary, FpSolution, FpTwoState};
pub use random_phase::evolve_random_phase;

use num_complex::Complex64;

use crate::ensemble::fold_ordered;
use crate::error::{invalid, require_positive, Result};
use crate::rng::RngStreamPolicy;
use crate::stats::EnsembleStats;

/// Below this magnitude a phase is unobservable and is held at its last value.
pub const PHASE_FREEZE_FLOOR: f64 = 1e-12;

/// A trajectory counts as collapsed once `max_n x_n >= 1 - COLLAPSE_EPSILON`.
pub const COLLAPSE_EPSILON: f64 = 1e-3;

/// Tolerance for `Σ x_n = 1` on input states.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

const PHASE_TAG: u64 = 0x5048_4153;

/// Amplitudes `c_n = r_n e^{iφ_n}` in polar form.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeState {
    pub magnitudes: Vec<f64>,
    pub phases: Vec<f64>,
}

impl AmplitudeState {
    pub fn from_probabilities(x: &[f64], phases: &[f64]) -> Result<Self> {
        validate_simplex(x)?;
        if phases.len() != x.len() {
            return Err(invalid("phases", "one phase per state is required"));
        }
        Ok(Self {
            magnitudes: x.iter().map(|v| v.sqrt()).collect(),
            phases: phases.to_vec(),
        })
    }

    pub fn from_amplitudes(c: &[Complex64]) -> Self {
        Self {
            magnitudes: c.iter().map(|z| z.norm()).collect(),
            phases: c.iter().map(|z| z.arg()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn x(&self) -> Vec<f64> {
        self.magnitudes.iter().map(|r| r * r).collect()
    }

    pub fn amplitude(&self, n: usize) -> Complex64 {
        Complex64::from_polar(self.magnitudes[n], self.phases[n])
    }

    pub fn amplitudes(&self) -> Vec<Complex64> {
        (0..self.len()).map(|n| self.amplitude(n)).collect()
    }
}

pub(crate) fn validate_simplex(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(invalid("x0", "empty state"));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid("x0", "components must lie in [0, 1]"));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(invalid("x0", format!("components sum to {s}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseConfig {
    /// Diagonal energies ω_n.
    pub omega: Vec<f64>,
    /// Hermitian coupling α_nm, row-major N×N.
    pub alpha: Vec<Complex64>,
    pub sigma: f64,
    pub r_exponent: u32,
    pub dt: f64,
    pub n_steps: usize,
}

impl CollapseConfig {
    /// Two states with real off-diagonal coupling `alpha12`, zero diagonal.
    pub fn two_state(alpha12: f64, sigma: f64, dt: f64, n_steps: usize) -> Self {
        let z = Complex64::new(0.0, 0.0);
        let a = Complex64::new(alpha12, 0.0);
        Self {
            omega: vec![0.0; 2],
            alpha: vec![z, a, a, z],
            sigma,
            r_exponent: 1,
            dt,
            n_steps,
        }
    }

    /// All off-diagonal couplings equal to `alpha`, zero diagonal.
    pub fn uniform(n: usize, alpha: f64, sigma: f64, dt: f64, n_steps: usize) -> Self {
        let alpha = (0..n * n)
            .map(|i| if i / n == i % n { Complex64::new(0.0, 0.0) } else { Complex64::new(alpha, 0.0) })
            .collect();
        Self {
            omega: vec![0.0; n],
            alpha,
            sigma,
            r_exponent: 1,
            dt,
            n_steps,
        }
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    pub fn alpha(&self, n: usize, m: usize) -> Complex64 {
        self.alpha[n * self.dim() + m]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(invalid("omega", "at least one state is required"));
        }
        if self.alpha.len() != n * n {
            return Err(invalid("alpha", format!("expected {} entries, got {}", n * n, self.alpha.len())));
        }
        for i in 0..n {
            for j in 0..n {
                if (self.alpha(i, j) - self.alpha(j, i).conj()).norm() > 1e-12 {
                    return Err(invalid("alpha", format!("not Hermitian at ({i}, {j})")));
                }
            }
        }
        if self.r_exponent < 1 {
            return Err(invalid("r_exponent", "must be >= 1"));
        }
        if self.omega.iter().any(|v| !v.is_finite()) || self.alpha.iter().any(|z| !z.is_finite()) {
            return Err(invalid("alpha", "non-finite coefficient"));
        }
        require_positive("dt", self.dt)?;
        require_positive("sigma", self.sigma)?;
        if self.n_steps == 0 {
            return Err(invalid("n_steps", "must be >= 1"));
        }
        Ok(())
    }

    pub fn t_final(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collapse {
    pub index: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseOutcome {
    /// Present iff the trajectory crossed `1 - ε`; carries both the winning
    /// basis state and the first-crossing time.
    pub collapse: Option<Collapse>,
    pub final_x: Vec<f64>,
}

impl CollapseOutcome {
    pub fn outcome_index(&self) -> Option<usize> {
        self.collapse.map(|c| c.index)
    }

    pub fn collapse_time(&self) -> Option<f64> {
        self.collapse.map(|c| c.time)
    }

    /// `1 - max_n x_n` at the end of the run.
    pub fn tail_weight(&self) -> f64 {
        1.0 - self.final_x.iter().cloned().fold(0.0, f64::max)
    }
}

pub(crate) struct CollapseDetector {
    eps: f64,
    hit: Option<Collapse>,
}

impl CollapseDetector {
    pub(crate) fn new(eps: f64) -> Self {
        Self { eps, hit: None }
    }

    pub(crate) fn observe(&mut self, x: &[f64], t: f64) {
        if self.hit.is_some() {
            return;
        }
        let (idx, max) = x
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if max >= 1.0 - self.eps {
            self.hit = Some(Collapse { index: idx, time: t });
        }
    }

    pub(crate) fn finish(self, final_x: Vec<f64>) -> CollapseOutcome {
        CollapseOutcome {
            collapse: self.hit,
            final_x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<AmplitudeState>,
    pub outcome: CollapseOutcome,
    /// Σ over steps of |Σ_n x_n − 1| removed by renormalization.
    pub renormalization: f64,
}

impl CollapseTrajectory {
    /// Recorded `x` values, time-major, as consumed by [`EnsembleStats`].
    pub fn x_samples(&self) -> Vec<f64> {
        self.states.iter().flat_map(|s| s.x()).collect()
    }
}

pub(crate) fn record_times(dt: f64, n_steps: usize, stride: usize) -> Result<Vec<f64>> {
    if stride == 0 || n_steps % stride != 0 {
        return Err(invalid("record_stride", format!("must be >= 1 and divide n_steps = {n_steps}")));
    }
    Ok((0..=n_steps / stride).map(|k| (k * stride) as f64 * dt).collect())
}

pub(crate) fn uniform_phases(n: usize, policy: &RngStreamPolicy) -> Vec<f64> {
    use rand::Rng;
    let mut rng = policy.derive(PHASE_TAG).rng();
    (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseModel {
    /// Deterministic random-phase equation, RK4.
    RandomPhase,
    /// Stochastic amplitude equation with Hermitian white noise.
    AmplitudeSde,
}

#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub n_trajectories: u64,
    pub master_seed: u64,
    pub record_stride: usize,
    pub n_bins: usize,
    pub keep_samples: bool,
}

#[derive(Debug, Clone)]
pub struct CollapseEnsemble {
    pub stats: EnsembleStats,
    /// One entry per trajectory id; `None` marks an aborted trajectory.
    pub outcomes: Vec<Option<CollapseOutcome>>,
    pub aborted: u64,
    pub max_renormalization: f64,
}

impl CollapseEnsemble {
    /// Fraction of all launched trajectories that collapsed onto state `n`.
    pub fn outcome_frequency(&self, n: usize) -> crate::stats::Estimate {
        let hits = self
            .outcomes
            .iter()
            .filter(|o| o.as_ref().and_then(|o| o.outcome_index()) == Some(n))
            .count() as u64;
        crate::stats::Estimate::proportion(hits, self.outcomes.len() as u64)
    }

    pub fn uncollapsed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.as_ref().map_or(false, |o| o.collapse.is_none())).count()
    }
}

/// Runs `n_trajectories` independent trajectories of `model`; trajectory `i`
/// uses stream `(master_seed, i)`. Aborted trajectories are counted and
/// excluded from the statistics.
pub fn run_collapse_ensemble(
    model: CollapseModel,
    config: &CollapseConfig,
    x0: &[f64],
    opts: &EnsembleOptions,
) -> Result<CollapseEnsemble> {
    config.validate()?;
    validate_simplex(x0)?;
    let times = record_times(config.dt, config.n_steps, opts.record_stride)?;
    let stats = EnsembleStats::new(times, config.dim(), opts.n_bins, opts.keep_samples);
    let init = CollapseEnsemble {
        stats,
        outcomes: Vec::with_capacity(opts.n_trajectories as usize),
        aborted: 0,
        max_renormalization: 0.0,
    };
    let run = |id: u64| {
        let policy = RngStreamPolicy::new(opts.master_seed, id);
        match model {
            CollapseModel::RandomPhase => evolve_random_phase(config, x0, &policy, opts.record_stride),
            CollapseModel::AmplitudeSde => evolve_sde_amplitudes_streamed(config, x0, &policy, opts.record_stride),
        }
    };
    Ok(fold_ordered(opts.n_trajectories, init, run, |acc, _, res| match res {
        Ok(tr) => {
            acc.stats.push_trajectory(&tr.x_samples());
            acc.max_renormalization = acc.max_renormalization.max(tr.renormalization);
            acc.outcomes.push(Some(tr.outcome));
        }
        Err(_) => {
            acc.aborted += 1;
            acc.outcomes.push(None);
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = CollapseConfig::two_state(1.0, 1.0, 0.01, 10);
        assert!(c.validate().is_ok());
        c.alpha[1] = Complex64::new(1.0, 0.5);
        assert!(c.validate().is_err());
        let mut c = CollapseConfig::two_state(1.0, 1.0, 0.01, 10);
        c.r_exponent = 0;
        assert!(c.validate().is_err());
        assert!(validate_simplex(&[0.3, 0.6]).is_err());
        assert!(validate_simplex(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn outcome_invariant_holds_by_construction() {
        let mut d = CollapseDetector::new(COLLAPSE_EPSILON);
        d.observe(&[0.5, 0.5], 0.0);
        d.observe(&[0.9995, 0.0005], 1.0);
        d.observe(&[1.0, 0.0], 2.0);
        let o = d.finish(vec![1.0, 0.0]);
        assert_eq!(o.outcome_index(), Some(0));
        assert_eq!(o.collapse_time(), Some(1.0));
        let o = CollapseDetector::new(COLLAPSE_EPSILON).finish(vec![0.5, 0.5]);
        assert!(o.outcome_index().is_none() && o.collapse_time().is_none());
    }
}
