use num_complex::Complex64;

use super::{record_times, uniform_phases, validate_simplex, AmplitudeState, CollapseConfig, CollapseDetector, CollapseTrajectory};
use super::{COLLAPSE_EPSILON, PHASE_FREEZE_FLOOR};
use crate::error::{invalid, Error, Result};
use crate::noise::{HermitianNoisePath, HermitianNoiseStream};
use crate::rng::RngStreamPolicy;
use crate::sde::SdeSystem;

/// One Euler–Maruyama step of the stochastic amplitude equation in polar
/// variables. With `c_n = r_n e^{iφ_n}` and `Z_n = Σ_m α_nm dB_nm c_m* / c_n*`
/// the update is `dx_n = 2 x_n Im Z_n`, `dφ_n = −ω_n dt − Re Z_n`.
/// Returns the magnitude removed by clamping and renormalization.
fn step(cfg: &CollapseConfig, x: &mut [f64], phi: &mut [f64], db: &[Complex64]) -> f64 {
    let n = x.len();
    let c: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(x[i].sqrt(), phi[i])).collect();
    let mut dx = vec![0.0; n];
    for i in 0..n {
        let mut s = Complex64::new(0.0, 0.0);
        for m in 0..n {
            s += cfg.alpha(i, m) * db[i * n + m] * c[m].conj();
        }
        dx[i] = 2.0 * (c[i] * s).im;
        let ri = x[i].sqrt();
        if ri >= PHASE_FREEZE_FLOOR {
            phi[i] -= cfg.omega[i] * cfg.dt + (s / c[i].conj()).re;
        } else {
            phi[i] -= cfg.omega[i] * cfg.dt;
        }
    }
    let mut clamped = 0.0;
    for i in 0..n {
        x[i] += dx[i];
        if x[i] < 0.0 {
            clamped -= x[i];
            x[i] = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    for v in x.iter_mut() {
        *v /= total;
    }
    clamped + (total - 1.0).abs()
}

fn run<F>(cfg: &CollapseConfig, initial: &AmplitudeState, record_stride: usize, mut noise: F) -> Result<CollapseTrajectory>
where
    F: FnMut(usize, &mut [Complex64]),
{
    cfg.validate()?;
    let n = cfg.dim();
    if n < 2 {
        return Err(invalid("omega", "the stochastic model needs at least two states"));
    }
    if initial.len() != n {
        return Err(invalid("x0", "length differs from the number of states"));
    }
    let mut x = initial.x();
    validate_simplex(&x)?;
    let times = record_times(cfg.dt, cfg.n_steps, record_stride)?;
    let mut phi = initial.phases.clone();
    let mut db = vec![Complex64::default(); n * n];
    let mut states = vec![initial.clone()];
    let mut detector = CollapseDetector::new(COLLAPSE_EPSILON);
    detector.observe(&x, 0.0);
    let mut renorm = 0.0;
    for k in 1..=cfg.n_steps {
        noise(k - 1, &mut db);
        renorm += step(cfg, &mut x, &mut phi, &db);
        if x.iter().chain(phi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k, state: x });
        }
        detector.observe(&x, k as f64 * cfg.dt);
        if k % record_stride == 0 {
            states.push(AmplitudeState {
                magnitudes: x.iter().map(|v| v.sqrt()).collect(),
                phases: phi.clone(),
            });
        }
    }
    Ok(CollapseTrajectory {
        times,
        states,
        outcome: detector.finish(x),
        renormalization: renorm,
    })
}

/// Integrates the stochastic amplitude equation against a pre-sampled noise
/// path. `config.sigma` is ignored in favour of the path's own scale.
pub fn evolve_sde_amplitudes(
    config: &CollapseConfig,
    initial: &AmplitudeState,
    noise: &HermitianNoisePath,
    record_stride: usize,
) -> Result<CollapseTrajectory> {
    if noise.dim != config.dim() {
        return Err(invalid("noise", format!("path has dimension {}, model has {}", noise.dim, config.dim())));
    }
    if noise.n_steps < config.n_steps {
        return Err(invalid("noise", "path is shorter than the run"));
    }
    if (noise.dt - config.dt).abs() > 1e-15 * config.dt {
        return Err(invalid("noise", "path time step differs from the model's"));
    }
    run(config, initial, record_stride, |k, out| out.copy_from_slice(noise.step(k)))
}

/// Same dynamics with phases and noise drawn on the fly from `policy`,
/// without materialising the path. Bitwise equal to sampling the path with
/// the same policy first.
pub fn evolve_sde_amplitudes_streamed(
    config: &CollapseConfig,
    x0: &[f64],
    policy: &RngStreamPolicy,
    record_stride: usize,
) -> Result<CollapseTrajectory> {
    config.validate()?;
    let phases = uniform_phases(x0.len(), policy);
    let initial = AmplitudeState::from_probabilities(x0, &phases)?;
    let mut stream = HermitianNoiseStream::new(config.dim(), config.dt, config.sigma, policy)?;
    run(config, &initial, record_stride, |_, out| stream.fill(out))
}

/// The probability-space diffusion implied by the amplitude equation:
/// `dx_n = Σ_{p=(n,m)} F_{n,p} dB_p`, one noise per unordered pair, with
/// `(σ²/2) F_{n,p}² = σ²|α_nm|² x_n x_m` and zero drift.
pub struct SimplexDiffusion {
    dim: usize,
    pairs: Vec<(usize, usize, f64)>,
}

impl SimplexDiffusion {
    pub fn from_config(cfg: &CollapseConfig) -> Self {
        let n = cfg.dim();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j, cfg.alpha(i, j).norm()));
            }
        }
        Self { dim: n, pairs }
    }
}

impl SdeSystem for SimplexDiffusion {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.pairs.len()
    }

    fn drift(&self, _x: &[f64], _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn diffusion(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let np = self.pairs.len();
        out.fill(0.0);
        for (p, &(i, j, a)) in self.pairs.iter().enumerate() {
            let f = std::f64::consts::SQRT_2 * a * (x[i].max(0.0) * x[j].max(0.0)).sqrt();
            out[i * np + p] = f;
            out[j * np + p] = -f;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_hermitian_noise;

    #[test]
    fn basis_state_is_a_fixed_point() {
        let cfg = CollapseConfig::two_state(1.0, 1.0, 1e-3, 1000);
        let tr = evolve_sde_amplitudes_streamed(&cfg, &[1.0, 0.0], &RngStreamPolicy::new(5, 0), 1).unwrap();
        for s in &tr.states {
            assert!(s.x()[1] < 1e-6);
        }
        assert!(tr.outcome.outcome_index() == Some(0) && tr.outcome.collapse_time() == Some(0.0));
    }

    #[test]
    fn streamed_matches_path() {
        let cfg = CollapseConfig::uniform(3, 0.7, 1.3, 1e-3, 300);
        let policy = RngStreamPolicy::new(11, 7);
        let a = evolve_sde_amplitudes_streamed(&cfg, &[0.2, 0.3, 0.5], &policy, 3).unwrap();
        let path = sample_hermitian_noise(3, cfg.dt, cfg.n_steps, cfg.sigma, &policy).unwrap();
        let initial = a.states[0].clone();
        let b = evolve_sde_amplitudes(&cfg, &initial, &path, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn norm_is_restored_each_step() {
        let cfg = CollapseConfig::uniform(4, 1.0, 1.0, 1e-3, 2000);
        let tr = evolve_sde_amplitudes_streamed(&cfg, &[0.1, 0.2, 0.3, 0.4], &RngStreamPolicy::new(1, 2), 10).unwrap();
        for s in &tr.states {
            assert!((s.x().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(tr.renormalization > 0.0);
    }

    #[test]
    fn mismatched_path_rejected() {
        let cfg = CollapseConfig::two_state(1.0, 1.0, 1e-3, 100);
        let init = AmplitudeState::from_probabilities(&[0.5, 0.5], &[0.0, 0.0]).unwrap();
        let short = sample_hermitian_noise(2, 1e-3, 50, 1.0, &RngStreamPolicy::new(0, 0)).unwrap();
        assert!(evolve_sde_amplitudes(&cfg, &init, &short, 1).is_err());
        let wrong_dt = sample_hermitian_noise(2, 2e-3, 100, 1.0, &RngStreamPolicy::new(0, 0)).unwrap();
        assert!(evolve_sde_amplitudes(&cfg, &init, &wrong_dt, 1).is_err());
    }

    #[test]
    fn non_finite_coupling_aborts() {
        let cfg = CollapseConfig::two_state(1e200, 1e200, 1e-3, 10);
        let r = evolve_sde_amplitudes_streamed(&cfg, &[0.5, 0.5], &RngStreamPolicy::new(0, 0), 1);
        assert!(matches!(r, Err(Error::NonFinite { .. })), "{r:?}");
    }
}
