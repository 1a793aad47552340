use num_complex::Complex64;

use super::{record_times, uniform_phases, validate_simplex, AmplitudeState, CollapseConfig, CollapseDetector, CollapseTrajectory};
use super::{COLLAPSE_EPSILON, PHASE_FREEZE_FLOOR};
use crate::error::{Error, Result};
use crate::rng::RngStreamPolicy;

struct Rhs<'a> {
    cfg: &'a CollapseConfig,
    frozen: &'a [f64],
}

impl Rhs<'_> {
    /// `dc_n/dt = -i [ω_n c_n + r_n^{r-1} e^{i(r+1)φ_n} Σ_m α_nm (c_m*)^r]`.
    fn eval(&self, c: &[Complex64], out: &mut [Complex64]) {
        let n_states = c.len();
        let r = self.cfg.r_exponent as i32;
        let conj_pow: Vec<Complex64> = c.iter().map(|z| z.conj().powi(r)).collect();
        for n in 0..n_states {
            let mag = c[n].norm();
            let phi = if mag >= PHASE_FREEZE_FLOOR { c[n].arg() } else { self.frozen[n] };
            let factor = Complex64::from_polar(mag.powi(r - 1), (r + 1) as f64 * phi);
            let mut sum = Complex64::new(0.0, 0.0);
            for m in 0..n_states {
                sum += self.cfg.alpha(n, m) * conj_pow[m];
            }
            out[n] = -Complex64::i() * (self.cfg.omega[n] * c[n] + factor * sum);
        }
    }
}

/// Integrates the random-phase amplitude equation with classical RK4 from
/// `x0` and phases drawn uniformly from `policy`. The state is renormalized
/// after every step; phases of components below [`PHASE_FREEZE_FLOOR`] keep
/// their last resolved value.
pub fn evolve_random_phase(
    config: &CollapseConfig,
    x0: &[f64],
    policy: &RngStreamPolicy,
    record_stride: usize,
) -> Result<CollapseTrajectory> {
    config.validate()?;
    validate_simplex(x0)?;
    if x0.len() != config.dim() {
        return Err(crate::error::invalid("x0", "length differs from the number of states"));
    }
    let times = record_times(config.dt, config.n_steps, record_stride)?;
    let n = config.dim();
    let phases = uniform_phases(n, policy);
    let start = AmplitudeState::from_probabilities(x0, &phases)?;
    let mut c = start.amplitudes();
    let mut frozen = phases;
    let mut states = vec![start];
    let mut detector = CollapseDetector::new(COLLAPSE_EPSILON);
    detector.observe(x0, 0.0);
    let mut renorm = 0.0;
    let h = config.dt;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![Complex64::default(); n], vec![Complex64::default(); n], vec![Complex64::default(); n], vec![Complex64::default(); n]);
    let mut tmp = vec![Complex64::default(); n];
    for step in 1..=config.n_steps {
        let rhs = Rhs { cfg: config, frozen: &frozen };
        rhs.eval(&c, &mut k1);
        for i in 0..n {
            tmp[i] = c[i] + 0.5 * h * k1[i];
        }
        rhs.eval(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = c[i] + 0.5 * h * k2[i];
        }
        rhs.eval(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = c[i] + h * k3[i];
        }
        rhs.eval(&tmp, &mut k4);
        for i in 0..n {
            c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let norm2: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        if !norm2.is_finite() || norm2 <= 0.0 {
            return Err(Error::NonFinite {
                step,
                state: c.iter().map(|z| z.norm_sqr()).collect(),
            });
        }
        renorm += (norm2 - 1.0).abs();
        let scale = norm2.sqrt().recip();
        for (z, f) in c.iter_mut().zip(frozen.iter_mut()) {
            *z *= scale;
            if z.norm() >= PHASE_FREEZE_FLOOR {
                *f = z.arg();
            }
        }
        let x: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
        detector.observe(&x, step as f64 * h);
        if step % record_stride == 0 {
            states.push(AmplitudeState {
                magnitudes: c.iter().map(|z| z.norm()).collect(),
                phases: frozen.clone(),
            });
        }
    }
    let final_x = states.last().unwrap().x();
    Ok(CollapseTrajectory {
        times,
        states,
        outcome: detector.finish(final_x),
        renormalization: renorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_coupling_conserves_magnitudes() {
        let cfg = CollapseConfig::two_state(0.0, 1.0, 0.01, 500);
        let tr = evolve_random_phase(&cfg, &[0.3, 0.7], &RngStreamPolicy::new(1, 0), 1).unwrap();
        for s in &tr.states {
            let x = s.x();
            assert!((x[0] - 0.3).abs() < 1e-14 && (x[1] - 0.7).abs() < 1e-14);
        }
        // nonzero energies only rotate phases, up to RK4 amplitude error
        let mut cfg = cfg;
        cfg.omega = vec![0.7, -1.3];
        let tr = evolve_random_phase(&cfg, &[0.3, 0.7], &RngStreamPolicy::new(1, 0), 1).unwrap();
        let x = tr.states.last().unwrap().x();
        assert!((x[0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn basis_state_is_stationary() {
        // for r = 1 the coupling term has unit modulus at c_n = 0, so a basis
        // state is held only to an O(dt²) floor
        let cfg = CollapseConfig::uniform(3, 1.0, 1.0, 0.01, 1000);
        let tr = evolve_random_phase(&cfg, &[1.0, 0.0, 0.0], &RngStreamPolicy::new(2, 0), 10).unwrap();
        assert!(tr.states.iter().all(|s| s.x()[0] > 1.0 - 1e-3));
        for r in 2..=3 {
            let mut cfg = CollapseConfig::uniform(3, 1.0, 1.0, 0.01, 1000);
            cfg.r_exponent = r;
            let tr = evolve_random_phase(&cfg, &[1.0, 0.0, 0.0], &RngStreamPolicy::new(2, 0), 10).unwrap();
            let x = tr.states.last().unwrap().x();
            assert!(x[1] < 1e-20 && x[2] < 1e-20, "r={r}: {x:?}");
        }
    }

    #[test]
    fn deterministic_given_policy() {
        let cfg = CollapseConfig::two_state(1.0, 1.0, 0.01, 200);
        let p = RngStreamPolicy::new(9, 4);
        let a = evolve_random_phase(&cfg, &[0.5, 0.5], &p, 5).unwrap();
        let b = evolve_random_phase(&cfg, &[0.5, 0.5], &p, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn higher_exponent_runs_and_stays_on_simplex() {
        let mut cfg = CollapseConfig::uniform(3, 0.8, 1.0, 0.005, 400);
        cfg.r_exponent = 2;
        let tr = evolve_random_phase(&cfg, &[0.2, 0.3, 0.5], &RngStreamPolicy::new(3, 1), 4).unwrap();
        for s in &tr.states {
            assert!((s.x().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
