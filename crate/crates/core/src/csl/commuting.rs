use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{log_sum_exp, pick, CommutingCslModel, CslNoiseRecord, DensityMatrix, ProjectorAccumulator};
use crate::discrete::record_times;
use crate::ensemble::fold_ordered;
use crate::error::{invalid, Result};
use crate::rng::RngStreamPolicy;
use crate::stats::{EnsembleStats, Estimate, MomentAccumulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseScheme {
    /// Each step draws from the mixture weighted by the current `x_n`.
    Sequential,
    /// One branch `n ~ |c_n|²` at `t = 0`, then i.i.d. `N(2λ a_n, λ/dt)`.
    Mixture,
}

pub(crate) fn check_amplitudes(model: &CommutingCslModel, c0: &[Complex64]) -> Result<Vec<f64>> {
    model.validate()?;
    if c0.len() != model.dim() {
        return Err(invalid("c0", "one amplitude per eigenvalue is required"));
    }
    let norm: f64 = c0.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(invalid("c0", format!("amplitudes must be normalized, |c|² = {norm}")));
    }
    Ok(c0.iter().map(|z| z.norm_sqr()).collect())
}

/// Normalized `x_n ∝ |c_n|² e^{2 L_n}`.
fn probabilities(log_x0: &[f64], log_w: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = log_x0.iter().zip(log_w).map(|(a, l)| a + 2.0 * l).collect();
    let z = log_sum_exp(&v);
    v.iter().map(|x| (x - z).exp()).collect()
}

fn step_exponent(lambda: f64, dt: f64, w: f64, a: f64) -> f64 {
    let d = w - 2.0 * lambda * a;
    -dt / (4.0 * lambda) * d * d
}

pub fn sample_physical_noise(model: &CommutingCslModel, c0: &[Complex64], scheme: NoiseScheme, policy: &RngStreamPolicy) -> Result<CslNoiseRecord> {
    let x0 = check_amplitudes(model, c0)?;
    let log_x0: Vec<f64> = x0.iter().map(|x| x.ln()).collect();
    let (lambda, dt) = (model.lambda, model.dt);
    let sd = (lambda / dt).sqrt();
    let mut rng = policy.rng();
    let n = model.dim();
    let mut log_w = vec![0.0; n];
    let mut w = Vec::with_capacity(model.n_steps);
    let branch = match scheme {
        NoiseScheme::Mixture => Some(pick(&x0, &mut rng)),
        NoiseScheme::Sequential => None,
    };
    for _ in 0..model.n_steps {
        let b = match branch {
            Some(b) => b,
            None => pick(&probabilities(&log_x0, &log_w), &mut rng),
        };
        let xi: f64 = rng.sample(StandardNormal);
        let wk = 2.0 * lambda * model.eigenvalues[b] + sd * xi;
        for (l, &a) in log_w.iter_mut().zip(&model.eigenvalues) {
            *l += step_exponent(lambda, dt, wk, a);
        }
        w.push(wk);
    }
    Ok(CslNoiseRecord {
        dt,
        n_modes: 1,
        w,
        raw_log_weight: log_w,
        branch,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutingRun {
    /// Accumulated exponent `L_n`; the unnormalized amplitude is `c_n e^{L_n}`.
    pub log_weights: Vec<f64>,
    /// Normalized final amplitudes.
    pub amplitudes: Vec<Complex64>,
    /// `ln ⟨ψ,t|ψ,t⟩` of the unnormalized state.
    pub log_norm_sq: f64,
    /// Normalized `x_n` at every `record_stride` steps, starting at `t = 0`.
    pub x_trace: Vec<Vec<f64>>,
    /// Normalized amplitudes at the same times as `x_trace`.
    pub amplitude_trace: Vec<Vec<Complex64>>,
}

impl CommutingRun {
    /// `c_n e^{L_n}` in linear space (may underflow for long runs).
    pub fn unnormalized(&self) -> Vec<Complex64> {
        let s = (0.5 * self.log_norm_sq).exp();
        self.amplitudes.iter().map(|z| z * s).collect()
    }

    pub fn x(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn tail_weight(&self) -> f64 {
        1.0 - self.x().into_iter().fold(0.0, f64::max)
    }
}

/// Applies the noise path to `c0`. `c0` need not be normalized; the
/// evolution is linear in it.
pub fn evolve_csl_commuting(model: &CommutingCslModel, c0: &[Complex64], noise: &CslNoiseRecord, record_stride: usize) -> Result<CommutingRun> {
    model.validate()?;
    if c0.len() != model.dim() {
        return Err(invalid("c0", "one amplitude per eigenvalue is required"));
    }
    if noise.n_modes != 1 || noise.n_steps() < model.n_steps {
        return Err(invalid("noise", "need one mode and at least n_steps values"));
    }
    if (noise.dt - model.dt).abs() > 1e-15 * model.dt {
        return Err(invalid("noise", "time step differs from the model's"));
    }
    record_times(model.dt, model.n_steps, record_stride)?;
    let log_x0: Vec<f64> = c0.iter().map(|z| z.norm_sqr().ln()).collect();
    if log_sum_exp(&log_x0) == f64::NEG_INFINITY {
        return Err(invalid("c0", "zero state"));
    }
    let n = model.dim();
    let mut log_w = vec![0.0; n];
    let normalized = |log_w: &[f64]| -> (Vec<Complex64>, f64) {
        let v: Vec<f64> = log_x0.iter().zip(log_w).map(|(a, l)| a + 2.0 * l).collect();
        let log_norm_sq = log_sum_exp(&v);
        let amps = c0
            .iter()
            .zip(log_w)
            .map(|(c, l)| if c.norm_sqr() == 0.0 { Complex64::default() } else { c * (l - 0.5 * log_norm_sq).exp() })
            .collect();
        (amps, log_norm_sq)
    };
    let mut trace = vec![probabilities(&log_x0, &log_w)];
    let mut amplitude_trace = vec![normalized(&log_w).0];
    for k in 0..model.n_steps {
        let wk = noise.w[k];
        for (l, &a) in log_w.iter_mut().zip(&model.eigenvalues) {
            *l += step_exponent(model.lambda, model.dt, wk, a);
        }
        if (k + 1) % record_stride == 0 {
            trace.push(probabilities(&log_x0, &log_w));
            amplitude_trace.push(normalized(&log_w).0);
        }
    }
    let (amplitudes, log_norm_sq) = normalized(&log_w);
    Ok(CommutingRun {
        log_weights: log_w,
        amplitudes,
        log_norm_sq,
        x_trace: trace,
        amplitude_trace,
    })
}

/// Closed-form `ρ_nm = c_n c_m* e^{−(λt/2)(a_n − a_m)²}`.
pub fn density_matrix_analytic(model: &CommutingCslModel, c0: &[Complex64], t: f64) -> Result<DensityMatrix> {
    check_amplitudes(model, c0)?;
    let n = model.dim();
    let a = &model.eigenvalues;
    let mut e = vec![Complex64::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            e[i * n + j] = c0[i] * c0[j].conj() * (-0.5 * model.lambda * t * (a[i] - a[j]).powi(2)).exp();
        }
    }
    DensityMatrix::new(n, e, "eigenbasis")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CslOutcome {
    pub dominant: usize,
    pub tail_weight: f64,
    /// Time average of `w/(2λ)`.
    pub mean_w_over_2lambda: f64,
}

#[derive(Debug, Clone)]
pub struct CslEnsemble {
    pub stats: EnsembleStats,
    /// Projector average of the final states.
    pub rho: ProjectorAccumulator,
    /// Projector averages at each recorded time.
    pub rho_trace: Vec<ProjectorAccumulator>,
    pub outcomes: Vec<CslOutcome>,
}

impl CslEnsemble {
    pub fn density(&self) -> super::DensityEstimate {
        self.rho.estimate("eigenbasis")
    }

    pub fn density_at(&self, t: usize) -> super::DensityEstimate {
        self.rho_trace[t].estimate("eigenbasis")
    }
}

/// Trajectory `i` draws its noise from stream `(master_seed, i)`.
pub fn run_commuting_ensemble(
    model: &CommutingCslModel,
    c0: &[Complex64],
    scheme: NoiseScheme,
    n_trajectories: u64,
    master_seed: u64,
    record_stride: usize,
    n_bins: usize,
) -> Result<CslEnsemble> {
    check_amplitudes(model, c0)?;
    let times = record_times(model.dt, model.n_steps, record_stride)?;
    let init = CslEnsemble {
        rho_trace: vec![ProjectorAccumulator::new(model.dim()); times.len()],
        stats: EnsembleStats::new(times, model.dim(), n_bins, false),
        rho: ProjectorAccumulator::new(model.dim()),
        outcomes: Vec::with_capacity(n_trajectories as usize),
    };
    let one = |i: u64| -> Result<(CommutingRun, f64)> {
        let noise = sample_physical_noise(model, c0, scheme, &RngStreamPolicy::new(master_seed, i))?;
        let run = evolve_csl_commuting(model, c0, &noise, record_stride)?;
        Ok((run, noise.mean(0) / (2.0 * model.lambda)))
    };
    let mut err = None;
    let ens = fold_ordered(n_trajectories, init, one, |acc, _, r| match r {
        Ok((run, wbar)) => {
            let flat: Vec<f64> = run.x_trace.iter().flatten().cloned().collect();
            acc.stats.push_trajectory(&flat);
            acc.rho.push(&run.amplitudes);
            for (r, a) in acc.rho_trace.iter_mut().zip(&run.amplitude_trace) {
                r.push(a);
            }
            let x = run.x();
            let dominant = (0..x.len()).fold(0, |b, i| if x[i] > x[b] { i } else { b });
            acc.outcomes.push(CslOutcome {
                dominant,
                tail_weight: run.tail_weight(),
                mean_w_over_2lambda: wbar,
            });
        }
        Err(e) => {
            err.get_or_insert(e);
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(ens),
    }
}

/// Mean importance weight of raw-measure samples, which is 1 when the
/// physical measure is normalized. Raw paths are `w ~ N(0, λ/dt)` i.i.d.,
/// with weight `Σ_n |c_n|² exp(Σ_k dt (2 a_n w_k − 2λ a_n²))`.
pub fn raw_measure_normalization_check(model: &CommutingCslModel, c0: &[Complex64], n_samples: u64, master_seed: u64) -> Result<Estimate> {
    let x0 = check_amplitudes(model, c0)?;
    let (lambda, dt) = (model.lambda, model.dt);
    let sd = (lambda / dt).sqrt();
    let acc = fold_ordered(
        n_samples,
        MomentAccumulator::default(),
        |i| {
            let mut rng = RngStreamPolicy::new(master_seed, i).rng();
            let mut s = 0.0;
            for _ in 0..model.n_steps {
                let xi: f64 = rng.sample(StandardNormal);
                s += sd * xi * dt;
            }
            let t = model.t_final();
            x0.iter()
                .zip(&model.eigenvalues)
                .map(|(x, a)| x * (2.0 * a * s - 2.0 * lambda * a * a * t).exp())
                .sum::<f64>()
        },
        |acc, _, w| acc.push(w),
    );
    Ok(acc.estimate())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport {
    pub frequencies: Vec<Estimate>,
    pub median_tail: f64,
    pub max_tail: f64,
}

impl AsymptoticReport {
    pub fn born_ok(&self, x0: &[f64], k_sigma: f64) -> bool {
        self.frequencies.iter().zip(x0).all(|(f, &x)| f.within(x, k_sigma))
    }
}

pub fn asymptotic_collapse_check(outcomes: &[CslOutcome], n_states: usize) -> AsymptoticReport {
    let n = outcomes.len() as u64;
    let frequencies = (0..n_states)
        .map(|s| Estimate::proportion(outcomes.iter().filter(|o| o.dominant == s).count() as u64, n))
        .collect();
    let mut tails: Vec<f64> = outcomes.iter().map(|o| o.tail_weight).collect();
    tails.sort_by(f64::total_cmp);
    let median_tail = if tails.is_empty() {
        f64::NAN
    } else if tails.len() % 2 == 1 {
        tails[tails.len() / 2]
    } else {
        0.5 * (tails[tails.len() / 2 - 1] + tails[tails.len() / 2])
    };
    AsymptoticReport {
        frequencies,
        median_tail,
        max_tail: tails.last().cloned().unwrap_or(f64::NAN),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amps(x: &[f64]) -> Vec<Complex64> {
        x.iter().map(|v| Complex64::new(v.sqrt(), 0.0)).collect()
    }

    #[test]
    fn constant_field_ratio() {
        let model = CommutingCslModel {
            eigenvalues: vec![0.0, 1.0],
            lambda: 1.0,
            dt: 0.01,
            n_steps: 100,
        };
        let noise = CslNoiseRecord {
            dt: 0.01,
            n_modes: 1,
            w: vec![2.0; 100],
            raw_log_weight: vec![],
            branch: None,
        };
        let c0 = amps(&[0.5, 0.5]);
        let run = evolve_csl_commuting(&model, &c0, &noise, 100).unwrap();
        let x = run.x();
        assert!((x[1] / x[0] - 1f64.exp().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn eigenstates_are_invariant() {
        let model = CommutingCslModel {
            eigenvalues: vec![0.3, -1.0, 2.0],
            lambda: 0.7,
            dt: 0.01,
            n_steps: 300,
        };
        let c0 = vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)];
        for seed in 0..5 {
            let noise = sample_physical_noise(&model, &c0, NoiseScheme::Sequential, &RngStreamPolicy::new(seed, 0)).unwrap();
            let run = evolve_csl_commuting(&model, &c0, &noise, 10).unwrap();
            assert_eq!(run.amplitudes, c0);
            assert!(run.x_trace.iter().all(|x| x == &vec![0.0, 1.0, 0.0]));
        }
    }

    #[test]
    fn degenerate_spectrum_is_invariant() {
        let model = CommutingCslModel {
            eigenvalues: vec![1.0, 1.0],
            lambda: 1.0,
            dt: 0.01,
            n_steps: 200,
        };
        let c0 = vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        let noise = sample_physical_noise(&model, &c0, NoiseScheme::Sequential, &RngStreamPolicy::new(1, 0)).unwrap();
        let run = evolve_csl_commuting(&model, &c0, &noise, 1).unwrap();
        for (a, b) in run.amplitudes.iter().zip(&c0) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn analytic_density_matrix() {
        let model = CommutingCslModel {
            eigenvalues: vec![0.0, 1.0],
            lambda: 1.0,
            dt: 0.01,
            n_steps: 200,
        };
        let c0 = amps(&[0.3, 0.7]);
        let rho0 = density_matrix_analytic(&model, &c0, 0.0).unwrap();
        assert!(rho0.max_deviation(&DensityMatrix::pure(&c0, "eigenbasis")) < 1e-15);
        let rho = density_matrix_analytic(&model, &c0, 2.0).unwrap();
        assert!((rho.get(0, 1).norm() / (0.21f64.sqrt()) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(rho.get(0, 0), rho0.get(0, 0));
        assert!((rho.trace() - 1.0).abs() < 1e-15);
        assert!(rho.min_eigenvalue() > -1e-12);
    }
}
