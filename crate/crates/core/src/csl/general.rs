use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{evolve_csl_commuting, pick, CommutingCslModel, CslNoiseRecord};
use crate::discrete::record_times;
use crate::error::{invalid, require_positive, Error, Result};
use crate::rng::RngStreamPolicy;

/// Piecewise-constant Hermitian Hamiltonian, row-major `N × N`.
#[derive(Debug, Clone, PartialEq)]
pub enum Hamiltonian {
    Zero,
    Constant(Vec<Complex64>),
    /// `(start_time, H)` pairs sorted by start time; the first must start at 0.
    Piecewise(Vec<(f64, Vec<Complex64>)>),
}

impl Hamiltonian {
    fn pieces(&self) -> Vec<(f64, &[Complex64])> {
        match self {
            Hamiltonian::Zero => Vec::new(),
            Hamiltonian::Constant(h) => vec![(0.0, h.as_slice())],
            Hamiltonian::Piecewise(p) => p.iter().map(|(t, h)| (*t, h.as_slice())).collect(),
        }
    }

    fn is_zero(&self) -> bool {
        self.pieces().iter().all(|(_, h)| h.iter().all(|z| *z == Complex64::default()))
    }
}

/// Several commuting collapse operators (diagonal in the working basis) and
/// an arbitrary Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralCslModel {
    /// `operators[k][n]`: eigenvalue of `A_k` on basis state `n`.
    pub operators: Vec<Vec<f64>>,
    pub hamiltonian: Hamiltonian,
    pub lambda: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl GeneralCslModel {
    pub fn dim(&self) -> usize {
        self.operators.first().map_or(0, |a| a.len())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 || self.operators.iter().any(|a| a.len() != n) {
            return Err(invalid("operators", "need at least one operator, all of the same dimension"));
        }
        if self.operators.iter().flatten().any(|a| !a.is_finite()) {
            return Err(invalid("operators", "eigenvalues must be finite"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be finite and non-negative"));
        }
        require_positive("dt", self.dt)?;
        if self.n_steps == 0 {
            return Err(invalid("n_steps", "must be >= 1"));
        }
        let pieces = self.hamiltonian.pieces();
        if let Some((t0, _)) = pieces.first() {
            if *t0 != 0.0 {
                return Err(invalid("hamiltonian", "the first piece must start at t = 0"));
            }
        }
        if pieces.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("hamiltonian", "piece start times must increase"));
        }
        for (_, h) in &pieces {
            if h.len() != n * n {
                return Err(invalid("hamiltonian", "matrix dimension differs from the operators'"));
            }
            for i in 0..n {
                for j in 0..n {
                    if (h[i * n + j] - h[j * n + i].conj()).norm() > 1e-12 {
                        return Err(invalid("hamiltonian", format!("not Hermitian at ({i}, {j})")));
                    }
                }
            }
        }
        Ok(())
    }

    fn half_step_unitaries(&self) -> Vec<(f64, DMatrix<Complex64>)> {
        let n = self.dim();
        self.hamiltonian
            .pieces()
            .into_iter()
            .map(|(t, h)| {
                let m = DMatrix::from_row_slice(n, n, h);
                let eig = m.symmetric_eigen();
                let phases = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, -0.5 * self.dt * e)));
                let v = &eig.eigenvectors;
                (t, v * DMatrix::from_diagonal(&phases) * v.adjoint())
            })
            .collect()
    }

    fn weight_exponent(&self, n: usize, w: &[f64]) -> f64 {
        let l = self.lambda;
        if l == 0.0 {
            return 0.0;
        }
        -self.dt / (4.0 * l) * self.operators.iter().zip(w).map(|(a, wk)| (wk - 2.0 * l * a[n]).powi(2)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralRun {
    /// Normalized final state.
    pub amplitudes: Vec<Complex64>,
    /// `ln ⟨ψ,t|ψ,t⟩` of the unnormalized state.
    pub log_norm_sq: f64,
    /// Normalized `|c_n|²` every `record_stride` steps from `t = 0`.
    pub x_trace: Vec<Vec<f64>>,
}

fn normalize(c: &mut DVector<Complex64>) -> Result<f64> {
    let n2 = c.norm_squared();
    if !(n2 > 0.0 && n2.is_finite()) {
        return Err(Error::Degenerate(format!("state norm² {n2:e}")));
    }
    *c /= Complex64::new(n2.sqrt(), 0.0);
    Ok(n2.ln())
}

struct Stepper {
    unitaries: Vec<(f64, DMatrix<Complex64>)>,
}

impl Stepper {
    fn unitary_at(&self, t: f64) -> Option<&DMatrix<Complex64>> {
        self.unitaries.iter().rev().find(|(t0, _)| *t0 <= t + 1e-12).map(|(_, u)| u)
    }
}

fn run_general<F>(model: &GeneralCslModel, c0: &[Complex64], record_stride: usize, mut noise: F) -> Result<GeneralRun>
where
    F: FnMut(usize, &DVector<Complex64>) -> Vec<f64>,
{
    model.validate()?;
    record_times(model.dt, model.n_steps, record_stride)?;
    let n = model.dim();
    if c0.len() != n {
        return Err(invalid("c0", "length differs from the model dimension"));
    }
    let stepper = Stepper {
        unitaries: model.half_step_unitaries(),
    };
    let mut c = DVector::from_column_slice(c0);
    let mut log_norm_sq = normalize(&mut c)?;
    let xs = |c: &DVector<Complex64>| c.iter().map(|z| z.norm_sqr()).collect::<Vec<f64>>();
    let mut trace = vec![xs(&c)];
    for k in 0..model.n_steps {
        let u = stepper.unitary_at(k as f64 * model.dt);
        if let Some(u) = u {
            c = u * &c;
        }
        let w = noise(k, &c);
        let e: Vec<f64> = (0..n).map(|i| model.weight_exponent(i, &w)).collect();
        let emax = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..n {
            c[i] *= (e[i] - emax).exp();
        }
        log_norm_sq += 2.0 * emax + normalize(&mut c)?;
        if let Some(u) = u {
            c = u * &c;
        }
        if (k + 1) % record_stride == 0 {
            trace.push(xs(&c));
        }
    }
    Ok(GeneralRun {
        amplitudes: c.iter().cloned().collect(),
        log_norm_sq,
        x_trace: trace,
    })
}

/// Strang-split evolution (half unitary, weight factor, half unitary) under
/// a given noise record with one mode per operator. With no Hamiltonian and a
/// single operator this is exactly the commuting evolution.
pub fn evolve_csl_general(model: &GeneralCslModel, c0: &[Complex64], noise: &CslNoiseRecord, record_stride: usize) -> Result<GeneralRun> {
    model.validate()?;
    if noise.n_modes != model.operators.len() || noise.n_steps() < model.n_steps {
        return Err(invalid("noise", "need one mode per operator and at least n_steps steps"));
    }
    if model.hamiltonian.is_zero() && model.operators.len() == 1 && model.lambda > 0.0 {
        let commuting = CommutingCslModel {
            eigenvalues: model.operators[0].clone(),
            lambda: model.lambda,
            dt: model.dt,
            n_steps: model.n_steps,
        };
        let r = evolve_csl_commuting(&commuting, c0, noise, record_stride)?;
        return Ok(GeneralRun {
            amplitudes: r.amplitudes,
            log_norm_sq: r.log_norm_sq,
            x_trace: r.x_trace,
        });
    }
    run_general(model, c0, record_stride, |k, _| noise.step(k).to_vec())
}

/// Draws one step of field values under the physical measure given the
/// normalized state `c` at the weight sub-step.
pub fn sample_general_step<R: Rng + ?Sized>(model: &GeneralCslModel, c: &[Complex64], rng: &mut R) -> Vec<f64> {
    let x: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
    let n = pick(&x, rng);
    let sd = (model.lambda / model.dt).sqrt();
    model
        .operators
        .iter()
        .map(|a| {
            let xi: f64 = rng.sample(StandardNormal);
            2.0 * model.lambda * a[n] + sd * xi
        })
        .collect()
}

/// Physical-measure trajectory with the field sampled step by step from the
/// evolving state. Returns the run and the noise it drew.
pub fn run_general_trajectory(
    model: &GeneralCslModel,
    c0: &[Complex64],
    policy: &RngStreamPolicy,
    record_stride: usize,
) -> Result<(GeneralRun, CslNoiseRecord)> {
    let mut rng = policy.rng();
    let mut w = Vec::with_capacity(model.n_steps * model.operators.len());
    let run = run_general(model, c0, record_stride, |_, c| {
        let s = sample_general_step(model, c.as_slice(), &mut rng);
        w.extend_from_slice(&s);
        s
    })?;
    let record = CslNoiseRecord {
        dt: model.dt,
        n_modes: model.operators.len(),
        w,
        raw_log_weight: Vec::new(),
        branch: None,
    };
    Ok((run, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csl::{sample_physical_noise, NoiseScheme};

    #[test]
    fn zero_hamiltonian_matches_commuting_bitwise() {
        let model = GeneralCslModel {
            operators: vec![vec![0.0, 1.0, 2.5]],
            hamiltonian: Hamiltonian::Zero,
            lambda: 1.3,
            dt: 0.01,
            n_steps: 150,
        };
        let c0 = vec![Complex64::new(0.5, 0.1), Complex64::new(0.3, -0.6), Complex64::new(0.0, (1.0f64 - 0.26 - 0.45).sqrt())];
        let commuting = CommutingCslModel {
            eigenvalues: model.operators[0].clone(),
            lambda: model.lambda,
            dt: model.dt,
            n_steps: model.n_steps,
        };
        let noise = sample_physical_noise(&commuting, &c0, NoiseScheme::Sequential, &RngStreamPolicy::new(2, 2)).unwrap();
        let g = evolve_csl_general(&model, &c0, &noise, 10).unwrap();
        let c = evolve_csl_commuting(&commuting, &c0, &noise, 10).unwrap();
        assert_eq!(g.amplitudes, c.amplitudes);
        assert_eq!(g.x_trace, c.x_trace);
        assert_eq!(g.log_norm_sq.to_bits(), c.log_norm_sq.to_bits());
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let model = GeneralCslModel {
            operators: vec![vec![0.0, 1.0]],
            hamiltonian: Hamiltonian::Constant(vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, 0.0),
            ]),
            lambda: 1.0,
            dt: 0.01,
            n_steps: 10,
        };
        assert!(model.validate().is_err());
    }
}
