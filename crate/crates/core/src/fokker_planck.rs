//! Moment-flow diagnostic for the Fokker–Planck equation of an Itô SDE.
//!
//! For a test function `f`, the FP equation implies
//! `d/dt E[f(x)] = E[L†f(x)]` with
//! `L†f = G·∇f + (σ²/2) Σ_nm (F Fᵀ)_nm ∂_n ∂_m f`.
//! The residual compares a central difference of `E[f]` on the sample grid
//! with the ensemble average of `L†f`, per trajectory, so the reported
//! standard error accounts for the correlation between neighbouring times.

use crate::error::{invalid, Error, Result};
use crate::sde::SdeSystem;
use crate::stats::{EnsembleStats, Estimate, MomentAccumulator};

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        if terms.iter().any(|t| t.powers.len() != dim) {
            return Err(invalid("terms", "every monomial needs one exponent per coordinate"));
        }
        Ok(Self { dim, terms })
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            dim,
            terms: vec![Monomial {
                coeff: c,
                powers: vec![0; dim],
            }],
        }
    }

    /// `c · Π x_i^{p_i}`.
    pub fn monomial(coeff: f64, powers: &[u32]) -> Self {
        Self {
            dim: powers.len(),
            terms: vec![Monomial {
                coeff,
                powers: powers.to_vec(),
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * t.powers.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product::<f64>())
            .sum()
    }

    /// ∂f/∂x_i.
    pub fn partial(&self, x: &[f64], i: usize) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.powers[i] > 0)
            .map(|t| {
                let mut v = t.coeff * t.powers[i] as f64;
                for (j, (&p, &xj)) in t.powers.iter().zip(x).enumerate() {
                    let e = if j == i { p - 1 } else { p };
                    v *= xj.powi(e as i32);
                }
                v
            })
            .sum()
    }

    /// ∂²f/∂x_i∂x_j.
    pub fn second_partial(&self, x: &[f64], i: usize, j: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let mut p = t.powers.clone();
                let mut c = t.coeff;
                for &k in &[i, j] {
                    if p[k] == 0 {
                        return 0.0;
                    }
                    c *= p[k] as f64;
                    p[k] -= 1;
                }
                c * p.iter().zip(x).map(|(&e, &v)| v.powi(e as i32)).product::<f64>()
            })
            .sum()
    }
}

/// `L†f(x)` at time `t`.
pub fn adjoint_generator<S: SdeSystem + ?Sized>(system: &S, sigma: f64, f: &Polynomial, x: &[f64], t: f64) -> f64 {
    let d = system.dim();
    let q = system.noise_dim();
    let mut g = vec![0.0; d];
    let mut fm = vec![0.0; d * q];
    system.drift(x, t, &mut g);
    system.diffusion(x, t, &mut fm);
    let mut out = 0.0;
    for n in 0..d {
        if g[n] != 0.0 {
            out += g[n] * f.partial(x, n);
        }
    }
    for n in 0..d {
        for m in 0..d {
            let ffn: f64 = (0..q).map(|k| fm[n * q + k] * fm[m * q + k]).sum();
            if ffn != 0.0 {
                out += 0.5 * sigma * sigma * ffn * f.second_partial(x, n, m);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPoint {
    pub time: f64,
    /// Signed `d/dt E[f] − E[L†f]` with its standard error.
    pub residual: Estimate,
}

impl ResidualPoint {
    pub fn magnitude(&self) -> f64 {
        self.residual.mean.abs()
    }
}

/// One residual series per test polynomial, evaluated at every interior
/// sample time. Requires stats built with `keep_samples` on a uniform grid.
pub fn fokker_planck_moment_residual<S: SdeSystem + ?Sized>(
    stats: &EnsembleStats,
    system: &S,
    sigma: f64,
    test_polynomials: &[Polynomial],
) -> Result<Vec<Vec<ResidualPoint>>> {
    let times = stats.times();
    if times.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 time samples, got {}", times.len())));
    }
    if stats.dim() != system.dim() {
        return Err(invalid("system", "dimension differs from the ensemble statistics"));
    }
    if let Some(p) = test_polynomials.iter().find(|p| p.dim() != system.dim()) {
        return Err(invalid("test_polynomials", format!("polynomial of dimension {} for system of {}", p.dim(), system.dim())));
    }
    let step = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0)) {
        return Err(invalid("stats", "sample times must be uniformly spaced"));
    }
    if stats.samples_at(0).is_none() {
        return Err(Error::InsufficientData("ensemble statistics were built without raw samples".into()));
    }
    let d = stats.dim();
    let n_traj = stats.n_trajectories() as usize;
    let mut out = Vec::with_capacity(test_polynomials.len());
    for f in test_polynomials {
        let mut series = Vec::with_capacity(times.len() - 2);
        for k in 1..times.len() - 1 {
            let prev = stats.samples_at(k - 1).unwrap_or_default();
            let cur = stats.samples_at(k).unwrap_or_default();
            let next = stats.samples_at(k + 1).unwrap_or_default();
            let mut acc = MomentAccumulator::default();
            for j in 0..n_traj {
                let xs = |s: &[f64]| s[j * d..(j + 1) * d].to_vec();
                let (xp, xc, xn) = (xs(prev), xs(cur), xs(next));
                let ddt = (f.eval(&xn) - f.eval(&xp)) / (2.0 * step);
                acc.push(ddt - adjoint_generator(system, sigma, f, &xc, times[k]));
            }
            series.push(ResidualPoint {
                time: times[k],
                residual: acc.estimate(),
            });
        }
        out.push(series);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_noise_path;
    use crate::rng::RngStreamPolicy;
    use crate::sde::{integrate_ito, FnSystem};

    #[test]
    fn polynomial_derivatives() {
        // f = 3 x0^2 x1 + 2
        let f = Polynomial::new(
            2,
            vec![
                Monomial { coeff: 3.0, powers: vec![2, 1] },
                Monomial { coeff: 2.0, powers: vec![0, 0] },
            ],
        )
        .unwrap();
        let x = [0.5, 2.0];
        assert!((f.eval(&x) - (3.0 * 0.25 * 2.0 + 2.0)).abs() < 1e-15);
        assert!((f.partial(&x, 0) - 6.0 * 0.5 * 2.0).abs() < 1e-15);
        assert!((f.partial(&x, 1) - 3.0 * 0.25).abs() < 1e-15);
        assert!((f.second_partial(&x, 0, 0) - 6.0 * 2.0).abs() < 1e-15);
        assert!((f.second_partial(&x, 0, 1) - 6.0 * 0.5).abs() < 1e-15);
        assert_eq!(f.second_partial(&x, 1, 1), 0.0);
    }

    fn brownian_stats(n_traj: u64, sigma: f64) -> EnsembleStats {
        let sys = FnSystem::new(1, 1, |_, _, g: &mut [f64]| g[0] = 0.0, |_, _, f: &mut [f64]| f[0] = 1.0);
        let dt = 0.01;
        let stride = 10;
        let n_rec = 11;
        let times: Vec<f64> = (0..n_rec).map(|k| (k * stride) as f64 * dt).collect();
        let mut stats = EnsembleStats::new(times, 1, 10, true);
        for id in 0..n_traj {
            let noise = sample_noise_path(1, dt, stride * (n_rec - 1), sigma, &RngStreamPolicy::new(17, id)).unwrap();
            let tr = integrate_ito(&sys, &[0.0], &noise).unwrap();
            let rec: Vec<f64> = (0..n_rec).map(|k| tr.state(k * stride)[0]).collect();
            stats.push_trajectory(&rec);
        }
        stats
    }

    #[test]
    fn brownian_second_moment_residual_vanishes() {
        let sigma = 1.0;
        let stats = brownian_stats(5000, sigma);
        let sys = FnSystem::new(1, 1, |_, _, g: &mut [f64]| g[0] = 0.0, |_, _, f: &mut [f64]| f[0] = 1.0);
        let polys = [Polynomial::monomial(1.0, &[2]), Polynomial::constant(1, 1.0)];
        let res = fokker_planck_moment_residual(&stats, &sys, sigma, &polys).unwrap();
        for p in &res[0] {
            assert!(p.residual.within(0.0, 5.0), "{p:?}");
        }
        for p in &res[1] {
            assert_eq!(p.residual.mean, 0.0);
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let stats = EnsembleStats::new(vec![0.0, 1.0], 1, 4, true);
        let sys = FnSystem::new(1, 1, |_, _, g: &mut [f64]| g[0] = 0.0, |_, _, f: &mut [f64]| f[0] = 1.0);
        assert!(matches!(
            fokker_planck_moment_residual(&stats, &sys, 1.0, &[Polynomial::constant(1, 1.0)]),
            Err(Error::InsufficientData(_))
        ));
    }
}
