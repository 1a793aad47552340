//! Discretized Brownian increments.
//!
//! Increments carry the convention `dB_n dB_m = σ² δ_nm dt`, so σ is a
//! property of the noise rather than of the diffusion matrix.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, require_positive, Result};
use crate::rng::{RngStreamPolicy, StreamRng};

/// Real increments `dB_m` for `m = 0..n_dims`, stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    pub sigma: f64,
    pub n_dims: usize,
    pub n_steps: usize,
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k * self.n_dims..(k + 1) * self.n_dims]
    }
}

/// Generator behind [`sample_noise_path`]; lets long ensembles draw
/// increments on the fly instead of materializing whole paths.
pub struct NoiseStream {
    rng: StreamRng,
    scale: f64,
    n_dims: usize,
}

impl NoiseStream {
    pub fn new(n_dims: usize, dt: f64, sigma: f64, policy: &RngStreamPolicy) -> Result<Self> {
        check_common(dt, sigma)?;
        if n_dims == 0 {
            return Err(invalid("n_dims", "must be >= 1"));
        }
        Ok(Self {
            rng: policy.rng(),
            scale: sigma * dt.sqrt(),
            n_dims,
        })
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_dims);
        for v in out.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *v = self.scale * z;
        }
    }
}

pub fn sample_noise_path(
    n_dims: usize,
    dt: f64,
    n_steps: usize,
    sigma: f64,
    policy: &RngStreamPolicy,
) -> Result<NoisePath> {
    if n_steps == 0 {
        return Err(invalid("n_steps", "must be >= 1"));
    }
    let mut stream = NoiseStream::new(n_dims, dt, sigma, policy)?;
    let mut increments = vec![0.0; n_dims * n_steps];
    for chunk in increments.chunks_mut(n_dims) {
        stream.fill(chunk);
    }
    Ok(NoisePath {
        dt,
        sigma,
        n_dims,
        n_steps,
        increments,
    })
}

/// Hermitian matrix increments `dB_nm`, one `dim × dim` row-major block per step.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianNoisePath {
    pub dt: f64,
    pub sigma: f64,
    pub dim: usize,
    pub n_steps: usize,
    pub increments: Vec<Complex64>,
}

impl HermitianNoisePath {
    pub fn step(&self, k: usize) -> &[Complex64] {
        let block = self.dim * self.dim;
        &self.increments[k * block..(k + 1) * block]
    }

    pub fn get(&self, k: usize, n: usize, m: usize) -> Complex64 {
        self.step(k)[n * self.dim + m]
    }
}

/// Diagonal entries are real with variance σ²dt; off-diagonal entries are
/// complex with real and imaginary parts of variance σ²dt/2 each, which
/// gives `E[dB_mn conj(dB_rs)] = σ² δ_mr δ_ns dt` and `E[dB_mn dB_mn] = 0`.
pub struct HermitianNoiseStream {
    rng: StreamRng,
    diag_scale: f64,
    off_scale: f64,
    dim: usize,
}

impl HermitianNoiseStream {
    pub fn new(dim: usize, dt: f64, sigma: f64, policy: &RngStreamPolicy) -> Result<Self> {
        check_common(dt, sigma)?;
        if dim < 2 {
            return Err(invalid("dim", format!("Hermitian noise needs dim >= 2, got {dim}")));
        }
        let s = sigma * dt.sqrt();
        Ok(Self {
            rng: policy.rng(),
            diag_scale: s,
            off_scale: s / std::f64::consts::SQRT_2,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fill(&mut self, out: &mut [Complex64]) {
        let d = self.dim;
        debug_assert_eq!(out.len(), d * d);
        for n in 0..d {
            let z: f64 = self.rng.sample(StandardNormal);
            out[n * d + n] = Complex64::new(self.diag_scale * z, 0.0);
            for m in n + 1..d {
                let re: f64 = self.rng.sample(StandardNormal);
                let im: f64 = self.rng.sample(StandardNormal);
                let v = Complex64::new(self.off_scale * re, self.off_scale * im);
                out[n * d + m] = v;
                out[m * d + n] = v.conj();
            }
        }
    }
}

pub fn sample_hermitian_noise(
    dim: usize,
    dt: f64,
    n_steps: usize,
    sigma: f64,
    policy: &RngStreamPolicy,
) -> Result<HermitianNoisePath> {
    if n_steps == 0 {
        return Err(invalid("n_steps", "must be >= 1"));
    }
    let mut stream = HermitianNoiseStream::new(dim, dt, sigma, policy)?;
    let mut increments = vec![Complex64::new(0.0, 0.0); dim * dim * n_steps];
    for chunk in increments.chunks_mut(dim * dim) {
        stream.fill(chunk);
    }
    Ok(HermitianNoisePath {
        dt,
        sigma,
        dim,
        n_steps,
        increments,
    })
}

fn check_common(dt: f64, sigma: f64) -> Result<()> {
    require_positive("dt", dt)?;
    require_positive("sigma", sigma)
}
