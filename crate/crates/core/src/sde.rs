//! Generic Itô SDEs `dx_n = G_n(x,t) dt + Σ_m F_nm(x,t) dB_m`, integrated
//! with Euler–Maruyama (coefficients evaluated at the start of each step).

use crate::error::{invalid, Error, Result};
use crate::noise::NoisePath;

pub trait SdeSystem {
    fn dim(&self) -> usize;

    fn noise_dim(&self) -> usize {
        self.dim()
    }

    fn drift(&self, x: &[f64], t: f64, out: &mut [f64]);

    /// Row-major `dim × noise_dim` matrix `F`.
    fn diffusion(&self, x: &[f64], t: f64, out: &mut [f64]);
}

/// An [`SdeSystem`] assembled from closures.
pub struct FnSystem<G, F> {
    dim: usize,
    noise_dim: usize,
    drift: G,
    diffusion: F,
}

impl<G, F> FnSystem<G, F>
where
    G: Fn(&[f64], f64, &mut [f64]),
    F: Fn(&[f64], f64, &mut [f64]),
{
    pub fn new(dim: usize, noise_dim: usize, drift: G, diffusion: F) -> Self {
        Self {
            dim,
            noise_dim,
            drift,
            diffusion,
        }
    }
}

impl<G, F> SdeSystem for FnSystem<G, F>
where
    G: Fn(&[f64], f64, &mut [f64]),
    F: Fn(&[f64], f64, &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn drift(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.drift)(x, t, out)
    }
    fn diffusion(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.diffusion)(x, t, out)
    }
}

/// States at every integration step, `(n_steps + 1) × dim`, step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub dt: f64,
    pub states: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

pub fn integrate_ito<S: SdeSystem + ?Sized>(system: &S, x0: &[f64], noise: &NoisePath) -> Result<Trajectory> {
    let d = system.dim();
    let q = system.noise_dim();
    if x0.len() != d {
        return Err(invalid("x0", format!("length {} does not match system dimension {d}", x0.len())));
    }
    if noise.n_dims != q {
        return Err(invalid(
            "noise",
            format!("noise dimension {} does not match system noise dimension {q}", noise.n_dims),
        ));
    }
    let dt = noise.dt;
    let mut states = Vec::with_capacity((noise.n_steps + 1) * d);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut f = vec![0.0; d * q];
    for k in 0..noise.n_steps {
        let t = k as f64 * dt;
        system.drift(&x, t, &mut g);
        system.diffusion(&x, t, &mut f);
        if g.iter().chain(f.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k, state: x });
        }
        let db = noise.step(k);
        for n in 0..d {
            let row = &f[n * q..(n + 1) * q];
            let stoch: f64 = row.iter().zip(db).map(|(a, b)| a * b).sum();
            x[n] += g[n] * dt + stoch;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1, state: x });
        }
        states.extend_from_slice(&x);
    }
    Ok(Trajectory { dim: d, dt, states })
}
