//! Finite-volume solver for `∂p/∂t = ∂²(A p)/∂x²` on `[0, 1]`.
//!
//! Node `i` sits at `x_i = i/M` and owns a cell of width `h = 1/M` (half
//! width at the two ends). The scheme evolves cell masses with interface
//! fluxes `J_{i+½} = −(q_{i+1} − q_i)/h`, `q_i = A_i p_i`, and no flux through
//! the ends, so total mass is conserved to rounding. For `f = x(1−x)` the
//! discrete identity `d/dt Σ m_i f_i = −2 Σ m_i A_i` holds exactly.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpBoundary {
    /// `A` vanishes at both ends; mass reaching an end cell stays there.
    SelfAbsorbing,
    /// `A p` is forced to zero at the end nodes, whatever `A` is there.
    Absorbing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpTwoState {
    /// `A` sampled at the `M + 1` nodes.
    pub diffusion: Vec<f64>,
    /// Probability mass per node cell.
    pub masses: Vec<f64>,
    pub dt_pde: f64,
    pub boundary: FpBoundary,
}

impl FpTwoState {
    /// All mass on the node nearest `x0`.
    pub fn delta<A: Fn(f64) -> f64>(m: usize, a: A, x0: f64, dt_pde: f64, boundary: FpBoundary) -> Result<Self> {
        if m < 2 {
            return Err(invalid("m", "need at least two cells"));
        }
        if !(0.0..=1.0).contains(&x0) {
            return Err(invalid("x0", "must lie in [0, 1]"));
        }
        let diffusion = (0..=m).map(|i| a(i as f64 / m as f64)).collect();
        let mut masses = vec![0.0; m + 1];
        masses[(x0 * m as f64).round() as usize] = 1.0;
        Ok(Self {
            diffusion,
            masses,
            dt_pde,
            boundary,
        })
    }

    /// `A(x) = rate · x(1 − x)` with self-absorbing ends.
    pub fn collapse(m: usize, rate: f64, x0: f64, dt_pde: f64) -> Result<Self> {
        Self::delta(m, |x| rate * x * (1.0 - x), x0, dt_pde, FpBoundary::SelfAbsorbing)
    }

    pub fn cells(&self) -> usize {
        self.masses.len() - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.cells() as f64
    }

    pub fn cell_width(&self, i: usize) -> f64 {
        if i == 0 || i == self.cells() {
            0.5 * self.h()
        } else {
            self.h()
        }
    }

    /// Largest stable explicit step, `h² / (2 max A)`.
    pub fn stability_bound(&self) -> f64 {
        let amax = self.diffusion.iter().cloned().fold(0.0, f64::max);
        if amax == 0.0 {
            f64::INFINITY
        } else {
            self.h() * self.h() / (2.0 * amax)
        }
    }

    /// Density `p_i = m_i / w_i`.
    pub fn density(&self) -> Vec<f64> {
        (0..self.masses.len()).map(|i| self.masses[i] / self.cell_width(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.masses.len() < 3 || self.diffusion.len() != self.masses.len() {
            return Err(invalid("diffusion", "needs one value per node and at least two cells"));
        }
        if self.diffusion.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid("diffusion", "A must be finite and non-negative"));
        }
        if self.masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(invalid("masses", "must be finite and non-negative"));
        }
        if self.boundary == FpBoundary::SelfAbsorbing && (self.diffusion[0] != 0.0 || *self.diffusion.last().unwrap() != 0.0) {
            return Err(invalid("diffusion", "self-absorbing ends require A(0) = A(1) = 0"));
        }
        if !(self.dt_pde > 0.0 && self.dt_pde.is_finite()) {
            return Err(invalid("dt_pde", "must be positive"));
        }
        let bound = self.stability_bound();
        if self.dt_pde > bound {
            return Err(Error::Stability { dt: self.dt_pde, bound });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSolution {
    pub times: Vec<f64>,
    /// Node masses at each sample time.
    pub masses: Vec<Vec<f64>>,
    /// `E[x(1 − x)]` at each sample time.
    pub spread: Vec<f64>,
    pub total_mass: Vec<f64>,
}

impl FpSolution {
    pub fn cells(&self) -> usize {
        self.masses[0].len() - 1
    }

    /// Mass held by the end cell at `x = 1` at sample `k`.
    pub fn mass_at_one(&self, k: usize) -> f64 {
        *self.masses[k].last().unwrap()
    }

    pub fn mass_at_zero(&self, k: usize) -> f64 {
        self.masses[k][0]
    }
}

fn moments(masses: &[f64]) -> (f64, f64) {
    let m = (masses.len() - 1) as f64;
    masses.iter().enumerate().fold((0.0, 0.0), |(s, t), (i, &w)| {
        let x = i as f64 / m;
        (s + w * x * (1.0 - x), t + w)
    })
}

/// Evolves `spec` and records the solution at each of `sample_times`
/// (non-decreasing, starting at or after 0). Each interval is split into the
/// fewest equal sub-steps not exceeding `dt_pde`.
pub fn fp_solve_two_state(spec: &FpTwoState, sample_times: &[f64]) -> Result<FpSolution> {
    spec.validate()?;
    if sample_times.is_empty() || sample_times[0] < 0.0 || sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("sample_times", "must be non-empty, non-negative and non-decreasing"));
    }
    let n = spec.masses.len();
    let h = spec.h();
    let w: Vec<f64> = (0..n).map(|i| spec.cell_width(i)).collect();
    let mut a = spec.diffusion.clone();
    if spec.boundary == FpBoundary::Absorbing {
        a[0] = 0.0;
        a[n - 1] = 0.0;
    }
    let coef: Vec<f64> = (0..n).map(|i| a[i] / w[i]).collect();
    let mut m = spec.masses.clone();
    let mut q = vec![0.0; n];
    let mut t = 0.0;
    let mut out = FpSolution {
        times: Vec::new(),
        masses: Vec::new(),
        spread: Vec::new(),
        total_mass: Vec::new(),
    };
    for &ts in sample_times {
        let span = ts - t;
        if span > 0.0 {
            let steps = (span / spec.dt_pde).ceil().max(1.0) as usize;
            let dt = span / steps as f64;
            let r = dt / h;
            for _ in 0..steps {
                for i in 0..n {
                    q[i] = coef[i] * m[i];
                }
                // m_i += dt (J_{i−½} − J_{i+½}) = (dt/h)(q_{i+1} − 2q_i + q_{i−1}), ends reflect
                let mut flux_left = 0.0;
                for i in 0..n - 1 {
                    let flux = (q[i + 1] - q[i]) * r;
                    m[i] += flux - flux_left;
                    flux_left = flux;
                }
                m[n - 1] -= flux_left;
            }
            t = ts;
        }
        let (spread, total) = moments(&m);
        out.times.push(ts);
        out.masses.push(m.clone());
        out.spread.push(spread);
        out.total_mass.push(total);
    }
    Ok(out)
}
