use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::stats::MomentAccumulator;

/// Row-major Hermitian matrix in a labelled basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dim: usize,
    pub entries: Vec<Complex64>,
    pub basis: String,
}

impl DensityMatrix {
    pub fn new(dim: usize, entries: Vec<Complex64>, basis: impl Into<String>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(invalid("entries", "expected dim² values"));
        }
        Ok(Self {
            dim,
            entries,
            basis: basis.into(),
        })
    }

    /// `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`.
    pub fn pure(psi: &[Complex64], basis: impl Into<String>) -> Self {
        let n = psi.len();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let mut e = vec![Complex64::default(); n * n];
        for i in 0..n {
            for j in 0..n {
                e[i * n + j] = psi[i] * psi[j].conj() / norm;
            }
        }
        Self {
            dim: n,
            entries: e,
            basis: basis.into(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).re).sum()
    }

    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_matrix();
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_deviation(&self, other: &DensityMatrix) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// Running mean of normalized projectors, element by element.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorAccumulator {
    dim: usize,
    re: Vec<MomentAccumulator>,
    im: Vec<MomentAccumulator>,
}

impl ProjectorAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            re: vec![MomentAccumulator::default(); dim * dim],
            im: vec![MomentAccumulator::default(); dim * dim],
        }
    }

    pub fn push(&mut self, psi: &[Complex64]) {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let n = self.dim;
        for i in 0..n {
            for j in 0..n {
                let v = psi[i] * psi[j].conj() / norm;
                self.re[i * n + j].push(v.re);
                self.im[i * n + j].push(v.im);
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            a.merge(b);
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.re.first().map_or(0, |a| a.count())
    }

    pub fn estimate(&self, basis: &str) -> DensityEstimate {
        DensityEstimate {
            mean: DensityMatrix {
                dim: self.dim,
                entries: self.re.iter().zip(&self.im).map(|(r, i)| Complex64::new(r.mean(), i.mean())).collect(),
                basis: basis.to_string(),
            },
            stderr_re: self.re.iter().map(|a| a.stderr()).collect(),
            stderr_im: self.im.iter().map(|a| a.stderr()).collect(),
            n: self.count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub mean: DensityMatrix,
    pub stderr_re: Vec<f64>,
    pub stderr_im: Vec<f64>,
    pub n: u64,
}

impl DensityEstimate {
    /// Largest element-wise `|Δ|/stderr` over real and imaginary parts
    /// (differences below rounding count as zero).
    pub fn max_z(&self, target: &DensityMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, (m, t)) in self.mean.entries.iter().zip(&target.entries).enumerate() {
            for (d, se) in [((m.re - t.re).abs(), self.stderr_re[k]), ((m.im - t.im).abs(), self.stderr_im[k])] {
                let z = if d <= crate::stats::ROUNDING_SLACK {
                    0.0
                } else if se > 0.0 {
                    d / se
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
        }
        worst
    }

    /// Largest `|Δ|/sqrt(se₁² + se₂²)` between two independent estimates.
    pub fn max_z_between(&self, other: &DensityEstimate) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.mean.entries.len() {
            let (a, b) = (self.mean.entries[k], other.mean.entries[k]);
            let sr = (self.stderr_re[k].powi(2) + other.stderr_re[k].powi(2)).sqrt();
            let si = (self.stderr_im[k].powi(2) + other.stderr_im[k].powi(2)).sqrt();
            for (d, se) in [((a.re - b.re).abs(), sr), ((a.im - b.im).abs(), si)] {
                if d > crate::stats::ROUNDING_SLACK {
                    worst = worst.max(if se > 0.0 { d / se } else { f64::INFINITY });
                }
            }
        }
        worst
    }
}
