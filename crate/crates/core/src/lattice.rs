//! Uniform periodic 1-D grids and the spectral helpers shared by the
//! localization models.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};

/// `n` nodes `x_i = −L/2 + i h` on a periodic box of extent `L`, `h = L/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1 {
    pub n: usize,
    pub extent: f64,
}

impl Grid1 {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "a grid needs at least two nodes"));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(invalid("extent", "must be positive"));
        }
        Ok(Self { n, extent })
    }

    pub fn h(&self) -> f64 {
        self.extent / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -0.5 * self.extent + i as f64 * self.h()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Signed periodic displacement `x − z` folded into `[−L/2, L/2)`.
    pub fn displacement(&self, x: f64, z: f64) -> f64 {
        let l = self.extent;
        let d = (x - z + 0.5 * l).rem_euclid(l) - 0.5 * l;
        if d >= 0.5 * l {
            d - l
        } else {
            d
        }
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n as i64;
        let dk = std::f64::consts::TAU / self.extent;
        (0..n).map(|j| if j <= (n - 1) / 2 { j } else { j - n } as f64 * dk).collect()
    }

    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI / self.h()
    }

    /// Index of the node nearest `z` (periodic).
    pub fn nearest(&self, z: f64) -> usize {
        let i = ((z + 0.5 * self.extent) / self.h()).round() as i64;
        i.rem_euclid(self.n as i64) as usize
    }
}

/// Forward (`inverse = false`) or unnormalized inverse DFT along each row of
/// length `len` in `data`.
pub fn fft_rows(data: &mut [Complex64], len: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
    fft.process(data);
}

/// Same along columns of a row-major `len × len` array.
pub fn fft_cols(data: &mut [Complex64], len: usize, inverse: bool) {
    let mut col = vec![Complex64::default(); len];
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
    for j in 0..len {
        for i in 0..len {
            col[i] = data[i * len + j];
        }
        fft.process(&mut col);
        for i in 0..len {
            data[i * len + j] = col[i];
        }
    }
}

/// Periodic convolution `out_j = Σ_i a_i b_{(j − i) mod n}`.
pub fn circular_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    assert_eq!(n, b.len());
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_rows(&mut fa, n, false);
    fft_rows(&mut fb, n, false);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fft_rows(&mut fa, n, true);
    fa.iter().map(|z| z.re / n as f64).collect()
}

/// Kernel `g(d_j)` sampled at periodic displacements `d_j = x_j − x_0`
/// measured from node 0, ready for [`circular_convolve`].
pub fn periodic_kernel<F: Fn(f64) -> f64>(grid: &Grid1, g: F) -> Vec<f64> {
    (0..grid.n).map(|j| g(grid.displacement(grid.x(j), grid.x(0)))).collect()
}
