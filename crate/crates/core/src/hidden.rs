//! The two-state hemisphere hidden-variable model.
//!
//! A state along `n̂` occupies a point `r̂` of the hemisphere `r̂·n̂ ≥ 0` with
//! density `(n̂·r̂)/π`; a measurement along `m̂` yields up iff `r̂·m̂ ≥ 0`.

use std::f64::consts::PI;

use rand::Rng;

use crate::ensemble::fold_ordered;
use crate::error::{invalid, Result};
use crate::rng::RngStreamPolicy;
use crate::stats::Estimate;

pub const UNIT_TOLERANCE: f64 = 1e-12;
pub const MIN_POLAR_NODES: usize = 200;
pub const MIN_AZIMUTH_NODES: usize = 400;
pub const DEFAULT_RESOLUTION: (usize, usize) = (1000, 2000);

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinDirection([f64; 3]);

impl SpinDirection {
    pub fn new(v: [f64; 3]) -> Result<Self> {
        let norm = dot(&v, &v).sqrt();
        if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(invalid("direction", format!("not a unit vector (norm {norm})")));
        }
        Ok(Self(v))
    }

    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()])
    }

    pub fn vector(&self) -> [f64; 3] {
        self.0
    }

    pub fn flipped(&self) -> Self {
        Self(self.0.map(|c| -c))
    }

    pub fn angle_to(&self, other: &SpinDirection) -> f64 {
        dot(&self.0, &other.0).clamp(-1.0, 1.0).acos()
    }

    /// Two unit vectors completing a right-handed frame with `self` as pole.
    fn frame(&self) -> ([f64; 3], [f64; 3]) {
        let n = &self.0;
        let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let mut e1 = cross(&helper, n);
        let len = dot(&e1, &e1).sqrt();
        e1 = e1.map(|c| c / len);
        let e2 = cross(n, &e1);
        (e1, e2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenPoint {
    pub r: [f64; 3],
    /// Azimuth about the generating direction, in `[0, 2π)`.
    pub azimuth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Up,
    Down,
}

/// Cosine-weighted hemisphere point: `cos θ = √u`, `φ = 2πv`.
pub fn sample_hidden_with<R: Rng + ?Sized>(n: &SpinDirection, rng: &mut R) -> HiddenPoint {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let cos_t = u.sqrt();
    let sin_t = (1.0 - u).sqrt();
    let phi = 2.0 * PI * v;
    let (e1, e2) = n.frame();
    let (a, b) = (sin_t * phi.cos(), sin_t * phi.sin());
    let mut r = [0.0; 3];
    for i in 0..3 {
        r[i] = a * e1[i] + b * e2[i] + cos_t * n.0[i];
    }
    HiddenPoint { r, azimuth: phi }
}

pub fn sample_hidden(n: &SpinDirection, policy: &RngStreamPolicy) -> HiddenPoint {
    sample_hidden_with(n, &mut policy.rng())
}

/// Ties `r̂·m̂ = 0` count as up.
pub fn measure(r: &HiddenPoint, m: &SpinDirection) -> Outcome {
    if dot(&r.r, &m.0) >= 0.0 {
        Outcome::Up
    } else {
        Outcome::Down
    }
}

/// Midpoint quadrature of `(n̂·r̂)/π` over the nodes of `n̂`'s hemisphere
/// that satisfy `r̂·m̂ ≥ 0`, divided by the quadrature of the whole
/// hemisphere so that complementary axes sum to one up to rounding.
pub fn outcome_probability_quadrature(n: &SpinDirection, m: &SpinDirection, resolution: (usize, usize)) -> Result<f64> {
    let (np, na) = resolution;
    if np < MIN_POLAR_NODES || na < MIN_AZIMUTH_NODES {
        return Err(invalid(
            "resolution",
            format!("need at least {MIN_POLAR_NODES} polar × {MIN_AZIMUTH_NODES} azimuthal nodes, got {np} × {na}"),
        ));
    }
    // Frame with n̂ as pole and m̂ = (sin θ, 0, cos θ).
    let theta = n.angle_to(m);
    let (st, ct) = (theta.sin(), theta.cos());
    let dth = 0.5 * PI / np as f64;
    let dphi = 2.0 * PI / na as f64;
    let cos_phi: Vec<f64> = (0..na).map(|k| ((k as f64 + 0.5) * dphi).cos()).collect();
    let (mut up, mut total) = (0.0, 0.0);
    for i in 0..np {
        let t = (i as f64 + 0.5) * dth;
        let (s, c) = t.sin_cos();
        let w = c * s / PI * dth * dphi;
        let hits = cos_phi.iter().filter(|&&cp| st * s * cp + ct * c >= 0.0).count();
        up += w * hits as f64;
        total += w * na as f64;
    }
    Ok(up / total)
}

/// Up frequency over `n_samples` hidden points; sample `i` uses stream
/// `(seed, i)`.
pub fn outcome_frequency_mc(n: &SpinDirection, m: &SpinDirection, n_samples: u64, seed: u64) -> Estimate {
    let ups = fold_ordered(
        n_samples,
        0u64,
        |i| measure(&sample_hidden(n, &RngStreamPolicy::new(seed, i)), m) == Outcome::Up,
        |acc, _, up| *acc += up as u64,
    );
    Estimate::proportion(ups, n_samples)
}

/// One-sample Kolmogorov–Smirnov test against `U(0, 1)`: statistic and
/// asymptotic p-value.
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let lam = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p = if lam < 1e-3 {
        1.0
    } else {
        (1..=100)
            .map(|k| {
                let k = k as f64;
                2.0 * (if k as u64 % 2 == 1 { 1.0 } else { -1.0 }) * (-2.0 * k * k * lam * lam).exp()
            })
            .sum::<f64>()
            .clamp(0.0, 1.0)
    };
    (d, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_unit_direction_rejected() {
        assert!(SpinDirection::new([1.0, 1.0, 0.0]).is_err());
        assert!(SpinDirection::new([0.0, 0.6, 0.8]).is_ok());
    }

    #[test]
    fn resolution_floor() {
        let n = SpinDirection::from_angles(0.0, 0.0);
        assert!(outcome_probability_quadrature(&n, &n, (199, 400)).is_err());
        assert!(outcome_probability_quadrature(&n, &n, (200, 399)).is_err());
        assert!((outcome_probability_quadrature(&n, &n, (200, 400)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ks_detects_non_uniform() {
        let good: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&good).1 > 0.99);
        let bad: Vec<f64> = good.iter().map(|x| x * x).collect();
        assert!(ks_uniform(&bad).1 < 1e-6);
    }
}
