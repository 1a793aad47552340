//! Moment accumulators and per-time ensemble statistics.

/// Absolute slack added to every `k·stderr` comparison so that exactly
/// deterministic quantities (stderr = 0) compare up to rounding.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl MomentAccumulator {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.sum / n;
        ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean(),
            stderr: self.stderr(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(mean: f64, stderr: f64) -> Self {
        Self { mean, stderr }
    }

    /// Binomial proportion `successes / n` with stderr `sqrt(p(1-p)/n)`.
    pub fn proportion(successes: u64, n: u64) -> Self {
        let p = successes as f64 / n as f64;
        Self {
            mean: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }

    pub fn within(&self, target: f64, k_sigma: f64) -> bool {
        (self.mean - target).abs() <= k_sigma * self.stderr + ROUNDING_SLACK
    }

    /// Distance from `target` in units of stderr (infinite if stderr is 0
    /// and the distance exceeds rounding).
    pub fn z(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d <= ROUNDING_SLACK {
            0.0
        } else if self.stderr > 0.0 {
            d / self.stderr
        } else {
            f64::INFINITY
        }
    }
}

/// Per-time accumulators over an ensemble of trajectories whose state is a
/// point `x` on (or near) the probability simplex.
///
/// Trajectories must be pushed in stream order for bitwise-reproducible sums.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    times: Vec<f64>,
    dim: usize,
    n_bins: usize,
    means: Vec<MomentAccumulator>,
    cross: Vec<MomentAccumulator>,
    spread: Vec<MomentAccumulator>,
    histograms: Vec<u64>,
    n_trajectories: u64,
    max_simplex_deviation: f64,
    samples: Option<Vec<Vec<f64>>>,
}

impl EnsembleStats {
    pub fn new(times: Vec<f64>, dim: usize, n_bins: usize, keep_samples: bool) -> Self {
        let nt = times.len();
        let npairs = dim * (dim + 1) / 2;
        Self {
            dim,
            n_bins: n_bins.max(1),
            means: vec![MomentAccumulator::default(); nt * dim],
            cross: vec![MomentAccumulator::default(); nt * npairs],
            spread: vec![MomentAccumulator::default(); nt * dim],
            histograms: vec![0; nt * dim * n_bins.max(1)],
            n_trajectories: 0,
            max_simplex_deviation: 0.0,
            samples: keep_samples.then(|| vec![Vec::new(); nt]),
            times,
        }
    }

    /// `samples` holds the state at each recorded time, time-major:
    /// `samples[t * dim + n]`.
    pub fn push_trajectory(&mut self, samples: &[f64]) {
        let d = self.dim;
        assert_eq!(samples.len(), self.times.len() * d, "sample block has wrong length");
        let npairs = d * (d + 1) / 2;
        for (t, x) in samples.chunks(d).enumerate() {
            let total: f64 = x.iter().sum();
            self.max_simplex_deviation = self.max_simplex_deviation.max((total - 1.0).abs());
            for n in 0..d {
                self.means[t * d + n].push(x[n]);
                self.spread[t * d + n].push(x[n] * (1.0 - x[n]));
                let bin = ((x[n] * self.n_bins as f64).floor().max(0.0) as usize).min(self.n_bins - 1);
                self.histograms[(t * d + n) * self.n_bins + bin] += 1;
            }
            let mut p = 0;
            for n in 0..d {
                for m in n..d {
                    self.cross[t * npairs + p].push(x[n] * x[m]);
                    p += 1;
                }
            }
            if let Some(s) = self.samples.as_mut() {
                s[t].extend_from_slice(x);
            }
        }
        self.n_trajectories += 1;
    }

    /// Appends `other` after the trajectories already held.
    pub fn merge(&mut self, other: &EnsembleStats) {
        assert_eq!(self.times, other.times);
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.n_bins, other.n_bins);
        for (a, b) in self.means.iter_mut().zip(&other.means) {
            a.merge(b);
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            a.merge(b);
        }
        for (a, b) in self.spread.iter_mut().zip(&other.spread) {
            a.merge(b);
        }
        for (a, b) in self.histograms.iter_mut().zip(&other.histograms) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (self.samples.as_mut(), other.samples.as_ref()) {
            for (sa, sb) in a.iter_mut().zip(b) {
                sa.extend_from_slice(sb);
            }
        }
        self.n_trajectories += other.n_trajectories;
        self.max_simplex_deviation = self.max_simplex_deviation.max(other.max_simplex_deviation);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_trajectories(&self) -> u64 {
        self.n_trajectories
    }

    pub fn max_simplex_deviation(&self) -> f64 {
        self.max_simplex_deviation
    }

    pub fn mean(&self, t: usize, n: usize) -> Estimate {
        self.means[t * self.dim + n].estimate()
    }

    /// `E[x_n x_m]` at time index `t`.
    pub fn cross(&self, t: usize, n: usize, m: usize) -> Estimate {
        let npairs = self.dim * (self.dim + 1) / 2;
        let (a, b) = if n <= m { (n, m) } else { (m, n) };
        let idx = (0..a).map(|r| self.dim - r).sum::<usize>() + (b - a);
        self.cross[t * npairs + idx].estimate()
    }

    /// `E[x_n (1 - x_n)]` at time index `t`.
    pub fn spread(&self, t: usize, n: usize) -> Estimate {
        self.spread[t * self.dim + n].estimate()
    }

    /// Histogram of `x_n` over `[0, 1]` normalized to probability mass.
    pub fn histogram(&self, t: usize, n: usize) -> Vec<f64> {
        let start = (t * self.dim + n) * self.n_bins;
        let total = self.n_trajectories.max(1) as f64;
        self.histograms[start..start + self.n_bins]
            .iter()
            .map(|&c| c as f64 / total)
            .collect()
    }

    /// Raw samples at time index `t` (trajectory-major, `dim` per trajectory),
    /// when the stats were built with `keep_samples`.
    pub fn samples_at(&self, t: usize) -> Option<&[f64]> {
        self.samples.as_ref().map(|s| s[t].as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_matches_direct_formulas() {
        let data = [0.1, 0.4, 0.35, 0.9, 0.2];
        let mut acc = MomentAccumulator::default();
        data.iter().for_each(|&v| acc.push(v));
        let mean = data.iter().sum::<f64>() / 5.0;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((acc.mean() - mean).abs() < 1e-15);
        assert!((acc.variance() - var).abs() < 1e-15);
        assert!((acc.stderr() - (var / 5.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cross_moment_indexing() {
        let mut s = EnsembleStats::new(vec![0.0], 3, 4, false);
        s.push_trajectory(&[0.2, 0.3, 0.5]);
        assert!((s.cross(0, 0, 0).mean - 0.04).abs() < 1e-15);
        assert!((s.cross(0, 0, 2).mean - 0.1).abs() < 1e-15);
        assert!((s.cross(0, 2, 1).mean - 0.15).abs() < 1e-15);
        assert!((s.cross(0, 2, 2).mean - 0.25).abs() < 1e-15);
        assert!((s.cross(0, 1, 1).mean - 0.09).abs() < 1e-15);
        assert_eq!(s.histogram(0, 2), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn merge_equals_sequential_push() {
        let mut a = EnsembleStats::new(vec![0.0, 1.0], 2, 5, true);
        let mut b = a.clone();
        let mut whole = a.clone();
        let rows = [[0.3, 0.7, 0.1, 0.9], [0.5, 0.5, 0.8, 0.2], [0.0, 1.0, 0.0, 1.0]];
        a.push_trajectory(&rows[0]);
        b.push_trajectory(&rows[1]);
        b.push_trajectory(&rows[2]);
        rows.iter().for_each(|r| whole.push_trajectory(r));
        a.merge(&b);
        assert_eq!(a.mean(1, 0), whole.mean(1, 0));
        assert_eq!(a.cross(1, 0, 1), whole.cross(1, 0, 1));
        assert_eq!(a.samples_at(1), whole.samples_at(1));
        assert_eq!(a.n_trajectories(), 3);
    }
}
