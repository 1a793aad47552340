use super::FpSolution;
use crate::error::{Error, Result};
use crate::stats::EnsembleStats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparePoint {
    pub time: f64,
    /// `Σ_b |h_b − P_b|` over histogram bins.
    pub l1: f64,
    /// `max_b |h_b − P_b|`.
    pub sup: f64,
    /// Five binomial standard errors summed over bins.
    pub mc_tolerance: f64,
    /// L¹ change in the PDE histogram between cell-overlap and nearest-node
    /// binning, a proxy for grid resolution error.
    pub discretization: f64,
}

impl ComparePoint {
    pub fn tolerance(&self) -> f64 {
        self.mc_tolerance + self.discretization
    }
}

fn overlap_histogram(masses: &[f64], n_bins: usize) -> Vec<f64> {
    let m = masses.len() - 1;
    let h = 1.0 / m as f64;
    let mut out = vec![0.0; n_bins];
    for (i, &mass) in masses.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let x = i as f64 * h;
        let lo = (x - 0.5 * h).max(0.0);
        let hi = (x + 0.5 * h).min(1.0);
        let width = hi - lo;
        let first = ((lo * n_bins as f64).floor() as usize).min(n_bins - 1);
        let last = ((hi * n_bins as f64).ceil() as usize).clamp(first + 1, n_bins);
        for (b, slot) in out.iter_mut().enumerate().take(last).skip(first) {
            let b_lo = b as f64 / n_bins as f64;
            let b_hi = (b + 1) as f64 / n_bins as f64;
            let ov = (hi.min(b_hi) - lo.max(b_lo)).max(0.0);
            *slot += mass * ov / width;
        }
    }
    out
}

fn nodal_histogram(masses: &[f64], n_bins: usize) -> Vec<f64> {
    let m = masses.len() - 1;
    let mut out = vec![0.0; n_bins];
    for (i, &mass) in masses.iter().enumerate() {
        let x = i as f64 / m as f64;
        out[((x * n_bins as f64).floor() as usize).min(n_bins - 1)] += mass;
    }
    out
}

/// Distance between the ensemble histogram of `x_1` and the PDE mass binned
/// the same way, at every shared sample time.
pub fn compare_sde_to_fp(stats: &EnsembleStats, pde: &FpSolution) -> Result<Vec<ComparePoint>> {
    let ts = stats.times();
    if ts.len() != pde.times.len() || ts.iter().zip(&pde.times).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0)) {
        return Err(Error::GridMismatch);
    }
    let nb = stats.n_bins();
    let n = stats.n_trajectories() as f64;
    let mut out = Vec::with_capacity(ts.len());
    for (k, &t) in ts.iter().enumerate() {
        let hist = stats.histogram(k, 0);
        let pde_hist = overlap_histogram(&pde.masses[k], nb);
        let nodal = nodal_histogram(&pde.masses[k], nb);
        let mut l1 = 0.0;
        let mut sup: f64 = 0.0;
        let mut mc = 0.0;
        let mut disc = 0.0;
        for b in 0..nb {
            let d = (hist[b] - pde_hist[b]).abs();
            l1 += d;
            sup = sup.max(d);
            let p = pde_hist[b].clamp(0.0, 1.0);
            mc += (p * (1.0 - p) / n).sqrt();
            disc += (pde_hist[b] - nodal[b]).abs();
        }
        out.push(ComparePoint {
            time: t,
            l1,
            sup,
            mc_tolerance: 5.0 * mc,
            discretization: disc,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_histogram_conserves_mass() {
        let masses: Vec<f64> = (0..=37).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let total: f64 = masses.iter().sum();
        let h = overlap_histogram(&masses, 20);
        assert!((h.iter().sum::<f64>() - total).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch() {
        let stats = EnsembleStats::new(vec![0.0, 1.0], 2, 20, false);
        let sol = FpSolution {
            times: vec![0.0, 0.5],
            masses: vec![vec![1.0, 0.0, 0.0]; 2],
            spread: vec![0.0; 2],
            total_mass: vec![1.0; 2],
        };
        assert_eq!(compare_sde_to_fp(&stats, &sol), Err(Error::GridMismatch));
    }
}
