use crate::stats::{EnsembleStats, Estimate};

/// Largest departure of `E[x_n(t)]` from its initial value over the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleDrift {
    pub state: usize,
    pub time: f64,
    /// `E[x_n(t)] − x_n(0)` at the worst time, with its standard error.
    pub drift: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoment {
    pub n: usize,
    pub m: usize,
    pub value: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub simplex_ok: bool,
    pub max_simplex_deviation: f64,
    pub martingale_drift: Vec<MartingaleDrift>,
    pub cross_moment_final: Vec<PairMoment>,
}

impl CollapseReport {
    pub fn martingale_ok(&self, k_sigma: f64) -> bool {
        self.martingale_drift.iter().all(|d| d.drift.within(0.0, k_sigma))
    }

    pub fn cross_moments_vanish(&self, k_sigma: f64) -> bool {
        self.cross_moment_final.iter().all(|p| p.value.within(0.0, k_sigma))
    }

    pub fn worst_martingale_z(&self) -> f64 {
        self.martingale_drift.iter().map(|d| d.drift.z(0.0).abs()).fold(0.0, f64::max)
    }
}

pub const SIMPLEX_CHECK_TOLERANCE: f64 = 1e-6;

/// Diagnoses simplex preservation, the martingale property and the decay of
/// off-diagonal products from ensemble statistics. The initial value of each
/// `x_n` is read from the first time sample, so all trajectories are assumed
/// to share their starting point.
pub fn check_collapse_conditions(stats: &EnsembleStats) -> CollapseReport {
    let d = stats.dim();
    let nt = stats.times().len();
    let mut martingale_drift = Vec::with_capacity(d);
    for n in 0..d {
        let x0 = stats.mean(0, n).mean;
        let mut worst = MartingaleDrift {
            state: n,
            time: 0.0,
            drift: Estimate::new(0.0, 0.0),
        };
        for t in 1..nt {
            let e = stats.mean(t, n);
            let drift = Estimate::new(e.mean - x0, e.stderr);
            if drift.mean.abs() > worst.drift.mean.abs() {
                worst = MartingaleDrift {
                    state: n,
                    time: stats.times()[t],
                    drift,
                };
            }
        }
        martingale_drift.push(worst);
    }
    let mut cross_moment_final = Vec::new();
    if nt > 0 {
        for n in 0..d {
            for m in n + 1..d {
                cross_moment_final.push(PairMoment {
                    n,
                    m,
                    value: stats.cross(nt - 1, n, m),
                });
            }
        }
    }
    CollapseReport {
        simplex_ok: stats.max_simplex_deviation() < SIMPLEX_CHECK_TOLERANCE,
        max_simplex_deviation: stats.max_simplex_deviation(),
        martingale_drift,
        cross_moment_final,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{run_collapse_ensemble, CollapseConfig, CollapseModel, EnsembleOptions};

    #[test]
    fn no_coupling_is_exact() {
        let cfg = CollapseConfig::two_state(0.0, 1.0, 0.01, 100);
        let opts = EnsembleOptions {
            n_trajectories: 50,
            master_seed: 3,
            record_stride: 10,
            n_bins: 20,
            keep_samples: false,
        };
        let ens = run_collapse_ensemble(CollapseModel::RandomPhase, &cfg, &[0.4, 0.6], &opts).unwrap();
        let r = check_collapse_conditions(&ens.stats);
        assert!(r.simplex_ok);
        assert!(r.martingale_drift.iter().all(|d| d.drift.mean.abs() < 1e-15));
        let c = r.cross_moment_final[0].value;
        assert!((c.mean - 0.24).abs() < 1e-15 && c.stderr < 1e-7);
    }
}
