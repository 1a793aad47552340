use collapse_core::discrete::{
    check_collapse_conditions, compare_sde_to_fp, fp_solve_two_state, run_collapse_ensemble, AmplitudeState, CollapseConfig, CollapseEnsemble,
    CollapseModel, EnsembleOptions, FpTwoState, SIMPLEX_CHECK_TOLERANCE,
};
use collapse_core::EnsembleStats;
use serde_json::json;

use super::{check, check_simplex, outcome_table, step_count, stride_for, Experiment, Outputs, RunSettings};
use crate::config::{Params, Violation};
use crate::output::{Cell, Invariant, Table};

const K_SIGMA: f64 = 5.0;

struct Ensemble {
    model: CollapseModel,
    config: CollapseConfig,
    x0: Vec<f64>,
    stride: usize,
    n_bins: usize,
    born: bool,
}

/// Reads the shared N-state parameters.
fn read_ensemble(p: &mut Params, stride: Option<usize>, x0_default: &[f64], dt_default: f64, t_default: f64) -> Option<(CollapseConfig, Vec<f64>, usize)> {
    let x0 = p.vec("x0", x0_default);
    let coupling = p.f64("coupling", 1.0);
    let sigma = p.f64("sigma", 1.0);
    let energies = p.vec("energies", &vec![0.0; x0.len()]);
    let dt = p.f64("dt", dt_default);
    let t_final = p.f64("t_final", t_default);
    let simplex = check_simplex(p, "x0", &x0);
    let n_steps = step_count(p, dt, t_final)?;
    let stride = stride_for(p, stride, n_steps, 20)?;
    if energies.len() != x0.len() {
        p.violate(Violation::new("invalid-parameter", "model.energies must have one entry per state"));
        return None;
    }
    let mut config = CollapseConfig::uniform(x0.len(), coupling, sigma, dt, n_steps);
    config.omega = energies;
    if !simplex || !check(p, config.validate()) {
        return None;
    }
    Some((config, x0, stride))
}

pub fn prepare_born(p: &mut Params, stride: Option<usize>) -> Option<Box<dyn Experiment>> {
    let n_bins = p.usize("n_bins", 20);
    let (config, x0, stride) = read_ensemble(p, stride, &[0.3, 0.7], 2e-3, 5.0)?;
    Some(Box::new(Ensemble {
        model: CollapseModel::AmplitudeSde,
        config,
        x0,
        stride,
        n_bins,
        born: true,
    }))
}

pub fn prepare_random_phase(p: &mut Params, stride: Option<usize>) -> Option<Box<dyn Experiment>> {
    let n_bins = p.usize("n_bins", 20);
    let r = p.usize("r_exponent", 1);
    let (mut config, x0, stride) = read_ensemble(p, stride, &[0.5, 0.5], 5e-3, 5.0)?;
    config.r_exponent = r as u32;
    if !check(p, config.validate()) {
        return None;
    }
    Some(Box::new(Ensemble {
        model: CollapseModel::RandomPhase,
        config,
        x0,
        stride,
        n_bins,
        born: false,
    }))
}

fn run(model: CollapseModel, config: &CollapseConfig, x0: &[f64], stride: usize, n_bins: usize, s: &RunSettings) -> collapse_core::Result<CollapseEnsemble> {
    AmplitudeState::from_probabilities(x0, &vec![0.0; x0.len()])?;
    run_collapse_ensemble(
        model,
        config,
        x0,
        &EnsembleOptions {
            n_trajectories: s.n_trajectories,
            master_seed: s.master_seed,
            record_stride: stride,
            n_bins,
            keep_samples: false,
        },
    )
}

fn moments_table(stats: &EnsembleStats, extra: &[(&str, &dyn Fn(usize, f64) -> f64)]) -> Table {
    let d = stats.dim();
    let mut header = vec!["time".to_string()];
    for n in 0..d {
        header.push(format!("mean_x{n}"));
        header.push(format!("stderr_x{n}"));
    }
    for n in 0..d {
        for m in n + 1..d {
            header.push(format!("cross_x{n}x{m}"));
            header.push(format!("stderr_cross_x{n}x{m}"));
        }
    }
    header.extend(extra.iter().map(|(h, _)| h.to_string()));
    let mut t = Table::new(&header);
    for (k, &time) in stats.times().iter().enumerate() {
        let mut row = vec![Cell::F(time)];
        for n in 0..d {
            let e = stats.mean(k, n);
            row.extend([Cell::F(e.mean), Cell::F(e.stderr)]);
        }
        for n in 0..d {
            for m in n + 1..d {
                let e = stats.cross(k, n, m);
                row.extend([Cell::F(e.mean), Cell::F(e.stderr)]);
            }
        }
        row.extend(extra.iter().map(|(_, f)| Cell::F(f(k, time))));
        t.push(row);
    }
    t
}

fn outcomes(ens: &CollapseEnsemble) -> Table {
    let mut t = outcome_table();
    for (i, o) in ens.outcomes.iter().enumerate() {
        t.push(match o {
            None => vec![i.into(), Cell::S("aborted".into()), Cell::Empty, Cell::Empty],
            Some(o) => vec![i.into(), o.outcome_index().into(), o.collapse_time().into(), o.tail_weight().into()],
        });
    }
    t
}

fn condition_invariants(ens: &CollapseEnsemble) -> Vec<Invariant> {
    let report = check_collapse_conditions(&ens.stats);
    vec![
        Invariant::new(
            "martingale",
            report.martingale_ok(K_SIGMA),
            report.worst_martingale_z(),
            Some(0.0),
            format!("every |E[x_n(t)] - x_n(0)| within {K_SIGMA} stderr"),
        ),
        Invariant::new("simplex", report.simplex_ok, report.max_simplex_deviation, Some(0.0), format!("<= {SIMPLEX_CHECK_TOLERANCE:e}")),
    ]
}

impl Ensemble {
    /// `E[x_0 x_1](t) = x_0 x_1 e^{-2σ²α²t}` for two states.
    fn cross_theory(&self, t: f64) -> f64 {
        let a = self.config.alpha(0, 1).norm();
        self.x0[0] * self.x0[1] * (-2.0 * self.config.sigma.powi(2) * a * a * t).exp()
    }
}

impl Experiment for Ensemble {
    fn record_stride(&self) -> Option<usize> {
        Some(self.stride)
    }

    fn execute(&self, s: &RunSettings) -> collapse_core::Result<Outputs> {
        let ens = run(self.model, &self.config, &self.x0, self.stride, self.n_bins, s)?;
        let mut out = Outputs {
            outcomes: outcomes(&ens),
            completed: s.n_trajectories - ens.aborted,
            aborted: ens.aborted,
            ..Default::default()
        };
        let two_state = self.born && self.x0.len() == 2 && self.config.omega.iter().all(|&w| w == 0.0);
        let theory = |_: usize, t: f64| self.cross_theory(t);
        out.moments = if two_state {
            moments_table(&ens.stats, &[("cross_theory", &theory)])
        } else {
            moments_table(&ens.stats, &[])
        };
        if self.born {
            for (n, &x) in self.x0.iter().enumerate() {
                let f = ens.outcome_frequency(n);
                out.measured.insert(format!("frequency_{n}"), json!({"mean": f.mean, "stderr": f.stderr}));
                out.invariants.push(Invariant::within(format!("born-frequency-{n}"), f, x, K_SIGMA));
            }
            out.measured.insert("uncollapsed".into(), json!(ens.uncollapsed()));
        }
        out.invariants.extend(condition_invariants(&ens));
        if two_state {
            // beyond 2/α the few surviving superpositions make the sample stderr meaningless
            let horizon = 2.0 / (self.config.sigma.powi(2) * self.config.alpha(0, 1).norm_sqr());
            let times = ens.stats.times();
            let worst = (0..times.len())
                .filter(|&k| times[k] <= horizon + 1e-12)
                .map(|k| ens.stats.cross(k, 0, 1).z(self.cross_theory(times[k])).abs())
                .fold(0.0, f64::max);
            out.invariants.push(Invariant::new(
                "cross-moment-decay",
                worst < K_SIGMA,
                worst,
                Some(0.0),
                format!("worst |z| against x0 x1 exp(-2 sigma^2 alpha^2 t) for t <= 2/(sigma^2 alpha^2) below {K_SIGMA}"),
            ));
        }
        out.measured.insert("max_renormalization".into(), json!(ens.max_renormalization));
        Ok(out)
    }
}

struct FpOracle {
    config: CollapseConfig,
    x0: f64,
    stride: usize,
    n_bins: usize,
    pde: FpTwoState,
    rate: f64,
}

pub fn prepare_fp_oracle(p: &mut Params, stride: Option<usize>) -> Option<Box<dyn Experiment>> {
    let x0 = p.f64("x0", 0.3);
    let coupling = p.f64("coupling", 1.0);
    let sigma = p.f64("sigma", 1.0);
    let cells = p.usize("cells", 400);
    let dt = p.f64("dt", 1e-3);
    let t_final = p.f64("t_final", 2.0);
    let n_bins = p.usize("n_bins", 20);
    let rate = sigma * sigma * coupling * coupling;
    let probe = match FpTwoState::collapse(cells, rate, x0, 1.0) {
        Ok(probe) => probe,
        Err(e) => {
            p.violate(e.into());
            return None;
        }
    };
    let dt_pde = p.f64("dt_pde", 0.9 * probe.stability_bound());
    let pde = FpTwoState { dt_pde, ..probe };
    let n_steps = step_count(p, dt, t_final)?;
    let stride = stride_for(p, stride, n_steps, 8)?;
    let config = CollapseConfig::two_state(coupling, sigma, dt, n_steps);
    let ok = check(p, pde.validate()) & check(p, config.validate());
    if !(0.0..=1.0).contains(&x0) {
        p.violate(Violation::new("invalid-parameter", "model.x0 must lie in [0, 1]"));
        return None;
    }
    ok.then(|| {
        Box::new(FpOracle {
            config,
            x0,
            stride,
            n_bins,
            pde,
            rate,
        }) as Box<dyn Experiment>
    })
}

/// Relative error allowed on the finite-volume cross moment.
const PDE_RELATIVE: f64 = 0.01;

impl Experiment for FpOracle {
    fn record_stride(&self) -> Option<usize> {
        Some(self.stride)
    }

    fn execute(&self, s: &RunSettings) -> collapse_core::Result<Outputs> {
        let x0 = [self.x0, 1.0 - self.x0];
        let ens = run(CollapseModel::AmplitudeSde, &self.config, &x0, self.stride, self.n_bins, s)?;
        let times = ens.stats.times().to_vec();
        let sol = fp_solve_two_state(&self.pde, &times)?;
        let cmp = compare_sde_to_fp(&ens.stats, &sol)?;
        let theory = |t: f64| x0[0] * x0[1] * (-2.0 * self.rate * t).exp();

        let mut moments = Table::new(&[
            "time",
            "sde_cross",
            "sde_cross_stderr",
            "pde_cross",
            "theory_cross",
            "sde_mean_x0",
            "sde_mean_x0_stderr",
            "pde_total_mass",
            "histogram_l1",
            "histogram_tolerance",
        ]);
        let (mut pde_worst, mut sde_worst, mut l1_worst) = (0.0f64, 0.0f64, 0.0f64);
        for (k, &t) in times.iter().enumerate() {
            let c = ens.stats.cross(k, 0, 1);
            let m = ens.stats.mean(k, 0);
            let th = theory(t);
            if self.rate == 0.0 || t <= 2.0 / self.rate + 1e-12 {
                pde_worst = pde_worst.max((sol.spread[k] - th).abs() / th);
            }
            if self.rate == 0.0 || t <= 2.0 / self.rate + 1e-12 {
                sde_worst = sde_worst.max(c.z(th).abs());
            }
            // at t = 0 both sides are point masses and only the binning convention differs
            if t > 0.0 {
                l1_worst = l1_worst.max(cmp[k].l1 / cmp[k].tolerance());
            }
            moments.push(vec![
                t.into(),
                c.mean.into(),
                c.stderr.into(),
                sol.spread[k].into(),
                th.into(),
                m.mean.into(),
                m.stderr.into(),
                sol.total_mass[k].into(),
                cmp[k].l1.into(),
                cmp[k].tolerance().into(),
            ]);
        }
        let mut out = Outputs {
            moments,
            outcomes: outcomes(&ens),
            completed: s.n_trajectories - ens.aborted,
            aborted: ens.aborted,
            ..Default::default()
        };
        out.invariants.push(Invariant::new(
            "pde-cross-moment",
            pde_worst < PDE_RELATIVE,
            pde_worst,
            Some(0.0),
            format!("relative error below {PDE_RELATIVE} for t <= 2/alpha"),
        ));
        out.invariants.push(Invariant::new(
            "sde-cross-moment",
            sde_worst < K_SIGMA,
            sde_worst,
            Some(0.0),
            format!("worst |z| for t <= 2/alpha below {K_SIGMA}"),
        ));
        out.invariants.push(Invariant::new(
            "histogram-l1",
            l1_worst <= 1.0,
            l1_worst,
            None,
            "L1 distance over t > 0 within 5 binomial stderr plus binning error (ratio <= 1)",
        ));
        out.invariants.extend(condition_invariants(&ens));
        out.measured.insert("dt_pde".into(), json!(self.pde.dt_pde));
        out.measured.insert("stability_bound".into(), json!(self.pde.stability_bound()));
        Ok(out)
    }
}
