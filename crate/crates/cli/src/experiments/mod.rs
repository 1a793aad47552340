//! The registered experiments. Each one reads its parameters from the
//! `[model]` table, checks every model precondition up front, and produces
//! the same four artefacts.

use serde_json::{Map, Value as Json};

use crate::config::{Params, Violation};
use crate::output::{Invariant, Table};

mod csl;
mod discrete;
mod gamblers;
mod hidden;
mod sl;

/// Run-level settings shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub n_trajectories: u64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub moments: Table,
    pub outcomes: Table,
    pub invariants: Vec<Invariant>,
    pub measured: Map<String, Json>,
    pub completed: u64,
    pub aborted: u64,
}

pub trait Experiment: Send + Sync {
    /// Recording stride in effect, when the experiment has a time grid.
    fn record_stride(&self) -> Option<usize> {
        None
    }

    fn execute(&self, settings: &RunSettings) -> collapse_core::Result<Outputs>;
}

type Prepare = fn(&mut Params, Option<usize>) -> Option<Box<dyn Experiment>>;

pub struct ExperimentDef {
    pub name: &'static str,
    pub summary: &'static str,
    pub default_trajectories: u64,
    pub prepare: Prepare,
}

pub const EXPERIMENTS: &[ExperimentDef] = &[
    ExperimentDef {
        name: "born-frequencies",
        summary: "N-state amplitude SDE: outcome frequencies, martingale and cross-moment decay",
        default_trajectories: 10_000,
        prepare: discrete::prepare_born,
    },
    ExperimentDef {
        name: "random-phase",
        summary: "N-state random-phase equation: martingale and simplex preservation",
        default_trajectories: 10_000,
        prepare: discrete::prepare_random_phase,
    },
    ExperimentDef {
        name: "fp-oracle",
        summary: "two-state SDE ensemble against the Fokker-Planck finite-volume solution",
        default_trajectories: 10_000,
        prepare: discrete::prepare_fp_oracle,
    },
    ExperimentDef {
        name: "gamblers-ruin",
        summary: "fair-coin wealth exchange: win frequencies, exact win probability, martingale",
        default_trajectories: 10_000,
        prepare: gamblers::prepare,
    },
    ExperimentDef {
        name: "sl-hits",
        summary: "spontaneous-localization hits: branch selection, energy gain, entangled collapse rate",
        default_trajectories: 10_000,
        prepare: sl::prepare,
    },
    ExperimentDef {
        name: "csl-commuting",
        summary: "continuous localization with a commuting collapse operator: density-matrix decay, martingale",
        default_trajectories: 100_000,
        prepare: csl::prepare_commuting,
    },
    ExperimentDef {
        name: "csl-lattice",
        summary: "lattice continuous localization: trajectory ensemble against the deterministic density matrix",
        default_trajectories: 10_000,
        prepare: csl::prepare_lattice,
    },
    ExperimentDef {
        name: "csl-unitary-check",
        summary: "Gauss-Hermite reconstruction of the step weight as an average of unitaries",
        default_trajectories: 0,
        prepare: csl::prepare_unitary,
    },
    ExperimentDef {
        name: "hidden-variables",
        summary: "hemisphere hidden-variable spin model: quadrature against Monte Carlo",
        default_trajectories: 20_000,
        prepare: hidden::prepare,
    },
];

pub fn find(name: &str) -> Option<&'static ExperimentDef> {
    EXPERIMENTS.iter().find(|e| e.name == name)
}

/// Pushes a core precondition failure into the violation list.
pub(crate) fn check(p: &mut Params, r: collapse_core::Result<()>) -> bool {
    match r {
        Ok(()) => true,
        Err(e) => {
            p.violate(e.into());
            false
        }
    }
}

/// `t_final / dt` as a whole step count.
pub(crate) fn step_count(p: &mut Params, dt: f64, t_final: f64) -> Option<usize> {
    if !(dt > 0.0 && dt.is_finite() && t_final > 0.0 && t_final.is_finite()) {
        p.violate(Violation::new("invalid-parameter", "dt and t_final must be positive and finite"));
        return None;
    }
    let steps = t_final / dt;
    let n = steps.round();
    if (steps - n).abs() > 1e-6 * steps.max(1.0) || n < 1.0 {
        p.violate(Violation::new("invalid-parameter", format!("t_final = {t_final} is not a whole number of steps of dt = {dt}")));
        return None;
    }
    Some(n as usize)
}

/// The requested stride, or the largest divisor of `n_steps` giving at
/// least `target` records.
pub(crate) fn stride_for(p: &mut Params, requested: Option<usize>, n_steps: usize, target: usize) -> Option<usize> {
    match requested {
        Some(s) if s == 0 || n_steps % s != 0 => {
            p.violate(Violation::new("record-stride", format!("record_stride = {s} must be >= 1 and divide n_steps = {n_steps}")));
            None
        }
        Some(s) => Some(s),
        None => {
            let mut s = (n_steps / target).max(1);
            while n_steps % s != 0 {
                s -= 1;
            }
            Some(s)
        }
    }
}

/// Rejects anything but a probability vector.
pub(crate) fn check_simplex(p: &mut Params, key: &str, x: &[f64]) -> bool {
    let sum: f64 = x.iter().sum();
    if x.is_empty() || x.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || (sum - 1.0).abs() > 1e-9 {
        p.violate(Violation::new("invalid-parameter", format!("model.{key} must be non-negative and sum to 1 (sum {sum})")));
        return false;
    }
    true
}

pub(crate) fn outcome_table() -> Table {
    Table::new(&["trajectory", "outcome", "collapse_time", "tail_weight"])
}
