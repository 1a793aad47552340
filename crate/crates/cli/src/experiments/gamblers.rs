use collapse_core::gamblers::{run_games, win_probability_exact, GameConfig, StakeRule};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::json;

use super::{check, outcome_table, Experiment, Outputs, RunSettings};
use crate::config::{Params, Violation};
use crate::output::{Cell, Invariant, Table};

const K_SIGMA: f64 = 5.0;

struct Gamblers {
    config: GameConfig,
    trace_at: Vec<u64>,
}

pub fn prepare(p: &mut Params, stride: Option<usize>) -> Option<Box<dyn Experiment>> {
    let fractions = p.vec("fractions", &[0.3, 0.7]);
    let delta = p.f64("delta", 0.01);
    let quantum = p.f64("quantum", delta);
    let rule = p.string("stake_rule", "constant", &["constant", "shrinking"]);
    let scale = p.f64("shrink_scale", 0.5);
    let power = p.f64("shrink_power", 1.0);
    let max_toss = p.usize("trace_until", 10_000) as u64;
    let stride = stride.unwrap_or(500) as u64;
    if stride == 0 {
        p.violate(Violation::new("record-stride", "record_stride must be >= 1"));
        return None;
    }
    let config = match GameConfig::new(&fractions, delta, quantum) {
        Ok(c) => c,
        Err(e) => {
            p.violate(e.into());
            return None;
        }
    };
    let config = match rule.as_str() {
        "shrinking" => config.with_rule(StakeRule::Shrinking { scale, power }),
        _ => config,
    };
    if !check(p, config.validate()) {
        return None;
    }
    let trace_at = (0..=max_toss / stride).map(|k| k * stride).collect();
    Some(Box::new(Gamblers { config, trace_at }))
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl Experiment for Gamblers {
    fn record_stride(&self) -> Option<usize> {
        self.trace_at.get(1).map(|&s| s as usize)
    }

    fn execute(&self, s: &RunSettings) -> collapse_core::Result<Outputs> {
        let ens = run_games(&self.config, s.n_trajectories, s.master_seed, &self.trace_at)?;
        let initial = self.config.fractions();
        let np = initial.len();

        let mut header = vec!["time".to_string()];
        for i in 0..np {
            header.push(format!("mean_wealth_{i}"));
            header.push(format!("stderr_wealth_{i}"));
        }
        let mut moments = Table::new(&header);
        for (k, &toss) in self.trace_at.iter().enumerate() {
            let mut row = vec![Cell::from(toss)];
            for acc in &ens.wealth_mean[k] {
                let e = acc.estimate();
                row.extend([Cell::F(e.mean), Cell::F(e.stderr)]);
            }
            moments.push(row);
        }
        let mut outcomes = outcome_table();
        for (g, (winner, tosses)) in ens.games.iter().enumerate() {
            let tail = if winner.is_some() { Cell::F(0.0) } else { Cell::Empty };
            outcomes.push(vec![g.into(), (*winner).into(), (*tosses).into(), tail]);
        }

        let mut out = Outputs {
            moments,
            outcomes,
            completed: s.n_trajectories - ens.unfinished,
            aborted: ens.unfinished,
            ..Default::default()
        };
        for (i, &x) in initial.iter().enumerate() {
            let f = ens.win_frequency(i);
            out.measured.insert(format!("win_frequency_{i}"), json!({"mean": f.mean, "stderr": f.stderr}));
            out.invariants.push(Invariant::within(format!("win-frequency-{i}"), f, x, K_SIGMA));
        }
        let z = ens.martingale_z(&initial);
        out.invariants.push(Invariant::new("martingale", z < K_SIGMA, z, Some(0.0), format!("worst |z| below {K_SIGMA}")));

        let total = self.config.total();
        if np == 2 && self.config.stake_rule == StakeRule::Constant {
            let d = ratio(self.config.stake_quanta, total);
            let mut exact = true;
            for &w in &self.config.wealth {
                let x = ratio(w, total);
                exact &= win_probability_exact(&x, &d)? == x;
            }
            out.invariants.push(Invariant::new(
                "exact-win-probability",
                exact,
                if exact { 0.0 } else { 1.0 },
                Some(0.0),
                "Q(x) == x in rational arithmetic",
            ));
        }
        out.measured.insert("mean_duration".into(), json!(ens.durations.mean()));
        Ok(out)
    }
}
