use collapse_core::ensemble::map_ordered;
use collapse_core::lattice::Grid1;
use collapse_core::sl::{apply_hit, energy_gain, entangled_collapse_rate, gaussian_packet, HitCenterDistribution, HitEvent, LatticeWavefunction, SlConfig};
use collapse_core::{Estimate, MomentAccumulator, RngStreamPolicy};
use num_complex::Complex64;
use serde_json::json;

use super::{check, check_simplex, Experiment, Outputs, RunSettings};
use crate::config::{Params, Violation};
use crate::output::{Cell, Invariant, Table};

const K_SIGMA: f64 = 5.0;
const ENERGY_RELATIVE: f64 = 0.02;
const ENERGY_TAG: u64 = 0x454e_4552_4759;

struct SlHits {
    config: SlConfig,
    mass: f64,
    split: f64,
    two_packets: LatticeWavefunction,
    single_packet: LatticeWavefunction,
    entangled: LatticeWavefunction,
    energy_hits: u64,
    entangled_runs: Option<u64>,
    t_cap: f64,
    survival_points: usize,
}

fn two_packet_values(grid: &Grid1, centers: &[f64], s: f64, weights: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let l = gaussian_packet(grid, centers[0], s, 0.0);
    let r = gaussian_packet(grid, centers[1], s, 0.0);
    (
        l.iter().map(|z| z * weights[0].sqrt()).collect(),
        r.iter().map(|z| z * weights[1].sqrt()).collect(),
    )
}

pub fn prepare(p: &mut Params, _stride: Option<usize>) -> Option<Box<dyn Experiment>> {
    let lambda_hit = p.f64("lambda_hit", 1.0);
    let width_a = p.f64("width_a", 1.0);
    let mass = p.f64("mass", 1.0);
    let sites = p.usize("sites", 512);
    let extent = p.f64("extent", 64.0);
    let centers = p.vec("centers", &[-10.0, 10.0]);
    let weights = p.vec("weights", &[0.3, 0.7]);
    let s = p.f64("packet_width", 0.5);
    let energy_width = p.f64("energy_packet_width", 1.0);
    let energy_hits = p.usize("energy_hits", 200) as u64;
    let ent_sites = p.usize("entangled_sites", 320);
    let ent_extent = p.f64("entangled_extent", 40.0);
    let ent_runs = p.usize("entangled_runs", 0);
    let t_cap = p.f64("t_cap", 50.0);
    let survival_points = p.usize("survival_points", 20);

    let mut config = SlConfig::natural();
    config.lambda_hit = lambda_hit;
    config.width_a = width_a;
    let simplex = check_simplex(p, "weights", &weights);
    if centers.len() != 2 || weights.len() != 2 {
        p.violate(Violation::new("invalid-parameter", "model.centers and model.weights need exactly two entries"));
        return None;
    }
    if !(t_cap > 0.0 && s > 0.0 && energy_width > 0.0) {
        p.violate(Violation::new("invalid-parameter", "t_cap and packet widths must be positive"));
        return None;
    }
    if !(check(p, config.validate()) && simplex) {
        return None;
    }
    let built = (|| -> collapse_core::Result<_> {
        let g = Grid1::new(sites, extent)?;
        let (l, r) = two_packet_values(&g, &centers, s, &weights);
        let two = LatticeWavefunction::new(g, 1, mass, l.iter().zip(&r).map(|(a, b)| a + b).collect())?;
        let single = LatticeWavefunction::new(g, 1, mass, gaussian_packet(&g, 0.5 * (centers[0] + centers[1]), energy_width, 0.0))?;
        let ge = Grid1::new(ent_sites, ent_extent)?;
        let (l, r) = two_packet_values(&ge, &centers, s, &weights);
        let n = ge.n;
        let mut v = vec![Complex64::default(); n * n];
        for i in 0..n {
            for j in 0..n {
                // (√w_L L L + √w_R R R) with one weight factor per pair
                v[i * n + j] = l[i] * l[j] / weights[0].sqrt() + r[i] * r[j] / weights[1].sqrt();
            }
        }
        let ent = LatticeWavefunction::new(ge, 2, mass, v)?;
        single.kinetic_energy()?;
        Ok((two, single, ent))
    })();
    let (two_packets, single_packet, entangled) = match built {
        Ok(b) => b,
        Err(e) => {
            p.violate(e.into());
            return None;
        }
    };
    Some(Box::new(SlHits {
        config,
        mass,
        split: 0.5 * (centers[0] + centers[1]),
        two_packets,
        single_packet,
        entangled,
        energy_hits,
        entangled_runs: (ent_runs > 0).then_some(ent_runs as u64),
        t_cap,
        survival_points: survival_points.max(1),
    }))
}

impl Experiment for SlHits {
    fn execute(&self, s: &RunSettings) -> collapse_core::Result<Outputs> {
        let a = self.config.width_a;
        let born = self.two_packets.weight_below(0, self.split);

        let dist = HitCenterDistribution::new(&self.two_packets, 0, a)?;
        let hits = map_ordered(s.n_trajectories, |i| -> collapse_core::Result<(f64, f64)> {
            let center = dist.sample(&mut RngStreamPolicy::new(s.master_seed, i).rng());
            let hit = apply_hit(&self.two_packets, &HitEvent { time: 0.0, particle: 0, center }, a)?;
            Ok((center, hit.psi.weight_below(0, self.split)))
        });
        let hits = hits.into_iter().collect::<collapse_core::Result<Vec<_>>>()?;

        let edist = HitCenterDistribution::new(&self.single_packet, 0, a)?;
        let gains = map_ordered(self.energy_hits, |i| -> collapse_core::Result<f64> {
            let center = edist.sample(&mut RngStreamPolicy::new(s.master_seed, i).derive(ENERGY_TAG).rng());
            let hit = apply_hit(&self.single_packet, &HitEvent { time: 0.0, particle: 0, center }, a)?;
            energy_gain(&self.single_packet, &hit.psi)
        });
        let gains = gains.into_iter().collect::<collapse_core::Result<Vec<_>>>()?;

        let n_ent = self.entangled_runs.unwrap_or(s.n_trajectories);
        let ent = entangled_collapse_rate(&self.entangled, &self.config, self.split, n_ent, s.master_seed, self.t_cap)?;

        let mut outcomes = Table::new(&["stage", "trajectory", "outcome", "collapse_time", "tail_weight"]);
        let mut below = 0u64;
        for (i, &(_, w)) in hits.iter().enumerate() {
            below += (w > 0.5) as u64;
            let outcome = if w > 0.5 { 0usize } else { 1 };
            outcomes.push(vec![Cell::S("hit".into()), i.into(), outcome.into(), Cell::F(0.0), w.min(1.0 - w).into()]);
        }
        for (i, r) in ent.runs.iter().enumerate() {
            outcomes.push(match r {
                Some((t, b)) => vec![Cell::S("entangled".into()), i.into(), (if *b { 0usize } else { 1 }).into(), (*t).into(), Cell::Empty],
                None => vec![Cell::S("entangled".into()), i.into(), Cell::Empty, Cell::Empty, Cell::Empty],
            });
        }

        // survival of the superposition, expected exp(-2 λ t)
        let rate = 2.0 * self.config.lambda_hit;
        let horizon = 3.0 / rate;
        let mut moments = Table::new(&["time", "undecided_fraction", "undecided_stderr", "theory"]);
        for k in 0..=self.survival_points {
            let t = horizon * k as f64 / self.survival_points as f64;
            let alive = ent.runs.iter().filter(|r| r.map_or(true, |(tc, _)| tc > t)).count() as u64;
            let e = Estimate::proportion(alive, n_ent);
            moments.push(vec![t.into(), e.mean.into(), e.stderr.into(), (-rate * t).exp().into()]);
        }

        let mut out = Outputs {
            moments,
            outcomes,
            completed: s.n_trajectories + n_ent - ent.uncollapsed,
            aborted: ent.uncollapsed,
            ..Default::default()
        };
        let f = Estimate::proportion(below, s.n_trajectories);
        out.invariants.push(Invariant::within("hit-selection", f, born, K_SIGMA));

        let oracle = 1.0 / (4.0 * self.mass * a * a);
        let positive = gains.iter().all(|&g| g > 0.0);
        let worst = gains.iter().map(|g| (g / oracle - 1.0).abs()).fold(0.0, f64::max);
        let mut acc = MomentAccumulator::default();
        gains.iter().for_each(|&g| acc.push(g));
        out.invariants.push(Invariant::new(
            "energy-gain-positive",
            positive,
            gains.iter().cloned().fold(f64::INFINITY, f64::min),
            None,
            "> 0 for every hit",
        ));
        out.invariants.push(Invariant::new(
            "energy-gain-oracle",
            worst < ENERGY_RELATIVE,
            worst,
            Some(0.0),
            format!("every |dE / (1/(4 m a^2)) - 1| below {ENERGY_RELATIVE}"),
        ));
        out.invariants.push(Invariant::within("entangled-collapse-time", ent.mean_time, 1.0 / rate, K_SIGMA));
        out.invariants.push(Invariant::within("entangled-selection", ent.below_frequency, born, K_SIGMA));
        out.measured.insert("born_weight".into(), json!(born));
        out.measured.insert("entangled_rate".into(), json!(ent.rate()));
        out.measured.insert("entangled_uncollapsed".into(), json!(ent.uncollapsed));
        out.measured.insert("energy_gain_mean".into(), json!(acc.mean()));
        out.measured.insert("energy_gain_oracle".into(), json!(oracle));
        Ok(out)
    }
}
