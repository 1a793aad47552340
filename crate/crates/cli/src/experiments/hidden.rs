use collapse_core::hidden::{outcome_probability_quadrature, outcome_frequency_mc, SpinDirection, MIN_AZIMUTH_NODES, MIN_POLAR_NODES};
use collapse_core::RngStreamPolicy;
use serde_json::json;

use super::{outcome_table, Experiment, Outputs, RunSettings};
use crate::config::{Params, Violation};
use crate::output::{Cell, Invariant, Table};

const K_SIGMA: f64 = 5.0;
const COMPLEMENT_TOLERANCE: f64 = 1e-9;
const HALF_TOLERANCE: f64 = 1e-6;
const CLOSED_FORM_TOLERANCE: f64 = 1e-4;
const ANGLE_TAG: u64 = 0x414e_474c_45;

struct Hidden {
    spin: SpinDirection,
    angles: Vec<f64>,
    resolution: (usize, usize),
}

pub fn prepare(p: &mut Params, _stride: Option<usize>) -> Option<Box<dyn Experiment>> {
    let n_angles = p.usize("n_angles", 10);
    let polar = p.usize("polar_nodes", 1000);
    let azimuth = p.usize("azimuth_nodes", 2000);
    let spin = p.vec("spin", &[0.0, 0.0, 1.0]);
    if polar < MIN_POLAR_NODES || azimuth < MIN_AZIMUTH_NODES {
        p.violate(
            Violation::new("quadrature-resolution", format!("need at least {MIN_POLAR_NODES} polar and {MIN_AZIMUTH_NODES} azimuthal nodes"))
                .with_bound(polar.min(azimuth) as f64, MIN_POLAR_NODES as f64),
        );
        return None;
    }
    if n_angles < 2 {
        p.violate(Violation::new("invalid-parameter", "model.n_angles must be >= 2"));
        return None;
    }
    let spin = match <[f64; 3]>::try_from(spin.as_slice()).map_err(|_| ()).and_then(|v| SpinDirection::new(v).map_err(|_| ())) {
        Ok(s) => s,
        Err(()) => {
            p.violate(Violation::new("invalid-parameter", "model.spin must be a unit 3-vector"));
            return None;
        }
    };
    let angles = (0..n_angles).map(|k| std::f64::consts::PI * k as f64 / (n_angles - 1) as f64).collect();
    Some(Box::new(Hidden {
        spin,
        angles,
        resolution: (polar, azimuth),
    }))
}

/// A measurement axis at polar angle `theta` from `n`.
fn axis(n: &SpinDirection, theta: f64) -> SpinDirection {
    let v = n.vector();
    // any unit vector orthogonal to n
    let helper = if v[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = helper[0] * v[0] + helper[1] * v[1] + helper[2] * v[2];
    let mut u = [helper[0] - d * v[0], helper[1] - d * v[1], helper[2] - d * v[2]];
    let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    u.iter_mut().for_each(|c| *c /= norm);
    let m = [0, 1, 2].map(|i| theta.cos() * v[i] + theta.sin() * u[i]);
    let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
    SpinDirection::new(m.map(|c| c / norm)).expect("unit vector")
}

impl Experiment for Hidden {
    fn execute(&self, s: &RunSettings) -> collapse_core::Result<Outputs> {
        let mut moments = Table::new(&["theta", "quadrature", "mc_mean", "mc_stderr", "cos2_half"]);
        let (mut worst_z, mut worst_comp, mut worst_closed) = (0.0f64, 0.0f64, 0.0f64);
        for (k, &theta) in self.angles.iter().enumerate() {
            let m = axis(&self.spin, theta);
            let q = outcome_probability_quadrature(&self.spin, &m, self.resolution)?;
            let q_flip = outcome_probability_quadrature(&self.spin, &m.flipped(), self.resolution)?;
            let seed = RngStreamPolicy::new(s.master_seed, 0).derive(ANGLE_TAG + k as u64).master_seed;
            let mc = outcome_frequency_mc(&self.spin, &m, s.n_trajectories, seed);
            let closed = (theta / 2.0).cos().powi(2);
            if s.n_trajectories > 0 {
                worst_z = worst_z.max(mc.z(q).abs());
            }
            worst_comp = worst_comp.max((q + q_flip - 1.0).abs());
            worst_closed = worst_closed.max((q - closed).abs());
            moments.push([theta, q, mc.mean, mc.stderr, closed].map(Cell::F).to_vec());
        }
        let half = outcome_probability_quadrature(&self.spin, &axis(&self.spin, std::f64::consts::FRAC_PI_2), self.resolution)?;
        let mut out = Outputs {
            moments,
            outcomes: outcome_table(),
            completed: s.n_trajectories * self.angles.len() as u64,
            ..Default::default()
        };
        out.invariants.push(Invariant::new(
            "mc-vs-quadrature",
            worst_z < K_SIGMA,
            worst_z,
            Some(0.0),
            format!("worst |z| over all angles below {K_SIGMA}"),
        ));
        out.invariants.push(Invariant::new(
            "complementarity",
            worst_comp <= COMPLEMENT_TOLERANCE,
            worst_comp,
            Some(0.0),
            format!("|P(m) + P(-m) - 1| <= {COMPLEMENT_TOLERANCE:e}"),
        ));
        out.invariants.push(Invariant::new(
            "orthogonal-axis",
            (half - 0.5).abs() < HALF_TOLERANCE,
            half,
            Some(0.5),
            format!("< {HALF_TOLERANCE:e} from 1/2"),
        ));
        out.invariants.push(Invariant::below("closed-form", worst_closed, CLOSED_FORM_TOLERANCE));
        out.measured.insert("resolution".into(), json!([self.resolution.0, self.resolution.1]));
        Ok(out)
    }
}
