use collapse_core::csl::{
    asymptotic_collapse_check, density_matrix_analytic, density_matrix_evolution_lattice, run_commuting_ensemble, run_lattice_ensemble,
    smeared_mass_density, unitary_representation_check, CommutingCslModel, DensityMatrix, LatticeCslModel, NoiseScheme, MIN_QUADRATURE_ORDER,
};
use collapse_core::discrete::check_collapse_conditions;
use collapse_core::lattice::Grid1;
use collapse_core::sl::{gaussian_packet, LatticeWavefunction};
use num_complex::Complex64;
use serde_json::json;

use super::{check, check_simplex, outcome_table, step_count, stride_for, Experiment, Outputs, RunSettings};
use crate::config::{Params, Violation};
use crate::output::{Cell, Invariant, Table};

const K_SIGMA: f64 = 5.0;
/// `λ t Δa²` beyond which every trajectory is expected to have picked a branch.
const ASYMPTOTIC_EXPONENT: f64 = 10.0;
/// Median residual weight allowed on the unselected branches once asymptotic.
const ASYMPTOTIC_TAIL: f64 = 1.8e-2;

struct Commuting {
    model: CommutingCslModel,
    c0: Vec<Complex64>,
    x0: Vec<f64>,
    scheme: NoiseScheme,
    stride: usize,
    n_bins: usize,
}

pub fn prepare_commuting(p: &mut Params, stride: Option<usize>) -> Option<Box<dyn Experiment>> {
    let eigenvalues = p.vec("eigenvalues", &[0.0, 1.0]);
    let x0 = p.vec("x0", &[0.3, 0.7]);
    let phases = p.vec("phases", &vec![0.0; x0.len()]);
    let lambda = p.f64("lambda", 1.0);
    let dt = p.f64("dt", 0.02);
    let t_final = p.f64("t_final", 2.0);
    let n_bins = p.usize("n_bins", 20);
    let scheme = match p.string("scheme", "sequential", &["sequential", "mixture"]).as_str() {
        "mixture" => NoiseScheme::Mixture,
        _ => NoiseScheme::Sequential,
    };
    let simplex = check_simplex(p, "x0", &x0);
    if x0.len() != eigenvalues.len() || phases.len() != x0.len() || x0.len() < 2 {
        p.violate(Violation::new("invalid-parameter", "model.x0, model.phases and model.eigenvalues need the same length, at least 2"));
        return None;
    }
    let n_steps = step_count(p, dt, t_final)?;
    let stride = stride_for(p, stride, n_steps, 20)?;
    let model = CommutingCslModel {
        eigenvalues,
        lambda,
        dt,
        n_steps,
    };
    if !(check(p, model.validate()) && simplex) {
        return None;
    }
    let c0 = x0.iter().zip(&phases).map(|(x, ph)| Complex64::from_polar(x.sqrt(), *ph)).collect();
    Some(Box::new(Commuting {
        model,
        c0,
        x0,
        scheme,
        stride,
        n_bins,
    }))
}

impl Commuting {
    fn min_gap_sq(&self) -> f64 {
        let a = &self.model.eigenvalues;
        let mut g = f64::INFINITY;
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                g = g.min((a[i] - a[j]).powi(2));
            }
        }
        g
    }
}

impl Experiment for Commuting {
    fn record_stride(&self) -> Option<usize> {
        Some(self.stride)
    }

    fn execute(&self, s: &RunSettings) -> collapse_core::Result<Outputs> {
        let m = &self.model;
        let d = m.dim();
        let ens = run_commuting_ensemble(m, &self.c0, self.scheme, s.n_trajectories, s.master_seed, self.stride, self.n_bins)?;
        let times = ens.stats.times().to_vec();
        let da = m.eigenvalues[1] - m.eigenvalues[0];
        let c01 = (self.c0[0] * self.c0[1].conj()).norm();

        let mut header = vec!["time".to_string()];
        for n in 0..d {
            header.push(format!("mean_x{n}"));
            header.push(format!("stderr_x{n}"));
        }
        header.extend(["offdiag_abs", "offdiag_stderr", "ratio", "ratio_stderr", "ratio_theory", "density_max_z"].map(String::from));
        let mut moments = Table::new(&header);
        let (mut worst_density, mut final_z) = (0.0f64, 0.0f64);
        for (k, &t) in times.iter().enumerate() {
            let est = ens.density_at(k);
            let analytic = density_matrix_analytic(m, &self.c0, t)?;
            let zmax = est.max_z(&analytic);
            worst_density = worst_density.max(zmax);
            let off = est.mean.get(0, 1).norm();
            let se = est.stderr_re[1].hypot(est.stderr_im[1]);
            let theory = (-m.lambda * t * da * da / 2.0).exp();
            let mut row = vec![Cell::F(t)];
            for n in 0..d {
                let e = ens.stats.mean(k, n);
                row.extend([Cell::F(e.mean), Cell::F(e.stderr)]);
            }
            row.extend([off, se, off / c01, se / c01, theory, zmax].map(Cell::F));
            moments.push(row);
            if k + 1 == times.len() {
                final_z = if se > 0.0 { (off / c01 - theory).abs() / (se / c01) } else { (off / c01 - theory).abs() / f64::EPSILON };
            }
        }

        let mut outcomes = outcome_table();
        for (i, o) in ens.outcomes.iter().enumerate() {
            outcomes.push(vec![i.into(), o.dominant.into(), Cell::Empty, o.tail_weight.into()]);
        }
        let mut out = Outputs {
            moments,
            outcomes,
            completed: s.n_trajectories,
            ..Default::default()
        };
        let t_final = m.t_final();
        let theory = (-m.lambda * t_final * da * da / 2.0).exp();
        out.invariants.push(Invariant::new(
            "offdiag-decay",
            final_z < K_SIGMA,
            final_z,
            Some(theory),
            format!("|rho_01| / |c_0 c_1| at t_final within {K_SIGMA} stderr of exp(-lambda t da^2 / 2)"),
        ));
        out.invariants.push(Invariant::new(
            "density-matrix",
            worst_density < K_SIGMA,
            worst_density,
            Some(0.0),
            format!("every element at every recorded time within {K_SIGMA} stderr of the closed form"),
        ));
        let report = check_collapse_conditions(&ens.stats);
        out.invariants.push(Invariant::new(
            "martingale",
            report.martingale_ok(K_SIGMA),
            report.worst_martingale_z(),
            Some(0.0),
            format!("every |E[x_n(t)] - x_n(0)| within {K_SIGMA} stderr"),
        ));
        let final_rho = ens.density();
        let trace = (final_rho.mean.trace() - 1.0).abs();
        out.invariants.push(Invariant::below("trace", trace, 1e-10));

        let exponent = m.lambda * t_final * self.min_gap_sq();
        out.measured.insert("collapse_exponent".into(), json!(exponent));
        if exponent >= ASYMPTOTIC_EXPONENT {
            let rep = asymptotic_collapse_check(&ens.outcomes, d);
            for (n, f) in rep.frequencies.iter().enumerate() {
                out.invariants.push(Invariant::within(format!("born-frequency-{n}"), *f, self.x0[n], K_SIGMA));
            }
            out.invariants.push(Invariant::below("median-tail", rep.median_tail, ASYMPTOTIC_TAIL));
        }
        Ok(out)
    }
}

struct Lattice {
    model: LatticeCslModel,
    psi0: LatticeWavefunction,
    split: f64,
    selection_exponent: f64,
}

/// Threshold on `(λ/2) t D` for expecting completed branch selection.
const SELECTION_EXPONENT: f64 = 5.0;

pub fn prepare_lattice(p: &mut Params, _stride: Option<usize>) -> Option<Box<dyn Experiment>> {
    let sites = p.usize("sites", 64);
    let extent = p.f64("extent", 32.0);
    let smear_a = p.f64("smear_a", 1.0);
    let m0 = p.f64("m0", 1.0);
    let mass = p.f64("mass", 1.0);
    let lambda = p.f64("lambda", 0.5);
    let dt = p.f64("dt", 0.05);
    let t_final = p.f64("t_final", 1.0);
    let kinetic = p.bool("kinetic", true);
    let centers = p.vec("centers", &[-6.0, 6.0]);
    let weights = p.vec("weights", &[0.3, 0.7]);
    let width = p.f64("packet_width", 1.0);
    let simplex = check_simplex(p, "weights", &weights);
    if centers.len() != 2 || weights.len() != 2 {
        p.violate(Violation::new("invalid-parameter", "model.centers and model.weights need exactly two entries"));
        return None;
    }
    let n_steps = step_count(p, dt, t_final)?;
    let grid = match Grid1::new(sites, extent) {
        Ok(g) => g,
        Err(e) => {
            p.violate(e.into());
            return None;
        }
    };
    let model = LatticeCslModel {
        grid,
        smear_a,
        m0,
        masses: vec![mass],
        lambda,
        potential: None,
        kinetic,
        dt,
        n_steps,
    };
    if let Err(e) = model.validate() {
        let v: Violation = e.clone().into();
        match e {
            collapse_core::Error::InvalidParameter { name, .. } if name == "extent" => p.violate(Violation {
                name: "grid-extent".into(),
                value: Some(extent),
                bound: Some(10.0 * smear_a),
                ..v
            }),
            _ => p.violate(v),
        }
        return None;
    }
    if sites > collapse_core::csl::MAX_DENSE_SITES {
        p.violate(
            Violation::new("dense-limit", "the deterministic density matrix is limited to a dense single-particle grid")
                .with_bound(sites as f64, collapse_core::csl::MAX_DENSE_SITES as f64),
        );
        return None;
    }
    if !simplex {
        return None;
    }
    let norm = |v: Vec<Complex64>| {
        let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.h();
        v.into_iter().map(move |z| z / n2.sqrt())
    };
    let l = norm(gaussian_packet(&grid, centers[0], width, 0.0));
    let r = norm(gaussian_packet(&grid, centers[1], width, 0.0));
    let values = l.zip(r).map(|(a, b)| a * weights[0].sqrt() + b * weights[1].sqrt()).collect();
    let psi0 = match LatticeWavefunction::new(grid, 1, mass, values) {
        Ok(psi) => psi,
        Err(e) => {
            p.violate(e.into());
            return None;
        }
    };
    let density = match smeared_mass_density(&model) {
        Ok(d) => d,
        Err(e) => {
            p.violate(e.into());
            return None;
        }
    };
    let dist = density.distance_sq(grid.nearest(centers[0]), grid.nearest(centers[1]));
    Some(Box::new(Lattice {
        selection_exponent: 0.5 * lambda * t_final * dist,
        split: 0.5 * (centers[0] + centers[1]),
        model,
        psi0,
    }))
}

impl Experiment for Lattice {
    fn execute(&self, s: &RunSettings) -> collapse_core::Result<Outputs> {
        let grid = self.model.grid;
        let rho0 = DensityMatrix::pure(&self.psi0.values, "position");
        let det = density_matrix_evolution_lattice(&self.model, &rho0, self.psi0.mass)?;
        let ens = run_lattice_ensemble(&self.model, &self.psi0, s.n_trajectories, s.master_seed, self.split, true)?;
        let est = ens.density().expect("density accumulated");
        let z = est.max_z(&det);

        let n = grid.n;
        let mirror = |i: usize| grid.nearest(2.0 * self.split - grid.x(i));
        let mut moments = Table::new(&[
            "x",
            "density_mean",
            "density_stderr",
            "density_oracle",
            "coherence_re",
            "coherence_stderr",
            "coherence_oracle_re",
        ]);
        for i in 0..n {
            let j = mirror(i);
            let k = i * n + j;
            moments.push(
                [
                    grid.x(i),
                    est.mean.get(i, i).re,
                    est.stderr_re[i * n + i],
                    det.get(i, i).re,
                    est.mean.get(i, j).re,
                    est.stderr_re[k],
                    det.get(i, j).re,
                ]
                .map(Cell::F)
                .to_vec(),
            );
        }
        let mut outcomes = outcome_table();
        for (i, &w) in ens.split_weights.iter().enumerate() {
            let outcome = if w > 0.5 { 0usize } else { 1 };
            outcomes.push(vec![i.into(), outcome.into(), Cell::Empty, w.min(1.0 - w).into()]);
        }
        let mut out = Outputs {
            moments,
            outcomes,
            completed: s.n_trajectories,
            ..Default::default()
        };
        out.invariants.push(Invariant::new(
            "density-matrix",
            z < K_SIGMA,
            z,
            Some(0.0),
            format!("every element within {K_SIGMA} stderr of the deterministic evolution"),
        ));
        out.invariants.push(Invariant::below("oracle-trace", (det.trace() - 1.0).abs(), 1e-10));
        out.measured.insert("selection_exponent".into(), json!(self.selection_exponent));
        if self.selection_exponent >= SELECTION_EXPONENT {
            let born = self.psi0.weight_below(0, self.split);
            out.invariants.push(Invariant::within("branch-selection", ens.below_frequency(), born, K_SIGMA));
        }
        Ok(out)
    }
}

struct Unitary {
    operator: Vec<Complex64>,
    dim: usize,
    lambda: f64,
    dt: f64,
    w: f64,
    orders: Vec<usize>,
}

const UNITARY_TOLERANCE: f64 = 1e-8;
/// Deviations below this are rounding noise and exempt from the monotonicity check.
const ROUNDING_FLOOR: f64 = 1e-12;

pub fn prepare_unitary(p: &mut Params, _stride: Option<usize>) -> Option<Box<dyn Experiment>> {
    let re = p.vec("operator_re", &[0.0, 0.5, 0.5, 1.0]);
    let im = p.vec("operator_im", &vec![0.0; re.len()]);
    let lambda = p.f64("lambda", 1.0);
    let dt = p.f64("dt", 0.1);
    let w = p.f64("w", 1.0);
    let orders: Vec<f64> = p.vec("orders", &[8.0, 16.0, 24.0, 32.0, 40.0, 48.0, 56.0, 64.0]);
    let dim = (re.len() as f64).sqrt().round() as usize;
    if dim * dim != re.len() || im.len() != re.len() || dim == 0 {
        p.violate(Violation::new("invalid-parameter", "model.operator_re and model.operator_im must hold the same square matrix size"));
        return None;
    }
    if dim > 4 {
        p.violate(Violation::new("dense-limit", "the quadrature check is limited to dimension 4").with_bound(dim as f64, 4.0));
        return None;
    }
    let operator: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
    for i in 0..dim {
        for j in 0..dim {
            if (operator[i * dim + j] - operator[j * dim + i].conj()).norm() > 1e-12 {
                p.violate(Violation::new("invalid-parameter", "the operator must be Hermitian"));
                return None;
            }
        }
    }
    if orders.is_empty() || orders.iter().any(|o| o.fract() != 0.0 || *o < MIN_QUADRATURE_ORDER as f64) {
        p.violate(
            Violation::new("quadrature-order", format!("orders must be whole numbers >= {MIN_QUADRATURE_ORDER}"))
                .with_bound(orders.iter().cloned().fold(f64::INFINITY, f64::min), MIN_QUADRATURE_ORDER as f64),
        );
        return None;
    }
    if !(lambda > 0.0 && dt > 0.0 && w.is_finite()) {
        p.violate(Violation::new("invalid-parameter", "lambda and dt must be positive, w finite"));
        return None;
    }
    Some(Box::new(Unitary {
        operator,
        dim,
        lambda,
        dt,
        w,
        orders: orders.iter().map(|&o| o as usize).collect(),
    }))
}

impl Experiment for Unitary {
    fn execute(&self, _s: &RunSettings) -> collapse_core::Result<Outputs> {
        let mut moments = Table::new(&["order", "deviation"]);
        let mut devs = Vec::with_capacity(self.orders.len());
        for &order in &self.orders {
            let d = unitary_representation_check(&self.operator, self.dim, self.lambda, self.dt, self.w, order)?;
            moments.push(vec![order.into(), d.into()]);
            devs.push(d);
        }
        let last = *devs.last().expect("at least one order");
        let monotone = devs.windows(2).all(|p| p[1] <= p[0] || p[1] < ROUNDING_FLOOR);
        let mut out = Outputs {
            moments,
            outcomes: outcome_table(),
            ..Default::default()
        };
        out.invariants.push(Invariant::below("deviation-at-max-order", last, UNITARY_TOLERANCE));
        out.invariants.push(Invariant::new(
            "monotone-convergence",
            monotone,
            devs.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max),
            None,
            format!("non-increasing in order once above {ROUNDING_FLOOR:e}"),
        ));
        Ok(out)
    }
}
