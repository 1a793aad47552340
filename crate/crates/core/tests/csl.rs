use collapse_core::csl::*;
use collapse_core::lattice::Grid1;
use collapse_core::sl::{gaussian_packet, LatticeWavefunction};
use collapse_core::stats::{Estimate, MomentAccumulator};
use collapse_core::RngStreamPolicy;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn amps(x: &[f64]) -> Vec<Complex64> {
    x.iter().map(|v| c(v.sqrt(), 0.0)).collect()
}

fn two_state(lambda: f64, dt: f64, n_steps: usize) -> CommutingCslModel {
    CommutingCslModel {
        eigenvalues: vec![0.0, 1.0],
        lambda,
        dt,
        n_steps,
    }
}

#[test]
fn born_rule_from_time_averaged_field() {
    // λt(Δa)² = 10.
    let model = two_state(1.0, 0.01, 1000);
    let x0 = [0.3, 0.7];
    let ens = run_commuting_ensemble(&model, &amps(&x0), NoiseScheme::Sequential, 10_000, 17, 100, 20).unwrap();
    let hits = ens.outcomes.iter().filter(|o| o.mean_w_over_2lambda > 0.5).count() as u64;
    let f = Estimate::proportion(hits, 10_000);
    assert!(f.within(0.7, 5.0), "{f:?}");

    let report = asymptotic_collapse_check(&ens.outcomes, 2);
    assert!(report.born_ok(&x0, 5.0), "{report:?}");
    assert!(report.median_tail < (-4.0f64).exp(), "median tail {}", report.median_tail);

    // Martingale of x_n at every recorded time.
    for t in 0..ens.stats.times().len() {
        for n in 0..2 {
            let m = ens.stats.mean(t, n);
            assert!(m.within(x0[n], 5.0), "t={t} n={n} {m:?}");
        }
    }
}

#[test]
fn eigenstate_field_averages_to_eigenvalue() {
    let model = CommutingCslModel {
        eigenvalues: vec![0.0, 1.0, 2.5],
        lambda: 1.0,
        dt: 0.01,
        n_steps: 500,
    };
    for (n, &a) in model.eigenvalues.iter().enumerate() {
        let mut c0 = vec![c(0.0, 0.0); 3];
        c0[n] = c(1.0, 0.0);
        let ens = run_commuting_ensemble(&model, &c0, NoiseScheme::Sequential, 2000, 5 + n as u64, 500, 10).unwrap();
        let mut acc = MomentAccumulator::default();
        ens.outcomes.iter().for_each(|o| acc.push(o.mean_w_over_2lambda));
        assert!(acc.estimate().within(a, 5.0), "{n}: {:?}", acc.estimate());
        assert!(ens.outcomes.iter().all(|o| o.tail_weight == 0.0 && o.dominant == n));
    }
}

#[test]
fn sequential_and_mixture_schemes_agree() {
    let model = two_state(1.0, 0.01, 100);
    let c0 = amps(&[0.3, 0.7]);
    let n = 100_000;
    let seq = run_commuting_ensemble(&model, &c0, NoiseScheme::Sequential, n, 1, 100, 20).unwrap();
    let mix = run_commuting_ensemble(&model, &c0, NoiseScheme::Mixture, n, 2, 100, 20).unwrap();
    let last = seq.stats.times().len() - 1;
    let l1: f64 = seq
        .stats
        .histogram(last, 0)
        .iter()
        .zip(mix.stats.histogram(last, 0))
        .map(|(a, b)| (a - b).abs())
        .sum();
    assert!(l1 < 0.05, "L1 = {l1}");
}

#[test]
fn ensemble_density_matrix_matches_closed_form() {
    // λt = 2 gives an off-diagonal factor e^{-1}.
    let model = two_state(1.0, 0.02, 100);
    let x0 = [0.3, 0.7];
    let c0 = amps(&x0);
    let analytic = density_matrix_analytic(&model, &c0, 2.0).unwrap();
    assert!((analytic.get(0, 1).re - (-1.0f64).exp() * 0.21f64.sqrt()).abs() < 1e-15);
    assert!((analytic.get(0, 0).re - 0.3).abs() < 1e-15);

    let ens = run_commuting_ensemble(&model, &c0, NoiseScheme::Sequential, 100_000, 23, 100, 10).unwrap();
    let rho = ens.density();
    assert!((rho.mean.trace() - 1.0).abs() < 1e-12);
    assert!(rho.max_z(&analytic) < 5.0, "z = {}", rho.max_z(&analytic));

    let a = run_commuting_ensemble(&model, &c0, NoiseScheme::Sequential, 50_000, 101, 100, 10).unwrap();
    let b = run_commuting_ensemble(&model, &c0, NoiseScheme::Sequential, 50_000, 202, 100, 10).unwrap();
    let z = a.density().max_z_between(&b.density());
    assert!(z < 5.0, "halves disagree: z = {z}");
}

#[test]
fn density_matrix_depends_only_on_initial_mixture() {
    // ½|0⟩⟨0| + ½|1⟩⟨1| = ½|+⟩⟨+| + ½|−⟩⟨−|.
    let model = two_state(1.0, 0.02, 50);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let run = |states: [Vec<Complex64>; 2], seed: u64| {
        let mut acc = ProjectorAccumulator::new(2);
        for (k, st) in states.iter().enumerate() {
            let e = run_commuting_ensemble(&model, st, NoiseScheme::Sequential, 20_000, seed + k as u64, 50, 10).unwrap();
            acc.merge(&e.rho);
        }
        acc.estimate("eigenbasis")
    };
    let basis = run([vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]], 40);
    let rotated = run([vec![c(s, 0.0), c(s, 0.0)], vec![c(s, 0.0), c(-s, 0.0)]], 50);
    let z = basis.max_z_between(&rotated);
    assert!(z < 5.0, "z = {z}");
    let target = DensityMatrix::new(2, vec![c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)], "eigenbasis").unwrap();
    assert!(rotated.max_z(&target) < 5.0);
}

#[test]
fn raw_measure_weights_average_to_one() {
    let model = two_state(1.0, 0.01, 50);
    let est = raw_measure_normalization_check(&model, &amps(&[0.3, 0.7]), 100_000, 9).unwrap();
    assert!(est.within(1.0, 5.0), "{est:?}");
}

#[test]
fn product_state_start_has_no_tail() {
    let model = two_state(1.0, 0.01, 300);
    let ens = run_commuting_ensemble(&model, &[c(1.0, 0.0), c(0.0, 0.0)], NoiseScheme::Sequential, 500, 3, 300, 10).unwrap();
    assert!(ens.outcomes.iter().all(|o| o.tail_weight == 0.0));
}

#[test]
fn outcome_frequencies_ignore_phases() {
    let model = two_state(1.0, 0.01, 1000);
    let plain = amps(&[0.3, 0.7]);
    let phased = vec![plain[0], plain[1] * Complex64::from_polar(1.0, 1.1)];
    let a = run_commuting_ensemble(&model, &plain, NoiseScheme::Sequential, 2000, 8, 1000, 10).unwrap();
    let b = run_commuting_ensemble(&model, &phased, NoiseScheme::Sequential, 2000, 8, 1000, 10).unwrap();
    let da: Vec<usize> = a.outcomes.iter().map(|o| o.dominant).collect();
    let db: Vec<usize> = b.outcomes.iter().map(|o| o.dominant).collect();
    assert_eq!(da, db);
}

fn rel_close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    let scale = a.iter().chain(b).map(|z| z.norm()).fold(0.0, f64::max);
    a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol * scale)
}

fn unnormalized(amplitudes: &[Complex64], log_norm_sq: f64) -> Vec<Complex64> {
    amplitudes.iter().map(|z| z * (0.5 * log_norm_sq).exp()).collect()
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn commuting_and_general_evolution_are_linear(
        p1 in complex_vec(3),
        p2 in complex_vec(3),
        alpha in (-2.0f64..2.0, -2.0f64..2.0),
        beta in (-2.0f64..2.0, -2.0f64..2.0),
        seed in 0u64..1000,
    ) {
        prop_assume!(p1.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);
        prop_assume!(p2.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);
        let (alpha, beta) = (c(alpha.0, alpha.1), c(beta.0, beta.1));
        let combo: Vec<Complex64> = p1.iter().zip(&p2).map(|(a, b)| alpha * a + beta * b).collect();
        prop_assume!(combo.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);

        let model = CommutingCslModel { eigenvalues: vec![0.0, 0.7, 1.5], lambda: 0.8, dt: 0.01, n_steps: 200 };
        let noise = sample_physical_noise(&model, &amps(&[0.2, 0.3, 0.5]), NoiseScheme::Sequential, &RngStreamPolicy::new(seed, 0)).unwrap();
        let ev = |v: &[Complex64]| {
            let r = evolve_csl_commuting(&model, v, &noise, 200).unwrap();
            unnormalized(&r.amplitudes, r.log_norm_sq)
        };
        let (e1, e2, e12) = (ev(&p1), ev(&p2), ev(&combo));
        let sum: Vec<Complex64> = e1.iter().zip(&e2).map(|(a, b)| alpha * a + beta * b).collect();
        prop_assert!(rel_close(&e12, &sum, 1e-10));

        let h = vec![c(0.3, 0.0), c(0.5, 0.2), c(0.0, 0.0), c(0.5, -0.2), c(-0.1, 0.0), c(0.4, 0.0), c(0.0, 0.0), c(0.4, 0.0), c(0.2, 0.0)];
        let general = GeneralCslModel {
            operators: vec![model.eigenvalues.clone()],
            hamiltonian: Hamiltonian::Constant(h),
            lambda: 0.8,
            dt: 0.01,
            n_steps: 200,
        };
        let gev = |v: &[Complex64]| {
            let r = evolve_csl_general(&general, v, &noise, 200).unwrap();
            unnormalized(&r.amplitudes, r.log_norm_sq)
        };
        let (g1, g2, g12) = (gev(&p1), gev(&p2), gev(&combo));
        let gsum: Vec<Complex64> = g1.iter().zip(&g2).map(|(a, b)| alpha * a + beta * b).collect();
        prop_assert!(rel_close(&g12, &gsum, 1e-10));
    }

    #[test]
    fn eigenstate_is_invariant_for_any_noise(n in 0usize..3, seed in 0u64..1000) {
        let model = CommutingCslModel { eigenvalues: vec![0.0, 0.7, 1.5], lambda: 1.3, dt: 0.02, n_steps: 100 };
        let noise = sample_physical_noise(&model, &amps(&[0.2, 0.3, 0.5]), NoiseScheme::Sequential, &RngStreamPolicy::new(seed, 1)).unwrap();
        let mut c0 = vec![c(0.0, 0.0); 3];
        c0[n] = c(0.6, 0.8);
        let r = evolve_csl_commuting(&model, &c0, &noise, 10).unwrap();
        for (k, z) in r.amplitudes.iter().enumerate() {
            prop_assert!((z - c0[k]).norm() < 1e-15);
        }
        prop_assert!(r.x_trace.iter().all(|x| x[n] == 1.0));
    }
}

/// `dρ/dt = −i[H, ρ] − (λ/2)(a_n − a_m)² ρ_nm`, classical RK4.
fn lindblad_two_state(h: [[Complex64; 2]; 2], a: [f64; 2], lambda: f64, rho0: [[Complex64; 2]; 2], t: f64, n: usize) -> [[Complex64; 2]; 2] {
    let rhs = |r: &[[Complex64; 2]; 2]| {
        let mut out = [[c(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut comm = c(0.0, 0.0);
                for k in 0..2 {
                    comm += h[i][k] * r[k][j] - r[i][k] * h[k][j];
                }
                out[i][j] = c(0.0, -1.0) * comm - 0.5 * lambda * (a[i] - a[j]).powi(2) * r[i][j];
            }
        }
        out
    };
    let axpy = |r: &[[Complex64; 2]; 2], k: &[[Complex64; 2]; 2], s: f64| {
        let mut o = *r;
        for i in 0..2 {
            for j in 0..2 {
                o[i][j] += k[i][j] * s;
            }
        }
        o
    };
    let dt = t / n as f64;
    let mut r = rho0;
    for _ in 0..n {
        let k1 = rhs(&r);
        let k2 = rhs(&axpy(&r, &k1, dt / 2.0));
        let k3 = rhs(&axpy(&r, &k2, dt / 2.0));
        let k4 = rhs(&axpy(&r, &k3, dt));
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] += (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]) * (dt / 6.0);
            }
        }
    }
    r
}

#[test]
fn strong_collapse_suppresses_transitions() {
    let g = 1.0;
    let (lambda, dt, n_steps) = (100.0, 1e-3, 1000);
    let h = [[c(0.0, 0.0), c(g, 0.0)], [c(g, 0.0), c(0.0, 0.0)]];
    let x0 = [0.3, 0.7];
    let c0 = amps(&x0);
    let rho0 = [[c(0.3, 0.0), c(0.21f64.sqrt(), 0.0)], [c(0.21f64.sqrt(), 0.0), c(0.7, 0.0)]];
    let oracle = lindblad_two_state(h, [0.0, 1.0], lambda, rho0, 1.0, 20_000);
    // Coupling g over unit time would otherwise move O(g) of the population.
    assert!((oracle[0][0].re - 0.3).abs() < 0.03, "{}", oracle[0][0].re);

    let model = GeneralCslModel {
        operators: vec![vec![0.0, 1.0]],
        hamiltonian: Hamiltonian::Constant(vec![h[0][0], h[0][1], h[1][0], h[1][1]]),
        lambda,
        dt,
        n_steps,
    };
    let mut acc = MomentAccumulator::default();
    let mut wins = 0u64;
    let n = 4000;
    for i in 0..n {
        let (run, _) = run_general_trajectory(&model, &c0, &RngStreamPolicy::new(77, i), n_steps).unwrap();
        let x = run.amplitudes[0].norm_sqr();
        acc.push(x);
        if x > 0.5 {
            wins += 1;
        }
    }
    let est = acc.estimate();
    assert!((est.mean - oracle[0][0].re).abs() < 5.0 * est.stderr + 1e-3, "{est:?} vs {}", oracle[0][0].re);
    let f = Estimate::proportion(wins, n);
    assert!((f.mean - oracle[0][0].re).abs() < 5.0 * f.stderr + 0.01, "{f:?} vs {}", oracle[0][0].re);
}

#[test]
fn without_collapse_energy_is_conserved() {
    let h = vec![c(0.3, 0.0), c(0.5, 0.2), c(0.1, -0.3), c(0.5, -0.2), c(-0.1, 0.0), c(0.4, 0.0), c(0.1, 0.3), c(0.4, 0.0), c(0.2, 0.0)];
    let energy = |v: &[Complex64]| {
        let mut e = c(0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                e += v[i].conj() * h[i * 3 + j] * v[j];
            }
        }
        e.re
    };
    let c0 = vec![c(0.6, 0.0), c(0.0, 0.48), c(0.64, 0.0)];
    let e0 = energy(&c0);
    for n_steps in [10, 100, 1000] {
        let model = GeneralCslModel {
            operators: vec![vec![0.0, 1.0, 2.0]],
            hamiltonian: Hamiltonian::Constant(h.clone()),
            lambda: 0.0,
            dt: 0.01,
            n_steps,
        };
        let (run, _) = run_general_trajectory(&model, &c0, &RngStreamPolicy::new(1, 0), n_steps).unwrap();
        assert!(((energy(&run.amplitudes) - e0) / e0).abs() < 1e-8);
        assert!(run.log_norm_sq.abs() < 1e-10, "{}", run.log_norm_sq);
    }
}

#[test]
fn unitary_superposition_reproduces_collapse_step() {
    let diag = |a: &[f64]| {
        let n = a.len();
        let mut m = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            m[i * n + i] = c(a[i], 0.0);
        }
        m
    };
    let dev = unitary_representation_check(&diag(&[0.0, 1.0]), 2, 1.0, 0.1, 1.0, 64).unwrap();
    assert!(dev < 1e-8, "{dev}");
    let dev = unitary_representation_check(&diag(&[0.7, 0.7, 0.7]), 3, 1.0, 0.1, 1.0, 64).unwrap();
    assert!(dev < 1e-12, "{dev}");

    // A non-diagonal Hermitian operator.
    let a = vec![c(0.2, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(1.0, 0.0)];
    assert!(unitary_representation_check(&a, 2, 0.5, 0.2, -0.5, 64).unwrap() < 1e-8);

    let mut prev = f64::INFINITY;
    for order in (8..=64).step_by(8) {
        let d = unitary_representation_check(&diag(&[0.0, 1.0]), 2, 1.0, 0.1, 20.0, order).unwrap();
        assert!(d <= prev || d < 1e-12, "order {order}: {d} after {prev}");
        prev = d;
    }
    assert!(unitary_representation_check(&diag(&[0.0, 1.0]), 2, 1.0, 0.1, 1.0, 4).is_err());
    assert!(unitary_representation_check(&diag(&[0.0; 5]), 5, 1.0, 0.1, 1.0, 16).is_err());
}

fn lattice_model(n: usize, extent: f64, a: f64, lambda: f64, dt: f64, n_steps: usize, kinetic: bool) -> LatticeCslModel {
    LatticeCslModel {
        grid: Grid1::new(n, extent).unwrap(),
        smear_a: a,
        m0: 1.0,
        masses: vec![1.0],
        lambda,
        potential: None,
        kinetic,
        dt,
        n_steps,
    }
}

fn two_packets(grid: &Grid1, left: f64, right: f64, s: f64, w_left: f64) -> LatticeWavefunction {
    let norm = |v: Vec<Complex64>| {
        let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.h();
        v.into_iter().map(|z| z / n2.sqrt()).collect::<Vec<_>>()
    };
    let l = norm(gaussian_packet(grid, left, s, 0.0));
    let r = norm(gaussian_packet(grid, right, s, 0.0));
    let values = l.iter().zip(&r).map(|(a, b)| a * w_left.sqrt() + b * (1.0 - w_left).sqrt()).collect();
    LatticeWavefunction::new(*grid, 1, 1.0, values).unwrap()
}

#[test]
fn lattice_selects_packets_with_born_weights() {
    // Packets 30a apart; with H = 0 each site is a collapse eigenstate.
    let model = lattice_model(128, 64.0, 1.0, 1.0, 0.1, 100, false);
    let psi = two_packets(&model.grid, -15.0, 15.0, 1.0, 0.3);
    let ens = run_lattice_ensemble(&model, &psi, 10_000, 31, 0.0, false).unwrap();
    let f = ens.below_frequency();
    assert!(f.within(0.3, 5.0), "{f:?}");
    let undecided = ens.split_weights.iter().filter(|&&w| w > 1e-3 && w < 1.0 - 1e-3).count();
    assert!(undecided < 100, "{undecided} trajectories still superposed");
}

#[test]
fn lattice_without_collapse_is_free_evolution() {
    let model = lattice_model(128, 64.0, 1.0, 0.0, 0.05, 40, true);
    let grid = model.grid;
    for values in [vec![c(1.0, 0.0); 128], gaussian_packet(&grid, 3.0, 1.5, 0.7)] {
        let psi = LatticeWavefunction::new(grid, 1, 1.0, values).unwrap();
        let run = evolve_csl_lattice(&model, &psi, &RngStreamPolicy::new(0, 0), None).unwrap();
        let mut reference = psi.clone();
        for _ in 0..2 * model.n_steps {
            reference.evolve(None, 0.5 * model.dt, 1).unwrap();
        }
        let diff = run.psi.values.iter().zip(&reference.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
        assert!(run.log_norm_sq.abs() < 1e-12);
    }
}

#[test]
fn lattice_evolution_is_linear() {
    let model = lattice_model(64, 32.0, 1.0, 0.7, 0.05, 20, true);
    let grid = model.grid;
    let mut w = Vec::new();
    let mut policy_rng = RngStreamPolicy::new(4, 1).rng();
    for _ in 0..20 * 64 {
        let z: f64 = policy_rng.sample(rand_distr::StandardNormal);
        w.push(0.3 + z * (0.7f64 / (grid.h() * 0.05)).sqrt());
    }
    let noise = CslNoiseRecord {
        dt: 0.05,
        n_modes: 64,
        w,
        raw_log_weight: Vec::new(),
        branch: None,
    };
    let raw = |v: Vec<Complex64>| LatticeWavefunction {
        grid,
        n_particles: 1,
        mass: 1.0,
        values: v,
    };
    let p1 = gaussian_packet(&grid, -4.0, 1.0, 0.3);
    let p2 = gaussian_packet(&grid, 6.0, 2.0, -0.5);
    let (al, be) = (c(0.4, -1.1), c(2.0, 0.3));
    let combo: Vec<Complex64> = p1.iter().zip(&p2).map(|(a, b)| al * a + be * b).collect();
    let ev = |v: Vec<Complex64>| {
        let r = evolve_csl_lattice_with_noise(&model, &raw(v), &noise).unwrap();
        unnormalized(&r.psi.values, r.log_norm_sq)
    };
    let (e1, e2, e12) = (ev(p1), ev(p2), ev(combo));
    let sum: Vec<Complex64> = e1.iter().zip(&e2).map(|(a, b)| al * a + be * b).collect();
    assert!(rel_close(&e12, &sum, 1e-10));
}

#[test]
fn lattice_ensemble_matches_deterministic_density_matrix() {
    let model = lattice_model(64, 32.0, 1.0, 0.5, 0.05, 20, true);
    let psi = two_packets(&model.grid, -6.0, 6.0, 1.0, 0.5);
    let rho0 = DensityMatrix::pure(&psi.values, "position");
    let det = density_matrix_evolution_lattice(&model, &rho0, 1.0).unwrap();
    assert!((det.trace() - 1.0).abs() < 1e-10);
    assert!(det.min_eigenvalue() > -1e-9);
    let ens = run_lattice_ensemble(&model, &psi, 10_000, 12, 0.0, true).unwrap();
    let est = ens.density().unwrap();
    let z = est.max_z(&det);
    assert!(z < 5.5, "max z over {} entries: {z}", 64 * 64);
}

#[test]
fn lattice_off_diagonal_decay_rate() {
    // H = 0: ρ(x, x') decays at (λ/2) h Σ_x (A_x − A_x')².
    let model = lattice_model(64, 32.0, 1.0, 0.5, 0.1, 20, false);
    let grid = model.grid;
    let psi = two_packets(&grid, -6.0, 6.0, 1.0, 0.5);
    let rho0 = DensityMatrix::pure(&psi.values, "position");
    let det = density_matrix_evolution_lattice(&model, &rho0, 1.0).unwrap();
    let density = smeared_mass_density(&model).unwrap();
    let (l, r) = (grid.nearest(-6.0), grid.nearest(6.0));
    let (al, ar) = (density.eigenvalues(l), density.eigenvalues(r));
    let dist: f64 = al.iter().zip(&ar).map(|(p, q)| (p - q).powi(2)).sum::<f64>() * grid.h();
    let t = model.dt * model.n_steps as f64;
    let expected = rho0.get(l, r) * (-0.5 * model.lambda * t * dist).exp();
    assert!((det.get(l, r) - expected).norm() < 1e-12 * rho0.get(l, r).norm());
    assert!((det.get(l, l) - rho0.get(l, l)).norm() < 1e-15);
    // Well-separated point masses: distance² ≈ 2 ∫ g² = 2.
    assert!((dist - 2.0).abs() < 1e-6, "{dist}");

    let ens = run_lattice_ensemble(&model, &psi, 10_000, 7, 0.0, true).unwrap();
    let est = ens.density().unwrap();
    assert!(est.max_z(&det) < 5.5);
}

#[test]
fn lattice_without_collapse_keeps_purity() {
    let model = lattice_model(64, 32.0, 1.0, 0.0, 0.05, 40, true);
    let psi = two_packets(&model.grid, -6.0, 6.0, 1.0, 0.4);
    let rho0 = DensityMatrix::pure(&psi.values, "position");
    let det = density_matrix_evolution_lattice(&model, &rho0, 1.0).unwrap();
    assert!((det.purity() - 1.0).abs() < 1e-8);
    assert!((det.trace() - 1.0).abs() < 1e-10);
}

#[test]
fn two_particle_lattice_runs_and_collapses_jointly() {
    let mut model = lattice_model(64, 32.0, 1.0, 1.0, 0.1, 100, false);
    model.masses = vec![1.0, 1.0];
    let grid = model.grid;
    let n = grid.n;
    // (|L⟩|L⟩ + |R⟩|R⟩)/√2 with point-like packets.
    let (l, r) = (grid.nearest(-8.0), grid.nearest(8.0));
    let mut values = vec![c(0.0, 0.0); n * n];
    values[l * n + l] = c(1.0, 0.0);
    values[r * n + r] = c(1.0, 0.0);
    let psi = LatticeWavefunction::new(grid, 2, 1.0, values).unwrap();
    let ens = run_lattice_ensemble(&model, &psi, 400, 3, 0.0, false).unwrap();
    assert!(ens.split_weights.iter().all(|&w| !(1e-6..=1.0 - 1e-6).contains(&w)));
    assert!(ens.below_frequency().within(0.5, 5.0));
}
