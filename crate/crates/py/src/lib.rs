//! Python bindings for the collapse-model simulations.

use collapse_core::csl::{self, CommutingCslModel, NoiseScheme};
use collapse_core::discrete::{check_collapse_conditions, run_collapse_ensemble, CollapseConfig, CollapseModel, EnsembleOptions};
use collapse_core::gamblers::{run_games, win_probability_exact, GameConfig};
use collapse_core::hidden::{outcome_frequency_mc, outcome_probability_quadrature, SpinDirection, DEFAULT_RESOLUTION};
use collapse_core::lattice::Grid1;
use collapse_core::sl::{entangled_collapse_rate, gaussian_packet, LatticeWavefunction, SlConfig};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: collapse_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Monte Carlo mean with its standard error.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct Estimate {
    #[pyo3(get)]
    mean: f64,
    #[pyo3(get)]
    stderr: f64,
}

#[pymethods]
impl Estimate {
    fn within(&self, target: f64, k_sigma: f64) -> bool {
        collapse_core::Estimate::new(self.mean, self.stderr).within(target, k_sigma)
    }

    fn __repr__(&self) -> String {
        format!("Estimate(mean={}, stderr={})", self.mean, self.stderr)
    }
}

impl From<collapse_core::Estimate> for Estimate {
    fn from(e: collapse_core::Estimate) -> Self {
        Self { mean: e.mean, stderr: e.stderr }
    }
}

/// Outcome statistics of the N-state collapse ensemble.
#[pyclass(frozen)]
struct CollapseRun {
    #[pyo3(get)]
    times: Vec<f64>,
    /// `mean[t][n]` of `x_n`.
    #[pyo3(get)]
    mean: Vec<Vec<f64>>,
    #[pyo3(get)]
    frequencies: Vec<Estimate>,
    #[pyo3(get)]
    aborted: u64,
    #[pyo3(get)]
    worst_martingale_z: f64,
}

/// Runs the amplitude SDE (`model="sde"`) or the random-phase equation
/// (`model="random-phase"`) from probabilities `x0`.
#[pyfunction]
#[pyo3(signature = (x0, coupling=1.0, sigma=1.0, dt=2e-3, n_steps=2500, n_trajectories=10_000, seed=1, record_stride=125, model="sde"))]
#[allow(clippy::too_many_arguments)]
fn collapse_ensemble(
    py: Python<'_>,
    x0: Vec<f64>,
    coupling: f64,
    sigma: f64,
    dt: f64,
    n_steps: usize,
    n_trajectories: u64,
    seed: u64,
    record_stride: usize,
    model: &str,
) -> PyResult<CollapseRun> {
    let kind = match model {
        "sde" => CollapseModel::AmplitudeSde,
        "random-phase" => CollapseModel::RandomPhase,
        other => return Err(PyValueError::new_err(format!("unknown model {other:?}"))),
    };
    let cfg = CollapseConfig::uniform(x0.len(), coupling, sigma, dt, n_steps);
    let opts = EnsembleOptions {
        n_trajectories,
        master_seed: seed,
        record_stride,
        n_bins: 20,
        keep_samples: false,
    };
    let ens = py.detach(|| run_collapse_ensemble(kind, &cfg, &x0, &opts)).map_err(err)?;
    let d = x0.len();
    let times = ens.stats.times().to_vec();
    let mean = (0..times.len()).map(|k| (0..d).map(|n| ens.stats.mean(k, n).mean).collect()).collect();
    Ok(CollapseRun {
        frequencies: (0..d).map(|n| ens.outcome_frequency(n).into()).collect(),
        worst_martingale_z: check_collapse_conditions(&ens.stats).worst_martingale_z(),
        aborted: ens.aborted,
        times,
        mean,
    })
}

/// Exact win probability for a player holding `k` of `total` quanta with
/// unit stakes, as `(numerator, denominator)`.
#[pyfunction]
fn gamblers_win_probability(k: u64, total: u64) -> PyResult<(String, String)> {
    if total == 0 {
        return Err(PyValueError::new_err("total must be positive"));
    }
    let x = BigRational::new(BigInt::from(k), BigInt::from(total));
    let delta = BigRational::new(BigInt::from(1), BigInt::from(total));
    let q = win_probability_exact(&x, &delta).map_err(err)?;
    Ok((q.numer().to_string(), q.denom().to_string()))
}

/// Simulated win frequency of each player.
#[pyfunction]
#[pyo3(signature = (fractions, delta, n_games=10_000, seed=1))]
fn gamblers_simulate(py: Python<'_>, fractions: Vec<f64>, delta: f64, n_games: u64, seed: u64) -> PyResult<Vec<Estimate>> {
    let cfg = GameConfig::unit_stake(&fractions, delta).map_err(err)?;
    let ens = py.detach(|| run_games(&cfg, n_games, seed, &[])).map_err(err)?;
    Ok((0..fractions.len()).map(|i| ens.win_frequency(i).into()).collect())
}

/// Continuous localization with a collapse operator diagonal in the working basis.
#[pyclass(frozen)]
struct CommutingCsl {
    model: CommutingCslModel,
}

#[pymethods]
impl CommutingCsl {
    #[new]
    #[pyo3(signature = (eigenvalues, lam, dt, n_steps))]
    fn new(eigenvalues: Vec<f64>, lam: f64, dt: f64, n_steps: usize) -> PyResult<Self> {
        let model = CommutingCslModel {
            eigenvalues,
            lambda: lam,
            dt,
            n_steps,
        };
        model.validate().map_err(err)?;
        Ok(Self { model })
    }

    /// Closed-form ensemble density matrix at time `t`, row-major.
    fn density_matrix(&self, amplitudes: Vec<Complex64>, t: f64) -> PyResult<Vec<Complex64>> {
        Ok(csl::density_matrix_analytic(&self.model, &amplitudes, t).map_err(err)?.entries)
    }

    /// Trajectory ensemble: recorded times, the ensemble `ρ_01` at each of
    /// them with its standard error, and the dominant branch per trajectory.
    #[pyo3(signature = (amplitudes, n_trajectories=10_000, seed=1, record_stride=1))]
    fn ensemble<'py>(
        &self,
        py: Python<'py>,
        amplitudes: Vec<Complex64>,
        n_trajectories: u64,
        seed: u64,
        record_stride: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ens = py
            .detach(|| csl::run_commuting_ensemble(&self.model, &amplitudes, NoiseScheme::Sequential, n_trajectories, seed, record_stride, 20))
            .map_err(err)?;
        let times = ens.stats.times().to_vec();
        let mut off = Vec::with_capacity(times.len());
        let mut se = Vec::with_capacity(times.len());
        for k in 0..times.len() {
            let e = ens.density_at(k);
            off.push(e.mean.get(0, 1));
            se.push(e.stderr_re[1].hypot(e.stderr_im[1]));
        }
        let out = PyDict::new(py);
        out.set_item("times", times)?;
        out.set_item("rho01", off)?;
        out.set_item("rho01_stderr", se)?;
        out.set_item("dominant", ens.outcomes.iter().map(|o| o.dominant).collect::<Vec<_>>())?;
        Ok(out)
    }

    /// Operator-norm error of the Gauss–Hermite unitary reconstruction of
    /// one step's weight operator for a Hermitian `operator` (row-major).
    #[staticmethod]
    fn unitary_check(operator: Vec<Complex64>, dim: usize, lam: f64, dt: f64, w: f64, order: usize) -> PyResult<f64> {
        csl::unitary_representation_check(&operator, dim, lam, dt, w, order).map_err(err)
    }
}

/// Mean time for a two-particle entangled two-packet state to collapse,
/// on a periodic grid, and the fraction selecting the left branch.
#[pyfunction]
#[pyo3(signature = (left_weight=0.3, separation=20.0, sites=320, extent=40.0, n_runs=2000, seed=1))]
fn sl_entangled_collapse(
    py: Python<'_>,
    left_weight: f64,
    separation: f64,
    sites: usize,
    extent: f64,
    n_runs: u64,
    seed: u64,
) -> PyResult<(Estimate, Estimate)> {
    let g = Grid1::new(sites, extent).map_err(err)?;
    let l = gaussian_packet(&g, -separation / 2.0, 0.5, 0.0);
    let r = gaussian_packet(&g, separation / 2.0, 0.5, 0.0);
    let n = g.n;
    let mut v = vec![Complex64::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = left_weight.sqrt() * l[i] * l[j] + (1.0 - left_weight).sqrt() * r[i] * r[j];
        }
    }
    let psi = LatticeWavefunction::new(g, 2, 1.0, v).map_err(err)?;
    let res = py
        .detach(|| entangled_collapse_rate(&psi, &SlConfig::natural(), 0.0, n_runs, seed, 50.0))
        .map_err(err)?;
    Ok((res.mean_time.into(), res.below_frequency.into()))
}

/// Probability of "up" along an axis at angle `theta` from the spin, by quadrature.
#[pyfunction]
#[pyo3(signature = (theta, polar_nodes=DEFAULT_RESOLUTION.0, azimuth_nodes=DEFAULT_RESOLUTION.1))]
fn hidden_up_probability(theta: f64, polar_nodes: usize, azimuth_nodes: usize) -> PyResult<f64> {
    let n = SpinDirection::from_angles(0.0, 0.0);
    let m = SpinDirection::from_angles(theta, 0.0);
    outcome_probability_quadrature(&n, &m, (polar_nodes, azimuth_nodes)).map_err(err)
}

/// Monte Carlo frequency of "up" along an axis at angle `theta`.
#[pyfunction]
#[pyo3(signature = (theta, n_samples=20_000, seed=1))]
fn hidden_up_frequency(py: Python<'_>, theta: f64, n_samples: u64, seed: u64) -> Estimate {
    let n = SpinDirection::from_angles(0.0, 0.0);
    let m = SpinDirection::from_angles(theta, 0.0);
    py.detach(|| outcome_frequency_mc(&n, &m, n_samples, seed)).into()
}

#[pymodule]
fn collapse_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Estimate>()?;
    m.add_class::<CollapseRun>()?;
    m.add_class::<CommutingCsl>()?;
    m.add_function(wrap_pyfunction!(collapse_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(gamblers_win_probability, m)?)?;
    m.add_function(wrap_pyfunction!(gamblers_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sl_entangled_collapse, m)?)?;
    m.add_function(wrap_pyfunction!(hidden_up_probability, m)?)?;
    m.add_function(wrap_pyfunction!(hidden_up_frequency, m)?)?;
    Ok(())
}
