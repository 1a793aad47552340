//! Spontaneous-localization hits on lattice wave functions.
//!
//! Units: `ħ = 1`, lengths usually in units of the hit width `a`, times in
//! units of `1/λ`. A hit on particle `n` centred at `z` multiplies the wave
//! function by `exp(−(x_n − z)²/(2a²))` and renormalizes; the centre is drawn
//! with probability proportional to the squared norm of the multiplied state.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::ensemble::map_ordered;
use crate::error::{invalid, require_positive, Error, Result};
use crate::lattice::{circular_convolve, fft_cols, fft_rows, periodic_kernel, Grid1};
use crate::rng::RngStreamPolicy;
use crate::stats::{Estimate, MomentAccumulator};

/// Suggested physical hit width, cm.
pub const PHYSICAL_WIDTH_CM: f64 = 1e-5;
/// Suggested physical per-particle hit rate, 1/s.
pub const PHYSICAL_RATE_PER_S: f64 = 1e-16;

/// Post-hit norms below this are treated as a hit where the state vanishes.
pub const DEGENERATE_NORM: f64 = 1e-30;

/// Spectral weight allowed in the outer quarter of the band before an
/// energy evaluation is refused.
pub const ALIASING_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlConfig {
    pub lambda_hit: f64,
    pub width_a: f64,
    /// Physical size of one simulation length unit, cm (metadata only).
    pub length_unit_cm: f64,
    /// Physical size of one simulation time unit, s (metadata only).
    pub time_unit_s: f64,
}

impl SlConfig {
    /// Simulation units `a = 1`, `λ = 1`, mapped to the suggested physical scales.
    pub fn natural() -> Self {
        Self {
            lambda_hit: 1.0,
            width_a: 1.0,
            length_unit_cm: PHYSICAL_WIDTH_CM,
            time_unit_s: 1.0 / PHYSICAL_RATE_PER_S,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("lambda_hit", self.lambda_hit)?;
        require_positive("width_a", self.width_a)
    }
}

/// One or two particles on a shared periodic grid. Two-particle values are
/// row-major with particle 0 on the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeWavefunction {
    pub grid: Grid1,
    pub n_particles: usize,
    pub mass: f64,
    pub values: Vec<Complex64>,
}

/// `exp(−d²/(4s²) + i k x)` on the grid, with `d` the periodic distance to
/// `center`; `|ψ|²` then has standard deviation `s`.
pub fn gaussian_packet(grid: &Grid1, center: f64, s: f64, momentum: f64) -> Vec<Complex64> {
    (0..grid.n)
        .map(|i| {
            let x = grid.x(i);
            let d = grid.displacement(x, center);
            Complex64::from_polar((-d * d / (4.0 * s * s)).exp(), momentum * d)
        })
        .collect()
}

impl LatticeWavefunction {
    /// Normalizes `values` and checks their shape.
    pub fn new(grid: Grid1, n_particles: usize, mass: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(1..=2).contains(&n_particles) {
            return Err(invalid("n_particles", "only one or two particles are supported"));
        }
        require_positive("mass", mass)?;
        if values.len() != grid.n.pow(n_particles as u32) {
            return Err(invalid("values", "length does not match the grid"));
        }
        let mut psi = Self {
            grid,
            n_particles,
            mass,
            values,
        };
        let norm = psi.norm_sq();
        if !(norm > DEGENERATE_NORM && norm.is_finite()) {
            return Err(Error::Degenerate(format!("state norm {norm:e}")));
        }
        psi.scale(norm.sqrt().recip());
        Ok(psi)
    }

    /// Product state `φ_0(x_0) φ_1(x_1)`.
    pub fn product(grid: Grid1, mass: f64, phi0: &[Complex64], phi1: &[Complex64]) -> Result<Self> {
        let n = grid.n;
        let mut v = vec![Complex64::default(); n * n];
        for i in 0..n {
            for j in 0..n {
                v[i * n + j] = phi0[i] * phi1[j];
            }
        }
        Self::new(grid, 2, mass, v)
    }

    fn cell(&self) -> f64 {
        self.grid.h().powi(self.n_particles as i32)
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell()
    }

    fn scale(&mut self, s: f64) {
        for z in &mut self.values {
            *z *= s;
        }
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let norm = self.norm_sq();
        if !(norm > DEGENERATE_NORM) {
            return Err(Error::Degenerate(format!("state norm {norm:e}")));
        }
        self.scale(norm.sqrt().recip());
        Ok(norm)
    }

    /// Marginal position density of `particle`, normalized so `Σ ρ h = 1`
    /// for a normalized state.
    pub fn marginal(&self, particle: usize) -> Vec<f64> {
        let n = self.grid.n;
        let h = self.grid.h();
        if self.n_particles == 1 {
            return self.values.iter().map(|z| z.norm_sqr()).collect();
        }
        let mut rho = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let w = self.values[i * n + j].norm_sqr() * h;
                if particle == 0 {
                    rho[i] += w;
                } else {
                    rho[j] += w;
                }
            }
        }
        rho
    }

    /// Probability that `particle` lies in `{x < split}`.
    pub fn weight_below(&self, particle: usize, split: f64) -> f64 {
        let h = self.grid.h();
        self.marginal(particle)
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.x(*i) < split)
            .map(|(_, r)| r * h)
            .sum()
    }

    fn to_spectral(&self) -> Vec<Complex64> {
        let n = self.grid.n;
        let mut f = self.values.clone();
        if self.n_particles == 1 {
            fft_rows(&mut f, n, false);
        } else {
            for row in f.chunks_mut(n) {
                fft_rows(row, n, false);
            }
            fft_cols(&mut f, n, false);
        }
        f
    }

    fn from_spectral(&mut self, mut f: Vec<Complex64>) {
        let n = self.grid.n;
        if self.n_particles == 1 {
            fft_rows(&mut f, n, true);
        } else {
            for row in f.chunks_mut(n) {
                fft_rows(row, n, true);
            }
            fft_cols(&mut f, n, true);
        }
        let s = 1.0 / f.len() as f64;
        for (v, z) in self.values.iter_mut().zip(f) {
            *v = z * s;
        }
    }

    fn k_squared(&self) -> Vec<f64> {
        let k = self.grid.wavenumbers();
        if self.n_particles == 1 {
            k.iter().map(|v| v * v).collect()
        } else {
            k.iter().flat_map(|a| k.iter().map(move |b| a * a + b * b)).collect()
        }
    }

    /// `⟨p²/2m⟩`, summed over particles, evaluated spectrally.
    pub fn kinetic_energy(&self) -> Result<f64> {
        let f = self.to_spectral();
        let k = self.grid.wavenumbers();
        let edge = 0.75 * self.grid.k_max();
        let n = self.grid.n;
        let mut total = 0.0;
        let mut outer = 0.0;
        let mut t = 0.0;
        for (idx, z) in f.iter().enumerate() {
            let w = z.norm_sqr();
            let (ka, kb) = if self.n_particles == 1 { (k[idx], 0.0) } else { (k[idx / n], k[idx % n]) };
            total += w;
            t += w * (ka * ka + kb * kb);
            if ka.abs() > edge || kb.abs() > edge {
                outer += w;
            }
        }
        let frac = outer / total;
        if frac > ALIASING_LIMIT {
            return Err(Error::Aliasing { weight: frac });
        }
        Ok(t / (2.0 * self.mass * total))
    }

    /// Strang split-step propagation for `n_steps` of `dt` under the
    /// configuration-space potential `potential` (same layout as `values`);
    /// with no potential the kinetic propagator is applied exactly.
    pub fn evolve(&mut self, potential: Option<&[f64]>, dt: f64, n_steps: usize) -> Result<()> {
        require_positive("dt", dt)?;
        let k2 = self.k_squared();
        let m = self.mass;
        let Some(v) = potential else {
            let t = dt * n_steps as f64;
            let mut f = self.to_spectral();
            for (z, k) in f.iter_mut().zip(&k2) {
                *z *= Complex64::from_polar(1.0, -k * t / (2.0 * m));
            }
            self.from_spectral(f);
            return Ok(());
        };
        if v.len() != self.values.len() {
            return Err(invalid("potential", "length does not match the state"));
        }
        let half: Vec<Complex64> = v.iter().map(|&u| Complex64::from_polar(1.0, -0.5 * dt * u)).collect();
        let kin: Vec<Complex64> = k2.iter().map(|&k| Complex64::from_polar(1.0, -k * dt / (2.0 * m))).collect();
        for _ in 0..n_steps {
            for (z, p) in self.values.iter_mut().zip(&half) {
                *z *= p;
            }
            let mut f = self.to_spectral();
            for (z, p) in f.iter_mut().zip(&kin) {
                *z *= p;
            }
            self.from_spectral(f);
            for (z, p) in self.values.iter_mut().zip(&half) {
                *z *= p;
            }
        }
        Ok(())
    }

    /// `⟨ψ|φ⟩` for states on the same grid.
    pub fn overlap(&self, other: &Self) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.cell()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitEvent {
    pub time: f64,
    pub particle: usize,
    pub center: f64,
}

/// Merged, time-sorted hit times of `n_particles` independent Poisson
/// processes of rate `lambda_hit` on `[0, t_final)`.
pub fn sample_hit_times(n_particles: usize, lambda_hit: f64, t_final: f64, policy: &RngStreamPolicy) -> Result<Vec<(f64, usize)>> {
    require_positive("lambda_hit", lambda_hit)?;
    require_positive("t_final", t_final)?;
    let exp = Exp::new(lambda_hit).map_err(|e| invalid("lambda_hit", e.to_string()))?;
    let mut out = Vec::new();
    for p in 0..n_particles {
        let mut rng = policy.derive(p as u64).rng();
        let mut t = exp.sample(&mut rng);
        while t < t_final {
            out.push((t, p));
            t += exp.sample(&mut rng);
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(out)
}

/// Discrete distribution of hit centres over grid nodes:
/// `p_j ∝ Σ_i ρ(x_i) h exp(−(x_i − x_j)²/a²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HitCenterDistribution {
    pub grid: Grid1,
    pub probabilities: Vec<f64>,
    cdf: Vec<f64>,
}

impl HitCenterDistribution {
    pub fn new(psi: &LatticeWavefunction, particle: usize, width_a: f64) -> Result<Self> {
        require_positive("width_a", width_a)?;
        if particle >= psi.n_particles {
            return Err(invalid("particle", "index out of range"));
        }
        let grid = psi.grid;
        let rho = psi.marginal(particle);
        let kernel = periodic_kernel(&grid, |d| (-d * d / (width_a * width_a)).exp());
        let mut p: Vec<f64> = circular_convolve(&rho, &kernel).into_iter().map(|v| v.max(0.0)).collect();
        let total: f64 = p.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("hit-centre density vanishes".into()));
        }
        for v in &mut p {
            *v /= total;
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = p
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self {
            grid,
            probabilities: p,
            cdf,
        })
    }

    /// Node index drawn by inverse CDF.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.grid.n - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.grid.x(self.sample_index(rng))
    }
}

pub fn sample_hit_center(psi: &LatticeWavefunction, particle: usize, width_a: f64, policy: &RngStreamPolicy) -> Result<f64> {
    let dist = HitCenterDistribution::new(psi, particle, width_a)?;
    Ok(dist.sample(&mut policy.rng()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitResult {
    pub psi: LatticeWavefunction,
    /// Squared norm after multiplication, before renormalization.
    pub norm_before: f64,
}

pub fn apply_hit(psi: &LatticeWavefunction, event: &HitEvent, width_a: f64) -> Result<HitResult> {
    require_positive("width_a", width_a)?;
    if event.particle >= psi.n_particles {
        return Err(invalid("particle", "index out of range"));
    }
    let grid = psi.grid;
    let g: Vec<f64> = (0..grid.n)
        .map(|i| {
            let d = grid.displacement(grid.x(i), event.center);
            (-d * d / (2.0 * width_a * width_a)).exp()
        })
        .collect();
    let mut out = psi.clone();
    let n = grid.n;
    if psi.n_particles == 1 {
        for (z, f) in out.values.iter_mut().zip(&g) {
            *z *= f;
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                out.values[i * n + j] *= if event.particle == 0 { g[i] } else { g[j] };
            }
        }
    }
    let norm_before = out.norm_sq();
    if norm_before < DEGENERATE_NORM {
        return Err(Error::Degenerate(format!("post-hit norm {norm_before:e} at z = {}", event.center)));
    }
    out.normalize()?;
    Ok(HitResult { psi: out, norm_before })
}

pub fn energy_gain(before: &LatticeWavefunction, after: &LatticeWavefunction) -> Result<f64> {
    Ok(after.kinetic_energy()? - before.kinetic_energy()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitRun {
    pub events: Vec<HitEvent>,
    pub energy_gains: Vec<f64>,
    pub psi: LatticeWavefunction,
}

/// Applies every hit in `[0, t_final)` in time order, with free evolution
/// between hits when `free_evolution` is set.
pub fn run_hits(psi: &LatticeWavefunction, config: &SlConfig, t_final: f64, free_evolution: bool, policy: &RngStreamPolicy) -> Result<HitRun> {
    config.validate()?;
    let times = sample_hit_times(psi.n_particles, config.lambda_hit, t_final, policy)?;
    let mut rng = policy.derive(u64::MAX).rng();
    let mut state = psi.clone();
    let mut t = 0.0;
    let mut events = Vec::with_capacity(times.len());
    let mut gains = Vec::with_capacity(times.len());
    for (time, particle) in times {
        if free_evolution && time > t {
            state.evolve(None, time - t, 1)?;
        }
        t = time;
        let center = HitCenterDistribution::new(&state, particle, config.width_a)?.sample(&mut rng);
        let event = HitEvent { time, particle, center };
        let hit = apply_hit(&state, &event, config.width_a)?;
        gains.push(energy_gain(&state, &hit.psi)?);
        state = hit.psi;
        events.push(event);
    }
    if free_evolution && t_final > t {
        state.evolve(None, t_final - t, 1)?;
    }
    Ok(HitRun {
        events,
        energy_gains: gains,
        psi: state,
    })
}

/// Collapse threshold on branch weight.
pub const BRANCH_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct EntangledCollapse {
    /// Mean first time a branch weight exceeds `1 − ε`.
    pub mean_time: Estimate,
    /// Fraction of collapsed runs that selected the `x_0 < split` branch.
    pub below_frequency: Estimate,
    pub uncollapsed: u64,
    /// Per run: collapse time and whether the lower branch was chosen.
    pub runs: Vec<Option<(f64, bool)>>,
}

impl EntangledCollapse {
    pub fn rate(&self) -> f64 {
        1.0 / self.mean_time.mean
    }
}

/// Runs `n_runs` hit sequences on `psi` (no free evolution) and records when
/// particle 0's branch weight in `{x < split}` or its complement first
/// exceeds `1 − ε`. Run `r` uses stream `(master_seed, r)`; runs still
/// uncollapsed at `t_cap` are counted separately.
pub fn entangled_collapse_rate(
    psi: &LatticeWavefunction,
    config: &SlConfig,
    split: f64,
    n_runs: u64,
    master_seed: u64,
    t_cap: f64,
) -> Result<EntangledCollapse> {
    config.validate()?;
    let one = |r: u64| -> Result<Option<(f64, bool)>> {
        let policy = RngStreamPolicy::new(master_seed, r);
        let times = sample_hit_times(psi.n_particles, config.lambda_hit, t_cap, &policy)?;
        let mut rng = policy.derive(u64::MAX).rng();
        let mut state = psi.clone();
        for (time, particle) in times {
            let center = HitCenterDistribution::new(&state, particle, config.width_a)?.sample(&mut rng);
            state = apply_hit(&state, &HitEvent { time, particle, center }, config.width_a)?.psi;
            let w = state.weight_below(0, split);
            if w >= 1.0 - BRANCH_EPSILON || w <= BRANCH_EPSILON {
                return Ok(Some((time, w > 0.5)));
            }
        }
        Ok(None)
    };
    let results = map_ordered(n_runs, one);
    let mut times = MomentAccumulator::default();
    let mut below = 0u64;
    let mut uncollapsed = 0u64;
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        let r = r?;
        match r {
            Some((t, b)) => {
                times.push(t);
                below += b as u64;
            }
            None => uncollapsed += 1,
        }
        runs.push(r);
    }
    Ok(EntangledCollapse {
        mean_time: times.estimate(),
        below_frequency: Estimate::proportion(below, times.count()),
        uncollapsed,
        runs,
    })
}
