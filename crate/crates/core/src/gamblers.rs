//! Fair-coin gambler's ruin with whole-quantum wealth.
//!
//! Total wealth is `K` quanta; a fraction `x` is held as `round(x K)` quanta,
//! so conservation and absorption are exact integer statements.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;

use crate::ensemble::fold_ordered;
use crate::error::{invalid, Result};
use crate::rng::RngStreamPolicy;
use crate::stats::{Estimate, MomentAccumulator};

pub const DEFAULT_MAX_TOSSES: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StakeRule {
    /// The configured stake on every toss.
    Constant,
    /// `Δ(x) = scale · min(x, 1 − x)^power`, rounded down to whole quanta
    /// and floored at one quantum. For more than two players `x` is the
    /// poorer of the pair's fractions.
    Shrinking { scale: f64, power: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    /// Wealth per player in quanta.
    pub wealth: Vec<u64>,
    /// Stake under [`StakeRule::Constant`], in quanta.
    pub stake_quanta: u64,
    pub stake_rule: StakeRule,
    pub max_tosses: u64,
}

fn to_quanta(v: f64, total: u64, what: &str) -> Result<u64> {
    let q = v * total as f64;
    let r = q.round();
    if !(r >= 0.0) || (q - r).abs() > 1e-6 {
        return Err(invalid(what, format!("{v} is not a whole number of quanta (1/{total})")));
    }
    Ok(r as u64)
}

impl GameConfig {
    /// `fractions` must sum to 1 and be multiples of `quantum`; `delta` is the
    /// constant stake, also a multiple of `quantum`.
    pub fn new(fractions: &[f64], delta: f64, quantum: f64) -> Result<Self> {
        if !(quantum > 0.0 && quantum <= 1.0) {
            return Err(invalid("quantum", "must lie in (0, 1]"));
        }
        let total = to_quanta(1.0, (1.0 / quantum).round() as u64, "quantum")?;
        if ((1.0 / quantum) - total as f64).abs() > 1e-6 {
            return Err(invalid("quantum", "must divide 1"));
        }
        let wealth = fractions
            .iter()
            .map(|&f| to_quanta(f, total, "fractions"))
            .collect::<Result<Vec<_>>>()?;
        let stake_quanta = to_quanta(delta, total, "delta")?;
        let cfg = Self {
            wealth,
            stake_quanta,
            stake_rule: StakeRule::Constant,
            max_tosses: DEFAULT_MAX_TOSSES,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stake equal to the quantum.
    pub fn unit_stake(fractions: &[f64], delta: f64) -> Result<Self> {
        Self::new(fractions, delta, delta)
    }

    pub fn with_rule(mut self, rule: StakeRule) -> Self {
        self.stake_rule = rule;
        self
    }

    pub fn total(&self) -> u64 {
        self.wealth.iter().sum()
    }

    pub fn fractions(&self) -> Vec<f64> {
        let t = self.total() as f64;
        self.wealth.iter().map(|&w| w as f64 / t).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.wealth.len() < 2 {
            return Err(invalid("fractions", "need at least two players"));
        }
        if self.total() == 0 {
            return Err(invalid("fractions", "total wealth is zero"));
        }
        if self.stake_quanta == 0 || self.stake_quanta > self.total() {
            return Err(invalid("delta", "stake must be between one quantum and the total wealth"));
        }
        if let StakeRule::Shrinking { scale, power } = self.stake_rule {
            if !(scale > 0.0 && scale.is_finite() && power >= 0.0 && power.is_finite()) {
                return Err(invalid("stake_rule", "scale must be positive and power non-negative"));
            }
        }
        Ok(())
    }

    /// Quanta exchanged between players holding `a` and `b` quanta.
    fn stake(&self, a: u64, b: u64) -> u64 {
        let poorer = a.min(b);
        let s = match self.stake_rule {
            StakeRule::Constant => self.stake_quanta,
            StakeRule::Shrinking { scale, power } => {
                let total = self.total() as f64;
                let x = poorer as f64 / total;
                ((scale * x.powf(power) * total).floor() as u64).max(1)
            }
        };
        s.min(poorer)
    }
}

/// `Δ(x)` in wealth fractions for a two-player game with `quantum` resolution.
pub fn stake_schedule_shrinking(x: f64, scale: f64, power: f64, quantum: f64) -> f64 {
    let m = x.min(1.0 - x).max(0.0);
    quantum * (scale * m.powf(power) / quantum).floor().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameResult {
    /// `None` only when the toss cap was hit.
    pub winner: Option<usize>,
    pub n_tosses: u64,
    pub final_wealth: Vec<u64>,
    /// Wealth at each requested toss index (the absorbed state is carried
    /// forward past the end of the game).
    pub wealth_trace: Option<Vec<Vec<u64>>>,
}

impl GameResult {
    pub fn finished(&self) -> bool {
        self.winner.is_some()
    }
}

fn play(config: &GameConfig, policy: &RngStreamPolicy, trace_at: &[u64]) -> Result<GameResult> {
    config.validate()?;
    if trace_at.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("trace_at", "toss indices must be non-decreasing"));
    }
    let mut rng = policy.rng();
    let mut w = config.wealth.clone();
    let mut active: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0).collect();
    let mut trace = Vec::with_capacity(trace_at.len());
    let mut next_trace = 0;
    let mut tosses = 0u64;
    loop {
        while next_trace < trace_at.len() && trace_at[next_trace] == tosses {
            trace.push(w.clone());
            next_trace += 1;
        }
        if active.len() <= 1 || tosses >= config.max_tosses {
            break;
        }
        let (i, j) = if active.len() == 2 {
            (active[0], active[1])
        } else {
            let a = rng.random_range(0..active.len());
            let mut b = rng.random_range(0..active.len() - 1);
            if b >= a {
                b += 1;
            }
            (active[a], active[b])
        };
        let s = config.stake(w[i], w[j]);
        let (payer, payee) = if rng.random::<bool>() { (i, j) } else { (j, i) };
        w[payer] -= s;
        w[payee] += s;
        tosses += 1;
        if w[payer] == 0 {
            active.retain(|&p| p != payer);
        }
    }
    while next_trace < trace_at.len() {
        trace.push(w.clone());
        next_trace += 1;
    }
    let winner = (active.len() == 1).then(|| active[0]);
    Ok(GameResult {
        winner,
        n_tosses: tosses,
        final_wealth: w,
        wealth_trace: (!trace_at.is_empty()).then_some(trace),
    })
}

/// Two-player fair-coin game until one side is ruined or the cap is hit.
pub fn play_game(config: &GameConfig, policy: &RngStreamPolicy, trace_at: &[u64]) -> Result<GameResult> {
    if config.wealth.len() != 2 {
        return Err(invalid("fractions", "play_game takes exactly two players"));
    }
    play(config, policy, trace_at)
}

/// Any number of players; each toss a uniformly random pair of solvent
/// players plays one fair-coin exchange. Ruined players leave the game.
pub fn play_multiplayer(config: &GameConfig, policy: &RngStreamPolicy, trace_at: &[u64]) -> Result<GameResult> {
    play(config, policy, trace_at)
}

/// `Q(k/K)` for the fair game with absorbing ends, from an exact rational
/// solve of `Q_i = (Q_{i−1} + Q_{i+1})/2`, `Q_0 = 0`, `Q_K = 1`.
pub fn win_probability_exact(x: &BigRational, delta: &BigRational) -> Result<BigRational> {
    if !delta.is_positive() || delta > &BigRational::one() {
        return Err(invalid("delta", "must lie in (0, 1]"));
    }
    if x.is_negative() || x > &BigRational::one() {
        return Err(invalid("x", "must lie in [0, 1]"));
    }
    let steps = BigRational::one() / delta;
    let k = x / delta;
    if !steps.is_integer() || !k.is_integer() {
        return Err(invalid("x", "x and 1 must be whole multiples of delta"));
    }
    let total: u64 = steps.to_integer().try_into().map_err(|_| invalid("delta", "too small"))?;
    let k: u64 = k.to_integer().try_into().expect("k <= total");
    let q = solve_ruin_chain(total, |_| BigRational::zero(), BigRational::one());
    Ok(q[k as usize].clone())
}

/// Expected number of tosses from `k` quanta of `K` with unit stakes,
/// from the exact rational solve of `E_i = 1 + (E_{i−1} + E_{i+1})/2`.
pub fn expected_duration_exact(k: u64, total: u64) -> Result<BigRational> {
    if total == 0 || k > total {
        return Err(invalid("k", "must lie in [0, total]"));
    }
    let e = solve_ruin_chain(total, |_| BigRational::one(), BigRational::zero());
    Ok(e[k as usize].clone())
}

/// Solves `u_i − (u_{i−1} + u_{i+1})/2 = f(i)` for `0 < i < K` with `u_0 = 0`
/// and `u_K = right` by forward elimination (Thomas algorithm).
fn solve_ruin_chain<F: Fn(u64) -> BigRational>(total: u64, f: F, right: BigRational) -> Vec<BigRational> {
    let n = total as usize;
    let mut u = vec![BigRational::zero(); n + 1];
    u[n] = right.clone();
    if n < 2 {
        return u;
    }
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    // row i: −½u_{i−1} + u_i − ½u_{i+1} = f(i)
    let mut c = vec![BigRational::zero(); n];
    let mut d = vec![BigRational::zero(); n];
    for i in 1..n {
        let mut rhs = f(i as u64);
        if i == n - 1 {
            rhs += &half * &right;
        }
        let denom = BigRational::one() + &half * &c[i - 1];
        c[i] = -&half / &denom;
        d[i] = (rhs + &half * &d[i - 1]) / &denom;
    }
    u[n - 1] = d[n - 1].clone();
    for i in (1..n - 1).rev() {
        u[i] = &d[i] - &c[i] * &u[i + 1];
    }
    u
}

#[derive(Debug, Clone)]
pub struct GameEnsemble {
    pub n_players: usize,
    pub wins: Vec<u64>,
    pub unfinished: u64,
    pub durations: MomentAccumulator,
    pub trace_at: Vec<u64>,
    /// `wealth_mean[t][i]`: fraction held by player `i` at `trace_at[t]`.
    pub wealth_mean: Vec<Vec<MomentAccumulator>>,
    /// Per game: winner (if any) and toss count.
    pub games: Vec<(Option<usize>, u64)>,
}

impl GameEnsemble {
    pub fn n_games(&self) -> u64 {
        self.games.len() as u64
    }

    pub fn win_frequency(&self, player: usize) -> Estimate {
        Estimate::proportion(self.wins[player], self.n_games())
    }

    /// Largest `|E[x_i(t)] − x_i(0)|` in standard errors over the trace.
    pub fn martingale_z(&self, initial: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.wealth_mean {
            for (i, acc) in row.iter().enumerate() {
                worst = worst.max(acc.estimate().z(initial[i]).abs());
            }
        }
        worst
    }
}

/// Plays `n_games` independent games, game `g` on stream `(master_seed, g)`.
pub fn run_games(config: &GameConfig, n_games: u64, master_seed: u64, trace_at: &[u64]) -> Result<GameEnsemble> {
    config.validate()?;
    let np = config.wealth.len();
    let total = config.total() as f64;
    let init = GameEnsemble {
        n_players: np,
        wins: vec![0; np],
        unfinished: 0,
        durations: MomentAccumulator::default(),
        trace_at: trace_at.to_vec(),
        wealth_mean: vec![vec![MomentAccumulator::default(); np]; trace_at.len()],
        games: Vec::with_capacity(n_games as usize),
    };
    let run = |g: u64| play(config, &RngStreamPolicy::new(master_seed, g), trace_at);
    let mut first_err = None;
    let ens = fold_ordered(n_games, init, run, |acc, _, res| match res {
        Ok(r) => {
            match r.winner {
                Some(w) => acc.wins[w] += 1,
                None => acc.unfinished += 1,
            }
            acc.durations.push(r.n_tosses as f64);
            if let Some(tr) = &r.wealth_trace {
                for (t, wealth) in tr.iter().enumerate() {
                    for (i, &q) in wealth.iter().enumerate() {
                        acc.wealth_mean[t][i].push(q as f64 / total);
                    }
                }
            }
            acc.games.push((r.winner, r.n_tosses));
        }
        Err(e) => {
            first_err.get_or_insert(e);
        }
    });
    match first_err {
        Some(e) => Err(e),
        None => Ok(ens),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn exact_boundaries_and_values() {
        let d = rat(1, 100);
        assert_eq!(win_probability_exact(&rat(0, 1), &d).unwrap(), rat(0, 1));
        assert_eq!(win_probability_exact(&rat(1, 1), &d).unwrap(), rat(1, 1));
        assert_eq!(win_probability_exact(&rat(3, 10), &d).unwrap(), rat(3, 10));
        for k in [2, 4, 10, 50] {
            assert_eq!(win_probability_exact(&rat(1, 2), &rat(1, k)).unwrap(), rat(1, 2));
        }
        assert!(win_probability_exact(&rat(3, 10), &rat(1, 4)).is_err());
    }

    #[test]
    fn exact_duration() {
        assert_eq!(expected_duration_exact(5, 10).unwrap(), rat(25, 1));
        assert_eq!(expected_duration_exact(3, 7).unwrap(), rat(12, 1));
        assert_eq!(expected_duration_exact(0, 7).unwrap(), rat(0, 1));
    }

    #[test]
    fn absorbed_start() {
        let cfg = GameConfig::unit_stake(&[1.0, 0.0], 0.01).unwrap();
        let r = play_game(&cfg, &RngStreamPolicy::new(0, 0), &[]).unwrap();
        assert_eq!((r.winner, r.n_tosses), (Some(0), 0));
    }

    #[test]
    fn cap_flags_unfinished() {
        let mut cfg = GameConfig::unit_stake(&[0.5, 0.5], 0.001).unwrap();
        cfg.max_tosses = 10;
        let r = play_game(&cfg, &RngStreamPolicy::new(0, 0), &[0, 5, 20]).unwrap();
        assert!(!r.finished());
        assert_eq!(r.n_tosses, 10);
        assert_eq!(r.final_wealth.iter().sum::<u64>(), 1000);
        assert_eq!(r.wealth_trace.unwrap().len(), 3);
    }

    #[test]
    fn config_rejects_off_grid_fractions() {
        assert!(GameConfig::unit_stake(&[0.305, 0.695], 0.01).is_err());
        assert!(GameConfig::new(&[0.3, 0.7], 0.015, 0.01).is_err());
        assert!(GameConfig::unit_stake(&[1.0], 0.01).is_err());
    }

    #[test]
    fn shrinking_schedule() {
        assert!((stake_schedule_shrinking(0.3, 0.2, 1.0, 0.001) - 0.06).abs() < 1e-12);
        assert_eq!(stake_schedule_shrinking(0.0005, 0.2, 1.0, 0.001), 0.001);
        assert_eq!(stake_schedule_shrinking(0.7, 0.2, 1.0, 0.001), stake_schedule_shrinking(0.3, 0.2, 1.0, 0.001));
    }
}
