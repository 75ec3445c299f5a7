//! Overestimation-bias study on the two-state noisy MDP: plain Q-learning's
//! max operator versus Double Q-learning's cross-evaluation, per seed.

use std::io::Write;

use crate::env::{make_env, overest, EnvId, EnvSpec};
use crate::error::{Error, Result};
use crate::tensor::argmax;

use super::{
    double_q_update, epsilon_greedy_action, q_learning_update, DoubleQTable, QTable, TableChoice,
    TabularConfig, TabularTransition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasAlgo {
    QLearning,
    DoubleQ,
}

impl BiasAlgo {
    pub fn as_str(&self) -> &'static str {
        match self {
            BiasAlgo::QLearning => "q-learning",
            BiasAlgo::DoubleQ => "double-q",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BiasConfig {
    pub k: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub seeds: usize,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig { k: 8, gamma: 0.95, epsilon: 0.1, episodes: 10_000, seeds: 100 }
    }
}

/// Final state of one (seed, algorithm) run.
#[derive(Debug, Clone, Copy)]
pub struct BiasRecord {
    pub seed: u64,
    pub algo: BiasAlgo,
    pub episodes: usize,
    /// The algorithm's estimate of the value of state B: max_a Q(B,a) for
    /// Q-learning; the averaged cross-evaluation for Double Q.
    pub estimate_q_b: f64,
    /// Fraction of episodes whose first action (at A) was "left".
    pub frac_left_chosen: f64,
    /// Greedy action at A after training (0 = left).
    pub greedy_at_a: usize,
}

/// Learning rate alpha(s,a) = 1 / visit_count(s,a)^0.8, counted per updated
/// table.
fn decayed_alpha(count: &mut u32) -> f64 {
    *count += 1;
    1.0 / (*count as f64).powf(0.8)
}

fn run_q_learning(seed: u64, cfg: &BiasConfig) -> Result<BiasRecord> {
    let mut spec = EnvSpec::new(EnvId::OverestMdp, seed);
    spec.params.k = Some(cfg.k);
    let mut env = make_env(&spec)?;
    let n = env.action_count();
    let mut rng = crate::rng::seeded(seed, crate::rng::Stream::Experiment, 0);
    let mut table = QTable::zeros(2, n);
    let mut visits = vec![0u32; 2 * n];
    let mut tab_cfg = TabularConfig { alpha: 1.0, gamma: cfg.gamma, epsilon: cfg.epsilon, seed };
    let mut left_count = 0usize;

    for _ in 0..cfg.episodes {
        let mut obs = env.reset();
        let mut first = true;
        loop {
            let state = obs.one_hot_index().expect("one-hot");
            let action = epsilon_greedy_action(table.row(state), cfg.epsilon, &mut rng)?;
            if first && action == overest::ACTION_LEFT {
                left_count += 1;
            }
            first = false;
            let result = env.step(action)?;
            let next_state = result.observation.one_hot_index().expect("one-hot");
            tab_cfg.alpha = decayed_alpha(&mut visits[state * n + action]);
            let t = TabularTransition {
                state,
                action,
                reward: result.reward,
                next_state,
                terminal: result.terminal,
            };
            q_learning_update(&mut table, &t, &tab_cfg)?;
            if result.terminal {
                break;
            }
            obs = result.observation;
        }
    }

    let estimate = table.max_value(overest::STATE_B) as f64;
    Ok(BiasRecord {
        seed,
        algo: BiasAlgo::QLearning,
        episodes: cfg.episodes,
        estimate_q_b: estimate,
        frac_left_chosen: left_count as f64 / cfg.episodes as f64,
        greedy_at_a: argmax(table.row(overest::STATE_A)).unwrap(),
    })
}

fn run_double_q(seed: u64, cfg: &BiasConfig) -> Result<BiasRecord> {
    let mut spec = EnvSpec::new(EnvId::OverestMdp, seed);
    spec.params.k = Some(cfg.k);
    let mut env = make_env(&spec)?;
    let n = env.action_count();
    let mut rng = crate::rng::seeded(seed, crate::rng::Stream::Experiment, 1);
    let mut table = DoubleQTable::zeros(2, n);
    let mut visits_a = vec![0u32; 2 * n];
    let mut visits_b = vec![0u32; 2 * n];
    let mut tab_cfg = TabularConfig { alpha: 1.0, gamma: cfg.gamma, epsilon: cfg.epsilon, seed };
    let mut left_count = 0usize;

    for _ in 0..cfg.episodes {
        let mut obs = env.reset();
        let mut first = true;
        loop {
            let state = obs.one_hot_index().expect("one-hot");
            // action selection is epsilon-greedy on Q^A + Q^B
            let action = epsilon_greedy_action(&table.sum_row(state), cfg.epsilon, &mut rng)?;
            if first && action == overest::ACTION_LEFT {
                left_count += 1;
            }
            first = false;
            let result = env.step(action)?;
            let next_state = result.observation.one_hot_index().expect("one-hot");
            let coin = TableChoice::flip(&mut rng);
            let counts = match coin {
                TableChoice::A => &mut visits_a,
                TableChoice::B => &mut visits_b,
            };
            tab_cfg.alpha = decayed_alpha(&mut counts[state * n + action]);
            let t = TabularTransition {
                state,
                action,
                reward: result.reward,
                next_state,
                terminal: result.terminal,
            };
            double_q_update(&mut table, &t, &tab_cfg, coin)?;
            if result.terminal {
                break;
            }
            obs = result.observation;
        }
    }

    // Double estimator of V(B): each table picks its argmax, the other
    // evaluates it; average the two for symmetry.
    let b = overest::STATE_B;
    let a_star = argmax(table.qa.row(b)).unwrap();
    let b_star = argmax(table.qb.row(b)).unwrap();
    let estimate = 0.5 * (table.qb.get(b, a_star) as f64 + table.qa.get(b, b_star) as f64);

    Ok(BiasRecord {
        seed,
        algo: BiasAlgo::DoubleQ,
        episodes: cfg.episodes,
        estimate_q_b: estimate,
        frac_left_chosen: left_count as f64 / cfg.episodes as f64,
        greedy_at_a: argmax(&table.sum_row(overest::STATE_A)).unwrap(),
    })
}

/// Run both algorithms over `seeds` seeds; two records per seed.
pub fn run_bias_experiment(cfg: &BiasConfig) -> Result<Vec<BiasRecord>> {
    if cfg.k == 0 {
        return Err(Error::Config("bias experiment requires k >= 1".into()));
    }
    let mut records = Vec::with_capacity(cfg.seeds * 2);
    for seed in 0..cfg.seeds as u64 {
        records.push(run_q_learning(seed, cfg)?);
        records.push(run_double_q(seed, cfg)?);
    }
    Ok(records)
}

pub fn write_bias_csv(records: &[BiasRecord], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "seed,algo,episodes,estimate_QBleft,frac_left_chosen")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.seed,
            r.algo.as_str(),
            r.episodes,
            crate::harness::metrics::fmt_sig(r.estimate_q_b),
            crate::harness::metrics::fmt_sig(r.frac_left_chosen),
        )?;
    }
    Ok(())
}

/// Seed-mean of the B-value estimate for one algorithm.
pub fn mean_estimate(records: &[BiasRecord], algo: BiasAlgo) -> f64 {
    let xs: Vec<f64> = records
        .iter()
        .filter(|r| r.algo == algo)
        .map(|r| r.estimate_q_b)
        .collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Fraction of seeds whose final greedy action at A equals `action`.
pub fn frac_greedy_at_a(records: &[BiasRecord], algo: BiasAlgo, action: usize) -> f64 {
    let xs: Vec<bool> = records
        .iter()
        .filter(|r| r.algo == algo)
        .map(|r| r.greedy_at_a == action)
        .collect();
    xs.iter().filter(|&&b| b).count() as f64 / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bias_separation_small_run() {
        // smaller than the acceptance run, same direction
        let cfg = BiasConfig { seeds: 20, episodes: 3000, ..Default::default() };
        let records = run_bias_experiment(&cfg).unwrap();
        assert_eq!(records.len(), 40);
        let q = mean_estimate(&records, BiasAlgo::QLearning);
        let dq = mean_estimate(&records, BiasAlgo::DoubleQ);
        assert!(q > dq, "q-learning {q} vs double {dq}");
    }
}
