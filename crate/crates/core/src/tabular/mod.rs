//! Exact-table Q-learning and Double Q-learning for enumerable-state
//! environments.

pub mod bias;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::argmax;

/// One index-space transition, the unit both update rules consume.
#[derive(Debug, Clone, Copy)]
pub struct TabularTransition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
}

/// Dense state x action value table, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f32>,
    pub num_states: usize,
    pub num_actions: usize,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QTable {
            values: vec![0.0; num_states * num_actions],
            num_states,
            num_actions,
        }
    }

    /// Optional random initialization, uniform in [-0.01, 0.01].
    pub fn random(num_states: usize, num_actions: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut table = Self::zeros(num_states, num_actions);
        for v in &mut table.values {
            *v = rng.random_range(-0.01..=0.01);
        }
        table
    }

    fn check(&self, state: usize, action: usize) -> Result<()> {
        if state >= self.num_states {
            return Err(Error::IndexOutOfRange(format!(
                "state {state} out of range 0..{}",
                self.num_states
            )));
        }
        if action >= self.num_actions {
            return Err(Error::IndexOutOfRange(format!(
                "action {action} out of range 0..{}",
                self.num_actions
            )));
        }
        Ok(())
    }

    pub fn get(&self, state: usize, action: usize) -> f32 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f32) {
        self.values[state * self.num_actions + action] = value;
    }

    /// The Q(s, .) row.
    pub fn row(&self, state: usize) -> &[f32] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::shape(
                "QTable::from_values",
                &[num_states * num_actions],
                &[values.len()],
            ));
        }
        Ok(QTable { values, num_states, num_actions })
    }

    /// Greedy action of max_a Q(s, a) per state, lowest index on ties.
    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.num_states)
            .map(|s| argmax(self.row(s)).expect("non-empty action space"))
            .collect()
    }

    pub fn max_value(&self, state: usize) -> f32 {
        self.row(state).iter().cloned().fold(f32::NEG_INFINITY, f32::max)
    }
}

/// The Q^A / Q^B pair of Double Q-learning.
#[derive(Debug, Clone)]
pub struct DoubleQTable {
    pub qa: QTable,
    pub qb: QTable,
}

impl DoubleQTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        DoubleQTable {
            qa: QTable::zeros(num_states, num_actions),
            qb: QTable::zeros(num_states, num_actions),
        }
    }

    /// Elementwise Q^A + Q^B, the quantity action selection is greedy over.
    pub fn sum_row(&self, state: usize) -> Vec<f32> {
        self.qa
            .row(state)
            .iter()
            .zip(self.qb.row(state))
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Which table an update step touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableChoice {
    A,
    B,
}

impl TableChoice {
    pub fn flip(rng: &mut ChaCha8Rng) -> Self {
        if rng.random_range(0..2u8) == 0 {
            TableChoice::A
        } else {
            TableChoice::B
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TabularConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl TabularConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must be in (0,1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0,1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must be in [0,1], got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Q(s,a) += alpha * (target - Q(s,a)); target = r + gamma * max_a' Q(s',a'),
/// or plain r on terminal transitions. Touches exactly one cell.
pub fn q_learning_update(table: &mut QTable, t: &TabularTransition, cfg: &TabularConfig) -> Result<()> {
    table.check(t.state, t.action)?;
    let target = if t.terminal {
        t.reward
    } else {
        table.check(t.next_state, 0)?;
        t.reward + cfg.gamma * table.max_value(t.next_state) as f64
    };
    let old = table.get(t.state, t.action) as f64;
    table.set(t.state, t.action, (old + cfg.alpha * (target - old)) as f32);
    Ok(())
}

/// One Double Q-learning update: the chosen table supplies the argmax at s',
/// the other table supplies the value evaluated there.
pub fn double_q_update(
    table: &mut DoubleQTable,
    t: &TabularTransition,
    cfg: &TabularConfig,
    coin: TableChoice,
) -> Result<()> {
    let (selector, evaluator) = match coin {
        TableChoice::A => (&mut table.qa, &table.qb),
        TableChoice::B => (&mut table.qb, &table.qa),
    };
    selector.check(t.state, t.action)?;
    let target = if t.terminal {
        t.reward
    } else {
        selector.check(t.next_state, 0)?;
        let best = argmax(selector.row(t.next_state)).expect("non-empty action space");
        t.reward + cfg.gamma * evaluator.get(t.next_state, best) as f64
    };
    let old = selector.get(t.state, t.action) as f64;
    selector.set(t.state, t.action, (old + cfg.alpha * (target - old)) as f32);
    Ok(())
}

/// With probability epsilon a uniform action, otherwise the argmax with
/// lowest-index tie-break.
pub fn epsilon_greedy_action<S: Scalar>(
    q_values: &[S],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    if q_values.is_empty() {
        return Err(Error::Usage("epsilon_greedy_action on empty value vector".into()));
    }
    if rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..q_values.len()))
    } else {
        Ok(argmax(q_values).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Stream};

    fn cfg(alpha: f64, gamma: f64) -> TabularConfig {
        TabularConfig { alpha, gamma, epsilon: 0.1, seed: 0 }
    }

    #[test]
    fn q_update_terminal_hand_value() {
        let mut q = QTable::zeros(3, 2);
        let t = TabularTransition { state: 1, action: 0, reward: 1.0, next_state: 0, terminal: true };
        q_learning_update(&mut q, &t, &cfg(0.5, 0.9)).unwrap();
        assert_eq!(q.get(1, 0), 0.5);
        // only that cell changed
        assert_eq!(q.values().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn q_update_bootstraps_from_next_max() {
        let mut q = QTable::zeros(3, 2);
        q.set(2, 1, 2.0);
        let t = TabularTransition { state: 0, action: 1, reward: 1.0, next_state: 2, terminal: false };
        q_learning_update(&mut q, &t, &cfg(0.5, 0.9)).unwrap();
        assert!((q.get(0, 1) - 1.4).abs() < 1e-7);
    }

    #[test]
    fn zero_alpha_rejected_by_validate_but_inert_in_update() {
        assert!(cfg(0.0, 0.9).validate().is_err());
        let mut q = QTable::zeros(2, 2);
        q.set(0, 0, 0.75);
        let before = q.clone();
        let t = TabularTransition { state: 0, action: 0, reward: 5.0, next_state: 1, terminal: false };
        q_learning_update(&mut q, &t, &cfg(0.0, 0.9)).unwrap();
        assert_eq!(q, before);
    }

    #[test]
    fn double_q_uses_cross_evaluation() {
        // selector argmax from Q^A, value from Q^B at that argmax (not Q^B's max)
        let mut table = DoubleQTable::zeros(3, 2);
        table.qa.set(2, 0, 5.0);
        table.qa.set(2, 1, 0.0);
        table.qb.set(2, 0, 1.0);
        table.qb.set(2, 1, 3.0);
        let t = TabularTransition { state: 0, action: 0, reward: 1.0, next_state: 2, terminal: false };
        double_q_update(&mut table, &t, &cfg(1.0, 0.9), TableChoice::A).unwrap();
        assert!((table.qa.get(0, 0) - 1.9).abs() < 1e-6);
        // Q^B untouched
        assert_eq!(table.qb.get(0, 0), 0.0);
    }

    #[test]
    fn double_q_update_b_is_symmetric() {
        let mut table = DoubleQTable::zeros(3, 2);
        table.qb.set(2, 0, 5.0);
        table.qb.set(2, 1, 0.0);
        table.qa.set(2, 0, 1.0);
        table.qa.set(2, 1, 3.0);
        let t = TabularTransition { state: 0, action: 0, reward: 1.0, next_state: 2, terminal: false };
        double_q_update(&mut table, &t, &cfg(1.0, 0.9), TableChoice::B).unwrap();
        assert!((table.qb.get(0, 0) - 1.9).abs() < 1e-6);
        assert_eq!(table.qa.get(0, 0), 0.0);
    }

    #[test]
    fn double_q_terminal_ignores_other_table() {
        let mut table = DoubleQTable::zeros(2, 2);
        table.qb.set(1, 0, 99.0);
        let t = TabularTransition { state: 0, action: 1, reward: -0.1, next_state: 1, terminal: true };
        double_q_update(&mut table, &t, &cfg(1.0, 0.9), TableChoice::A).unwrap();
        assert!((table.qa.get(0, 1) - (-0.1)).abs() < 1e-7);
    }

    #[test]
    fn single_entry_locality() {
        let mut table = DoubleQTable::zeros(4, 3);
        let t = TabularTransition { state: 2, action: 1, reward: 0.5, next_state: 3, terminal: false };
        double_q_update(&mut table, &t, &cfg(0.3, 0.9), TableChoice::B).unwrap();
        let changed_a = table.qa.values().iter().filter(|&&v| v != 0.0).count();
        let changed_b = table.qb.values().iter().filter(|&&v| v != 0.0).count();
        assert_eq!((changed_a, changed_b), (0, 1));
    }

    #[test]
    fn greedy_is_pure_argmax_with_low_tie_break() {
        let mut rng = seeded(0, Stream::Worker, 0);
        assert_eq!(epsilon_greedy_action(&[1.0f64, 3.0, 2.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(epsilon_greedy_action(&[2.0f64, 2.0, 1.0], 0.0, &mut rng).unwrap(), 0);
        assert!(epsilon_greedy_action::<f64>(&[], 0.0, &mut rng).is_err());
    }

    #[test]
    fn full_exploration_is_roughly_uniform() {
        // spec bound: 3 actions, 30000 draws, each frequency in [0.32, 0.347]
        let mut rng = seeded(7, Stream::Worker, 0);
        let mut counts = [0usize; 3];
        let draws = 30_000;
        for _ in 0..draws {
            counts[epsilon_greedy_action(&[0.0f64, 0.0, 0.0], 1.0, &mut rng).unwrap()] += 1;
        }
        let mut chi2 = 0.0;
        for &c in &counts {
            let f = c as f64 / draws as f64;
            assert!((0.32..=0.347).contains(&f), "frequency {f}");
            let expected = draws as f64 / 3.0;
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // chi-square critical value at p = 0.01, df = 2
        assert!(chi2 < 9.21, "chi2 {chi2}");
    }

    #[test]
    fn greedy_policy_tie_breaks_to_action_zero() {
        let q = QTable::zeros(3, 2);
        assert_eq!(q.greedy_policy(), vec![0, 0, 0]);
        let mut q = QTable::zeros(1, 2);
        q.set(0, 1, 1.0);
        assert_eq!(q.greedy_policy(), vec![1]);
    }

    #[test]
    fn out_of_range_indices_error() {
        let mut q = QTable::zeros(2, 2);
        let t = TabularTransition { state: 5, action: 0, reward: 0.0, next_state: 0, terminal: true };
        assert!(q_learning_update(&mut q, &t, &cfg(0.1, 0.9)).is_err());
    }
}
