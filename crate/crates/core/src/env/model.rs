use crate::error::{Error, Result};

use super::{EnvId, EnvSpec};

/// One (state, action) arm of an enumerable model: deterministic successor
/// (None = episode ends) and expected immediate reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    pub next: Option<usize>,
    pub expected_reward: f64,
}

/// Exact expectation model of a built-in environment, used by the
/// value-iteration oracle and policy comparisons. Step caps are not part of
/// the model: it describes the uncapped MDP.
#[derive(Debug, Clone)]
pub struct MdpModel {
    pub num_states: usize,
    pub num_actions: usize,
    /// transitions[s][a]
    pub transitions: Vec<Vec<Arm>>,
    pub start_state: usize,
}

/// Enumerate the MDP behind a spec. All built-in envs are enumerable.
pub fn mdp_model(spec: &EnvSpec) -> Result<MdpModel> {
    match spec.env_id {
        EnvId::Gridworld4x4 => {
            let size = spec.params.grid_size.unwrap_or(4);
            if size < 2 {
                return Err(Error::Config(format!("grid size must be >= 2, got {size}")));
            }
            let goal = size * size - 1;
            let num_states = size * size;
            let mut transitions = Vec::with_capacity(num_states);
            for s in 0..num_states {
                let (row, col) = (s / size, s % size);
                let mut arms = Vec::with_capacity(4);
                for action in 0..4 {
                    let (mut r, mut c) = (row as isize, col as isize);
                    match action {
                        0 => r -= 1,
                        1 => r += 1,
                        2 => c += 1,
                        _ => c -= 1,
                    }
                    let (nr, nc) = if (0..size as isize).contains(&r) && (0..size as isize).contains(&c)
                    {
                        (r as usize, c as usize)
                    } else {
                        (row, col)
                    };
                    let next = nr * size + nc;
                    let arm = if s == goal {
                        // terminal state: never stepped from in practice
                        Arm { next: None, expected_reward: 0.0 }
                    } else if next == goal {
                        Arm { next: None, expected_reward: 1.0 }
                    } else {
                        Arm { next: Some(next), expected_reward: 0.0 }
                    };
                    arms.push(arm);
                }
                transitions.push(arms);
            }
            Ok(MdpModel {
                num_states,
                num_actions: 4,
                transitions,
                start_state: 0,
            })
        }
        EnvId::OverestMdp => {
            let k = spec.params.k.unwrap_or(8);
            if k == 0 {
                return Err(Error::Config("overest_mdp.k must be >= 1".into()));
            }
            let num_actions = k.max(2);
            let mean = spec.params.reward_mean.unwrap_or(-0.1);
            let a_arms: Vec<Arm> = (0..num_actions)
                .map(|action| {
                    if action == super::overest::ACTION_LEFT {
                        Arm { next: Some(super::overest::STATE_B), expected_reward: 0.0 }
                    } else {
                        Arm { next: None, expected_reward: 0.0 }
                    }
                })
                .collect();
            let b_arms = vec![Arm { next: None, expected_reward: mean }; num_actions];
            Ok(MdpModel {
                num_states: 2,
                num_actions,
                transitions: vec![a_arms, b_arms],
                start_state: super::overest::STATE_A,
            })
        }
        EnvId::Catch => {
            let g = super::catch::GRID;
            // state = (ball_row * g + ball_col) * g + paddle_col
            let num_states = g * g * g;
            let mut transitions = Vec::with_capacity(num_states);
            for s in 0..num_states {
                let paddle = s % g;
                let ball_col = (s / g) % g;
                let ball_row = s / (g * g);
                let mut arms = Vec::with_capacity(3);
                for action in 0..3usize {
                    if ball_row >= g - 1 {
                        arms.push(Arm { next: None, expected_reward: 0.0 });
                        continue;
                    }
                    let next_paddle = match action {
                        0 => paddle.saturating_sub(1),
                        2 => (paddle + 1).min(g - 1),
                        _ => paddle,
                    };
                    let next_row = ball_row + 1;
                    if next_row == g - 1 {
                        let reward = if next_paddle == ball_col { 1.0 } else { -1.0 };
                        arms.push(Arm { next: None, expected_reward: reward });
                    } else {
                        let next = (next_row * g + ball_col) * g + next_paddle;
                        arms.push(Arm { next: Some(next), expected_reward: 0.0 });
                    }
                }
                transitions.push(arms);
            }
            Ok(MdpModel {
                num_states,
                num_actions: 3,
                transitions,
                start_state: g / 2, // ball (0, 0), paddle center; ball column varies at reset
            })
        }
    }
}

impl MdpModel {
    /// Q*(s, a) = r(s,a) + gamma * V*(s') for every arm.
    pub fn q_from_values(&self, values: &[f64], gamma: f64) -> Vec<Vec<f64>> {
        self.transitions
            .iter()
            .map(|arms| {
                arms.iter()
                    .map(|arm| arm.expected_reward + gamma * arm.next.map_or(0.0, |n| values[n]))
                    .collect()
            })
            .collect()
    }

    /// Max Bellman optimality residual of `values`.
    pub fn bellman_residual(&self, values: &[f64], gamma: f64) -> f64 {
        let q = self.q_from_values(values, gamma);
        (0..self.num_states)
            .map(|s| {
                let best = q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (values[s] - best).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Exact value iteration to a fixed point (residual < 1e-12 or 100k sweeps).
pub fn optimal_state_values(spec: &EnvSpec, gamma: f64) -> Result<Vec<f64>> {
    let model = mdp_model(spec)?;
    let mut values = vec![0.0f64; model.num_states];
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for s in 0..model.num_states {
            let best = model.transitions[s]
                .iter()
                .map(|arm| arm.expected_reward + gamma * arm.next.map_or(0.0, |n| values[n]))
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - values[s]).abs());
            values[s] = best;
        }
        if delta < 1e-13 {
            break;
        }
    }
    Ok(values)
}

/// Optimal action values derived from the value-iteration fixed point.
pub fn optimal_q_values(spec: &EnvSpec, gamma: f64) -> Result<Vec<Vec<f64>>> {
    let model = mdp_model(spec)?;
    let values = optimal_state_values(spec, gamma)?;
    Ok(model.q_from_values(&values, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gridworld_start_value_matches_closed_form() {
        // shortest path from (0,0) to goal is 6 steps: V* = 0.9^5
        let spec = EnvSpec::new(EnvId::Gridworld4x4, 0);
        let values = optimal_state_values(&spec, 0.9).unwrap();
        assert!((values[0] - 0.9f64.powi(5)).abs() < 1e-12, "got {}", values[0]);
        assert!((values[0] - 0.59049).abs() < 1e-9);
    }

    #[test]
    fn gridworld_adjacent_cell_has_value_one() {
        let spec = EnvSpec::new(EnvId::Gridworld4x4, 0);
        let values = optimal_state_values(&spec, 0.9).unwrap();
        // cell (3,2) = index 14: one step east into the goal
        assert!((values[14] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gridworld_closed_form_ladder() {
        // V*(s) = gamma^(d-1) where d is the Manhattan distance to goal
        let spec = EnvSpec::new(EnvId::Gridworld4x4, 0);
        let gamma = 0.9;
        let values = optimal_state_values(&spec, gamma).unwrap();
        for s in 0..16 {
            if s == 15 {
                continue;
            }
            let (row, col) = (s / 4, s % 4);
            let d = (3 - row) + (3 - col);
            assert!(
                (values[s] - gamma.powi(d as i32 - 1)).abs() < 1e-10,
                "state {s}: {} vs {}",
                values[s],
                gamma.powi(d as i32 - 1)
            );
        }
    }

    #[test]
    fn overest_start_value_is_zero() {
        let mut spec = EnvSpec::new(EnvId::OverestMdp, 0);
        spec.params.k = Some(8);
        let values = optimal_state_values(&spec, 0.95).unwrap();
        assert!(values[0].abs() < 1e-12);
        assert!((values[1] - (-0.1)).abs() < 1e-12);
    }

    #[test]
    fn bellman_residual_below_threshold_on_all_builtins() {
        for (id, gamma) in [
            (EnvId::Gridworld4x4, 0.9),
            (EnvId::OverestMdp, 0.95),
            (EnvId::Catch, 0.99),
        ] {
            let spec = EnvSpec::new(id, 0);
            let model = mdp_model(&spec).unwrap();
            let values = optimal_state_values(&spec, gamma).unwrap();
            let residual = model.bellman_residual(&values, gamma);
            assert!(residual < 1e-10, "{id:?}: residual {residual}");
        }
    }

    #[test]
    fn catch_start_states_are_always_winnable() {
        let spec = EnvSpec::new(EnvId::Catch, 0);
        let values = optimal_state_values(&spec, 0.99).unwrap();
        let g = super::super::catch::GRID;
        for ball_col in 0..g {
            let s = ball_col * g + g / 2;
            assert!((values[s] - 0.99f64.powi(3)).abs() < 1e-12);
        }
    }
}
