use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{check_action, ByteReader, ByteWriter, Environment, EnvSpec, Observation, Phase, StepResult};

pub const ACTION_NORTH: usize = 0;
pub const ACTION_SOUTH: usize = 1;
pub const ACTION_EAST: usize = 2;
pub const ACTION_WEST: usize = 3;

/// Deterministic grid: start at (0,0), +1 on entering the goal at
/// (size-1, size-1), off-grid moves are no-ops, reward 0 otherwise. The
/// episode terminates with reward 0 when the step cap is hit.
pub struct Gridworld {
    size: usize,
    step_cap: usize,
    row: usize,
    col: usize,
    steps: usize,
    phase: Phase,
}

impl Gridworld {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        let size = spec.params.grid_size.unwrap_or(4);
        if size < 2 {
            return Err(Error::Config(format!("grid size must be >= 2, got {size}")));
        }
        let step_cap = spec.params.step_cap.unwrap_or(100);
        if step_cap == 0 {
            return Err(Error::Config("step cap must be >= 1".into()));
        }
        Ok(Gridworld {
            size,
            step_cap,
            row: 0,
            col: 0,
            steps: 0,
            phase: Phase::PreReset,
        })
    }

    fn observe(&self) -> Observation {
        let mut data = vec![0.0f32; self.size * self.size];
        data[self.row * self.size + self.col] = 1.0;
        Observation::new(Tensor::from_vec(&[self.size * self.size], data).unwrap())
    }

    pub fn state_index(&self) -> usize {
        self.row * self.size + self.col
    }
}

impl Environment for Gridworld {
    fn observation_shape(&self) -> Vec<usize> {
        vec![self.size * self.size]
    }

    fn action_count(&self) -> usize {
        4
    }

    fn reset(&mut self) -> Observation {
        self.row = 0;
        self.col = 0;
        self.steps = 0;
        self.phase = Phase::Running;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.phase.check_steppable()?;
        check_action(action, 4)?;
        let (mut row, mut col) = (self.row as isize, self.col as isize);
        match action {
            ACTION_NORTH => row -= 1,
            ACTION_SOUTH => row += 1,
            ACTION_EAST => col += 1,
            ACTION_WEST => col -= 1,
            _ => unreachable!(),
        }
        let limit = self.size as isize;
        if (0..limit).contains(&row) && (0..limit).contains(&col) {
            self.row = row as usize;
            self.col = col as usize;
        }
        self.steps += 1;
        let at_goal = self.row == self.size - 1 && self.col == self.size - 1;
        let (reward, terminal) = if at_goal {
            (1.0, true)
        } else if self.steps >= self.step_cap {
            (0.0, true)
        } else {
            (0.0, false)
        };
        if terminal {
            self.phase = Phase::Terminal;
        }
        Ok(StepResult {
            observation: self.observe(),
            reward,
            terminal,
        })
    }

    fn export_state(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.u8(self.phase.to_byte());
        w.u32(self.row as u32);
        w.u32(self.col as u32);
        w.u64(self.steps as u64);
        w.finish()
    }

    fn import_state(&mut self, r: &mut ByteReader) -> Result<()> {
        self.phase = Phase::from_byte(r.u8()?)?;
        self.row = r.u32()? as usize;
        self.col = r.u32()? as usize;
        self.steps = r.u64()? as usize;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvId;

    fn env() -> Gridworld {
        Gridworld::new(&EnvSpec::new(EnvId::Gridworld4x4, 0)).unwrap()
    }

    #[test]
    fn reset_is_one_hot_of_origin() {
        let mut e = env();
        let obs = e.reset();
        assert_eq!(obs.data.data()[0], 1.0);
        assert_eq!(obs.data.data()[1..].iter().sum::<f32>(), 0.0);
        assert_eq!(obs.one_hot_index(), Some(0));
    }

    #[test]
    fn off_grid_move_is_a_no_op() {
        let mut e = env();
        e.reset();
        let r = e.step(ACTION_NORTH).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(!r.terminal);
        assert_eq!(r.observation.one_hot_index(), Some(0));
    }

    #[test]
    fn entering_goal_rewards_and_terminates() {
        let mut e = env();
        e.reset();
        // walk to (3,2): three south, two east
        for _ in 0..3 {
            e.step(ACTION_SOUTH).unwrap();
        }
        e.step(ACTION_EAST).unwrap();
        let r = e.step(ACTION_EAST).unwrap();
        assert_eq!(e.state_index(), 14);
        assert!(!r.terminal);
        let r = e.step(ACTION_EAST).unwrap();
        assert_eq!(r.reward, 1.0);
        assert!(r.terminal);
        assert!(e.step(ACTION_EAST).is_err());
    }

    #[test]
    fn step_cap_terminates_with_zero_reward() {
        let mut spec = EnvSpec::new(EnvId::Gridworld4x4, 0);
        spec.params.step_cap = Some(3);
        let mut e = Gridworld::new(&spec).unwrap();
        e.reset();
        e.step(ACTION_NORTH).unwrap();
        e.step(ACTION_NORTH).unwrap();
        let r = e.step(ACTION_NORTH).unwrap();
        assert!(r.terminal);
        assert_eq!(r.reward, 0.0);
    }
}
