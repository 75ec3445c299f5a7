use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::rng::{export_rng, import_rng, seeded, Stream};
use crate::tensor::Tensor;

use super::{check_action, ByteReader, ByteWriter, Environment, EnvSpec, Observation, Phase, StepResult};

pub const GRID: usize = 5;
pub const ACTION_LEFT: usize = 0;
pub const ACTION_STAY: usize = 1;
pub const ACTION_RIGHT: usize = 2;

/// 5x5 single-plane pixel game. The ball starts in a seeded random top-row
/// column and falls one row per step; the paddle starts bottom-center and
/// moves left/stay/right. When the ball reaches the bottom row the episode
/// ends with +1 if the paddle is under it, else -1.
pub struct Catch {
    ball_row: usize,
    ball_col: usize,
    paddle_col: usize,
    phase: Phase,
    rng: ChaCha8Rng,
}

impl Catch {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        Ok(Catch {
            ball_row: 0,
            ball_col: 0,
            paddle_col: GRID / 2,
            phase: Phase::PreReset,
            rng: seeded(spec.seed, Stream::Env, 0),
        })
    }

    fn observe(&self) -> Observation {
        let mut data = vec![0.0f32; GRID * GRID];
        data[self.ball_row * GRID + self.ball_col] = 1.0;
        data[(GRID - 1) * GRID + self.paddle_col] = 1.0;
        Observation::new(Tensor::from_vec(&[1, GRID, GRID], data).unwrap())
    }

    pub fn state(&self) -> (usize, usize, usize) {
        (self.ball_row, self.ball_col, self.paddle_col)
    }
}

impl Environment for Catch {
    fn observation_shape(&self) -> Vec<usize> {
        vec![1, GRID, GRID]
    }

    fn action_count(&self) -> usize {
        3
    }

    fn reset(&mut self) -> Observation {
        self.ball_row = 0;
        self.ball_col = self.rng.random_range(0..GRID);
        self.paddle_col = GRID / 2;
        self.phase = Phase::Running;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.phase.check_steppable()?;
        check_action(action, 3)?;
        match action {
            ACTION_LEFT => self.paddle_col = self.paddle_col.saturating_sub(1),
            ACTION_RIGHT => self.paddle_col = (self.paddle_col + 1).min(GRID - 1),
            _ => {}
        }
        self.ball_row += 1;
        let terminal = self.ball_row == GRID - 1;
        let reward = if terminal {
            if self.paddle_col == self.ball_col {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
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
        w.u32(self.ball_row as u32);
        w.u32(self.ball_col as u32);
        w.u32(self.paddle_col as u32);
        w.bytes_block(&export_rng(&self.rng));
        w.finish()
    }

    fn import_state(&mut self, r: &mut ByteReader) -> Result<()> {
        self.phase = Phase::from_byte(r.u8()?)?;
        self.ball_row = r.u32()? as usize;
        self.ball_col = r.u32()? as usize;
        self.paddle_col = r.u32()? as usize;
        self.rng = import_rng(&r.bytes_block()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_env, EnvId};

    #[test]
    fn reset_places_ball_on_top_and_paddle_center() {
        let mut e = Catch::new(&EnvSpec::new(EnvId::Catch, 7)).unwrap();
        let obs = e.reset();
        let (row, col, paddle) = e.state();
        assert_eq!(row, 0);
        assert_eq!(paddle, 2);
        assert_eq!(obs.data.data()[col], 1.0);
        assert_eq!(obs.data.data()[4 * GRID + 2], 1.0);
    }

    #[test]
    fn episodes_last_exactly_four_steps() {
        let mut e = Catch::new(&EnvSpec::new(EnvId::Catch, 5)).unwrap();
        for _ in 0..20 {
            e.reset();
            for step in 0..4 {
                let r = e.step(ACTION_STAY).unwrap();
                assert_eq!(r.terminal, step == 3);
            }
            assert!(e.step(ACTION_STAY).is_err());
        }
    }

    #[test]
    fn staying_under_the_ball_catches_it() {
        let mut e = Catch::new(&EnvSpec::new(EnvId::Catch, 0)).unwrap();
        loop {
            e.reset();
            let (_, col, _) = e.state();
            if col == 2 {
                break;
            }
        }
        let mut last = 0.0;
        for _ in 0..4 {
            last = e.step(ACTION_STAY).unwrap().reward;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn identical_specs_give_identical_streams() {
        let spec = EnvSpec::new(EnvId::Catch, 99);
        let mut a = make_env(&spec).unwrap();
        let mut b = make_env(&spec).unwrap();
        for round in 0..10 {
            let (oa, ob) = (a.reset(), b.reset());
            assert_eq!(oa, ob);
            for i in 0..4 {
                let action = (round + i) % 3;
                let (ra, rb) = (a.step(action).unwrap(), b.step(action).unwrap());
                assert_eq!(ra, rb);
            }
        }
    }
}
