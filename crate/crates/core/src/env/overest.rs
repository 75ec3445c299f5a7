use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{export_rng, import_rng, seeded, Stream};
use crate::tensor::Tensor;

use super::{check_action, ByteReader, ByteWriter, Environment, EnvSpec, Observation, Phase, StepResult};

pub const STATE_A: usize = 0;
pub const STATE_B: usize = 1;
/// Action 0 at state A moves to B; action 1 (and any pad action) terminates.
pub const ACTION_LEFT: usize = 0;
pub const ACTION_RIGHT: usize = 1;

/// Two-state overestimation probe. State A offers "left" into the noisy
/// state B and "right" straight to termination with reward 0; every action
/// at B terminates with a Normal(reward_mean, reward_std) reward. The action
/// space is padded to max(2, K), pad actions at A behaving like "right".
pub struct OverestMdp {
    actions: usize,
    reward_mean: f64,
    reward_std: f64,
    state: usize,
    phase: Phase,
    rng: ChaCha8Rng,
}

impl OverestMdp {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        let k = spec.params.k.unwrap_or(8);
        if k == 0 {
            return Err(Error::Config("overest_mdp.k must be >= 1".into()));
        }
        let reward_std = spec.params.reward_std.unwrap_or(1.0);
        if reward_std < 0.0 {
            return Err(Error::Config("overest_mdp.reward_std must be >= 0".into()));
        }
        Ok(OverestMdp {
            actions: k.max(2),
            reward_mean: spec.params.reward_mean.unwrap_or(-0.1),
            reward_std,
            state: STATE_A,
            phase: Phase::PreReset,
            rng: seeded(spec.seed, Stream::Env, 0),
        })
    }

    fn observe(&self) -> Observation {
        let mut data = vec![0.0f32; 2];
        data[self.state] = 1.0;
        Observation::new(Tensor::from_vec(&[2], data).unwrap())
    }
}

impl Environment for OverestMdp {
    fn observation_shape(&self) -> Vec<usize> {
        vec![2]
    }

    fn action_count(&self) -> usize {
        self.actions
    }

    fn reset(&mut self) -> Observation {
        self.state = STATE_A;
        self.phase = Phase::Running;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.phase.check_steppable()?;
        check_action(action, self.actions)?;
        let (reward, terminal) = match self.state {
            STATE_A => {
                if action == ACTION_LEFT {
                    self.state = STATE_B;
                    (0.0, false)
                } else {
                    (0.0, true)
                }
            }
            _ => {
                let noise = Normal::new(self.reward_mean, self.reward_std)
                    .expect("validated std")
                    .sample(&mut self.rng);
                (noise, true)
            }
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
        w.u32(self.state as u32);
        w.bytes_block(&export_rng(&self.rng));
        w.finish()
    }

    fn import_state(&mut self, r: &mut ByteReader) -> Result<()> {
        self.phase = Phase::from_byte(r.u8()?)?;
        self.state = r.u32()? as usize;
        self.rng = import_rng(&r.bytes_block()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvId;

    #[test]
    fn right_terminates_immediately_with_zero() {
        let mut e = OverestMdp::new(&EnvSpec::new(EnvId::OverestMdp, 0)).unwrap();
        let obs = e.reset();
        assert_eq!(obs.one_hot_index(), Some(STATE_A));
        let r = e.step(ACTION_RIGHT).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(r.terminal);
    }

    #[test]
    fn pad_actions_at_a_behave_like_right() {
        let mut spec = EnvSpec::new(EnvId::OverestMdp, 0);
        spec.params.k = Some(1);
        let mut e = OverestMdp::new(&spec).unwrap();
        assert_eq!(e.action_count(), 2);
        let mut spec = EnvSpec::new(EnvId::OverestMdp, 0);
        spec.params.k = Some(5);
        let mut e5 = OverestMdp::new(&spec).unwrap();
        e5.reset();
        let r = e5.step(4).unwrap();
        assert!(r.terminal);
        assert_eq!(r.reward, 0.0);
        e.reset();
        assert!(e.step(2).is_err());
    }

    #[test]
    fn episodes_end_within_two_steps() {
        let mut e = OverestMdp::new(&EnvSpec::new(EnvId::OverestMdp, 1)).unwrap();
        for action in 0..e.action_count() {
            e.reset();
            let r = e.step(action).unwrap();
            if !r.terminal {
                let r2 = e.step(0).unwrap();
                assert!(r2.terminal);
            }
        }
    }

    #[test]
    fn rewards_at_b_are_roughly_normal() {
        let mut e = OverestMdp::new(&EnvSpec::new(EnvId::OverestMdp, 123)).unwrap();
        let n = 20_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            e.reset();
            e.step(ACTION_LEFT).unwrap();
            let r = e.step(3).unwrap();
            assert!(r.terminal);
            sum += r.reward;
            sum_sq += r.reward * r.reward;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // mean within 4 sigma of -0.1, variance near 1
        assert!((mean + 0.1).abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
