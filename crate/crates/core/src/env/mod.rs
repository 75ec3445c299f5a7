//! Environment interface and the built-in, deterministically seedable
//! environments, plus the exact value-iteration oracle over their models.

pub mod catch;
pub mod gridworld;
pub mod model;
pub mod overest;

use std::collections::VecDeque;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use model::{mdp_model, optimal_q_values, optimal_state_values, MdpModel};

/// A single observation emitted by reset/step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub data: Tensor<f32>,
}

impl Observation {
    pub fn new(data: Tensor<f32>) -> Self {
        Observation { data }
    }

    /// For one-hot observations: the index of the active state.
    pub fn one_hot_index(&self) -> Option<usize> {
        crate::tensor::argmax(self.data.data())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvId {
    Gridworld4x4,
    OverestMdp,
    Catch,
}

impl EnvId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::Gridworld4x4 => "gridworld4x4",
            EnvId::OverestMdp => "overest_mdp",
            EnvId::Catch => "catch",
        }
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gridworld4x4" => Ok(EnvId::Gridworld4x4),
            "overest_mdp" => Ok(EnvId::OverestMdp),
            "catch" => Ok(EnvId::Catch),
            other => Err(Error::Config(format!("unknown env id {other:?}"))),
        }
    }
}

/// Per-env parameter overrides. Fields not meaningful for the selected env
/// are rejected by the config layer, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvParams {
    /// gridworld4x4: side length (default 4).
    pub grid_size: Option<usize>,
    /// gridworld4x4: episode step cap (default 100).
    pub step_cap: Option<usize>,
    /// overest_mdp: number of actions at state B (default 8).
    pub k: Option<usize>,
    /// overest_mdp: mean of the terminal reward at B (default -0.1).
    pub reward_mean: Option<f64>,
    /// overest_mdp: stddev of the terminal reward at B (default 1.0).
    pub reward_std: Option<f64>,
    /// any env: stack the last f observations along the leading axis
    /// (default 1 = no stacking).
    pub frame_stack: Option<usize>,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            grid_size: None,
            step_cap: None,
            k: None,
            reward_mean: None,
            reward_std: None,
            frame_stack: None,
        }
    }
}

/// Complete, deterministic description of an environment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub env_id: EnvId,
    pub seed: u64,
    pub params: EnvParams,
}

impl EnvSpec {
    pub fn new(env_id: EnvId, seed: u64) -> Self {
        EnvSpec {
            env_id,
            seed,
            params: EnvParams::default(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut spec = self.clone();
        spec.seed = seed;
        spec
    }
}

/// A single-owner environment instance. Identical `EnvSpec`s fed identical
/// action sequences produce bit-identical streams.
pub trait Environment: Send {
    fn observation_shape(&self) -> Vec<usize>;
    fn action_count(&self) -> usize;
    fn reset(&mut self) -> Observation;
    fn step(&mut self, action: usize) -> Result<StepResult>;
    /// Complete internal state (including rng) for checkpoint resume.
    fn export_state(&self) -> Vec<u8>;
    fn import_state(&mut self, bytes: &mut ByteReader) -> Result<()>;
}

/// Lifecycle phase shared by the built-in envs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Phase {
    PreReset,
    Running,
    Terminal,
}

impl Phase {
    pub(crate) fn check_steppable(self) -> Result<()> {
        match self {
            Phase::PreReset => Err(Error::Usage("step called before reset".into())),
            Phase::Terminal => Err(Error::Usage("step called on terminal episode; call reset".into())),
            Phase::Running => Ok(()),
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Phase::PreReset => 0,
            Phase::Running => 1,
            Phase::Terminal => 2,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Phase::PreReset),
            1 => Ok(Phase::Running),
            2 => Ok(Phase::Terminal),
            _ => Err(Error::Config(format!("invalid phase byte {b}"))),
        }
    }
}

pub(crate) fn check_action(action: usize, n: usize) -> Result<()> {
    if action >= n {
        Err(Error::IndexOutOfRange(format!("action {action} out of range 0..{n}")))
    } else {
        Ok(())
    }
}

/// Construct an environment in its pre-reset state.
pub fn make_env(spec: &EnvSpec) -> Result<Box<dyn Environment>> {
    let frame_stack = spec.params.frame_stack.unwrap_or(1);
    if frame_stack == 0 {
        return Err(Error::Config("frame_stack must be >= 1".into()));
    }
    let inner: Box<dyn Environment> = match spec.env_id {
        EnvId::Gridworld4x4 => Box::new(gridworld::Gridworld::new(spec)?),
        EnvId::OverestMdp => Box::new(overest::OverestMdp::new(spec)?),
        EnvId::Catch => Box::new(catch::Catch::new(spec)?),
    };
    if frame_stack > 1 {
        Ok(Box::new(FrameStack::new(inner, frame_stack)?))
    } else {
        Ok(inner)
    }
}

/// Concatenates the last `frames` observations along the leading axis. A
/// reset fills the stack with copies of the initial observation.
pub struct FrameStack {
    inner: Box<dyn Environment>,
    frames: usize,
    buffer: VecDeque<Tensor<f32>>,
    shape: Vec<usize>,
}

impl FrameStack {
    pub fn new(inner: Box<dyn Environment>, frames: usize) -> Result<Self> {
        let inner_shape = inner.observation_shape();
        if inner_shape.is_empty() {
            return Err(Error::Config("frame stacking needs a non-scalar observation".into()));
        }
        let mut shape = inner_shape.clone();
        shape[0] *= frames;
        Ok(FrameStack {
            inner,
            frames,
            buffer: VecDeque::new(),
            shape,
        })
    }

    fn stacked(&self) -> Observation {
        let mut data = Vec::with_capacity(self.shape.iter().product());
        for frame in &self.buffer {
            data.extend_from_slice(frame.data());
        }
        Observation::new(Tensor::from_vec(&self.shape, data).expect("stack shape"))
    }
}

impl Environment for FrameStack {
    fn observation_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }

    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    fn reset(&mut self) -> Observation {
        let obs = self.inner.reset();
        self.buffer.clear();
        for _ in 0..self.frames {
            self.buffer.push_back(obs.data.clone());
        }
        self.stacked()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.buffer.is_empty() {
            return Err(Error::Usage("step called before reset".into()));
        }
        let result = self.inner.step(action)?;
        self.buffer.pop_front();
        self.buffer.push_back(result.observation.data.clone());
        Ok(StepResult {
            observation: self.stacked(),
            reward: result.reward,
            terminal: result.terminal,
        })
    }

    fn export_state(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes_block(&self.inner.export_state());
        w.u32(self.buffer.len() as u32);
        for frame in &self.buffer {
            w.f32_slice(frame.data());
        }
        w.finish()
    }

    fn import_state(&mut self, r: &mut ByteReader) -> Result<()> {
        let inner_block = r.bytes_block()?;
        self.inner.import_state(&mut ByteReader::new(&inner_block))?;
        let count = r.u32()? as usize;
        let inner_shape = self.inner.observation_shape();
        let frame_len: usize = inner_shape.iter().product();
        self.buffer.clear();
        for _ in 0..count {
            let data = r.f32_vec(frame_len)?;
            self.buffer
                .push_back(Tensor::from_vec(&inner_shape, data).map_err(|_| {
                    Error::Config("frame stack state has wrong frame length".into())
                })?);
        }
        Ok(())
    }
}

/// Minimal little-endian byte writer for env/trainer state blobs.
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        ByteWriter { buf: Vec::new() }
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f32_slice(&mut self, vs: &[f32]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    /// Length-prefixed nested blob.
    pub fn bytes_block(&mut self, bytes: &[u8]) {
        self.u32(bytes.len() as u32);
        self.buf.extend_from_slice(bytes);
    }
    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

impl Default for ByteWriter {
    fn default() -> Self {
        Self::new()
    }
}

pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Config(format!(
                "state blob truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    pub fn bytes_block(&mut self) -> Result<Vec<u8>> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_env_rejects_unknown_and_invalid() {
        assert!(EnvId::from_str("pong").is_err());
        let mut spec = EnvSpec::new(EnvId::OverestMdp, 0);
        spec.params.k = Some(0);
        assert!(make_env(&spec).is_err());
        let mut spec = EnvSpec::new(EnvId::Catch, 0);
        spec.params.frame_stack = Some(0);
        assert!(make_env(&spec).is_err());
    }

    #[test]
    fn declared_shapes_and_action_counts() {
        let env = make_env(&EnvSpec::new(EnvId::Gridworld4x4, 0)).unwrap();
        assert_eq!(env.action_count(), 4);
        assert_eq!(env.observation_shape(), vec![16]);

        let env = make_env(&EnvSpec::new(EnvId::Catch, 7)).unwrap();
        assert_eq!(env.action_count(), 3);
        assert_eq!(env.observation_shape(), vec![1, 5, 5]);

        let mut spec = EnvSpec::new(EnvId::OverestMdp, 0);
        spec.params.k = Some(8);
        let env = make_env(&spec).unwrap();
        assert_eq!(env.action_count(), 8);
    }

    #[test]
    fn frame_stack_concatenates_planes() {
        let mut spec = EnvSpec::new(EnvId::Catch, 3);
        spec.params.frame_stack = Some(4);
        let mut env = make_env(&spec).unwrap();
        assert_eq!(env.observation_shape(), vec![4, 5, 5]);
        let obs = env.reset();
        assert_eq!(obs.data.shape(), &[4, 5, 5]);
        // all four planes identical right after reset
        let d = obs.data.data();
        assert_eq!(&d[0..25], &d[75..100]);
        let r = env.step(0).unwrap();
        // newest frame differs from oldest after one step
        let d = r.observation.data.data();
        assert_ne!(&d[0..25], &d[75..100]);
    }

    #[test]
    fn step_before_reset_is_a_usage_error() {
        let mut env = make_env(&EnvSpec::new(EnvId::Gridworld4x4, 0)).unwrap();
        assert!(env.step(0).is_err());
    }
}
