//! Deep Q-learning with experience replay: ring-buffer memory, epsilon-greedy
//! acting, two-case targets evaluated with the current parameters (no
//! separate target network), and squared-error gradient steps.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::arch::Network;
use crate::env::{ByteReader, ByteWriter, Environment, Observation};
use crate::error::{Error, Result};
use crate::nn::{GlobalStore, GradMap, Snapshot};
use crate::scalar::Scalar;
use crate::tensor::{argmax, Tensor};

/// One stored interaction. `next_state` is kept even for terminal
/// transitions (it is simply not used in the target).
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_state: Observation,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions with FIFO eviction.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: Vec::with_capacity(capacity),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `k` uniform draws with replacement over the current contents.
    pub fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&Transition>> {
        if self.storage.len() < k {
            return Err(Error::InsufficientData(format!(
                "replay holds {} transitions, need {k}",
                self.storage.len()
            )));
        }
        Ok((0..k)
            .map(|_| &self.storage[rng.random_range(0..self.storage.len())])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }
}

#[derive(Debug, Clone)]
pub struct DqnConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub learn_start: usize,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.99,
            batch_size: 32,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_steps: 10_000,
            learn_start: 500,
            buffer_capacity: 10_000,
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon_end > self.epsilon_start {
            return Err(Error::Config("epsilon_end must be <= epsilon_start".into()));
        }
        for (name, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {v}")));
            }
        }
        if self.batch_size == 0 || self.epsilon_decay_steps == 0 {
            return Err(Error::Config("batch_size and epsilon_decay_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Linear schedule from epsilon_start to epsilon_end over decay_steps,
/// clamped afterwards.
pub fn epsilon_at(step: u64, cfg: &DqnConfig) -> f64 {
    if step >= cfg.epsilon_decay_steps {
        return cfg.epsilon_end;
    }
    let frac = step as f64 / cfg.epsilon_decay_steps as f64;
    cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)
}

/// The two-case target: r for terminal transitions, else
/// r + gamma * max_a' Q(s', a') evaluated with the same current parameters.
pub fn dqn_target<S: Scalar>(
    t: &Transition,
    snap: &Snapshot<S>,
    net: &Network,
    gamma: f64,
) -> Result<f64> {
    if t.terminal {
        return Ok(t.reward);
    }
    let next: Tensor<S> = t.next_state.data.cast();
    let out = net.forward(snap, &next)?;
    let q = out
        .q_values()
        .ok_or_else(|| Error::Usage("dqn_target requires a q-valued network".into()))?;
    let best = q.iter().cloned().fold(S::neg_infinity(), S::max);
    Ok(t.reward + gamma * best.as_f64())
}

/// Mean over the batch of (y - Q(s,a))^2 with the targets held constant.
/// When `grads` is supplied, the analytic gradient of that mean accumulates
/// into it. Returns the loss.
pub fn dqn_batch_loss<S: Scalar>(
    net: &Network,
    snap: &Snapshot<S>,
    batch: &[(&Transition, f64)],
    mut grads: Option<&mut GradMap<S>>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let n = net.action_count();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (t, target) in batch {
        if t.action >= n {
            return Err(Error::IndexOutOfRange(format!("action {} out of range 0..{n}", t.action)));
        }
        let state: Tensor<S> = t.state.data.cast();
        let pass = net.forward_pass(snap, &state)?;
        let q = pass.output.q_values().expect("q-valued network")[t.action].as_f64();
        let diff = q - target;
        loss += diff * diff * scale;
        if let Some(g) = grads.as_deref_mut() {
            let mut upstream = vec![S::zero(); n];
            upstream[t.action] = S::from_f64(2.0 * diff * scale);
            pass.backward_q(snap, &upstream, g)?;
        }
    }
    Ok(loss)
}

/// One replay-driven optimizer step: sample a minibatch, compute targets
/// from the current snapshot, apply one Adam step, return the loss.
pub fn dqn_train_step(
    buf: &ReplayBuffer,
    global: &GlobalStore<f32>,
    net: &Network,
    cfg: &DqnConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if buf.len() < cfg.batch_size.max(cfg.learn_start) {
        return Err(Error::InsufficientData(format!(
            "replay holds {} transitions, need {}",
            buf.len(),
            cfg.batch_size.max(cfg.learn_start)
        )));
    }
    let snap = global.snapshot();
    let sampled = buf.sample(cfg.batch_size, rng)?;
    let batch: Vec<(&Transition, f64)> = sampled
        .into_iter()
        .map(|t| dqn_target(t, &snap, net, cfg.gamma).map(|y| (t, y)))
        .collect::<Result<_>>()?;
    let mut grads = GradMap::new();
    let loss = dqn_batch_loss(net, &snap, &batch, Some(&mut grads))?;
    global.apply_delta(&grads)?;
    Ok(loss)
}

/// What one environment step of the trainer produced.
#[derive(Debug, Clone, Copy, Default)]
pub struct DqnStepOutcome {
    pub loss: Option<f64>,
    pub finished_episode: Option<f64>,
}

/// Single-worker DQN loop: one environment step per train step once the
/// buffer has warmed up.
pub struct DqnTrainer {
    pub net: Network,
    pub cfg: DqnConfig,
    env: Box<dyn Environment>,
    buffer: ReplayBuffer,
    act_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    current: Observation,
    steps: u64,
    episode_reward: f64,
}

impl DqnTrainer {
    pub fn new(mut env: Box<dyn Environment>, net: Network, cfg: DqnConfig) -> Result<Self> {
        cfg.validate()?;
        let current = env.reset();
        Ok(DqnTrainer {
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            act_rng: crate::rng::seeded(cfg.seed, crate::rng::Stream::Worker, 0),
            replay_rng: crate::rng::seeded(cfg.seed, crate::rng::Stream::Replay, 0),
            env,
            net,
            cfg,
            current,
            steps: 0,
            episode_reward: 0.0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// One environment step plus (after warm-up) one gradient step.
    pub fn step(&mut self, global: &GlobalStore<f32>) -> Result<DqnStepOutcome> {
        let epsilon = epsilon_at(self.steps, &self.cfg);
        let action = if self.act_rng.random::<f64>() < epsilon {
            self.act_rng.random_range(0..self.net.action_count())
        } else {
            let snap = global.snapshot();
            let out = self.net.forward(&snap, &self.current.data)?;
            argmax(out.q_values().expect("q-valued network")).unwrap()
        };
        let result = self.env.step(action)?;
        self.episode_reward += result.reward;
        self.buffer.push(Transition {
            state: self.current.clone(),
            action,
            reward: result.reward,
            next_state: result.observation.clone(),
            terminal: result.terminal,
        });
        let mut outcome = DqnStepOutcome::default();
        if result.terminal {
            outcome.finished_episode = Some(self.episode_reward);
            self.episode_reward = 0.0;
            self.current = self.env.reset();
        } else {
            self.current = result.observation;
        }
        self.steps += 1;
        if self.buffer.len() >= self.cfg.batch_size.max(self.cfg.learn_start) {
            outcome.loss = Some(dqn_train_step(
                &self.buffer,
                global,
                &self.net,
                &self.cfg,
                &mut self.replay_rng,
            )?);
        }
        Ok(outcome)
    }

    /// Full trainer state (env, rngs, buffer, in-flight episode) for resume.
    pub fn export_state(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.u64(self.steps);
        w.f64(self.episode_reward);
        w.bytes_block(&self.env.export_state());
        w.bytes_block(&crate::rng::export_rng(&self.act_rng));
        w.bytes_block(&crate::rng::export_rng(&self.replay_rng));
        w.f32_slice(self.current.data.data());
        w.u64(self.buffer.len() as u64);
        w.u64(self.buffer.next as u64);
        for t in self.buffer.iter() {
            w.f32_slice(t.state.data.data());
            w.u32(t.action as u32);
            w.f64(t.reward);
            w.f32_slice(t.next_state.data.data());
            w.u8(t.terminal as u8);
        }
        w.finish()
    }

    pub fn import_state(&mut self, bytes: &[u8]) -> Result<()> {
        let mut r = ByteReader::new(bytes);
        self.steps = r.u64()?;
        self.episode_reward = r.f64()?;
        let env_blob = r.bytes_block()?;
        self.env.import_state(&mut ByteReader::new(&env_blob))?;
        self.act_rng = crate::rng::import_rng(&r.bytes_block()?)?;
        self.replay_rng = crate::rng::import_rng(&r.bytes_block()?)?;
        let shape = self.env.observation_shape();
        let obs_len: usize = shape.iter().product();
        self.current = Observation::new(Tensor::from_vec(&shape, r.f32_vec(obs_len)?)?);
        let len = r.u64()? as usize;
        let next = r.u64()? as usize;
        let mut buffer = ReplayBuffer::new(self.cfg.buffer_capacity)?;
        for _ in 0..len {
            let state = Observation::new(Tensor::from_vec(&shape, r.f32_vec(obs_len)?)?);
            let action = r.u32()? as usize;
            let reward = r.f64()?;
            let next_state = Observation::new(Tensor::from_vec(&shape, r.f32_vec(obs_len)?)?);
            let terminal = r.u8()? != 0;
            buffer.push(Transition { state, action, reward, next_state, terminal });
        }
        buffer.next = next;
        self.buffer = buffer;
        Ok(())
    }
}
