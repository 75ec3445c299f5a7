//! Network topologies: the DQN head, the single- and double-value
//! actor-critic networks over one shared trunk, and the less-shared variant
//! with two post-trunk branches. Networks are immutable topology
//! descriptions; forward passes run against caller-supplied snapshots.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{softmax, Cache, GradMap, Layer, LayerSpec, ParamStore, Snapshot, Stack};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchVariant {
    Dqn,
    VanillaA3c,
    DoubleA3c,
    LsDoubleA3c,
    DuelingDqn,
}

impl ArchVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArchVariant::Dqn => "dqn",
            ArchVariant::VanillaA3c => "a3c",
            ArchVariant::DoubleA3c => "double-a3c",
            ArchVariant::LsDoubleA3c => "ls-double-a3c",
            ArchVariant::DuelingDqn => "dueling-dqn",
        }
    }

    /// Number of scalar value heads (0 for q-valued variants).
    pub fn value_heads(&self) -> usize {
        match self {
            ArchVariant::VanillaA3c => 1,
            ArchVariant::DoubleA3c | ArchVariant::LsDoubleA3c => 2,
            _ => 0,
        }
    }

    pub fn is_actor_critic(&self) -> bool {
        self.value_heads() > 0
    }
}

impl FromStr for ArchVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(ArchVariant::Dqn),
            "a3c" => Ok(ArchVariant::VanillaA3c),
            "double-a3c" => Ok(ArchVariant::DoubleA3c),
            "ls-double-a3c" => Ok(ArchVariant::LsDoubleA3c),
            "dueling-dqn" => Ok(ArchVariant::DuelingDqn),
            other => Err(Error::Config(format!("unknown network variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Paper,
    Desk,
}

/// Paper-scale input: 4 consecutive RGB frames at 84x84 = 12 planes.
pub const PAPER_INPUT_SHAPE: [usize; 3] = [12, 84, 84];
pub const PAPER_HIDDEN_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub input_shape: Vec<usize>,
    pub action_count: usize,
    pub scale: Scale,
    /// Desk-scale conv output channels.
    pub conv_channels: usize,
    /// Desk-scale hidden feature dimension.
    pub hidden_dim: usize,
}

impl ArchConfig {
    pub fn desk(input_shape: Vec<usize>, action_count: usize) -> Self {
        ArchConfig {
            input_shape,
            action_count,
            scale: Scale::Desk,
            conv_channels: 8,
            hidden_dim: 32,
        }
    }

    pub fn paper(action_count: usize) -> Self {
        ArchConfig {
            input_shape: PAPER_INPUT_SHAPE.to_vec(),
            action_count,
            scale: Scale::Paper,
            conv_channels: 8,
            hidden_dim: PAPER_HIDDEN_DIM,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.action_count < 2 {
            return Err(Error::Config("action count must be >= 2".into()));
        }
        if self.scale == Scale::Paper && self.input_shape != PAPER_INPUT_SHAPE {
            return Err(Error::shape(
                "paper-scale input",
                &PAPER_INPUT_SHAPE,
                &self.input_shape,
            ));
        }
        Ok(())
    }
}

/// Variant-appropriate outputs of one forward pass.
#[derive(Debug, Clone)]
pub enum NetOutput<S: Scalar> {
    PolicyValue { policy: Vec<S>, value: S },
    PolicyTwoValues { policy: Vec<S>, v1: S, v2: S },
    QValues { q: Vec<S> },
}

impl<S: Scalar> NetOutput<S> {
    pub fn policy(&self) -> Option<&[S]> {
        match self {
            NetOutput::PolicyValue { policy, .. } | NetOutput::PolicyTwoValues { policy, .. } => {
                Some(policy)
            }
            NetOutput::QValues { .. } => None,
        }
    }

    /// Value head by 1-based index (head 1 for the vanilla network).
    pub fn value(&self, head: usize) -> Option<S> {
        match (self, head) {
            (NetOutput::PolicyValue { value, .. }, 1) => Some(*value),
            (NetOutput::PolicyTwoValues { v1, .. }, 1) => Some(*v1),
            (NetOutput::PolicyTwoValues { v2, .. }, 2) => Some(*v2),
            _ => None,
        }
    }

    pub fn q_values(&self) -> Option<&[S]> {
        match self {
            NetOutput::QValues { q } => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Topology {
    Q {
        trunk: Stack,
        q_head: Stack,
    },
    Dueling {
        trunk: Stack,
        v_head: Stack,
        adv_head: Stack,
    },
    /// One trunk; policy logits head plus 1 (vanilla) or 2 (double) value heads.
    Shared {
        trunk: Stack,
        pi_head: Stack,
        v_heads: Vec<Stack>,
    },
    /// Shared lower trunk, two branch copies; v-heads on their own branches,
    /// policy logits on the concatenation of both branch features.
    Split {
        shared: Stack,
        branches: [Stack; 2],
        v_heads: [Stack; 2],
        pi_head: Stack,
    },
}

#[derive(Debug, Clone)]
pub struct Network {
    pub variant: ArchVariant,
    pub config: ArchConfig,
    topology: Topology,
}

/// Uniform init in [-b, b] with b = sqrt(6 / (fan_in + fan_out)); biases zero.
fn init_weight<S: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<S> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| S::from_f64(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Register one parametric layer's tensors under `group` and return the
/// named layer.
fn register_layer<S: Scalar>(
    spec: LayerSpec,
    group: &str,
    store: &mut ParamStore<S>,
    rng: &mut ChaCha8Rng,
) -> Result<Layer> {
    let (w_shape, b_shape) = spec.param_shapes().expect("parametric layer");
    let (fan_in, fan_out) = spec.fans().expect("parametric layer");
    store.register(&format!("{group}/w"), init_weight(&w_shape, fan_in, fan_out, rng))?;
    store.register(&format!("{group}/b"), Tensor::zeros(&b_shape))?;
    Ok(Layer::named(spec, group))
}

struct StackBuilder<'a, S: Scalar> {
    store: &'a mut ParamStore<S>,
    rng: &'a mut ChaCha8Rng,
    layers: Vec<Layer>,
    shape: Vec<usize>,
}

impl<'a, S: Scalar> StackBuilder<'a, S> {
    fn new(store: &'a mut ParamStore<S>, rng: &'a mut ChaCha8Rng, input_shape: &[usize]) -> Self {
        StackBuilder {
            store,
            rng,
            layers: Vec::new(),
            shape: input_shape.to_vec(),
        }
    }

    fn conv(mut self, group: &str, out_channels: usize, kernel: usize) -> Result<Self> {
        let in_channels = self.shape[0];
        let spec = LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
        };
        self.shape = spec.output_shape(&self.shape)?;
        self.layers.push(register_layer(spec, group, self.store, self.rng)?);
        Ok(self)
    }

    fn relu(mut self) -> Self {
        self.layers.push(Layer::plain(LayerSpec::Relu));
        self
    }

    fn pool(mut self, size: usize) -> Result<Self> {
        let spec = LayerSpec::MaxPool2d { pool_h: size, pool_w: size };
        self.shape = spec.output_shape(&self.shape)?;
        self.layers.push(Layer::plain(spec));
        Ok(self)
    }

    fn fc(mut self, group: &str, out_dim: usize) -> Result<Self> {
        let in_dim: usize = self.shape.iter().product();
        let spec = LayerSpec::FullyConnected { in_dim, out_dim };
        self.shape = vec![out_dim];
        self.layers.push(register_layer(spec, group, self.store, self.rng)?);
        Ok(self)
    }

    fn finish(self) -> (Stack, Vec<usize>) {
        (Stack::new(self.layers), self.shape)
    }
}

/// Feature trunk up to the hidden vector h, under the given name prefix.
fn build_trunk<S: Scalar>(
    cfg: &ArchConfig,
    prefix: &str,
    store: &mut ParamStore<S>,
    rng: &mut ChaCha8Rng,
) -> Result<(Stack, usize)> {
    let b = StackBuilder::new(store, rng, &cfg.input_shape);
    let (stack, shape) = match (cfg.scale, cfg.input_shape.len()) {
        (Scale::Paper, _) => b
            .conv(&format!("{prefix}/conv1"), 32, 5)?
            .relu()
            .pool(2)?
            .conv(&format!("{prefix}/conv2"), 32, 5)?
            .relu()
            .pool(2)?
            .conv(&format!("{prefix}/conv3"), 64, 4)?
            .relu()
            .pool(2)?
            .conv(&format!("{prefix}/conv4"), 64, 3)?
            .relu()
            .fc(&format!("{prefix}/fc"), PAPER_HIDDEN_DIM)?
            .finish(),
        (Scale::Desk, 3) => {
            let mut b = b.conv(&format!("{prefix}/conv1"), cfg.conv_channels, 3)?.relu();
            if cfg.input_shape[0] >= 4 {
                b = b.pool(2)?;
            }
            b.fc(&format!("{prefix}/fc"), cfg.hidden_dim)?.finish()
        }
        (Scale::Desk, _) => b.fc(&format!("{prefix}/fc"), cfg.hidden_dim)?.finish(),
    };
    Ok((stack, shape[0]))
}

/// Lower (shared) and upper (per-branch) halves of the less-shared topology.
/// The shared half covers everything up to the third conv layer at paper
/// scale; each branch owns the final conv and the hidden fully connected
/// layer.
fn build_split_shared<S: Scalar>(
    cfg: &ArchConfig,
    store: &mut ParamStore<S>,
    rng: &mut ChaCha8Rng,
) -> Result<(Stack, Vec<usize>)> {
    let b = StackBuilder::new(store, rng, &cfg.input_shape);
    Ok(match (cfg.scale, cfg.input_shape.len()) {
        (Scale::Paper, _) => b
            .conv("shared/conv1", 32, 5)?
            .relu()
            .pool(2)?
            .conv("shared/conv2", 32, 5)?
            .relu()
            .pool(2)?
            .conv("shared/conv3", 64, 4)?
            .relu()
            .pool(2)?
            .finish(),
        (Scale::Desk, 3) => {
            let mut b = b.conv("shared/conv1", cfg.conv_channels, 3)?.relu();
            if cfg.input_shape[0] >= 4 {
                b = b.pool(2)?;
            }
            b.finish()
        }
        (Scale::Desk, _) => b.fc("shared/fc", cfg.hidden_dim)?.finish(),
    })
}

fn build_split_branch<S: Scalar>(
    cfg: &ArchConfig,
    index: usize,
    shared_shape: &[usize],
    store: &mut ParamStore<S>,
    rng: &mut ChaCha8Rng,
) -> Result<(Stack, usize)> {
    let prefix = format!("branch{index}");
    let b = StackBuilder::new(store, rng, shared_shape);
    let (stack, shape) = match (cfg.scale, shared_shape.len()) {
        (Scale::Paper, _) => b
            .conv(&format!("{prefix}/conv4"), 64, 3)?
            .relu()
            .fc(&format!("{prefix}/fc"), PAPER_HIDDEN_DIM)?
            .finish(),
        (Scale::Desk, _) => b.fc(&format!("{prefix}/fc"), cfg.hidden_dim)?.finish(),
    };
    Ok((stack, shape[0]))
}

fn head<S: Scalar>(
    group: &str,
    in_dim: usize,
    out_dim: usize,
    store: &mut ParamStore<S>,
    rng: &mut ChaCha8Rng,
) -> Result<Stack> {
    let layer = register_layer(
        LayerSpec::FullyConnected { in_dim, out_dim },
        group,
        store,
        rng,
    )?;
    Ok(Stack::new(vec![layer]))
}

/// Build the requested topology, registering all parameters in `store` under
/// names that encode their sharing group.
pub fn build_network<S: Scalar>(
    variant: ArchVariant,
    cfg: &ArchConfig,
    store: &mut ParamStore<S>,
    rng: &mut ChaCha8Rng,
) -> Result<Network> {
    cfg.validate()?;
    let n = cfg.action_count;
    let topology = match variant {
        ArchVariant::Dqn => {
            let (trunk, hidden) = build_trunk(cfg, "trunk", store, rng)?;
            let q_head = head("q", hidden, n, store, rng)?;
            Topology::Q { trunk, q_head }
        }
        ArchVariant::DuelingDqn => {
            let (trunk, hidden) = build_trunk(cfg, "trunk", store, rng)?;
            let v_head = head("v", hidden, 1, store, rng)?;
            let adv_head = head("adv", hidden, n, store, rng)?;
            Topology::Dueling { trunk, v_head, adv_head }
        }
        ArchVariant::VanillaA3c => {
            let (trunk, hidden) = build_trunk(cfg, "trunk", store, rng)?;
            let pi_head = head("pi", hidden, n, store, rng)?;
            let v_heads = vec![head("v", hidden, 1, store, rng)?];
            Topology::Shared { trunk, pi_head, v_heads }
        }
        ArchVariant::DoubleA3c => {
            let (trunk, hidden) = build_trunk(cfg, "trunk", store, rng)?;
            let pi_head = head("pi", hidden, n, store, rng)?;
            let v_heads = vec![
                head("v1", hidden, 1, store, rng)?,
                head("v2", hidden, 1, store, rng)?,
            ];
            Topology::Shared { trunk, pi_head, v_heads }
        }
        ArchVariant::LsDoubleA3c => {
            let (shared, shared_shape) = build_split_shared(cfg, store, rng)?;
            let (branch1, h1) = build_split_branch(cfg, 1, &shared_shape, store, rng)?;
            let (branch2, h2) = build_split_branch(cfg, 2, &shared_shape, store, rng)?;
            let v1 = head("v1", h1, 1, store, rng)?;
            let v2 = head("v2", h2, 1, store, rng)?;
            // policy reads the concatenation of both branch features
            let pi_head = head("pi", h1 + h2, n, store, rng)?;
            Topology::Split {
                shared,
                branches: [branch1, branch2],
                v_heads: [v1, v2],
                pi_head,
            }
        }
    };
    Ok(Network {
        variant,
        config: cfg.clone(),
        topology,
    })
}

fn scalar_out<S: Scalar>(t: &Tensor<S>) -> S {
    t.data()[0]
}

fn concat<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[a.len() + b.len()], data).unwrap()
}

impl Network {
    pub fn action_count(&self) -> usize {
        self.config.action_count
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.config.input_shape
    }

    fn check_input<S: Scalar>(&self, obs: &Tensor<S>) -> Result<()> {
        if obs.shape() != self.config.input_shape.as_slice() {
            return Err(Error::shape("network input", &self.config.input_shape, obs.shape()));
        }
        Ok(())
    }

    /// Plain forward pass (no caches kept).
    pub fn forward<S: Scalar>(&self, snap: &Snapshot<S>, obs: &Tensor<S>) -> Result<NetOutput<S>> {
        Ok(self.forward_pass(snap, obs)?.output)
    }

    /// Forward pass retaining every cache needed for a backward call.
    pub fn forward_pass<'n, S: Scalar>(
        &'n self,
        snap: &Snapshot<S>,
        obs: &Tensor<S>,
    ) -> Result<ForwardPass<'n, S>> {
        self.check_input(obs)?;
        match &self.topology {
            Topology::Q { trunk, q_head } => {
                let (h, trunk_caches) = trunk.forward(snap, obs)?;
                let (q, q_caches) = q_head.forward(snap, &h)?;
                Ok(ForwardPass {
                    net: self,
                    output: NetOutput::QValues { q: q.data().to_vec() },
                    caches: PassCaches::Q { trunk_caches, q_caches },
                })
            }
            Topology::Dueling { trunk, v_head, adv_head } => {
                let (h, trunk_caches) = trunk.forward(snap, obs)?;
                let (v, v_caches) = v_head.forward(snap, &h)?;
                let (adv, adv_caches) = adv_head.forward(snap, &h)?;
                let q = dueling_combine(scalar_out(&v), adv.data());
                Ok(ForwardPass {
                    net: self,
                    output: NetOutput::QValues { q },
                    caches: PassCaches::Dueling { trunk_caches, v_caches, adv_caches },
                })
            }
            Topology::Shared { trunk, pi_head, v_heads } => {
                let (h, trunk_caches) = trunk.forward(snap, obs)?;
                let (logits, pi_caches) = pi_head.forward(snap, &h)?;
                let policy = softmax(&logits)?;
                let mut values = Vec::with_capacity(v_heads.len());
                let mut v_caches = Vec::with_capacity(v_heads.len());
                for head in v_heads {
                    let (v, caches) = head.forward(snap, &h)?;
                    values.push(scalar_out(&v));
                    v_caches.push(caches);
                }
                let output = match values.as_slice() {
                    [v] => NetOutput::PolicyValue { policy: policy.data().to_vec(), value: *v },
                    [v1, v2] => NetOutput::PolicyTwoValues {
                        policy: policy.data().to_vec(),
                        v1: *v1,
                        v2: *v2,
                    },
                    _ => unreachable!("1 or 2 value heads"),
                };
                Ok(ForwardPass {
                    net: self,
                    output,
                    caches: PassCaches::Shared { trunk_caches, pi_caches, v_caches },
                })
            }
            Topology::Split { shared, branches, v_heads, pi_head } => {
                let (base, shared_caches) = shared.forward(snap, obs)?;
                let (h1, b1_caches) = branches[0].forward(snap, &base)?;
                let (h2, b2_caches) = branches[1].forward(snap, &base)?;
                let (v1, v1_caches) = v_heads[0].forward(snap, &h1)?;
                let (v2, v2_caches) = v_heads[1].forward(snap, &h2)?;
                let joint = concat(&h1, &h2);
                let (logits, pi_caches) = pi_head.forward(snap, &joint)?;
                let policy = softmax(&logits)?;
                Ok(ForwardPass {
                    net: self,
                    output: NetOutput::PolicyTwoValues {
                        policy: policy.data().to_vec(),
                        v1: scalar_out(&v1),
                        v2: scalar_out(&v2),
                    },
                    caches: PassCaches::Split {
                        shared_caches,
                        branch_caches: [b1_caches, b2_caches],
                        v_caches: [v1_caches, v2_caches],
                        pi_caches,
                        h_dims: [h1.len(), h2.len()],
                    },
                })
            }
        }
    }
}

enum PassCaches<S: Scalar> {
    Q {
        trunk_caches: Vec<Cache<S>>,
        q_caches: Vec<Cache<S>>,
    },
    Dueling {
        trunk_caches: Vec<Cache<S>>,
        v_caches: Vec<Cache<S>>,
        adv_caches: Vec<Cache<S>>,
    },
    Shared {
        trunk_caches: Vec<Cache<S>>,
        pi_caches: Vec<Cache<S>>,
        v_caches: Vec<Vec<Cache<S>>>,
    },
    Split {
        shared_caches: Vec<Cache<S>>,
        branch_caches: [Vec<Cache<S>>; 2],
        v_caches: [Vec<Cache<S>>; 2],
        pi_caches: Vec<Cache<S>>,
        h_dims: [usize; 2],
    },
}

/// One cached forward pass, ready to run variant-appropriate backward passes.
pub struct ForwardPass<'n, S: Scalar> {
    net: &'n Network,
    pub output: NetOutput<S>,
    caches: PassCaches<S>,
}

impl<'n, S: Scalar> ForwardPass<'n, S> {
    /// Backward for q-valued variants: `upstream` is dLoss/dQ over the action
    /// vector. Gradients accumulate into `grads`.
    pub fn backward_q(
        &self,
        snap: &Snapshot<S>,
        upstream: &[S],
        grads: &mut GradMap<S>,
    ) -> Result<()> {
        let n = self.net.config.action_count;
        if upstream.len() != n {
            return Err(Error::shape("q upstream", &[n], &[upstream.len()]));
        }
        let up = Tensor::from_vec(&[n], upstream.to_vec())?;
        match (&self.net.topology, &self.caches) {
            (Topology::Q { trunk, q_head }, PassCaches::Q { trunk_caches, q_caches }) => {
                let h_grad = q_head.backward(snap, q_caches, &up, grads)?;
                trunk.backward(snap, trunk_caches, &h_grad, grads)?;
                Ok(())
            }
            (
                Topology::Dueling { trunk, v_head, adv_head },
                PassCaches::Dueling { trunk_caches, v_caches, adv_caches },
            ) => {
                // q = v + adv: dv = sum(upstream), dadv = upstream
                let dv = Tensor::from_vec(&[1], vec![upstream.iter().cloned().sum()])?;
                let mut h_grad = v_head.backward(snap, v_caches, &dv, grads)?;
                let h_grad_adv = adv_head.backward(snap, adv_caches, &up, grads)?;
                h_grad.add_assign(&h_grad_adv)?;
                trunk.backward(snap, trunk_caches, &h_grad, grads)?;
                Ok(())
            }
            _ => Err(Error::Usage(format!(
                "backward_q on actor-critic variant {:?}",
                self.net.variant
            ))),
        }
    }

    /// Backward for actor-critic variants. `dlogits` is dLoss/d(policy
    /// logits) (None to skip the policy path); `value_grads` carries
    /// (1-based head index, dLoss/dV) pairs. Heads without entries receive no
    /// gradient at all.
    pub fn backward_actor_critic(
        &self,
        snap: &Snapshot<S>,
        dlogits: Option<&[S]>,
        value_grads: &[(usize, S)],
        grads: &mut GradMap<S>,
    ) -> Result<()> {
        let n = self.net.config.action_count;
        if let Some(dl) = dlogits {
            if dl.len() != n {
                return Err(Error::shape("policy logits upstream", &[n], &[dl.len()]));
            }
        }
        for &(head, _) in value_grads {
            if head == 0 || head > self.net.variant.value_heads() {
                return Err(Error::Usage(format!(
                    "value head {head} out of range for {:?}",
                    self.net.variant
                )));
            }
        }
        match (&self.net.topology, &self.caches) {
            (
                Topology::Shared { trunk, pi_head, v_heads },
                PassCaches::Shared { trunk_caches, pi_caches, v_caches },
            ) => {
                let mut h_grad: Option<Tensor<S>> = None;
                let add = |g: Tensor<S>, acc: &mut Option<Tensor<S>>| -> Result<()> {
                    match acc {
                        Some(t) => t.add_assign(&g),
                        None => {
                            *acc = Some(g);
                            Ok(())
                        }
                    }
                };
                if let Some(dl) = dlogits {
                    let up = Tensor::from_vec(&[n], dl.to_vec())?;
                    let g = pi_head.backward(snap, pi_caches, &up, grads)?;
                    add(g, &mut h_grad)?;
                }
                for &(head, coeff) in value_grads {
                    let up = Tensor::from_vec(&[1], vec![coeff])?;
                    let g = v_heads[head - 1].backward(snap, &v_caches[head - 1], &up, grads)?;
                    add(g, &mut h_grad)?;
                }
                if let Some(g) = h_grad {
                    trunk.backward(snap, trunk_caches, &g, grads)?;
                }
                Ok(())
            }
            (
                Topology::Split { shared, branches, v_heads, pi_head },
                PassCaches::Split { shared_caches, branch_caches, v_caches, pi_caches, h_dims },
            ) => {
                let mut g1: Option<Tensor<S>> = None;
                let mut g2: Option<Tensor<S>> = None;
                if let Some(dl) = dlogits {
                    let up = Tensor::from_vec(&[n], dl.to_vec())?;
                    let joint = pi_head.backward(snap, pi_caches, &up, grads)?;
                    let (a, b) = joint.data().split_at(h_dims[0]);
                    g1 = Some(Tensor::from_vec(&[h_dims[0]], a.to_vec())?);
                    g2 = Some(Tensor::from_vec(&[h_dims[1]], b.to_vec())?);
                }
                for &(head, coeff) in value_grads {
                    let up = Tensor::from_vec(&[1], vec![coeff])?;
                    let g = v_heads[head - 1].backward(snap, &v_caches[head - 1], &up, grads)?;
                    let slot = if head == 1 { &mut g1 } else { &mut g2 };
                    match slot {
                        Some(t) => t.add_assign(&g)?,
                        None => *slot = Some(g),
                    }
                }
                let mut base_grad: Option<Tensor<S>> = None;
                for (g, (branch, caches)) in [g1, g2]
                    .into_iter()
                    .zip(branches.iter().zip(branch_caches.iter()))
                {
                    if let Some(g) = g {
                        let bg = branch.backward(snap, caches, &g, grads)?;
                        match &mut base_grad {
                            Some(t) => t.add_assign(&bg)?,
                            None => base_grad = Some(bg),
                        }
                    }
                }
                if let Some(g) = base_grad {
                    shared.backward(snap, shared_caches, &g, grads)?;
                }
                Ok(())
            }
            _ => Err(Error::Usage(format!(
                "backward_actor_critic on q-valued variant {:?}",
                self.net.variant
            ))),
        }
    }
}

/// Q(s,a) = V(s) + A(s,a), exactly additive (no mean or max subtraction).
pub fn dueling_combine<S: Scalar>(v: S, advantages: &[S]) -> Vec<S> {
    advantages.iter().map(|&a| v + a).collect()
}

/// Sample an action index with the probabilities of `policy`.
pub fn action_sample<S: Scalar>(policy: &[S], rng: &mut ChaCha8Rng) -> Result<usize> {
    if policy.is_empty() {
        return Err(Error::Usage("action_sample on empty policy".into()));
    }
    let total: f64 = policy.iter().map(|p| p.as_f64()).sum();
    if (total - 1.0).abs() > 1e-4 {
        return Err(Error::Usage(format!(
            "degenerate policy vector: probabilities sum to {total}"
        )));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, p) in policy.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return Ok(i);
        }
    }
    Ok(policy.len() - 1)
}
