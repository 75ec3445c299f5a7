use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::store::{GradMap, Snapshot};

/// Layer kinds with their hyperparameters. Convolution and pooling use valid
/// windows (no padding); rows/columns that do not fit a full window are
/// dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
    },
    MaxPool2d {
        pool_h: usize,
        pool_w: usize,
    },
    FullyConnected {
        in_dim: usize,
        out_dim: usize,
    },
    Relu,
    Softmax,
}

impl LayerSpec {
    /// Output shape for a given input shape, or a shape error.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
            } => {
                if stride == 0 {
                    return Err(Error::Config("conv2d stride must be >= 1".into()));
                }
                let [c, h, w] = expect_3d("conv2d input", input)?;
                if c != in_channels {
                    return Err(Error::shape("conv2d channels", &[in_channels], &[c]));
                }
                if h < kernel_h || w < kernel_w {
                    return Err(Error::shape("conv2d window", &[kernel_h, kernel_w], &[h, w]));
                }
                let oh = (h - kernel_h) / stride + 1;
                let ow = (w - kernel_w) / stride + 1;
                Ok(vec![out_channels, oh, ow])
            }
            LayerSpec::MaxPool2d { pool_h, pool_w } => {
                let [c, h, w] = expect_3d("maxpool2d input", input)?;
                if h < pool_h || w < pool_w {
                    return Err(Error::shape("maxpool2d window", &[pool_h, pool_w], &[h, w]));
                }
                Ok(vec![c, h / pool_h, w / pool_w])
            }
            LayerSpec::FullyConnected { in_dim, out_dim } => {
                let flat: usize = input.iter().product();
                if flat != in_dim {
                    return Err(Error::shape("fully_connected input", &[in_dim], input));
                }
                Ok(vec![out_dim])
            }
            LayerSpec::Relu | LayerSpec::Softmax => Ok(input.to_vec()),
        }
    }

    /// Shapes of (weight, bias) for parametric layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some((vec![out_channels, in_channels, kernel_h, kernel_w], vec![out_channels])),
            LayerSpec::FullyConnected { in_dim, out_dim } => {
                Some((vec![out_dim, in_dim], vec![out_dim]))
            }
            _ => None,
        }
    }

    /// (fan_in, fan_out) for weight initialization.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some((in_channels * kernel_h * kernel_w, out_channels * kernel_h * kernel_w)),
            LayerSpec::FullyConnected { in_dim, out_dim } => Some((in_dim, out_dim)),
            _ => None,
        }
    }
}

fn expect_3d(context: &str, shape: &[usize]) -> Result<[usize; 3]> {
    match shape {
        &[c, h, w] => Ok([c, h, w]),
        other => Err(Error::shape(context, &[0, 0, 0], other)),
    }
}

/// Whatever the matching backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub enum Cache<S: Scalar> {
    Conv { input: Tensor<S> },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Fc { input: Tensor<S> },
    Relu { mask: Vec<bool> },
    Softmax { output: Tensor<S> },
}

/// Forward pass of a single layer. `params` carries (weight, bias) for
/// parametric layers and must be `None` otherwise.
pub fn layer_forward<S: Scalar>(
    spec: &LayerSpec,
    params: Option<(&Tensor<S>, &Tensor<S>)>,
    input: &Tensor<S>,
) -> Result<(Tensor<S>, Cache<S>)> {
    let out_shape = spec.output_shape(input.shape())?;
    let (output, cache) = match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
        } => {
            let (weight, bias) = expect_params(spec, params)?;
            let [_, h, w] = expect_3d("conv2d input", input.shape())?;
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let mut out = Tensor::zeros(&out_shape);
            let x = input.data();
            let wt = weight.data();
            let b = bias.data();
            let o = out.data_mut();
            for oc in 0..out_channels {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = b[oc];
                        for ic in 0..in_channels {
                            for u in 0..kernel_h {
                                let xrow = (ic * h + i * stride + u) * w + j * stride;
                                let wrow = ((oc * in_channels + ic) * kernel_h + u) * kernel_w;
                                for v in 0..kernel_w {
                                    acc += wt[wrow + v] * x[xrow + v];
                                }
                            }
                        }
                        o[(oc * oh + i) * ow + j] = acc;
                    }
                }
            }
            (out, Cache::Conv { input: input.clone() })
        }
        LayerSpec::MaxPool2d { pool_h, pool_w } => {
            let [c, h, w] = expect_3d("maxpool2d input", input.shape())?;
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let mut out = Tensor::zeros(&out_shape);
            let mut argmax = vec![0usize; out.len()];
            let x = input.data();
            let o = out.data_mut();
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut best_idx = (ch * h + i * pool_h) * w + j * pool_w;
                        let mut best = x[best_idx];
                        for u in 0..pool_h {
                            for v in 0..pool_w {
                                let idx = (ch * h + i * pool_h + u) * w + j * pool_w + v;
                                if x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let oidx = (ch * oh + i) * ow + j;
                        o[oidx] = best;
                        argmax[oidx] = best_idx;
                    }
                }
            }
            (
                out,
                Cache::Pool {
                    input_shape: input.shape().to_vec(),
                    argmax,
                },
            )
        }
        LayerSpec::FullyConnected { in_dim, out_dim } => {
            let (weight, bias) = expect_params(spec, params)?;
            let mut out = Tensor::zeros(&[out_dim]);
            let x = input.data();
            let wt = weight.data();
            let o = out.data_mut();
            for r in 0..out_dim {
                let mut acc = bias.data()[r];
                let row = r * in_dim;
                for k in 0..in_dim {
                    acc += wt[row + k] * x[k];
                }
                o[r] = acc;
            }
            (out, Cache::Fc { input: input.clone() })
        }
        LayerSpec::Relu => {
            let mut out = input.clone();
            let mask: Vec<bool> = input.data().iter().map(|&v| v > S::zero()).collect();
            for (v, &keep) in out.data_mut().iter_mut().zip(mask.iter()) {
                if !keep {
                    *v = S::zero();
                }
            }
            (out, Cache::Relu { mask })
        }
        LayerSpec::Softmax => {
            let out = softmax(input)?;
            let cache = Cache::Softmax { output: out.clone() };
            (out, cache)
        }
    };
    output.ensure_finite("layer_forward output")?;
    Ok((output, cache))
}

/// Numerically stabilized softmax over a 1-d logit vector.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    if logits.shape().len() != 1 || logits.is_empty() {
        return Err(Error::shape("softmax input", &[1], logits.shape()));
    }
    let max = logits
        .data()
        .iter()
        .cloned()
        .fold(S::neg_infinity(), S::max);
    let mut out = logits.clone();
    let mut sum = S::zero();
    for v in out.data_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in out.data_mut() {
        *v /= sum;
    }
    Ok(out)
}

/// Backward pass of a single layer: gradient of the loss w.r.t. the layer
/// input and, for parametric layers, w.r.t. (weight, bias).
pub fn layer_backward<S: Scalar>(
    spec: &LayerSpec,
    params: Option<(&Tensor<S>, &Tensor<S>)>,
    cache: &Cache<S>,
    upstream: &Tensor<S>,
) -> Result<(Tensor<S>, Option<(Tensor<S>, Tensor<S>)>)> {
    let (input_grad, param_grads) = match (*spec).clone() {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
        } => {
            let (weight, _) = expect_params(spec, params)?;
            let input = match cache {
                Cache::Conv { input } => input,
                _ => return Err(Error::Usage("conv2d backward: wrong cache kind".into())),
            };
            let [_, h, w] = expect_3d("conv2d input", input.shape())?;
            let out_shape = spec.output_shape(input.shape())?;
            if upstream.shape() != out_shape.as_slice() {
                return Err(Error::shape("conv2d upstream", &out_shape, upstream.shape()));
            }
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let mut dx = Tensor::zeros(input.shape());
            let mut dw = Tensor::zeros(weight.shape());
            let mut db = Tensor::zeros(&[out_channels]);
            let x = input.data();
            let wt = weight.data();
            let g = upstream.data();
            for oc in 0..out_channels {
                for i in 0..oh {
                    for j in 0..ow {
                        let go = g[(oc * oh + i) * ow + j];
                        db.data_mut()[oc] += go;
                        for ic in 0..in_channels {
                            for u in 0..kernel_h {
                                let xrow = (ic * h + i * stride + u) * w + j * stride;
                                let wrow = ((oc * in_channels + ic) * kernel_h + u) * kernel_w;
                                for v in 0..kernel_w {
                                    dw.data_mut()[wrow + v] += go * x[xrow + v];
                                    dx.data_mut()[xrow + v] += go * wt[wrow + v];
                                }
                            }
                        }
                    }
                }
            }
            (dx, Some((dw, db)))
        }
        LayerSpec::MaxPool2d { .. } => {
            let (input_shape, argmax) = match cache {
                Cache::Pool { input_shape, argmax } => (input_shape, argmax),
                _ => return Err(Error::Usage("maxpool2d backward: wrong cache kind".into())),
            };
            if upstream.len() != argmax.len() {
                return Err(Error::shape("maxpool2d upstream", &[argmax.len()], upstream.shape()));
            }
            let mut dx = Tensor::zeros(input_shape);
            for (&src, &go) in argmax.iter().zip(upstream.data().iter()) {
                dx.data_mut()[src] += go;
            }
            (dx, None)
        }
        LayerSpec::FullyConnected { in_dim, out_dim } => {
            let (weight, _) = expect_params(spec, params)?;
            let input = match cache {
                Cache::Fc { input } => input,
                _ => return Err(Error::Usage("fully_connected backward: wrong cache kind".into())),
            };
            if upstream.len() != out_dim {
                return Err(Error::shape("fully_connected upstream", &[out_dim], upstream.shape()));
            }
            let mut dx = Tensor::zeros(input.shape());
            let mut dw = Tensor::zeros(weight.shape());
            let mut db = Tensor::zeros(&[out_dim]);
            let x = input.data();
            let wt = weight.data();
            let g = upstream.data();
            for r in 0..out_dim {
                let go = g[r];
                db.data_mut()[r] = go;
                let row = r * in_dim;
                for k in 0..in_dim {
                    dw.data_mut()[row + k] = go * x[k];
                    dx.data_mut()[k] += go * wt[row + k];
                }
            }
            (dx, Some((dw, db)))
        }
        LayerSpec::Relu => {
            let mask = match cache {
                Cache::Relu { mask } => mask,
                _ => return Err(Error::Usage("relu backward: wrong cache kind".into())),
            };
            if upstream.len() != mask.len() {
                return Err(Error::shape("relu upstream", &[mask.len()], upstream.shape()));
            }
            let mut dx = upstream.clone();
            for (v, &keep) in dx.data_mut().iter_mut().zip(mask.iter()) {
                if !keep {
                    *v = S::zero();
                }
            }
            (dx, None)
        }
        LayerSpec::Softmax => {
            let output = match cache {
                Cache::Softmax { output } => output,
                _ => return Err(Error::Usage("softmax backward: wrong cache kind".into())),
            };
            if upstream.len() != output.len() {
                return Err(Error::shape("softmax upstream", &[output.len()], upstream.shape()));
            }
            let dot: S = output
                .data()
                .iter()
                .zip(upstream.data().iter())
                .map(|(&y, &g)| y * g)
                .sum();
            let mut dx = Tensor::zeros(output.shape());
            for ((d, &y), &g) in dx.data_mut().iter_mut().zip(output.data()).zip(upstream.data()) {
                *d = y * (g - dot);
            }
            (dx, None)
        }
    };
    input_grad.ensure_finite("layer_backward input_grad")?;
    if let Some((dw, db)) = &param_grads {
        dw.ensure_finite("layer_backward weight grad")?;
        db.ensure_finite("layer_backward bias grad")?;
    }
    Ok((input_grad, param_grads))
}

fn expect_params<'a, S: Scalar>(
    spec: &LayerSpec,
    params: Option<(&'a Tensor<S>, &'a Tensor<S>)>,
) -> Result<(&'a Tensor<S>, &'a Tensor<S>)> {
    let (weight, bias) = params.ok_or_else(|| {
        Error::Usage(format!("layer {spec:?} requires parameters, none supplied"))
    })?;
    let (ws, bs) = spec.param_shapes().expect("parametric layer");
    if weight.shape() != ws.as_slice() {
        return Err(Error::shape("layer weight", &ws, weight.shape()));
    }
    if bias.shape() != bs.as_slice() {
        return Err(Error::shape("layer bias", &bs, bias.shape()));
    }
    Ok((weight, bias))
}

/// One layer of a network, with the names its parameters are stored under.
#[derive(Debug, Clone)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weight: Option<String>,
    pub bias: Option<String>,
}

impl Layer {
    pub fn plain(spec: LayerSpec) -> Self {
        Layer {
            spec,
            weight: None,
            bias: None,
        }
    }

    pub fn named(spec: LayerSpec, group: &str) -> Self {
        Layer {
            weight: Some(format!("{group}/w")),
            bias: Some(format!("{group}/b")),
            spec,
        }
    }

    fn params<'a, S: Scalar>(&self, snap: &'a Snapshot<S>) -> Result<Option<(&'a Tensor<S>, &'a Tensor<S>)>> {
        match (&self.weight, &self.bias) {
            (Some(w), Some(b)) => Ok(Some((snap.get(w)?, snap.get(b)?))),
            _ => Ok(None),
        }
    }
}

/// An ordered sequence of layers evaluated as a chain.
#[derive(Debug, Clone, Default)]
pub struct Stack {
    pub layers: Vec<Layer>,
}

impl Stack {
    pub fn new(layers: Vec<Layer>) -> Self {
        Stack { layers }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for layer in &self.layers {
            shape = layer.spec.output_shape(&shape)?;
        }
        Ok(shape)
    }

    pub fn forward<S: Scalar>(
        &self,
        snap: &Snapshot<S>,
        input: &Tensor<S>,
    ) -> Result<(Tensor<S>, Vec<Cache<S>>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for layer in &self.layers {
            let (out, cache) = layer_forward(&layer.spec, layer.params(snap)?, &current)?;
            caches.push(cache);
            current = out;
        }
        Ok((current, caches))
    }

    /// Backward through the whole chain; parameter gradients accumulate into
    /// `grads` under the layer's parameter names. Returns the gradient w.r.t.
    /// the stack input.
    pub fn backward<S: Scalar>(
        &self,
        snap: &Snapshot<S>,
        caches: &[Cache<S>],
        upstream: &Tensor<S>,
        grads: &mut GradMap<S>,
    ) -> Result<Tensor<S>> {
        if caches.len() != self.layers.len() {
            return Err(Error::Usage("stack backward: cache count mismatch".into()));
        }
        let mut g = upstream.clone();
        for (layer, cache) in self.layers.iter().zip(caches.iter()).rev() {
            let (dx, dp) = layer_backward(&layer.spec, layer.params(snap)?, cache, &g)?;
            if let Some((dw, db)) = dp {
                grads.accumulate(layer.weight.as_ref().unwrap(), dw)?;
                grads.accumulate(layer.bias.as_ref().unwrap(), db)?;
            }
            g = dx;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t<S: Scalar>(shape: &[usize], data: Vec<S>) -> Tensor<S> {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        let spec = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
        };
        let w = t(&[1, 1, 1, 1], vec![1.0f64]);
        let b = t(&[1], vec![0.0]);
        let x = t(&[1, 2, 2], vec![0.5, -1.0, 2.0, 3.0]);
        let (y, _) = layer_forward(&spec, Some((&w, &b)), &x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_sums_window() {
        // 2x2 all-ones kernel over [[1,2],[3,4]] -> 10
        let spec = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel_h: 2,
            kernel_w: 2,
            stride: 1,
        };
        let w = t(&[1, 1, 2, 2], vec![1.0f64; 4]);
        let b = t(&[1], vec![0.0]);
        let x = t(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let (y, _) = layer_forward(&spec, Some((&w, &b)), &x).unwrap();
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn maxpool_takes_window_max_and_drops_trailing() {
        let spec = LayerSpec::MaxPool2d { pool_h: 2, pool_w: 2 };
        let x = t(&[1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        let (y, _) = layer_forward::<f64>(&spec, None, &x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);

        // 3x3 input: trailing row/column dropped.
        let x = t(&[1, 3, 3], vec![9.0f64, 1.0, 5.0, 2.0, 3.0, 5.0, 5.0, 5.0, 5.0]);
        let (y, _) = layer_forward::<f64>(&spec, None, &x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn softmax_symmetry_and_shift_stability() {
        let x = t(&[2], vec![0.0f64, 0.0]);
        let y = softmax(&x).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
        assert!((y.data()[1] - 0.5).abs() < 1e-12);

        let a = softmax(&t(&[3], vec![1.0f64, 2.0, 3.0])).unwrap();
        let b = softmax(&t(&[3], vec![101.0f64, 102.0, 103.0])).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
    }

    #[test]
    fn relu_backward_gates_at_zero() {
        let x = t(&[2], vec![-2.0f64, 3.0]);
        let (_, cache) = layer_forward::<f64>(&LayerSpec::Relu, None, &x).unwrap();
        let up = t(&[2], vec![1.0, 1.0]);
        let (dx, _) = layer_backward::<f64>(&LayerSpec::Relu, None, &cache, &up).unwrap();
        assert_eq!(dx.data(), &[0.0, 1.0]);
    }

    #[test]
    fn fc_identity_weights_pass_gradient_through() {
        let spec = LayerSpec::FullyConnected { in_dim: 3, out_dim: 3 };
        let mut w = Tensor::<f64>::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let b = Tensor::zeros(&[3]);
        let x = t(&[3], vec![1.0, -2.0, 0.5]);
        let (y, cache) = layer_forward(&spec, Some((&w, &b)), &x).unwrap();
        assert_eq!(y.data(), x.data());
        let up = t(&[3], vec![0.1, 0.2, 0.3]);
        let (dx, _) = layer_backward(&spec, Some((&w, &b)), &cache, &up).unwrap();
        assert_eq!(dx.data(), up.data());
    }

    #[test]
    fn fc_flattens_conv_output() {
        let spec = LayerSpec::FullyConnected { in_dim: 4, out_dim: 1 };
        let w = t(&[1, 4], vec![1.0f64, 1.0, 1.0, 1.0]);
        let b = t(&[1], vec![0.0]);
        let x = t(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let (y, _) = layer_forward(&spec, Some((&w, &b)), &x).unwrap();
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn shape_errors_report_expected_vs_actual() {
        let spec = LayerSpec::FullyConnected { in_dim: 4, out_dim: 1 };
        let w = t(&[1, 4], vec![1.0f64; 4]);
        let b = t(&[1], vec![0.0]);
        let x = t(&[3], vec![1.0, 2.0, 3.0]);
        let err = layer_forward(&spec, Some((&w, &b)), &x).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }
}
