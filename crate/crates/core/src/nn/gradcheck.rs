use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

use super::layers::{layer_backward, layer_forward, Layer, LayerSpec, Stack};
use super::store::{GradMap, ParamStore, Snapshot};

pub const FD_STEP: f64 = 1e-5;

/// |a - n| / max(|a|, |n|, 1e-8)
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs().max(numeric.abs()).max(1e-8))
}

/// Central finite differences of `objective` w.r.t. every parameter in the
/// snapshot. The objective must be a pure function of the snapshot.
pub fn numeric_gradients(
    snap: &Snapshot<f64>,
    objective: &mut dyn FnMut(&Snapshot<f64>) -> Result<f64>,
) -> Result<GradMap<f64>> {
    let mut grads = GradMap::new();
    let names: Vec<String> = snap.iter().map(|(k, _)| k.to_string()).collect();
    let mut work = snap.clone();
    for name in names {
        let base = snap.get(&name)?.clone();
        let mut grad = Tensor::zeros(base.shape());
        for idx in 0..base.len() {
            let mut plus = base.clone();
            plus.data_mut()[idx] += FD_STEP;
            work.set(&name, plus)?;
            let up = objective(&work)?;

            let mut minus = base.clone();
            minus.data_mut()[idx] -= FD_STEP;
            work.set(&name, minus)?;
            let down = objective(&work)?;

            grad.data_mut()[idx] = (up - down) / (2.0 * FD_STEP);
        }
        work.set(&name, base)?;
        grads.accumulate(&name, grad)?;
    }
    Ok(grads)
}

/// Central finite differences of `objective` w.r.t. a raw input tensor.
pub fn numeric_input_gradient(
    input: &Tensor<f64>,
    objective: &mut dyn FnMut(&Tensor<f64>) -> Result<f64>,
) -> Result<Tensor<f64>> {
    let mut grad = Tensor::zeros(input.shape());
    for idx in 0..input.len() {
        let mut plus = input.clone();
        plus.data_mut()[idx] += FD_STEP;
        let up = objective(&plus)?;
        let mut minus = input.clone();
        minus.data_mut()[idx] -= FD_STEP;
        let down = objective(&minus)?;
        grad.data_mut()[idx] = (up - down) / (2.0 * FD_STEP);
    }
    Ok(grad)
}

/// Max relative error over the union of parameter names. A name missing from
/// one side is treated as an all-zero gradient (head-isolation contract).
pub fn max_rel_error(analytic: &GradMap<f64>, numeric: &GradMap<f64>) -> f64 {
    let mut worst = 0.0f64;
    let mut names: Vec<&str> = analytic.names().chain(numeric.names()).collect();
    names.sort_unstable();
    names.dedup();
    for name in names {
        let zero_like = |other: Option<&Tensor<f64>>| {
            other.map(|t| Tensor::zeros(t.shape())).unwrap_or_else(|| Tensor::scalar(0.0))
        };
        let a = analytic.get(name).cloned().unwrap_or_else(|| zero_like(numeric.get(name)));
        let n = numeric.get(name).cloned().unwrap_or_else(|| zero_like(analytic.get(name)));
        for (&av, &nv) in a.data().iter().zip(n.data().iter()) {
            worst = worst.max(rel_error(av, nv));
        }
    }
    worst
}

/// Random input whose entries stay away from relu/maxpool decision
/// boundaries so finite differences are well-posed.
pub fn fd_safe_input(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    while data.len() < len {
        let v: f64 = rng.random_range(-1.0..1.0);
        if v.abs() < 0.05 {
            continue;
        }
        if data.iter().any(|&x: &f64| (x - v).abs() < 1e-3) {
            continue;
        }
        data.push(v);
    }
    Tensor::from_vec(shape, data).unwrap()
}

/// Check one layer: analytic input and parameter gradients of a fixed linear
/// probe of the output against central finite differences. Returns the max
/// relative error.
pub fn gradient_check_layer(
    spec: &LayerSpec,
    input_shape: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let input = fd_safe_input(input_shape, rng);
    let out_shape = spec.output_shape(input_shape)?;
    let probe = fd_safe_input(&out_shape, rng);

    let params: Option<(Tensor<f64>, Tensor<f64>)> = spec.param_shapes().map(|(ws, bs)| {
        (fd_safe_input(&ws, rng), fd_safe_input(&bs, rng))
    });
    fn with(p: &Option<(Tensor<f64>, Tensor<f64>)>) -> Option<(&Tensor<f64>, &Tensor<f64>)> {
        p.as_ref().map(|(w, b)| (w, b))
    }

    let loss = |p: Option<(&Tensor<f64>, &Tensor<f64>)>, x: &Tensor<f64>| -> Result<f64> {
        let (out, _) = layer_forward(spec, p, x)?;
        Ok(out
            .data()
            .iter()
            .zip(probe.data().iter())
            .map(|(&o, &c)| o * c)
            .sum())
    };

    let (_, cache) = layer_forward(spec, with(&params), &input)?;
    let (dx, dp) = layer_backward(spec, with(&params), &cache, &probe)?;

    let mut worst = 0.0f64;
    let dx_num = numeric_input_gradient(&input, &mut |x| loss(with(&params), x))?;
    for (&a, &n) in dx.data().iter().zip(dx_num.data().iter()) {
        worst = worst.max(rel_error(a, n));
    }

    if let (Some((w, b)), Some((dw, db))) = (&params, &dp) {
        for (tensor, grad, which) in [(w, dw, true), (b, db, false)] {
            for idx in 0..tensor.len() {
                let mut plus = tensor.clone();
                plus.data_mut()[idx] += FD_STEP;
                let mut minus = tensor.clone();
                minus.data_mut()[idx] -= FD_STEP;
                let (up, down) = if which {
                    (
                        loss(Some((&plus, b)), &input)?,
                        loss(Some((&minus, b)), &input)?,
                    )
                } else {
                    (
                        loss(Some((w, &plus)), &input)?,
                        loss(Some((w, &minus)), &input)?,
                    )
                };
                let numeric = (up - down) / (2.0 * FD_STEP);
                worst = worst.max(rel_error(grad.data()[idx], numeric));
            }
        }
    }
    Ok(worst)
}

/// Check a whole stack: analytic parameter gradients of a linear probe of
/// the stack output against finite differences over every registered
/// parameter. Returns the max relative error (0 for parameter-free stacks).
pub fn gradient_check_stack(
    stack: &Stack,
    store: &ParamStore<f64>,
    input: &Tensor<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let snap = store.snapshot();
    let out_shape = stack.output_shape(input.shape())?;
    let probe = fd_safe_input(&out_shape, rng);

    let mut objective = |s: &Snapshot<f64>| -> Result<f64> {
        let (out, _) = stack.forward(s, input)?;
        Ok(out
            .data()
            .iter()
            .zip(probe.data().iter())
            .map(|(&o, &c)| o * c)
            .sum())
    };

    let (_, caches) = stack.forward(&snap, input)?;
    let mut analytic = GradMap::new();
    stack.backward(&snap, &caches, &probe, &mut analytic)?;
    let numeric = numeric_gradients(&snap, &mut objective)?;
    Ok(max_rel_error(&analytic, &numeric))
}

/// Convenience builder for tiny test stacks with freshly registered
/// parameters.
pub fn register_stack(
    layers: Vec<(LayerSpec, Option<&str>)>,
    store: &mut ParamStore<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Stack> {
    let mut out = Vec::new();
    for (spec, group) in layers {
        match group {
            Some(g) => {
                let (ws, bs) = spec.param_shapes().expect("named layer must be parametric");
                store.register(&format!("{g}/w"), fd_safe_input(&ws, rng))?;
                store.register(&format!("{g}/b"), fd_safe_input(&bs, rng))?;
                out.push(Layer::named(spec, g));
            }
            None => out.push(Layer::plain(spec)),
        }
    }
    Ok(Stack::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Stream};

    #[test]
    fn every_layer_kind_matches_finite_differences() {
        let mut rng = seeded(11, Stream::Init, 0);
        let cases: Vec<(LayerSpec, Vec<usize>)> = vec![
            (
                LayerSpec::Conv2d {
                    in_channels: 2,
                    out_channels: 3,
                    kernel_h: 2,
                    kernel_w: 2,
                    stride: 1,
                },
                vec![2, 4, 4],
            ),
            (
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel_h: 3,
                    kernel_w: 2,
                    stride: 2,
                },
                vec![1, 7, 6],
            ),
            (LayerSpec::MaxPool2d { pool_h: 2, pool_w: 2 }, vec![2, 5, 4]),
            (LayerSpec::FullyConnected { in_dim: 6, out_dim: 4 }, vec![6]),
            (LayerSpec::Relu, vec![7]),
            (LayerSpec::Softmax, vec![5]),
        ];
        for (spec, shape) in cases {
            let err = gradient_check_layer(&spec, &shape, &mut rng).unwrap();
            assert!(err < 1e-4, "{spec:?}: rel error {err}");
        }
    }

    #[test]
    fn corrupted_backward_is_detected() {
        // Sanity check of the harness itself: a sign flip in the analytic
        // gradient must produce a large relative error.
        let mut rng = seeded(12, Stream::Init, 0);
        let spec = LayerSpec::FullyConnected { in_dim: 3, out_dim: 2 };
        let input = fd_safe_input(&[3], &mut rng);
        let probe = fd_safe_input(&[2], &mut rng);
        let w = fd_safe_input(&[2, 3], &mut rng);
        let b = fd_safe_input(&[2], &mut rng);
        let (_, cache) = layer_forward(&spec, Some((&w, &b)), &input).unwrap();
        let (_, dp) = layer_backward(&spec, Some((&w, &b)), &cache, &probe).unwrap();
        let (mut dw, _) = dp.unwrap();
        dw.scale(-1.0);

        let mut worst = 0.0f64;
        for idx in 0..w.len() {
            let mut plus = w.clone();
            plus.data_mut()[idx] += FD_STEP;
            let mut minus = w.clone();
            minus.data_mut()[idx] -= FD_STEP;
            let f = |wt: &Tensor<f64>| -> f64 {
                let (out, _) = layer_forward(&spec, Some((wt, &b)), &input).unwrap();
                out.data().iter().zip(probe.data().iter()).map(|(&o, &c)| o * c).sum()
            };
            let numeric = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(dw.data()[idx], numeric));
        }
        assert!(worst > 0.1, "sign flip went undetected: {worst}");
    }

    #[test]
    fn parameter_free_stack_checks_vacuously() {
        let mut rng = seeded(13, Stream::Init, 0);
        let mut store = ParamStore::new();
        let stack = register_stack(
            vec![(LayerSpec::Relu, None), (LayerSpec::Softmax, None)],
            &mut store,
            &mut rng,
        )
        .unwrap();
        let input = fd_safe_input(&[4], &mut rng);
        let err = gradient_check_stack(&stack, &store, &input, &mut rng).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn mixed_stack_matches_finite_differences() {
        let mut rng = seeded(14, Stream::Init, 0);
        let mut store = ParamStore::new();
        let stack = register_stack(
            vec![
                (
                    LayerSpec::Conv2d {
                        in_channels: 1,
                        out_channels: 2,
                        kernel_h: 2,
                        kernel_w: 2,
                        stride: 1,
                    },
                    Some("c1"),
                ),
                (LayerSpec::Relu, None),
                (LayerSpec::MaxPool2d { pool_h: 2, pool_w: 2 }, None),
                (LayerSpec::FullyConnected { in_dim: 8, out_dim: 3 }, Some("fc")),
                (LayerSpec::Softmax, None),
            ],
            &mut store,
            &mut rng,
        )
        .unwrap();
        let input = fd_safe_input(&[1, 5, 5], &mut rng);
        let err = gradient_check_stack(&stack, &store, &input, &mut rng).unwrap();
        assert!(err < 1e-4, "rel error {err}");
    }
}
