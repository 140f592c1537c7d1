//! Forward pass, losses, backpropagation, and SGD updates.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Sample;

use super::spec::{LayerSpec, ModelParams};
use super::{GradientVector, Loss, NnError};

/// Predictions are clamped into `[EPS, 1 - EPS]` before logs so the
/// per-class cross-entropy stays finite at saturated outputs.
pub const XENT_CLAMP: f64 = 1e-12;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Runs the forward pass for each input row, keeping every layer's
/// activations. `activations[0]` is the input itself.
fn forward_sample(params: &ModelParams, input: &[f64]) -> Result<Vec<Vec<f64>>, NnError> {
    let spec = params.spec();
    if !spec.trainable() {
        return Err(NnError::NotTrainable);
    }
    let input_dim = spec.input_dim().expect("trainable spec has dense layers");
    if input.len() != input_dim {
        return Err(NnError::InputShape {
            expected: input_dim,
            got: input.len(),
        });
    }

    let theta = params.theta();
    let offsets = spec.dense_offsets();
    let last = spec.layers().len() - 1;

    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(spec.layers().len() + 1);
    activations.push(input.to_vec());

    for (li, layer) in spec.layers().iter().enumerate() {
        let LayerSpec::Dense { inputs, units } = *layer else {
            unreachable!("trainable spec contains only dense layers");
        };
        let (w_off, b_off, _) = offsets[li];
        let prev = &activations[li];
        let mut z = vec![0.0; units];
        for (u, zu) in z.iter_mut().enumerate() {
            let row = &theta[w_off + u * inputs..w_off + (u + 1) * inputs];
            let mut acc = theta[b_off + u];
            for (wi, xi) in row.iter().zip(prev.iter()) {
                acc += wi * xi;
            }
            *zu = acc;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite { layer: li, stage: "forward" });
        }
        if li == last {
            softmax_in_place(&mut z);
        } else {
            for v in z.iter_mut() {
                *v = sigmoid(*v);
            }
        }
        activations.push(z);
    }
    Ok(activations)
}

/// Class-probability predictions for a batch of input rows.
///
/// Each output row is a softmax distribution: entries in `(0, 1)` summing
/// to one.
pub fn forward<I: AsRef<[f64]>>(params: &ModelParams, inputs: &[I]) -> Result<Vec<Vec<f64>>, NnError> {
    inputs
        .iter()
        .map(|x| {
            forward_sample(params, x.as_ref()).map(|mut acts| acts.pop().expect("at least one layer"))
        })
        .collect()
}

fn check_batch_shapes(pred: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<(), NnError> {
    if pred.len() != labels.len() {
        return Err(NnError::ShapeMismatch(pred.len(), labels.len()));
    }
    if pred.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    for (p, y) in pred.iter().zip(labels) {
        if p.len() != y.len() {
            return Err(NnError::ShapeMismatch(p.len(), y.len()));
        }
    }
    Ok(())
}

/// Squared error `sum_c (pred_c - label_c)^2` per sample, averaged over
/// the batch.
pub fn loss_mse(pred: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<f64, NnError> {
    check_batch_shapes(pred, labels)?;
    let total: f64 = pred
        .iter()
        .zip(labels)
        .map(|(p, y)| p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(total / pred.len() as f64)
}

/// Per-class cross-entropy, summed over classes and averaged over the
/// batch: `-(1/n) sum_i sum_c [y ln p + (1 - y) ln(1 - p)]` with
/// predictions clamped away from 0 and 1.
pub fn loss_xent(pred: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<f64, NnError> {
    check_batch_shapes(pred, labels)?;
    let total: f64 = pred
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            p.iter()
                .zip(y)
                .map(|(&pc, &yc)| {
                    let pc = pc.clamp(XENT_CLAMP, 1.0 - XENT_CLAMP);
                    -(yc * pc.ln() + (1.0 - yc) * (1.0 - pc).ln())
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// dJ/dp for one sample, written into `out`.
fn output_gradient(loss: Loss, pred: &[f64], label: &[f64], out: &mut [f64]) {
    match loss {
        Loss::Mse => {
            for ((o, &p), &y) in out.iter_mut().zip(pred).zip(label) {
                *o = 2.0 * (p - y);
            }
        }
        Loss::CrossEntropy => {
            for ((o, &p), &y) in out.iter_mut().zip(pred).zip(label) {
                let p = p.clamp(XENT_CLAMP, 1.0 - XENT_CLAMP);
                *o = -(y / p - (1.0 - y) / (1.0 - p));
            }
        }
    }
}

/// Mean gradient of the loss over a batch of `(input, label)` pairs,
/// computed by backpropagation through the flat parameter layout.
pub fn backward<I, L>(params: &ModelParams, batch: &[(I, L)], loss: Loss) -> Result<GradientVector, NnError>
where
    I: AsRef<[f64]>,
    L: AsRef<[f64]>,
{
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let spec = params.spec();
    let theta = params.theta();
    let offsets = spec.dense_offsets();
    let last = spec.layers().len() - 1;
    let out_dim = spec.output_dim().ok_or(NnError::NotTrainable)?;

    let mut grad = vec![0.0; params.len()];
    for (input, label) in batch {
        let label = label.as_ref();
        if label.len() != out_dim {
            return Err(NnError::ShapeMismatch(out_dim, label.len()));
        }
        let activations = forward_sample(params, input.as_ref())?;
        let pred = &activations[last + 1];

        // Output delta: dJ/dp pushed through the softmax Jacobian.
        let mut dp = vec![0.0; out_dim];
        output_gradient(loss, pred, label, &mut dp);
        let weighted: f64 = dp.iter().zip(pred).map(|(d, p)| d * p).sum();
        let mut delta: Vec<f64> = dp
            .iter()
            .zip(pred)
            .map(|(d, p)| p * (d - weighted))
            .collect();

        for li in (0..spec.layers().len()).rev() {
            let LayerSpec::Dense { inputs, units } = spec.layers()[li] else {
                unreachable!();
            };
            let (w_off, b_off, _) = offsets[li];
            let prev = &activations[li];

            if delta.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: li, stage: "backward" });
            }
            for u in 0..units {
                let d = delta[u];
                let row = &mut grad[w_off + u * inputs..w_off + (u + 1) * inputs];
                for (g, &x) in row.iter_mut().zip(prev.iter()) {
                    *g += d * x;
                }
                grad[b_off + u] += d;
            }
            if li > 0 {
                // Sigmoid derivative expressed via the layer's output.
                let mut next = vec![0.0; inputs];
                for u in 0..units {
                    let d = delta[u];
                    let row = &theta[w_off + u * inputs..w_off + (u + 1) * inputs];
                    for (n, &w) in next.iter_mut().zip(row.iter()) {
                        *n += w * d;
                    }
                }
                for (n, &a) in next.iter_mut().zip(prev.iter()) {
                    *n *= a * (1.0 - a);
                }
                delta = next;
            }
        }
    }

    let scale = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    Ok(GradientVector::clean(grad))
}

/// One gradient-descent update: `theta - eta * g`, leaving the inputs
/// untouched.
pub fn sgd_step(params: &ModelParams, grad: &GradientVector, eta: f64) -> Result<ModelParams, NnError> {
    if grad.len() != params.len() {
        return Err(NnError::GradientLength {
            expected: params.len(),
            got: grad.len(),
        });
    }
    let theta: Vec<f64> = params
        .theta()
        .iter()
        .zip(grad.values())
        .map(|(t, g)| t - eta * g)
        .collect();
    ModelParams::new(params.spec().clone(), theta)
}

fn batch_pairs<'a>(shard: &'a [Sample], indices: &[usize]) -> Vec<(&'a [f64], &'a [f64])> {
    indices.iter().map(|&i| (shard[i].input(), shard[i].label())).collect()
}

/// Mini-batch gradient over an explicit sample ordering: the ordered shard
/// is split into `minibatches` contiguous pieces (remainder in the last)
/// and the per-piece mean gradients are averaged with equal weight.
pub fn minibatch_gradient_ordered(
    params: &ModelParams,
    shard: &[Sample],
    order: &[usize],
    minibatches: usize,
    loss: Loss,
) -> Result<GradientVector, NnError> {
    if minibatches == 0 {
        return Err(NnError::ZeroMinibatches);
    }
    if shard.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if shard.len() < minibatches {
        return Err(NnError::TooFewSamples {
            samples: shard.len(),
            minibatches,
        });
    }
    debug_assert_eq!(order.len(), shard.len());

    let base = shard.len() / minibatches;
    let mut sum = vec![0.0; params.len()];
    let mut cursor = 0;
    for m in 0..minibatches {
        let take = if m + 1 == minibatches { shard.len() - cursor } else { base };
        let pairs = batch_pairs(shard, &order[cursor..cursor + take]);
        cursor += take;
        let g = backward(params, &pairs, loss)?;
        for (s, v) in sum.iter_mut().zip(g.values()) {
            *s += v;
        }
    }
    let scale = 1.0 / minibatches as f64;
    for s in sum.iter_mut() {
        *s *= scale;
    }
    Ok(GradientVector::clean(sum))
}

/// Seeded mini-batch gradient: uniform random permutation, contiguous
/// split, equal-weight average of the mini-batch gradients. A single
/// mini-batch skips the shuffle and reduces to `backward` over the shard.
pub fn minibatch_gradient<R: Rng + ?Sized>(
    params: &ModelParams,
    shard: &[Sample],
    minibatches: usize,
    loss: Loss,
    rng: &mut R,
) -> Result<GradientVector, NnError> {
    if minibatches == 1 {
        if shard.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let pairs: Vec<(&[f64], &[f64])> = shard.iter().map(|s| (s.input(), s.label())).collect();
        return backward(params, &pairs, loss);
    }
    let mut order: Vec<usize> = (0..shard.len()).collect();
    order.shuffle(rng);
    minibatch_gradient_ordered(params, shard, &order, minibatches, loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::nn::ModelSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sample(rng: &mut ChaCha8Rng, dim: usize, classes: usize) -> Sample {
        let input: Vec<f64> = (0..dim).map(|_| rng.random_range(0.05..1.0)).collect();
        let class = rng.random_range(0..classes);
        Sample::from_class(input, dim, 1, class, classes).unwrap()
    }

    fn random_params(spec: &ModelSpec, seed: u64) -> ModelParams {
        spec.init_params(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    /// Independent per-neuron recomputation of the same architecture,
    /// reading the documented flat layout directly.
    fn forward_by_hand(params: &ModelParams, input: &[f64]) -> Vec<f64> {
        let mut act = input.to_vec();
        let mut cursor = 0;
        let layers = params.spec().layers();
        for (li, layer) in layers.iter().enumerate() {
            let LayerSpec::Dense { inputs, units } = *layer else { panic!() };
            let mut z = Vec::with_capacity(units);
            for u in 0..units {
                let mut acc = 0.0;
                for i in 0..inputs {
                    acc += params.theta()[cursor + u * inputs + i] * act[i];
                }
                acc += params.theta()[cursor + units * inputs + u];
                z.push(acc);
            }
            cursor += units * inputs + units;
            if li + 1 == layers.len() {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = exps.iter().sum();
                act = exps.iter().map(|e| e / s).collect();
            } else {
                act = z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
            }
        }
        act
    }

    #[test]
    fn zero_parameters_give_uniform_softmax() {
        let spec = ModelSpec::mlp(&[4, 10]).unwrap();
        let params = ModelParams::new(spec, vec![0.0; 4 * 10 + 10]).unwrap();
        let pred = forward(&params, &[vec![0.3, -0.1, 0.9, 0.5]]).unwrap();
        for &p in &pred[0] {
            assert!((p - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_single_layer_is_softmax_of_input() {
        let spec = ModelSpec::mlp(&[3, 3]).unwrap();
        let mut theta = vec![0.0; 3 * 3 + 3];
        for i in 0..3 {
            theta[i * 3 + i] = 1.0;
        }
        let params = ModelParams::new(spec, theta).unwrap();
        let x = vec![0.2, -0.4, 1.1];
        let pred = forward(&params, &[x.clone()]).unwrap();

        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = exps.iter().sum();
        for (got, e) in pred[0].iter().zip(&exps) {
            assert!((got - e / s).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_per_neuron_recomputation() {
        let spec = ModelSpec::mlp(&[7, 5, 4]).unwrap();
        let params = random_params(&spec, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = forward(&params, &[x.clone()]).unwrap();
            let want = forward_by_hand(&params, &x);
            for (g, w) in got[0].iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "engine {g} vs recomputation {w}");
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let spec = ModelSpec::mlp(&[6, 8, 10]).unwrap();
        let params = random_params(&spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        for row in forward(&params, &inputs).unwrap() {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let spec = ModelSpec::mlp(&[4, 2]).unwrap();
        let params = random_params(&spec, 0);
        assert!(matches!(
            forward(&params, &[vec![1.0; 3]]),
            Err(NnError::InputShape { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn mse_examples() {
        // Identical pred/label.
        assert_eq!(loss_mse(&[vec![0.2, 0.8]], &[vec![0.2, 0.8]]).unwrap(), 0.0);
        // Opposite one-hots: (1-0)^2 + (0-1)^2 = 2.
        assert_eq!(loss_mse(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]).unwrap(), 2.0);
        // Mean over per-sample losses 2 and 4 is 3.
        let pred = vec![vec![1.0, 0.0], vec![2.0, 0.0]];
        let labels = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(loss_mse(&pred, &labels).unwrap(), 3.0);
    }

    #[test]
    fn mse_rejects_shape_mismatch() {
        assert!(matches!(
            loss_mse(&[vec![1.0, 0.0]], &[vec![1.0]]),
            Err(NnError::ShapeMismatch(2, 1))
        ));
    }

    #[test]
    fn xent_examples() {
        // Perfect prediction collapses to ~0 after clamping.
        let one_hot = vec![vec![1.0, 0.0, 0.0]];
        assert!(loss_xent(&one_hot, &one_hot).unwrap() < 1e-6);
        // Two classes, uniform prediction: -(ln .5 + ln .5) = 2 ln 2.
        let loss = loss_xent(&[vec![0.5, 0.5]], &[vec![1.0, 0.0]]).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn xent_is_invariant_under_batch_duplication() {
        let pred = vec![vec![0.7, 0.3], vec![0.2, 0.8]];
        let labels = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let single = loss_xent(&pred, &labels).unwrap();
        let doubled = loss_xent(
            &[pred.clone(), pred.clone()].concat(),
            &[labels.clone(), labels].concat(),
        )
        .unwrap();
        assert!((single - doubled).abs() < 1e-12);
    }

    #[test]
    fn xent_saturated_prediction_does_not_panic() {
        let loss = loss_xent(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn backward_is_zero_at_a_symmetric_minimum() {
        // One input feeding two classes, zero input and equal biases:
        // the squared error against the (.5, .5) target is minimized
        // here, so the gradient vanishes along every coordinate.
        let spec = ModelSpec::mlp(&[1, 2]).unwrap();
        let params = ModelParams::new(spec, vec![0.0, 0.0, 0.7, 0.7]).unwrap();
        let batch = [(vec![0.0], vec![0.5, 0.5])];
        let g = backward(&params, &batch, Loss::Mse).unwrap();
        for v in g.values() {
            assert!(v.abs() < 1e-12);
        }
    }

    fn finite_difference_check(spec: &ModelSpec, loss: Loss, seed: u64) {
        let params = random_params(spec, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDEAD);
        let dim = spec.input_dim().unwrap();
        let classes = spec.output_dim().unwrap();
        let samples: Vec<Sample> = (0..6).map(|_| random_sample(&mut rng, dim, classes)).collect();
        let batch: Vec<(&[f64], &[f64])> = samples.iter().map(|s| (s.input(), s.label())).collect();
        let labels: Vec<Vec<f64>> = samples.iter().map(|s| s.label().to_vec()).collect();

        let analytic = backward(&params, &batch, loss).unwrap();
        let eps = 1e-5;
        for i in 0..params.len() {
            let mut up = params.theta().to_vec();
            up[i] += eps;
            let mut down = params.theta().to_vec();
            down[i] -= eps;
            let p_up = ModelParams::new(spec.clone(), up).unwrap();
            let p_down = ModelParams::new(spec.clone(), down).unwrap();
            let inputs: Vec<&[f64]> = samples.iter().map(|s| s.input()).collect();
            let l_up = loss.evaluate(&forward(&p_up, &inputs).unwrap(), &labels).unwrap();
            let l_down = loss.evaluate(&forward(&p_down, &inputs).unwrap(), &labels).unwrap();
            let numeric = (l_up - l_down) / (2.0 * eps);
            let a = analytic.values()[i];
            let rel = (a - numeric).abs() / (a.abs() + 1e-8);
            assert!(rel < 1e-4, "param {i}: analytic {a} vs numeric {numeric} (rel {rel})");
        }
    }

    #[test]
    fn backward_matches_central_differences_xent() {
        finite_difference_check(&ModelSpec::mlp(&[6, 5, 3]).unwrap(), Loss::CrossEntropy, 21);
    }

    #[test]
    fn backward_matches_central_differences_mse() {
        finite_difference_check(&ModelSpec::mlp(&[6, 5, 3]).unwrap(), Loss::Mse, 22);
    }

    #[test]
    fn backward_of_duplicated_batch_matches_original() {
        let spec = ModelSpec::mlp(&[4, 3]).unwrap();
        let params = random_params(&spec, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<Sample> = (0..5).map(|_| random_sample(&mut rng, 4, 3)).collect();
        let batch: Vec<(&[f64], &[f64])> = samples.iter().map(|s| (s.input(), s.label())).collect();
        let doubled: Vec<(&[f64], &[f64])> = batch.iter().chain(batch.iter()).cloned().collect();

        let g1 = backward(&params, &batch, Loss::CrossEntropy).unwrap();
        let g2 = backward(&params, &doubled, Loss::CrossEntropy).unwrap();
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn sgd_step_arithmetic() {
        let spec = ModelSpec::mlp(&[1, 1]).unwrap();
        // theta = [w, b] = [1, 1].
        let params = ModelParams::new(spec, vec![1.0, 1.0]).unwrap();
        let g = GradientVector::clean(vec![2.0, 0.0]);
        let next = sgd_step(&params, &g, 0.5).unwrap();
        assert_eq!(next.theta(), &[0.0, 1.0]);
        // Inputs untouched.
        assert_eq!(params.theta(), &[1.0, 1.0]);
    }

    #[test]
    fn sgd_zero_gradient_is_a_fixed_point() {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        let params = random_params(&spec, 1);
        let zero = GradientVector::clean(vec![0.0; params.len()]);
        let next = sgd_step(&params, &zero, 0.3).unwrap();
        assert_eq!(next.theta(), params.theta());
    }

    #[test]
    fn sgd_steps_compose_additively() {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        let params = random_params(&spec, 2);
        let g1 = GradientVector::clean(vec![0.1, -0.2, 0.3, 0.05, -0.4, 0.2]);
        let g2 = GradientVector::clean(vec![-0.3, 0.1, 0.2, -0.15, 0.25, 0.0]);
        let eta = 0.7;

        let two_steps = sgd_step(&sgd_step(&params, &g1, eta).unwrap(), &g2, eta).unwrap();
        let combined: Vec<f64> = g1.values().iter().zip(g2.values()).map(|(a, b)| a + b).collect();
        let one_step = sgd_step(&params, &GradientVector::clean(combined), eta).unwrap();
        for (a, b) in two_steps.theta().iter().zip(one_step.theta()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn sgd_rejects_length_mismatch() {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        let params = random_params(&spec, 0);
        let bad = GradientVector::clean(vec![0.0; 3]);
        assert!(matches!(
            sgd_step(&params, &bad, 0.1),
            Err(NnError::GradientLength { .. })
        ));
    }

    #[test]
    fn single_minibatch_equals_full_backward() {
        let spec = ModelSpec::mlp(&[4, 3]).unwrap();
        let params = random_params(&spec, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let shard: Vec<Sample> = (0..7).map(|_| random_sample(&mut rng, 4, 3)).collect();
        let pairs: Vec<(&[f64], &[f64])> = shard.iter().map(|s| (s.input(), s.label())).collect();

        let full = backward(&params, &pairs, Loss::CrossEntropy).unwrap();
        let mini = minibatch_gradient(&params, &shard, 1, Loss::CrossEntropy, &mut rng).unwrap();
        assert_eq!(full.values(), mini.values());
    }

    #[test]
    fn equal_size_minibatching_matches_full_gradient() {
        // All mini-batch gradients are evaluated at the same parameters,
        // so with equal piece sizes their average is the full-batch mean.
        let spec = ModelSpec::mlp(&[3, 4, 2]).unwrap();
        let params = random_params(&spec, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let shard: Vec<Sample> = (0..4).map(|_| random_sample(&mut rng, 3, 2)).collect();

        let full = minibatch_gradient(&params, &shard, 1, Loss::CrossEntropy, &mut rng).unwrap();
        for m_b in [2, 4] {
            let g = minibatch_gradient(&params, &shard, m_b, Loss::CrossEntropy, &mut rng).unwrap();
            for (a, b) in g.values().iter().zip(full.values()) {
                assert!((a - b).abs() < 1e-12, "m_b={m_b}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn minibatch_gradient_is_deterministic_per_seed() {
        let spec = ModelSpec::mlp(&[3, 5, 2]).unwrap();
        let params = random_params(&spec, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let shard: Vec<Sample> = (0..9).map(|_| random_sample(&mut rng, 3, 2)).collect();

        let g1 = minibatch_gradient(&params, &shard, 3, Loss::CrossEntropy, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let g2 = minibatch_gradient(&params, &shard, 3, Loss::CrossEntropy, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(g1.values(), g2.values());
    }

    #[test]
    fn minibatch_mean_over_all_orderings_is_the_full_gradient() {
        // Unequal split (4 samples into 3 pieces: 1+1+2). Any single
        // ordering is biased, but averaging over all 4! orderings
        // recovers the full-batch gradient exactly.
        let spec = ModelSpec::mlp(&[2, 3]).unwrap();
        let params = random_params(&spec, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let shard: Vec<Sample> = (0..4).map(|_| random_sample(&mut rng, 2, 3)).collect();

        let mut perms: Vec<Vec<usize>> = Vec::new();
        let mut idx = [0usize, 1, 2, 3];
        permute(&mut idx, 0, &mut perms);
        assert_eq!(perms.len(), 24);

        let mut mean = vec![0.0; params.len()];
        for order in &perms {
            let g = minibatch_gradient_ordered(&params, &shard, order, 3, Loss::CrossEntropy).unwrap();
            for (m, v) in mean.iter_mut().zip(g.values()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= perms.len() as f64;
        }

        let full = minibatch_gradient(&params, &shard, 1, Loss::CrossEntropy, &mut rng).unwrap();
        for (a, b) in mean.iter().zip(full.values()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    fn permute(idx: &mut [usize; 4], k: usize, out: &mut Vec<Vec<usize>>) {
        if k == idx.len() {
            out.push(idx.to_vec());
            return;
        }
        for i in k..idx.len() {
            idx.swap(k, i);
            permute(idx, k + 1, out);
            idx.swap(k, i);
        }
    }

    #[test]
    fn minibatch_errors() {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        let params = random_params(&spec, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            minibatch_gradient(&params, &[], 1, Loss::Mse, &mut rng),
            Err(NnError::EmptyBatch)
        ));
        let shard: Vec<Sample> = (0..2)
            .map(|i| Sample::from_class(vec![0.1, 0.2], 2, 1, i, 2).unwrap())
            .collect();
        assert!(matches!(
            minibatch_gradient(&params, &shard, 3, Loss::Mse, &mut rng),
            Err(NnError::TooFewSamples { samples: 2, minibatches: 3 })
        ));
        assert!(matches!(
            minibatch_gradient(&params, &shard, 0, Loss::Mse, &mut rng),
            Err(NnError::ZeroMinibatches)
        ));
    }
}
