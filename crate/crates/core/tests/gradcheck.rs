//! Finite-difference oracle for the analytic gradients.
//!
//! Every parameter of randomly shaped small networks is perturbed by ±h and
//! the central difference is compared against `backward`'s output, for both a
//! weighted-sum loss through each Q head and the softmax cross-entropy used by
//! the supervisory classifier. Relative error must stay below 1e-4.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use catch_options::nn::{
    backward, forward, init_custom, softmax_xent, ConvSpec, Gradients, NetworkParams,
};
use catch_options::tensor::Tensor;

const H: f64 = 1e-5;
const MAX_REL_ERR: f64 = 1e-4;

struct Instance {
    params: NetworkParams,
    batch: Tensor,
    input_size: usize,
}

fn random_instance(rng: &mut ChaCha8Rng, head_count: usize, out_units: usize) -> Instance {
    let input_size = rng.gen_range(7..=10);
    let conv1 = ConvSpec {
        in_ch: rng.gen_range(1..=3),
        out_ch: rng.gen_range(2..=4),
        kernel: 3,
        stride: rng.gen_range(1..=2),
        pad: rng.gen_range(0..=1),
    };
    let o1 = conv1.out_size(input_size);
    let conv2 = ConvSpec {
        in_ch: conv1.out_ch,
        out_ch: rng.gen_range(2..=3),
        kernel: if o1 >= 3 { 3 } else { 2 },
        stride: 1,
        pad: 0,
    };
    let hidden = rng.gen_range(3..=6);
    let mut params = init_custom(
        conv1,
        conv2,
        input_size,
        head_count,
        hidden,
        out_units,
        rng.gen(),
    )
    .unwrap();
    // Resample every parameter, biases included: zero biases can leave ReLU
    // pre-activations at exactly 0, where the analytic subgradient and a
    // central difference legitimately disagree.
    for t in params.tensor_refs_mut() {
        for v in &mut t.data {
            *v = rng.gen_range(-0.4..0.4);
        }
    }

    let b = rng.gen_range(2..=3);
    let data: Vec<f64> = (0..b * conv1.in_ch * input_size * input_size)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let batch = Tensor::from_vec(&[b, conv1.in_ch, input_size, input_size], data).unwrap();
    Instance {
        params,
        batch,
        input_size: conv1.in_ch * input_size * input_size,
    }
}

/// Loss evaluated from scratch; used for the numeric side of the comparison.
fn numeric_loss<F: Fn(&[Tensor]) -> f64>(
    params: &mut NetworkParams,
    batch: &Tensor,
    tensor_idx: usize,
    elem: usize,
    loss_of: &F,
) -> f64 {
    let original = params.tensor_refs()[tensor_idx].data[elem];
    let eval = |params: &mut NetworkParams, value: f64| {
        params.tensor_refs_mut()[tensor_idx].data[elem] = value;
        let (outs, _) = forward(params, batch).unwrap();
        loss_of(&outs)
    };
    let hi = eval(params, original + H);
    let lo = eval(params, original - H);
    params.tensor_refs_mut()[tensor_idx].data[elem] = original;
    (hi - lo) / (2.0 * H)
}

fn check_all(
    params: &mut NetworkParams,
    batch: &Tensor,
    analytic: &Gradients,
    loss_of: &dyn Fn(&[Tensor]) -> f64,
    label: &str,
) -> (usize, f64) {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for tensor_idx in 0..params.tensor_count() {
        let len = params.tensor_refs()[tensor_idx].data.len();
        for elem in 0..len {
            let numeric = numeric_loss(params, batch, tensor_idx, elem, &loss_of);
            let exact = analytic.tensors[tensor_idx].data[elem];
            let scale = numeric.abs().max(exact.abs()).max(1.0);
            let rel = (numeric - exact).abs() / scale;
            assert!(
                rel < MAX_REL_ERR,
                "{label}: tensor {tensor_idx} elem {elem}: analytic {exact}, numeric {numeric}, rel {rel:e}"
            );
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (checked, worst)
}

#[test]
fn q_head_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut total = 0;
    for instance_idx in 0..10 {
        let head_count = 1 + instance_idx % 3;
        let out_units = 2 + instance_idx % 2;
        let Instance { mut params, batch, .. } = random_instance(&mut rng, head_count, out_units);
        let head_idx = instance_idx % head_count;
        let b = batch.shape[0];

        // Weighted-sum loss: L = sum(W ⊙ Q_head), so dL/dQ = W exercises
        // backward with an arbitrary dense output gradient.
        let weights: Vec<f64> = (0..b * out_units).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad_out = Tensor::from_vec(&[b, out_units], weights.clone()).unwrap();
        let (_, cache) = forward(&params, &batch).unwrap();
        let analytic = backward(&params, &cache, head_idx, &grad_out).unwrap();

        let loss_of = move |outs: &[Tensor]| -> f64 {
            outs[head_idx]
                .data
                .iter()
                .zip(&weights)
                .map(|(q, w)| q * w)
                .sum()
        };
        let (checked, worst) = check_all(&mut params, &batch, &analytic, &loss_of, "q-head");
        assert!(checked > 0);
        println!(
            "instance {instance_idx}: {head_count} heads, head {head_idx}, {checked} params, worst rel err {worst:.2e}"
        );
        total += checked;
    }
    println!("q-head gradient oracle: {total} parameters checked");
}

#[test]
fn untouched_heads_receive_exactly_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let Instance { params, batch, .. } = random_instance(&mut rng, 3, 2);
    let b = batch.shape[0];
    let grad_out = Tensor::from_vec(&[b, 2], vec![1.0; b * 2]).unwrap();
    let (_, cache) = forward(&params, &batch).unwrap();
    let grads = backward(&params, &cache, 1, &grad_out).unwrap();
    for head in [0, 2] {
        for j in 0..4 {
            let slot = Gradients::head_slot(head, j);
            assert!(grads.tensors[slot].data.iter().all(|&g| g == 0.0));
        }
    }
}

#[test]
fn softmax_xent_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for instance_idx in 0..4 {
        let classes = 2 + instance_idx % 2;
        let Instance { mut params, batch, .. } = random_instance(&mut rng, 1, classes);
        let b = batch.shape[0];
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();

        let (outs, cache) = forward(&params, &batch).unwrap();
        let (_, grad) = softmax_xent(&outs[0], &labels).unwrap();
        let analytic = backward(&params, &cache, 0, &grad).unwrap();

        let labels_for_loss = labels.clone();
        let loss_of = move |outs: &[Tensor]| -> f64 {
            softmax_xent(&outs[0], &labels_for_loss).unwrap().0
        };
        let (checked, worst) = check_all(&mut params, &batch, &analytic, &loss_of, "xent");
        println!("xent instance {instance_idx}: {checked} params, worst rel err {worst:.2e}");
    }
}

#[test]
fn gradient_of_zero_input_batch_is_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let Instance { params, batch, input_size } = random_instance(&mut rng, 2, 3);
    let b = batch.shape[0];
    let mut shape = batch.shape.clone();
    shape[0] = b;
    let zero = Tensor::from_vec(&shape, vec![0.0; b * input_size]).unwrap();
    let grad_out = Tensor::from_vec(&[b, 3], vec![1.0; b * 3]).unwrap();
    let (_, cache) = forward(&params, &zero).unwrap();
    let grads = backward(&params, &cache, 0, &grad_out).unwrap();
    assert!(grads.is_finite());
}
