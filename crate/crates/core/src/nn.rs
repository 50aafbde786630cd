//! Forward/backward passes for the two-conv-layer Q-network family.
//!
//! The network is fixed in depth: two 5x5 stride-2 convolutions (32 channels
//! each, ReLU), then one or more fully connected "heads", each a ReLU hidden
//! layer followed by a linear output. Backpropagation always flows through
//! exactly one head plus the shared trunk; the other heads receive
//! exactly-zero gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{gemm, gemm_at, gemm_bt, Tensor};
use crate::variant::AgentVariant;

/// Side length of one input frame.
pub const FRAME: usize = 24;
/// Frames stacked per observation.
pub const STACK: usize = 4;
/// Discrete actions in Catch.
pub const ACTIONS: usize = 3;

/// Flattened trunk output: 32 channels x 4 x 4.
pub const FLAT: usize = 32 * 4 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn out_size(&self, input: usize) -> usize {
        (input + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
}

pub const CONV1: ConvSpec = ConvSpec {
    in_ch: STACK,
    out_ch: 32,
    kernel: 5,
    stride: 2,
    pad: 1,
};

pub const CONV2: ConvSpec = ConvSpec {
    in_ch: 32,
    out_ch: 32,
    kernel: 5,
    stride: 2,
    pad: 0,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    /// [out_ch, in_ch * k * k]
    pub w: Tensor,
    /// [out_ch]
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// [out, in]
    pub w: Tensor,
    /// [out]
    pub b: Tensor,
}

impl Linear {
    pub fn out_units(&self) -> usize {
        self.w.shape[0]
    }

    pub fn in_units(&self) -> usize {
        self.w.shape[1]
    }
}

/// One head: ReLU hidden layer plus linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub hidden: Linear,
    pub output: Linear,
}

/// Per-tensor Adam accumulators, aligned with [`NetworkParams::tensor_order`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

/// All parameters of one network instance, plus its optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub heads: Vec<Head>,
    pub adam: AdamState,
    /// Bumped on every parameter mutation; detects stale forward caches.
    pub stamp: u64,
}

impl NetworkParams {
    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn hidden_units(&self) -> usize {
        self.heads[0].hidden.out_units()
    }

    pub fn out_units(&self) -> usize {
        self.heads[0].output.out_units()
    }

    /// Parameter tensors in canonical order: trunk first, then each head.
    pub fn tensor_refs(&self) -> Vec<&Tensor> {
        let mut t = vec![&self.conv1.w, &self.conv1.b, &self.conv2.w, &self.conv2.b];
        for h in &self.heads {
            t.push(&h.hidden.w);
            t.push(&h.hidden.b);
            t.push(&h.output.w);
            t.push(&h.output.b);
        }
        t
    }

    pub fn tensor_refs_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t: Vec<&mut Tensor> = vec![
            &mut self.conv1.w,
            &mut self.conv1.b,
            &mut self.conv2.w,
            &mut self.conv2.b,
        ];
        for h in &mut self.heads {
            t.push(&mut h.hidden.w);
            t.push(&mut h.hidden.b);
            t.push(&mut h.output.w);
            t.push(&mut h.output.b);
        }
        t
    }

    pub fn tensor_count(&self) -> usize {
        4 + 4 * self.heads.len()
    }

    pub fn param_count(&self) -> usize {
        self.tensor_refs().iter().map(|t| t.len()).sum()
    }

    /// Parameters in the hidden (penultimate) layers only, summed over heads.
    pub fn hidden_layer_param_count(&self) -> usize {
        self.heads
            .iter()
            .map(|h| h.hidden.w.len() + h.hidden.b.len())
            .sum()
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensor_refs().iter().map(|t| t.shape.clone()).collect()
    }

    pub fn same_topology(&self, other: &NetworkParams) -> bool {
        self.shapes() == other.shapes()
    }
}

/// Gradient tensors in the same canonical order as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradients {
            tensors: params
                .tensor_refs()
                .iter()
                .map(|t| Tensor::zeros(&t.shape))
                .collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sq_sum).sum::<f64>().sqrt()
    }

    /// Index of gradient tensor `j` (0..4) of head `head` in the flat list.
    pub fn head_slot(head: usize, j: usize) -> usize {
        4 + head * 4 + j
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Fan-in-scaled uniform init (bound = sqrt(1/fan_in)), zero biases.
/// Deterministic in the seed.
pub fn init_network(variant: AgentVariant, seed: u64) -> Result<NetworkParams> {
    let (heads, hidden) = variant.head_layout()?;
    init_topology(heads, hidden, ACTIONS, seed)
}

/// Build a network with explicit layout; used directly by the supervisory
/// classifier, which has a different output width.
pub fn init_topology(
    head_count: usize,
    hidden_units: usize,
    out_units: usize,
    seed: u64,
) -> Result<NetworkParams> {
    init_custom(CONV1, CONV2, FRAME, head_count, hidden_units, out_units, seed)
}

/// Fully explicit constructor; tests use this to build tiny networks for
/// finite-difference checks.
pub fn init_custom(
    conv1_spec: ConvSpec,
    conv2_spec: ConvSpec,
    input_size: usize,
    head_count: usize,
    hidden_units: usize,
    out_units: usize,
    seed: u64,
) -> Result<NetworkParams> {
    if head_count < 1 {
        return Err(Error::InvalidVariant("head count must be >= 1".into()));
    }
    let o1 = conv1_spec.out_size(input_size);
    let o2 = conv2_spec.out_size(o1);
    let flat = conv2_spec.out_ch * o2 * o2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |shape: &[usize], fan_in: usize| {
        let bound = (1.0 / fan_in as f64).sqrt();
        let data = (0..shape.iter().product::<usize>())
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Tensor::from_vec(shape, data).expect("init shape")
    };

    let conv1 = ConvLayer {
        spec: conv1_spec,
        w: uniform(&[conv1_spec.out_ch, conv1_spec.patch_len()], conv1_spec.patch_len()),
        b: Tensor::zeros(&[conv1_spec.out_ch]),
    };
    let conv2 = ConvLayer {
        spec: conv2_spec,
        w: uniform(&[conv2_spec.out_ch, conv2_spec.patch_len()], conv2_spec.patch_len()),
        b: Tensor::zeros(&[conv2_spec.out_ch]),
    };
    let heads = (0..head_count)
        .map(|_| Head {
            hidden: Linear {
                w: uniform(&[hidden_units, flat], flat),
                b: Tensor::zeros(&[hidden_units]),
            },
            output: Linear {
                w: uniform(&[out_units, hidden_units], hidden_units),
                b: Tensor::zeros(&[out_units]),
            },
        })
        .collect();

    let mut params = NetworkParams {
        conv1,
        conv2,
        heads,
        adam: AdamState {
            m: vec![],
            v: vec![],
            step: 0,
        },
        stamp: 0,
    };
    params.adam.m = params
        .tensor_refs()
        .iter()
        .map(|t| Tensor::zeros(&t.shape))
        .collect();
    params.adam.v = params.adam.m.clone();
    Ok(params)
}

/// Copy online parameters into the target network. Adam state is untouched.
pub fn sync_target(online: &NetworkParams, target: &mut NetworkParams) -> Result<()> {
    if !online.same_topology(target) {
        return Err(Error::TopologyMismatch(
            "target/online parameter shapes differ".into(),
        ));
    }
    target.conv1.w = online.conv1.w.clone();
    target.conv1.b = online.conv1.b.clone();
    target.conv2.w = online.conv2.w.clone();
    target.conv2.b = online.conv2.b.clone();
    for (th, oh) in target.heads.iter_mut().zip(&online.heads) {
        *th = oh.clone();
    }
    target.stamp += 1;
    Ok(())
}

/// Activations retained by [`forward`] for the matching [`backward`] call.
///
/// Convolution intermediates are stored channel-major with the batch folded
/// into the spatial axis ([channels, B*out_h*out_w]) so that each layer is a
/// single gemm per batch rather than one per item.
pub struct ForwardCache {
    batch: usize,
    stamp: u64,
    head_count: usize,
    /// input spatial side length
    input_size: usize,
    /// im2col patches of the input, [p1, B*o1*o1]
    cols1: Vec<f64>,
    /// post-ReLU conv1 output, [c1, B*o1*o1]
    act1: Vec<f64>,
    /// im2col patches of act1, [p2, B*o2*o2]
    cols2: Vec<f64>,
    /// post-ReLU conv2 output transposed to item-major, [B, flat]
    flat: Vec<f64>,
    /// post-ReLU hidden activations per head, each [B][hidden]
    hidden: Vec<Vec<f64>>,
}

/// Expand one item's patches into `col`, whose rows have stride `row_stride`
/// (the full batch-folded width); this item's window occupies columns
/// `col_offset..col_offset + oh*ow`. Input planes are read at `plane_stride`
/// apart starting from `input[0]` (channel-major batched layout).
#[allow(clippy::too_many_arguments)]
fn im2col(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    plane_stride: usize,
    spec: &ConvSpec,
    col: &mut [f64],
    row_stride: usize,
    col_offset: usize,
) {
    let oh = spec.out_size(h);
    let ow = spec.out_size(w);
    let k = spec.kernel;
    let s = spec.stride;
    let pad = spec.pad;
    for c in 0..in_ch {
        let plane = &input[c * plane_stride..c * plane_stride + h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k * k + ky * k + kx) * row_stride + col_offset;
                // Horizontal window positions whose source column is in
                // bounds: 0 <= ox*s + kx - pad < w.
                let ox_lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(s) };
                let last = w as isize - 1 + pad as isize - kx as isize;
                let ox_hi = if last < 0 {
                    ox_lo
                } else {
                    (last as usize / s + 1).clamp(ox_lo, ow)
                };
                for oy in 0..oh {
                    let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                    let iy = (oy * s + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    dst[..ox_lo].fill(0.0);
                    dst[ox_hi..].fill(0.0);
                    let mut ix = ox_lo * s + kx - pad;
                    if s == 1 {
                        dst[ox_lo..ox_hi].copy_from_slice(&src[ix..ix + ox_hi - ox_lo]);
                    } else {
                        for d in &mut dst[ox_lo..ox_hi] {
                            *d = src[ix];
                            ix += s;
                        }
                    }
                }
            }
        }
    }
}

/// Scratch buffer without the zero fill; callers must write every element
/// before reading (gemm outputs and fully expanded im2col columns).
fn scratch(len: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(len);
    #[allow(clippy::uninit_vec)]
    unsafe {
        v.set_len(len);
    }
    v
}

/// Scatter-add of one item's column gradients back onto its input planes.
/// Mirrors `im2col`'s strided layout.
#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    plane_stride: usize,
    spec: &ConvSpec,
    input_grad: &mut [f64],
    row_stride: usize,
    col_offset: usize,
) {
    let oh = spec.out_size(h);
    let ow = spec.out_size(w);
    let k = spec.kernel;
    for c in 0..in_ch {
        let plane = &mut input_grad[c * plane_stride..c * plane_stride + h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k * k + ky * k + kx) * row_stride + col_offset;
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy * w + ix as usize] += col[row + oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Run the network on a batch of observations.
///
/// `batch` must be [B, 4, 24, 24]. Returns one [B, out] Q-value tensor per
/// head plus the activation cache for `backward`.
pub fn forward(
    params: &NetworkParams,
    batch: &Tensor,
) -> Result<(Vec<Tensor>, ForwardCache)> {
    let spec1 = params.conv1.spec;
    let spec2 = params.conv2.spec;
    if batch.shape.len() != 4
        || batch.shape[1] != spec1.in_ch
        || batch.shape[2] != batch.shape[3]
    {
        return Err(Error::ShapeMismatch(format!(
            "expected [B, {}, N, N] input, got {:?}",
            spec1.in_ch, batch.shape
        )));
    }
    let b = batch.shape[0];
    let input_size = batch.shape[2];

    let o1 = spec1.out_size(input_size);
    let o2 = spec2.out_size(o1);
    let ohw1 = o1 * o1;
    let ohw2 = o2 * o2;
    let p1 = spec1.patch_len();
    let p2 = spec2.patch_len();
    let flat_len = spec2.out_ch * ohw2;
    if params.heads[0].hidden.in_units() != flat_len {
        return Err(Error::ShapeMismatch(format!(
            "trunk produces {flat_len} features, hidden layer expects {}",
            params.heads[0].hidden.in_units()
        )));
    }

    let n1 = b * ohw1;
    let n2 = b * ohw2;
    let mut cols1 = scratch(p1 * n1);
    let mut act1 = scratch(spec1.out_ch * n1);
    let mut cols2 = scratch(p2 * n2);
    let mut conv2_out = scratch(spec2.out_ch * n2);

    let in_len = spec1.in_ch * input_size * input_size;
    let in_plane = input_size * input_size;
    for i in 0..b {
        let item = &batch.data[i * in_len..(i + 1) * in_len];
        im2col(
            item, spec1.in_ch, input_size, input_size, in_plane, &spec1, &mut cols1, n1,
            i * ohw1,
        );
    }
    gemm(spec1.out_ch, p1, n1, &params.conv1.w.data, &cols1, &mut act1);
    for ch in 0..spec1.out_ch {
        let bias = params.conv1.b.data[ch];
        for v in &mut act1[ch * n1..(ch + 1) * n1] {
            *v = (*v + bias).max(0.0);
        }
    }

    for i in 0..b {
        im2col(
            &act1[i * ohw1..],
            spec1.out_ch,
            o1,
            o1,
            n1,
            &spec2,
            &mut cols2,
            n2,
            i * ohw2,
        );
    }
    gemm(spec2.out_ch, p2, n2, &params.conv2.w.data, &cols2, &mut conv2_out);
    for ch in 0..spec2.out_ch {
        let bias = params.conv2.b.data[ch];
        for v in &mut conv2_out[ch * n2..(ch + 1) * n2] {
            *v = (*v + bias).max(0.0);
        }
    }

    // Transpose to item-major [B, flat] for the fully connected heads.
    let mut flat = scratch(b * flat_len);
    for i in 0..b {
        for ch in 0..spec2.out_ch {
            flat[i * flat_len + ch * ohw2..i * flat_len + (ch + 1) * ohw2]
                .copy_from_slice(&conv2_out[ch * n2 + i * ohw2..ch * n2 + (i + 1) * ohw2]);
        }
    }

    let mut outputs = Vec::with_capacity(params.heads.len());
    let mut hidden_acts = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let hu = head.hidden.out_units();
        let ou = head.output.out_units();
        let mut hid = scratch(b * hu);
        gemm_bt(b, flat_len, hu, &flat, &head.hidden.w.data, &mut hid);
        for row in hid.chunks_mut(hu) {
            for (v, bias) in row.iter_mut().zip(&head.hidden.b.data) {
                *v = (*v + bias).max(0.0);
            }
        }
        let mut q = scratch(b * ou);
        gemm_bt(b, hu, ou, &hid, &head.output.w.data, &mut q);
        for row in q.chunks_mut(ou) {
            for (v, bias) in row.iter_mut().zip(&head.output.b.data) {
                *v += bias;
            }
        }
        outputs.push(Tensor::from_vec(&[b, ou], q)?);
        hidden_acts.push(hid);
    }

    let cache = ForwardCache {
        batch: b,
        stamp: params.stamp,
        head_count: params.heads.len(),
        input_size,
        cols1,
        act1,
        cols2,
        flat,
        hidden: hidden_acts,
    };
    Ok((outputs, cache))
}

/// Backpropagate `grad_out` ([B, out]) through head `head_idx` and the trunk.
///
/// All other heads' gradient tensors are exactly zero.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    head_idx: usize,
    grad_out: &Tensor,
) -> Result<Gradients> {
    if cache.stamp != params.stamp || cache.head_count != params.heads.len() {
        return Err(Error::ShapeMismatch(
            "forward cache does not match these parameters".into(),
        ));
    }
    if head_idx >= params.heads.len() {
        return Err(Error::ShapeMismatch(format!(
            "head index {head_idx} out of range for {} heads",
            params.heads.len()
        )));
    }
    let b = cache.batch;
    let head = &params.heads[head_idx];
    let hu = head.hidden.out_units();
    let ou = head.output.out_units();
    if grad_out.shape != [b, ou] {
        return Err(Error::ShapeMismatch(format!(
            "output gradient shape {:?}, expected [{b}, {ou}]",
            grad_out.shape
        )));
    }

    let mut grads = Gradients::zeros_like(params);
    let hid = &cache.hidden[head_idx];

    // Output layer.
    {
        let slot_w = Gradients::head_slot(head_idx, 2);
        gemm_at(
            ou,
            b,
            hu,
            &grad_out.data,
            hid,
            &mut grads.tensors[slot_w].data,
        );
        let db = &mut grads.tensors[Gradients::head_slot(head_idx, 3)].data;
        for row in grad_out.data.chunks(ou) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
    }

    // Hidden layer.
    let mut d_hidden = scratch(b * hu);
    gemm(b, ou, hu, &grad_out.data, &head.output.w.data, &mut d_hidden);
    for (d, a) in d_hidden.iter_mut().zip(hid) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
    let spec1 = params.conv1.spec;
    let spec2 = params.conv2.spec;
    let o1 = spec1.out_size(cache.input_size);
    let o2 = spec2.out_size(o1);
    let ohw1 = o1 * o1;
    let ohw2 = o2 * o2;
    let p1 = spec1.patch_len();
    let p2 = spec2.patch_len();
    let flat_len = spec2.out_ch * ohw2;

    gemm_at(
        hu,
        b,
        flat_len,
        &d_hidden,
        &cache.flat,
        &mut grads.tensors[Gradients::head_slot(head_idx, 0)].data,
    );
    {
        let db = &mut grads.tensors[Gradients::head_slot(head_idx, 1)].data;
        for row in d_hidden.chunks(hu) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
    }

    // Into the trunk.
    let mut d_flat = scratch(b * flat_len);
    gemm(b, hu, flat_len, &d_hidden, &head.hidden.w.data, &mut d_flat);
    for (d, a) in d_flat.iter_mut().zip(&cache.flat) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }

    let n1 = b * ohw1;
    let n2 = b * ohw2;

    // Back to channel-major [c2, B*o2*o2]; the ReLU mask already zeroed the
    // inactive entries of d_flat above.
    let mut d_pre2 = scratch(spec2.out_ch * n2);
    for i in 0..b {
        for ch in 0..spec2.out_ch {
            d_pre2[ch * n2 + i * ohw2..ch * n2 + (i + 1) * ohw2]
                .copy_from_slice(&d_flat[i * flat_len + ch * ohw2..i * flat_len + (ch + 1) * ohw2]);
        }
    }

    gemm_bt(
        spec2.out_ch,
        n2,
        p2,
        &d_pre2,
        &cache.cols2,
        &mut grads.tensors[2].data,
    );
    for ch in 0..spec2.out_ch {
        grads.tensors[3].data[ch] = d_pre2[ch * n2..(ch + 1) * n2].iter().sum::<f64>();
    }

    let mut d_cols2 = scratch(p2 * n2);
    gemm_at(p2, spec2.out_ch, n2, &params.conv2.w.data, &d_pre2, &mut d_cols2);
    let mut d_act1 = vec![0.0; spec1.out_ch * n1];
    for i in 0..b {
        col2im(
            &d_cols2,
            spec1.out_ch,
            o1,
            o1,
            n1,
            &spec2,
            &mut d_act1[i * ohw1..],
            n2,
            i * ohw2,
        );
    }
    for (d, a) in d_act1.iter_mut().zip(&cache.act1) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }

    gemm_bt(
        spec1.out_ch,
        n1,
        p1,
        &d_act1,
        &cache.cols1,
        &mut grads.tensors[0].data,
    );
    for ch in 0..spec1.out_ch {
        grads.tensors[1].data[ch] = d_act1[ch * n1..(ch + 1) * n1].iter().sum::<f64>();
    }

    Ok(grads)
}

/// Mean cross-entropy over a batch of logits, with the gradient
/// (softmax - one_hot) / B ready for `backward`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape.len() != 2 || logits.shape[0] != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs {} labels",
            logits.shape,
            labels.len()
        )));
    }
    let b = logits.shape[0];
    let k = logits.shape[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::ShapeMismatch(format!("label {bad} out of range {k}")));
    }
    let mut grad = vec![0.0; b * k];
    let mut loss = 0.0;
    for (i, (row, &label)) in logits.data.chunks(k).zip(labels).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() - (row[label] - max);
        for (j, e) in exps.iter().enumerate() {
            let p = e / sum;
            grad[i * k + j] = (p - if j == label { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok((loss / b as f64, Tensor::from_vec(&[b, k], grad)?))
}

/// Softmax over one logit row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Index of the maximum, ties broken to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
