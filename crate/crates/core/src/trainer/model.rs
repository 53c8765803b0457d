use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::*;
use crate::dataset::SoftLabel;
use crate::error::{Error, Result};
use crate::imagecore::ImageTensor;
use crate::rng::Rng;

/// Samples per gradient chunk. Chunks are reduced in order, so the summation
/// tree does not depend on the number of worker threads.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv3x3 { in_channels: usize, out_channels: usize },
    Relu,
    MaxPool2,
    GlobalAvgPool,
    Linear { inputs: usize, outputs: usize },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => out_channels * in_channels * 9 + out_channels,
            LayerSpec::Linear { inputs, outputs } => outputs * inputs + outputs,
            _ => 0,
        }
    }

    pub fn group(&self) -> Group {
        match self {
            LayerSpec::Linear { .. } => Group::Head,
            _ => Group::Backbone,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Backbone,
    Head,
}

/// Layer list plus the input geometry it was built for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub name: String,
    pub input_size: usize,
    pub input_channels: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ArchDescriptor {
    /// Known names: `smallconv` (16/32/64 channels) and `tinyconv`
    /// (4/8/8, for quick experiments and tests).
    pub fn build(name: &str, input_size: usize, num_classes: usize) -> Result<Self> {
        let widths: [usize; 3] = match name {
            "smallconv" => [16, 32, 64],
            "tinyconv" => [4, 8, 8],
            other => return Err(Error::arg(format!("unknown architecture {other:?}"))),
        };
        if num_classes < 2 {
            return Err(Error::arg(format!("need at least 2 classes, got {num_classes}")));
        }
        if input_size < 4 {
            return Err(Error::arg(format!(
                "input size {input_size} too small, minimum is 4"
            )));
        }
        let [a, b, c] = widths;
        let layers = vec![
            LayerSpec::Conv3x3 {
                in_channels: 3,
                out_channels: a,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Conv3x3 {
                in_channels: a,
                out_channels: b,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Conv3x3 {
                in_channels: b,
                out_channels: c,
            },
            LayerSpec::Relu,
            LayerSpec::GlobalAvgPool,
            LayerSpec::Linear {
                inputs: c,
                outputs: num_classes,
            },
        ];
        Ok(Self {
            name: name.to_string(),
            input_size,
            input_channels: 3,
            num_classes,
            layers,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// `(channels, height, width)` entering each layer, plus the final output.
    pub fn shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut shape = (self.input_channels, self.input_size, self.input_size);
        let mut out = vec![shape];
        for layer in &self.layers {
            shape = match *layer {
                LayerSpec::Conv3x3 {
                    in_channels,
                    out_channels,
                } => {
                    if shape.0 != in_channels {
                        return Err(Error::dims(in_channels, shape.0));
                    }
                    (out_channels, shape.1, shape.2)
                }
                LayerSpec::Relu => shape,
                LayerSpec::MaxPool2 => (shape.0, shape.1 / 2, shape.2 / 2),
                LayerSpec::GlobalAvgPool => (shape.0, 1, 1),
                LayerSpec::Linear { inputs, outputs } => {
                    if shape.0 * shape.1 * shape.2 != inputs {
                        return Err(Error::dims(inputs, shape.0 * shape.1 * shape.2));
                    }
                    (outputs, 1, 1)
                }
            };
            if shape.1 == 0 || shape.2 == 0 {
                return Err(Error::arg("architecture shrinks the input to nothing"));
            }
            out.push(shape);
        }
        if out.last().map(|s| s.0 * s.1 * s.2) != Some(self.num_classes) {
            return Err(Error::arg("architecture output width differs from num_classes"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlice {
    pub layer: usize,
    pub offset: usize,
    pub len: usize,
    pub group: Group,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Frozen {
    pub backbone: bool,
    pub head: bool,
}

impl Frozen {
    pub fn contains(&self, group: Group) -> bool {
        match group {
            Group::Backbone => self.backbone,
            Group::Head => self.head,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchDescriptor,
    pub seed: u64,
    /// Class names by output index; empty when unknown.
    pub classes: Vec<String>,
    pub weights: Vec<f32>,
    pub frozen: Frozen,
    slices: Vec<LayerSlice>,
}

impl ModelParams {
    pub fn from_weights(arch: ArchDescriptor, seed: u64, weights: Vec<f32>) -> Result<Self> {
        arch.shapes()?;
        if weights.len() != arch.param_count() {
            return Err(Error::dims(arch.param_count(), weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::arg("weights must be finite"));
        }
        let slices = slices_for(&arch);
        Ok(Self {
            arch,
            seed,
            classes: Vec::new(),
            weights,
            frozen: Frozen::default(),
            slices,
        })
    }

    pub fn slices(&self) -> &[LayerSlice] {
        &self.slices
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    /// Flat ranges belonging to frozen groups.
    pub fn frozen_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.slices
            .iter()
            .filter(|s| self.frozen.contains(s.group))
            .map(|s| s.offset..s.offset + s.len)
            .collect()
    }
}

fn slices_for(arch: &ArchDescriptor) -> Vec<LayerSlice> {
    let mut offset = 0;
    let mut out = Vec::new();
    for (layer, spec) in arch.layers.iter().enumerate() {
        let len = spec.param_count();
        if len > 0 {
            out.push(LayerSlice {
                layer,
                offset,
                len,
                group: spec.group(),
            });
            offset += len;
        }
    }
    out
}

/// Fan-in scaled normal weights (std `sqrt(2 / fan_in)`), zero biases.
pub fn init_model(arch: &str, input_size: usize, num_classes: usize, seed: u64) -> Result<ModelParams> {
    let arch = ArchDescriptor::build(arch, input_size, num_classes)?;
    let mut weights = Vec::with_capacity(arch.param_count());
    for (i, layer) in arch.layers.iter().enumerate() {
        let (fan_in, count, biases) = match *layer {
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => (in_channels * 9, out_channels * in_channels * 9, out_channels),
            LayerSpec::Linear { inputs, outputs } => (inputs, outputs * inputs, outputs),
            _ => continue,
        };
        let std = (2.0 / fan_in as f64).sqrt();
        let mut rng = Rng::derived(seed, "init", i as u64);
        weights.extend((0..count).map(|_| (rng.normal() * std) as f32));
        weights.extend(std::iter::repeat_n(0.0f32, biases));
    }
    ModelParams::from_weights(arch, seed, weights)
}

/// Network input for one image: planar channels centred on zero.
pub fn image_input(img: &ImageTensor) -> Vec<f32> {
    img.to_planar().into_iter().map(|v| v - 0.5).collect()
}

/// Activations kept from a forward pass for backpropagation.
pub struct Trace<T> {
    /// Input to every layer; the last entry is the logits.
    pub activations: Vec<Vec<T>>,
    pub argmax: Vec<Option<Vec<usize>>>,
}

/// Forward pass of one planar sample through a descriptor.
pub fn forward_sample<T: num_traits::Float>(
    arch: &ArchDescriptor,
    shapes: &[(usize, usize, usize)],
    weights: &[T],
    input: Vec<T>,
) -> Trace<T> {
    let mut activations = vec![input];
    let mut argmax = Vec::with_capacity(arch.layers.len());
    let mut offset = 0;
    for (l, layer) in arch.layers.iter().enumerate() {
        let (c, h, w) = shapes[l];
        let x = activations.last().unwrap();
        let (y, arg) = match *layer {
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                let nk = out_channels * in_channels * 9;
                let k = &weights[offset..offset + nk];
                let b = &weights[offset + nk..offset + nk + out_channels];
                offset += nk + out_channels;
                (conv3x3_forward(x, in_channels, h, w, k, b, out_channels), None)
            }
            LayerSpec::Relu => (relu_forward(x), None),
            LayerSpec::MaxPool2 => {
                let (y, arg) = maxpool2_forward(x, c, h, w);
                (y, Some(arg))
            }
            LayerSpec::GlobalAvgPool => (global_avg_pool_forward(x, c, h, w), None),
            LayerSpec::Linear { inputs, outputs } => {
                let k = &weights[offset..offset + inputs * outputs];
                let b = &weights[offset + inputs * outputs..offset + inputs * outputs + outputs];
                offset += inputs * outputs + outputs;
                (linear_forward(x, k, b, outputs), None)
            }
        };
        activations.push(y);
        argmax.push(arg);
    }
    Trace { activations, argmax }
}

/// Backpropagate `d_logits` through a trace, accumulating into `grad`.
/// Layers of groups in `skip` receive no gradient, and propagation stops
/// once no earlier layer needs one.
pub fn backward_sample<T: num_traits::Float>(
    arch: &ArchDescriptor,
    shapes: &[(usize, usize, usize)],
    weights: &[T],
    trace: &Trace<T>,
    d_logits: Vec<T>,
    grad: &mut [T],
    skip: Frozen,
) {
    let offsets: Vec<usize> = arch
        .layers
        .iter()
        .scan(0, |acc, l| {
            let o = *acc;
            *acc += l.param_count();
            Some(o)
        })
        .collect();
    let last_needed = arch
        .layers
        .iter()
        .position(|l| l.param_count() > 0 && !skip.contains(l.group()));
    let Some(first) = last_needed else { return };
    let mut d = d_logits;
    for l in (first..arch.layers.len()).rev() {
        let (_, h, w) = shapes[l];
        let x = &trace.activations[l];
        let need_input = l > first;
        let mut dx = if need_input {
            vec![T::zero(); x.len()]
        } else {
            Vec::new()
        };
        let off = offsets[l];
        let frozen = skip.contains(arch.layers[l].group());
        match arch.layers[l] {
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                let nk = out_channels * in_channels * 9;
                let k = &weights[off..off + nk];
                if frozen {
                    let mut dk = vec![T::zero(); nk];
                    let mut db = vec![T::zero(); out_channels];
                    conv3x3_backward(
                        x,
                        in_channels,
                        h,
                        w,
                        k,
                        out_channels,
                        &d,
                        &mut dk,
                        &mut db,
                        Some(&mut dx),
                    );
                } else {
                    let (dk, db) = grad[off..off + nk + out_channels].split_at_mut(nk);
                    let dxo = if need_input { Some(dx.as_mut_slice()) } else { None };
                    conv3x3_backward(x, in_channels, h, w, k, out_channels, &d, dk, db, dxo);
                }
            }
            LayerSpec::Relu => {
                if need_input {
                    relu_backward(x, &d, &mut dx);
                }
            }
            LayerSpec::MaxPool2 => {
                if need_input {
                    maxpool2_backward(trace.argmax[l].as_ref().unwrap(), &d, &mut dx);
                }
            }
            LayerSpec::GlobalAvgPool => {
                if need_input {
                    global_avg_pool_backward(h, w, &d, &mut dx);
                }
            }
            LayerSpec::Linear { inputs, outputs } => {
                let nk = inputs * outputs;
                let k = &weights[off..off + nk];
                let dxo = if need_input { Some(dx.as_mut_slice()) } else { None };
                if frozen {
                    let mut dk = vec![T::zero(); nk];
                    let mut db = vec![T::zero(); outputs];
                    linear_backward(x, k, &d, &mut dk, &mut db, dxo);
                } else {
                    let (dk, db) = grad[off..off + nk + outputs].split_at_mut(nk);
                    linear_backward(x, k, &d, dk, db, dxo);
                }
            }
        }
        d = dx;
    }
}

fn check_images(params: &ModelParams, images: &[ImageTensor]) -> Result<()> {
    let s = params.arch.input_size;
    for img in images {
        if img.height() != s || img.width() != s || img.channels() != params.arch.input_channels {
            return Err(Error::dims(
                format!("{s}x{s}x{}", params.arch.input_channels),
                format!("{}x{}x{}", img.height(), img.width(), img.channels()),
            ));
        }
    }
    Ok(())
}

/// Logits, one row per image.
pub fn forward(params: &ModelParams, images: &[ImageTensor]) -> Result<Vec<Vec<f32>>> {
    check_images(params, images)?;
    let shapes = params.arch.shapes()?;
    Ok(images
        .par_iter()
        .map(|img| {
            let mut trace = forward_sample(&params.arch, &shapes, &params.weights, image_input(img));
            trace.activations.pop().unwrap()
        })
        .collect())
}

fn check_targets(targets: &[SoftLabel], k: usize) -> Result<()> {
    for t in targets {
        if t.len() != k {
            return Err(Error::dims(k, t.len()));
        }
        let sum: f64 = t.probs().iter().sum();
        if t.probs().iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("target is not on the simplex (sum {sum})")));
        }
    }
    Ok(())
}

/// Mean soft-target cross-entropy, evaluated in double precision.
pub fn soft_cross_entropy<L: AsRef<[f32]>>(logits: &[L], targets: &[SoftLabel]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::dims(logits.len(), targets.len()));
    }
    if logits.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let k = logits[0].as_ref().len();
    check_targets(targets, k)?;
    let mut total = 0.0;
    for (row, t) in logits.iter().zip(targets) {
        let row: Vec<f64> = row.as_ref().iter().map(|&v| v as f64).collect();
        if row.len() != k {
            return Err(Error::dims(k, row.len()));
        }
        total += soft_cross_entropy_row(&row, t.probs()).0;
    }
    Ok(total / logits.len() as f64)
}

/// Mean loss and its gradient over the batch. Frozen groups get exact zeros.
pub fn compute_gradients(
    params: &ModelParams,
    images: &[ImageTensor],
    targets: &[SoftLabel],
) -> Result<(f64, Vec<f32>)> {
    if images.len() != targets.len() {
        return Err(Error::dims(images.len(), targets.len()));
    }
    if images.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    check_images(params, images)?;
    check_targets(targets, params.num_classes())?;
    let shapes = params.arch.shapes()?;
    let n_params = params.weights.len();
    let partials: Vec<(f64, Vec<f32>)> = images
        .par_chunks(GRAD_CHUNK)
        .zip(targets.par_chunks(GRAD_CHUNK))
        .map(|(imgs, ts)| {
            let mut grad = vec![0.0f32; n_params];
            let mut loss = 0.0f64;
            for (img, t) in imgs.iter().zip(ts) {
                let trace = forward_sample(&params.arch, &shapes, &params.weights, image_input(img));
                let logits = trace.activations.last().unwrap();
                let target: Vec<f32> = t.probs().iter().map(|&p| p as f32).collect();
                let (_, d) = soft_cross_entropy_row(logits, &target);
                let row: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
                loss += soft_cross_entropy_row(&row, t.probs()).0;
                backward_sample(
                    &params.arch,
                    &shapes,
                    &params.weights,
                    &trace,
                    d,
                    &mut grad,
                    params.frozen,
                );
            }
            (loss, grad)
        })
        .collect();
    let mut grad = vec![0.0f32; n_params];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let scale = 1.0 / images.len() as f32;
    grad.iter_mut().for_each(|g| *g *= scale);
    for r in params.frozen_ranges() {
        grad[r].iter_mut().for_each(|g| *g = 0.0);
    }
    Ok((loss / images.len() as f64, grad))
}

/// Double-precision loss and gradient for planar inputs, used to check the
/// analytic gradients against finite differences.
pub fn loss_and_gradient_f64(
    arch: &ArchDescriptor,
    weights: &[f64],
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    let shapes = arch.shapes()?;
    if weights.len() != arch.param_count() {
        return Err(Error::dims(arch.param_count(), weights.len()));
    }
    let mut grad = vec![0.0; weights.len()];
    let mut loss = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let trace = forward_sample(arch, &shapes, weights, x.clone());
        let (l, d) = soft_cross_entropy_row(trace.activations.last().unwrap(), t);
        loss += l;
        backward_sample(arch, &shapes, weights, &trace, d, &mut grad, Frozen::default());
    }
    let n = inputs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Double-precision loss only.
pub fn loss_f64(
    arch: &ArchDescriptor,
    weights: &[f64],
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<f64> {
    let shapes = arch.shapes()?;
    let mut loss = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let trace = forward_sample(arch, &shapes, weights, x.clone());
        loss += soft_cross_entropy_row(trace.activations.last().unwrap(), t).0;
    }
    Ok(loss / inputs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::encode_label;

    fn random_images(n: usize, size: usize, seed: u64) -> Vec<ImageTensor> {
        let mut rng = Rng::new(seed, 0);
        (0..n)
            .map(|_| ImageTensor::from_fn(size, size, 3, |_, _, _| rng.unit() as f32).unwrap())
            .collect()
    }

    #[test]
    fn smallconv_param_count() {
        let arch = ArchDescriptor::build("smallconv", 32, 20).unwrap();
        let oracle = (3 * 16 * 9 + 16) + (16 * 32 * 9 + 32) + (32 * 64 * 9 + 64) + (64 * 20 + 20);
        assert_eq!(arch.param_count(), oracle);
        assert_eq!(init_model("smallconv", 32, 20, 1).unwrap().weights.len(), oracle);
    }

    #[test]
    fn wide_head() {
        let p = init_model("smallconv", 32, 307, 0).unwrap();
        assert_eq!(
            p.arch.layers.last(),
            Some(&LayerSpec::Linear {
                inputs: 64,
                outputs: 307
            })
        );
        let logits = forward(&p, &random_images(1, 32, 0)).unwrap();
        assert_eq!(logits[0].len(), 307);
    }

    #[test]
    fn init_errors_and_determinism() {
        assert!(init_model("resnet9000", 32, 5, 0).is_err());
        assert!(init_model("smallconv", 32, 1, 0).is_err());
        assert_eq!(
            init_model("tinyconv", 16, 4, 3).unwrap(),
            init_model("tinyconv", 16, 4, 3).unwrap()
        );
        assert_ne!(
            init_model("tinyconv", 16, 4, 3).unwrap().weights,
            init_model("tinyconv", 16, 4, 4).unwrap().weights
        );
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut p = init_model("tinyconv", 8, 3, 0).unwrap();
        p.weights.iter_mut().for_each(|w| *w = 0.0);
        for row in forward(&p, &random_images(3, 8, 1)).unwrap() {
            assert!(row.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forward_is_per_sample() {
        let p = init_model("tinyconv", 8, 3, 2).unwrap();
        let imgs = random_images(4, 8, 2);
        let a = forward(&p, &imgs).unwrap();
        let rev: Vec<_> = imgs.iter().rev().cloned().collect();
        let b = forward(&p, &rev).unwrap();
        for i in 0..4 {
            assert_eq!(a[i], b[3 - i]);
        }
        let same = forward(&p, &[imgs[0].clone(), imgs[0].clone()]).unwrap();
        assert_eq!(same[0], same[1]);
        assert!(forward(&p, &random_images(1, 9, 0)).is_err());
    }

    #[test]
    fn cross_entropy_properties() {
        let k = 5;
        let t = encode_label(1, k).unwrap();
        let l = soft_cross_entropy(&[vec![0.0f32; k]], &[t]).unwrap();
        assert!((l - (k as f64).ln()).abs() < 1e-12);

        let logits = vec![vec![0.3f32, -1.2, 2.0, 0.1, 0.0]];
        let ya = encode_label(0, k).unwrap();
        let yb = encode_label(2, k).unwrap();
        let lam = 0.37;
        let mixed = SoftLabel::new(
            ya.probs()
                .iter()
                .zip(yb.probs())
                .map(|(a, b)| lam * a + (1.0 - lam) * b)
                .collect(),
        )
        .unwrap();
        let lm = soft_cross_entropy(&logits, &[mixed]).unwrap();
        let la = soft_cross_entropy(&logits, &[ya]).unwrap();
        let lb = soft_cross_entropy(&logits, &[yb]).unwrap();
        assert!((lm - (lam * la + (1.0 - lam) * lb)).abs() < 1e-12);
        let bad = SoftLabel::from_raw(vec![0.5, 0.6, 0.0, 0.0, 0.0]);
        assert!(soft_cross_entropy(&logits, &[bad]).is_err());
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        let arch = ArchDescriptor::build("tinyconv", 6, 3).unwrap();
        let mut rng = Rng::new(11, 0);
        let weights: Vec<f64> = (0..arch.param_count()).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let inputs: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..3 * 36).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let targets = vec![vec![0.2, 0.5, 0.3], vec![0.0, 0.0, 1.0]];
        let (_, g) = loss_and_gradient_f64(&arch, &weights, &inputs, &targets).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for j in 0..weights.len() {
            let mut wp = weights.clone();
            let mut wm = weights.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (loss_f64(&arch, &wp, &inputs, &targets).unwrap()
                - loss_f64(&arch, &wm, &inputs, &targets).unwrap())
                / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-7));
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn frozen_backbone_gets_zero_gradient() {
        let mut p = init_model("tinyconv", 8, 3, 5).unwrap();
        p.frozen.backbone = true;
        let imgs = random_images(3, 8, 5);
        let t: Vec<_> = (0..3).map(|i| encode_label(i, 3).unwrap()).collect();
        let (_, g) = compute_gradients(&p, &imgs, &t).unwrap();
        for s in p.slices() {
            let part = &g[s.offset..s.offset + s.len];
            match s.group {
                Group::Backbone => assert!(part.iter().all(|&v| v == 0.0)),
                Group::Head => assert!(part.iter().any(|&v| v != 0.0)),
            }
        }
        p.frozen.backbone = false;
        let (_, full) = compute_gradients(&p, &imgs, &t).unwrap();
        let head = p.slices().last().unwrap();
        assert_eq!(&g[head.offset..], &full[head.offset..]);
    }

    #[test]
    fn duplicated_batch_has_single_sample_gradient() {
        let p = init_model("tinyconv", 8, 3, 6).unwrap();
        let img = random_images(1, 8, 6);
        let t = encode_label(2, 3).unwrap();
        let (l1, g1) = compute_gradients(&p, &img, std::slice::from_ref(&t)).unwrap();
        let (l2, g2) = compute_gradients(&p, &[img[0].clone(), img[0].clone()], &[t.clone(), t]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-6));
        }
    }
}
