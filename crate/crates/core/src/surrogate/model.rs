//! Residual CNN regressor: 3×3 stem, four stages of residual blocks, global
//! average pooling and a 64 → 2 dense head. Gradients are computed by
//! reverse-mode accumulation over per-layer caches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{SurrogateConfig, STAGES};
use super::conv::{conv_backward, conv_forward, ConvGeom};
use super::weights::{ModelWeights, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{PlateMatrix, PLATE_SIDE};

#[derive(Clone, Debug)]
struct BlockPlan {
    conv1: ConvGeom,
    conv2: ConvGeom,
    proj: Option<ConvGeom>,
    conv1_idx: usize,
    conv2_idx: usize,
    proj_idx: Option<usize>,
}

#[derive(Clone, Debug)]
struct Plan {
    stem: ConvGeom,
    blocks: Vec<BlockPlan>,
    /// Channels and spatial cells of the last feature map.
    features: usize,
    final_cells: usize,
    fc1_w: usize,
    fc1_b: usize,
    fc2_w: usize,
    fc2_b: usize,
    layout: Vec<(String, Vec<usize>)>,
}

impl Plan {
    fn new(config: &SurrogateConfig) -> Plan {
        let mut layout = Vec::new();
        let mut push = |name: String, shape: Vec<usize>| {
            layout.push((name, shape));
            layout.len() - 1
        };
        let side = PLATE_SIDE;
        let stem = ConvGeom::new(1, config.stem_channels, 3, 1, side, side);
        push("stem.weight".into(), stem.weight_shape());

        let (mut ch, mut h, mut w) = (config.stem_channels, stem.out_h, stem.out_w);
        let mut blocks = Vec::new();
        for (s, &out_ch) in config.stage_channels.iter().enumerate() {
            for b in 0..config.blocks_per_stage {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let prefix = format!("stage{}.block{}", s + 1, b + 1);
                let conv1 = ConvGeom::new(ch, out_ch, 3, stride, h, w);
                let conv2 = ConvGeom::new(out_ch, out_ch, 3, 1, conv1.out_h, conv1.out_w);
                let conv1_idx = push(format!("{prefix}.conv1.weight"), conv1.weight_shape());
                let conv2_idx = push(format!("{prefix}.conv2.weight"), conv2.weight_shape());
                let (proj, proj_idx) = if stride != 1 || ch != out_ch {
                    let p = ConvGeom::new(ch, out_ch, 1, stride, h, w);
                    debug_assert_eq!((p.out_h, p.out_w), (conv1.out_h, conv1.out_w));
                    (Some(p), Some(push(format!("{prefix}.proj.weight"), p.weight_shape())))
                } else {
                    (None, None)
                };
                blocks.push(BlockPlan {
                    conv1,
                    conv2,
                    proj,
                    conv1_idx,
                    conv2_idx,
                    proj_idx,
                });
                (ch, h, w) = (out_ch, conv1.out_h, conv1.out_w);
            }
        }
        let fc1_w = push("fc1.weight".into(), vec![config.head_hidden, ch]);
        let fc1_b = push("fc1.bias".into(), vec![config.head_hidden]);
        let fc2_w = push("fc2.weight".into(), vec![config.outputs, config.head_hidden]);
        let fc2_b = push("fc2.bias".into(), vec![config.outputs]);
        Plan {
            stem,
            blocks,
            features: ch,
            final_cells: h * w,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
            layout,
        }
    }
}

/// Configuration plus weights.
#[derive(Clone, Debug)]
pub struct SurrogateModel {
    config: SurrogateConfig,
    pub weights: ModelWeights,
    plan: Plan,
}

impl PartialEq for SurrogateModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.weights == other.weights
    }
}

/// Tensor names and shapes implied by `config`, in manifest order.
pub fn expected_layout(config: &SurrogateConfig) -> Vec<(String, Vec<usize>)> {
    Plan::new(config).layout
}

/// Spatial side of the feature map after each stage.
pub fn stage_sides(config: &SurrogateConfig) -> [usize; STAGES] {
    let plan = Plan::new(config);
    let mut sides = [0; STAGES];
    for (s, side) in sides.iter_mut().enumerate() {
        *side = plan.blocks[(s + 1) * config.blocks_per_stage - 1].conv2.out_h;
    }
    sides
}

fn fan_in(shape: &[usize]) -> usize {
    shape[1..].iter().product()
}

/// He-initialized model; biases (and, with `zero_init_residual`, the second
/// convolution of each block) start at zero. Deterministic per seed.
pub fn build_model(config: &SurrogateConfig, seed: u64) -> Result<SurrogateModel> {
    config.validate()?;
    let plan = Plan::new(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = plan
        .layout
        .iter()
        .map(|(name, shape)| {
            let mut t = Tensor::zeros(name.clone(), shape.clone());
            let zeroed = name.ends_with(".bias") || (config.zero_init_residual && name.ends_with(".conv2.weight"));
            if !zeroed {
                let std = (2.0 / fan_in(shape) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                t.data.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            }
            t
        })
        .collect();
    Ok(SurrogateModel {
        config: config.clone(),
        weights: ModelWeights { tensors },
        plan,
    })
}

#[derive(Debug)]
struct BlockCache {
    col1: Vec<f64>,
    a1: Vec<f64>,
    col2: Vec<f64>,
    colp: Option<Vec<f64>>,
    z: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug)]
pub(crate) struct ForwardCache {
    stem_col: Vec<f64>,
    stem_a: Vec<f64>,
    blocks: Vec<BlockCache>,
    feat: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

fn relu_mask_inplace(grad: &mut [f64], pre: &[f64]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

impl SurrogateModel {
    /// Wraps loaded weights after checking them against the config.
    pub fn from_parts(config: SurrogateConfig, weights: ModelWeights) -> Result<Self> {
        config.validate()?;
        let plan = Plan::new(&config);
        if weights.tensors.len() != plan.layout.len() {
            return Err(Error::Model(format!(
                "expected {} tensors, got {}",
                plan.layout.len(),
                weights.tensors.len()
            )));
        }
        for (t, (name, shape)) in weights.tensors.iter().zip(&plan.layout) {
            if &t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Model(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    t.name, t.shape, name, shape
                )));
            }
        }
        if !weights.all_finite() {
            return Err(Error::Model("weights contain non-finite values".into()));
        }
        Ok(SurrogateModel { config, weights, plan })
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.config.depth()
    }

    pub fn encode(&self, plate: &PlateMatrix) -> Result<Vec<f64>> {
        if plate.side() != PLATE_SIDE {
            return Err(Error::Model(format!(
                "model expects {PLATE_SIDE}×{PLATE_SIDE} plates, got {0}×{0}",
                plate.side()
            )));
        }
        let enc = self.config.input_encoding;
        Ok(plate.cells().iter().map(|&c| enc.encode(c)).collect())
    }

    fn w(&self, idx: usize) -> &[f64] {
        &self.weights.tensors[idx].data
    }

    fn block_forward(&self, b: &BlockPlan, x: &[f64]) -> (Vec<f64>, BlockCache) {
        let (a1, col1) = conv_forward(x, self.w(b.conv1_idx), &b.conv1);
        let r1 = relu(&a1);
        let (mut z, col2) = conv_forward(&r1, self.w(b.conv2_idx), &b.conv2);
        let colp = match (b.proj, b.proj_idx) {
            (Some(g), Some(idx)) => {
                let (sc, colp) = conv_forward(x, self.w(idx), &g);
                z.iter_mut().zip(&sc).for_each(|(a, s)| *a += s);
                Some(colp)
            }
            _ => {
                z.iter_mut().zip(x).for_each(|(a, s)| *a += s);
                None
            }
        };
        let y = relu(&z);
        (
            y,
            BlockCache {
                col1,
                a1,
                col2,
                colp,
                z,
            },
        )
    }

    /// Forward pass over an encoded `[1, 43, 43]` input.
    pub(crate) fn forward_cached(&self, input: &[f64]) -> ([f64; 2], ForwardCache) {
        let plan = &self.plan;
        let (stem_a, stem_col) = conv_forward(input, self.w(0), &plan.stem);
        let mut x = relu(&stem_a);
        let mut blocks = Vec::with_capacity(plan.blocks.len());
        for b in &plan.blocks {
            let (y, cache) = self.block_forward(b, &x);
            blocks.push(cache);
            x = y;
        }

        let cells = plan.final_cells as f64;
        let feat: Vec<f64> = x.chunks(plan.final_cells).map(|c| c.iter().sum::<f64>() / cells).collect();

        let fc1_w = self.w(plan.fc1_w);
        let hidden_pre: Vec<f64> = self
            .w(plan.fc1_b)
            .iter()
            .enumerate()
            .map(|(o, &bias)| bias + dot(&fc1_w[o * plan.features..][..plan.features], &feat))
            .collect();
        let hidden = relu(&hidden_pre);

        let fc2_w = self.w(plan.fc2_w);
        let nh = hidden.len();
        let bias = self.w(plan.fc2_b);
        let out = [
            bias[0] + dot(&fc2_w[..nh], &hidden),
            bias[1] + dot(&fc2_w[nh..2 * nh], &hidden),
        ];
        (
            out,
            ForwardCache {
                stem_col,
                stem_a,
                blocks,
                feat,
                hidden_pre,
                hidden,
            },
        )
    }

    /// Accumulates parameter gradients for one sample given ∂loss/∂output.
    pub(crate) fn backward(&self, cache: &ForwardCache, dout: [f64; 2], grads: &mut ModelWeights) {
        let plan = &self.plan;
        let nh = cache.hidden.len();
        let nf = plan.features;

        // dense head
        {
            let g = &mut grads.tensors[plan.fc2_b].data;
            g[0] += dout[0];
            g[1] += dout[1];
        }
        let fc2_w = self.w(plan.fc2_w);
        let mut dhidden = vec![0.0; nh];
        {
            let g = &mut grads.tensors[plan.fc2_w].data;
            for o in 0..2 {
                for k in 0..nh {
                    g[o * nh + k] += dout[o] * cache.hidden[k];
                    dhidden[k] += dout[o] * fc2_w[o * nh + k];
                }
            }
        }
        relu_mask_inplace(&mut dhidden, &cache.hidden_pre);
        grads.tensors[plan.fc1_b]
            .data
            .iter_mut()
            .zip(&dhidden)
            .for_each(|(g, d)| *g += d);
        let fc1_w = self.w(plan.fc1_w);
        let mut dfeat = vec![0.0; nf];
        {
            let g = &mut grads.tensors[plan.fc1_w].data;
            for (o, &dh) in dhidden.iter().enumerate() {
                if dh == 0.0 {
                    continue;
                }
                for k in 0..nf {
                    g[o * nf + k] += dh * cache.feat[k];
                    dfeat[k] += dh * fc1_w[o * nf + k];
                }
            }
        }

        // global average pool
        let inv = 1.0 / plan.final_cells as f64;
        let mut dx: Vec<f64> = dfeat
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d * inv, plan.final_cells))
            .collect();

        for (b, bc) in plan.blocks.iter().zip(&cache.blocks).rev() {
            dx = self.block_backward(b, bc, dx, grads);
        }

        relu_mask_inplace(&mut dx, &cache.stem_a);
        conv_backward(
            &dx,
            &cache.stem_col,
            self.w(0),
            &plan.stem,
            &mut grads.tensors[0].data,
            false,
        );
    }

    fn block_backward(&self, b: &BlockPlan, bc: &BlockCache, mut dz: Vec<f64>, grads: &mut ModelWeights) -> Vec<f64> {
        relu_mask_inplace(&mut dz, &bc.z);
        let mut dr1 = conv_backward(
            &dz,
            &bc.col2,
            self.w(b.conv2_idx),
            &b.conv2,
            &mut grads.tensors[b.conv2_idx].data,
            true,
        )
        .expect("input gradient requested");
        relu_mask_inplace(&mut dr1, &bc.a1);
        let mut dx = conv_backward(
            &dr1,
            &bc.col1,
            self.w(b.conv1_idx),
            &b.conv1,
            &mut grads.tensors[b.conv1_idx].data,
            true,
        )
        .expect("input gradient requested");
        match (b.proj, b.proj_idx, &bc.colp) {
            (Some(g), Some(idx), Some(colp)) => {
                let dsc = conv_backward(&dz, colp, self.w(idx), &g, &mut grads.tensors[idx].data, true)
                    .expect("input gradient requested");
                dx.iter_mut().zip(&dsc).for_each(|(a, s)| *a += s);
            }
            _ => dx.iter_mut().zip(&dz).for_each(|(a, s)| *a += s),
        }
        dx
    }

    /// Normalized (frequency, |S21|) prediction, unclamped.
    pub fn forward(&self, plate: &PlateMatrix) -> Result<[f64; 2]> {
        let input = self.encode(plate)?;
        Ok(self.forward_cached(&input).0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L1 loss on one sample (mean over the two outputs) and its subgradient,
/// scaled by `1 / batch`.
pub(crate) fn l1_loss_grad(pred: [f64; 2], target: [f64; 2], batch: usize) -> (f64, [f64; 2]) {
    let scale = 1.0 / (2.0 * batch as f64);
    let mut loss = 0.0;
    let mut grad = [0.0; 2];
    for k in 0..2 {
        let d = pred[k] - target[k];
        loss += d.abs() * scale;
        grad[k] = if d > 0.0 {
            scale
        } else if d < 0.0 {
            -scale
        } else {
            0.0
        };
    }
    (loss, grad)
}

/// Mean absolute error over the batch and both outputs, with its gradient.
pub fn loss_and_gradients(model: &SurrogateModel, batch: &[(PlateMatrix, [f64; 2])]) -> Result<(f64, ModelWeights)> {
    if batch.is_empty() {
        return Err(Error::Config("loss needs a non-empty batch".into()));
    }
    let inputs = batch
        .iter()
        .map(|(p, t)| Ok((model.encode(p)?, *t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(loss_and_gradients_encoded(model, &inputs))
}

pub(crate) fn loss_and_gradients_encoded(model: &SurrogateModel, batch: &[(Vec<f64>, [f64; 2])]) -> (f64, ModelWeights) {
    let mut grads = model.weights.zeros_like();
    let mut loss = 0.0;
    for (input, target) in batch {
        let (pred, cache) = model.forward_cached(input);
        let (l, dout) = l1_loss_grad(pred, *target, batch.len());
        loss += l;
        if dout != [0.0, 0.0] {
            model.backward(&cache, dout, &mut grads);
        }
    }
    (loss, grads)
}
