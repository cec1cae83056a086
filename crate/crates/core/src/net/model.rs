//! Encoder-decoder with pooling-index unpooling and the distance/segmentation heads.
//!
//! ```text
//! input -> [conv+relu]* -> pool  (x stages, indices kept)
//!       -> unpool -> [conv+relu]* (x stages, mirrored)      = features
//! features -> head_dist                                     = dist logits
//! concat(features, relu(dist logits)) -> head_seg           = seg logits
//! ```
//!
//! [`HeadLayout::Seg`] and [`HeadLayout::Dist`] are the single-task variants:
//! `head_seg` reads the features alone, or only `head_dist` exists.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{
    concat_channels, conv2d_backward, conv2d_forward, maxpool2x2_forward, maxunpool2x2,
    maxunpool2x2_backward, relu, relu_backward, split_channels, PoolIndices,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LOG_VAR_SEG: &str = "task.log_var_seg";
pub const LOG_VAR_DIST: &str = "task.log_var_dist";
pub const HEAD_DIST: &str = "head_dist";
pub const HEAD_SEG: &str = "head_seg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadLayout {
    /// Segmentation head on the decoder features only.
    Seg,
    /// Distance head only.
    Dist,
    /// Distance head feeding the segmentation head.
    Cascade,
}

impl HeadLayout {
    pub fn has_seg(self) -> bool {
        matches!(self, HeadLayout::Seg | HeadLayout::Cascade)
    }

    pub fn has_dist(self) -> bool {
        matches!(self, HeadLayout::Dist | HeadLayout::Cascade)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub stages: usize,
    pub channels_per_stage: Vec<usize>,
    pub convs_per_stage: Vec<usize>,
    pub kernel_size: usize,
    pub num_distance_classes: usize,
    pub num_seg_classes: usize,
    pub input_channels: usize,
    pub heads: HeadLayout,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            stages: 3,
            channels_per_stage: vec![16, 32, 64],
            convs_per_stage: vec![2, 2, 2],
            kernel_size: 3,
            num_distance_classes: 10,
            num_seg_classes: 2,
            input_channels: 3,
            heads: HeadLayout::Cascade,
        }
    }
}

impl NetworkConfig {
    /// The full-size VGG16 encoder shape (13 convolutions, 5 pools).
    pub fn vgg16() -> Self {
        Self {
            stages: 5,
            channels_per_stage: vec![64, 128, 256, 512, 512],
            convs_per_stage: vec![2, 2, 3, 3, 3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidNetwork(m));
        if self.stages == 0 {
            return bad("at least one stage required".into());
        }
        if self.channels_per_stage.len() != self.stages || self.convs_per_stage.len() != self.stages {
            return bad(format!(
                "{} stages but {} channel entries and {} conv entries",
                self.stages,
                self.channels_per_stage.len(),
                self.convs_per_stage.len()
            ));
        }
        if self.channels_per_stage.contains(&0) || self.convs_per_stage.contains(&0) {
            return bad("channel and conv counts must be positive".into());
        }
        if self.kernel_size % 2 == 0 {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        if self.num_distance_classes < 2 || self.num_seg_classes < 2 || self.input_channels == 0 {
            return bad("need >= 2 classes per head and >= 1 input channel".into());
        }
        Ok(())
    }

    /// Spatial extents must survive `stages` halvings.
    pub fn check_extent(&self, height: usize, width: usize) -> Result<()> {
        let d = 1usize << self.stages;
        if height == 0 || width == 0 || height % d != 0 || width % d != 0 {
            return Err(Error::InvalidNetwork(format!(
                "input {height}x{width} not divisible by 2^{} = {d}",
                self.stages
            )));
        }
        Ok(())
    }

    pub fn pad(&self) -> usize {
        self.kernel_size / 2
    }

    /// Body convolutions in execution order: `(name, in, out)`.
    fn body_convs(&self) -> Vec<(String, usize, usize)> {
        let ch = &self.channels_per_stage;
        let mut out = Vec::new();
        for s in 0..self.stages {
            for j in 0..self.convs_per_stage[s] {
                let cin = match (s, j) {
                    (0, 0) => self.input_channels,
                    (_, 0) => ch[s - 1],
                    _ => ch[s],
                };
                out.push((format!("enc{s}.conv{j}"), cin, ch[s]));
            }
        }
        for s in (0..self.stages).rev() {
            let n = self.convs_per_stage[s];
            for j in 0..n {
                let cout = if j + 1 < n { ch[s] } else { ch[s.saturating_sub(1)] };
                out.push((format!("dec{s}.conv{j}"), ch[s], cout));
            }
        }
        out
    }

    fn feature_channels(&self) -> usize {
        self.channels_per_stage[0]
    }

    /// Rebuilds a config from parameter names and shapes.
    pub fn infer(params: &IndexMap<String, Tensor>) -> Result<Self> {
        let bad = |m: &str| Error::InvalidNetwork(format!("cannot infer network: {m}"));
        let mut channels = Vec::new();
        let mut convs = Vec::new();
        let mut input_channels = 0;
        let mut kernel_size = 0;
        for s in 0.. {
            let mut j = 0;
            while let Some(w) = params.get(&format!("enc{s}.conv{j}.weight")) {
                let (cout, cin, k, _) = w.dims4()?;
                if s == 0 && j == 0 {
                    input_channels = cin;
                    kernel_size = k;
                }
                if j == 0 {
                    channels.push(cout);
                }
                j += 1;
            }
            if j == 0 {
                break;
            }
            convs.push(j);
        }
        if channels.is_empty() {
            return Err(bad("no encoder weights"));
        }
        let dist = params.get(&format!("{HEAD_DIST}.weight"));
        let seg = params.get(&format!("{HEAD_SEG}.weight"));
        let num_distance_classes = match dist {
            Some(w) => w.dims4()?.0,
            None => 10,
        };
        let (heads, num_seg_classes) = match (dist, seg) {
            (Some(_), Some(s)) => (HeadLayout::Cascade, s.dims4()?.0),
            (None, Some(s)) => (HeadLayout::Seg, s.dims4()?.0),
            (Some(_), None) => (HeadLayout::Dist, 2),
            (None, None) => return Err(bad("no head weights")),
        };
        let cfg = Self {
            stages: channels.len(),
            channels_per_stage: channels,
            convs_per_stage: convs,
            kernel_size,
            num_distance_classes,
            num_seg_classes,
            input_channels,
            heads,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters with gradient slots, in a stable insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
    grads_ready: bool,
}

impl ParamStore {
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let grad = Tensor::zeros(value.shape());
        self.entries.insert(name.into(), Param { value, grad });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::InvalidNetwork(format!("no parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn zero_grads(&mut self) {
        self.entries.values_mut().for_each(|p| p.grad.fill(0.0));
    }

    /// True between a backward pass and the optimizer step that consumes it.
    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    pub fn set_grads_ready(&mut self, ready: bool) {
        self.grads_ready = ready;
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    fn set_grad(&mut self, name: &str, grad: Tensor) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingGradient(name.to_string()))?;
        if p.grad.shape() != grad.shape() {
            return Err(Error::ShapeMismatch(format!("gradient for {name}")));
        }
        p.grad = grad;
        Ok(())
    }

    /// Values only, e.g. for checkpointing.
    pub fn values(&self) -> IndexMap<String, Tensor> {
        self.entries
            .iter()
            .map(|(k, p)| (k.clone(), p.value.clone()))
            .collect()
    }
}

/// Which names a partial weight load touched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    /// In the model but absent from the source; left at their initial values.
    pub kept: Vec<String>,
    /// In the source but not in the model.
    pub ignored: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: NetworkConfig,
    pub params: ParamStore,
}

struct ForwardCache {
    conv_inputs: Vec<Tensor>,
    conv_outputs: Vec<Tensor>,
    seg_input: Option<Tensor>,
}

pub struct ForwardOutputs {
    pub dist_logits: Option<Tensor>,
    pub seg_logits: Option<Tensor>,
    pub pool_indices: Vec<PoolIndices>,
    cache: Option<ForwardCache>,
}

impl ForwardOutputs {
    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// ReLU on/off flags of every body activation and of the logits feeding
    /// the cascade, followed by the pool switches. Inputs sharing a pattern
    /// lie on one smooth piece of the network. `None` without caches.
    pub fn activation_pattern(&self) -> Option<Vec<u8>> {
        let cache = self.cache.as_ref()?;
        let mut p: Vec<u8> = Vec::new();
        for t in &cache.conv_outputs {
            p.extend(t.data().iter().map(|&v| u8::from(v > 0.0)));
        }
        if cache.seg_input.is_some() {
            if let Some(d) = &self.dist_logits {
                p.extend(d.data().iter().map(|&v| u8::from(v > 0.0)));
            }
        }
        for idx in &self.pool_indices {
            p.extend_from_slice(&idx.argmax);
        }
        Some(p)
    }

    /// Drops the activations kept for the backward pass.
    pub fn discard_cache(&mut self) {
        self.cache = None;
    }
}

impl Model {
    /// Kaiming-uniform body weights (fan-in), gain-1 head weights, zero biases,
    /// zero task log-variances.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel_size;
        let mut params = ParamStore::default();
        // Heads are linear: no ReLU follows them, so no factor-2 gain.
        let mut add_conv = |params: &mut ParamStore, name: &str, cin: usize, cout: usize| {
            let fan_in = (cin * k * k) as f64;
            let gain = if name.starts_with("head_") { 3.0 } else { 6.0 };
            let bound = (gain / fan_in).sqrt();
            let w: Vec<f64> = (0..cout * cin * k * k)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            params.insert(format!("{name}.weight"), Tensor::new([cout, cin, k, k], w).unwrap());
            params.insert(format!("{name}.bias"), Tensor::zeros([cout]));
        };
        for (name, cin, cout) in config.body_convs() {
            add_conv(&mut params, &name, cin, cout);
        }
        let f = config.feature_channels();
        let kd = config.num_distance_classes;
        if config.heads.has_dist() {
            add_conv(&mut params, HEAD_DIST, f, kd);
        }
        match config.heads {
            HeadLayout::Cascade => add_conv(&mut params, HEAD_SEG, f + kd, config.num_seg_classes),
            HeadLayout::Seg => add_conv(&mut params, HEAD_SEG, f, config.num_seg_classes),
            HeadLayout::Dist => {}
        }
        params.insert(LOG_VAR_SEG, Tensor::scalar(0.0));
        params.insert(LOG_VAR_DIST, Tensor::scalar(0.0));
        Ok(Self { config, params })
    }

    /// Builds a model whose config is inferred from the tensor names and shapes.
    pub fn from_tensors(tensors: &IndexMap<String, Tensor>) -> Result<Self> {
        let config = NetworkConfig::infer(tensors)?;
        let mut model = Self::new(config, 0)?;
        let report = model.load_weights(tensors)?;
        if let Some(name) = report.kept.iter().find(|n| !n.starts_with("task.")) {
            return Err(Error::Checkpoint(format!("missing tensor {name}")));
        }
        Ok(model)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Copies every tensor whose name exists in the model. Shapes must agree.
    pub fn load_weights(&mut self, tensors: &IndexMap<String, Tensor>) -> Result<LoadReport> {
        let mut report = LoadReport::default();
        for (name, t) in tensors {
            match self.params.get_mut(name) {
                Some(p) if p.value.shape() == t.shape() => {
                    p.value = t.clone();
                    report.loaded.push(name.clone());
                }
                Some(p) => {
                    return Err(Error::Checkpoint(format!(
                        "{name}: checkpoint shape {:?}, model shape {:?}",
                        t.shape(),
                        p.value.shape()
                    )))
                }
                None => report.ignored.push(name.clone()),
            }
        }
        report.kept = self
            .params
            .names()
            .filter(|n| !tensors.contains_key(*n))
            .map(str::to_string)
            .collect();
        Ok(report)
    }

    fn conv(&self, name: &str, x: &Tensor) -> Result<Tensor> {
        conv2d_forward(
            x,
            self.params.value(&format!("{name}.weight"))?,
            self.params.value(&format!("{name}.bias"))?,
            self.config.pad(),
        )
    }

    /// Runs the network and keeps the activations needed by [`Model::backward`].
    pub fn forward(&self, input: &Tensor) -> Result<ForwardOutputs> {
        self.run(input, true)
    }

    /// Runs the network without keeping activations.
    pub fn predict(&self, input: &Tensor) -> Result<ForwardOutputs> {
        self.run(input, false)
    }

    fn run(&self, input: &Tensor, keep: bool) -> Result<ForwardOutputs> {
        let (_, c, h, w) = input.dims4()?;
        if c != self.config.input_channels {
            return Err(Error::ShapeMismatch(format!(
                "input has {c} channels, network expects {}",
                self.config.input_channels
            )));
        }
        self.config.check_extent(h, w)?;
        input.check_finite("network input")?;

        let mut conv_inputs = Vec::new();
        let mut conv_outputs = Vec::new();
        let mut pool_indices = Vec::with_capacity(self.config.stages);
        let mut x = input.clone();
        let convs = self.config.body_convs();
        let mut layer = convs.iter();
        let mut step = |x: Tensor, conv_inputs: &mut Vec<Tensor>, conv_outputs: &mut Vec<Tensor>| -> Result<Tensor> {
            let (name, _, _) = layer.next().expect("layer plan matches config");
            let y = relu(&self.conv(name, &x)?);
            if keep {
                conv_inputs.push(x);
                conv_outputs.push(y.clone());
            }
            Ok(y)
        };
        for s in 0..self.config.stages {
            for _ in 0..self.config.convs_per_stage[s] {
                x = step(x, &mut conv_inputs, &mut conv_outputs)?;
            }
            let (pooled, idx) = maxpool2x2_forward(&x)?;
            pool_indices.push(idx);
            x = pooled;
        }
        for s in (0..self.config.stages).rev() {
            x = maxunpool2x2(&x, &pool_indices[s])?;
            for _ in 0..self.config.convs_per_stage[s] {
                x = step(x, &mut conv_inputs, &mut conv_outputs)?;
            }
        }
        let features = x;

        let dist_logits = if self.config.heads.has_dist() {
            Some(self.conv(HEAD_DIST, &features)?)
        } else {
            None
        };
        let mut seg_input = None;
        let seg_logits = match self.config.heads {
            HeadLayout::Cascade => {
                let cat = concat_channels(&features, &relu(dist_logits.as_ref().unwrap()))?;
                let y = self.conv(HEAD_SEG, &cat)?;
                seg_input = Some(cat);
                Some(y)
            }
            HeadLayout::Seg => Some(self.conv(HEAD_SEG, &features)?),
            HeadLayout::Dist => None,
        };
        for (t, what) in [(&dist_logits, "distance logits"), (&seg_logits, "segmentation logits")] {
            if let Some(t) = t {
                t.check_finite(what)?;
            }
        }
        Ok(ForwardOutputs {
            dist_logits,
            seg_logits,
            pool_indices,
            cache: keep.then_some(ForwardCache {
                conv_inputs,
                conv_outputs,
                seg_input,
            }),
        })
    }

    /// Back-propagates logit gradients into every weight and bias gradient slot.
    ///
    /// A head whose gradient is `None` contributes nothing. Task log-variance
    /// gradients are zeroed here; the loss sets them.
    pub fn backward(
        &mut self,
        out: &ForwardOutputs,
        grad_dist: Option<&Tensor>,
        grad_seg: Option<&Tensor>,
    ) -> Result<()> {
        let cache = out
            .cache
            .as_ref()
            .ok_or_else(|| Error::MissingCache("forward ran without caches".into()))?;
        let pad = self.config.pad();
        let features = cache
            .conv_outputs
            .last()
            .ok_or_else(|| Error::MissingCache("no body activations".into()))?;
        let mut grads: Vec<(String, Tensor)> = Vec::new();
        let mut conv_back = |name: &str, x: &Tensor, g: &Tensor, need_input: bool| -> Result<Option<Tensor>> {
            let cg = conv2d_backward(
                x,
                self.params.value(&format!("{name}.weight"))?,
                self.params.value(&format!("{name}.bias"))?,
                pad,
                g,
                need_input,
            )?;
            grads.push((format!("{name}.weight"), cg.weight));
            grads.push((format!("{name}.bias"), cg.bias));
            Ok(cg.input)
        };

        let mut g_features = Tensor::zeros(features.shape());
        let mut g_dist_total = match (&out.dist_logits, grad_dist) {
            (Some(d), Some(g)) if d.shape() == g.shape() => Some(g.clone()),
            (Some(d), None) => Some(Tensor::zeros(d.shape())),
            (None, None) => None,
            _ => {
                return Err(Error::ShapeMismatch(
                    "distance gradient does not match the distance head".into(),
                ))
            }
        };
        let zero_seg;
        let g_seg = match (&out.seg_logits, grad_seg) {
            (Some(s), Some(g)) if s.shape() == g.shape() => Some(g),
            (Some(s), None) => {
                zero_seg = Tensor::zeros(s.shape());
                Some(&zero_seg)
            }
            (None, None) => None,
            _ => {
                return Err(Error::ShapeMismatch(
                    "segmentation gradient does not match the segmentation head".into(),
                ))
            }
        };

        match self.config.heads {
            HeadLayout::Cascade => {
                let seg_in = cache
                    .seg_input
                    .as_ref()
                    .ok_or_else(|| Error::MissingCache("segmentation head input".into()))?;
                let g_in = conv_back(HEAD_SEG, seg_in, g_seg.unwrap(), true)?.unwrap();
                let (g_f, g_relu) = split_channels(&g_in, self.config.feature_channels())?;
                g_features.add_assign(&g_f)?;
                let dist = out.dist_logits.as_ref().unwrap();
                g_dist_total
                    .as_mut()
                    .unwrap()
                    .add_assign(&relu_backward(&g_relu, dist)?)?;
            }
            HeadLayout::Seg => {
                let g_f = conv_back(HEAD_SEG, features, g_seg.unwrap(), true)?.unwrap();
                g_features.add_assign(&g_f)?;
            }
            HeadLayout::Dist => {}
        }
        if let Some(g) = &g_dist_total {
            let g_f = conv_back(HEAD_DIST, features, g, true)?.unwrap();
            g_features.add_assign(&g_f)?;
        }

        let convs = self.config.body_convs();
        let mut layer = convs.len();
        let mut g = g_features;
        let mut back_stage = |g: Tensor, n: usize, layer: &mut usize| -> Result<Tensor> {
            let mut g = g;
            for _ in 0..n {
                *layer -= 1;
                let gz = relu_backward(&g, &cache.conv_outputs[*layer])?;
                let need = *layer > 0;
                g = match conv_back(&convs[*layer].0, &cache.conv_inputs[*layer], &gz, need)? {
                    Some(gi) => gi,
                    None => Tensor::zeros(cache.conv_inputs[*layer].shape()),
                };
            }
            Ok(g)
        };
        for s in 0..self.config.stages {
            g = back_stage(g, self.config.convs_per_stage[s], &mut layer)?;
            g = maxunpool2x2_backward(&g, &out.pool_indices[s])?;
        }
        for s in (0..self.config.stages).rev() {
            g = maxunpool2x2(&g, &out.pool_indices[s])?;
            g = back_stage(g, self.config.convs_per_stage[s], &mut layer)?;
        }
        debug_assert_eq!(layer, 0);

        self.params.zero_grads();
        for (name, grad) in grads {
            self.params.set_grad(&name, grad)?;
        }
        self.params.grads_ready = true;
        Ok(())
    }
}
