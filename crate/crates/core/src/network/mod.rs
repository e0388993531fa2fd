//! U-Net and interactive U-Net (image plus FG/BG guidance channels).
//!
//! Encoder blocks: 3x3 conv, ReLU, dropout, 3x3 conv, ReLU, then 2x2 max
//! pooling. A bottleneck block of the same form without pooling. Decoder
//! blocks: stride-2 3x3 transposed conv, concatenation with the encoder
//! skip, two 3x3 conv + ReLU. A 1x1 conv head with a sigmoid. All
//! convolutions are same-padded, so output size equals input size.

mod checkpoint;

pub use checkpoint::{ModelCheckpoint, TrainingMeta, CHECKPOINT_VERSION};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::guidance::GuidanceMaps;
use crate::loss::PredictionMap;
use crate::nn::{self, ConvCache, PoolCache, Tensor};
use crate::raster;

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]`.
const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    pub levels: usize,
    pub base_channels: usize,
    pub dropout_rate: f32,
    /// 1 for the plain U-Net, 3 for the interactive variant.
    pub in_channels: usize,
    pub out_channels: usize,
    /// Declared input size, validated against `2^levels` divisibility.
    pub input_shape: Option<(usize, usize)>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            levels: 4,
            base_channels: 32,
            dropout_rate: 0.1,
            in_channels: 3,
            out_channels: 1,
            input_shape: None,
        }
    }
}

impl NetworkSpec {
    pub fn unet(base_channels: usize) -> Self {
        NetworkSpec { in_channels: 1, base_channels, ..Default::default() }
    }

    pub fn iunet(base_channels: usize) -> Self {
        NetworkSpec { in_channels: 3, base_channels, ..Default::default() }
    }

    pub fn is_interactive(&self) -> bool {
        self.in_channels == 3
    }

    /// Spatial sizes must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.levels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.levels != 4 {
            return bad(format!("levels must be 4, got {}", self.levels));
        }
        if self.base_channels == 0 {
            return bad("base_channels must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return bad(format!("in_channels must be 1 or 3, got {}", self.in_channels));
        }
        if self.out_channels != 1 {
            return bad(format!("out_channels must be 1, got {}", self.out_channels));
        }
        if let Some((h, w)) = self.input_shape {
            let m = self.size_multiple();
            if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
                return bad(format!("input {h}x{w} is not divisible by {m}"));
            }
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Conv3,
    Conv1,
    UpConv,
}

#[derive(Debug, Clone)]
struct Layer {
    name: String,
    kind: Kind,
    cin: usize,
    cout: usize,
}

impl Layer {
    fn weight_len(&self) -> usize {
        match self.kind {
            Kind::Conv3 | Kind::UpConv => self.cin * self.cout * 9,
            Kind::Conv1 => self.cin * self.cout,
        }
    }
}

fn layer_plan(spec: &NetworkSpec) -> Vec<Layer> {
    let conv = |name: String, cin, cout| Layer { name, kind: Kind::Conv3, cin, cout };
    let mut layers = Vec::new();
    let mut cin = spec.in_channels;
    for l in 0..spec.levels {
        let c = spec.width(l);
        layers.push(conv(format!("enc{l}.conv_a"), cin, c));
        layers.push(conv(format!("enc{l}.conv_b"), c, c));
        cin = c;
    }
    let cb = spec.width(spec.levels);
    layers.push(conv("bottleneck.conv_a".into(), cin, cb));
    layers.push(conv("bottleneck.conv_b".into(), cb, cb));
    let mut below = cb;
    for l in (0..spec.levels).rev() {
        let c = spec.width(l);
        layers.push(Layer { name: format!("dec{l}.up"), kind: Kind::UpConv, cin: below, cout: c });
        layers.push(conv(format!("dec{l}.conv_a"), 2 * c, c));
        layers.push(conv(format!("dec{l}.conv_b"), c, c));
        below = c;
    }
    layers.push(Layer { name: "head".into(), kind: Kind::Conv1, cin: below, cout: spec.out_channels });
    layers
}

/// Forward state kept for the backward pass.
struct Block {
    conv_a: ConvCache,
    a_out: Tensor,
    dropout: Option<Vec<f32>>,
    conv_b: ConvCache,
    b_out: Tensor,
}

struct UpBlock {
    up_in: Tensor,
    conv_a: ConvCache,
    a_out: Tensor,
    conv_b: ConvCache,
    b_out: Tensor,
}

pub struct ForwardCache {
    encoder: Vec<(Block, PoolCache)>,
    bottleneck: Block,
    decoder: Vec<UpBlock>,
    head: ConvCache,
}

/// Whether dropout is active. Training carries the seed of its masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    /// Weight then bias for every layer, in plan order.
    params: Vec<Vec<f32>>,
}

/// Build a network with He-normal initialisation and zero biases.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let layers = layer_plan(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(layers.len() * 2);
    for layer in &layers {
        let fan_in = match layer.kind {
            Kind::Conv1 => layer.cin,
            _ => layer.cin * 9,
        };
        let std = (2.0 / fan_in as f32).sqrt();
        let normal = Normal::new(0.0f32, std).expect("finite std");
        params.push((0..layer.weight_len()).map(|_| normal.sample(&mut rng)).collect());
        params.push(vec![0.0; layer.cout]);
    }
    Ok(Model { spec: spec.clone(), layers, params })
}

impl Model {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Vec<f32>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.params
    }

    /// `(name, length)` of every parameter tensor in storage order.
    pub fn param_layout(&self) -> Vec<(String, usize)> {
        self.layers
            .iter()
            .flat_map(|l| [(format!("{}.weight", l.name), l.weight_len()), (format!("{}.bias", l.name), l.cout)])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f32>> {
        self.params.iter().map(|p| vec![0.0; p.len()]).collect()
    }

    /// SHA-256 over the `NetworkSpec` and every parameter bit pattern.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.spec).unwrap_or_default());
        for p in &self.params {
            for v in p {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn from_parts(spec: NetworkSpec, params: Vec<Vec<f32>>) -> Result<Model> {
        spec.validate()?;
        let layers = layer_plan(&spec);
        let expected: Vec<usize> = layers.iter().flat_map(|l| [l.weight_len(), l.cout]).collect();
        let actual: Vec<usize> = params.iter().map(Vec::len).collect();
        if expected != actual {
            return Err(Error::Format("parameter tensors do not match the network spec".into()));
        }
        Ok(Model { spec, layers, params })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels != self.spec.in_channels {
            return Err(Error::ChannelMismatch { expected: self.spec.in_channels, actual: x.channels });
        }
        let m = self.spec.size_multiple();
        if x.height == 0 || x.width == 0 || x.height % m != 0 || x.width % m != 0 {
            let h = x.height.div_ceil(m) * m;
            let w = x.width.div_ceil(m) * m;
            return Err(Error::shape((h.max(m), w.max(m)), (x.height, x.width)));
        }
        Ok(())
    }

    fn conv(&self, idx: usize, x: &Tensor) -> (Tensor, ConvCache) {
        let k = if self.layers[idx].kind == Kind::Conv1 { 1 } else { 3 };
        nn::conv_forward(x, &self.params[2 * idx], &self.params[2 * idx + 1], k)
    }

    fn block(&self, idx: usize, x: &Tensor, mode: Mode) -> Block {
        let (mut a, conv_a) = self.conv(idx, x);
        nn::relu_inplace(&mut a);
        let a_out = a.clone();
        let dropout = match mode {
            Mode::Train { dropout_seed } if self.spec.dropout_rate > 0.0 => {
                let seed = dropout_seed ^ (idx as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let mask = nn::dropout_mask(a.data.len(), self.spec.dropout_rate, seed);
                a.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                Some(mask)
            }
            _ => None,
        };
        let (mut b, conv_b) = self.conv(idx + 1, &a);
        nn::relu_inplace(&mut b);
        Block { conv_a, a_out, dropout, conv_b, b_out: b }
    }

    /// Logits of shape `[1, H, W]` plus the state needed by [`Model::backward`].
    pub fn forward_logits(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        let levels = self.spec.levels;
        let mut encoder = Vec::with_capacity(levels);
        let mut cur = x.clone();
        for l in 0..levels {
            let block = self.block(2 * l, &cur, mode);
            let (pooled, pool) = nn::maxpool_forward(&block.b_out);
            encoder.push((block, pool));
            cur = pooled;
        }
        let bottleneck = self.block(2 * levels, &cur, mode);
        let mut cur = bottleneck.b_out.clone();
        let mut decoder = Vec::with_capacity(levels);
        for (step, l) in (0..levels).rev().enumerate() {
            let idx = 2 * levels + 2 + 3 * step;
            let up = nn::tconv_forward(&cur, &self.params[2 * idx], &self.params[2 * idx + 1]);
            let cat = Tensor::concat(&up, &encoder[l].0.b_out);
            let (mut a, conv_a) = self.conv(idx + 1, &cat);
            nn::relu_inplace(&mut a);
            let (mut b, conv_b) = self.conv(idx + 2, &a);
            nn::relu_inplace(&mut b);
            let up_in = std::mem::replace(&mut cur, b.clone());
            decoder.push(UpBlock { up_in, conv_a, a_out: a, conv_b, b_out: b });
        }
        let head_idx = self.layers.len() - 1;
        let (logits, head) = self.conv(head_idx, &cur);
        Ok((logits, ForwardCache { encoder, bottleneck, decoder, head }))
    }

    fn block_backward(&self, idx: usize, block: &Block, mut grad: Tensor, grads: &mut [Vec<f32>]) -> Tensor {
        nn::relu_backward(&block.b_out, &mut grad);
        let (gw, rest) = grads[2 * (idx + 1)..].split_at_mut(1);
        let mut g = nn::conv_backward(&block.conv_b, &grad, &self.params[2 * (idx + 1)], &mut gw[0], &mut rest[0], 3);
        if let Some(mask) = &block.dropout {
            g.data.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        nn::relu_backward(&block.a_out, &mut g);
        let (gw, rest) = grads[2 * idx..].split_at_mut(1);
        nn::conv_backward(&block.conv_a, &g, &self.params[2 * idx], &mut gw[0], &mut rest[0], 3)
    }

    /// Accumulate parameter gradients for `d loss / d logits` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Tensor, grads: &mut [Vec<f32>]) {
        let levels = self.spec.levels;
        let head_idx = self.layers.len() - 1;
        let (gw, rest) = grads[2 * head_idx..].split_at_mut(1);
        let mut g = nn::conv_backward(&cache.head, dlogits, &self.params[2 * head_idx], &mut gw[0], &mut rest[0], 1);
        let mut skip_grads: Vec<Option<Tensor>> = (0..levels).map(|_| None).collect();
        for l in 0..levels {
            let step = levels - 1 - l;
            let idx = 2 * levels + 2 + 3 * step;
            let up = &cache.decoder[step];
            nn::relu_backward(&up.b_out, &mut g);
            let (gw, rest) = grads[2 * (idx + 2)..].split_at_mut(1);
            let mut ga = nn::conv_backward(&up.conv_b, &g, &self.params[2 * (idx + 2)], &mut gw[0], &mut rest[0], 3);
            nn::relu_backward(&up.a_out, &mut ga);
            let (gw, rest) = grads[2 * (idx + 1)..].split_at_mut(1);
            let gcat = nn::conv_backward(&up.conv_a, &ga, &self.params[2 * (idx + 1)], &mut gw[0], &mut rest[0], 3);
            let (gup, gskip) = gcat.split(self.spec.width(l));
            skip_grads[l] = Some(gskip);
            let (gw, rest) = grads[2 * idx..].split_at_mut(1);
            g = nn::tconv_backward(&up.up_in, &gup, &self.params[2 * idx], &mut gw[0], &mut rest[0]);
        }
        g = self.block_backward(2 * levels, &cache.bottleneck, g, grads);
        for l in (0..levels).rev() {
            let (block, pool) = &cache.encoder[l];
            let mut gb = nn::maxpool_backward(pool, &g);
            gb.add_assign(skip_grads[l].as_ref().expect("decoder visited every level"));
            g = self.block_backward(2 * l, block, gb, grads);
        }
    }

    /// Sigmoid probabilities for a `[in_channels, H, W]` input.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<PredictionMap> {
        let (logits, _) = self.forward_logits(x, mode)?;
        Ok(probabilities(&logits))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Clamped sigmoid of a `[1, H, W]` logit tensor.
pub fn probabilities(logits: &Tensor) -> PredictionMap {
    Array2::from_shape_fn((logits.height, logits.width), |(r, c)| {
        sigmoid(f64::from(logits.data[r * logits.width + c])).clamp(PROB_EPS, 1.0 - PROB_EPS)
    })
}

/// Stack an image with its guidance channels into a network input.
/// `None` guidance means all-zero channels for interactive networks.
pub fn assemble_input(spec: &NetworkSpec, image: &Array2<f32>, guidance: Option<&GuidanceMaps>) -> Result<Tensor> {
    let (h, w) = raster::dims(image);
    let mut data = Vec::with_capacity(spec.in_channels * h * w);
    data.extend(image.iter().copied());
    if spec.is_interactive() {
        match guidance {
            Some(g) => {
                crate::error::ensure_shape((h, w), g.dims())?;
                data.extend(g.fg.iter().copied());
                data.extend(g.bg.iter().copied());
            }
            None => data.resize(3 * h * w, 0.0),
        }
    }
    Ok(Tensor::from_vec(spec.in_channels, h, w, data))
}

/// Anything that maps an image plus clicks to foreground probabilities.
pub trait Segmenter: Sync {
    /// Whether guidance channels change the output. Plain U-Nets ignore clicks.
    fn uses_guidance(&self) -> bool;

    fn predict(&self, image: &Array2<f32>, guidance: Option<&GuidanceMaps>) -> Result<PredictionMap>;
}

impl Segmenter for Model {
    fn uses_guidance(&self) -> bool {
        self.spec.is_interactive()
    }

    /// Inputs of any size: the image is edge-padded (guidance zero-padded)
    /// up to the next multiple of `2^levels` and the output cropped back.
    fn predict(&self, image: &Array2<f32>, guidance: Option<&GuidanceMaps>) -> Result<PredictionMap> {
        let (h, w) = raster::dims(image);
        if let Some(g) = guidance {
            crate::error::ensure_shape((h, w), g.dims())?;
        }
        let m = self.spec.size_multiple();
        let (ph, pw) = (h.div_ceil(m).max(1) * m, w.div_ceil(m).max(1) * m);
        if (ph, pw) == (h, w) {
            let x = assemble_input(&self.spec, image, guidance)?;
            return self.forward(&x, Mode::Eval);
        }
        if h == 0 || w == 0 {
            return Err(Error::shape((ph, pw), (h, w)));
        }
        let padded = Array2::from_shape_fn((ph, pw), |(r, c)| image[[r.min(h - 1), c.min(w - 1)]]);
        let pad_zero = |a: &Array2<f32>| Array2::from_shape_fn((ph, pw), |(r, c)| if r < h && c < w { a[[r, c]] } else { 0.0 });
        let padded_guidance = guidance.map(|g| GuidanceMaps { fg: pad_zero(&g.fg), bg: pad_zero(&g.bg) });
        let x = assemble_input(&self.spec, &padded, padded_guidance.as_ref())?;
        let out = self.forward(&x, Mode::Eval)?;
        Ok(out.slice(ndarray::s![..h, ..w]).to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{loss_and_gradient, LossConfig};
    use rand::Rng;

    /// Independent count from the layer formulas: 3x3 conv `9 cin cout + cout`,
    /// transposed conv likewise, 1x1 head `cin + 1`.
    fn counting_oracle(in_ch: usize, base: usize) -> usize {
        let conv = |cin: usize, cout: usize| 9 * cin * cout + cout;
        let mut total = 0;
        let mut cin = in_ch;
        for l in 0..4 {
            let c = base << l;
            total += conv(cin, c) + conv(c, c);
            cin = c;
        }
        let cb = base << 4;
        total += conv(cin, cb) + conv(cb, cb);
        let mut below = cb;
        for l in (0..4).rev() {
            let c = base << l;
            total += conv(below, c) + conv(2 * c, c) + conv(c, c);
            below = c;
        }
        total + below + 1
    }

    #[test]
    fn parameter_count_regression() {
        let iunet = build_network(&NetworkSpec::iunet(32), 0).unwrap();
        assert_eq!(iunet.param_count(), counting_oracle(3, 32));
        assert_eq!(iunet.param_count(), 8_630_497);
        let unet = build_network(&NetworkSpec::unet(32), 0).unwrap();
        assert_eq!(unet.param_count(), 8_629_921);
        assert_eq!(build_network(&NetworkSpec::iunet(8), 0).unwrap().param_count(), counting_oracle(3, 8));
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            NetworkSpec { input_shape: Some((100, 64)), ..Default::default() },
            NetworkSpec { levels: 3, ..Default::default() },
            NetworkSpec { in_channels: 2, ..Default::default() },
            NetworkSpec { dropout_rate: 1.0, ..Default::default() },
        ] {
            assert!(matches!(build_network(&spec, 0), Err(Error::InvalidSpec(_))), "{spec:?}");
        }
        assert!(build_network(&NetworkSpec { input_shape: Some((64, 128)), ..Default::default() }, 0).is_ok());
    }

    #[test]
    fn shape_contract() {
        let model = build_network(&NetworkSpec::iunet(4), 1).unwrap();
        let x = Tensor::from_vec(3, 64, 64, (0..3 * 64 * 64).map(|i| ((i % 97) as f32) / 97.0).collect());
        let p = model.forward(&x, Mode::Eval).unwrap();
        assert_eq!(p.dim(), (64, 64));
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(p, model.forward(&x, Mode::Eval).unwrap());

        let rect = Tensor::zeros(3, 32, 48);
        assert_eq!(model.forward(&rect, Mode::Eval).unwrap().dim(), (32, 48));
        assert!(matches!(model.forward(&Tensor::zeros(3, 40, 32), Mode::Eval), Err(Error::ShapeMismatch { .. })));

        let unet = build_network(&NetworkSpec::unet(4), 1).unwrap();
        assert!(matches!(
            unet.forward(&x, Mode::Eval),
            Err(Error::ChannelMismatch { expected: 1, actual: 3 })
        ));
    }

    #[test]
    fn zero_guidance_is_valid_input() {
        let model = build_network(&NetworkSpec::iunet(4), 2).unwrap();
        let image = Array2::from_shape_fn((32, 32), |(r, c)| ((r + c) % 5) as f32 / 5.0);
        let a = model.predict(&image, None).unwrap();
        let b = model.predict(&image, Some(&GuidanceMaps::zeros(32, 32))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_pads_odd_sizes() {
        let model = build_network(&NetworkSpec::iunet(4), 2).unwrap();
        let image = Array2::from_shape_fn((37, 21), |(r, c)| ((r * c) % 7) as f32 / 7.0);
        let p = model.predict(&image, Some(&GuidanceMaps::zeros(37, 21))).unwrap();
        assert_eq!(p.dim(), (37, 21));
        assert!(matches!(model.predict(&image, Some(&GuidanceMaps::zeros(36, 21))), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn train_mode_dropout_is_seeded() {
        let spec = NetworkSpec { dropout_rate: 0.5, ..NetworkSpec::iunet(4) };
        let model = build_network(&spec, 3).unwrap();
        let x = Tensor::from_vec(3, 32, 32, (0..3 * 32 * 32).map(|i| ((i % 13) as f32) / 13.0).collect());
        let a = model.forward(&x, Mode::Train { dropout_seed: 9 }).unwrap();
        let b = model.forward(&x, Mode::Train { dropout_seed: 9 }).unwrap();
        let c = model.forward(&x, Mode::Train { dropout_seed: 10 }).unwrap();
        let e = model.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, e);
    }

    /// End-to-end check of `backward` against central differences of the
    /// dice loss with respect to a handful of parameters in every layer.
    #[test]
    fn backward_matches_finite_differences() {
        let spec = NetworkSpec { dropout_rate: 0.0, ..NetworkSpec::iunet(2) };
        let mut model = build_network(&spec, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in model.params_mut() {
            for v in p.iter_mut() {
                *v += rng.random_range(-0.05f32..0.05);
            }
        }
        let x = Tensor::from_vec(3, 16, 16, (0..3 * 256).map(|_| rng.random_range(0.0f32..1.0)).collect());
        let gt = Array2::from_shape_fn((16, 16), |(r, c)| (4..11).contains(&r) && (3..9).contains(&c));
        let cfg = LossConfig::default();
        let loss_of = |m: &Model| -> f64 {
            let p = m.forward(&x, Mode::Eval).unwrap();
            loss_and_gradient(&p, &gt, None, &cfg).unwrap().0
        };
        let (logits, cache) = model.forward_logits(&x, Mode::Eval).unwrap();
        let probs = probabilities(&logits);
        let (_, dp) = loss_and_gradient(&probs, &gt, None, &cfg).unwrap();
        let dlogits = Tensor::from_vec(
            1,
            16,
            16,
            dp.iter()
                .zip(&logits.data)
                .map(|(g, &z)| {
                    let s = sigmoid(f64::from(z));
                    (g * s * (1.0 - s)) as f32
                })
                .collect(),
        );
        let mut grads = model.zero_grads();
        model.backward(&cache, &dlogits, &mut grads);
        let h = 5e-3f32;
        let mut checked = 0;
        for t in 0..model.params.len() {
            for &i in &[0usize, model.params[t].len() / 2, model.params[t].len() - 1] {
                let orig = model.params[t][i];
                model.params[t][i] = orig + h;
                let up = loss_of(&model);
                model.params[t][i] = orig - h;
                let dn = loss_of(&model);
                model.params[t][i] = orig;
                let fd = (up - dn) / (2.0 * f64::from(h));
                let an = f64::from(grads[t][i]);
                assert!(
                    (fd - an).abs() < 2e-3 + 5e-2 * an.abs(),
                    "{} [{i}]: analytic {an} vs fd {fd}",
                    model.param_layout()[t].0
                );
                checked += 1;
            }
        }
        assert_eq!(checked, 3 * model.params.len());
    }
}
