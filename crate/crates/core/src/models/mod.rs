//! Generator and auto-encoder discriminator.
//!
//! The generator projects a latent vector to a `channels × base × base` map
//! and then applies `stages` blocks of (×2 nearest upsample → 3×3 transposed
//! convolution → ELU), finishing with a single-channel 3×3 transposed
//! convolution and `tanh`. The discriminator encodes with a 3×3 convolution
//! followed by `stages` stride-2 4×4 convolutions and a linear bottleneck of
//! width `latent_dim`; its decoder has exactly the generator's layout.
//!
//! Parameter counts, with `h = latent_dim`, `C = channels`, `b = base_size`,
//! `s = stages`:
//!
//! ```text
//! generator      = (h + 1)·C·b² + s·(9C² + C) + 9C + 1
//! discriminator  = 10C + s·(16C² + C) + (C·b² + 1)·h + generator
//! ```

pub mod checkpoint;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Side of every stride-1 kernel.
pub const KERNEL: usize = 3;
/// Side of the stride-2 downsampling kernels in the encoder.
pub const DOWN_KERNEL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    pub base_size: usize,
    pub channels: usize,
    pub stages: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            base_size: 4,
            channels: 16,
            stages: 2,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 2 {
            return Err(Error::Config(format!("latent_dim must be >= 2, got {}", self.latent_dim)));
        }
        if self.base_size == 0 || self.channels == 0 || self.stages == 0 {
            return Err(Error::Config(format!(
                "base_size, channels and stages must be positive: {self:?}"
            )));
        }
        if self.stages > 8 {
            return Err(Error::Config(format!("stages must be <= 8, got {}", self.stages)));
        }
        Ok(())
    }

    /// Side of the generated image, `base_size · 2^stages`.
    pub fn out_size(&self) -> usize {
        self.base_size << self.stages
    }

    fn feature_len(&self) -> usize {
        self.channels * self.base_size * self.base_size
    }

    pub fn generator_param_count(&self) -> usize {
        let (h, c, b2, s) = (self.latent_dim, self.channels, self.base_size * self.base_size, self.stages);
        (h + 1) * c * b2 + s * (9 * c * c + c) + 9 * c + 1
    }

    pub fn discriminator_param_count(&self) -> usize {
        let (h, c, b2, s) = (self.latent_dim, self.channels, self.base_size * self.base_size, self.stages);
        10 * c + s * (16 * c * c + c) + (c * b2 + 1) * h + self.generator_param_count()
    }

    /// Names, shapes and fan-in of the decoder parameters, in storage order.
    fn decoder_layout(&self, prefix: &str) -> Vec<(String, Vec<usize>, usize)> {
        let (h, c, k) = (self.latent_dim, self.channels, KERNEL);
        let mut out = vec![
            (format!("{prefix}proj.w"), vec![h, self.feature_len()], h),
            (format!("{prefix}proj.b"), vec![self.feature_len()], h),
        ];
        for i in 0..self.stages {
            out.push((format!("{prefix}stage{i}.k"), vec![c, c, k, k], c * k * k));
            out.push((format!("{prefix}stage{i}.b"), vec![c], c * k * k));
        }
        out.push((format!("{prefix}out.k"), vec![c, 1, k, k], c * k * k));
        out.push((format!("{prefix}out.b"), vec![1], c * k * k));
        out
    }

    fn encoder_layout(&self) -> Vec<(String, Vec<usize>, usize)> {
        let (h, c, k, dk) = (self.latent_dim, self.channels, KERNEL, DOWN_KERNEL);
        let mut out = vec![
            ("enc.in.k".to_string(), vec![c, 1, k, k], k * k),
            ("enc.in.b".to_string(), vec![c], k * k),
        ];
        for i in 0..self.stages {
            out.push((format!("enc.down{i}.k"), vec![c, c, dk, dk], c * dk * dk));
            out.push((format!("enc.down{i}.b"), vec![c], c * dk * dk));
        }
        out.push(("enc.fc.w".to_string(), vec![self.feature_len(), h], self.feature_len()));
        out.push(("enc.fc.b".to_string(), vec![h], self.feature_len()));
        out
    }

    pub(crate) fn generator_layout(&self) -> Vec<(String, Vec<usize>, usize)> {
        self.decoder_layout("")
    }

    pub(crate) fn discriminator_layout(&self) -> Vec<(String, Vec<usize>, usize)> {
        let mut l = self.encoder_layout();
        l.extend(self.decoder_layout("dec."));
        l
    }
}

/// Ordered, named parameter tensors of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    fn from_layout(layout: &[(String, Vec<usize>, usize)], mut init: impl FnMut(&[usize], usize) -> Result<Tensor>) -> Result<Self> {
        let mut names = Vec::with_capacity(layout.len());
        let mut tensors = Vec::with_capacity(layout.len());
        for (name, shape, fan_in) in layout {
            names.push(name.clone());
            tensors.push(init(shape, *fan_in)?);
        }
        Ok(Self { names, tensors })
    }

    /// Uniform `[-1/√fan_in, 1/√fan_in)` initialization.
    fn init_uniform(layout: &[(String, Vec<usize>, usize)], rng: &mut SplitMix64) -> Result<Self> {
        Self::from_layout(layout, |shape, fan_in| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            crate::rng::uniform_tensor(shape, -bound, bound, rng)
        })
    }

    fn zeroed(layout: &[(String, Vec<usize>, usize)]) -> Result<Self> {
        Self::from_layout(layout, |shape, _| Tensor::zeros(shape))
    }

    pub(crate) fn from_parts(names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        Self { names, tensors }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every tensor as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Registers every tensor as a constant (frozen network).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    /// Stores `grads` for `vars` (as returned by [`ParamSet::bind`]) on each tensor.
    pub fn attach_grads(&mut self, vars: &[Var], grads: &mut Gradients) -> Result<()> {
        if vars.len() != self.tensors.len() {
            return Err(Error::Contract(format!(
                "{} vars for {} parameters",
                vars.len(),
                self.tensors.len()
            )));
        }
        for (t, v) in self.tensors.iter_mut().zip(vars) {
            let g = grads
                .take(*v)
                .ok_or_else(|| Error::Contract(format!("no gradient recorded for {v:?}")))?;
            t.grad = Some(g);
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.grad = None);
    }

    /// All parameters concatenated into one vector.
    pub fn flatten(&self) -> Tensor {
        let data: Vec<f64> = self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect();
        Tensor::from_vec(data).expect("parameter sets are non-empty")
    }

    /// Inverse of [`ParamSet::flatten`], keeping names and shapes.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.count() {
            return Err(Error::shape(format!("{} values for {} parameters", flat.len(), self.count())));
        }
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            tensors.push(Tensor::new(t.shape().to_vec(), flat[offset..offset + t.len()].to_vec())?);
            offset += t.len();
        }
        Ok(Self {
            names: self.names.clone(),
            tensors,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

/// Shared decoder body: projection, upsampling stages, `tanh` output.
/// `vars` follow [`GeneratorConfig::decoder_layout`] order.
fn decode(tape: &mut Tape, cfg: &GeneratorConfig, vars: &[Var], z: Var) -> Result<Var> {
    let n = match *tape.value(z).shape() {
        [n, h] if h == cfg.latent_dim => n,
        ref s => {
            return Err(Error::shape(format!(
                "latent batch {s:?} does not match latent_dim {}",
                cfg.latent_dim
            )))
        }
    };
    let pad = KERNEL / 2;
    let mut y = tape.linear(z, vars[0], vars[1])?;
    y = tape.reshape(y, &[n, cfg.channels, cfg.base_size, cfg.base_size])?;
    for i in 0..cfg.stages {
        y = tape.upsample2x(y)?;
        y = tape.deconv2d(y, vars[2 + 2 * i], 1, pad)?;
        y = tape.add_bias(y, vars[3 + 2 * i])?;
        y = tape.elu(y)?;
    }
    let last = 2 + 2 * cfg.stages;
    y = tape.deconv2d(y, vars[last], 1, pad)?;
    y = tape.add_bias(y, vars[last + 1])?;
    tape.tanh(y)
}

fn check_latent(cfg: &GeneratorConfig, z: &Tensor) -> Result<()> {
    match *z.shape() {
        [_, h] if h == cfg.latent_dim => {}
        ref s => {
            return Err(Error::shape(format!(
                "latent batch {s:?} does not match latent_dim {}",
                cfg.latent_dim
            )))
        }
    }
    if !z.all_finite() {
        return Err(Error::NonFinite("latent batch".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    config: GeneratorConfig,
    pub params: ParamSet,
}

impl Generator {
    pub fn new(config: GeneratorConfig, rng: &mut SplitMix64) -> Result<Self> {
        config.validate()?;
        let params = ParamSet::init_uniform(&config.generator_layout(), rng)?;
        Ok(Self { config, params })
    }

    /// All weights and biases zero.
    pub fn zeroed(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let params = ParamSet::zeroed(&config.generator_layout())?;
        Ok(Self { config, params })
    }

    pub(crate) fn from_params(config: GeneratorConfig, params: ParamSet) -> Self {
        Self { config, params }
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Records `G(z)` for `z: [N, latent_dim]`; `vars` come from binding `self.params`.
    pub fn forward_on(&self, tape: &mut Tape, vars: &[Var], z: Var) -> Result<Var> {
        decode(tape, &self.config, vars, z)
    }

    /// `G(z)` as `[N, 1, S, S]`.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        check_latent(&self.config, z)?;
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let zv = tape.constant(z.clone());
        let out = self.forward_on(&mut tape, &vars, zv)?;
        Ok(tape.value(out).clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    config: GeneratorConfig,
    pub params: ParamSet,
}

impl Discriminator {
    pub fn new(config: GeneratorConfig, rng: &mut SplitMix64) -> Result<Self> {
        config.validate()?;
        let params = ParamSet::init_uniform(&config.discriminator_layout(), rng)?;
        Ok(Self { config, params })
    }

    pub fn zeroed(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let params = ParamSet::zeroed(&config.discriminator_layout())?;
        Ok(Self { config, params })
    }

    pub(crate) fn from_params(config: GeneratorConfig, params: ParamSet) -> Self {
        Self { config, params }
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    fn encoder_param_len(&self) -> usize {
        4 + 2 * self.config.stages
    }

    fn check_images(&self, shape: &[usize]) -> Result<()> {
        let s = self.config.out_size();
        match *shape {
            [_, 1, h, w] if h == s && w == s => Ok(()),
            _ => Err(Error::shape(format!("discriminator expects [N, 1, {s}, {s}], got {shape:?}"))),
        }
    }

    /// Records the bottleneck code `[N, latent_dim]` of `x`.
    pub fn encode_on(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        self.check_images(tape.value(x).shape())?;
        let cfg = &self.config;
        let n = tape.value(x).shape()[0];
        let mut y = tape.conv2d(x, vars[0], 1, KERNEL / 2)?;
        y = tape.add_bias(y, vars[1])?;
        y = tape.elu(y)?;
        for i in 0..cfg.stages {
            y = tape.conv2d(y, vars[2 + 2 * i], 2, 1)?;
            y = tape.add_bias(y, vars[3 + 2 * i])?;
            y = tape.elu(y)?;
        }
        y = tape.reshape(y, &[n, cfg.feature_len()])?;
        let fc = 2 + 2 * cfg.stages;
        tape.linear(y, vars[fc], vars[fc + 1])
    }

    /// Records the auto-encoder reconstruction of `x`.
    pub fn reconstruct_on(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let code = self.encode_on(tape, vars, x)?;
        decode(tape, &self.config, &vars[self.encoder_param_len()..], code)
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.check_images(x.shape())?;
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.reconstruct_on(&mut tape, &vars, xv)?;
        Ok(tape.value(out).clone())
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check_images(x.shape())?;
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.encode_on(&mut tape, &vars, xv)?;
        Ok(tape.value(out).clone())
    }
}
