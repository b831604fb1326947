//! Recovering latent embeddings for given images by descending the
//! generator's reconstruction loss with respect to the embedding alone.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::models::{Discriminator, Generator};
use crate::rng::{uniform_tensor, SplitMix64};
use crate::slerp::LatentEmbedding;
use crate::tensor::Tensor;
use crate::train::{AdamState, LATENT_RANGE};

pub use crate::data::mirror;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Start from the discriminator's bottleneck code of the target.
    Encoder,
    /// Start from a seeded uniform draw in the training latent range.
    Uniform,
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(Self::Encoder),
            "uniform" | "uniform-random" => Ok(Self::Uniform),
            other => Err(Error::Config(format!("unknown inversion init `{other}` (encoder|uniform)"))),
        }
    }
}

impl std::fmt::Display for InitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Encoder => "encoder",
            Self::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub steps: usize,
    pub lr: f64,
    pub init: InitKind,
    pub seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 0.05,
            init: InitKind::Uniform,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    /// Embedding with the lowest loss seen.
    pub z: LatentEmbedding,
    pub initial_loss: f64,
    /// Loss at the last iterate (equal to the last trace entry).
    pub final_loss: f64,
    pub best_loss: f64,
    /// Loss before each update plus the loss after the last one.
    pub loss_trace: Vec<f64>,
}

fn loss_and_grad(g: &Generator, z: &Tensor, target: &Tensor) -> Result<(f64, Vec<f64>)> {
    // Generator weights enter as constants, so only z is differentiated.
    let mut tape = Tape::new();
    let gvars = g.params.bind_frozen(&mut tape);
    let tv = tape.constant(target.clone());
    let zv = tape.param(z.clone());
    let out = g.forward_on(&mut tape, &gvars, zv)?;
    let loss = tape.l1_mean(out, tv)?;
    let value = tape.value(loss).item()?;
    let mut grads = tape.gradients(loss, &[zv])?;
    Ok((value, grads.take(zv).expect("requested gradient")))
}

/// Minimizes `l1_mean(G(z), target)` over `z` with Adam; generator weights are read only.
pub fn invert(g: &Generator, target: &Tensor, cfg: &InversionConfig, d: Option<&Discriminator>) -> Result<InversionResult> {
    if cfg.steps == 0 {
        return Err(Error::Contract("inversion needs at least one step".into()));
    }
    let s = g.config().out_size();
    if target.shape() != [1, 1, s, s] {
        return Err(Error::shape(format!("target {:?} does not match generator output [1, 1, {s}, {s}]", target.shape())));
    }
    let h = g.config().latent_dim;
    let mut z = match cfg.init {
        InitKind::Uniform => uniform_tensor(&[1, h], -LATENT_RANGE, LATENT_RANGE, &mut SplitMix64::new(cfg.seed))?,
        InitKind::Encoder => {
            let d = d.ok_or_else(|| Error::Contract("encoder initialization needs a discriminator".into()))?;
            if d.config().latent_dim != h {
                return Err(Error::Incompatible("discriminator bottleneck differs from latent_dim".into()));
            }
            d.encode(target)?
        }
    };
    let mut adam = AdamState::new(std::slice::from_ref(&z), cfg.lr);
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut best = (f64::INFINITY, z.clone());

    for i in 0..=cfg.steps {
        let (loss, grad) = loss_and_grad(g, &z, target)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "inversion loss {loss} at step {i}; trace so far {trace:?}"
            )));
        }
        trace.push(loss);
        if loss < best.0 {
            best = (loss, z.clone());
        }
        if i == cfg.steps {
            break;
        }
        z.grad = Some(grad);
        adam.step(std::slice::from_mut(&mut z))?;
        z.grad = None;
    }

    Ok(InversionResult {
        z: LatentEmbedding::new(best.1.into_data())?,
        initial_loss: trace[0],
        final_loss: *trace.last().expect("non-empty trace"),
        best_loss: best.0,
        loss_trace: trace,
    })
}

/// Inverts `image` and its mirror, with seeds `cfg.seed` and `cfg.seed + 1`.
pub fn paired_invert(
    g: &Generator,
    d: Option<&Discriminator>,
    image: &Tensor,
    cfg: &InversionConfig,
) -> Result<(InversionResult, InversionResult)> {
    let mirrored = mirror(image)?;
    let right_cfg = InversionConfig {
        seed: cfg.seed.wrapping_add(1),
        ..*cfg
    };
    Ok((invert(g, image, cfg, d)?, invert(g, &mirrored, &right_cfg, d)?))
}
