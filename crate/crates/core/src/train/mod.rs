//! Boundary-equilibrium training of the generator/discriminator pair.
//!
//! With `L(v) = mean |v - D(v)|` the auto-encoder reconstruction loss:
//!
//! ```text
//! L_real = L(x)            L_fake = L(G(z))
//! L_D    = L_real - k·L_fake
//! L_G    = L_fake
//! k     <- clamp(k + λ·(γ·L_real - L_fake), 0, 1)
//! M      = L_real + |γ·L_real - L_fake|
//! ```
//!
//! Each step takes one Adam update of D along ∂L_D/∂θ_D and one of G along
//! ∂L_G/∂θ_G, both computed from the same forward pass.

pub mod adam;
pub mod metrics;

use std::path::PathBuf;

use crate::autodiff::Tape;
use crate::data::ImageSource;
use crate::error::{Error, Result};
use crate::models::checkpoint::Checkpoint;
use crate::models::{Discriminator, Generator, GeneratorConfig};
use crate::rng::{uniform_tensor, SplitMix64};
use crate::tensor::Tensor;

pub use adam::AdamState;
pub use metrics::{MetricsRow, MetricsWriter, METRICS_HEADER};

/// Latent codes are drawn uniformly from `[-LATENT_RANGE, LATENT_RANGE)`.
pub const LATENT_RANGE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumState {
    pub k: f64,
    pub gamma: f64,
    pub lambda_k: f64,
}

impl EquilibriumState {
    pub fn new(gamma: f64, lambda_k: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if !(lambda_k > 0.0 && lambda_k.is_finite()) {
            return Err(Error::Config(format!("lambda_k must be positive, got {lambda_k}")));
        }
        Ok(Self { k: 0.0, gamma, lambda_k })
    }
}

/// Proportional control of `k` towards `γ·L_real = L_fake`.
pub fn update_k(eq: &EquilibriumState, l_real: f64, l_fake: f64) -> EquilibriumState {
    let k = (eq.k + eq.lambda_k * (eq.gamma * l_real - l_fake)).clamp(0.0, 1.0);
    EquilibriumState { k, ..*eq }
}

/// `L_real + |γ·L_real - L_fake|`.
pub fn convergence_measure(l_real: f64, l_fake: f64, gamma: f64) -> f64 {
    l_real + (gamma * l_real - l_fake).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub l_real: f64,
    pub l_fake: f64,
    pub l_d: f64,
    pub l_g: f64,
    pub m: f64,
}

impl LossTerms {
    pub fn from_reconstruction(l_real: f64, l_fake: f64, eq: &EquilibriumState) -> Self {
        Self {
            l_real,
            l_fake,
            l_d: l_real - eq.k * l_fake,
            l_g: l_fake,
            m: convergence_measure(l_real, l_fake, eq.gamma),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_real, self.l_fake, self.l_d, self.l_g, self.m].iter().all(|v| v.is_finite())
    }
}

/// Evaluates the losses for real images `x: [N,1,S,S]` and latents `z: [M,h]`.
pub fn began_losses(
    x: &Tensor,
    z: &Tensor,
    g: &Generator,
    d: &Discriminator,
    eq: &EquilibriumState,
) -> Result<LossTerms> {
    let real_rec = d.reconstruct(x)?;
    let fake = g.forward(z)?;
    let fake_rec = d.reconstruct(&fake)?;
    let l_real = crate::data::l1_distance(x, &real_rec)?;
    let l_fake = crate::data::l1_distance(&fake, &fake_rec)?;
    let terms = LossTerms::from_reconstruction(l_real, l_fake, eq);
    if !terms.is_finite() {
        return Err(Error::NonFinite(format!("losses {terms:?}")));
    }
    Ok(terms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub model: GeneratorConfig,
    pub gamma: f64,
    pub lambda_k: f64,
    pub lr: f64,
    pub steps: usize,
    /// Save a checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            batch_size: 16,
            model: GeneratorConfig::default(),
            gamma: 0.5,
            lambda_k: 0.001,
            lr: adam::DEFAULT_LR,
            steps: 2000,
            checkpoint_every: 0,
            checkpoint_path: None,
            metrics_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::Config(format!("batch_size must be even and positive, got {}", self.batch_size)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        EquilibriumState::new(self.gamma, self.lambda_k)?;
        Ok(())
    }
}

/// Which network a step leaves untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frozen {
    Generator,
    Discriminator,
}

/// Mutable state of one training run.
pub struct Trainer {
    cfg: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    adam_g: AdamState,
    adam_d: AdamState,
    pub equilibrium: EquilibriumState,
    data_rng: SplitMix64,
    latent_rng: SplitMix64,
    step: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut master = SplitMix64::new(cfg.seed);
        let generator = Generator::new(cfg.model, &mut master.split())?;
        let discriminator = Discriminator::new(cfg.model, &mut master.split())?;
        let data_rng = master.split();
        let latent_rng = master.split();
        Ok(Self {
            adam_g: AdamState::new(generator.params.tensors(), cfg.lr),
            adam_d: AdamState::new(discriminator.params.tensors(), cfg.lr),
            equilibrium: EquilibriumState::new(cfg.gamma, cfg.lambda_k)?,
            generator,
            discriminator,
            data_rng,
            latent_rng,
            step: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.generator.clone(), self.discriminator.clone()).expect("shared config")
    }

    pub fn step(&mut self, source: &dyn ImageSource) -> Result<MetricsRow> {
        self.step_with(source, None)
    }

    /// One alternating update. A frozen network keeps its parameters and
    /// optimizer state.
    pub fn step_with(&mut self, source: &dyn ImageSource, frozen: Option<Frozen>) -> Result<MetricsRow> {
        let size = self.cfg.model.out_size();
        if source.image_size() != size {
            return Err(Error::Incompatible(format!(
                "dataset images are {0}×{0}, model generates {size}×{size}",
                source.image_size()
            )));
        }
        let batch = source.mirror_batch(self.cfg.batch_size, &mut self.data_rng)?;
        let z = uniform_tensor(
            &[self.cfg.batch_size, self.cfg.model.latent_dim],
            -LATENT_RANGE,
            LATENT_RANGE,
            &mut self.latent_rng,
        )?;

        let mut tape = Tape::new();
        let gv = self.generator.params.bind(&mut tape);
        let dv = self.discriminator.params.bind(&mut tape);
        let x = tape.constant(batch.images);
        let zv = tape.constant(z);
        let fake = self.generator.forward_on(&mut tape, &gv, zv)?;
        let real_rec = self.discriminator.reconstruct_on(&mut tape, &dv, x)?;
        let l_real = tape.l1_mean(x, real_rec)?;
        let fake_rec = self.discriminator.reconstruct_on(&mut tape, &dv, fake)?;
        let l_fake = tape.l1_mean(fake, fake_rec)?;
        let weighted = tape.scale(l_fake, self.equilibrium.k)?;
        let l_d = tape.sub(l_real, weighted)?;

        let terms = LossTerms::from_reconstruction(
            tape.value(l_real).item()?,
            tape.value(l_fake).item()?,
            &self.equilibrium,
        );
        self.step += 1;
        if !terms.is_finite() {
            return Err(Error::NonFinite(format!("step {}: losses {terms:?}", self.step)));
        }

        if frozen != Some(Frozen::Discriminator) {
            let mut grads = tape.gradients(l_d, &dv)?;
            self.discriminator.params.attach_grads(&dv, &mut grads)?;
        }
        if frozen != Some(Frozen::Generator) {
            let mut grads = tape.gradients(l_fake, &gv)?;
            self.generator.params.attach_grads(&gv, &mut grads)?;
        }
        drop(tape);
        if frozen != Some(Frozen::Discriminator) {
            self.adam_d.step(self.discriminator.params.tensors_mut())?;
            self.discriminator.params.clear_grads();
        }
        if frozen != Some(Frozen::Generator) {
            self.adam_g.step(self.generator.params.tensors_mut())?;
            self.generator.params.clear_grads();
        }

        let row = MetricsRow {
            step: self.step,
            l_real: terms.l_real,
            l_fake: terms.l_fake,
            l_d: terms.l_d,
            l_g: terms.l_g,
            k: self.equilibrium.k,
            m: terms.m,
        };
        self.equilibrium = update_k(&self.equilibrium, terms.l_real, terms.l_fake);
        Ok(row)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
    pub equilibrium: EquilibriumState,
}

fn save_checkpoint(ck: &Checkpoint, path: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        ck.save(p)?;
    }
    Ok(())
}

/// Runs `cfg.steps` training steps, streaming metrics and checkpoints to the
/// configured paths. On a non-finite loss the parameters from before the
/// failing step are written as the checkpoint and the run aborts.
pub fn train(cfg: &TrainConfig, source: &dyn ImageSource) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut writer = cfg.metrics_path.as_deref().map(MetricsWriter::create).transpose()?;
    let mut metrics = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let last_good = trainer.checkpoint();
        let row = match trainer.step(source) {
            Ok(row) => row,
            Err(e @ Error::NonFinite(_)) => {
                save_checkpoint(&last_good, &cfg.checkpoint_path)?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        if let Some(w) = writer.as_mut() {
            w.append(&row)?;
        }
        metrics.push(row);
        if cfg.checkpoint_every > 0 && row.step % cfg.checkpoint_every == 0 {
            save_checkpoint(&trainer.checkpoint(), &cfg.checkpoint_path)?;
        }
    }
    let checkpoint = trainer.checkpoint();
    save_checkpoint(&checkpoint, &cfg.checkpoint_path)?;
    Ok(TrainOutcome {
        checkpoint,
        metrics,
        equilibrium: trainer.equilibrium,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SynthDataset;

    fn eq(k: f64, gamma: f64, lambda_k: f64) -> EquilibriumState {
        EquilibriumState { k, gamma, lambda_k }
    }

    #[test]
    fn loss_arithmetic() {
        let t = LossTerms::from_reconstruction(0.2, 0.05, &eq(0.0, 0.5, 0.001));
        assert!((t.l_d - 0.2).abs() < 1e-15);
        assert!((t.l_g - 0.05).abs() < 1e-15);
        assert!((t.m - 0.25).abs() < 1e-15);
        let balanced = LossTerms::from_reconstruction(0.3, 0.15, &eq(0.4, 0.5, 0.001));
        assert_eq!(balanced.m, 0.3);
    }

    #[test]
    fn convergence_measure_values() {
        assert!((convergence_measure(0.2, 0.05, 0.5) - 0.25).abs() < 1e-15);
        assert_eq!(convergence_measure(0.0, 0.7, 0.5), 0.7);
        for (r, f) in [(0.1, 0.9), (0.5, 0.0), (0.3, 0.15)] {
            assert!(convergence_measure(r, f, 0.5) >= r);
        }
    }

    #[test]
    fn k_update_and_clamps() {
        let k = update_k(&eq(0.0, 0.5, 0.001), 0.2, 0.05).k;
        assert!((k - 5e-5).abs() < 1e-18);
        assert_eq!(update_k(&eq(0.0, 1.0, 0.001), 0.1, 0.2).k, 0.0);
        assert_eq!(update_k(&eq(1.0, 0.5, 0.001), 0.8, 0.1).k, 1.0);
    }

    #[test]
    fn equilibrium_validation() {
        assert!(EquilibriumState::new(0.0, 0.001).is_err());
        assert!(EquilibriumState::new(1.5, 0.001).is_err());
        assert!(EquilibriumState::new(0.5, 0.0).is_err());
        assert_eq!(EquilibriumState::new(0.5, 0.001).unwrap().k, 0.0);
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            model: GeneratorConfig {
                latent_dim: 4,
                base_size: 2,
                channels: 3,
                stages: 2,
            },
            steps: 5,
            ..TrainConfig::default()
        }
    }

    fn tiny_data() -> SynthDataset {
        SynthDataset::new(8, 20.0, 60.0, 8).unwrap()
    }

    #[test]
    fn perfect_reconstruction_has_zero_real_loss() {
        // A discriminator that reconstructs a constant zero image perfectly.
        let cfg = tiny_cfg().model;
        let d = Discriminator::zeroed(cfg).unwrap();
        let g = Generator::zeroed(cfg).unwrap();
        let x = Tensor::zeros(&[2, 1, 8, 8]).unwrap();
        let z = Tensor::zeros(&[2, 4]).unwrap();
        let t = began_losses(&x, &z, &g, &d, &eq(0.0, 0.5, 0.001)).unwrap();
        assert_eq!(t.l_real, 0.0);
        assert_eq!(t.l_fake, 0.0);
    }

    #[test]
    fn step_losses_match_standalone_evaluation() {
        let mut trainer = Trainer::new(tiny_cfg()).unwrap();
        let g0 = trainer.generator.clone();
        let d0 = trainer.discriminator.clone();
        let eq0 = trainer.equilibrium;
        // Replay the data and latent draws the trainer is about to make.
        let mut master = SplitMix64::new(1);
        master.split();
        master.split();
        let mut data_rng = master.split();
        let mut latent_rng = master.split();
        let batch = tiny_data().mirror_batch(4, &mut data_rng).unwrap();
        let z = uniform_tensor(&[4, 4], -1.0, 1.0, &mut latent_rng).unwrap();
        let expected = began_losses(&batch.images, &z, &g0, &d0, &eq0).unwrap();
        let row = trainer.step(&tiny_data()).unwrap();
        assert!((row.l_real - expected.l_real).abs() < 1e-14);
        assert!((row.l_fake - expected.l_fake).abs() < 1e-14);
        assert!((row.m - expected.m).abs() < 1e-14);
    }

    #[test]
    fn freezing_isolates_updates() {
        let data = tiny_data();
        let mut a = Trainer::new(tiny_cfg()).unwrap();
        let (g0, d0) = (a.generator.clone(), a.discriminator.clone());
        a.step_with(&data, Some(Frozen::Generator)).unwrap();
        assert_eq!(a.generator, g0);
        assert_ne!(a.discriminator, d0);

        let mut b = Trainer::new(tiny_cfg()).unwrap();
        b.step_with(&data, Some(Frozen::Discriminator)).unwrap();
        assert_eq!(b.discriminator, d0);
        assert_ne!(b.generator, g0);

        // An unfrozen step applies exactly the two isolated updates.
        let mut c = Trainer::new(tiny_cfg()).unwrap();
        c.step(&data).unwrap();
        assert_eq!(c.discriminator, a.discriminator);
        assert_eq!(c.generator, b.generator);
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: 0,
            metrics_path: Some(dir.path().join("m.csv")),
            ..tiny_cfg()
        };
        let out = train(&cfg, &tiny_data()).unwrap();
        assert_eq!(out.checkpoint, Trainer::new(cfg.clone()).unwrap().checkpoint());
        assert_eq!(std::fs::read_to_string(dir.path().join("m.csv")).unwrap(), "step,l_real,l_fake,l_d,l_g,k,m\n");
    }

    #[test]
    fn runs_are_deterministic_and_keep_invariants() {
        let dir = tempfile::tempdir().unwrap();
        let run = |name: &str| {
            let cfg = TrainConfig {
                steps: 20,
                metrics_path: Some(dir.path().join(name)),
                checkpoint_path: Some(dir.path().join(format!("{name}.ckpt"))),
                checkpoint_every: 7,
                ..tiny_cfg()
            };
            train(&cfg, &tiny_data()).unwrap();
            (
                std::fs::read(dir.path().join(name)).unwrap(),
                std::fs::read(dir.path().join(format!("{name}.ckpt"))).unwrap(),
            )
        };
        let (m1, c1) = run("a.csv");
        let (m2, c2) = run("b.csv");
        assert_eq!(m1, m2);
        assert_eq!(c1, c2);
        let rows = metrics::read_metrics(&dir.path().join("a.csv")).unwrap();
        assert_eq!(rows.len(), 20);
        for r in rows {
            assert!((0.0..=1.0).contains(&r.k));
            assert!(r.m >= r.l_real && r.l_real >= 0.0 && r.l_fake >= 0.0);
        }
    }

    #[test]
    fn wrong_image_size_is_incompatible() {
        let mut t = Trainer::new(tiny_cfg()).unwrap();
        let data = SynthDataset::new(2, 20.0, 60.0, 16).unwrap();
        assert!(matches!(t.step(&data), Err(Error::Incompatible(_))));
    }

    #[test]
    fn odd_batch_rejected() {
        let cfg = TrainConfig {
            batch_size: 5,
            ..tiny_cfg()
        };
        assert!(Trainer::new(cfg).is_err());
    }
}
