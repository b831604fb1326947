//! Self-checks runnable from the command line: Slerp invariants, gradient
//! correctness against finite differences, and equilibrium bounds.

use std::fmt;

use crate::autodiff::{grad_check_many, Tape, Var};
use crate::error::Result;
use crate::models::{Discriminator, Generator, GeneratorConfig};
use crate::rng::{uniform_tensor, SplitMix64};
use crate::slerp::{angle_step, lerp, schedule_count, LatentEmbedding};
use crate::tensor::Tensor;
use crate::train::metrics::MetricsRow;
use crate::train::{TrainConfig, Trainer};

pub const SLERP_TRIALS: usize = 1000;
pub const GRAD_POINTS: usize = 10;
pub const GRAD_TOLERANCE: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-6;

/// Outcome of one named check. `value` is the measured quantity and the
/// check passes when it is at most `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn bound(suite: &'static str, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { suite, name: name.into(), value, threshold, passed: value <= threshold }
    }

    fn flag(suite: &'static str, name: impl Into<String>, ok: bool) -> Self {
        Self { suite, name: name.into(), value: if ok { 0.0 } else { 1.0 }, threshold: 0.0, passed: ok }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "check suite={} name={} status={} value={:e} threshold={:e}",
            self.suite,
            self.name,
            if self.passed { "pass" } else { "fail" },
            self.value,
            self.threshold
        )
    }
}

pub type SlerpFn = fn(&LatentEmbedding, &LatentEmbedding, f64) -> Result<LatentEmbedding>;

/// Slerp with a small multiplicative error; every invariant check should
/// catch it.
pub fn perturbed_slerp(z0: &LatentEmbedding, z1: &LatentEmbedding, t: f64) -> Result<LatentEmbedding> {
    let exact = crate::slerp::slerp(z0, z1, t)?;
    LatentEmbedding::new(exact.into_values().into_iter().map(|v| v * (1.0 + 1e-6)).collect())
}

fn random_vector(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A random pair that is neither degenerate nor close to antipodal.
fn random_pair(rng: &mut SplitMix64) -> (Vec<f64>, Vec<f64>) {
    loop {
        let dim = 2 + rng.below(31) as usize;
        let a = random_vector(rng, dim);
        let b = random_vector(rng, dim);
        let (na, nb) = (dot(&a, &a).sqrt(), dot(&b, &b).sqrt());
        if na < 1e-3 || nb < 1e-3 {
            continue;
        }
        let cos = dot(&a, &b) / (na * nb);
        if cos.abs() < 1.0 - 1e-6 {
            return (a, b);
        }
    }
}

/// Distance from `v` to the plane spanned by `a` and `b`.
fn plane_residual(a: &[f64], b: &[f64], v: &[f64]) -> f64 {
    let e1 = normalized(a.to_vec());
    let p = dot(b, &e1);
    let e2 = normalized(b.iter().zip(&e1).map(|(x, e)| x - p * e).collect());
    let (c1, c2) = (dot(v, &e1), dot(v, &e2));
    let r: Vec<f64> = v.iter().zip(e1.iter().zip(&e2)).map(|(x, (u, w))| x - c1 * u - c2 * w).collect();
    dot(&r, &r).sqrt()
}

/// Runs the invariant checks against `slerp_fn` over `trials` random cases.
pub fn slerp_suite(slerp_fn: SlerpFn, trials: usize, seed: u64) -> Result<Vec<CheckResult>> {
    const S: &str = "slerp";
    let mut rng = SplitMix64::new(seed);
    let mut endpoints_exact = true;
    let (mut norm_err, mut sym_err, mut plane_err, mut limit_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);

    for _ in 0..trials {
        let (a, b) = random_pair(&mut rng);
        let (z0, z1) = (LatentEmbedding::new(a.clone())?, LatentEmbedding::new(b.clone())?);
        let t = rng.next_f64();

        let at0 = slerp_fn(&z0, &z1, 0.0)?;
        let at1 = slerp_fn(&z0, &z1, 1.0)?;
        let bits = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
        endpoints_exact &= bits(at0.values(), &a) && bits(at1.values(), &b);

        let forward = slerp_fn(&z0, &z1, t)?;
        let backward = slerp_fn(&z1, &z0, 1.0 - t)?;
        sym_err = sym_err.max(max_abs_diff(forward.values(), backward.values()));
        plane_err = plane_err.max(plane_residual(&a, &b, forward.values()));

        let (u0, u1) = (LatentEmbedding::new(normalized(a.clone()))?, LatentEmbedding::new(normalized(b.clone()))?);
        norm_err = norm_err.max((slerp_fn(&u0, &u1, t)?.norm() - 1.0).abs());

        // Rotate `a` by a tiny angle inside the plane of (a, b).
        let omega: f64 = 1e-3;
        let e1 = normalized(a.clone());
        let p = dot(&b, &e1);
        let e2 = normalized(b.iter().zip(&e1).map(|(x, e)| x - p * e).collect());
        let na = dot(&a, &a).sqrt();
        let rotated: Vec<f64> =
            e1.iter().zip(&e2).map(|(u, w)| na * (omega.cos() * u + omega.sin() * w)).collect();
        let zr = LatentEmbedding::new(rotated)?;
        for i in 1..10 {
            let s = i as f64 / 10.0;
            let gap = max_abs_diff(slerp_fn(&z0, &zr, s)?.values(), lerp(&z0, &zr, s)?.values());
            limit_err = limit_err.max(gap);
        }
    }

    let quarter = slerp_fn(
        &LatentEmbedding::new(vec![1.0, 0.0])?,
        &LatentEmbedding::new(vec![0.0, 1.0])?,
        0.5,
    )?;
    let half = std::f64::consts::FRAC_1_SQRT_2;

    Ok(vec![
        CheckResult::flag(S, "endpoint_exact", endpoints_exact),
        CheckResult::bound(S, "unit_norm", norm_err, 1e-9),
        CheckResult::bound(S, "symmetry", sym_err, 1e-12),
        CheckResult::bound(S, "planarity", plane_err, 1e-9),
        CheckResult::bound(S, "lerp_limit", limit_err, 1e-6),
        CheckResult::bound(S, "quarter_circle", max_abs_diff(quarter.values(), &[half, half]), 1e-5),
        CheckResult::flag(S, "schedule_count", schedule_count(1.0, 0.0, 0.1)? == 10),
        CheckResult::bound(S, "angle_step", (angle_step(50.0, -50.0, 10)? - 10.0).abs(), 1e-12),
    ])
}

/// The small model used for full-loss gradient checks.
pub fn grad_check_model() -> GeneratorConfig {
    GeneratorConfig { latent_dim: 3, base_size: 2, channels: 2, stages: 2 }
}

type Objective = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;
type LossCase = fn(&mut SplitMix64) -> Result<(Objective, Vec<Tensor>)>;

/// Wraps a layer as `sum(weights ⊙ layer(inputs))` with fixed random weights
/// so that every output coordinate contributes differently.
fn weighted_sum<L>(layer: L, out_shape: &[usize], rng: &mut SplitMix64) -> Result<Objective>
where
    L: Fn(&mut Tape, &[Var]) -> Result<Var> + 'static,
{
    let weights = uniform_tensor(out_shape, -1.0, 1.0, rng)?;
    Ok(Box::new(move |tape: &mut Tape, vars: &[Var]| {
        let y = layer(tape, vars)?;
        let w = tape.constant(weights.clone());
        let p = tape.mul(y, w)?;
        tape.sum(p)
    }))
}

struct LayerCase {
    name: &'static str,
    inputs: Vec<Vec<usize>>,
    out: Vec<usize>,
    layer: fn(&mut Tape, &[Var]) -> Result<Var>,
}

fn layer_cases() -> Vec<LayerCase> {
    fn case(name: &'static str, inputs: &[&[usize]], out: &[usize], layer: fn(&mut Tape, &[Var]) -> Result<Var>) -> LayerCase {
        LayerCase { name, inputs: inputs.iter().map(|s| s.to_vec()).collect(), out: out.to_vec(), layer }
    }
    vec![
        case("linear", &[&[2, 3], &[3, 4], &[4]], &[2, 4], |t, v| t.linear(v[0], v[1], v[2])),
        case("conv2d", &[&[1, 2, 5, 5], &[3, 2, 3, 3]], &[1, 3, 5, 5], |t, v| t.conv2d(v[0], v[1], 1, 1)),
        case("conv2d_stride2", &[&[1, 2, 6, 6], &[3, 2, 4, 4]], &[1, 3, 3, 3], |t, v| t.conv2d(v[0], v[1], 2, 1)),
        case("deconv2d", &[&[1, 3, 4, 4], &[3, 2, 3, 3]], &[1, 2, 4, 4], |t, v| t.deconv2d(v[0], v[1], 1, 1)),
        case("deconv2d_stride2", &[&[1, 2, 3, 3], &[2, 3, 4, 4]], &[1, 3, 6, 6], |t, v| t.deconv2d(v[0], v[1], 2, 1)),
        case("add_bias", &[&[2, 3, 2, 2], &[3]], &[2, 3, 2, 2], |t, v| t.add_bias(v[0], v[1])),
        case("upsample2x", &[&[1, 2, 3, 3]], &[1, 2, 6, 6], |t, v| t.upsample2x(v[0])),
        case("elu", &[&[2, 5]], &[2, 5], |t, v| t.elu(v[0])),
        case("tanh", &[&[2, 5]], &[2, 5], |t, v| t.tanh(v[0])),
        case("add", &[&[2, 3], &[2, 3]], &[2, 3], |t, v| t.add(v[0], v[1])),
        case("sub", &[&[2, 3], &[2, 3]], &[2, 3], |t, v| t.sub(v[0], v[1])),
        case("mul", &[&[2, 3], &[2, 3]], &[2, 3], |t, v| t.mul(v[0], v[1])),
        case("scale", &[&[2, 3]], &[2, 3], |t, v| t.scale(v[0], -1.7)),
        case("reshape", &[&[2, 3]], &[3, 2], |t, v| t.reshape(v[0], &[3, 2])),
        case("l1_mean", &[&[2, 4], &[2, 4]], &[1], |t, v| t.l1_mean(v[0], v[1])),
    ]
}

fn random_points(shapes: &[Vec<usize>], rng: &mut SplitMix64) -> Result<Vec<Tensor>> {
    shapes.iter().map(|s| uniform_tensor(s, -2.0, 2.0, rng)).collect()
}

/// Fixed real images and latents for the full-loss checks.
fn loss_inputs(cfg: &GeneratorConfig, rng: &mut SplitMix64) -> Result<(Tensor, Tensor)> {
    let s = cfg.out_size();
    let x = uniform_tensor(&[2, 1, s, s], -1.0, 1.0, rng)?;
    let z = uniform_tensor(&[2, cfg.latent_dim], -1.0, 1.0, rng)?;
    Ok((x, z))
}

/// `L_D = L_real - k·L_fake` as a function of the discriminator parameters.
fn discriminator_loss_case(rng: &mut SplitMix64) -> Result<(Objective, Vec<Tensor>)> {
    let cfg = grad_check_model();
    let g = Generator::new(cfg, rng)?;
    let d = Discriminator::new(cfg, rng)?;
    let (x, z) = loss_inputs(&cfg, rng)?;
    let k = rng.uniform(0.1, 0.9);
    let points = d.params.tensors().to_vec();
    let f: Objective = Box::new(move |tape: &mut Tape, dv: &[Var]| {
        let gv = g.params.bind_frozen(tape);
        let xv = tape.constant(x.clone());
        let zv = tape.constant(z.clone());
        let fake = g.forward_on(tape, &gv, zv)?;
        let real_rec = d.reconstruct_on(tape, dv, xv)?;
        let l_real = tape.l1_mean(xv, real_rec)?;
        let fake_rec = d.reconstruct_on(tape, dv, fake)?;
        let l_fake = tape.l1_mean(fake, fake_rec)?;
        let weighted = tape.scale(l_fake, k)?;
        tape.sub(l_real, weighted)
    });
    Ok((f, points))
}

/// `L_G = L_fake` as a function of the generator parameters.
fn generator_loss_case(rng: &mut SplitMix64) -> Result<(Objective, Vec<Tensor>)> {
    let cfg = grad_check_model();
    let g = Generator::new(cfg, rng)?;
    let d = Discriminator::new(cfg, rng)?;
    let (_, z) = loss_inputs(&cfg, rng)?;
    let points = g.params.tensors().to_vec();
    let f: Objective = Box::new(move |tape: &mut Tape, gv: &[Var]| {
        let dv = d.params.bind_frozen(tape);
        let zv = tape.constant(z.clone());
        let fake = g.forward_on(tape, gv, zv)?;
        let fake_rec = d.reconstruct_on(tape, &dv, fake)?;
        tape.l1_mean(fake, fake_rec)
    });
    Ok((f, points))
}

/// Finite-difference checks for each layer and both training losses; one
/// result per case holding the worst relative error over `points` draws.
pub fn grad_suite(points: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = SplitMix64::new(seed);
    let mut results = Vec::new();
    for case in layer_cases() {
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let f = weighted_sum(case.layer, &case.out, &mut rng)?;
            let inputs = random_points(&case.inputs, &mut rng)?;
            worst = worst.max(grad_check_many(f, &inputs, FD_STEP)?);
        }
        results.push(CheckResult::bound("grad", case.name, worst, GRAD_TOLERANCE));
    }
    let full: [(&str, LossCase); 2] =
        [("discriminator_loss", discriminator_loss_case), ("generator_loss", generator_loss_case)];
    for (name, build) in full {
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let (f, inputs) = build(&mut rng)?;
            worst = worst.max(grad_check_many(f, &inputs, FD_STEP)?);
        }
        results.push(CheckResult::bound("grad", name, worst, GRAD_TOLERANCE));
    }
    Ok(results)
}

/// Checks `k ∈ [0, 1]` and `M ≥ L_real` on every logged step.
pub fn check_equilibrium(rows: &[MetricsRow]) -> Vec<CheckResult> {
    let k_ok = rows.iter().all(|r| (0.0..=1.0).contains(&r.k));
    let m_ok = rows.iter().all(|r| r.m >= r.l_real);
    vec![
        CheckResult::flag("equilibrium", "k_in_unit_interval", k_ok),
        CheckResult::flag("equilibrium", "m_at_least_l_real", m_ok),
    ]
}

/// Trains a small model for `steps` steps with a large controller gain, so
/// that the clamp on `k` is exercised, and checks the bounds on every step.
pub fn equilibrium_suite(steps: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let model = GeneratorConfig { latent_dim: 4, base_size: 2, channels: 4, stages: 2 };
    let cfg = TrainConfig { seed, batch_size: 4, model, lambda_k: 0.05, steps, ..TrainConfig::default() };
    let data = crate::data::SynthDataset::new(8, 20.0, 60.0, model.out_size())?;
    let mut trainer = Trainer::new(cfg)?;
    let mut rows = Vec::with_capacity(steps);
    let mut k_after = Vec::with_capacity(steps);
    for _ in 0..steps {
        rows.push(trainer.step(&data)?);
        k_after.push(trainer.equilibrium.k);
    }
    let mut results = check_equilibrium(&rows);
    results.push(CheckResult::flag(
        "equilibrium",
        "k_after_final_update",
        k_after.iter().all(|k| (0.0..=1.0).contains(k)),
    ));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slerp_suite_passes_and_catches_mutation() {
        let good = slerp_suite(crate::slerp::slerp, 100, 3).unwrap();
        assert!(good.iter().all(|r| r.passed), "{good:#?}");
        let bad = slerp_suite(perturbed_slerp, 100, 3).unwrap();
        assert!(bad.iter().any(|r| !r.passed));
    }

    #[test]
    fn plane_residual_of_combination_is_zero() {
        let a = [1.0, 2.0, 0.5, -1.0];
        let b = [0.3, -1.0, 2.0, 0.0];
        let v: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.3 * x - 1.2 * y).collect();
        assert!(plane_residual(&a, &b, &v) < 1e-12);
        assert!(plane_residual(&a, &b, &[0.0, 0.0, 0.0, 1.0]) > 0.1);
    }

    #[test]
    fn display_is_machine_readable() {
        let r = CheckResult::bound("grad", "elu", 2e-9, 1e-5);
        assert_eq!(r.to_string(), "check suite=grad name=elu status=pass value=2e-9 threshold=1e-5");
    }

    #[test]
    fn equilibrium_rows() {
        let row = MetricsRow { step: 1, l_real: 0.2, l_fake: 0.1, l_d: 0.2, l_g: 0.1, k: 1.2, m: 0.2 };
        let r = check_equilibrium(&[row]);
        assert!(!r[0].passed && r[1].passed);
    }
}
