//! `frontalize`: synthesize data, train, invert and frontalize from the shell.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or I/O error,
//! 3 numeric abort, 4 compatibility error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use frontal_core::config::RunConfig;
use frontal_core::data::pgm::{load_pgm, save_pgm};
use frontal_core::data::{synth_face, write_manifest, ImageSource, ManifestDataset, ManifestEntry, SynthFaceSpec};
use frontal_core::inversion::{invert, InitKind};
use frontal_core::models::checkpoint::{Checkpoint, CheckpointError};
use frontal_core::models::GeneratorConfig;
use frontal_core::pipeline::{frontalize, FrontalizeInput};
use frontal_core::rng::SplitMix64;
use frontal_core::train::train;
use frontal_core::verify::{self, CheckResult};
use frontal_core::Error;

#[derive(Parser)]
#[command(name = "frontalize", version, about = "Face frontalization with a BEGAN generator and Slerp")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic faces as PGM files with a manifest
    Synth(SynthArgs),
    /// Train generator and discriminator; writes checkpoint.bin and metrics.csv
    Train(TrainArgs),
    /// Recover the latent embedding of one image
    Invert(InvertArgs),
    /// Produce a frontal view of a side-pose face
    Frontalize(FrontalizeArgs),
    /// Run the built-in verification suites
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed [default: config `seed`, or FF_SEED]
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::from_env()?;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for item in &self.overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
            cfg.set(key.trim(), value)?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Number of faces per size
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Seed for identities and poses
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated image sides; several sizes get one subdirectory each
    #[arg(long, value_delimiter = ',', default_value = "16")]
    sizes: Vec<usize>,
    /// Yaw range in degrees as LO:HI
    #[arg(long, default_value = "20:60", value_parser = parse_angles, allow_hyphen_values = true)]
    angles: (f64, f64),
    /// Output directory
    #[arg(long, default_value = "synth")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Training steps [default: config `steps`]
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct InvertArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Target image (PGM)
    #[arg(long)]
    input: PathBuf,
    /// Embedding output file; one line of space-separated values
    #[arg(long, default_value = "embedding.txt")]
    out: PathBuf,
    /// Save G(z) of the recovered embedding as a PGM
    #[arg(long, value_name = "FILE")]
    reconstruction: Option<PathBuf>,
}

#[derive(Args)]
struct FrontalizeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Side-pose input image (PGM)
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    /// Synthetic input as IDENTITY,ANGLE; the report adds L1 to the true frontal render
    #[arg(long, value_name = "SEED,ANGLE", value_parser = parse_synthetic)]
    synthetic: Option<(u64, f64)>,
    /// Yaw of --input in degrees, used to label strip images
    #[arg(long, default_value_t = 45.0)]
    pose: f64,
    /// Strip length [default: (t_ceil - t_floor) / delta from config, 10]
    #[arg(long)]
    n: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "frontal")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Slerp,
    Grad,
    Equilibrium,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    /// Which suite to run
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    /// Seed for randomized checks
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Randomized Slerp trials
    #[arg(long, default_value_t = verify::SLERP_TRIALS)]
    trials: usize,
    /// Random points per gradient check
    #[arg(long, default_value_t = verify::GRAD_POINTS)]
    points: usize,
    /// Training steps for the equilibrium suite
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Check a deliberately broken Slerp instead of the real one
    #[arg(long, hide = true)]
    mutate: bool,
}

fn parse_angles(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad angle `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad angle `{hi}`"))?;
    if !(lo <= hi) {
        return Err(format!("empty angle range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_synthetic(s: &str) -> Result<(u64, f64), String> {
    let (id, angle) = s.split_once(',').ok_or("expected SEED,ANGLE")?;
    let id = id.trim().parse().map_err(|_| format!("bad identity `{id}`"))?;
    let angle = angle.trim().parse().map_err(|_| format!("bad angle `{angle}`"))?;
    Ok((id, angle))
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NonFinite(_) | Error::Domain(_) => 3,
            Error::Incompatible(_) | Error::Shape(_) => 4,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Error::from(e).into()
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    if args.sizes.is_empty() {
        return Err(Error::Config("--sizes needs at least one size".into()).into());
    }
    let mut rng = SplitMix64::new(args.seed);
    let faces: Vec<(u64, f64)> = (0..args.count)
        .map(|_| {
            let id = rng.next_u64() >> 11;
            let pose = if args.angles.0 == args.angles.1 {
                args.angles.0
            } else {
                rng.uniform(args.angles.0, args.angles.1)
            };
            (id, pose)
        })
        .collect();
    for &size in &args.sizes {
        let dir = if args.sizes.len() == 1 {
            args.out_dir.clone()
        } else {
            args.out_dir.join(size.to_string())
        };
        create_dir(&dir)?;
        let mut entries = Vec::with_capacity(faces.len());
        for (i, &(seed, pose_deg)) in faces.iter().enumerate() {
            let image = synth_face(&SynthFaceSpec { seed, pose_deg, size })?;
            let name = format!("face_{i:04}.pgm");
            save_pgm(&image, &dir.join(&name)).map_err(Error::from)?;
            entries.push(ManifestEntry { path: PathBuf::from(name), seed, pose_deg });
        }
        write_manifest(&dir.join("manifest.csv"), &entries)?;
        println!("wrote {} faces of {size}x{size} to {}", entries.len(), dir.display());
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let mut run = args.config.resolve()?;
    if let Some(steps) = args.steps {
        run.set("steps", &steps.to_string())?;
    }
    let mut cfg = run.train_config()?;
    let source: Box<dyn ImageSource> = match &run.data_manifest {
        Some(path) => Box::new(ManifestDataset::load(path)?),
        None => Box::new(run.synth_dataset()?),
    };
    create_dir(&args.out)?;
    cfg.checkpoint_path = Some(args.out.join("checkpoint.bin"));
    cfg.metrics_path = Some(args.out.join("metrics.csv"));
    let outcome = train(&cfg, source.as_ref())?;
    if let Some(last) = outcome.metrics.last() {
        println!(
            "step {} l_real {:.6} l_fake {:.6} k {:.6} m {:.6}",
            last.step, last.l_real, last.l_fake, last.k, last.m
        );
    }
    println!("checkpoint {}", args.out.join("checkpoint.bin").display());
    Ok(())
}

/// Loads a checkpoint and rejects model keys set explicitly to other values.
fn load_model(path: &Path, run: &RunConfig) -> Result<Checkpoint, Failure> {
    let ck = Checkpoint::load(path)?;
    let have: GeneratorConfig = *ck.config();
    let pairs = [
        ("latent_dim", have.latent_dim, run.model.latent_dim),
        ("base_size", have.base_size, run.model.base_size),
        ("channels", have.channels, run.model.channels),
        ("stages", have.stages, run.model.stages),
    ];
    for (key, ck_value, cfg_value) in pairs {
        if run.is_explicit(key) && ck_value != cfg_value {
            return Err(Error::Incompatible(format!(
                "checkpoint has {key} = {ck_value} but the configuration asks for {cfg_value}"
            ))
            .into());
        }
    }
    Ok(ck)
}

fn cmd_invert(args: &InvertArgs) -> Result<(), Failure> {
    let run = args.config.resolve()?;
    let ck = load_model(&args.checkpoint, &run)?;
    let target = load_pgm(&args.input).map_err(Error::from)?;
    let cfg = run.inversion_config()?;
    let result = invert(&ck.generator, &target, &cfg, Some(&ck.discriminator))?;
    let line: Vec<String> = result.z.values().iter().map(|v| format!("{v:.16e}")).collect();
    write_text(&args.out, &format!("{}\n", line.join(" ")))?;
    if let Some(path) = &args.reconstruction {
        let h = result.z.dim();
        let z = frontal_core::Tensor::new(vec![1, h], result.z.values().to_vec())?;
        save_pgm(&ck.generator.forward(&z)?, path).map_err(Error::from)?;
    }
    println!(
        "initial_loss {:.6e} best_loss {:.6e} final_loss {:.6e}",
        result.initial_loss, result.best_loss, result.final_loss
    );
    Ok(())
}

fn cmd_frontalize(args: &FrontalizeArgs) -> Result<(), Failure> {
    let run = args.config.resolve()?;
    let ck = load_model(&args.checkpoint, &run)?;
    let size = ck.config().out_size();
    let input = match (&args.input, args.synthetic) {
        (_, Some((seed, angle))) => FrontalizeInput::synthetic(seed, angle, size)?,
        (Some(path), None) => FrontalizeInput {
            image: load_pgm(path).map_err(Error::from)?,
            pose_deg: args.pose,
            frontal: None,
        },
        (None, None) => unreachable!("clap requires --input or --synthetic"),
    };
    let n = match args.n {
        Some(n) => n,
        None => run.strip_len()?,
    };
    let cfg = run.inversion_config()?;
    let d = (cfg.init == InitKind::Encoder).then_some(&ck.discriminator);
    let report = frontalize(&ck.generator, d, &input, n, &cfg)?;
    report.write_outputs(&args.out_dir)?;
    print!("endpoint asymmetry {:.6} median asymmetry {:.6}", report.endpoint_asymmetry(), report.median_asymmetry());
    if let (Some(e), Some(m)) = (report.endpoint_l1(), report.median_l1()) {
        print!(" endpoint l1 {e:.6} median l1 {m:.6}");
    }
    println!();
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool, Failure> {
    let mut results: Vec<CheckResult> = Vec::new();
    let wants = |s: Suite| args.suite == s || args.suite == Suite::All;
    if wants(Suite::Slerp) {
        let f: verify::SlerpFn = if args.mutate { verify::perturbed_slerp } else { frontal_core::slerp::slerp };
        results.extend(verify::slerp_suite(f, args.trials, args.seed)?);
    }
    if wants(Suite::Grad) {
        results.extend(verify::grad_suite(args.points, args.seed)?);
    }
    if wants(Suite::Equilibrium) {
        results.extend(verify::equilibrium_suite(args.steps, args.seed)?);
    }
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("summary checks={} failed={failed}", results.len());
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Invert(a) => cmd_invert(a).map(|_| true),
        Command::Frontalize(a) => cmd_frontalize(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
