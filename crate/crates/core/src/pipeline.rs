//! Side pose → frontal view: invert the image and its mirror, walk the Slerp
//! arc between the two embeddings, decode every point, and take the centre
//! pair of the strip as the frontal estimate.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::pgm::save_pgm;
use crate::data::{asymmetry_score, l1_distance, synth_face, SynthFaceSpec};
use crate::error::{Error, Result};
use crate::inversion::{paired_invert, InversionConfig, InversionResult};
use crate::models::{Discriminator, Generator};
use crate::slerp::{angle_step, interpolation_path, median_pair, path_parameters, LatentEmbedding, MedianPair};
use crate::tensor::Tensor;

pub const REPORT_HEADER: &str = "kind,index,t,angle_deg,asymmetry,l1_to_frontal";

#[derive(Debug, Clone)]
pub struct FrontalizeInput {
    pub image: Tensor,
    /// Yaw of `image` in degrees; only used to label strip images.
    pub pose_deg: f64,
    /// Ground-truth frontal view, when known.
    pub frontal: Option<Tensor>,
}

impl FrontalizeInput {
    /// Synthetic identity `seed` at `pose_deg`, with its pose-0 render as ground truth.
    pub fn synthetic(seed: u64, pose_deg: f64, size: usize) -> Result<Self> {
        Ok(Self {
            image: synth_face(&SynthFaceSpec { seed, pose_deg, size })?,
            pose_deg,
            frontal: Some(synth_face(&SynthFaceSpec { seed, pose_deg: 0.0, size })?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct StripEntry {
    pub index: usize,
    pub t: f64,
    pub angle_deg: f64,
    pub embedding: LatentEmbedding,
    pub image: Tensor,
    pub asymmetry: f64,
    pub l1_to_frontal: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FrontalizeReport {
    pub strip: Vec<StripEntry>,
    pub medians: MedianPair<usize>,
    pub left: InversionResult,
    pub right: InversionResult,
    /// Degrees between consecutive strip images, `(left - right) / n`.
    pub angle_step: f64,
}

fn mean2(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

impl FrontalizeReport {
    pub fn endpoints(&self) -> (&StripEntry, &StripEntry) {
        (&self.strip[0], self.strip.last().expect("strip has >= 2 entries"))
    }

    pub fn median_entries(&self) -> (&StripEntry, &StripEntry) {
        (&self.strip[self.medians.indices.0], &self.strip[self.medians.indices.1])
    }

    pub fn endpoint_asymmetry(&self) -> f64 {
        let (a, b) = self.endpoints();
        mean2(a.asymmetry, b.asymmetry)
    }

    pub fn median_asymmetry(&self) -> f64 {
        let (a, b) = self.median_entries();
        mean2(a.asymmetry, b.asymmetry)
    }

    pub fn endpoint_l1(&self) -> Option<f64> {
        let (a, b) = self.endpoints();
        Some(mean2(a.l1_to_frontal?, b.l1_to_frontal?))
    }

    pub fn median_l1(&self) -> Option<f64> {
        let (a, b) = self.median_entries();
        Some(mean2(a.l1_to_frontal?, b.l1_to_frontal?))
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        let mut row = |kind: &str, e: &StripEntry| {
            let _ = writeln!(
                out,
                "{kind},{},{:.16e},{:.16e},{:.16e},{}",
                e.index,
                e.t,
                e.angle_deg,
                e.asymmetry,
                opt(e.l1_to_frontal)
            );
        };
        for e in &self.strip {
            row("strip", e);
        }
        let (a, b) = self.median_entries();
        if self.medians.degenerate {
            row("median_single", a);
        } else {
            row("median_a", a);
            row("median_b", b);
        }
        let _ = writeln!(out, "endpoints_mean,,,,{:.16e},{}", self.endpoint_asymmetry(), opt(self.endpoint_l1()));
        let _ = writeln!(out, "medians_mean,,,,{:.16e},{}", self.median_asymmetry(), opt(self.median_l1()));
        out
    }

    /// Embeddings of the strip, one per line, values space-separated.
    pub fn embeddings_text(&self) -> String {
        let mut out = String::new();
        for e in &self.strip {
            let line: Vec<String> = e.embedding.values().iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Writes `strip_00.pgm ...`, `median_a.pgm`, `median_b.pgm`, `report.csv`
    /// and `embeddings.txt` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let width = (self.strip.len() - 1).to_string().len().max(2);
        for e in &self.strip {
            save_pgm(&e.image, &dir.join(format!("strip_{:0width$}.pgm", e.index)))?;
        }
        let (a, b) = self.median_entries();
        save_pgm(&a.image, &dir.join("median_a.pgm"))?;
        save_pgm(&b.image, &dir.join("median_b.pgm"))?;
        let report = dir.join("report.csv");
        std::fs::write(&report, self.to_csv()).map_err(|e| Error::io(&report, e))?;
        let emb = dir.join("embeddings.txt");
        std::fs::write(&emb, self.embeddings_text()).map_err(|e| Error::io(&emb, e))?;
        Ok(())
    }
}

/// Runs the full pipeline with a strip of `n` images (`n >= 2`).
pub fn frontalize(
    g: &Generator,
    d: Option<&Discriminator>,
    input: &FrontalizeInput,
    n: usize,
    cfg: &InversionConfig,
) -> Result<FrontalizeReport> {
    let ts = path_parameters(n)?;
    let (left, right) = paired_invert(g, d, &input.image, cfg)?;
    let path = interpolation_path(&left.z, &right.z, n)?;
    let h = g.config().latent_dim;
    let z = Tensor::new(vec![n, h], path.iter().flat_map(|e| e.values().iter().copied()).collect())?;
    let images = g.forward(&z)?;

    let (angle_left, angle_right) = (input.pose_deg, -input.pose_deg);
    let mut strip = Vec::with_capacity(n);
    for (i, (t, embedding)) in ts.into_iter().zip(path).enumerate() {
        let image = images.slice_leading(i)?;
        let l1_to_frontal = input.frontal.as_ref().map(|f| l1_distance(&image, f)).transpose()?;
        strip.push(StripEntry {
            index: i,
            t,
            angle_deg: angle_left + t * (angle_right - angle_left),
            asymmetry: asymmetry_score(&image)?,
            embedding,
            image,
            l1_to_frontal,
        });
    }
    let indices: Vec<usize> = (0..n).collect();
    Ok(FrontalizeReport {
        medians: median_pair(&indices)?,
        angle_step: angle_step(angle_left, angle_right, n)?,
        strip,
        left,
        right,
    })
}
