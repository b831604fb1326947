//! Procedural posed faces.
//!
//! Each identity seed fixes a bilaterally symmetric face: an elliptical head,
//! hair line, two eyes, a nose ridge and a mouth band. A yaw pose slides the
//! facial midline towards one side and compresses the near half-face while
//! stretching the far one, with a matching shading gradient. Negative poses
//! are rendered as the mirror of the positive pose, so
//! `mirror(synth(seed, θ)) == synth(seed, -θ)` holds bit for bit, and pose 0
//! is exactly left-right symmetric.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub const MAX_POSE_DEG: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthFaceSpec {
    pub seed: u64,
    pub pose_deg: f64,
    pub size: usize,
}

/// Per-identity geometry and intensities, in normalized image coordinates
/// (both axes span `[-1, 1]`).
#[derive(Debug, Clone, Copy)]
struct Identity {
    head_a: f64,
    head_b: f64,
    skin: f64,
    hair_y: f64,
    hair: f64,
    eye_x: f64,
    eye_y: f64,
    eye_r: f64,
    eye: f64,
    nose_w: f64,
    nose_top: f64,
    nose_bottom: f64,
    nose: f64,
    mouth_y: f64,
    mouth_a: f64,
    mouth_b: f64,
    mouth: f64,
}

impl Identity {
    fn from_seed(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed ^ 0x5EED_FACE_0000_0000);
        let mut j = |centre: f64, spread: f64| rng.uniform(centre - spread, centre + spread);
        let skin = j(0.35, 0.2);
        Self {
            head_a: j(0.66, 0.06),
            head_b: j(0.86, 0.05),
            skin,
            hair_y: j(-0.5, 0.1),
            hair: j(-0.55, 0.25),
            eye_x: j(0.32, 0.05),
            eye_y: j(-0.18, 0.06),
            eye_r: j(0.14, 0.025),
            eye: j(-0.7, 0.15),
            nose_w: j(0.08, 0.02),
            nose_top: j(-0.1, 0.05),
            nose_bottom: j(0.22, 0.05),
            nose: (skin + j(0.3, 0.1)).min(0.95),
            mouth_y: j(0.48, 0.05),
            mouth_a: j(0.28, 0.06),
            mouth_b: j(0.08, 0.02),
            mouth: j(-0.35, 0.2),
        }
    }
}

/// Coverage in `[0, 1]` for an implicit shape with value `f` (inside when
/// `f < 1`), smoothed over `soft` units of `f`.
fn coverage(f: f64, soft: f64) -> f64 {
    ((1.0 - f) / soft + 0.5).clamp(0.0, 1.0)
}

fn mix(base: f64, value: f64, alpha: f64) -> f64 {
    base + alpha * (value - base)
}

/// Pixel centres mapped so that column `j` and `size-1-j` get exactly negated coordinates.
fn coord(i: usize, size: usize) -> f64 {
    (2.0 * i as f64 + 1.0 - size as f64) / size as f64
}

fn render_nonnegative(id: &Identity, pose_deg: f64, size: usize) -> Vec<f64> {
    let yaw = pose_deg.to_radians().sin();
    let px = 2.0 / size as f64;
    let mut img = Vec::with_capacity(size * size);
    for r in 0..size {
        let v = coord(r, size);
        // Midline shift, slightly larger towards the chin to shear the face.
        let c = yaw * (0.42 + 0.08 * v);
        for col in 0..size {
            let u = coord(col, size);
            // Piecewise-linear warp: [-1, c] -> [-1, 0] and [c, 1] -> [0, 1].
            let uf = if u < c { (u - c) / (1.0 + c) } else { (u - c) / (1.0 - c) };
            let au = uf.abs();

            let uh = u - 0.3 * c;
            let head_f = ((uh / id.head_a).powi(2) + (v / id.head_b).powi(2)).sqrt();
            let shade = 1.0 - 0.35 * yaw * u;
            let mut val = mix(-1.0, id.skin * shade, coverage(head_f, px / id.head_a));

            let hair_alpha = coverage(head_f, px / id.head_a) * ((id.hair_y - v) / px + 0.5).clamp(0.0, 1.0);
            val = mix(val, id.hair, hair_alpha);

            let eye_f = (((au - id.eye_x) / id.eye_r).powi(2) + ((v - id.eye_y) / id.eye_r).powi(2)).sqrt();
            val = mix(val, id.eye, coverage(eye_f, px / id.eye_r));

            if v > id.nose_top && v < id.nose_bottom {
                let nose_f = au / id.nose_w;
                val = mix(val, id.nose * shade, coverage(nose_f, px / id.nose_w));
            }

            let mouth_f = ((au / id.mouth_a).powi(2) + ((v - id.mouth_y) / id.mouth_b).powi(2)).sqrt();
            val = mix(val, id.mouth, coverage(mouth_f, px / id.mouth_b));

            img.push(val.clamp(-1.0, 1.0));
        }
    }
    img
}

/// Renders the face of identity `spec.seed` at yaw `spec.pose_deg` as `[1, 1, S, S]`.
pub fn synth_face(spec: &SynthFaceSpec) -> Result<Tensor> {
    if !spec.pose_deg.is_finite() || spec.pose_deg.abs() > MAX_POSE_DEG {
        return Err(Error::Contract(format!(
            "pose {} outside [-{MAX_POSE_DEG}, {MAX_POSE_DEG}] degrees",
            spec.pose_deg
        )));
    }
    if spec.size < 2 {
        return Err(Error::shape(format!("image size must be >= 2, got {}", spec.size)));
    }
    let id = Identity::from_seed(spec.seed);
    let data = render_nonnegative(&id, spec.pose_deg.abs(), spec.size);
    let img = Tensor::new(vec![1, 1, spec.size, spec.size], data)?;
    if spec.pose_deg < 0.0 {
        super::mirror(&img)
    } else {
        Ok(img)
    }
}
