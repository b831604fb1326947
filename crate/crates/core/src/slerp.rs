//! Spherical and linear interpolation between latent embeddings, plus the
//! strip scheduling arithmetic used to sample the arc.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Below this `sin Ω` the two directions are treated as parallel and Slerp
/// falls back to Lerp.
pub const PARALLEL_EPS: f64 = 1e-6;
/// Arcs whose angle is this close to π have no well-defined plane.
pub const ANTIPODAL_EPS: f64 = 1e-6;

/// A finite latent vector of dimension at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEmbedding(Vec<f64>);

impl LatentEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::shape(format!(
                "latent embedding needs dimension >= 2, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("latent embedding contains {bad}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

fn check_pair(z0: &LatentEmbedding, z1: &LatentEmbedding, t: f64) -> Result<()> {
    if z0.dim() != z1.dim() {
        return Err(Error::shape(format!(
            "interpolating embeddings of dimension {} and {}",
            z0.dim(),
            z1.dim()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("interpolation parameter t={t} outside [0, 1]")));
    }
    Ok(())
}

fn combine(z0: &LatentEmbedding, a: f64, z1: &LatentEmbedding, b: f64) -> LatentEmbedding {
    LatentEmbedding(z0.0.iter().zip(&z1.0).map(|(x, y)| a * x + b * y).collect())
}

/// `(1 - t)·z0 + t·z1`.
pub fn lerp(z0: &LatentEmbedding, z1: &LatentEmbedding, t: f64) -> Result<LatentEmbedding> {
    check_pair(z0, z1, t)?;
    Ok(combine(z0, 1.0 - t, z1, t))
}

/// Angle between the directions of `z0` and `z1`, in `[0, π]`.
pub fn arc_angle(z0: &LatentEmbedding, z1: &LatentEmbedding) -> Result<f64> {
    let (n0, n1) = (z0.norm(), z1.norm());
    if n0 == 0.0 || n1 == 0.0 {
        return Err(Error::Domain("slerp of a zero-length embedding".into()));
    }
    Ok((z0.dot(z1) / (n0 * n1)).clamp(-1.0, 1.0).acos())
}

/// Spherical linear interpolation
/// `sin((1-t)Ω)/sin Ω · z0 + sin(tΩ)/sin Ω · z1`.
///
/// Ω is measured between the normalized directions while the combination
/// uses the raw vectors, so embeddings of different lengths interpolate both
/// direction and magnitude. `t = 0` and `t = 1` return the inputs unchanged.
pub fn slerp(z0: &LatentEmbedding, z1: &LatentEmbedding, t: f64) -> Result<LatentEmbedding> {
    check_pair(z0, z1, t)?;
    let omega = arc_angle(z0, z1)?;
    if PI - omega < ANTIPODAL_EPS {
        return Err(Error::Domain(format!(
            "embeddings are antipodal (Ω = {omega}); the interpolation plane is undefined"
        )));
    }
    if t == 0.0 {
        return Ok(z0.clone());
    }
    if t == 1.0 {
        return Ok(z1.clone());
    }
    let sin_omega = omega.sin();
    if sin_omega < PARALLEL_EPS {
        return Ok(combine(z0, 1.0 - t, z1, t));
    }
    let a = ((1.0 - t) * omega).sin() / sin_omega;
    let b = (t * omega).sin() / sin_omega;
    Ok(combine(z0, a, z1, b))
}

/// Number of intervals between `t_floor` and `t_ceil` at spacing `delta`.
///
/// The ratio must be integral up to a relative 1e-9, which absorbs the
/// binary representation error of decimal steps such as 0.1.
pub fn schedule_count(t_ceil: f64, t_floor: f64, delta: f64) -> Result<usize> {
    if !(t_floor < t_ceil) {
        return Err(Error::Contract(format!("t_floor {t_floor} must be below t_ceil {t_ceil}")));
    }
    let span = t_ceil - t_floor;
    if !(delta > 0.0) || delta > span {
        return Err(Error::Contract(format!("delta {delta} must lie in (0, {span}]")));
    }
    let ratio = span / delta;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::Contract(format!(
            "({t_ceil} - {t_floor}) / {delta} = {ratio} is not an integer"
        )));
    }
    Ok(rounded as usize)
}

/// Signed angular deviation per strip image, `(angle_left - angle_right) / n_t`.
pub fn angle_step(angle_left: f64, angle_right: f64, n_t: usize) -> Result<f64> {
    if n_t == 0 {
        return Err(Error::Contract("angle_step needs n_t >= 1".into()));
    }
    Ok((angle_left - angle_right) / n_t as f64)
}

/// Interpolation bounds, spacing and pose labels for one strip.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationSchedule {
    pub t_ceil: f64,
    pub t_floor: f64,
    pub delta: f64,
    pub n_t: usize,
    pub angle_left: f64,
    pub angle_right: f64,
    /// Degrees per step.
    pub n: f64,
}

impl InterpolationSchedule {
    pub fn new(t_ceil: f64, t_floor: f64, delta: f64, angle_left: f64, angle_right: f64) -> Result<Self> {
        let n_t = schedule_count(t_ceil, t_floor, delta)?;
        let n = angle_step(angle_left, angle_right, n_t)?;
        Ok(Self {
            t_ceil,
            t_floor,
            delta,
            n_t,
            angle_left,
            angle_right,
            n,
        })
    }
}

impl Default for InterpolationSchedule {
    fn default() -> Self {
        Self::new(1.0, 0.0, 0.1, 45.0, -45.0).expect("default schedule is valid")
    }
}

/// Parameters `t_i = i / (count - 1)`, endpoints included.
pub fn path_parameters(count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::Contract(format!("interpolation path needs >= 2 points, got {count}")));
    }
    let last = (count - 1) as f64;
    Ok((0..count).map(|i| i as f64 / last).collect())
}

/// `count` embeddings along the arc from `z0` to `z1`, endpoints included.
pub fn interpolation_path(z0: &LatentEmbedding, z1: &LatentEmbedding, count: usize) -> Result<Vec<LatentEmbedding>> {
    path_parameters(count)?
        .into_iter()
        .map(|t| slerp(z0, z1, t))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianPair<T> {
    pub first: T,
    pub second: T,
    pub indices: (usize, usize),
    /// Set when the path length was odd and the single centre element is repeated.
    pub degenerate: bool,
}

/// The two centre elements of a path: indices `len/2 - 1` and `len/2`.
pub fn median_pair<T: Clone>(path: &[T]) -> Result<MedianPair<T>> {
    let len = path.len();
    if len == 0 {
        return Err(Error::Contract("median of an empty path".into()));
    }
    let (i, j, degenerate) = if len.is_multiple_of(2) {
        (len / 2 - 1, len / 2, false)
    } else {
        (len / 2, len / 2, true)
    };
    Ok(MedianPair {
        first: path[i].clone(),
        second: path[j].clone(),
        indices: (i, j),
        degenerate,
    })
}
