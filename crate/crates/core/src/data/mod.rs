//! Images, the mirror-pair batch layout, datasets and file formats.

pub mod pgm;
pub mod synth;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub use synth::{synth_face, SynthFaceSpec};

fn image_dims(image: &Tensor) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [n, c, h, w] => Ok((n * c, h, w)),
        ref s => Err(Error::shape(format!("expected an image tensor [N, C, H, W], got {s:?}"))),
    }
}

/// Left-right flip: reverses the column order of every row.
pub fn mirror(image: &Tensor) -> Result<Tensor> {
    let (_, _, w) = image_dims(image)?;
    let mut out = image.data().to_vec();
    for row in out.chunks_mut(w) {
        row.reverse();
    }
    Tensor::new(image.shape().to_vec(), out)
}

/// Mean absolute difference between an image and its mirror.
pub fn asymmetry_score(image: &Tensor) -> Result<f64> {
    let flipped = mirror(image)?;
    l1_distance(image, &flipped)
}

/// Mean absolute difference of two equally shaped tensors.
pub fn l1_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("l1 distance of {:?} and {:?}", a.shape(), b.shape())));
    }
    let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.len() as f64)
}

/// `[N, 1, S, S]` images with per-item pose labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pub images: Tensor,
    pub poses: Vec<f64>,
    /// Item `i + N/2` is the mirror of item `i` for every `i < N/2`.
    pub mirror_layout: bool,
}

impl ImageBatch {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Originals in order followed by their mirrors in the same order.
pub fn make_mirror_batch(images: &[Tensor], poses: &[f64]) -> Result<ImageBatch> {
    if images.is_empty() {
        return Err(Error::Contract("mirror batch needs at least one image".into()));
    }
    if images.len() != poses.len() {
        return Err(Error::Contract(format!("{} images but {} poses", images.len(), poses.len())));
    }
    let mut parts = images.to_vec();
    for img in images {
        parts.push(mirror(img)?);
    }
    let mut all_poses = poses.to_vec();
    all_poses.extend(poses.iter().map(|p| -p));
    Ok(ImageBatch {
        images: Tensor::stack_leading(&parts)?,
        poses: all_poses,
        mirror_layout: true,
    })
}

/// Draws labelled training images.
pub trait ImageSource {
    fn image_size(&self) -> usize;

    /// One `[1, 1, S, S]` image and its pose in degrees.
    fn sample(&self, rng: &mut SplitMix64) -> Result<(Tensor, f64)>;

    /// A batch of `batch_size` items in mirror-pair layout.
    fn mirror_batch(&self, batch_size: usize, rng: &mut SplitMix64) -> Result<ImageBatch> {
        if batch_size == 0 || !batch_size.is_multiple_of(2) {
            return Err(Error::Contract(format!("batch size must be even and positive, got {batch_size}")));
        }
        let mut images = Vec::with_capacity(batch_size / 2);
        let mut poses = Vec::with_capacity(batch_size / 2);
        for _ in 0..batch_size / 2 {
            let (img, pose) = self.sample(rng)?;
            images.push(img);
            poses.push(pose);
        }
        make_mirror_batch(&images, &poses)
    }
}

/// Unlimited procedural faces: identity uniform in `0..identities`, pose
/// uniform in `[angle_min, angle_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub identities: u64,
    pub angle_min: f64,
    pub angle_max: f64,
    pub size: usize,
}

impl SynthDataset {
    pub fn new(identities: u64, angle_min: f64, angle_max: f64, size: usize) -> Result<Self> {
        if identities == 0 {
            return Err(Error::Contract("synthetic dataset needs at least one identity".into()));
        }
        if !(angle_min < angle_max) || angle_min.abs() > synth::MAX_POSE_DEG || angle_max.abs() > synth::MAX_POSE_DEG {
            return Err(Error::Contract(format!("invalid pose range [{angle_min}, {angle_max})")));
        }
        Ok(Self {
            identities,
            angle_min,
            angle_max,
            size,
        })
    }
}

impl ImageSource for SynthDataset {
    fn image_size(&self) -> usize {
        self.size
    }

    fn sample(&self, rng: &mut SplitMix64) -> Result<(Tensor, f64)> {
        let seed = rng.below(self.identities);
        let pose = rng.uniform(self.angle_min, self.angle_max);
        let img = synth_face(&SynthFaceSpec {
            seed,
            pose_deg: pose,
            size: self.size,
        })?;
        Ok((img, pose))
    }
}

/// One row of a dataset manifest (`path,seed,pose_deg`).
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub seed: u64,
    pub pose_deg: f64,
}

pub const MANIFEST_HEADER: &str = "path,seed,pose_deg";

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for e in entries {
        text.push_str(&format!("{},{},{}\n", e.path.display(), e.seed, e.pose_deg));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
        return Err(Error::Config(format!("{}: missing manifest header `{MANIFEST_HEADER}`", path.display())));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Config(format!("{}: malformed manifest row {}: {line}", path.display(), i + 2));
        let mut fields = line.split(',');
        let (Some(p), Some(seed), Some(pose), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(bad());
        };
        out.push(ManifestEntry {
            path: PathBuf::from(p.trim()),
            seed: seed.trim().parse().map_err(|_| bad())?,
            pose_deg: pose.trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Images listed in a manifest, loaded eagerly and sampled uniformly.
#[derive(Debug, Clone)]
pub struct ManifestDataset {
    images: Vec<(Tensor, f64)>,
    size: usize,
}

impl ManifestDataset {
    /// Loads every entry; relative paths resolve against the manifest's directory.
    pub fn load(manifest: &Path) -> Result<Self> {
        let base = manifest.parent().unwrap_or(Path::new("."));
        let entries = read_manifest(manifest)?;
        if entries.is_empty() {
            return Err(Error::Config(format!("{}: manifest lists no images", manifest.display())));
        }
        let mut images = Vec::with_capacity(entries.len());
        let mut size = None;
        for e in entries {
            let p = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
            let img = pgm::load_pgm(&p)?;
            let (_, h, w) = image_dims(&img)?;
            if h != w || size.is_some_and(|s| s != h) {
                return Err(Error::shape(format!("{}: images must be square and equally sized", p.display())));
            }
            size = Some(h);
            images.push((img, e.pose_deg));
        }
        Ok(Self {
            images,
            size: size.expect("non-empty"),
        })
    }
}

impl ImageSource for ManifestDataset {
    fn image_size(&self) -> usize {
        self.size
    }

    fn sample(&self, rng: &mut SplitMix64) -> Result<(Tensor, f64)> {
        let i = rng.below(self.images.len() as u64) as usize;
        Ok(self.images[i].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(values: &[f64], h: usize, w: usize) -> Tensor {
        Tensor::new(vec![1, 1, h, w], values.to_vec()).unwrap()
    }

    #[test]
    fn mirror_reverses_columns() {
        let x = img(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        assert_eq!(mirror(&x).unwrap().data(), &[2.0, 1.0, 4.0, 3.0]);
        assert_eq!(mirror(&mirror(&x).unwrap()).unwrap(), x);
        let sym = img(&[1.0, 1.0, 5.0, 5.0], 2, 2);
        assert_eq!(mirror(&sym).unwrap(), sym);
    }

    #[test]
    fn asymmetry_of_image_and_mirror_agree() {
        let x = img(&[0.1, -0.4, 0.9, 0.3, 0.0, -1.0], 2, 3);
        let a = asymmetry_score(&x).unwrap();
        assert!(a > 0.0);
        assert_eq!(a, asymmetry_score(&mirror(&x).unwrap()).unwrap());
        assert_eq!(asymmetry_score(&img(&[1.0, 1.0], 1, 2)).unwrap(), 0.0);
    }

    #[test]
    fn mirror_batch_layout() {
        let a = img(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        let b = img(&[5.0, 6.0, 7.0, 8.0], 2, 2);
        let batch = make_mirror_batch(&[a.clone(), b.clone()], &[30.0, 45.0]).unwrap();
        assert_eq!(batch.images.shape(), &[4, 1, 2, 2]);
        let items: Vec<_> = (0..4).map(|i| batch.images.slice_leading(i).unwrap()).collect();
        assert_eq!(items[0], a);
        assert_eq!(items[1], b);
        assert_eq!(items[2], mirror(&a).unwrap());
        assert_eq!(items[3], mirror(&b).unwrap());
        assert_eq!(batch.poses, vec![30.0, 45.0, -30.0, -45.0]);
        assert!(batch.mirror_layout);
        assert!(make_mirror_batch(&[a], &[]).is_err());
    }

    #[test]
    fn synth_source_batches() {
        let ds = SynthDataset::new(64, 20.0, 60.0, 16).unwrap();
        let mut rng = SplitMix64::new(3);
        let batch = ds.mirror_batch(16, &mut rng).unwrap();
        assert_eq!(batch.images.shape(), &[16, 1, 16, 16]);
        assert!(batch.poses[..8].iter().all(|p| (20.0..60.0).contains(p)));
        for i in 0..8 {
            let orig = batch.images.slice_leading(i).unwrap();
            assert_eq!(mirror(&orig).unwrap(), batch.images.slice_leading(i + 8).unwrap());
        }
        assert!(ds.mirror_batch(7, &mut rng).is_err());
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            ManifestEntry {
                path: "face_0000.pgm".into(),
                seed: 4,
                pose_deg: 33.25,
            },
            ManifestEntry {
                path: "face_0001.pgm".into(),
                seed: 5,
                pose_deg: -20.0,
            },
        ];
        let p = dir.path().join("manifest.csv");
        write_manifest(&p, &entries).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), entries);
        std::fs::write(&p, "path,seed\nx,1\n").unwrap();
        assert!(read_manifest(&p).is_err());
    }
}
