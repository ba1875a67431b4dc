//! Dataset and contribution-matrix persistence, splitting and quality
//! assessment.
//!
//! On disk a dataset is a directory holding `manifest.json` plus raw
//! little-endian `f32` blobs: `inputs.f32` with shape `(m, n)` and
//! `labels.f32` with shape `(m, numz, numr)`. A contribution matrix is a
//! `cmatrix.f32` blob of shape `(n, numz, numr)` next to `cmatrix.json`.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{ContributionMatrix, Grid};
use crate::nn::Scalar;
use crate::objective::relative_bp_error;
use crate::phantom::{NoiseSpec, PhantomRule, PhantomSample};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INPUTS_FILE: &str = "inputs.f32";
pub const LABELS_FILE: &str = "labels.f32";
pub const CMATRIX_FILE: &str = "cmatrix.f32";
pub const CMATRIX_MANIFEST_FILE: &str = "cmatrix.json";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub part: SplitPart,
    pub ratios: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub m: usize,
    pub n: usize,
    pub numz: usize,
    pub numr: usize,
    pub source: String,
    #[serde(default)]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub rule: Option<PhantomRule>,
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub parent_hash: Option<String>,
    #[serde(default)]
    pub split: Option<SplitInfo>,
}

impl Manifest {
    pub fn new(m: usize, n: usize, numz: usize, numr: usize, source: impl Into<String>) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            m,
            n,
            numz,
            numr,
            source: source.into(),
            base_seed: None,
            noise: None,
            rule: None,
            grid: None,
            parent_hash: None,
            split: None,
        }
    }
}

/// Paired measurements and fields in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f32>,
    labels: Vec<f32>,
    manifest: Manifest,
}

impl Dataset {
    pub fn new(inputs: Vec<f32>, labels: Vec<f32>, manifest: Manifest) -> Result<Self> {
        let Manifest { m, n, numz, numr, .. } = manifest;
        if m == 0 || n == 0 || numz == 0 || numr == 0 {
            return Err(Error::InvalidCount(format!(
                "dataset dims m={m} n={n} numz={numz} numr={numr}"
            )));
        }
        if inputs.len() != m * n {
            return Err(Error::shape(format!("inputs ({m}, {n})"), inputs.len()));
        }
        if labels.len() != m * numz * numr {
            return Err(Error::shape(format!("labels ({m}, {numz}, {numr})"), labels.len()));
        }
        Ok(Dataset {
            inputs,
            labels,
            manifest,
        })
    }

    pub fn m(&self) -> usize {
        self.manifest.m
    }

    pub fn n(&self) -> usize {
        self.manifest.n
    }

    pub fn numz(&self) -> usize {
        self.manifest.numz
    }

    pub fn numr(&self) -> usize {
        self.manifest.numr
    }

    pub fn cells(&self) -> usize {
        self.manifest.numz * self.manifest.numr
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn labels(&self) -> &[f32] {
        &self.labels
    }

    pub fn input(&self, j: usize) -> &[f32] {
        &self.inputs[j * self.n()..(j + 1) * self.n()]
    }

    pub fn label(&self, j: usize) -> &[f32] {
        &self.labels[j * self.cells()..(j + 1) * self.cells()]
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut inputs = Vec::with_capacity(indices.len() * self.n());
        let mut labels = Vec::with_capacity(indices.len() * self.cells());
        for &j in indices {
            if j >= self.m() {
                return Err(Error::InvalidCount(format!("sample {j} out of {}", self.m())));
            }
            inputs.extend_from_slice(self.input(j));
            labels.extend_from_slice(self.label(j));
        }
        let mut manifest = self.manifest.clone();
        manifest.m = indices.len();
        Dataset::new(inputs, labels, manifest)
    }

    /// SHA-256 over the little-endian bytes of the input blob followed by the
    /// label blob.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(f32_bytes(&self.inputs));
        hasher.update(f32_bytes(&self.labels));
        hex::encode(hasher.finalize())
    }

    pub fn check_cmatrix(&self, cmatrix: &ContributionMatrix) -> Result<()> {
        if cmatrix.n() != self.n() || cmatrix.numz() != self.numz() || cmatrix.numr() != self.numr() {
            return Err(Error::shape(
                format!("contribution matrix ({}, {}, {})", self.n(), self.numz(), self.numr()),
                format!("({}, {}, {})", cmatrix.n(), cmatrix.numz(), cmatrix.numr()),
            ));
        }
        Ok(())
    }
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn f32_from_bytes(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f32>> {
    if bytes.len() != 4 * expected {
        return Err(Error::format(
            path,
            format!("expected {} bytes, found {}", 4 * expected, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

/// Exclusive writer lock on a directory, released on drop.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(DirLock(path))
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let _lock = DirLock::acquire(dir)?;
    write_file(&dir.join(INPUTS_FILE), &f32_bytes(&dataset.inputs))?;
    write_file(&dir.join(LABELS_FILE), &f32_bytes(&dataset.labels))?;
    let manifest = serde_json::to_vec_pretty(&dataset.manifest)?;
    write_file(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_slice(&read_file(&manifest_path)?)
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let inputs_path = dir.join(INPUTS_FILE);
    let inputs = f32_from_bytes(&inputs_path, &read_file(&inputs_path)?, manifest.m * manifest.n)?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = f32_from_bytes(
        &labels_path,
        &read_file(&labels_path)?,
        manifest.m * manifest.numz * manifest.numr,
    )?;
    Dataset::new(inputs, labels, manifest).map_err(|e| Error::format(&manifest_path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmatrixManifest {
    pub format_version: u32,
    pub n: usize,
    pub numz: usize,
    pub numr: usize,
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub subrays: Option<usize>,
}

/// Writes `cmatrix.f32` and `cmatrix.json` into `dir`.
pub fn write_cmatrix(
    cmatrix: &ContributionMatrix,
    grid: Option<&Grid>,
    subrays: Option<usize>,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    let _lock = DirLock::acquire(dir)?;
    let values: Vec<f32> = cmatrix.weights().iter().map(|w| *w as f32).collect();
    write_file(&dir.join(CMATRIX_FILE), &f32_bytes(&values))?;
    let manifest = CmatrixManifest {
        format_version: FORMAT_VERSION,
        n: cmatrix.n(),
        numz: cmatrix.numz(),
        numr: cmatrix.numr(),
        grid: grid.copied(),
        subrays,
    };
    write_file(
        &dir.join(CMATRIX_MANIFEST_FILE),
        &serde_json::to_vec_pretty(&manifest)?,
    )
}

/// Reads a contribution matrix from a directory or from the path of its
/// `cmatrix.f32` blob (the manifest is expected next to it).
pub fn read_cmatrix(path: impl AsRef<Path>) -> Result<(ContributionMatrix, CmatrixManifest)> {
    let path = path.as_ref();
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    let manifest_path = dir.join(CMATRIX_MANIFEST_FILE);
    let manifest: CmatrixManifest = serde_json::from_slice(&read_file(&manifest_path)?)
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    let blob_path = if path.is_dir() {
        dir.join(CMATRIX_FILE)
    } else {
        path.to_path_buf()
    };
    let values = f32_from_bytes(
        &blob_path,
        &read_file(&blob_path)?,
        manifest.n * manifest.numz * manifest.numr,
    )?;
    let cmatrix = ContributionMatrix::from_parts(
        manifest.n,
        manifest.numz,
        manifest.numr,
        values.into_iter().map(f64::from).collect(),
    )
    .map_err(|e| Error::format(&blob_path, e.to_string()))?;
    Ok((cmatrix, manifest))
}

/// Relative back-projection error of one sample's label against its measurements.
pub fn epsilon_j<T: Scalar>(x: &[T], y: &[T], cmatrix: &ContributionMatrix) -> Result<f64> {
    if x.len() != cmatrix.n() || y.len() != cmatrix.cells() {
        return Err(Error::shape(
            format!("x of {} and y of {}", cmatrix.n(), cmatrix.cells()),
            format!("x of {} and y of {}", x.len(), y.len()),
        ));
    }
    let bp: Vec<f64> = cmatrix
        .rows()
        .map(|row| row.iter().zip(y).map(|(w, v)| w * v.to_f64()).sum())
        .collect();
    let per_chord = relative_bp_error(x, &bp)?;
    Ok(per_chord.iter().sum::<f64>() / per_chord.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub per_sample_eps: Vec<f64>,
    pub eps_bar: f64,
    pub worst_index: usize,
}

impl QualityReport {
    pub fn from_eps(per_sample_eps: Vec<f64>) -> Self {
        let eps_bar = per_sample_eps.iter().sum::<f64>() / per_sample_eps.len() as f64;
        let worst_index = per_sample_eps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        QualityReport {
            per_sample_eps,
            eps_bar,
            worst_index,
        }
    }
}

/// Dataset-mean label quality.
pub fn assess_quality(dataset: &Dataset, cmatrix: &ContributionMatrix) -> Result<QualityReport> {
    dataset.check_cmatrix(cmatrix)?;
    let eps = (0..dataset.m())
        .map(|j| {
            epsilon_j(dataset.input(j), dataset.label(j), cmatrix).map_err(|e| match e {
                Error::DegenerateSample { .. } => Error::DegenerateSample { index: j },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QualityReport::from_eps(eps))
}

/// Label quality of in-memory double-precision phantoms, before any f32 storage.
pub fn assess_samples(samples: &[PhantomSample], cmatrix: &ContributionMatrix) -> Result<QualityReport> {
    if samples.is_empty() {
        return Err(Error::InvalidCount("no samples to assess".into()));
    }
    let eps = samples
        .iter()
        .enumerate()
        .map(|(j, s)| {
            epsilon_j(&s.measurements, &s.field, cmatrix).map_err(|e| match e {
                Error::DegenerateSample { .. } => Error::DegenerateSample { index: j },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QualityReport::from_eps(eps))
}

/// Deterministic shuffled partition into train/valid/test.
pub fn split(dataset: &Dataset, ratios: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r > 0.0) || !r.is_finite()) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidRatios(format!(
            "{ratios:?} must be positive and sum to 1"
        )));
    }
    let m = dataset.m();
    let n_train = ((ratios[0] * m as f64).round() as usize).min(m);
    let n_valid = ((ratios[1] * m as f64).round() as usize).min(m - n_train);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let parent = dataset.content_hash();
    let part = |indices: &[usize], part: SplitPart| -> Result<Dataset> {
        let mut d = dataset.subset(indices)?;
        d.manifest.parent_hash = Some(parent.clone());
        d.manifest.split = Some(SplitInfo { part, ratios, seed });
        Ok(d)
    };
    let (train, rest) = order.split_at(n_train);
    let (valid, test) = rest.split_at(n_valid);
    if train.is_empty() || valid.is_empty() || test.is_empty() {
        return Err(Error::InvalidRatios(format!(
            "{ratios:?} on {m} samples leaves an empty part"
        )));
    }
    Ok((
        part(train, SplitPart::Train)?,
        part(valid, SplitPart::Valid)?,
        part(test, SplitPart::Test)?,
    ))
}

/// Index sets of a split, for lineage checks.
pub fn split_indices(m: usize, ratios: [f64; 3], seed: u64) -> [Vec<usize>; 3] {
    let n_train = ((ratios[0] * m as f64).round() as usize).min(m);
    let n_valid = ((ratios[1] * m as f64).round() as usize).min(m - n_train);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    [
        order[..n_train].to_vec(),
        order[n_train..n_train + n_valid].to_vec(),
        order[n_train + n_valid..].to_vec(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(m: usize) -> Dataset {
        let inputs = (0..m * 2).map(|i| 1.0 + i as f32).collect();
        let labels = (0..m * 4).map(|i| i as f32 * 0.5).collect();
        Dataset::new(inputs, labels, Manifest::new(m, 2, 2, 2, "toy")).unwrap()
    }

    #[test]
    fn epsilon_direct_substitution() {
        // C·y = [1.0, 1.5] for x = [1, 2]
        let c = ContributionMatrix::from_parts(2, 1, 2, vec![1.0, 0.0, 1.0, 0.5]).unwrap();
        let eps = epsilon_j(&[1.0, 2.0], &[1.0, 1.0], &c).unwrap();
        assert!((eps - 0.125).abs() < 1e-15);
        let exact = epsilon_j(&[1.0, 1.5], &[1.0, 1.0], &c).unwrap();
        assert_eq!(exact, 0.0);
        assert!(matches!(
            epsilon_j(&[0.0, 0.0], &[1.0, 1.0], &c),
            Err(Error::DegenerateSample { .. })
        ));
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = toy(100);
        let (a, b, c) = split(&d, [0.7, 0.2, 0.1], 9).unwrap();
        assert_eq!((a.m(), b.m(), c.m()), (70, 20, 10));
        let [ia, ib, ic] = split_indices(100, [0.7, 0.2, 0.1], 9);
        let mut all: Vec<usize> = ia.iter().chain(&ib).chain(&ic).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(a.input(0), d.input(ia[0]));
        let (a2, _, _) = split(&d, [0.7, 0.2, 0.1], 9).unwrap();
        assert_eq!(a, a2);
        assert_eq!(a.manifest().parent_hash.as_deref(), Some(d.content_hash().as_str()));
        assert_eq!(c.manifest().split.as_ref().unwrap().part, SplitPart::Test);
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let d = toy(10);
        assert!(matches!(split(&d, [0.5, 0.5, 0.1], 0), Err(Error::InvalidRatios(_))));
        assert!(matches!(split(&d, [1.0, 0.0, 0.0], 0), Err(Error::InvalidRatios(_))));
    }

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let d = toy(5);
        write_dataset(&d, dir.path()).unwrap();
        assert!(!dir.path().join(LOCK_FILE).exists());
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, d);

        let mpath = dir.path().join(MANIFEST_FILE);
        let mut manifest: Manifest = serde_json::from_slice(&fs::read(&mpath).unwrap()).unwrap();
        manifest.m = 6;
        fs::write(&mpath, serde_json::to_vec(&manifest).unwrap()).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_blob_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&toy(3), dir.path()).unwrap();
        let p = dir.path().join(LABELS_FILE);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn locked_directory_refuses_writes() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LOCK_FILE), b"").unwrap();
        assert!(matches!(write_dataset(&toy(2), dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn cmatrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = ContributionMatrix::from_parts(2, 1, 2, vec![1.0, 0.0, 0.25, 0.5]).unwrap();
        write_cmatrix(&c, None, Some(5), dir.path()).unwrap();
        let (back, m) = read_cmatrix(dir.path()).unwrap();
        assert_eq!(back, c);
        assert_eq!(m.subrays, Some(5));
        let (again, _) = read_cmatrix(dir.path().join(CMATRIX_FILE)).unwrap();
        assert_eq!(again, c);
    }
}
