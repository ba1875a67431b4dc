//! Synthetic phantom data: random smooth peaked fields on the grid and their
//! exact line-integral measurements, optionally with additive noise.
//!
//! Sample `j` of a dataset draws all of its randomness from a generator
//! seeded with `base_seed + j`, so datasets are identical regardless of how
//! many threads produce them or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{Dataset, Manifest};
use crate::error::{Error, Result};
use crate::geometry::{ContributionMatrix, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// Rotated elliptical Gaussian with a single central maximum.
    GaussianPeak,
}

fn default_margin() -> f64 {
    0.1
}

/// Assignment rule for phantom fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomRule {
    pub kind: PhantomKind,
    /// Peak value range.
    pub amplitude_range: [f64; 2],
    /// Width range as fractions of the smaller grid span.
    pub sigma_range: [f64; 2],
    /// Major/minor axis ratio range, each ≥ 1.
    pub ellipticity_range: [f64; 2],
    /// Minimum distance of the peak cell center from the boundary, as a
    /// fraction of the span along each axis.
    #[serde(default = "default_margin")]
    pub center_margin: f64,
}

impl Default for PhantomRule {
    fn default() -> Self {
        PhantomRule {
            kind: PhantomKind::GaussianPeak,
            amplitude_range: [0.5, 1.0],
            sigma_range: [0.15, 0.35],
            ellipticity_range: [1.0, 2.0],
            center_margin: default_margin(),
        }
    }
}

impl PhantomRule {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.amplitude_range) || self.amplitude_range[0] <= 0.0 {
            return Err(Error::InvalidRule(format!(
                "amplitude range {:?} must be positive and ordered",
                self.amplitude_range
            )));
        }
        if !ordered(self.sigma_range) || self.sigma_range[0] <= 0.0 {
            return Err(Error::InvalidRule(format!(
                "sigma range {:?} must be positive and ordered",
                self.sigma_range
            )));
        }
        if !ordered(self.ellipticity_range) || self.ellipticity_range[0] < 1.0 {
            return Err(Error::InvalidRule(format!(
                "ellipticity range {:?} must be ordered and at least 1",
                self.ellipticity_range
            )));
        }
        if !(0.0..0.5).contains(&self.center_margin) {
            return Err(Error::InvalidRule(format!(
                "center margin {} must lie in [0, 0.5)",
                self.center_margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    /// `Δ_i ~ N(0, (level · max_i |x_i|)²)` per chord.
    GaussianRelative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub level: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec::default()
    }

    pub fn gaussian_relative(level: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::GaussianRelative,
            level,
        }
    }

    pub fn effective_level(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::GaussianRelative => self.level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0 && self.level.is_finite()) {
            return Err(Error::InvalidRule(format!(
                "noise level {} must be finite and non-negative",
                self.level
            )));
        }
        Ok(())
    }
}

/// Parameters drawn for one phantom field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakParams {
    pub center_cell: (usize, usize),
    pub amplitude: f64,
    /// Absolute width along the major axis.
    pub sigma: f64,
    pub ellipticity: f64,
    /// Major-axis angle from the r axis, in `[0, π)`.
    pub rotation: f64,
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

/// Cells eligible as peak centers; every cell if the margin excludes all.
fn center_candidates(grid: &Grid, margin: f64) -> Vec<(usize, usize)> {
    let mr = margin * (grid.r_max - grid.r_min);
    let mz = margin * (grid.z_max - grid.z_min);
    let mut cells = Vec::new();
    for iz in 0..grid.numz {
        for ir in 0..grid.numr {
            let (r, z) = grid.cell_center(iz, ir);
            if r - grid.r_min >= mr && grid.r_max - r >= mr && z - grid.z_min >= mz && grid.z_max - z >= mz {
                cells.push((iz, ir));
            }
        }
    }
    if cells.is_empty() {
        cells = (0..grid.numz)
            .flat_map(|iz| (0..grid.numr).map(move |ir| (iz, ir)))
            .collect();
    }
    cells
}

fn draw_params(grid: &Grid, rule: &PhantomRule, rng: &mut impl Rng) -> PeakParams {
    let candidates = center_candidates(grid, rule.center_margin);
    let center_cell = candidates[rng.gen_range(0..candidates.len())];
    let amplitude = uniform(rng, rule.amplitude_range);
    let span = (grid.r_max - grid.r_min).min(grid.z_max - grid.z_min);
    let sigma = uniform(rng, rule.sigma_range) * span;
    let ellipticity = uniform(rng, rule.ellipticity_range);
    let rotation = rng.gen::<f64>() * std::f64::consts::PI;
    PeakParams {
        center_cell,
        amplitude,
        sigma,
        ellipticity,
        rotation,
    }
}

/// Parameters that [`sample_field`] draws for `seed`.
pub fn peak_params(grid: &Grid, rule: &PhantomRule, seed: u64) -> PeakParams {
    draw_params(grid, rule, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn render(grid: &Grid, p: &PeakParams) -> Vec<f64> {
    let (cr, cz) = grid.cell_center(p.center_cell.0, p.center_cell.1);
    let (sin, cos) = p.rotation.sin_cos();
    let two_var = 2.0 * p.sigma * p.sigma;
    let mut field = Vec::with_capacity(grid.num_cells());
    for iz in 0..grid.numz {
        for ir in 0..grid.numr {
            let (r, z) = grid.cell_center(iz, ir);
            let (dr, dz) = (r - cr, z - cz);
            let along = cos * dr + sin * dz;
            let across = (-sin * dr + cos * dz) * p.ellipticity;
            field.push(p.amplitude * (-(along * along + across * across) / two_var).exp());
        }
    }
    field
}

/// Draws one phantom field, deterministic in `(grid, rule, seed)`.
pub fn sample_field(grid: &Grid, rule: &PhantomRule, seed: u64) -> Vec<f64> {
    render(grid, &peak_params(grid, rule, seed))
}

/// One phantom in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSample {
    pub field: Vec<f64>,
    pub measurements: Vec<f64>,
    pub seed: u64,
}

fn check_dims(grid: &Grid, cmatrix: &ContributionMatrix) -> Result<()> {
    if cmatrix.numz() != grid.numz || cmatrix.numr() != grid.numr {
        return Err(Error::shape(
            format!("contribution matrix over {}x{}", grid.numz, grid.numr),
            format!("{}x{}", cmatrix.numz(), cmatrix.numr()),
        ));
    }
    Ok(())
}

fn make_sample(
    grid: &Grid,
    cmatrix: &ContributionMatrix,
    rule: &PhantomRule,
    noise: &NoiseSpec,
    seed: u64,
) -> PhantomSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = draw_params(grid, rule, &mut rng);
    let field = render(grid, &params);
    let mut measurements = cmatrix.project_unchecked(&field);
    let level = noise.effective_level();
    if level > 0.0 {
        let x_max = measurements.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if x_max > 0.0 {
            let normal = Normal::new(0.0, level * x_max).expect("positive std");
            for x in &mut measurements {
                *x += normal.sample(&mut rng);
            }
        }
    }
    PhantomSample {
        field,
        measurements,
        seed,
    }
}

/// Generates `count` double-precision phantoms with seeds `base_seed + j`.
pub fn generate_samples(
    grid: &Grid,
    cmatrix: &ContributionMatrix,
    rule: &PhantomRule,
    noise: &NoiseSpec,
    count: usize,
    base_seed: u64,
) -> Result<Vec<PhantomSample>> {
    grid.validate()?;
    rule.validate()?;
    noise.validate()?;
    check_dims(grid, cmatrix)?;
    if count == 0 {
        return Err(Error::InvalidCount("phantom count must be at least 1".into()));
    }
    Ok((0..count)
        .into_par_iter()
        .map(|j| make_sample(grid, cmatrix, rule, noise, base_seed.wrapping_add(j as u64)))
        .collect())
}

/// Generates a phantom dataset stored in single precision.
pub fn generate_dataset(
    grid: &Grid,
    cmatrix: &ContributionMatrix,
    rule: &PhantomRule,
    noise: &NoiseSpec,
    count: usize,
    base_seed: u64,
) -> Result<Dataset> {
    let samples = generate_samples(grid, cmatrix, rule, noise, count, base_seed)?;
    samples_to_dataset(&samples, grid, rule, noise, base_seed)
}

/// Packs samples drawn by [`generate_samples`] into a single-precision dataset.
pub fn samples_to_dataset(
    samples: &[PhantomSample],
    grid: &Grid,
    rule: &PhantomRule,
    noise: &NoiseSpec,
    base_seed: u64,
) -> Result<Dataset> {
    let n = samples.first().map_or(0, |s| s.measurements.len());
    let mut manifest = Manifest::new(samples.len(), n, grid.numz, grid.numr, "phantom");
    manifest.base_seed = Some(base_seed);
    manifest.noise = Some(*noise);
    manifest.rule = Some(*rule);
    manifest.grid = Some(*grid);
    let inputs = samples
        .iter()
        .flat_map(|s| s.measurements.iter().map(|v| *v as f32))
        .collect();
    let labels = samples
        .iter()
        .flat_map(|s| s.field.iter().map(|v| *v as f32))
        .collect();
    Dataset::new(inputs, labels, manifest)
}
