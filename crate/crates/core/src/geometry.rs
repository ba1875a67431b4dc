//! Discretization grid, chord geometry and the contribution matrix.
//!
//! Chords are traced exactly: the parametric positions where a chord crosses
//! the grid's vertical and horizontal cell boundaries are merged, and each
//! interval between consecutive crossings is credited to the cell containing
//! its midpoint. A chord with finite beam width is approximated by averaging
//! parallel sub-rays spread uniformly across the beam.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of parallel sub-rays used for chords with a finite beam width.
pub const DEFAULT_SUBRAYS: usize = 5;

/// Rectangular (z, r) discretization of the plasma cross-section.
///
/// Cells are indexed row-major with z outer and r inner: cell `(iz, ir)`
/// lives at flat index `iz * numr + ir`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub numr: usize,
    pub numz: usize,
}

impl Grid {
    pub fn new(
        r_min: f64,
        r_max: f64,
        z_min: f64,
        z_max: f64,
        numr: usize,
        numz: usize,
    ) -> Result<Self> {
        let grid = Grid {
            r_min,
            r_max,
            z_min,
            z_max,
            numr,
            numz,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Re-checks the invariants, e.g. after deserializing.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.r_min, self.r_max, self.z_min, self.z_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.r_max <= self.r_min || self.z_max <= self.z_min {
            return Err(Error::InvalidBounds(format!(
                "r [{}, {}], z [{}, {}]",
                self.r_min, self.r_max, self.z_min, self.z_max
            )));
        }
        if self.numr == 0 || self.numz == 0 {
            return Err(Error::InvalidCount(format!(
                "numr = {}, numz = {}",
                self.numr, self.numz
            )));
        }
        Ok(())
    }

    pub fn cell_width(&self) -> f64 {
        (self.r_max - self.r_min) / self.numr as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.z_max - self.z_min) / self.numz as f64
    }

    pub fn num_cells(&self) -> usize {
        self.numr * self.numz
    }

    pub fn index(&self, iz: usize, ir: usize) -> usize {
        iz * self.numr + ir
    }

    /// Bounds `([r_lo, r_hi], [z_lo, z_hi])` of cell `(iz, ir)`.
    pub fn cell_bounds(&self, iz: usize, ir: usize) -> ([f64; 2], [f64; 2]) {
        ([self.r_edge(ir), self.r_edge(ir + 1)], [self.z_edge(iz), self.z_edge(iz + 1)])
    }

    /// Center `(r, z)` of cell `(iz, ir)`.
    pub fn cell_center(&self, iz: usize, ir: usize) -> (f64, f64) {
        (
            self.r_min + (ir as f64 + 0.5) * self.cell_width(),
            self.z_min + (iz as f64 + 0.5) * self.cell_height(),
        )
    }

    fn r_edge(&self, i: usize) -> f64 {
        self.r_min + (self.r_max - self.r_min) * i as f64 / self.numr as f64
    }

    fn z_edge(&self, i: usize) -> f64 {
        self.z_min + (self.z_max - self.z_min) * i as f64 / self.numz as f64
    }
}

/// Straight line of sight between two `(r, z)` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chord {
    pub start: [f64; 2],
    pub end: [f64; 2],
    #[serde(default)]
    pub beam_width: f64,
}

impl Chord {
    pub fn new(start: [f64; 2], end: [f64; 2], beam_width: f64) -> Result<Self> {
        let chord = Chord {
            start,
            end,
            beam_width,
        };
        chord.validate()?;
        Ok(chord)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.start[0], self.start[1], self.end[0], self.end[1]];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidChord("non-finite endpoint".into()));
        }
        if self.start == self.end {
            return Err(Error::InvalidChord(format!(
                "start equals end at {:?}",
                self.start
            )));
        }
        if !(self.beam_width >= 0.0 && self.beam_width.is_finite()) {
            return Err(Error::InvalidChord(format!(
                "beam width {} must be finite and non-negative",
                self.beam_width
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }

    /// Length of the chord's centerline inside the closed grid rectangle.
    pub fn in_grid_length(&self, grid: &Grid) -> f64 {
        let size = [grid.r_max - grid.r_min, grid.z_max - grid.z_min];
        let local = |p: [f64; 2]| [p[0] - grid.r_min, p[1] - grid.z_min];
        match clip_to_box(size, local(self.start), local(self.end)) {
            Some((lo, hi)) => (hi - lo) * self.length(),
            None => 0.0,
        }
    }
}

/// Loads a chord set from a JSON array of `{start, end, beam_width}` records.
pub fn load_chords(path: impl AsRef<Path>) -> Result<Vec<Chord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let chords: Vec<Chord> = serde_json::from_str(&text)?;
    for chord in &chords {
        chord.validate()?;
    }
    Ok(chords)
}

/// Path-weight tensor of shape `(n, numz, numr)`; row `i` is the linear
/// forward operator of chord `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMatrix {
    n: usize,
    numz: usize,
    numr: usize,
    weights: Vec<f64>,
}

impl ContributionMatrix {
    pub fn from_parts(n: usize, numz: usize, numr: usize, weights: Vec<f64>) -> Result<Self> {
        if n == 0 || numz == 0 || numr == 0 {
            return Err(Error::InvalidCount(format!(
                "contribution matrix dims ({n}, {numz}, {numr})"
            )));
        }
        if weights.len() != n * numz * numr {
            return Err(Error::shape(n * numz * numr, weights.len()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidBounds(
                "contribution weights must be finite and non-negative".into(),
            ));
        }
        Ok(ContributionMatrix {
            n,
            numz,
            numr,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn numz(&self) -> usize {
        self.numz
    }

    pub fn numr(&self) -> usize {
        self.numr
    }

    pub fn cells(&self) -> usize {
        self.numz * self.numr
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cells = self.cells();
        &self.weights[i * cells..(i + 1) * cells]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.cells())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    /// Indices of chords that never touch the grid.
    pub fn zero_rows(&self) -> Vec<usize> {
        self.rows()
            .enumerate()
            .filter(|(_, r)| r.iter().all(|w| *w == 0.0))
            .map(|(i, _)| i)
            .collect()
    }

    /// `x_i = C^i · y` for every chord.
    pub fn forward_project(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.cells() {
            return Err(Error::shape(
                format!("field of {} cells", self.cells()),
                field.len(),
            ));
        }
        if field.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBounds("field contains non-finite values".into()));
        }
        Ok(self.project_unchecked(field))
    }

    pub(crate) fn project_unchecked(&self, field: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|row| row.iter().zip(field).map(|(w, y)| w * y).sum())
            .collect()
    }

    /// Same as [`forward_project`](Self::forward_project) for a single-precision field,
    /// accumulated in double precision.
    pub fn forward_project_f32(&self, field: &[f32]) -> Result<Vec<f64>> {
        if field.len() != self.cells() {
            return Err(Error::shape(
                format!("field of {} cells", self.cells()),
                field.len(),
            ));
        }
        Ok(self
            .rows()
            .map(|row| {
                row.iter()
                    .zip(field)
                    .map(|(w, y)| w * f64::from(*y))
                    .sum()
            })
            .collect())
    }

    /// Adjoint `Cᵀ · v`, producing a field.
    pub fn back_project(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.n {
            return Err(Error::shape(self.n, values.len()));
        }
        let mut out = vec![0.0; self.cells()];
        for (row, v) in self.rows().zip(values) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

/// Parametric interval `[lo, hi] ⊂ [0, 1]` of the segment inside the box
/// `[0, width] × [0, height]`, or `None` if the segment misses it or only
/// grazes a corner.
fn clip_to_box(size: [f64; 2], start: [f64; 2], end: [f64; 2]) -> Option<(f64, f64)> {
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for axis in 0..2 {
        let (p0, d) = (start[axis], end[axis] - start[axis]);
        if d == 0.0 {
            if p0 < 0.0 || p0 > size[axis] {
                return None;
            }
        } else {
            let a = -p0 / d;
            let b = (size[axis] - p0) / d;
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    (hi > lo).then_some((lo, hi))
}

/// Exact per-cell path lengths of a centerline given in grid-local
/// coordinates (origin at `(r_min, z_min)`). Working relative to the grid
/// origin makes the result independent of where the grid sits.
fn trace_centerline(grid: &Grid, start: [f64; 2], end: [f64; 2], plane: &mut [f64]) {
    let size = [grid.r_max - grid.r_min, grid.z_max - grid.z_min];
    let counts = [grid.numr, grid.numz];
    let Some((lo, hi)) = clip_to_box(size, start, end) else {
        return;
    };
    let d = [end[0] - start[0], end[1] - start[1]];
    let length = d[0].hypot(d[1]);

    let mut alphas = Vec::with_capacity(grid.numr + grid.numz + 4);
    alphas.push(lo);
    alphas.push(hi);
    for axis in 0..2 {
        if d[axis] == 0.0 {
            continue;
        }
        for i in 0..=counts[axis] {
            let edge = size[axis] * i as f64 / counts[axis] as f64;
            let a = (edge - start[axis]) / d[axis];
            if a > lo && a < hi {
                alphas.push(a);
            }
        }
    }
    alphas.sort_by(f64::total_cmp);

    let cell = |x: f64, axis: usize| -> usize {
        let i = (x / (size[axis] / counts[axis] as f64)).floor();
        (i.max(0.0) as usize).min(counts[axis] - 1)
    };
    for pair in alphas.windows(2) {
        let gap = pair[1] - pair[0];
        if gap <= 0.0 {
            continue;
        }
        let mid = 0.5 * (pair[0] + pair[1]);
        let r = start[0] + mid * d[0];
        let z = start[1] + mid * d[1];
        plane[grid.index(cell(z, 1), cell(r, 0))] += gap * length;
    }
}

/// Weight plane `(numz, numr)` of a single chord.
pub fn trace_chord(grid: &Grid, chord: &Chord) -> Vec<f64> {
    trace_chord_with(grid, chord, DEFAULT_SUBRAYS)
}

/// Weight plane of a single chord using `subrays` parallel rays when the
/// chord has a finite beam width.
pub fn trace_chord_with(grid: &Grid, chord: &Chord, subrays: usize) -> Vec<f64> {
    let mut plane = vec![0.0; grid.num_cells()];
    let local = |p: [f64; 2]| [p[0] - grid.r_min, p[1] - grid.z_min];
    let (start, end) = (local(chord.start), local(chord.end));
    if chord.beam_width == 0.0 || subrays <= 1 {
        trace_centerline(grid, start, end, &mut plane);
        return plane;
    }
    let length = chord.length();
    // unit normal to the chord
    let nr = -(chord.end[1] - chord.start[1]) / length;
    let nz = (chord.end[0] - chord.start[0]) / length;
    for k in 0..subrays {
        let offset = chord.beam_width * ((k as f64 + 0.5) / subrays as f64 - 0.5);
        let shift = |p: [f64; 2]| [p[0] + offset * nr, p[1] + offset * nz];
        trace_centerline(grid, shift(start), shift(end), &mut plane);
    }
    let scale = 1.0 / subrays as f64;
    plane.iter_mut().for_each(|w| *w *= scale);
    plane
}

/// Stacks the weight planes of every chord, in chord order.
pub fn build_cmatrix(grid: &Grid, chords: &[Chord], subrays: usize) -> Result<ContributionMatrix> {
    grid.validate()?;
    if chords.is_empty() {
        return Err(Error::EmptyChordSet);
    }
    if subrays == 0 {
        return Err(Error::InvalidCount("subrays must be positive".into()));
    }
    for chord in chords {
        chord.validate()?;
    }
    let planes: Vec<Vec<f64>> = chords
        .par_iter()
        .map(|c| trace_chord_with(grid, c, subrays))
        .collect();
    let cmatrix = ContributionMatrix {
        n: chords.len(),
        numz: grid.numz,
        numr: grid.numr,
        weights: planes.concat(),
    };
    let zero = cmatrix.zero_rows();
    if !zero.is_empty() {
        log::warn!("{} chord(s) do not intersect the grid: {:?}", zero.len(), zero);
    }
    Ok(cmatrix)
}

/// A fan of `count` chords from a common apex, aimed at evenly spaced points
/// on the far side of the grid. Used by the desk-scale presets.
pub fn fan_chords(grid: &Grid, count: usize, apex: [f64; 2], beam_width: f64) -> Vec<Chord> {
    let span_z = grid.z_max - grid.z_min;
    let target_r = grid.r_min - 0.05 * (grid.r_max - grid.r_min);
    (0..count)
        .map(|k| {
            let z = grid.z_min + span_z * (k as f64 + 0.5) / count as f64;
            Chord {
                start: apex,
                end: [target_r, z],
                beam_width,
            }
        })
        .collect()
}

/// Two fans viewing the grid from above and from the outboard side, the
/// usual layout of a two-camera soft x-ray system.
pub fn two_camera_chords(grid: &Grid, count: usize) -> Vec<Chord> {
    let span_r = grid.r_max - grid.r_min;
    let span_z = grid.z_max - grid.z_min;
    let first = count / 2;
    let second = count - first;
    let outboard = [grid.r_max + 0.6 * span_r, grid.z_min + 0.5 * span_z];
    let mut chords = fan_chords(grid, first, outboard, 0.0);
    let top = [grid.r_min + 0.5 * span_r, grid.z_max + 0.6 * span_z];
    let bottom_z = grid.z_min - 0.05 * span_z;
    chords.extend((0..second).map(|k| {
        let r = grid.r_min + span_r * (k as f64 + 0.5) / second as f64;
        Chord {
            start: top,
            end: [r, bottom_z],
            beam_width: 0.0,
        }
    }));
    chords
}
