//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use pitomo_core::geometry::{Chord, Grid};
use pitomo_core::nn::{Layer, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cell containing point `(r, z)`, or `None` outside the box. Points on the
/// far edges belong to the last cell.
fn locate(grid: &Grid, r: f64, z: f64) -> Option<(usize, usize)> {
    if r < grid.r_min || r > grid.r_max || z < grid.z_min || z > grid.z_max {
        return None;
    }
    let fr = (r - grid.r_min) / (grid.r_max - grid.r_min) * grid.numr as f64;
    let fz = (z - grid.z_min) / (grid.z_max - grid.z_min) * grid.numz as f64;
    let ir = (fr.floor() as usize).min(grid.numr - 1);
    let iz = (fz.floor() as usize).min(grid.numz - 1);
    Some((iz, ir))
}

/// Midpoint-rule line integral of the cell indicator functions along a
/// zero-width segment, with a step of `step_frac` cell diagonals.
pub fn dense_oracle(grid: &Grid, start: [f64; 2], end: [f64; 2], step_frac: f64) -> Vec<f64> {
    let diag = grid.cell_width().hypot(grid.cell_height());
    let length = (end[0] - start[0]).hypot(end[1] - start[1]);
    let steps = (length / (step_frac * diag)).ceil().max(1.0) as usize;
    let dl = length / steps as f64;
    let mut plane = vec![0.0; grid.num_cells()];
    for k in 0..steps {
        let t = (k as f64 + 0.5) / steps as f64;
        let r = start[0] + t * (end[0] - start[0]);
        let z = start[1] + t * (end[1] - start[1]);
        if let Some((iz, ir)) = locate(grid, r, z) {
            plane[iz * grid.numr + ir] += dl;
        }
    }
    plane
}

/// Length of the segment inside one axis-aligned box, by clipping the
/// segment against each of the four half-planes.
pub fn clipped_length(start: [f64; 2], end: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        let d = end[axis] - start[axis];
        if d == 0.0 {
            if start[axis] < lo[axis] || start[axis] > hi[axis] {
                return 0.0;
            }
            continue;
        }
        let a = (lo[axis] - start[axis]) / d;
        let b = (hi[axis] - start[axis]) / d;
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t1 <= t0 {
        return 0.0;
    }
    (t1 - t0) * (end[0] - start[0]).hypot(end[1] - start[1])
}

/// Exact per-cell lengths computed cell by cell.
pub fn cellwise_oracle(grid: &Grid, start: [f64; 2], end: [f64; 2]) -> Vec<f64> {
    let mut plane = vec![0.0; grid.num_cells()];
    for iz in 0..grid.numz {
        for ir in 0..grid.numr {
            let lo = [
                grid.r_min + ir as f64 * grid.cell_width(),
                grid.z_min + iz as f64 * grid.cell_height(),
            ];
            let hi = [lo[0] + grid.cell_width(), lo[1] + grid.cell_height()];
            plane[iz * grid.numr + ir] = clipped_length(start, end, lo, hi);
        }
    }
    plane
}

/// Endpoints of the `k`-th of `count` parallel sub-rays spread uniformly
/// across the beam width.
pub fn subray(chord: &Chord, k: usize, count: usize) -> ([f64; 2], [f64; 2]) {
    let (dr, dz) = (chord.end[0] - chord.start[0], chord.end[1] - chord.start[1]);
    let len = dr.hypot(dz);
    let normal = [-dz / len, dr / len];
    let off = chord.beam_width * ((k as f64 + 0.5) / count as f64 - 0.5);
    (
        [chord.start[0] + off * normal[0], chord.start[1] + off * normal[1]],
        [chord.end[0] + off * normal[0], chord.end[1] + off * normal[1]],
    )
}

/// Beam-averaged oracle: mean of per-sub-ray oracles.
pub fn beam_oracle(
    grid: &Grid,
    chord: &Chord,
    subrays: usize,
    line: impl Fn(&Grid, [f64; 2], [f64; 2]) -> Vec<f64>,
) -> Vec<f64> {
    let count = if chord.beam_width == 0.0 { 1 } else { subrays };
    let mut acc = vec![0.0; grid.num_cells()];
    for k in 0..count {
        let (s, e) = subray(chord, k, count);
        for (a, v) in acc.iter_mut().zip(line(grid, s, e)) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    acc
}

pub fn random_grid(rng: &mut impl Rng) -> Grid {
    let r_min = rng.gen_range(-2.0..2.0);
    let z_min = rng.gen_range(-2.0..2.0);
    Grid::new(
        r_min,
        r_min + rng.gen_range(0.5..3.0),
        z_min,
        z_min + rng.gen_range(0.5..3.0),
        rng.gen_range(2..40),
        rng.gen_range(2..40),
    )
    .unwrap()
}

/// A chord whose endpoints lie in a box 50% larger than the grid, so most
/// cross it and some miss.
pub fn random_chord(grid: &Grid, rng: &mut impl Rng, beam: bool) -> Chord {
    let (w, h) = (grid.r_max - grid.r_min, grid.z_max - grid.z_min);
    let point = |rng: &mut dyn rand::RngCore| {
        [
            grid.r_min - 0.25 * w + rng.gen_range(0.0..1.5) * w,
            grid.z_min - 0.25 * h + rng.gen_range(0.0..1.5) * h,
        ]
    };
    let start = point(rng);
    let end = point(rng);
    let width = if beam { rng.gen_range(0.0..0.2) * grid.cell_width() } else { 0.0 };
    Chord::new(start, end, width).unwrap()
}

/// Largest componentwise difference scaled by the larger of the two vectors'
/// max-norms.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    rel_diff_with_floor(a, b, 0.0)
}

/// Relative gradient error, except that a gradient which vanishes
/// identically (a bias feeding batch normalization) only has to show a
/// finite-difference estimate at roundoff level.
pub fn gradient_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let an_max = analytic.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let fd_max = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if an_max <= 1e-12 && fd_max <= 1e-7 {
        return 0.0;
    }
    max_rel_diff(analytic, fd)
}

pub fn rel_diff_with_floor(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(floor, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Worst relative mismatch between analytic and central-difference
/// gradients of `Σ r ⊙ layer(x)` over the input and every parameter.
/// At most `max_coords` coordinates per tensor are probed.
pub fn layer_gradient_error(
    layer: &mut dyn Layer<f64>,
    x: &Tensor<f64>,
    seed: u64,
    max_coords: usize,
) -> f64 {
    const H: f64 = 1e-6;
    let mut rng = rng(seed);
    let out = layer.forward(x);
    let r = random_tensor(out.shape(), &mut rng);
    let objective = |layer: &mut dyn Layer<f64>, x: &Tensor<f64>| -> f64 {
        let y = layer.forward(x);
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };

    let mut params = Vec::new();
    layer.params_mut(&mut params);
    params.into_iter().for_each(|p| p.zero_grad());
    layer.forward(x);
    let grad_x = layer.backward(&r);
    let mut analytic_params: Vec<Vec<f64>> = Vec::new();
    {
        let mut ps = Vec::new();
        layer.params(&mut ps);
        for p in ps {
            analytic_params.push(p.grad.data().to_vec());
        }
    }

    let mut worst: f64 = 0.0;
    let probe = |len: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        if len <= max_coords {
            (0..len).collect()
        } else {
            (0..max_coords).map(|_| rng.gen_range(0..len)).collect()
        }
    };

    let idx = probe(x.len(), &mut rng);
    let mut fd = Vec::new();
    let mut an = Vec::new();
    for &i in &idx {
        let mut xp = x.clone();
        xp.data_mut()[i] += H;
        let fp = objective(layer, &xp);
        xp.data_mut()[i] -= 2.0 * H;
        let fm = objective(layer, &xp);
        fd.push((fp - fm) / (2.0 * H));
        an.push(grad_x.data()[i]);
    }
    worst = worst.max(gradient_error(&an, &fd));

    for (pi, analytic) in analytic_params.iter().enumerate() {
        let idx = probe(analytic.len(), &mut rng);
        let mut fd = Vec::new();
        let mut an = Vec::new();
        for &i in &idx {
            let shift = |layer: &mut dyn Layer<f64>, delta: f64| {
                let mut ps = Vec::new();
                layer.params_mut(&mut ps);
                ps.into_iter().nth(pi).unwrap().value.data_mut()[i] += delta;
            };
            shift(layer, H);
            let fp = objective(layer, x);
            shift(layer, -2.0 * H);
            let fm = objective(layer, x);
            shift(layer, H);
            fd.push((fp - fm) / (2.0 * H));
            an.push(analytic[i]);
        }
        worst = worst.max(gradient_error(&an, &fd));
    }
    worst
}

/// Worst discrepancies of `trace_chord` on `count` random zero-width chords,
/// each on its own random grid.
#[derive(Debug, Clone, Copy)]
pub struct OracleErrors {
    /// Per-cell error against the dense oracle, over max(oracle, cell diagonal).
    pub cell: f64,
    /// Row-sum error against the dense oracle, relative.
    pub row_sum: f64,
    /// Per-cell error against the exact cell-by-cell clipping.
    pub exact: f64,
}

pub fn dense_oracle_errors(seed: u64, count: usize) -> OracleErrors {
    let mut rng = rng(seed);
    let mut e = OracleErrors { cell: 0.0, row_sum: 0.0, exact: 0.0 };
    for _ in 0..count {
        let grid = random_grid(&mut rng);
        let chord = random_chord(&grid, &mut rng, false);
        let plane = pitomo_core::geometry::trace_chord(&grid, &chord);
        let dense = dense_oracle(&grid, chord.start, chord.end, 1e-4);
        let exact = cellwise_oracle(&grid, chord.start, chord.end);
        let diag = grid.cell_width().hypot(grid.cell_height());
        for ((a, d), x) in plane.iter().zip(&dense).zip(&exact) {
            if *a != 0.0 || *d != 0.0 {
                e.cell = e.cell.max((a - d).abs() / d.max(diag));
            }
            e.exact = e.exact.max((a - x).abs() / x.abs().max(diag));
        }
        let (sa, sd): (f64, f64) = (plane.iter().sum(), dense.iter().sum());
        if sa != 0.0 || sd != 0.0 {
            e.row_sum = e.row_sum.max((sa - sd).abs() / sd.max(sa));
        }
    }
    e
}
