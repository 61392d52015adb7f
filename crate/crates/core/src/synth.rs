//! Seeded synthetic data: smooth random fields for sweep experiments.
//! Cosine modes keep the normal derivative zero on every face, so the
//! fields are compatible with conormal boundaries.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Field, Grid};

/// Random cosine-mode spatial snapshot with `modes` frequencies per axis
/// and sup-norm of order `amplitude`.
pub fn random_smooth_spatial(grid: &Arc<Grid>, seed: u64, modes: usize, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let mut terms: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut norm = 0.0;
    for _ in 0..(2 * modes) {
        let ks: Vec<usize> = (0..dim).map(|_| rng.gen_range(0..=modes)).collect();
        let decay = 1.0 / (1.0 + ks.iter().map(|&k| (k * k) as f64).sum::<f64>());
        let c = rng.gen_range(-1.0..1.0) * decay;
        norm += c.abs();
        terms.push((c, ks));
    }
    let scale = if norm > 0.0 { amplitude / norm } else { 0.0 };
    let mut out = Vec::with_capacity(grid.n_spatial_nodes());
    for node in 0..grid.n_spatial_nodes() {
        let coords = grid.node_coords(node);
        let mut v = 0.0;
        for (c, ks) in &terms {
            let mut prod = *c;
            for (ax, &k) in ks.iter().enumerate() {
                let lo = grid.axis_coord(ax, 0);
                let hi = grid.axis_coord(ax, grid.axis_cells(ax));
                let s = (coords[ax] - lo) / (hi - lo);
                prod *= (std::f64::consts::PI * k as f64 * s).cos();
            }
            v += prod;
        }
        out.push(scale * v);
    }
    out
}

/// Random smooth space-time field: a spatial cosine profile modulated by a
/// low-degree polynomial in time.
pub fn random_smooth_field(grid: &Arc<Grid>, seed: u64, modes: usize, amplitude: f64) -> Field {
    let snapshot = random_smooth_spatial(grid, seed, modes, amplitude);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let c0 = rng.gen_range(0.5..1.5);
    let c1 = rng.gen_range(-0.5..0.5);
    let c2 = rng.gen_range(-0.25..0.25);
    let t_mid = 0.5 * (grid.time(0) + grid.time(grid.n_levels() - 1));
    let mut values = Vec::with_capacity(snapshot.len() * grid.n_levels());
    for level in 0..grid.n_levels() {
        let t = grid.time(level) - t_mid;
        let factor = c0 + c1 * t + c2 * t * t;
        values.extend(snapshot.iter().map(|v| v * factor));
    }
    Field::from_levels(grid.clone(), values)
}
