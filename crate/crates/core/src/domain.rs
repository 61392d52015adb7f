//! Tensor-product space-time grids on half-boxes, sub-box region selection,
//! node-centered field storage, and even reflection across `{y = 0}`.
//!
//! The half-box `[-L, L]^N × [0, y_max] × [t0, t1]` stands in for the
//! half-cylinder: every estimate measured on it is local, so sub-boxes play
//! the role of the inner cylinders.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// User-facing grid description. `n_x` is the number of x-axes (the spatial
/// dimension N); the y half-axis `[0, y_max]` always carries the weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_x: usize,
    /// half-width of each x-axis: x ∈ [-l, l]
    pub l: f64,
    pub y_max: f64,
    /// cells per x-axis
    pub nx: usize,
    /// cells along y
    pub ny: usize,
    pub t0: f64,
    pub t1: f64,
    /// time steps (levels = nt + 1)
    pub nt: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    /// Coordinate from the index formula directly; no accumulation drift.
    pub fn coord(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / self.cells as f64
    }

    fn nearest(&self, x: f64) -> usize {
        let t = (x - self.lo) / (self.hi - self.lo) * self.cells as f64;
        (t.round().max(0.0) as usize).min(self.cells)
    }
}

/// An immutable tensor grid; share it behind `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_x: usize,
    /// spatial axes: x0..x_{n_x-1} then y
    axes: Vec<Axis>,
    time: Axis,
}

/// Build a grid from its spec. The y-axis starts exactly at `y = 0`, so the
/// characteristic hyperplane is a grid face.
pub fn build_grid(spec: GridSpec) -> Result<Arc<Grid>> {
    if spec.n_x > 0 && spec.nx < 2 {
        return Err(Error::InvalidGrid(format!("nx = {} < 2", spec.nx)));
    }
    if spec.ny < 2 || spec.nt < 2 {
        return Err(Error::InvalidGrid(format!(
            "ny = {}, nt = {} must both be >= 2",
            spec.ny, spec.nt
        )));
    }
    if !(spec.l > 0.0) || !(spec.y_max > 0.0) {
        return Err(Error::InvalidGrid("l and y_max must be positive".into()));
    }
    if !(spec.t0 < spec.t1) {
        return Err(Error::InvalidGrid(format!(
            "need t0 < t1, got [{}, {}]",
            spec.t0, spec.t1
        )));
    }
    let mut axes = Vec::with_capacity(spec.n_x + 1);
    for _ in 0..spec.n_x {
        axes.push(Axis {
            lo: -spec.l,
            hi: spec.l,
            cells: spec.nx,
        });
    }
    axes.push(Axis {
        lo: 0.0,
        hi: spec.y_max,
        cells: spec.ny,
    });
    let grid = Grid {
        n_x: spec.n_x,
        axes,
        time: Axis {
            lo: spec.t0,
            hi: spec.t1,
            cells: spec.nt,
        },
    };
    grid.check_size()?;
    Ok(Arc::new(grid))
}

impl Grid {
    pub(crate) fn from_axes(n_x: usize, axes: Vec<Axis>, time: Axis) -> Result<Arc<Grid>> {
        let g = Grid { n_x, axes, time };
        g.check_size()?;
        Ok(Arc::new(g))
    }

    fn check_size(&self) -> Result<()> {
        let mut nodes: u128 = self.time.nodes() as u128;
        for ax in &self.axes {
            nodes = nodes.saturating_mul(ax.nodes() as u128);
        }
        if nodes > 100_000_000 {
            return Err(Error::GridTooLarge { nodes });
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Number of spatial axes (x-axes plus y).
    pub fn dim(&self) -> usize {
        self.n_x + 1
    }

    pub(crate) fn axis(&self, ax: usize) -> &Axis {
        &self.axes[ax]
    }

    pub(crate) fn time_axis(&self) -> &Axis {
        &self.time
    }

    pub fn axis_nodes(&self, ax: usize) -> usize {
        self.axes[ax].nodes()
    }

    pub fn axis_cells(&self, ax: usize) -> usize {
        self.axes[ax].cells
    }

    pub fn axis_coord(&self, ax: usize, i: usize) -> f64 {
        self.axes[ax].coord(i)
    }

    pub fn spacing(&self, ax: usize) -> f64 {
        self.axes[ax].h()
    }

    /// y-axis index (the last spatial axis).
    pub fn y_axis(&self) -> usize {
        self.n_x
    }

    pub fn y_lo(&self) -> f64 {
        self.axes[self.n_x].lo
    }

    /// True when the grid starts at `y = 0` and carries the Σ face.
    pub fn has_sigma_face(&self) -> bool {
        self.axes[self.n_x].lo == 0.0
    }

    pub fn n_spatial_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.nodes()).product()
    }

    pub fn n_levels(&self) -> usize {
        self.time.nodes()
    }

    pub fn time(&self, level: usize) -> f64 {
        self.time.coord(level)
    }

    pub fn dt(&self) -> f64 {
        self.time.h()
    }

    /// Flat node index; the y index varies fastest.
    pub fn node_flat(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (ax, &i) in multi.iter().enumerate() {
            idx = idx * self.axes[ax].nodes() + i;
        }
        idx
    }

    pub fn node_multi(&self, mut flat: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for ax in (0..self.dim()).rev() {
            let n = self.axes[ax].nodes();
            multi[ax] = flat % n;
            flat /= n;
        }
        multi
    }

    pub fn node_coords(&self, flat: usize) -> Vec<f64> {
        self.node_multi(flat)
            .iter()
            .enumerate()
            .map(|(ax, &i)| self.axes[ax].coord(i))
            .collect()
    }

    /// y-coordinate of a flat node index without materializing the rest.
    pub fn node_y(&self, flat: usize) -> f64 {
        let ny = self.axes[self.n_x].nodes();
        self.axes[self.n_x].coord(flat % ny)
    }

    pub fn n_cells(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn cell_multi(&self, mut flat: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for ax in (0..self.dim()).rev() {
            let n = self.axes[ax].cells;
            multi[ax] = flat % n;
            flat /= n;
        }
        multi
    }

    /// Node indices of the Σ face (`y = 0`), if the grid carries it.
    pub fn sigma_nodes(&self) -> Vec<usize> {
        if !self.has_sigma_face() {
            return Vec::new();
        }
        self.face_nodes(self.y_axis(), false)
    }

    /// The same spatial grid over the first `steps` time steps only.
    pub(crate) fn with_time_prefix(&self, steps: usize) -> Result<Arc<Grid>> {
        let time = Axis {
            lo: self.time.lo,
            hi: self.time.coord(steps),
            cells: steps,
        };
        Grid::from_axes(self.n_x, self.axes.clone(), time)
    }

    /// All nodes with the given index extreme along `ax` (`high = false`
    /// selects index 0).
    pub fn face_nodes(&self, ax: usize, high: bool) -> Vec<usize> {
        let want = if high { self.axes[ax].cells } else { 0 };
        let mut out = Vec::new();
        for flat in 0..self.n_spatial_nodes() {
            if self.node_multi(flat)[ax] == want {
                out.push(flat);
            }
        }
        out
    }
}

/// A sub-box of the grid: inclusive node-index ranges per spatial axis plus
/// an inclusive time-level range.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub(crate) lo: Vec<usize>,
    pub(crate) hi: Vec<usize>,
    pub(crate) t_lo: usize,
    pub(crate) t_hi: usize,
}

impl Region {
    pub fn full(grid: &Grid) -> Region {
        Region {
            lo: vec![0; grid.dim()],
            hi: (0..grid.dim()).map(|ax| grid.axis_cells(ax)).collect(),
            t_lo: 0,
            t_hi: grid.n_levels() - 1,
        }
    }

    /// Snap coordinate ranges to the nearest grid nodes. The y lower bound
    /// must not go below the grid's own.
    pub fn from_coords(
        grid: &Grid,
        x_ranges: &[(f64, f64)],
        y_range: (f64, f64),
        t_range: (f64, f64),
    ) -> Result<Region> {
        if x_ranges.len() != grid.n_x() {
            return Err(Error::OutOfBounds(format!(
                "expected {} x-ranges, got {}",
                grid.n_x(),
                x_ranges.len()
            )));
        }
        let mut lo = Vec::with_capacity(grid.dim());
        let mut hi = Vec::with_capacity(grid.dim());
        let eps_ok = |v: f64, a: f64, b: f64| v >= a - 1e-9 * (b - a) && v <= b + 1e-9 * (b - a);
        for (ax, &(a, b)) in x_ranges
            .iter()
            .chain(std::iter::once(&y_range))
            .enumerate()
        {
            let axis = grid.axis(ax);
            if !eps_ok(a, axis.lo, axis.hi) || !eps_ok(b, axis.lo, axis.hi) || a >= b {
                return Err(Error::OutOfBounds(format!(
                    "axis {ax}: [{a}, {b}] not inside [{}, {}]",
                    axis.lo, axis.hi
                )));
            }
            lo.push(axis.nearest(a));
            hi.push(axis.nearest(b));
        }
        let t = grid.time_axis();
        if !eps_ok(t_range.0, t.lo, t.hi) || !eps_ok(t_range.1, t.lo, t.hi) {
            return Err(Error::OutOfBounds(format!(
                "time range [{}, {}] not inside [{}, {}]",
                t_range.0, t_range.1, t.lo, t.hi
            )));
        }
        Ok(Region {
            lo,
            hi,
            t_lo: t.nearest(t_range.0),
            t_hi: t.nearest(t_range.1),
        })
    }

    /// The sub-box standing in for the parabolic cylinder of relative
    /// radius `r ∈ (0, 1]`: box axes shrink by `r` about their centers
    /// (the y-axis about `y = 0`), the time interval by `r²` about its
    /// center. On the standard surrogate of the unit cylinder this is
    /// exactly `|x_i| ≤ r`, `0 ≤ y ≤ r`, `|t| ≤ r²`.
    pub fn parabolic_cylinder(grid: &Grid, r: f64) -> Result<Region> {
        if !(0.0 < r && r <= 1.0) {
            return Err(Error::OutOfBounds(format!(
                "relative radius must lie in (0, 1], got {r}"
            )));
        }
        let mut xr = Vec::with_capacity(grid.n_x());
        for ax in 0..grid.n_x() {
            let a = grid.axis(ax);
            let c = 0.5 * (a.lo + a.hi);
            let half = 0.5 * (a.hi - a.lo) * r;
            xr.push((c - half, c + half));
        }
        let ya = grid.axis(grid.y_axis());
        let y_range = if ya.lo == 0.0 {
            (0.0, r * ya.hi)
        } else {
            (r * ya.lo, r * ya.hi)
        };
        let t = grid.time_axis();
        let tc = 0.5 * (t.lo + t.hi);
        let th = 0.5 * (t.hi - t.lo) * r * r;
        Region::from_coords(grid, &xr, y_range, (tc - th, tc + th))
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Region {
            lo: self
                .lo
                .iter()
                .zip(&other.lo)
                .map(|(&a, &b)| a.max(b))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&other.hi)
                .map(|(&a, &b)| a.min(b))
                .collect(),
            t_lo: self.t_lo.max(other.t_lo),
            t_hi: self.t_hi.min(other.t_hi),
        }
    }

    pub fn contains_node(&self, multi: &[usize]) -> bool {
        multi
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&i, (&l, &h))| i >= l && i <= h)
    }

    pub fn n_cells_per_axis(&self, ax: usize) -> usize {
        self.hi[ax] - self.lo[ax]
    }

    pub fn time_levels(&self) -> std::ops::RangeInclusive<usize> {
        self.t_lo..=self.t_hi
    }

    /// Flat indices of all spatial nodes inside the region.
    pub fn spatial_node_indices(&self, grid: &Grid) -> Vec<usize> {
        let mut out = Vec::new();
        let mut multi = self.lo.clone();
        loop {
            out.push(grid.node_flat(&multi));
            let mut ax = grid.dim();
            loop {
                if ax == 0 {
                    return out;
                }
                ax -= 1;
                if multi[ax] < self.hi[ax] {
                    multi[ax] += 1;
                    break;
                }
                multi[ax] = self.lo[ax];
            }
        }
    }

    /// Flat indices of all cells fully inside the region.
    pub fn cell_indices(&self, grid: &Grid) -> Vec<usize> {
        let mut out = Vec::new();
        if (0..grid.dim()).any(|ax| self.hi[ax] == self.lo[ax]) {
            return out;
        }
        let mut multi = self.lo.clone();
        loop {
            let mut flat = 0;
            for (ax, &c) in multi.iter().enumerate() {
                flat = flat * grid.axis_cells(ax) + c;
            }
            out.push(flat);
            let mut ax = grid.dim();
            loop {
                if ax == 0 {
                    return out;
                }
                ax -= 1;
                if multi[ax] + 1 < self.hi[ax] {
                    multi[ax] += 1;
                    break;
                }
                multi[ax] = self.lo[ax];
            }
        }
    }

    fn check_in_grid(&self, grid: &Grid) -> Result<()> {
        for ax in 0..grid.dim() {
            if self.hi[ax] > grid.axis_cells(ax) || self.lo[ax] > self.hi[ax] {
                return Err(Error::OutOfBounds(format!(
                    "axis {ax}: nodes [{}, {}] outside grid",
                    self.lo[ax], self.hi[ax]
                )));
            }
        }
        if self.t_hi >= grid.n_levels() || self.t_lo > self.t_hi {
            return Err(Error::OutOfBounds("time levels outside grid".into()));
        }
        Ok(())
    }
}

/// Sign convention for reflecting a field across Σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// Scalars and tangential flux components reflect evenly.
    Even,
    /// The y-component of a flux reflects oddly.
    Odd,
}

/// Space-time nodal samples of a scalar function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>) -> Field {
        let n = grid.n_spatial_nodes() * grid.n_levels();
        Field {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Sample `f(coords, t)` at every space-time node.
    pub fn from_fn<F: Fn(&[f64], f64) -> f64>(grid: Arc<Grid>, f: F) -> Field {
        let ns = grid.n_spatial_nodes();
        let mut values = Vec::with_capacity(ns * grid.n_levels());
        for level in 0..grid.n_levels() {
            let t = grid.time(level);
            for i in 0..ns {
                let v = f(&grid.node_coords(i), t);
                assert!(v.is_finite(), "field sample not finite at node {i}");
                values.push(v);
            }
        }
        Field { grid, values }
    }

    /// Replicate one spatial snapshot across all time levels.
    pub fn from_spatial(grid: Arc<Grid>, snapshot: &[f64]) -> Result<Field> {
        if snapshot.len() != grid.n_spatial_nodes() {
            return Err(Error::FieldMismatch(format!(
                "snapshot has {} values, grid has {} nodes",
                snapshot.len(),
                grid.n_spatial_nodes()
            )));
        }
        let mut values = Vec::with_capacity(snapshot.len() * grid.n_levels());
        for _ in 0..grid.n_levels() {
            values.extend_from_slice(snapshot);
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_levels(grid: Arc<Grid>, values: Vec<f64>) -> Field {
        assert_eq!(values.len(), grid.n_spatial_nodes() * grid.n_levels());
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn level(&self, n: usize) -> &[f64] {
        let ns = self.grid.n_spatial_nodes();
        &self.values[n * ns..(n + 1) * ns]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [f64] {
        let ns = self.grid.n_spatial_nodes();
        &mut self.values[n * ns..(n + 1) * ns]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// Materialize the restriction of the field to a sub-box region.
    pub fn restrict(&self, region: &Region) -> Result<Field> {
        region.check_in_grid(&self.grid)?;
        let g = &self.grid;
        let mut axes = Vec::with_capacity(g.dim());
        for ax in 0..g.dim() {
            if region.hi[ax] == region.lo[ax] {
                return Err(Error::DegenerateRegion(format!("axis {ax} has zero cells")));
            }
            axes.push(Axis {
                lo: g.axis_coord(ax, region.lo[ax]),
                hi: g.axis_coord(ax, region.hi[ax]),
                cells: region.hi[ax] - region.lo[ax],
            });
        }
        if region.t_hi == region.t_lo {
            return Err(Error::DegenerateRegion("zero time steps".into()));
        }
        let time = Axis {
            lo: g.time(region.t_lo),
            hi: g.time(region.t_hi),
            cells: region.t_hi - region.t_lo,
        };
        let sub = Grid::from_axes(g.n_x(), axes, time)?;
        let mut values = Vec::with_capacity(sub.n_spatial_nodes() * sub.n_levels());
        for level in region.t_lo..=region.t_hi {
            let src = self.level(level);
            for flat in 0..sub.n_spatial_nodes() {
                let sub_multi = sub.node_multi(flat);
                let src_multi: Vec<usize> = sub_multi
                    .iter()
                    .zip(&region.lo)
                    .map(|(&i, &l)| i + l)
                    .collect();
                values.push(src[g.node_flat(&src_multi)]);
            }
        }
        Ok(Field {
            grid: sub,
            values,
        })
    }

    /// Extend the field across Σ onto the doubled box `y ∈ [-y_max, y_max]`.
    /// Scalars extend evenly; the caller passes [`Parity::Odd`] for the
    /// y-component of a flux, which flips sign under reflection.
    pub fn even_reflect(&self, parity: Parity) -> Result<Field> {
        let g = &self.grid;
        if !g.has_sigma_face() {
            return Err(Error::FieldMismatch(
                "even_reflect needs a grid starting at y = 0".into(),
            ));
        }
        let ya = g.y_axis();
        let ny = g.axis_cells(ya);
        let mut axes: Vec<Axis> = (0..g.dim()).map(|ax| g.axis(ax).clone()).collect();
        axes[ya] = Axis {
            lo: -g.axis(ya).hi,
            hi: g.axis(ya).hi,
            cells: 2 * ny,
        };
        let doubled = Grid::from_axes(g.n_x(), axes, g.time_axis().clone())?;
        let sign = match parity {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        };
        let mut values = Vec::with_capacity(doubled.n_spatial_nodes() * doubled.n_levels());
        for level in 0..g.n_levels() {
            let src = self.level(level);
            for flat in 0..doubled.n_spatial_nodes() {
                let mut multi = doubled.node_multi(flat);
                let j = multi[ya];
                if j >= ny {
                    multi[ya] = j - ny;
                    values.push(src[g.node_flat(&multi)]);
                } else {
                    multi[ya] = ny - j;
                    values.push(sign * src[g.node_flat(&multi)]);
                }
            }
        }
        Ok(Field {
            grid: doubled,
            values,
        })
    }

    /// CSV dump with header `x0,…,x{N-1},y,t,value`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let g = &self.grid;
        let mut header = String::new();
        for i in 0..g.n_x() {
            header.push_str(&format!("x{i},"));
        }
        header.push_str("y,t,value");
        writeln!(out, "{header}")?;
        for level in 0..g.n_levels() {
            let t = g.time(level);
            let vals = self.level(level);
            for (flat, v) in vals.iter().enumerate() {
                let coords = g.node_coords(flat);
                for c in &coords {
                    write!(out, "{c},")?;
                }
                writeln!(out, "{t},{v}")?;
            }
        }
        Ok(())
    }

    /// Little-endian flat binary layout: magic `WPFB`, u32 version, u32 axis
    /// count (spatial axes then time), then per axis `u64 nodes, f64 lo,
    /// f64 hi`, then all values with t slowest and y fastest.
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        let g = &self.grid;
        out.write_all(b"WPFB")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&((g.dim() + 1) as u32).to_le_bytes())?;
        for ax in 0..g.dim() {
            let a = g.axis(ax);
            out.write_all(&(a.nodes() as u64).to_le_bytes())?;
            out.write_all(&a.lo.to_le_bytes())?;
            out.write_all(&a.hi.to_le_bytes())?;
        }
        let t = g.time_axis();
        out.write_all(&(t.nodes() as u64).to_le_bytes())?;
        out.write_all(&t.lo.to_le_bytes())?;
        out.write_all(&t.hi.to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(input: &mut R) -> Result<Field> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"WPFB" {
            return Err(Error::Parse("bad magic in binary field".into()));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != 1 {
            return Err(Error::Parse("unsupported binary field version".into()));
        }
        input.read_exact(&mut u32buf)?;
        let n_axes = u32::from_le_bytes(u32buf) as usize;
        if n_axes < 2 {
            return Err(Error::Parse("binary field needs y and t axes".into()));
        }
        let mut axes = Vec::with_capacity(n_axes);
        for _ in 0..n_axes {
            let mut u64buf = [0u8; 8];
            input.read_exact(&mut u64buf)?;
            let nodes = u64::from_le_bytes(u64buf) as usize;
            let mut f64buf = [0u8; 8];
            input.read_exact(&mut f64buf)?;
            let lo = f64::from_le_bytes(f64buf);
            input.read_exact(&mut f64buf)?;
            let hi = f64::from_le_bytes(f64buf);
            if nodes < 2 {
                return Err(Error::Parse("axis with fewer than 2 nodes".into()));
            }
            axes.push(Axis {
                lo,
                hi,
                cells: nodes - 1,
            });
        }
        let time = axes.pop().unwrap();
        let n_x = axes.len() - 1;
        let grid = Grid::from_axes(n_x, axes, time)?;
        let count = grid.n_spatial_nodes() * grid.n_levels();
        let mut values = Vec::with_capacity(count);
        let mut f64buf = [0u8; 8];
        for _ in 0..count {
            input.read_exact(&mut f64buf)?;
            values.push(f64::from_le_bytes(f64buf));
        }
        Ok(Field { grid, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> Arc<Grid> {
        build_grid(GridSpec {
            n_x: 1,
            l: 1.0,
            y_max: 1.0,
            nx: 4,
            ny: 4,
            t0: -1.0,
            t1: 1.0,
            nt: 4,
        })
        .unwrap()
    }

    #[test]
    fn node_counts_match_spec_examples() {
        let g = small_grid();
        assert_eq!(g.n_spatial_nodes(), 25);
        assert_eq!(g.n_levels(), 5);

        let g2 = build_grid(GridSpec {
            n_x: 2,
            l: 1.0,
            y_max: 1.0,
            nx: 8,
            ny: 8,
            t0: 0.0,
            t1: 1.0,
            nt: 8,
        })
        .unwrap();
        assert_eq!(g2.n_spatial_nodes(), 81 * 9);
    }

    #[test]
    fn rejects_single_cell_axis() {
        let r = build_grid(GridSpec {
            n_x: 1,
            l: 1.0,
            y_max: 1.0,
            nx: 1,
            ny: 4,
            t0: 0.0,
            t1: 1.0,
            nt: 4,
        });
        assert!(r.is_err());
    }

    #[test]
    fn rejects_oversized_grid() {
        let r = build_grid(GridSpec {
            n_x: 3,
            l: 1.0,
            y_max: 1.0,
            nx: 1000,
            ny: 1000,
            t0: 0.0,
            t1: 1.0,
            nt: 1000,
        });
        assert!(matches!(r, Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn node_coords_reproducible_from_indices() {
        let g = build_grid(GridSpec {
            n_x: 1,
            l: 1.0,
            y_max: 0.7,
            nx: 7,
            ny: 13,
            t0: 0.0,
            t1: 1.0,
            nt: 3,
        })
        .unwrap();
        for j in 0..=13usize {
            assert_eq!(g.axis_coord(1, j), j as f64 * 0.7 / 13.0);
        }
    }

    #[test]
    fn restrict_full_is_identity() {
        let g = small_grid();
        let f = Field::from_fn(g.clone(), |c, t| c[0] + 2.0 * c[1] + t);
        let r = f.restrict(&Region::full(&g)).unwrap();
        assert_eq!(r.values(), f.values());
    }

    #[test]
    fn nested_restrict_equals_intersection() {
        let g = build_grid(GridSpec {
            n_x: 1,
            l: 1.0,
            y_max: 1.0,
            nx: 8,
            ny: 8,
            t0: -1.0,
            t1: 1.0,
            nt: 8,
        })
        .unwrap();
        let f = Field::from_fn(g.clone(), |c, t| c[0] * c[1] + t * t);
        let r1 = Region::from_coords(&g, &[(-0.75, 0.75)], (0.0, 0.75), (-0.75, 0.75)).unwrap();
        let r2 = Region::from_coords(&g, &[(-0.5, 1.0)], (0.25, 1.0), (-1.0, 0.5)).unwrap();
        let nested = f.restrict(&r1).unwrap();
        // r2 in the sub-grid's own index space
        let sub2 = Region {
            lo: r2
                .lo
                .iter()
                .zip(&r1.lo)
                .map(|(&a, &b)| a.max(b) - b)
                .collect(),
            hi: r2
                .hi
                .iter()
                .zip(r1.lo.iter().zip(&r1.hi))
                .map(|(&a, (&b, &h))| a.min(h) - b)
                .collect(),
            t_lo: r2.t_lo.max(r1.t_lo) - r1.t_lo,
            t_hi: r2.t_hi.min(r1.t_hi) - r1.t_lo,
        };
        let twice = nested.restrict(&sub2).unwrap();
        let once = f.restrict(&r1.intersect(&r2)).unwrap();
        assert_eq!(twice.values(), once.values());
    }

    #[test]
    fn restrict_to_annulus_has_expected_range() {
        let g = small_grid();
        let f = Field::from_fn(g.clone(), |c, _| c[1]);
        let r = Region::from_coords(&g, &[(-1.0, 1.0)], (0.5, 1.0), (-1.0, 1.0)).unwrap();
        let sub = f.restrict(&r).unwrap();
        for &v in sub.values() {
            assert!((0.5..=1.0).contains(&v));
        }
    }

    #[test]
    fn reflect_even_and_odd() {
        let g = small_grid();
        let u = Field::from_fn(g.clone(), |c, _| c[1] * c[1]);
        let r = u.even_reflect(Parity::Even).unwrap();
        for flat in 0..r.grid().n_spatial_nodes() {
            let c = r.grid().node_coords(flat);
            assert!((r.level(0)[flat] - c[1] * c[1]).abs() < 1e-14);
        }
        let fy = Field::from_fn(g.clone(), |c, _| c[1]);
        let ro = fy.even_reflect(Parity::Odd).unwrap();
        for flat in 0..ro.grid().n_spatial_nodes() {
            let c = ro.grid().node_coords(flat);
            assert!((ro.level(0)[flat] - c[1]).abs() < 1e-14, "odd reflection of y is y");
        }
        let uy = Field::from_fn(g.clone(), |c, _| c[1]);
        let re = uy.even_reflect(Parity::Even).unwrap();
        for flat in 0..re.grid().n_spatial_nodes() {
            let c = re.grid().node_coords(flat);
            assert!((re.level(0)[flat] - c[1].abs()).abs() < 1e-14, "even reflection of y is |y|");
        }
    }

    #[test]
    fn reflect_then_restrict_is_identity() {
        let g = small_grid();
        let u = Field::from_fn(g.clone(), |c, t| c[0] + c[1] * c[1] + t);
        let r = u.even_reflect(Parity::Even).unwrap();
        let rg = r.grid().clone();
        let upper = Region::from_coords(&rg, &[(-1.0, 1.0)], (0.0, 1.0), (-1.0, 1.0)).unwrap();
        let back = r.restrict(&upper).unwrap();
        assert_eq!(back.values(), u.values());
    }

    #[test]
    fn binary_roundtrip() {
        let g = small_grid();
        let f = Field::from_fn(g, |c, t| c[0] * 3.0 + c[1] - t);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let g2 = Field::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(f.values(), g2.values());
        assert_eq!(f.grid().n_spatial_nodes(), g2.grid().n_spatial_nodes());
    }

    #[test]
    fn csv_header_and_rows() {
        let g = small_grid();
        let f = Field::from_fn(g, |c, t| c[0] + c[1] + t);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,y,t,value");
        assert_eq!(text.lines().count(), 1 + 25 * 5);
    }
}
