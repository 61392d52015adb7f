//! Assembly of the weighted weak form
//! `-∫ ρ u ∂_t φ + ∫ ρ A∇u·∇φ = ∫ ρ (f φ - F·∇φ)`
//! into sparse mass/stiffness/load objects on tensor grids, with natural
//! (conormal) or Dirichlet boundary handling.
//!
//! Multilinear elements on tensor cells; the y-direction factor of every
//! cell integral goes through [`crate::weights::cell_moments`], which is
//! exact on cells touching `{y = 0}`. Omitting boundary flux terms on
//! natural faces is exactly how the conormal condition
//! `ρ_ε^a (A∇u + F)·e_{N+1} = 0` is imposed.

use std::sync::Arc;

use crate::domain::{Field, Grid};
use crate::error::{Error, Result};
use crate::linalg::{constrain_rhs, pcg, Csr};
use crate::weights::{self, WeightSpec};

/// Per-node symmetric coefficient matrix with declared ellipticity bounds.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    grid: Arc<Grid>,
    /// node-major, `dim*dim` row-major entries per node
    entries: Vec<f64>,
    lambda: f64,
    big_lambda: f64,
}

impl CoefficientField {
    pub fn identity(grid: Arc<Grid>) -> CoefficientField {
        let d = grid.dim();
        let mut mat = vec![0.0; d * d];
        for i in 0..d {
            mat[i * d + i] = 1.0;
        }
        Self::constant(grid, &mat).expect("identity is elliptic")
    }

    pub fn constant(grid: Arc<Grid>, mat: &[f64]) -> Result<CoefficientField> {
        let d = grid.dim();
        assert_eq!(mat.len(), d * d, "matrix must be dim x dim");
        let n = grid.n_spatial_nodes();
        let mut entries = Vec::with_capacity(n * d * d);
        for _ in 0..n {
            entries.extend_from_slice(mat);
        }
        Self::from_entries(grid, entries)
    }

    /// Sample a matrix-valued function of the spatial coordinates.
    pub fn from_fn<F: Fn(&[f64]) -> Vec<f64>>(grid: Arc<Grid>, f: F) -> Result<CoefficientField> {
        let d = grid.dim();
        let n = grid.n_spatial_nodes();
        let mut entries = Vec::with_capacity(n * d * d);
        for node in 0..n {
            let m = f(&grid.node_coords(node));
            assert_eq!(m.len(), d * d);
            entries.extend_from_slice(&m);
        }
        Self::from_entries(grid, entries)
    }

    /// Validate symmetry and compute eigenvalue bounds at every node.
    pub fn from_entries(grid: Arc<Grid>, entries: Vec<f64>) -> Result<CoefficientField> {
        let d = grid.dim();
        let n = grid.n_spatial_nodes();
        assert_eq!(entries.len(), n * d * d);
        let mut lambda = f64::INFINITY;
        let mut big_lambda = f64::NEG_INFINITY;
        for node in 0..n {
            let m = &entries[node * d * d..(node + 1) * d * d];
            let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
            for i in 0..d {
                for j in (i + 1)..d {
                    if (m[i * d + j] - m[j * d + i]).abs() > 1e-12 * scale {
                        return Err(Error::NotSymmetric { node });
                    }
                }
            }
            let (lo, hi) = sym_eig_bounds(m, d);
            lambda = lambda.min(lo);
            big_lambda = big_lambda.max(hi);
        }
        if !(lambda > 0.0) {
            return Err(Error::EllipticityViolation {
                node: 0,
                lo: lambda,
                hi: big_lambda,
                lambda: 0.0,
                big_lambda: f64::INFINITY,
            });
        }
        Ok(CoefficientField {
            grid,
            entries,
            lambda,
            big_lambda,
        })
    }

    /// Re-declare bounds and verify them nodewise.
    pub fn check_declared_bounds(&self, lambda: f64, big_lambda: f64) -> Result<()> {
        let d = self.grid.dim();
        for node in 0..self.grid.n_spatial_nodes() {
            let (lo, hi) = sym_eig_bounds(self.at(node), d);
            let tol = 1e-10 * big_lambda.max(1.0);
            if lo < lambda - tol || hi > big_lambda + tol {
                return Err(Error::EllipticityViolation {
                    node,
                    lo,
                    hi,
                    lambda,
                    big_lambda,
                });
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.entries[node * d * d..(node + 1) * d * d]
    }

    /// Tightest eigenvalue lower bound over all nodes.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Tightest eigenvalue upper bound over all nodes.
    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }
}

/// Eigenvalue range of a small symmetric matrix by cyclic Jacobi rotations.
pub(crate) fn sym_eig_bounds(mat: &[f64], d: usize) -> (f64, f64) {
    let mut a = [[0.0f64; 4]; 4];
    for i in 0..d {
        for j in 0..d {
            a[i][j] = mat[i * d + j];
        }
    }
    for _ in 0..32 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..d {
        lo = lo.min(a[i][i]);
        hi = hi.max(a[i][i]);
    }
    (lo, hi)
}

/// Right-hand side data: scalar `f` and a flux `F` with one component per
/// spatial axis (x-components first, y-component last).
#[derive(Debug, Clone)]
pub struct SourceData {
    pub f: Field,
    pub flux: Vec<Field>,
}

impl SourceData {
    pub fn zeros(grid: Arc<Grid>) -> SourceData {
        let f = Field::zeros(grid.clone());
        let flux = (0..grid.dim()).map(|_| Field::zeros(grid.clone())).collect();
        SourceData { f, flux }
    }

    pub fn new(f: Field, flux: Vec<Field>) -> Result<SourceData> {
        let grid = f.grid().clone();
        if flux.len() != grid.dim() {
            return Err(Error::FieldMismatch(format!(
                "flux needs {} components, got {}",
                grid.dim(),
                flux.len()
            )));
        }
        for c in &flux {
            if c.grid() != &grid {
                return Err(Error::FieldMismatch("flux component on a different grid".into()));
            }
        }
        Ok(SourceData { f, flux })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.f.grid()
    }

    /// The y-component of `F` sampled on the Σ face, for conormal
    /// diagnostics.
    pub fn sigma_flux_trace(&self, level: usize) -> Vec<f64> {
        let grid = self.grid();
        let fy = &self.flux[grid.y_axis()];
        grid.sigma_nodes()
            .iter()
            .map(|&n| fy.level(level)[n])
            .collect()
    }
}

/// Dirichlet trace values for one face.
#[derive(Debug, Clone)]
pub enum TraceData {
    Zero,
    Constant(f64),
    /// Space-time samples; boundary nodes are read per time level.
    Samples(Field),
}

#[derive(Debug, Clone)]
pub enum FaceCondition {
    /// Natural (conormal) face: no boundary term is assembled.
    Natural,
    Dirichlet(TraceData),
}

/// One condition per half-box face. Face id is `2*axis + high`.
#[derive(Debug, Clone)]
pub struct BoundaryCondition {
    grid: Arc<Grid>,
    faces: Vec<FaceCondition>,
}

impl BoundaryCondition {
    pub fn natural(grid: Arc<Grid>) -> BoundaryCondition {
        let faces = vec![FaceCondition::Natural; 2 * grid.dim()];
        BoundaryCondition { grid, faces }
    }

    /// Dirichlet on every outer face; the Σ face (when the grid carries it)
    /// stays natural.
    pub fn outer_dirichlet(grid: Arc<Grid>, trace: TraceData) -> BoundaryCondition {
        let mut bc = Self::all_dirichlet(grid.clone(), trace);
        if grid.has_sigma_face() {
            bc.faces[2 * grid.y_axis()] = FaceCondition::Natural;
        }
        bc
    }

    pub fn all_dirichlet(grid: Arc<Grid>, trace: TraceData) -> BoundaryCondition {
        let faces = vec![FaceCondition::Dirichlet(trace); 2 * grid.dim()];
        BoundaryCondition { grid, faces }
    }

    pub fn set_face(mut self, axis: usize, high: bool, cond: FaceCondition) -> BoundaryCondition {
        self.faces[2 * axis + high as usize] = cond;
        self
    }

    pub fn face(&self, axis: usize, high: bool) -> &FaceCondition {
        &self.faces[2 * axis + high as usize]
    }

    pub fn has_dirichlet(&self) -> bool {
        self.faces
            .iter()
            .any(|f| matches!(f, FaceCondition::Dirichlet(_)))
    }

    /// Per-node Dirichlet values at a time level (`None` = free dof).
    /// Detects inconsistent trace data where faces share edges.
    pub fn dirichlet_values(&self, level: usize) -> Result<Vec<Option<f64>>> {
        let grid = &self.grid;
        let mut values: Vec<Option<f64>> = vec![None; grid.n_spatial_nodes()];
        for axis in 0..grid.dim() {
            for high in [false, true] {
                let FaceCondition::Dirichlet(trace) = self.face(axis, high) else {
                    continue;
                };
                for node in grid.face_nodes(axis, high) {
                    let g = match trace {
                        TraceData::Zero => 0.0,
                        TraceData::Constant(c) => *c,
                        TraceData::Samples(f) => f.level(level)[node],
                    };
                    match values[node] {
                        Some(prev) if (prev - g).abs() > 1e-12f64 * g.abs().max(1.0) => {
                            return Err(Error::InconsistentTrace {
                                node,
                                lhs: prev,
                                rhs: g,
                            });
                        }
                        _ => values[node] = Some(g),
                    }
                }
            }
        }
        Ok(values)
    }
}

#[derive(Clone, Copy)]
struct AxisTables {
    /// ∫ w β_i β_j
    p: [[f64; 2]; 2],
    /// ∫ w β_i' β_j'
    d: [[f64; 2]; 2],
    /// ∫ w β_i' β_j (derivative on the first index)
    g: [[f64; 2]; 2],
}

fn unweighted_tables(h: f64) -> AxisTables {
    AxisTables {
        p: [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]],
        d: [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]],
        g: [[-0.5, -0.5], [0.5, 0.5]],
    }
}

fn weighted_tables(w: WeightSpec, y0: f64, y1: f64) -> Result<AxisTables> {
    let h = y1 - y0;
    let m = weights::cell_moments(w, y0, y1, 2)?;
    let (m0, m1, m2) = (m[0], m[1], m[2]);
    let int_b0 = m0 - m1;
    let int_b1 = m1;
    Ok(AxisTables {
        p: [[m0 - 2.0 * m1 + m2, m1 - m2], [m1 - m2, m2]],
        d: [
            [m0 / (h * h), -m0 / (h * h)],
            [-m0 / (h * h), m0 / (h * h)],
        ],
        g: [
            [-int_b0 / h, -int_b1 / h],
            [int_b0 / h, int_b1 / h],
        ],
    })
}

struct CellWalker<'a> {
    grid: &'a Grid,
    dim: usize,
    /// per-axis tables for the y column of the current cell
    y_tables: Vec<AxisTables>,
    x_tables: Vec<AxisTables>,
}

impl<'a> CellWalker<'a> {
    fn new(grid: &'a Grid, w: WeightSpec) -> Result<CellWalker<'a>> {
        let dim = grid.dim();
        let ya = grid.y_axis();
        let mut y_tables = Vec::with_capacity(grid.axis_cells(ya));
        for iy in 0..grid.axis_cells(ya) {
            let y0 = grid.axis_coord(ya, iy);
            let y1 = grid.axis_coord(ya, iy + 1);
            y_tables.push(weighted_tables(w, y0, y1)?);
        }
        let x_tables = (0..grid.n_x())
            .map(|ax| unweighted_tables(grid.spacing(ax)))
            .collect();
        Ok(CellWalker {
            grid,
            dim,
            y_tables,
            x_tables,
        })
    }

    fn tables(&self, cell_multi: &[usize]) -> Vec<AxisTables> {
        let mut t = Vec::with_capacity(self.dim);
        for ax in 0..self.grid.n_x() {
            let _ = ax;
            t.push(self.x_tables[ax]);
        }
        t.push(self.y_tables[cell_multi[self.grid.y_axis()]]);
        t
    }

    /// Flat node index of local corner `l` (bit per axis) of the cell.
    fn corner(&self, cell_multi: &[usize], l: usize) -> usize {
        let mut m = Vec::with_capacity(self.dim);
        for (ax, &c) in cell_multi.iter().enumerate() {
            m.push(c + ((l >> ax) & 1));
        }
        self.grid.node_flat(&m)
    }
}

/// Mass matrix `(i,j) -> ∫ ρ_ε^a b φ_i φ_j` over the spatial box. The
/// optional positive factor `b` (nodal samples) covers equations with a
/// coefficient in front of the time derivative.
pub fn assemble_mass(w: WeightSpec, grid: &Grid, b: Option<&[f64]>) -> Result<Csr> {
    if let Some(b) = b {
        assert_eq!(b.len(), grid.n_spatial_nodes());
        let min = b.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::NonPositiveFactor { min });
        }
    }
    let walker = CellWalker::new(grid, w)?;
    let dim = grid.dim();
    let corners = 1usize << dim;
    let mut triplets = Vec::with_capacity(grid.n_cells() * corners * corners);
    for cell in 0..grid.n_cells() {
        let multi = grid.cell_multi(cell);
        let t = walker.tables(&multi);
        let nodes: Vec<usize> = (0..corners).map(|l| walker.corner(&multi, l)).collect();
        let b_cell = match b {
            Some(b) => nodes.iter().map(|&n| b[n]).sum::<f64>() / corners as f64,
            None => 1.0,
        };
        for i in 0..corners {
            for j in i..corners {
                let mut v = b_cell;
                for (ax, tab) in t.iter().enumerate() {
                    v *= tab.p[(i >> ax) & 1][(j >> ax) & 1];
                }
                triplets.push((nodes[i], nodes[j], v));
                if i != j {
                    triplets.push((nodes[j], nodes[i], v));
                }
            }
        }
    }
    Ok(Csr::from_triplets(grid.n_spatial_nodes(), triplets))
}

/// Stiffness matrix `(i,j) -> ∫ ρ_ε^a A∇φ_i·∇φ_j`. The coefficient is
/// averaged over cell corners; the inequality
/// `λ Q_I(u) ≤ Q_A(u) ≤ Λ Q_I(u)` survives the averaging.
pub fn assemble_stiffness(w: WeightSpec, coeff: &CoefficientField, grid: &Grid) -> Result<Csr> {
    assert_eq!(
        coeff.grid().n_spatial_nodes(),
        grid.n_spatial_nodes(),
        "coefficient field on a different grid"
    );
    let walker = CellWalker::new(grid, w)?;
    let dim = grid.dim();
    let corners = 1usize << dim;
    let mut triplets = Vec::with_capacity(grid.n_cells() * corners * corners);
    let mut a_cell = vec![0.0; dim * dim];
    for cell in 0..grid.n_cells() {
        let multi = grid.cell_multi(cell);
        let t = walker.tables(&multi);
        let nodes: Vec<usize> = (0..corners).map(|l| walker.corner(&multi, l)).collect();
        a_cell.iter_mut().for_each(|v| *v = 0.0);
        for &n in &nodes {
            let m = coeff.at(n);
            for (acc, v) in a_cell.iter_mut().zip(m) {
                *acc += v;
            }
        }
        a_cell.iter_mut().for_each(|v| *v /= corners as f64);
        for i in 0..corners {
            for j in i..corners {
                let mut acc = 0.0;
                for alpha in 0..dim {
                    for beta in 0..dim {
                        let a_ab = a_cell[alpha * dim + beta];
                        if a_ab == 0.0 {
                            continue;
                        }
                        let mut prod = a_ab;
                        for (ax, tab) in t.iter().enumerate() {
                            let bi = (i >> ax) & 1;
                            let bj = (j >> ax) & 1;
                            prod *= if ax == alpha && ax == beta {
                                tab.d[bi][bj]
                            } else if ax == alpha {
                                tab.g[bi][bj]
                            } else if ax == beta {
                                tab.g[bj][bi]
                            } else {
                                tab.p[bi][bj]
                            };
                        }
                        acc += prod;
                    }
                }
                triplets.push((nodes[i], nodes[j], acc));
                if i != j {
                    triplets.push((nodes[j], nodes[i], acc));
                }
            }
        }
    }
    Ok(Csr::from_triplets(grid.n_spatial_nodes(), triplets))
}

/// Load vector at one time level: `∫ ρ (f φ_i - F·∇φ_i)` with nodal data
/// interpolated multilinearly. No boundary flux term is added on natural
/// faces.
pub fn assemble_load(w: WeightSpec, data: &SourceData, grid: &Grid, level: usize) -> Result<Vec<f64>> {
    let f = data.f.level(level);
    let flux: Vec<&[f64]> = data.flux.iter().map(|c| c.level(level)).collect();
    assemble_load_slices(w, grid, f, &flux)
}

/// Load assembly from raw per-node slices (one scalar, `dim` flux
/// components).
pub fn assemble_load_slices(
    w: WeightSpec,
    grid: &Grid,
    f: &[f64],
    flux: &[&[f64]],
) -> Result<Vec<f64>> {
    assert_eq!(flux.len(), grid.dim());
    let walker = CellWalker::new(grid, w)?;
    let dim = grid.dim();
    let corners = 1usize << dim;
    let mut load = vec![0.0; grid.n_spatial_nodes()];
    for cell in 0..grid.n_cells() {
        let multi = grid.cell_multi(cell);
        let t = walker.tables(&multi);
        let nodes: Vec<usize> = (0..corners).map(|l| walker.corner(&multi, l)).collect();
        for i in 0..corners {
            let mut acc = 0.0;
            for j in 0..corners {
                // mass term against f
                let mut mv = 1.0;
                for (ax, tab) in t.iter().enumerate() {
                    mv *= tab.p[(i >> ax) & 1][(j >> ax) & 1];
                }
                acc += mv * f[nodes[j]];
                // flux term: -∫ ρ φ_j F_α ∂_α φ_i
                for (alpha, fa) in flux.iter().enumerate() {
                    let fj = fa[nodes[j]];
                    if fj == 0.0 {
                        continue;
                    }
                    let mut gv = 1.0;
                    for (ax, tab) in t.iter().enumerate() {
                        let bi = (i >> ax) & 1;
                        let bj = (j >> ax) & 1;
                        gv *= if ax == alpha {
                            tab.g[bi][bj]
                        } else {
                            tab.p[bi][bj]
                        };
                    }
                    acc -= gv * fj;
                }
            }
            load[nodes[i]] += acc;
        }
    }
    Ok(load)
}

/// Constrain a symmetric system in place: returns the eliminated matrix and
/// rewrites `rhs` with trace couplings moved over.
pub fn apply_dirichlet(a: &Csr, rhs: &mut [f64], values: &[Option<f64>]) -> Csr {
    let mask: Vec<bool> = values.iter().map(|v| v.is_some()).collect();
    let constrained = a.constrained(&mask);
    constrain_rhs(a, rhs, values);
    constrained
}

/// Steady solve `div(ρ A ∇u) + ρ f + div(ρ F) = 0` with the boundary
/// condition set; data is read at time level 0. At least one Dirichlet face
/// is required, otherwise the all-natural stiffness is singular.
pub fn solve_steady(
    w: WeightSpec,
    coeff: &CoefficientField,
    data: &SourceData,
    bc: &BoundaryCondition,
    tol: f64,
) -> Result<Vec<f64>> {
    let grid = data.grid().clone();
    if !bc.has_dirichlet() {
        return Err(Error::Unsupported(
            "steady solve needs at least one Dirichlet face".into(),
        ));
    }
    let k = assemble_stiffness(w, coeff, &grid)?;
    let mut rhs = assemble_load(w, data, &grid, 0)?;
    let values = bc.dirichlet_values(0)?;
    let kc = apply_dirichlet(&k, &mut rhs, &values);
    let out = pcg(&kc, &rhs, &vec![0.0; kc.n()], tol, 40 * kc.n() + 2000)?;
    Ok(out.x)
}
