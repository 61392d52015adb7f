//! Flattening of curved characteristic manifolds: the graph `Γ = {y = φ(x)}`
//! is straightened by `Φ(x,y) = (x, y + φ(x))`, whose unit-determinant
//! Jacobian turns the `δ^a`-weighted problem into a `y^a`-weighted one with
//! transformed coefficients and an extra positive factor `(δ̃/y)^a` in
//! front of the time derivative.
//!
//! The curved domain is discretized only through its flattened image; all
//! tabulated inputs (`φ`, `δ`, coefficients, data) are supplied in
//! flattened coordinates, i.e. already composed with `Φ`.

use std::sync::Arc;

use serde::Deserialize;

use crate::domain::{build_grid, Field, Grid, GridSpec};
use crate::error::{Error, Result};
use crate::evolve::{solve_ivp_with_mass_factor, EvolveConfig};
use crate::norms;
use crate::operator::{BoundaryCondition, CoefficientField, SourceData};
use crate::weights::WeightSpec;

/// Curved-domain description in flattened coordinates. `phi` and its
/// gradient are tabulated on the x-grid; `delta` holds `δ∘Φ` on the
/// spatial nodes of the flat half-grid.
#[derive(Debug, Clone)]
pub struct CurvedDomainSpec {
    pub grid: Arc<Grid>,
    /// weight exponent of `δ^a`
    pub a: f64,
    /// Hölder exponent of the parametrization (logged, not used in math)
    pub alpha: f64,
    /// lower bound for `|∇δ|`
    pub c0: f64,
    /// lower bound for `δ̃/y`
    pub mu: f64,
    /// `φ` per x-node (flat index over the x-axes only)
    pub phi: Vec<f64>,
    /// `∇φ` per x-node, `n_x` components each
    pub phi_grad: Vec<Vec<f64>>,
    /// `δ̃ = δ∘Φ` per spatial node of the flat grid
    pub delta: Vec<f64>,
}

#[derive(Deserialize)]
struct GridSpecFile {
    n_x: usize,
    l: f64,
    y_max: f64,
    nx: usize,
    ny: usize,
    t0: f64,
    t1: f64,
    nt: usize,
}

#[derive(Deserialize)]
struct CurvedSpecFile {
    a: f64,
    alpha: f64,
    c0: f64,
    mu: f64,
    grid: GridSpecFile,
    phi: Vec<f64>,
    phi_grad: Vec<Vec<f64>>,
    delta: Vec<f64>,
}

impl CurvedDomainSpec {
    /// Number of x-grid nodes (the tabulation length of `phi`).
    pub fn n_x_nodes(grid: &Grid) -> usize {
        (0..grid.n_x()).map(|ax| grid.axis_nodes(ax)).product()
    }

    /// x-part flat index of a spatial node.
    pub fn x_index(grid: &Grid, node: usize) -> usize {
        node / grid.axis_nodes(grid.y_axis())
    }

    pub fn new(
        grid: Arc<Grid>,
        a: f64,
        alpha: f64,
        c0: f64,
        mu: f64,
        phi: Vec<f64>,
        phi_grad: Vec<Vec<f64>>,
        delta: Vec<f64>,
    ) -> Result<CurvedDomainSpec> {
        if grid.n_x() == 0 {
            return Err(Error::InvalidGrid(
                "curved flattening needs at least one x-axis".into(),
            ));
        }
        let nxn = Self::n_x_nodes(&grid);
        if phi.len() != nxn || phi_grad.len() != nxn {
            return Err(Error::FieldMismatch(format!(
                "phi tables need {nxn} x-node entries, got {} and {}",
                phi.len(),
                phi_grad.len()
            )));
        }
        if phi_grad.iter().any(|g| g.len() != grid.n_x()) {
            return Err(Error::FieldMismatch(
                "phi gradient entries must have one component per x-axis".into(),
            ));
        }
        if delta.len() != grid.n_spatial_nodes() {
            return Err(Error::FieldMismatch(format!(
                "delta table needs {} node entries, got {}",
                grid.n_spatial_nodes(),
                delta.len()
            )));
        }
        let spec = CurvedDomainSpec {
            grid,
            a,
            alpha,
            c0,
            mu,
            phi,
            phi_grad,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parse the documented structured text format (TOML keys: `a`,
    /// `alpha`, `c0`, `mu`, `[grid]`, `phi`, `phi_grad`, `delta`).
    pub fn from_toml_str(text: &str) -> Result<CurvedDomainSpec> {
        let file: CurvedSpecFile =
            toml::from_str(text).map_err(|e| Error::Parse(format!("curved spec: {e}")))?;
        let grid = build_grid(GridSpec {
            n_x: file.grid.n_x,
            l: file.grid.l,
            y_max: file.grid.y_max,
            nx: file.grid.nx,
            ny: file.grid.ny,
            t0: file.grid.t0,
            t1: file.grid.t1,
            nt: file.grid.nt,
        })?;
        CurvedDomainSpec::new(
            grid, file.a, file.alpha, file.c0, file.mu, file.phi, file.phi_grad, file.delta,
        )
    }

    fn validate(&self) -> Result<()> {
        let grid = &self.grid;
        // φ(0) = 0 and ∇φ(0) = 0 at the x-node nearest the origin
        let mut origin = Vec::with_capacity(grid.n_x());
        for ax in 0..grid.n_x() {
            let cells = grid.axis_cells(ax);
            origin.push(cells / 2);
        }
        let mut xflat = 0;
        for (ax, &i) in origin.iter().enumerate() {
            xflat = xflat * grid.axis_nodes(ax) + i;
        }
        let scale = self.phi.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if self.phi[xflat].abs() > 1e-10 * scale {
            return Err(Error::HypothesisViolation(format!(
                "phi(0) = {} must vanish",
                self.phi[xflat]
            )));
        }
        if self.phi_grad[xflat].iter().any(|g| g.abs() > 1e-10 * scale.max(1.0)) {
            return Err(Error::HypothesisViolation("grad phi(0) must vanish".into()));
        }
        // δ̃ = 0 on Σ, δ̃ > 0 above it, δ̃/y ≥ μ, |∇δ| ≥ c0
        let ya = grid.y_axis();
        let mut min_ratio = f64::INFINITY;
        for node in 0..grid.n_spatial_nodes() {
            let y = grid.node_y(node);
            let d = self.delta[node];
            if y == 0.0 {
                if d.abs() > 1e-12 {
                    return Err(Error::HypothesisViolation(format!(
                        "delta = {d} on the characteristic manifold"
                    )));
                }
                continue;
            }
            if d <= 0.0 {
                return Err(Error::HypothesisViolation(format!(
                    "delta = {d} not positive at y = {y}"
                )));
            }
            min_ratio = min_ratio.min(d / y);
        }
        // extend δ̃/y to y = 0 by the one-sided y-derivative
        let hy = grid.spacing(ya);
        for &node in &grid.sigma_nodes() {
            let up = |k: usize| {
                let mut m = grid.node_multi(node);
                m[ya] = k;
                grid.node_flat(&m)
            };
            let dyd = (-3.0 * self.delta[node] + 4.0 * self.delta[up(1)] - self.delta[up(2)])
                / (2.0 * hy);
            min_ratio = min_ratio.min(dyd);
        }
        if min_ratio < self.mu {
            return Err(Error::MuBoundViolation { min: min_ratio });
        }
        // |∇δ| = |J_Φ^{-T} ∇δ̃| ≥ c0, with ∇δ̃ by finite differences
        let dtilde = Field::from_spatial(grid.clone(), &self.delta)?;
        let grads = norms::gradient(&dtilde);
        for node in 0..grid.n_spatial_nodes() {
            let xi = Self::x_index(grid, node);
            let gphi = &self.phi_grad[xi];
            // J^{-T} = [[I, -∇φ],[0, 1]]: (∇δ)_x = ∇_x δ̃ - ∂_y δ̃ ∇φ,
            // (∇δ)_y = ∂_y δ̃
            let dy = grads[ya].level(0)[node];
            let mut norm_sq = dy * dy;
            for ax in 0..grid.n_x() {
                let gx = grads[ax].level(0)[node] - dy * gphi[ax];
                norm_sq += gx * gx;
            }
            if norm_sq.sqrt() < self.c0 * (1.0 - 1e-6) {
                return Err(Error::HypothesisViolation(format!(
                    "|grad delta| = {} < c0 = {} at node {node}",
                    norm_sq.sqrt(),
                    self.c0
                )));
            }
        }
        Ok(())
    }
}

/// Nodal data of the flattening map `Φ(x,y) = (x, y + φ(x))`.
pub struct FlattenMap {
    grid: Arc<Grid>,
    phi: Vec<f64>,
    phi_grad: Vec<Vec<f64>>,
}

impl FlattenMap {
    /// `Φ` of a flat-grid point.
    pub fn forward(&self, x_index: usize, coords: &[f64]) -> Vec<f64> {
        let mut out = coords.to_vec();
        let ya = self.grid.y_axis();
        out[ya] += self.phi[x_index];
        out
    }

    /// `Φ^{-1}` of a curved point with the same x-part.
    pub fn inverse(&self, x_index: usize, coords: &[f64]) -> Vec<f64> {
        let mut out = coords.to_vec();
        let ya = self.grid.y_axis();
        out[ya] -= self.phi[x_index];
        out
    }

    /// Row-major Jacobian `[[I, 0], [∇φᵀ, 1]]` at one x-node.
    pub fn jacobian(&self, x_index: usize) -> Vec<f64> {
        let d = self.grid.dim();
        let mut j = vec![0.0; d * d];
        for i in 0..d {
            j[i * d + i] = 1.0;
        }
        for (ax, g) in self.phi_grad[x_index].iter().enumerate() {
            j[(d - 1) * d + ax] = *g;
        }
        j
    }

    /// `det J_Φ`: identically one by the unit lower-triangular structure.
    pub fn det(&self, _x_index: usize) -> f64 {
        1.0
    }
}

/// Build the flattening map data; `|det J_Φ| ≡ 1` holds structurally.
pub fn flatten_map(spec: &CurvedDomainSpec) -> FlattenMap {
    FlattenMap {
        grid: spec.grid.clone(),
        phi: spec.phi.clone(),
        phi_grad: spec.phi_grad.clone(),
    }
}

/// The flattened problem: transformed coefficient, time factor, and data.
pub struct FlattenedProblem {
    /// `Ā = (δ̃/y)^a J^{-1} A J^{-T}`, symmetric with recomputed bounds
    pub coeff: CoefficientField,
    /// `b = (δ̃/y)^a` per spatial node
    pub b: Vec<f64>,
    /// `f̄ = (δ̃/y)^a f∘Φ`
    pub f: Field,
    /// `F̄ = (δ̃/y)^a J^{-1} F∘Φ`
    pub flux: Vec<Field>,
}

/// Transform coefficients and data through the flattening. Inputs are
/// tabulated in flattened coordinates: `coeff` holds `A∘Φ`, `f` holds
/// `f∘Φ`, `flux` holds the components of `F∘Φ`.
pub fn transform_problem(
    spec: &CurvedDomainSpec,
    coeff: &CoefficientField,
    f: &Field,
    flux: &[Field],
) -> Result<FlattenedProblem> {
    let grid = spec.grid.clone();
    let d = grid.dim();
    let ya = grid.y_axis();
    let map = flatten_map(spec);

    // b = (δ̃/y)^a, extended to Σ by the one-sided derivative of δ̃
    let hy = grid.spacing(ya);
    let mut b = Vec::with_capacity(grid.n_spatial_nodes());
    for node in 0..grid.n_spatial_nodes() {
        let y = grid.node_y(node);
        let ratio = if y == 0.0 {
            let up = |k: usize| {
                let mut m = grid.node_multi(node);
                m[ya] = k;
                grid.node_flat(&m)
            };
            (-3.0 * spec.delta[node] + 4.0 * spec.delta[up(1)] - spec.delta[up(2)]) / (2.0 * hy)
        } else {
            spec.delta[node] / y
        };
        if !(ratio >= spec.mu * (1.0 - 1e-9)) {
            return Err(Error::MuBoundViolation { min: ratio });
        }
        b.push(ratio.powf(spec.a));
    }

    // Ā = b · J^{-1} (A∘Φ) J^{-T} nodewise
    let mut entries = Vec::with_capacity(grid.n_spatial_nodes() * d * d);
    for node in 0..grid.n_spatial_nodes() {
        let xi = CurvedDomainSpec::x_index(&grid, node);
        let jinv = jacobian_inverse(&map, xi, d);
        let a_mat = coeff.at(node);
        // tmp = J^{-1} A
        let mut tmp = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += jinv[i * d + k] * a_mat[k * d + j];
                }
                tmp[i * d + j] = acc;
            }
        }
        // out = tmp J^{-T}, then scale by b
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += tmp[i * d + k] * jinv[j * d + k];
                }
                entries.push(b[node] * acc);
            }
        }
    }
    // symmetrize exactly against rounding in the two matrix products
    for node in 0..grid.n_spatial_nodes() {
        let base = node * d * d;
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (entries[base + i * d + j] + entries[base + j * d + i]);
                entries[base + i * d + j] = avg;
                entries[base + j * d + i] = avg;
            }
        }
    }
    let coeff_flat = CoefficientField::from_entries(grid.clone(), entries)?;

    // f̄ = b f, F̄ = b J^{-1} F
    let mut f_bar = f.clone();
    for level in 0..grid.n_levels() {
        let vals = f_bar.level_mut(level);
        for (node, v) in vals.iter_mut().enumerate() {
            *v *= b[node];
        }
    }
    let mut flux_bar: Vec<Field> = (0..d).map(|_| Field::zeros(grid.clone())).collect();
    for level in 0..grid.n_levels() {
        for node in 0..grid.n_spatial_nodes() {
            let xi = CurvedDomainSpec::x_index(&grid, node);
            let jinv = jacobian_inverse(&map, xi, d);
            for i in 0..d {
                let mut acc = 0.0;
                for (k, comp) in flux.iter().enumerate() {
                    acc += jinv[i * d + k] * comp.level(level)[node];
                }
                flux_bar[i].level_mut(level)[node] = b[node] * acc;
            }
        }
    }
    Ok(FlattenedProblem {
        coeff: coeff_flat,
        b,
        f: f_bar,
        flux: flux_bar,
    })
}

/// `J^{-1} = [[I, 0], [-∇φᵀ, 1]]`, row-major.
fn jacobian_inverse(map: &FlattenMap, x_index: usize, d: usize) -> Vec<f64> {
    let mut j = map.jacobian(x_index);
    for ax in 0..d - 1 {
        j[(d - 1) * d + ax] = -j[(d - 1) * d + ax];
    }
    j
}

pub struct CurvedSolution {
    /// solution on the flat grid; the curved-domain value at `Φ(node)` is
    /// the nodal value here
    pub field: Field,
    /// max over Γ sample points and levels of `(A∇u + F)·ν`
    pub conormal_residual: f64,
}

/// Solve the curved problem through its flattened image:
/// `b y^a ∂_t u − div(y^a Ā ∇u) = y^a f̄ + div(y^a F̄)` with the mass
/// carrying the factor `b`, then report the curved conormal residual on Γ.
pub fn solve_curved(
    spec: &CurvedDomainSpec,
    coeff: &CoefficientField,
    f: &Field,
    flux: &[Field],
    bc: &BoundaryCondition,
    u0: &[f64],
    cfg: &EvolveConfig,
) -> Result<CurvedSolution> {
    let flat = transform_problem(spec, coeff, f, flux)?;
    let w = WeightSpec::new(spec.a, 0.0)?;
    let data = SourceData::new(flat.f.clone(), flat.flux.clone())?;
    let u = solve_ivp_with_mass_factor(w, &flat.coeff, &data, bc, u0, cfg, Some(&flat.b))?;
    let conormal_residual = curved_conormal_residual(spec, coeff, f.grid(), &u, flux)?;
    Ok(CurvedSolution {
        field: u,
        conormal_residual,
    })
}

/// `(A∇u + F)·ν` on Γ: gradients transform through `J^{-T}`, and the unit
/// outward normal of `{y > φ(x)}` is `(∇φ, -1)/√(1+|∇φ|²)`. Lateral
/// boundary columns are excluded.
pub fn curved_conormal_residual(
    spec: &CurvedDomainSpec,
    coeff: &CoefficientField,
    grid: &Arc<Grid>,
    u: &Field,
    flux: &[Field],
) -> Result<f64> {
    let map = flatten_map(spec);
    let d = grid.dim();
    let grads = norms::gradient(u);
    let mut worst = 0.0f64;
    for level in 0..grid.n_levels() {
        'nodes: for &node in &grid.sigma_nodes() {
            let multi = grid.node_multi(node);
            for ax in 0..grid.n_x() {
                if multi[ax] == 0 || multi[ax] == grid.axis_cells(ax) {
                    continue 'nodes;
                }
            }
            let xi = CurvedDomainSpec::x_index(grid, node);
            let jinv = jacobian_inverse(&map, xi, d);
            // ∇_curved u = J^{-T} ∇_flat ũ
            let mut grad_curved = vec![0.0; d];
            for i in 0..d {
                for (k, gax) in grads.iter().enumerate() {
                    grad_curved[i] += jinv[k * d + i] * gax.level(level)[node];
                }
            }
            let a_mat = coeff.at(node);
            let gphi = &spec.phi_grad[xi];
            let norm = (1.0 + gphi.iter().map(|g| g * g).sum::<f64>()).sqrt();
            let mut resid = 0.0;
            for i in 0..d {
                let mut aflux = flux[i].level(level)[node];
                for k in 0..d {
                    aflux += a_mat[i * d + k] * grad_curved[k];
                }
                let nu = if i == d - 1 { -1.0 } else { gphi[i] } / norm;
                resid += aflux * nu;
            }
            worst = worst.max(resid.abs());
        }
    }
    Ok(worst)
}
