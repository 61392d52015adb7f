//! The ε-approximation pipeline: regularized right-hand sides, ε-sweeps
//! measuring `u_ε → u` away from Σ, and ε-stability reports for the
//! parabolic Hölder estimates.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{Field, Grid, Region};
use crate::error::{Error, Result};
use crate::evolve::{solve_ivp, EvolveConfig};
use crate::norms::{self, Exponent, PairSampling};
use crate::operator::{BoundaryCondition, CoefficientField, SourceData};
use crate::weights::{eval_weight, WeightSpec};

/// Regularized data `(f_ε, F_ε)` for the ε-problem. For `a > 0` the
/// nodewise multipliers are `(|y|^a/ρ_ε^a)^{1/p}` for `f` and
/// `(|y|^a/ρ_ε^a)^{1/q}` for `F` (value 0 at `y = 0`), which preserve the
/// weighted data norms: `‖f_ε‖_{L^p(ρ_ε^a)} = ‖f‖_{L^p(|y|^a)}`. For
/// `a ≤ 0` the data is unchanged.
pub fn regularized_data(
    a: f64,
    f: &Field,
    flux: &[Field],
    eps: f64,
    p: f64,
    q: f64,
) -> Result<(Field, Vec<Field>)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidWeight(format!(
            "regularized data needs eps in (0,1), got {eps}"
        )));
    }
    if a <= 0.0 {
        return Ok((f.clone(), flux.to_vec()));
    }
    let w = WeightSpec::new(a, eps)?;
    let grid = f.grid().clone();
    let multiplier = |y: f64, power: f64| -> f64 {
        if y == 0.0 {
            0.0
        } else {
            (y.abs().powf(a) / eval_weight(w, y).unwrap()).powf(power)
        }
    };
    let apply = |src: &Field, power: f64| -> Field {
        let mut dst = src.clone();
        for level in 0..grid.n_levels() {
            let vals = dst.level_mut(level);
            for node in 0..grid.n_spatial_nodes() {
                vals[node] *= multiplier(grid.node_y(node), power);
            }
        }
        dst
    };
    let f_eps = apply(f, 1.0 / p);
    let flux_eps = flux.iter().map(|c| apply(c, 1.0 / q)).collect();
    Ok((f_eps, flux_eps))
}

/// Regularized initial data `u_{0,ε} = (|y|^a/ρ_ε^a)^{1/2} u_0` for
/// `a > 0`; unchanged otherwise.
pub fn regularized_initial(a: f64, u0: &[f64], eps: f64, grid: &Grid) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidWeight(format!(
            "regularized data needs eps in (0,1), got {eps}"
        )));
    }
    if a <= 0.0 {
        return Ok(u0.to_vec());
    }
    let w = WeightSpec::new(a, eps)?;
    Ok(u0
        .iter()
        .enumerate()
        .map(|(node, &v)| {
            let y = grid.node_y(node);
            if y == 0.0 {
                0.0
            } else {
                v * (y.abs().powf(a) / eval_weight(w, y).unwrap()).sqrt()
            }
        })
        .collect())
}

/// One conormal problem instance, solvable at any regularization level.
/// Solving at `ε > 0` runs the regularized-data construction first; `ε = 0`
/// is always solved directly against the exact weighted quadrature.
#[derive(Clone)]
pub struct WeightedProblem {
    pub a: f64,
    pub coeff: CoefficientField,
    pub data: SourceData,
    pub bc: BoundaryCondition,
    pub u0: Vec<f64>,
    pub cfg: EvolveConfig,
    /// data-norm exponents, also the Hölder gate inputs
    pub p: f64,
    pub q: f64,
}

impl WeightedProblem {
    pub fn grid(&self) -> &Arc<Grid> {
        self.data.grid()
    }

    /// Solve at one regularization level; `eps = 0` uses the original data.
    ///
    /// Only the right-hand sides go through the regularized-data
    /// construction. The analogous `(|y|^a/ρ_ε^a)^{1/2}` multiplier on the
    /// initial data (see [`regularized_initial`]) is not applied here: it
    /// kinks `u0` at the grid scale next to Σ, which the θ-scheme carries
    /// as a spurious oscillation that would contaminate every sweep
    /// measurement.
    pub fn solve(&self, eps: f64) -> Result<(Field, SourceData)> {
        let w = WeightSpec::new(self.a, eps)?;
        let data = if eps > 0.0 {
            let (f, flux) =
                regularized_data(self.a, &self.data.f, &self.data.flux, eps, self.p, self.q)?;
            SourceData::new(f, flux)?
        } else {
            self.data.clone()
        };
        let u = solve_ivp(w, &self.coeff, &data, &self.bc, &self.u0, &self.cfg)?;
        Ok((u, data))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    /// `‖u_ε − u_0‖` in the L²-in-time H¹-in-space norm over `{y ≥ y0}`
    pub difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub a: f64,
    pub y0: f64,
    pub rows: Vec<SweepRow>,
    /// nonincreasing along shrinking eps, up to 5% noise
    pub monotone: bool,
    pub final_difference: f64,
}

/// Solve the problem across `eps_list` (sorted descending) plus `ε = 0`,
/// and measure `‖u_ε − u_0‖_{L²_t H¹_z}` on the away-region `{y ≥ y0}`.
/// Per-ε solves run concurrently; the report order is the input order.
pub fn eps_sweep(
    problem: &WeightedProblem,
    eps_list: &[f64],
    y0: f64,
) -> Result<ConvergenceReport> {
    let grid = problem.grid().clone();
    let hy = grid.spacing(grid.y_axis());
    if y0 < 2.0 * hy {
        return Err(Error::OutOfBounds(format!(
            "away-region threshold y0 = {y0} must be at least two grid cells ({})",
            2.0 * hy
        )));
    }
    for pair in eps_list.windows(2) {
        if pair[1] >= pair[0] {
            return Err(Error::Unsupported("eps_list must be sorted descending".into()));
        }
    }
    let (baseline, _) = problem.solve(0.0)?;
    let solutions: Vec<Result<Field>> = eps_list
        .par_iter()
        .map(|&eps| problem.solve(eps).map(|(u, _)| u))
        .collect();
    let mut away_hi = vec![];
    for ax in 0..grid.n_x() {
        away_hi.push((grid.axis_coord(ax, 0), grid.axis_coord(ax, grid.axis_cells(ax))));
    }
    let region = Region::from_coords(
        &grid,
        &away_hi,
        (y0, grid.axis_coord(grid.y_axis(), grid.axis_cells(grid.y_axis()))),
        (grid.time(0), grid.time(grid.n_levels() - 1)),
    )?;
    let w0 = WeightSpec::new(0.0, 0.0)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for (i, sol) in solutions.into_iter().enumerate() {
        let u_eps = sol?;
        let mut diff = u_eps.clone();
        for (d, b) in diff.values_mut().iter_mut().zip(baseline.values()) {
            *d -= b;
        }
        let v = norms::weighted_norm(&diff, w0, &region, Exponent::P(2.0), true)?;
        rows.push(SweepRow {
            eps: eps_list[i],
            difference: v,
        });
    }
    let mut monotone = true;
    for pair in rows.windows(2) {
        if pair[1].difference > pair[0].difference * 1.05 + 1e-14 {
            monotone = false;
        }
    }
    let final_difference = rows.last().map(|r| r.difference).unwrap_or(0.0);
    Ok(ConvergenceReport {
        a: problem.a,
        y0,
        rows,
        monotone,
        final_difference,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub eps: f64,
    /// Hölder norm of the solution over the inner half-region
    pub holder_norm: f64,
    /// `‖u‖_{L²} + ‖f‖_{L^p} + data term` (`‖F‖_{L^q}` at order 0,
    /// `‖F‖_{C^{0,α}}` at order 1)
    pub data_norm: f64,
    pub ratio: f64,
    /// max over Σ of `(A∇u + F)·e_y`, reported at order 1
    pub conormal_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub a: f64,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub order: u8,
    /// the gate values the hypotheses imposed on alpha
    pub alpha_gate: f64,
    pub rows: Vec<StabilityRow>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `max_ratio / min_ratio ≤ stability_factor` over the sweep
    pub stable: bool,
    pub stability_factor: f64,
}

/// Gate check for the Hölder estimate hypotheses; returns the largest
/// admissible α.
pub fn holder_gate(n: usize, a: f64, p: f64, q: f64, order: u8) -> Result<f64> {
    if n == 0 {
        return Err(Error::HypothesisViolation(
            "Hölder gates need at least one x-dimension".into(),
        ));
    }
    let bar = n as f64 + 3.0 + a.max(0.0);
    if order == 0 {
        if p <= bar / 2.0 {
            return Err(Error::HypothesisViolation(format!(
                "gate p > (N+3+a+)/2 = {} failed: p = {p}",
                bar / 2.0
            )));
        }
        if q <= bar {
            return Err(Error::HypothesisViolation(format!(
                "gate q > N+3+a+ = {bar} failed: q = {q}"
            )));
        }
        Ok((2.0 - bar / p).min(1.0 - bar / q).min(1.0))
    } else {
        if p <= bar {
            return Err(Error::HypothesisViolation(format!(
                "gate p > N+3+a+ = {bar} failed: p = {p}"
            )));
        }
        // the first-order window is open: α < 1 − (N+3+a⁺)/p
        Ok((1.0 - bar / p).min(1.0))
    }
}

/// Max over Σ nodes and time levels of the conormal flux
/// `(A∇u + F)·e_{N+1}`, with the one-sided second-order y-derivative.
pub fn conormal_face_residual(
    u: &Field,
    coeff: &CoefficientField,
    data: &SourceData,
) -> Result<f64> {
    let grid = u.grid().clone();
    if !grid.has_sigma_face() {
        return Err(Error::FieldMismatch("no Σ face on this grid".into()));
    }
    let grads = norms::gradient(u);
    let d = grid.dim();
    let ya = grid.y_axis();
    let mut worst = 0.0f64;
    for level in 0..grid.n_levels() {
        for &node in &grid.sigma_nodes() {
            let mat = coeff.at(node);
            let mut flux = data.flux[ya].level(level)[node];
            for (ax, gax) in grads.iter().enumerate() {
                flux += mat[ya * d + ax] * gax.level(level)[node];
            }
            worst = worst.max(flux.abs());
        }
    }
    Ok(worst)
}

/// Per-ε Hölder stability: solve, measure the `C^{k,α}` norm over the
/// inner half-region, and compare against the data norms the theorems use.
/// The (p, q, α) gates are enforced up front.
pub fn holder_stability_report(
    problem: &WeightedProblem,
    eps_list: &[f64],
    alpha: f64,
    order: u8,
    stability_factor: f64,
) -> Result<StabilityReport> {
    let grid = problem.grid().clone();
    let gate = holder_gate(grid.n_x(), problem.a, problem.p, problem.q, order)?;
    let gate_ok = if order == 0 { alpha <= gate + 1e-12 } else { alpha < gate };
    if !(alpha > 0.0 && alpha < 1.0 && gate_ok) {
        return Err(Error::HypothesisViolation(format!(
            "alpha = {alpha} violates the admissible window (0, {gate}{}",
            if order == 0 { "]" } else { ")" }
        )));
    }
    let inner = Region::parabolic_cylinder(&grid, 0.5)?;
    let full = Region::full(&grid);
    let sampling = PairSampling::default();
    let solves: Vec<Result<(Field, SourceData)>> =
        eps_list.par_iter().map(|&eps| problem.solve(eps)).collect();
    let mut rows = Vec::with_capacity(eps_list.len());
    for (i, solved) in solves.into_iter().enumerate() {
        let (u, data_eps) = solved?;
        let eps = eps_list[i];
        let w = WeightSpec::new(problem.a, eps)?;
        let rep = norms::holder_seminorm(&u, alpha, &inner, order, &sampling)?;
        let l2 = norms::weighted_norm(&u, w, &full, Exponent::P(2.0), false)?;
        let fp = norms::weighted_norm(&data_eps.f, w, &full, Exponent::P(problem.p), false)?;
        let data_term = if order == 0 {
            let mut flux_sq = 0.0;
            for c in &data_eps.flux {
                let v = norms::weighted_norm(c, w, &full, Exponent::P(problem.q), false)?;
                flux_sq += v * v;
            }
            flux_sq.sqrt()
        } else {
            let mut sum = 0.0;
            for c in &data_eps.flux {
                sum += norms::holder_seminorm(c, alpha, &full, 0, &sampling)?.norm;
            }
            sum
        };
        let data_norm = l2 + fp + data_term;
        let conormal_residual = if order >= 1 {
            Some(conormal_face_residual(&u, &problem.coeff, &data_eps)?)
        } else {
            None
        };
        let ratio = if data_norm > 0.0 { rep.norm / data_norm } else { 0.0 };
        rows.push(StabilityRow {
            eps,
            holder_norm: rep.norm,
            data_norm,
            ratio,
            conormal_residual,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let stable = max_ratio.is_finite() && max_ratio <= stability_factor * min_ratio;
    Ok(StabilityReport {
        a: problem.a,
        alpha,
        p: problem.p,
        q: problem.q,
        order,
        alpha_gate: gate,
        rows,
        max_ratio,
        min_ratio,
        stable,
        stability_factor,
    })
}

/// File stem embedding the sweep parameters, for report catalogs.
pub fn report_stem(kind: &str, a: f64, alpha: Option<f64>, p: f64, q: f64) -> String {
    match alpha {
        Some(al) => format!("{kind}_a{a}_alpha{al}_p{p}_q{q}"),
        None => format!("{kind}_a{a}_p{p}_q{q}"),
    }
}

/// Emit a serializable report as pretty JSON.
pub fn write_json<T: Serialize, W: Write>(report: &T, out: &mut W) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Parse(format!("json: {e}")))?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

impl ConvergenceReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "eps,difference")?;
        for r in &self.rows {
            writeln!(out, "{},{}", r.eps, r.difference)?;
        }
        Ok(())
    }
}

impl StabilityReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "eps,holder_norm,data_norm,ratio,conormal_residual")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.eps,
                r.holder_norm,
                r.data_norm,
                r.ratio,
                r.conormal_residual.map(|v| v.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}
