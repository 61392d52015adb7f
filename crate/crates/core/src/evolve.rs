//! Time marching for the Cauchy–Dirichlet/conormal problem with a θ-scheme,
//! Steklov averaging, and the a-priori energy estimate check.

use std::borrow::Cow;

use serde::Serialize;

use crate::domain::{Field, Grid, Region};
use crate::error::{Error, Result};
use crate::linalg::{constrain_rhs, pcg, Csr};
use crate::norms::{self, Exponent};
use crate::operator::{
    assemble_load, assemble_mass, assemble_stiffness, BoundaryCondition, CoefficientField,
    SourceData,
};
use crate::weights::WeightSpec;

/// θ-scheme configuration. The A-stable range `θ ∈ [1/2, 1]` is enforced:
/// the degenerate mass entries near Σ make explicit stepping hopeless.
#[derive(Debug, Clone, Copy)]
pub struct EvolveConfig {
    pub theta: f64,
    pub dt: f64,
    /// relative residual target of the inner linear solves
    pub lin_tol: f64,
    pub max_iter: usize,
}

impl EvolveConfig {
    pub fn new(theta: f64, dt: f64, lin_tol: f64) -> Result<EvolveConfig> {
        if !(0.5..=1.0).contains(&theta) {
            return Err(Error::Unsupported(format!(
                "theta must lie in [1/2, 1], got {theta}"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Unsupported(format!("dt must be positive, got {dt}")));
        }
        if !(lin_tol > 0.0 && lin_tol <= 1e-6) {
            return Err(Error::Unsupported(format!(
                "linear tolerance must lie in (0, 1e-6], got {lin_tol}"
            )));
        }
        Ok(EvolveConfig {
            theta,
            dt,
            lin_tol,
            max_iter: 0,
        })
    }

    /// Crank–Nicolson on the grid's own time step.
    pub fn crank_nicolson(grid: &Grid) -> EvolveConfig {
        EvolveConfig::new(0.5, grid.dt(), 1e-10).unwrap()
    }

    /// Backward Euler on the grid's own time step.
    pub fn backward_euler(grid: &Grid) -> EvolveConfig {
        EvolveConfig::new(1.0, grid.dt(), 1e-10).unwrap()
    }

    fn iter_cap(&self, n: usize) -> usize {
        if self.max_iter > 0 {
            self.max_iter
        } else {
            40 * n + 2000
        }
    }
}

/// Source of the coefficient matrix during time stepping. A plain
/// [`CoefficientField`] is static; time-dependent coefficients are sampled
/// at the θ-point of each step.
pub trait CoefficientProvider {
    fn at_time(&self, t: f64) -> Cow<'_, CoefficientField>;
    fn is_static(&self) -> bool {
        true
    }
}

impl CoefficientProvider for CoefficientField {
    fn at_time(&self, _t: f64) -> Cow<'_, CoefficientField> {
        Cow::Borrowed(self)
    }
}

/// A time-dependent coefficient sampled through a closure.
pub struct TimeVaryingCoefficient<F: Fn(f64) -> CoefficientField> {
    pub sample: F,
}

impl<F: Fn(f64) -> CoefficientField> CoefficientProvider for TimeVaryingCoefficient<F> {
    fn at_time(&self, t: f64) -> Cow<'_, CoefficientField> {
        Cow::Owned((self.sample)(t))
    }
    fn is_static(&self) -> bool {
        false
    }
}

/// March `ρ b ∂_t u − div(ρ A∇u) = ρ f + div(ρ F)` over the grid's time
/// levels. Each step solves `(M + θ dt K) u^{n+1} = (M − (1−θ) dt K) u^n +
/// dt (θ load^{n+1} + (1−θ) load^n)`; the mass matrix is symmetric positive
/// definite, so every step is solvable.
///
/// Initial data is the nodal interpolation of `u0`. The optional `b`
/// multiplies the time-derivative mass only.
pub fn solve_ivp_with_mass_factor<C: CoefficientProvider>(
    w: WeightSpec,
    coeff: &C,
    data: &SourceData,
    bc: &BoundaryCondition,
    u0: &[f64],
    cfg: &EvolveConfig,
    b: Option<&[f64]>,
) -> Result<Field> {
    let grid = data.grid().clone();
    let n = grid.n_spatial_nodes();
    if u0.len() != n {
        return Err(Error::FieldMismatch(format!(
            "u0 has {} values, grid has {n} nodes",
            u0.len()
        )));
    }
    if (cfg.dt - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(Error::FieldMismatch(format!(
            "config dt {} does not match the grid step {}",
            cfg.dt,
            grid.dt()
        )));
    }
    let mass = assemble_mass(w, &grid, b)?;
    let dt = grid.dt();
    let theta = cfg.theta;

    // static-coefficient fast path assembles the operators once
    let mut static_ops: Option<(Csr, Csr)> = None;
    if coeff.is_static() {
        let k = assemble_stiffness(w, &coeff.at_time(grid.time(0)), &grid)?;
        let lhs = mass.linear_combination(1.0, &k, theta * dt);
        let rhs_op = mass.linear_combination(1.0, &k, -(1.0 - theta) * dt);
        static_ops = Some((lhs, rhs_op));
    }

    let mut values = Vec::with_capacity(n * grid.n_levels());
    values.extend_from_slice(u0);
    let mut u = u0.to_vec();
    let mut load_prev = assemble_load(w, data, &grid, 0)?;
    for level in 1..grid.n_levels() {
        let (lhs, rhs_op) = match &static_ops {
            Some((l, r)) => (Cow::Borrowed(l), Cow::Borrowed(r)),
            None => {
                let t_theta = grid.time(level - 1) + theta * dt;
                let k = assemble_stiffness(w, &coeff.at_time(t_theta), &grid)?;
                let lhs = mass.linear_combination(1.0, &k, theta * dt);
                let rhs_op = mass.linear_combination(1.0, &k, -(1.0 - theta) * dt);
                (Cow::Owned(lhs), Cow::Owned(rhs_op))
            }
        };
        let load_next = assemble_load(w, data, &grid, level)?;
        let mut rhs = rhs_op.matvec(&u);
        for i in 0..n {
            rhs[i] += dt * (theta * load_next[i] + (1.0 - theta) * load_prev[i]);
        }
        let trace = bc.dirichlet_values(level)?;
        let lhs_c = if bc.has_dirichlet() {
            let mask: Vec<bool> = trace.iter().map(|v| v.is_some()).collect();
            constrain_rhs(&lhs, &mut rhs, &trace);
            Cow::Owned(lhs.constrained(&mask))
        } else {
            lhs
        };
        let out = pcg(&lhs_c, &rhs, &u, cfg.lin_tol, cfg.iter_cap(n))?;
        u = out.x;
        values.extend_from_slice(&u);
        load_prev = load_next;
    }
    Ok(Field::from_levels(grid, values))
}

/// [`solve_ivp_with_mass_factor`] without a time-coefficient factor.
pub fn solve_ivp<C: CoefficientProvider>(
    w: WeightSpec,
    coeff: &C,
    data: &SourceData,
    bc: &BoundaryCondition,
    u0: &[f64],
    cfg: &EvolveConfig,
) -> Result<Field> {
    solve_ivp_with_mass_factor(w, coeff, data, bc, u0, cfg, None)
}

/// Forward Steklov average `u_h(z,t) = (1/h) ∫_t^{t+h} u(z,s) ds` by the
/// trapezoid rule. `h` must be a positive multiple of the grid step; the
/// result lives on the shortened time interval `[t0, t1 - h]`.
pub fn steklov_average(field: &Field, h: f64) -> Result<Field> {
    let grid = field.grid().clone();
    let dt = grid.dt();
    let m = (h / dt).round() as usize;
    if m < 1 || (h - m as f64 * dt).abs() > 1e-9 * dt {
        return Err(Error::Unsupported(format!(
            "window {h} is not a positive multiple of dt = {dt}"
        )));
    }
    let nt = grid.n_levels() - 1;
    if m >= nt {
        return Err(Error::WindowExceedsInterval);
    }
    let sub = grid.with_time_prefix(nt - m)?;
    let n = grid.n_spatial_nodes();
    let mut values = Vec::with_capacity(n * sub.n_levels());
    let inv_h = 1.0 / (m as f64 * dt);
    for start in 0..=(nt - m) {
        for node in 0..n {
            let mut acc = 0.5 * (field.level(start)[node] + field.level(start + m)[node]);
            for k in 1..m {
                acc += field.level(start + k)[node];
            }
            values.push(acc * dt * inv_h);
        }
    }
    Ok(Field::from_levels(sub, values))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    /// `sup_t ‖u(t)‖_{L²(ρ)} + ‖∇u‖_{L²(Q,ρ)}`
    pub lhs: f64,
    /// `‖f‖_{L²(Q,ρ)} + ‖F‖_{L²(Q,ρ)} + ‖u0‖_{L²(ρ)}`
    pub rhs: f64,
    pub ratio: f64,
}

/// Check the a-priori energy estimate for a solution of the homogeneous-
/// Dirichlet problem: the discrete analogue of
/// `‖u‖_{L∞ L²} + ‖u‖_{L² H¹₀} ≤ C (‖f‖ + ‖F‖ + ‖u0‖)`.
pub fn energy_estimate_check(
    u: &Field,
    w: WeightSpec,
    data: &SourceData,
    u0: &[f64],
) -> Result<EnergyReport> {
    let grid = u.grid().clone();
    let region = Region::full(&grid);
    let mut sup_l2 = 0.0f64;
    for level in 0..grid.n_levels() {
        sup_l2 = sup_l2.max(norms::weighted_spatial_norm(
            u,
            level,
            w,
            &region,
            Exponent::P(2.0),
        )?);
    }
    let grad = norms::weighted_gradient_seminorm(u, w, &region)?;
    let lhs = sup_l2 + grad;

    let nf = norms::weighted_norm(&data.f, w, &region, Exponent::P(2.0), false)?;
    let mut flux_sq = 0.0;
    for c in &data.flux {
        let v = norms::weighted_norm(c, w, &region, Exponent::P(2.0), false)?;
        flux_sq += v * v;
    }
    let u0_field = Field::from_spatial(grid.clone(), u0)?;
    let n0 = norms::weighted_spatial_norm(&u0_field, 0, w, &region, Exponent::P(2.0))?;
    let rhs = nf + flux_sq.sqrt() + n0;
    if rhs == 0.0 {
        if lhs > 1e-10 {
            return Err(Error::ZeroRhs { lhs });
        }
        return Ok(EnergyReport {
            lhs,
            rhs,
            ratio: 0.0,
        });
    }
    Ok(EnergyReport {
        lhs,
        rhs,
        ratio: lhs / rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, GridSpec};
    use crate::operator::TraceData;
    use std::sync::Arc;

    fn grid(nx: usize, ny: usize, nt: usize) -> Arc<Grid> {
        build_grid(GridSpec {
            n_x: 1,
            l: 1.0,
            y_max: 1.0,
            nx,
            ny,
            t0: -1.0,
            t1: 1.0,
            nt,
        })
        .unwrap()
    }

    fn w(a: f64, eps: f64) -> WeightSpec {
        WeightSpec::new(a, eps).unwrap()
    }

    #[test]
    fn constants_are_exact_solutions() {
        let g = grid(6, 6, 8);
        let data = SourceData::zeros(g.clone());
        let bc = BoundaryCondition::natural(g.clone());
        let u0 = vec![2.75; g.n_spatial_nodes()];
        let cfg = EvolveConfig::crank_nicolson(&g);
        let u = solve_ivp(w(0.7, 0.0), &CoefficientField::identity(g.clone()), &data, &bc, &u0, &cfg)
            .unwrap();
        for level in 0..g.n_levels() {
            for &v in u.level(level) {
                assert!((v - 2.75).abs() < 1e-9, "constant drifted to {v}");
            }
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let g = grid(5, 5, 6);
        let mut data = SourceData::zeros(g.clone());
        data.f = Field::from_fn(g.clone(), |c, t| c[0] + c[1] * t);
        let bc = BoundaryCondition::outer_dirichlet(g.clone(), TraceData::Zero);
        let u0: Vec<f64> = (0..g.n_spatial_nodes()).map(|i| (i as f64 * 0.37).sin()).collect();
        let cfg = EvolveConfig::crank_nicolson(&g);
        let coeff = CoefficientField::identity(g.clone());
        let a = solve_ivp(w(0.5, 0.2), &coeff, &data, &bc, &u0, &cfg).unwrap();
        let b = solve_ivp(w(0.5, 0.2), &coeff, &data, &bc, &u0, &cfg).unwrap();
        assert_eq!(a.values(), b.values(), "identical inputs must agree bitwise");
    }

    #[test]
    fn quadratic_in_x_linear_in_t_is_time_exact() {
        // u = x² + 2t solves the a-weighted equation with f = F = 0 for any
        // a; θ = 1/2 integrates the linear-in-t part exactly, so all error
        // is spatial.
        let exact = |c: &[f64], t: f64| c[0] * c[0] + 2.0 * t;
        let g = grid(16, 4, 4);
        let data = SourceData::zeros(g.clone());
        let trace = Field::from_fn(g.clone(), exact);
        let bc = BoundaryCondition::natural(g.clone())
            .set_face(0, false, crate::operator::FaceCondition::Dirichlet(TraceData::Samples(trace.clone())))
            .set_face(0, true, crate::operator::FaceCondition::Dirichlet(TraceData::Samples(trace)));
        let u0: Vec<f64> = (0..g.n_spatial_nodes())
            .map(|i| exact(&g.node_coords(i), -1.0))
            .collect();
        let cfg = EvolveConfig::crank_nicolson(&g);
        let u = solve_ivp(w(1.5, 0.0), &CoefficientField::identity(g.clone()), &data, &bc, &u0, &cfg)
            .unwrap();
        let last = g.n_levels() - 1;
        let mut max_err = 0.0f64;
        for (i, &v) in u.level(last).iter().enumerate() {
            max_err = max_err.max((v - exact(&g.node_coords(i), 1.0)).abs());
        }
        assert!(max_err < 2e-4, "spatial error too large: {max_err}");
    }

    #[test]
    fn steklov_average_examples() {
        let g = grid(4, 4, 8);
        // constant in time: average is itself
        let c = Field::from_fn(g.clone(), |co, _| co[0] + co[1]);
        let avg = steklov_average(&c, 2.0 * g.dt()).unwrap();
        for level in 0..avg.grid().n_levels() {
            for (a, b) in avg.level(level).iter().zip(c.level(level)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        // u = t: window [t, t+h] averages to t + h/2, exactly
        let lin = Field::from_fn(g.clone(), |_, t| t);
        let h = 2.0 * g.dt();
        let avg = steklov_average(&lin, h).unwrap();
        for level in 0..avg.grid().n_levels() {
            let t = g.time(level);
            for &v in avg.level(level) {
                assert!((v - (t + 0.5 * h)).abs() < 1e-13, "{v} vs {}", t + 0.5 * h);
            }
        }
    }

    #[test]
    fn steklov_is_linear() {
        let g = grid(3, 3, 6);
        let u = Field::from_fn(g.clone(), |c, t| c[0] * t * t);
        let v = Field::from_fn(g.clone(), |c, t| c[1] - t);
        let h = 2.0 * g.dt();
        let (alpha, beta) = (1.7, -0.4);
        let mut comb = u.clone();
        for (cv, (uv, vv)) in comb
            .values_mut()
            .iter_mut()
            .zip(u.values().iter().zip(v.values()))
        {
            *cv = alpha * uv + beta * vv;
        }
        let lhs = steklov_average(&comb, h).unwrap();
        let su = steklov_average(&u, h).unwrap();
        let sv = steklov_average(&v, h).unwrap();
        for (l, (a, b)) in lhs.values().iter().zip(su.values().iter().zip(sv.values())) {
            assert!((l - (alpha * a + beta * b)).abs() < 1e-13);
        }
    }

    #[test]
    fn steklov_commutes_with_spatial_restriction() {
        let g = grid(6, 6, 8);
        let u = Field::from_fn(g.clone(), |c, t| c[0] * c[1] + t * t - 0.3 * t);
        let h = 2.0 * g.dt();
        let region = |gr: &crate::domain::Grid| {
            Region::from_coords(gr, &[(-0.5, 1.0)], (0.0, 0.5), (gr.time(0), gr.time(gr.n_levels() - 1)))
                .unwrap()
        };
        let a = steklov_average(&u, h).unwrap();
        let ra = a.restrict(&region(a.grid())).unwrap();
        let ru = u.restrict(&region(&g)).unwrap();
        let ar = steklov_average(&ru, h).unwrap();
        assert_eq!(ra.values(), ar.values());
    }

    #[test]
    fn theta_point_sampling_matches_static_path_for_constant_coefficient() {
        let g = grid(5, 5, 6);
        let mut data = SourceData::zeros(g.clone());
        data.f = Field::from_fn(g.clone(), |c, t| c[0] - c[1] * t);
        let bc = BoundaryCondition::outer_dirichlet(g.clone(), TraceData::Zero);
        let u0: Vec<f64> = (0..g.n_spatial_nodes()).map(|i| (i as f64).cos()).collect();
        let cfg = EvolveConfig::crank_nicolson(&g);
        let w0 = w(0.5, 0.1);
        let coeff = CoefficientField::constant(g.clone(), &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let static_path = solve_ivp(w0, &coeff, &data, &bc, &u0, &cfg).unwrap();
        let g2 = g.clone();
        let varying = TimeVaryingCoefficient {
            sample: move |_t: f64| {
                CoefficientField::constant(g2.clone(), &[2.0, 0.3, 0.3, 1.0]).unwrap()
            },
        };
        let sampled_path = solve_ivp(w0, &varying, &data, &bc, &u0, &cfg).unwrap();
        assert_eq!(static_path.values(), sampled_path.values());
    }

    #[test]
    fn steklov_window_must_fit() {
        let g = grid(3, 3, 4);
        let u = Field::zeros(g.clone());
        assert!(matches!(
            steklov_average(&u, 4.0 * g.dt()),
            Err(Error::WindowExceedsInterval)
        ));
    }

    #[test]
    fn energy_zero_data_reports_zero_ratio() {
        let g = grid(4, 4, 4);
        let data = SourceData::zeros(g.clone());
        let u = Field::zeros(g.clone());
        let rep = energy_estimate_check(&u, w(0.5, 0.0), &data, &vec![0.0; g.n_spatial_nodes()])
            .unwrap();
        assert_eq!(rep.ratio, 0.0);
    }

    #[test]
    fn energy_ratio_stable_under_refinement() {
        let run = |n: usize| {
            let g = grid(n, n, n);
            let mut data = SourceData::zeros(g.clone());
            data.f = Field::from_fn(g.clone(), |_, _| 1.0);
            let bc = BoundaryCondition::outer_dirichlet(g.clone(), TraceData::Zero);
            let u0 = vec![0.0; g.n_spatial_nodes()];
            let cfg = EvolveConfig::crank_nicolson(&g);
            let u = solve_ivp(
                w(0.0, 0.0),
                &CoefficientField::identity(g.clone()),
                &data,
                &bc,
                &u0,
                &cfg,
            )
            .unwrap();
            energy_estimate_check(&u, w(0.0, 0.0), &data, &u0).unwrap().ratio
        };
        let r1 = run(8);
        let r2 = run(16);
        assert!(r1.is_finite() && r2.is_finite());
        assert!((r1 - r2).abs() / r1 < 0.1, "ratios {r1} vs {r2} drifted > 10%");
    }

    #[test]
    fn energy_ratio_eps_stable() {
        let mut ratios = Vec::new();
        for eps in [0.0, 0.1, 0.4] {
            let g = grid(10, 10, 10);
            let mut data = SourceData::zeros(g.clone());
            data.f = Field::from_fn(g.clone(), |_, _| 1.0);
            let bc = BoundaryCondition::outer_dirichlet(g.clone(), TraceData::Zero);
            let u0 = vec![0.0; g.n_spatial_nodes()];
            let cfg = EvolveConfig::crank_nicolson(&g);
            let spec = w(0.8, eps);
            let u = solve_ivp(
                spec,
                &CoefficientField::identity(g.clone()),
                &data,
                &bc,
                &u0,
                &cfg,
            )
            .unwrap();
            ratios.push(energy_estimate_check(&u, spec, &data, &u0).unwrap().ratio);
        }
        let max = ratios.iter().cloned().fold(0.0f64, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min <= 2.0, "eps sweep ratios {ratios:?}");
    }

    #[test]
    fn discrete_maximum_principle_smoke() {
        // f = F = 0, Dirichlet data in [0, 1]: interior stays within
        // [−δ_h, 1 + δ_h], δ_h shrinking under refinement
        let overshoot = |n: usize| {
            let g = grid(n, n, n);
            let data = SourceData::zeros(g.clone());
            let trace = Field::from_fn(g.clone(), |c, _| if c[0] > 0.0 { 1.0 } else { 0.0 });
            let bc = BoundaryCondition::outer_dirichlet(g.clone(), TraceData::Samples(trace));
            let u0: Vec<f64> = (0..g.n_spatial_nodes())
                .map(|i| if g.node_coords(i)[0] > 0.0 { 1.0 } else { 0.0 })
                .collect();
            let cfg = EvolveConfig::backward_euler(&g);
            let u = solve_ivp(
                w(0.5, 0.0),
                &CoefficientField::identity(g.clone()),
                &data,
                &bc,
                &u0,
                &cfg,
            )
            .unwrap();
            let mut over = 0.0f64;
            for &v in u.values() {
                over = over.max((v - 1.0).max(0.0)).max((-v).max(0.0));
            }
            over
        };
        let o1 = overshoot(8);
        let o2 = overshoot(16);
        assert!(o2 <= o1.max(1e-12), "overshoot grew: {o1} -> {o2}");
        assert!(o2 < 0.05, "overshoot too large: {o2}");
    }
}
