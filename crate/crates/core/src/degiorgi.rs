//! Caccioppoli inequality measurement, the De Giorgi truncation-energy
//! ledger with its explicit level/radius sequences, and the L²→L∞ bound
//! ratio.
//!
//! Everything here is measurement over computed solutions: no attempt is
//! made to recover the theory's implicit constants analytically; only
//! measured ratios and their stability across sweeps are reported.

use std::io::Write;

use serde::Serialize;

use crate::domain::{Field, Region};
use crate::error::{Error, Result};
use crate::norms::{self, Exponent, WeightedQuadrature};
use crate::operator::SourceData;
use crate::weights::WeightSpec;

/// `γ' = (N + 3 + a⁺)/2`, the Hölder conjugate of the parabolic Sobolev
/// exponent γ.
pub fn gamma_prime(n: usize, a: f64) -> f64 {
    (n as f64 + 3.0 + a.max(0.0)) / 2.0
}

/// `γ̄ = min(1/γ' − 1/p, 1/γ' − 2/q)`; positive exactly when
/// `p > (N+3+a⁺)/2` and `q > N+3+a⁺`.
pub fn gamma_bar(n: usize, a: f64, p: f64, q: f64) -> f64 {
    let gp = gamma_prime(n, a);
    (1.0 / gp - 1.0 / p).min(1.0 / gp - 2.0 / q)
}

/// Which truncation to measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// the field itself
    None,
    /// `(u - k)_+`
    Positive(f64),
    /// `(u - k)_-`
    Negative(f64),
}

fn truncate(values: &[f64], t: Truncation) -> Vec<f64> {
    match t {
        Truncation::None => values.to_vec(),
        Truncation::Positive(k) => values.iter().map(|&v| (v - k).max(0.0)).collect(),
        Truncation::Negative(k) => values.iter().map(|&v| (k - v).max(0.0)).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaccioppoliReport {
    /// `esssup_t ∫ ρ v²` over the inner cylinder (max over time levels)
    pub sup_term: f64,
    /// `∫_{Q_inner} ρ |∇v|²`
    pub gradient_term: f64,
    pub lhs: f64,
    /// `(r - r')^{-2} ∫_{Q_outer} ρ v²`
    pub rhs_mass: f64,
    /// `‖f‖_{L^p} ‖v‖_{L^{p'}}` over the outer cylinder
    pub rhs_data: f64,
    /// `∫_{Q_outer} ρ |F|² χ_{v > 0}`
    pub rhs_flux: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// both sides vanished; ratio reported as zero
    pub zero_data: bool,
}

/// Measure the Caccioppoli inequality
/// `esssup ∫ρv² + ∫ρ|∇v|² ≤ C [ (r-r')^{-2} ∫ρv² + ‖f‖‖v‖ + ∫ρ|F|²χ ]`
/// between the relative cylinders `r_inner < r_outer`. The indicator is
/// evaluated nodally with threshold exactly zero.
pub fn caccioppoli_check(
    u: &Field,
    w: WeightSpec,
    data: &SourceData,
    r_inner: f64,
    r_outer: f64,
    truncation: Truncation,
    p: f64,
) -> Result<CaccioppoliReport> {
    if !(0.0 < r_inner && r_inner < r_outer && r_outer <= 1.0) {
        return Err(Error::OutOfBounds(format!(
            "need 0 < r' < r <= 1, got r' = {r_inner}, r = {r_outer}"
        )));
    }
    if p < 2.0 {
        return Err(Error::HypothesisViolation(format!("p must be >= 2, got {p}")));
    }
    let grid = u.grid().clone();
    let inner = Region::parabolic_cylinder(&grid, r_inner)?;
    let outer = Region::parabolic_cylinder(&grid, r_outer)?;
    let mut v = u.clone();
    for level in 0..grid.n_levels() {
        let tv = truncate(u.level(level), truncation);
        v.level_mut(level).copy_from_slice(&tv);
    }

    // esssup over discrete time levels of the inner spatial integral
    let mut sup_term = 0.0f64;
    for level in inner.time_levels() {
        let n = norms::weighted_spatial_norm(&v, level, w, &inner, Exponent::P(2.0))?;
        sup_term = sup_term.max(n * n);
    }
    let grad = norms::weighted_gradient_seminorm(&v, w, &inner)?;
    let gradient_term = grad * grad;
    let lhs = sup_term + gradient_term;

    let vm = norms::weighted_norm(&v, w, &outer, Exponent::P(2.0), false)?;
    let rhs_mass = vm * vm / ((r_outer - r_inner) * (r_outer - r_inner));
    let fp = norms::weighted_norm(&data.f, w, &outer, Exponent::P(p), false)?;
    let p_conj = p / (p - 1.0);
    let vpc = norms::weighted_norm(&v, w, &outer, Exponent::P(p_conj), false)?;
    let rhs_data = fp * vpc;

    // nodal indicator of {v > 0}, threshold exactly zero
    let any_support = v.values().iter().any(|&x| x > 0.0);
    let rhs_flux = if any_support {
        let quad = WeightedQuadrature::new(&grid, w)?;
        let mut per_level = Vec::new();
        for level in outer.time_levels() {
            let mask: Vec<f64> = v
                .level(level)
                .iter()
                .map(|&x| if x > 0.0 { 1.0 } else { 0.0 })
                .collect();
            let masked: Vec<Vec<f64>> = data
                .flux
                .iter()
                .map(|c| {
                    c.level(level)
                        .iter()
                        .zip(&mask)
                        .map(|(f, m)| f * m)
                        .collect()
                })
                .collect();
            let slices: Vec<&[f64]> = masked.iter().map(|m| m.as_slice()).collect();
            per_level.push(quad.spatial_integral(&slices, &outer, |vals, _| {
                vals.iter().map(|x| x * x).sum()
            }));
        }
        norms::trapezoid(&per_level, grid.dt())
    } else {
        0.0
    };

    let rhs = rhs_mass + rhs_data + rhs_flux;
    if rhs == 0.0 {
        if lhs > 1e-12 {
            return Err(Error::ZeroRhs { lhs });
        }
        return Ok(CaccioppoliReport {
            sup_term,
            gradient_term,
            lhs,
            rhs_mass,
            rhs_data,
            rhs_flux,
            rhs,
            ratio: 0.0,
            zero_data: true,
        });
    }
    Ok(CaccioppoliReport {
        sup_term,
        gradient_term,
        lhs,
        rhs_mass,
        rhs_data,
        rhs_flux,
        rhs,
        ratio: lhs / rhs,
        zero_data: false,
    })
}

/// The truncation-energy ledger: levels `C_j = 1 - 2^{-j}` increasing to 1,
/// radii `r_j = 1/2 + 2^{-j-1}` decreasing to 1/2, and energies
/// `E_j = ∫_{Q_{r_j}} ρ (u - C_j)_+²`.
#[derive(Debug, Clone, Serialize)]
pub struct DeGiorgiLedger {
    pub levels: Vec<f64>,
    pub radii: Vec<f64>,
    pub energies: Vec<f64>,
    pub gamma_prime: f64,
    pub gamma_bar: f64,
    /// geometric mean of the successive nonzero energy ratios; zero when
    /// the energies vanish outright
    pub fitted_contraction: f64,
    /// present when `E_0 ≤ δ`: whether `E_J ≤ E_0·2^{-J}` held
    pub small_energy_certified: Option<bool>,
}

#[derive(Debug, Clone, Copy)]
pub struct LedgerOptions {
    pub depth: usize,
    pub delta: f64,
}

impl Default for LedgerOptions {
    /// Depth 8: the 2^{-8} level gaps reach discretization noise on
    /// 128-cell grids.
    fn default() -> Self {
        LedgerOptions {
            depth: 8,
            delta: 1e-3,
        }
    }
}

/// Run the ledger for a solution with caller-normalized data
/// (`‖f‖_{L^p} + ‖F‖_{L^q} ≤ 1`).
pub fn degiorgi_ledger(
    u: &Field,
    w: WeightSpec,
    data: &SourceData,
    p: f64,
    q: f64,
    opts: LedgerOptions,
) -> Result<DeGiorgiLedger> {
    let grid = u.grid().clone();
    let full = Region::full(&grid);
    let nf = norms::weighted_norm(&data.f, w, &full, Exponent::P(p), false)?;
    let mut flux_sq = 0.0;
    for c in &data.flux {
        let v = norms::weighted_norm(c, w, &full, Exponent::P(q), false)?;
        flux_sq += v * v;
    }
    let data_norm = nf + flux_sq.sqrt();
    if data_norm > 1.0 + 1e-9 {
        return Err(Error::NonNormalizedData { norm: data_norm });
    }
    let n = grid.n_x();
    let mut levels = Vec::with_capacity(opts.depth + 1);
    let mut radii = Vec::with_capacity(opts.depth + 1);
    let mut energies = Vec::with_capacity(opts.depth + 1);
    for j in 0..=opts.depth {
        let c_j = 1.0 - 0.5f64.powi(j as i32);
        let r_j = 0.5 + 0.5f64.powi(j as i32 + 1);
        let region = Region::parabolic_cylinder(&grid, r_j)?;
        let mut v = u.clone();
        for level in 0..grid.n_levels() {
            let tv = truncate(u.level(level), Truncation::Positive(c_j));
            v.level_mut(level).copy_from_slice(&tv);
        }
        let e = norms::weighted_norm(&v, w, &region, Exponent::P(2.0), false)?;
        levels.push(c_j);
        radii.push(r_j);
        energies.push(e * e);
    }
    let mut ratios = Vec::new();
    for jj in 0..opts.depth {
        if energies[jj] > 0.0 && energies[jj + 1] > 0.0 {
            ratios.push(energies[jj + 1] / energies[jj]);
        }
    }
    let fitted_contraction = if energies[opts.depth] == 0.0 {
        0.0
    } else if ratios.is_empty() {
        1.0
    } else {
        (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp()
    };
    let small_energy_certified = if energies[0] <= opts.delta * (1.0 + 1e-9) {
        Some(energies[opts.depth] <= energies[0] * 0.5f64.powi(opts.depth as i32) + 1e-300)
    } else {
        None
    };
    Ok(DeGiorgiLedger {
        levels,
        radii,
        energies,
        gamma_prime: gamma_prime(n, w.a()),
        gamma_bar: gamma_bar(n, w.a(), p, q),
        fitted_contraction,
        small_energy_certified,
    })
}

impl DeGiorgiLedger {
    /// CSV rows `j, C_j, r_j, E_j`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "j,C_j,r_j,E_j")?;
        for j in 0..self.levels.len() {
            writeln!(
                out,
                "{j},{},{},{}",
                self.levels[j], self.radii[j], self.energies[j]
            )?;
        }
        Ok(())
    }
}

/// `‖u‖_{L∞(Q_{1/2})} / (‖u‖_{L²(Q_1,ρ)} + ‖f‖_{L^p} + ‖F‖_{L^q})` under
/// the theorem hypotheses `p > (N+3+a⁺)/2`, `q > N+3+a⁺`. Invariant under
/// joint scaling of `(u, f, F)`.
pub fn linf_bound_ratio(
    u: &Field,
    w: WeightSpec,
    data: &SourceData,
    p: f64,
    q: f64,
) -> Result<f64> {
    let grid = u.grid().clone();
    let n = grid.n_x();
    let gp = gamma_prime(n, w.a());
    if p <= gp {
        return Err(Error::HypothesisViolation(format!(
            "need p > (N+3+a+)/2 = {gp}, got p = {p}"
        )));
    }
    if q <= 2.0 * gp {
        return Err(Error::HypothesisViolation(format!(
            "need q > N+3+a+ = {}, got q = {q}",
            2.0 * gp
        )));
    }
    let inner = Region::parabolic_cylinder(&grid, 0.5)?;
    let full = Region::full(&grid);
    let sup = norms::weighted_norm(u, w, &inner, Exponent::Infinity, false)?;
    let l2 = norms::weighted_norm(u, w, &full, Exponent::P(2.0), false)?;
    let nf = norms::weighted_norm(&data.f, w, &full, Exponent::P(p), false)?;
    let mut flux_sq = 0.0;
    for c in &data.flux {
        let v = norms::weighted_norm(c, w, &full, Exponent::P(q), false)?;
        flux_sq += v * v;
    }
    let denom = l2 + nf + flux_sq.sqrt();
    if denom == 0.0 {
        if sup > 0.0 {
            return Err(Error::ZeroRhs { lhs: sup });
        }
        return Ok(0.0);
    }
    Ok(sup / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, Grid, GridSpec};
    use crate::weights;
    use std::sync::Arc;

    fn q1_grid(n: usize, nt: usize) -> Arc<Grid> {
        build_grid(GridSpec {
            n_x: 1,
            l: 1.0,
            y_max: 1.0,
            nx: n,
            ny: n,
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
    fn gamma_prime_examples() {
        assert_eq!(gamma_prime(1, 0.0), 2.0);
        let gb = gamma_bar(1, 0.0, 5.0, 9.0);
        assert!((gb - 5.0 / 18.0).abs() < 1e-14, "got {gb}");
        assert!(gamma_bar(2, 0.5, 10.0, 20.0) > 0.0);
        assert!(gamma_bar(2, 0.5, 2.0, 20.0) < 0.0);
    }

    #[test]
    fn gamma_prime_conjugate_to_parabolic_gamma() {
        // 1/γ + 1/γ' = 1 for 20 (N, a) pairs within the Sobolev hypotheses
        let mut count = 0;
        for n in [1usize, 2, 3, 4] {
            for a in [-0.5, 0.3, 0.9, 1.7, 3.2] {
                if n == 1 && a <= 0.0 {
                    continue;
                }
                let g = weights::parabolic_gamma(n, a).unwrap();
                let gp = gamma_prime(n, a);
                assert!((1.0 / g + 1.0 / gp - 1.0).abs() < 1e-13, "N={n}, a={a}");
                count += 1;
            }
        }
        assert!(count >= 18);
    }

    #[test]
    fn truncation_algebra() {
        let vals = [-2.0, -0.5, 0.0, 0.3, 1.7];
        let k = 0.25;
        let plus = truncate(&vals, Truncation::Positive(k));
        let minus = truncate(&vals, Truncation::Negative(k));
        for (i, &v) in vals.iter().enumerate() {
            assert_eq!(plus[i] + minus[i], (v - k).abs());
            assert_eq!(plus[i] * minus[i], 0.0);
        }
    }

    #[test]
    fn caccioppoli_zero_field_flags_zero_data() {
        let g = q1_grid(8, 8);
        let u = Field::zeros(g.clone());
        let data = SourceData::zeros(g.clone());
        let rep = caccioppoli_check(&u, w(0.5, 0.0), &data, 0.5, 1.0, Truncation::None, 2.0)
            .unwrap();
        assert!(rep.zero_data);
        assert_eq!(rep.ratio, 0.0);
    }

    #[test]
    fn caccioppoli_constant_field_has_no_gradient_term() {
        let g = q1_grid(8, 8);
        let u = Field::from_fn(g.clone(), |_, _| 3.0);
        let data = SourceData::zeros(g.clone());
        let rep = caccioppoli_check(&u, w(0.5, 0.0), &data, 0.5, 1.0, Truncation::None, 2.0)
            .unwrap();
        assert!(rep.gradient_term < 1e-20);
        assert!(rep.rhs_data == 0.0 && rep.rhs_flux == 0.0);
        assert!(rep.ratio.is_finite() && rep.ratio > 0.0);
        // sup term is c²·weighted volume of the inner ball slice
        assert!(rep.sup_term > 0.0);
    }

    #[test]
    fn ledger_vanishes_for_small_fields() {
        let g = q1_grid(8, 8);
        let u = Field::from_fn(g.clone(), |c, _| 0.4 * c[1]);
        let data = SourceData::zeros(g.clone());
        let led = degiorgi_ledger(&u, w(0.0, 0.0), &data, 4.0, 8.0, LedgerOptions::default())
            .unwrap();
        // u <= 0.4 < C_1 = 1/2, so all truncated energies beyond j = 0 vanish
        for j in 1..led.energies.len() {
            assert_eq!(led.energies[j], 0.0, "E_{j} should vanish");
        }
        assert!(led.energies[0] > 0.0);
    }

    #[test]
    fn ledger_levels_and_radii_follow_the_formulas() {
        let g = q1_grid(8, 8);
        let u = Field::zeros(g.clone());
        let data = SourceData::zeros(g.clone());
        let led = degiorgi_ledger(&u, w(0.0, 0.0), &data, 4.0, 8.0, LedgerOptions::default())
            .unwrap();
        for j in 0..=8usize {
            assert_eq!(led.levels[j], 1.0 - 0.5f64.powi(j as i32));
            assert_eq!(led.radii[j], 0.5 + 0.5f64.powi(j as i32 + 1));
        }
        // levels increase to 1, radii decrease to 1/2
        assert!(led.levels.windows(2).all(|p| p[0] < p[1]));
        assert!(led.radii.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn ledger_energies_nonincreasing() {
        let g = q1_grid(10, 10);
        let u = Field::from_fn(g.clone(), |c, t| {
            1.4 * (1.0 - c[0] * c[0]) * (1.0 - 0.3 * c[1]) * (1.0 - 0.1 * t)
        });
        let data = SourceData::zeros(g.clone());
        let led = degiorgi_ledger(&u, w(0.5, 0.1), &data, 4.0, 8.0, LedgerOptions::default())
            .unwrap();
        for j in 0..led.energies.len() - 1 {
            assert!(
                led.energies[j + 1] <= led.energies[j] + 1e-15,
                "E_{} = {} < E_{} = {}",
                j,
                led.energies[j],
                j + 1,
                led.energies[j + 1]
            );
        }
    }

    #[test]
    fn ledger_rejects_unnormalized_data() {
        let g = q1_grid(6, 6);
        let u = Field::zeros(g.clone());
        let mut data = SourceData::zeros(g.clone());
        data.f = Field::from_fn(g.clone(), |_, _| 10.0);
        assert!(matches!(
            degiorgi_ledger(&u, w(0.0, 0.0), &data, 4.0, 8.0, LedgerOptions::default()),
            Err(Error::NonNormalizedData { .. })
        ));
    }

    #[test]
    fn ledger_csv_has_expected_rows() {
        let g = q1_grid(6, 6);
        let u = Field::zeros(g.clone());
        let data = SourceData::zeros(g.clone());
        let led = degiorgi_ledger(&u, w(0.0, 0.0), &data, 4.0, 8.0, LedgerOptions::default())
            .unwrap();
        let mut buf = Vec::new();
        led.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("j,C_j,r_j,E_j"));
    }

    #[test]
    fn linf_ratio_of_unit_field() {
        // u ≡ 1, f = F = 0, a = 0: ratio = 1/‖1‖_{L²(Q)} = |Q|^{-1/2}
        let g = q1_grid(8, 8);
        let u = Field::from_fn(g.clone(), |_, _| 1.0);
        let data = SourceData::zeros(g.clone());
        let r = linf_bound_ratio(&u, w(0.0, 0.0), &data, 4.0, 8.0).unwrap();
        assert!((r - 0.5).abs() < 1e-12, "|Q| = 4, got {r}");
    }

    #[test]
    fn linf_ratio_scale_invariant() {
        let g = q1_grid(8, 8);
        let u = Field::from_fn(g.clone(), |c, t| c[0] + c[1] * t + 0.5);
        let mut data = SourceData::zeros(g.clone());
        data.f = Field::from_fn(g.clone(), |c, _| c[1]);
        let base = linf_bound_ratio(&u, w(0.5, 0.0), &data, 4.0, 8.0).unwrap();
        for s in [0.125f64, 3.0, 1024.0] {
            let mut us = u.clone();
            us.scale(s);
            let mut ds = SourceData::zeros(g.clone());
            ds.f = data.f.clone();
            ds.f.scale(s);
            let r = linf_bound_ratio(&us, w(0.5, 0.0), &ds, 4.0, 8.0).unwrap();
            assert!((r - base).abs() <= 1e-12 * base, "s = {s}: {r} vs {base}");
        }
    }

    #[test]
    fn linf_ratio_enforces_hypotheses() {
        let g = q1_grid(6, 6);
        let u = Field::from_fn(g.clone(), |_, _| 1.0);
        let data = SourceData::zeros(g.clone());
        assert!(matches!(
            linf_bound_ratio(&u, w(0.0, 0.0), &data, 1.5, 8.0),
            Err(Error::HypothesisViolation(_))
        ));
        assert!(matches!(
            linf_bound_ratio(&u, w(0.0, 0.0), &data, 4.0, 3.0),
            Err(Error::HypothesisViolation(_))
        ));
    }
}
