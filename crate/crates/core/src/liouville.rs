//! The explicit solution family `g_i`, its asymptotic constants, the
//! conjugate-weight transform `v = ρ_ε^a ∂_y u`, and growth-exponent
//! fitting on expanding parabolic regions.
//!
//! The family satisfies `ρ_ε^{-a} ∂_y(ρ_ε^a ∂_y g_i) = g_{i-2}` with the
//! conventions `g_0 ≡ 1`, `g_{-1} ≡ 0`; `g_2(y) + t` is the canonical
//! caloric model solution near the hyperplane.

use std::io::Write;

use serde::Serialize;

use crate::domain::{Field, Region};
use crate::error::{Error, Result};
use crate::norms;
use crate::operator::{assemble_mass, assemble_stiffness, CoefficientField};
use crate::weights::{eval_weight, WeightSpec};

/// `b_i = Π_{m=1}^{i} 1/(2m (2m - 1 + a))`: the coefficient of `y^{2i}` in
/// the large-y asymptotics of `g_{2i}`. Requires `a > -1`.
pub fn asymptotic_constant(a: f64, i: usize) -> Result<f64> {
    if !(a > -1.0) {
        return Err(Error::HypothesisViolation(format!(
            "asymptotic constants need a > -1, got {a}"
        )));
    }
    if i == 0 {
        return Err(Error::Unsupported("b_i is defined for i >= 1".into()));
    }
    let mut b = 1.0;
    for m in 1..=i {
        b /= 2.0 * m as f64 * (2.0 * m as f64 - 1.0 + a);
    }
    Ok(b)
}

enum Closed {
    /// `c · y^{pow}`
    Power { c: f64, pow: f64 },
    /// `ln y` (the `a = 1`, `i = 1` branch; not normalized at the origin)
    Log,
    /// member does not exist for this weight (odd index, `a ≥ 1`, ε = 0)
    Unavailable(String),
}

enum Tabulation {
    /// exact closed forms, one per member (ε = 0)
    Closed(Vec<Closed>),
    /// Runge–Kutta tabulation of the coupled system (ε > 0)
    Sampled {
        ys: Vec<f64>,
        /// per member: values at the tabulation nodes
        g: Vec<Vec<f64>>,
        /// per member: `H_i = ρ^a g_i'` at the nodes (exact derivatives)
        h: Vec<Vec<f64>>,
    },
}

/// Tabulated family `g_1 .. g_m` for one weight.
pub struct GFamily {
    w: WeightSpec,
    m: usize,
    y_max: f64,
    tab: Tabulation,
    /// members that could not be normalized to vanish at the origin
    /// (the logarithmic branch)
    pub log_branch: Vec<usize>,
}

impl GFamily {
    /// Build the family up to index `m` on `[0, y_max]`.
    ///
    /// At ε = 0 the members are closed forms: `g_{2i} = b_i y^{2i}` exactly
    /// and `g_{2i+1} = d_i y^{2i+1-a}`; the `a = 1` case of `g_1` is the
    /// flagged logarithmic branch. Odd members do not exist (vanishing at
    /// the origin) for `a ≥ 1` at ε = 0. At ε > 0 the coupled system
    /// `g_i' = ρ^{-a} H_i`, `H_i' = ρ^a g_{i-2}` is integrated to relative
    /// tolerance 1e-10.
    pub fn new(w: WeightSpec, m: usize, y_max: f64, nodes: usize) -> Result<GFamily> {
        assert!(m >= 1 && y_max > 0.0 && nodes >= 8);
        let a = w.a();
        if w.eps() == 0.0 {
            if !(a > -1.0) {
                return Err(Error::NonIntegrable { a });
            }
            let mut closed = Vec::with_capacity(m);
            let mut log_branch = Vec::new();
            for i in 1..=m {
                if i % 2 == 0 {
                    let k = i / 2;
                    closed.push(Closed::Power {
                        c: asymptotic_constant(a, k)?,
                        pow: i as f64,
                    });
                } else if i == 1 && a == 1.0 {
                    closed.push(Closed::Log);
                    log_branch.push(1);
                } else if a >= 1.0 {
                    closed.push(Closed::Unavailable(format!(
                        "odd family member g_{i} does not vanish at the origin for a = {a} >= 1 at eps = 0"
                    )));
                } else {
                    // g_{2k+1} = d_k y^{2k+1-a}, d_0 = 1/(1-a),
                    // d_k = d_{k-1} / (2k (2k+1-a))
                    let k = (i - 1) / 2;
                    let mut d = 1.0 / (1.0 - a);
                    for j in 1..=k {
                        d /= 2.0 * j as f64 * (2.0 * j as f64 + 1.0 - a);
                    }
                    closed.push(Closed::Power {
                        c: d,
                        pow: i as f64 - a,
                    });
                }
            }
            return Ok(GFamily {
                w,
                m,
                y_max,
                tab: Tabulation::Closed(closed),
                log_branch,
            });
        }
        // eps > 0: integrate the coupled first-order system
        let tab = integrate_family(w, m, y_max, nodes)?;
        Ok(GFamily {
            w,
            m,
            y_max,
            tab,
            log_branch: Vec::new(),
        })
    }

    pub fn weight(&self) -> WeightSpec {
        self.w
    }

    pub fn max_index(&self) -> usize {
        self.m
    }

    /// Evaluate `g_i(y)`. Within the tabulation only; negative `y` goes
    /// through the parity `g_i(-y) = (-1)^i g_i(y)`.
    pub fn eval(&self, i: usize, y: f64) -> Result<f64> {
        if i == 0 {
            return Ok(1.0);
        }
        if !(1<= i && i <= self.m) {
            return Err(Error::Unsupported(format!(
                "index {i} outside the built family 1..={}",
                self.m
            )));
        }
        let sign = if y < 0.0 && i % 2 == 1 { -1.0 } else { 1.0 };
        let ya = y.abs();
        if ya > self.y_max * (1.0 + 1e-12) {
            return Err(Error::OutsideTabulation {
                y,
                lo: -self.y_max,
                hi: self.y_max,
            });
        }
        match &self.tab {
            Tabulation::Closed(c) => match &c[i - 1] {
                Closed::Power { c, pow } => Ok(sign * c * ya.powf(*pow)),
                Closed::Log => {
                    if ya == 0.0 {
                        return Err(Error::SingularEvaluation { a: self.w.a() });
                    }
                    Ok(sign * ya.ln())
                }
                Closed::Unavailable(reason) => Err(Error::Unsupported(reason.clone())),
            },
            Tabulation::Sampled { ys, g, h } => {
                // cubic Hermite interpolation with the exact derivatives
                let n = ys.len();
                let hgrid = ys[1] - ys[0];
                let cell = ((ya / hgrid) as usize).min(n - 2);
                let (y0, y1) = (ys[cell], ys[cell + 1]);
                let s = (ya - y0) / (y1 - y0);
                let gi = &g[i - 1];
                let hi = &h[i - 1];
                let d0 = hi[cell] / eval_weight(self.w, y0)?;
                let d1 = hi[cell + 1] / eval_weight(self.w, y1)?;
                let (v0, v1) = (gi[cell], gi[cell + 1]);
                let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
                let h10 = s * (1.0 - s) * (1.0 - s);
                let h01 = s * s * (3.0 - 2.0 * s);
                let h11 = s * s * (s - 1.0);
                Ok(sign * (h00 * v0 + h10 * (y1 - y0) * d0 + h01 * v1 + h11 * (y1 - y0) * d1))
            }
        }
    }
}

/// RK4 with step halving until the tabulated values stabilize to 1e-10.
fn integrate_family(w: WeightSpec, m: usize, y_max: f64, nodes: usize) -> Result<Tabulation> {
    let rho = |y: f64| eval_weight(w, y).expect("eps > 0 is never singular");
    // state layout: [g_1, H_1, g_2, H_2, ..., g_m, H_m]
    let deriv = |y: f64, s: &[f64], out: &mut [f64]| {
        let r = rho(y);
        for i in 1..=m {
            let gi = 2 * (i - 1);
            out[gi] = s[gi + 1] / r;
            out[gi + 1] = r * if i == 1 {
                0.0
            } else if i == 2 {
                1.0
            } else {
                s[2 * (i - 3)]
            };
        }
    };
    let run = |substeps: usize| -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut ys = Vec::with_capacity(nodes + 1);
        let mut g = vec![Vec::with_capacity(nodes + 1); m];
        let mut h = vec![Vec::with_capacity(nodes + 1); m];
        let mut state = vec![0.0; 2 * m];
        state[1] = 1.0; // H_1(0) = 1
        let record = |y: f64, s: &[f64], g: &mut Vec<Vec<f64>>, h: &mut Vec<Vec<f64>>| {
            for i in 0..m {
                g[i].push(s[2 * i]);
                h[i].push(s[2 * i + 1]);
            }
            let _ = y;
        };
        ys.push(0.0);
        record(0.0, &state, &mut g, &mut h);
        let dy = y_max / (nodes as f64 * substeps as f64);
        let mut k1 = vec![0.0; 2 * m];
        let mut k2 = vec![0.0; 2 * m];
        let mut k3 = vec![0.0; 2 * m];
        let mut k4 = vec![0.0; 2 * m];
        let mut tmp = vec![0.0; 2 * m];
        for node in 0..nodes {
            for sub in 0..substeps {
                let y = (node * substeps + sub) as f64 * dy;
                deriv(y, &state, &mut k1);
                for j in 0..2 * m {
                    tmp[j] = state[j] + 0.5 * dy * k1[j];
                }
                deriv(y + 0.5 * dy, &tmp, &mut k2);
                for j in 0..2 * m {
                    tmp[j] = state[j] + 0.5 * dy * k2[j];
                }
                deriv(y + 0.5 * dy, &tmp, &mut k3);
                for j in 0..2 * m {
                    tmp[j] = state[j] + dy * k3[j];
                }
                deriv(y + dy, &tmp, &mut k4);
                for j in 0..2 * m {
                    state[j] += dy / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
            }
            let y = (node + 1) as f64 * y_max / nodes as f64;
            ys.push(y);
            record(y, &state, &mut g, &mut h);
        }
        (ys, g, h)
    };
    let mut substeps = 4usize;
    let mut current = run(substeps);
    loop {
        substeps *= 2;
        let next = run(substeps);
        let mut worst = 0.0f64;
        for i in 0..m {
            for (a, b) in current.1[i].iter().zip(&next.1[i]) {
                let scale = b.abs().max(1e-30);
                worst = worst.max((a - b).abs() / scale);
            }
        }
        current = next;
        if worst < 1e-10 || substeps >= 512 {
            break;
        }
    }
    let (ys, g, h) = current;
    Ok(Tabulation::Sampled { ys, g, h })
}

/// Discrete residual of `ρ^{-a} ∂_y (ρ^a ∂_y g_i) = g_{i-2}` inside
/// `[y_lo, y_hi]`, via a conservative three-point stencil with half-point
/// weights of width `h = (y_hi - y_lo)/ny`. The residual is sampled on a
/// fixed 33-point probe grid, so refining `ny` varies only the stencil
/// width; the maximum absolute residual is second order in `h`.
pub fn verify_g_relation(
    fam: &GFamily,
    i: usize,
    ny: usize,
    y_lo: f64,
    y_hi: f64,
) -> Result<f64> {
    assert!(ny >= 4 && y_lo >= 0.0 && y_hi > y_lo);
    let h = (y_hi - y_lo) / ny as f64;
    let w = fam.weight();
    let gm2 = |y: f64| -> Result<f64> {
        if i >= 3 {
            fam.eval(i - 2, y)
        } else if i == 2 {
            Ok(1.0) // g_0
        } else {
            Ok(0.0) // g_{-1}
        }
    };
    let mut worst = 0.0f64;
    const PROBES: usize = 33;
    for j in 0..PROBES {
        let y = y_lo + (y_hi - y_lo) * j as f64 / (PROBES - 1) as f64;
        if y - h < 0.0 && w.eps() == 0.0 {
            continue; // half-point weight would touch the singular origin
        }
        let gm = fam.eval(i, y - h)?;
        let g0 = fam.eval(i, y)?;
        let gp = fam.eval(i, y + h)?;
        let r_half_p = eval_weight(w, y + 0.5 * h)?;
        let r_half_m = eval_weight(w, y - 0.5 * h)?;
        let r0 = eval_weight(w, y)?;
        let lhs = (r_half_p * (gp - g0) - r_half_m * (g0 - gm)) / (h * h * r0);
        worst = worst.max((lhs - gm2(y)?).abs());
    }
    Ok(worst)
}

/// `v = ρ_ε^a ∂_y u` nodewise, the conjugate-weight transform. The
/// y-derivative is the second-order stencil of [`norms::gradient`]. For
/// ε = 0 with `a < 0` the product is singular on Σ; those nodes are set to
/// zero and must be excluded from any residual region.
pub fn conjugate_transform(u: &Field, w: WeightSpec) -> Result<Field> {
    let grid = u.grid().clone();
    let dy = norms::gradient(u).remove(grid.y_axis());
    let mut v = Field::zeros(grid.clone());
    for level in 0..grid.n_levels() {
        let src = dy.level(level);
        let dst = v.level_mut(level);
        for node in 0..grid.n_spatial_nodes() {
            let y = grid.node_y(node);
            let rho = if y == 0.0 && w.eps() == 0.0 {
                if w.a() > 0.0 {
                    0.0
                } else if w.a() == 0.0 {
                    1.0
                } else {
                    0.0 // singular product excluded; see the doc comment
                }
            } else {
                eval_weight(w, y)?
            };
            dst[node] = rho * src[node];
        }
    }
    Ok(v)
}

/// Weak residual of the conjugate-weight equation for `v` on a sub-region:
/// assembles mass and stiffness with weight `(-a, ε)` on the restricted
/// grid and evaluates `M v̇ + K v` normalized by the lumped mass, maximized
/// over time levels and nodes at least two cells from every face. The
/// two-cell margin keeps the one-sided boundary stencils of the transform
/// out of the measured rows.
pub fn conjugate_residual(v: &Field, w: WeightSpec, region: &Region) -> Result<f64> {
    let vr = v.restrict(region)?;
    let grid = vr.grid().clone();
    let conj = w.conjugate();
    let k = assemble_stiffness(conj, &CoefficientField::identity(grid.clone()), &grid)?;
    let mass = assemble_mass(conj, &grid, None)?;
    let lumped = mass.matvec(&vec![1.0; grid.n_spatial_nodes()]);
    let dt = grid.dt();
    let mut worst = 0.0f64;
    for level in 1..grid.n_levels() - 1 {
        let vm = vr.level(level - 1);
        let v0 = vr.level(level);
        let vp = vr.level(level + 1);
        let vdot: Vec<f64> = vp
            .iter()
            .zip(vm)
            .map(|(p, m)| (p - m) / (2.0 * dt))
            .collect();
        let mv = mass.matvec(&vdot);
        let kv = k.matvec(v0);
        for node in 0..grid.n_spatial_nodes() {
            let multi = grid.node_multi(node);
            let interior = (0..grid.dim())
                .all(|ax| multi[ax] >= 2 && multi[ax] + 2 <= grid.axis_cells(ax));
            if interior {
                worst = worst.max((mv[node] + kv[node]).abs() / lumped[node].abs());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthFit {
    pub exponent: f64,
    pub residual: f64,
    pub scales: Vec<f64>,
    pub sups: Vec<f64>,
}

/// Fit the parabolic growth exponent: slope of `log sup |u|` over nested
/// parabolic cylinders against `log` of their relative radius, over
/// `n_scales ≥ 4` dyadic radii `1, 1/2, 1/4, …`. Classifies test fields
/// against the Liouville threshold `γ < 2`.
pub fn growth_exponent_fit(u: &Field, n_scales: usize) -> Result<GrowthFit> {
    if n_scales < 4 {
        return Err(Error::TooFewScales {
            got: n_scales,
            need: 4,
        });
    }
    let grid = u.grid().clone();
    let mut scales = Vec::with_capacity(n_scales);
    let mut sups = Vec::with_capacity(n_scales);
    for mscale in 0..n_scales {
        let r = 0.5f64.powi(mscale as i32);
        let region = Region::parabolic_cylinder(&grid, r).map_err(|_| Error::TooFewScales {
            got: mscale,
            need: 4,
        })?;
        if (0..grid.dim()).any(|ax| region.n_cells_per_axis(ax) == 0) {
            return Err(Error::TooFewScales {
                got: mscale,
                need: 4,
            });
        }
        let sup = norms::weighted_norm(u, WeightSpec::new(0.0, 0.0)?, &region, norms::Exponent::Infinity, false)?;
        scales.push(r);
        sups.push(sup);
    }
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = sups.iter().map(|s| s.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0f64, f64::max);
    Ok(GrowthFit {
        exponent: slope,
        residual,
        scales,
        sups,
    })
}

/// Export the family as CSV: `y, g_1, …, g_m` sampled on a uniform grid.
pub fn write_family_csv<W: Write>(fam: &GFamily, samples: usize, out: &mut W) -> Result<()> {
    write!(out, "y")?;
    for i in 1..=fam.max_index() {
        write!(out, ",g_{i}")?;
    }
    writeln!(out)?;
    for j in 0..=samples {
        let y = fam.y_max * j as f64 / samples as f64;
        write!(out, "{y}")?;
        for i in 1..=fam.max_index() {
            let v = if y == 0.0 && fam.log_branch.contains(&i) {
                f64::NEG_INFINITY
            } else {
                fam.eval(i, y)?
            };
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
