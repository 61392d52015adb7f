//! Typed experiment configs, one file per experiment. Flat keys, explicit
//! defaults, no inheritance.

use serde::Deserialize;
use std::sync::Arc;

use wparab::domain::{build_grid, Grid, GridSpec};

fn d_l() -> f64 {
    1.0
}
fn d_theta() -> f64 {
    0.5
}
fn d_lin_tol() -> f64 {
    1e-10
}
fn d_t0() -> f64 {
    -1.0
}
fn d_t1() -> f64 {
    1.0
}
fn d_p() -> f64 {
    9.0
}
fn d_q() -> f64 {
    9.0
}
fn d_stability() -> f64 {
    2.0
}
fn d_min_order() -> f64 {
    1.9
}
fn d_modes() -> usize {
    3
}
fn d_amplitude() -> f64 {
    1.0
}

/// Grid block shared by most experiments.
#[derive(Debug, Clone, Deserialize)]
pub struct GridConfig {
    pub n_x: usize,
    #[serde(default = "d_l")]
    pub l: f64,
    #[serde(default = "d_l")]
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "d_t0")]
    pub t0: f64,
    #[serde(default = "d_t1")]
    pub t1: f64,
    pub nt: usize,
}

impl GridConfig {
    pub fn build(&self) -> anyhow::Result<Arc<Grid>> {
        Ok(build_grid(GridSpec {
            n_x: self.n_x,
            l: self.l,
            y_max: self.y_max,
            nx: self.nx,
            ny: self.ny,
            t0: self.t0,
            t1: self.t1,
            nt: self.nt,
        })?)
    }
}

#[derive(Debug, Deserialize)]
pub struct SolveConfig {
    pub grid: GridConfig,
    pub a: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(default = "d_lin_tol")]
    pub lin_tol: f64,
    /// "zero" | "random"
    #[serde(default)]
    pub u0: String,
    #[serde(default = "d_amplitude")]
    pub u0_amplitude: f64,
    #[serde(default = "d_modes")]
    pub u0_modes: usize,
    /// constant volumetric source
    #[serde(default)]
    pub f_const: f64,
    /// "outer-dirichlet" | "natural"
    #[serde(default)]
    pub bc: String,
    /// dump the space-time field: "csv" | "binary" | "both" | "none"
    #[serde(default)]
    pub dump: String,
    /// checkpoint every n-th level (0 = off)
    #[serde(default)]
    pub checkpoint_stride: usize,
}

#[derive(Debug, Deserialize)]
pub struct MmsConfig {
    /// "g2-plus-t" | "xsq"
    pub case: String,
    pub n_x: usize,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub eps: f64,
    pub resolutions: Vec<usize>,
    #[serde(default = "d_min_order")]
    pub min_order: f64,
    #[serde(default = "d4")]
    pub nt: usize,
}
fn d4() -> usize {
    4
}

#[derive(Debug, Deserialize)]
pub struct CaccioppoliConfig {
    pub grid: GridConfig,
    pub a_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub seeds: usize,
    #[serde(default = "d_half")]
    pub r_inner: f64,
    #[serde(default = "d_one")]
    pub r_outer: f64,
    #[serde(default = "d_two")]
    pub p: f64,
    #[serde(default = "d_stability")]
    pub max_spread: f64,
}
fn d_half() -> f64 {
    0.5
}
fn d_one() -> f64 {
    1.0
}
fn d_two() -> f64 {
    2.0
}

#[derive(Debug, Deserialize)]
pub struct DegiorgiConfig {
    pub grid: GridConfig,
    pub a: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_depth")]
    pub depth: usize,
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_q")]
    pub q: f64,
    #[serde(default = "d_modes")]
    pub u0_modes: usize,
}
fn d_delta() -> f64 {
    1e-3
}
fn d_depth() -> usize {
    8
}

#[derive(Debug, Deserialize)]
pub struct LinfConfig {
    pub grid: GridConfig,
    pub a: f64,
    pub eps_list: Vec<f64>,
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_q")]
    pub q: f64,
    #[serde(default = "d_stability")]
    pub max_spread: f64,
}

#[derive(Debug, Deserialize)]
pub struct EpsSweepConfig {
    pub grid: GridConfig,
    pub a: f64,
    /// descending, ending near zero
    pub eps_list: Vec<f64>,
    /// away-region threshold in cells (default 4)
    #[serde(default = "d_y0_cells")]
    pub y0_cells: usize,
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_q")]
    pub q: f64,
}
fn d_y0_cells() -> usize {
    4
}

#[derive(Debug, Deserialize)]
pub struct HolderConfig {
    pub grid: GridConfig,
    pub a: f64,
    pub eps_list: Vec<f64>,
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_q")]
    pub q: f64,
    /// numeric alpha, or negative to use the gate value
    #[serde(default = "d_neg")]
    pub alpha: f64,
    #[serde(default)]
    pub order: u8,
    #[serde(default = "d_stability")]
    pub stability_factor: f64,
    /// require the smallest-eps ratio within this of the eps = 0 ratio
    #[serde(default = "d_limit_tol")]
    pub limit_tolerance: f64,
}
fn d_neg() -> f64 {
    -1.0
}
fn d_limit_tol() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
pub struct LiouvilleConfig {
    pub a: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_y100")]
    pub y_max: f64,
    #[serde(default = "d_nodes")]
    pub table_nodes: usize,
    /// relative tolerance for the g_4/y^4 -> b_2 check
    #[serde(default = "d_asym_tol")]
    pub asymptotic_tolerance: f64,
}
fn d_m() -> usize {
    4
}
fn d_y100() -> f64 {
    100.0
}
fn d_nodes() -> usize {
    4096
}
fn d_asym_tol() -> f64 {
    0.01
}

#[derive(Debug, Deserialize)]
pub struct ConjugateConfig {
    pub a: f64,
    pub eps: f64,
    pub resolutions: Vec<usize>,
    #[serde(default = "d_rate")]
    pub min_rate: f64,
}
fn d_rate() -> f64 {
    1.8
}

#[derive(Debug, Deserialize)]
pub struct MuckenhouptConfig {
    pub a_list: Vec<f64>,
    #[serde(default = "d_mdepth")]
    pub depth: u32,
}
fn d_mdepth() -> u32 {
    14
}

#[derive(Debug, Deserialize)]
pub struct CurvedConfig {
    /// path to a CurvedDomainSpec file; empty = built-in quadratic graph
    #[serde(default)]
    pub spec_file: String,
    #[serde(default = "d_half_a")]
    pub a: f64,
    /// coefficient of the built-in φ(x) = c x²
    #[serde(default = "d_phi_c")]
    pub phi_coefficient: f64,
    pub resolutions: Vec<usize>,
    #[serde(default = "d_min_order")]
    pub min_order: f64,
    #[serde(default = "d4")]
    pub nt: usize,
}
fn d_half_a() -> f64 {
    0.5
}
fn d_phi_c() -> f64 {
    0.2
}
