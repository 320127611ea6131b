//! Semi-discrete operator `F(t, Y) = sum_{k=0}^{N} F_k(t, Y)`.
//!
//! Direction `k` (axis `k`, rate `R_{k+1}`) contributes
//!
//! ```text
//! F_k = lambda_k^2 A_k^(1) Y + lambda_k d_k(t) A_k^(2) Y
//! A_k^(1)[j] = (tau_k x_j / (1 + tau_k x_j) beta_j + x_j eta_j / 2) x_j
//! A_k^(2)[j] = beta_j x_j
//! d_k = sum_{l<k} rho_kl lambda_l tau_l x_l / (1 + tau_l x_l)
//! ```
//!
//! and `F_0` gathers the mixed terms `rho_kl lambda_k lambda_l x_k x_l
//! D^(kl) Y` with `D^(kl)` the composition of the two first-derivative
//! stencils. Every term is bilinear in the time factors `lambda`, so the
//! same kernel evaluates `F` (with coefficients `lambda_k lambda_l`) and
//! `dF/dt` (with coefficients `(lambda_k lambda_l)'`).

use super::grid::Grid;
use crate::error::{FmmError, Result};
use crate::market::{growth_factor, MarketData};

/// Time-dependent scalars of the operator. With `g_k` the time factors,
/// `direct[k] = g_kk` multiplies `A_k^(1)` and `cross[k][l]` multiplies
/// `rho_kl`-weighted couplings, both advective (`l < k`) and mixed.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCoeffs {
    pub direct: Vec<f64>,
    /// Row-major `N x N`, symmetric, `rho_kl` already included.
    pub cross: Vec<f64>,
    n: usize,
}

impl OperatorCoeffs {
    /// Coefficients of `F` for time factors `lambda`.
    pub fn from_lambdas(lambda: &[f64], md: &MarketData) -> Self {
        let n = lambda.len();
        let mut cross = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..n {
                if k != l {
                    cross[k * n + l] = md.correlation.get(k, l) * lambda[k] * lambda[l];
                }
            }
        }
        Self {
            direct: lambda.iter().map(|l| l * l).collect(),
            cross,
            n,
        }
    }

    /// Coefficients of `dF/dt` for time factors `lambda` with slopes
    /// `slope`.
    pub fn derivative(lambda: &[f64], slope: &[f64], md: &MarketData) -> Self {
        let n = lambda.len();
        let mut cross = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..n {
                if k != l {
                    cross[k * n + l] = md.correlation.get(k, l)
                        * (slope[k] * lambda[l] + lambda[k] * slope[l]);
                }
            }
        }
        Self {
            direct: lambda.iter().zip(slope).map(|(l, s)| 2.0 * l * s).collect(),
            cross,
            n,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cross(&self, k: usize, l: usize) -> f64 {
        self.cross[k * self.n + l]
    }

    /// True when direction `k` contributes nothing, advective coupling
    /// included.
    pub fn direction_vanishes(&self, k: usize) -> bool {
        self.direct[k] == 0.0 && (0..k).all(|l| self.cross(k, l) == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.direct.iter().all(|&d| d == 0.0) && self.cross.iter().all(|&c| c == 0.0)
    }
}

/// `lambda_k(t) = sigma_k(s) gamma_k(s)` at physical time `s = origin - t`
/// of the time-reversed problem; `k` is 1-based.
pub fn time_coefficient_lambda(k: usize, t: f64, origin: f64, md: &MarketData) -> f64 {
    let s = origin - t;
    md.vols[k - 1].at_left(s) * md.tenor.gamma(k, s)
}

/// `d lambda_k / dt` on the step that starts at `t`, i.e. with physical
/// time decreasing from `origin - t`.
pub fn time_coefficient_lambda_slope(k: usize, t: f64, origin: f64, md: &MarketData) -> f64 {
    let s = origin - t;
    -md.vols[k - 1].at_left(s) * md.tenor.gamma_left_slope(k, s)
}

/// Values and time derivatives of the operator coefficients for the first
/// `n` rates at reversed time `t`.
pub fn coefficients_at(
    t: f64,
    origin: f64,
    md: &MarketData,
    n: usize,
) -> (OperatorCoeffs, OperatorCoeffs) {
    let lambda: Vec<f64> = (1..=n)
        .map(|k| time_coefficient_lambda(k, t, origin, md))
        .collect();
    let slope: Vec<f64> = (1..=n)
        .map(|k| time_coefficient_lambda_slope(k, t, origin, md))
        .collect();
    (
        OperatorCoeffs::from_lambdas(&lambda, md),
        OperatorCoeffs::derivative(&lambda, &slope, md),
    )
}

/// Selects the terms of `F` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    All,
    /// Advection and diffusion along one axis (0-based).
    Direction(usize),
    /// All mixed-derivative terms.
    Mixed,
}

impl Part {
    fn has_direction(self, k: usize) -> bool {
        matches!(self, Part::All) || self == Part::Direction(k)
    }

    fn has_mixed(self) -> bool {
        matches!(self, Part::All | Part::Mixed)
    }
}

/// Time-independent per-axis factors of the split operator.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisFactors {
    /// Nodes `x_j`.
    pub x: Vec<f64>,
    /// `tau x_j / (1 + tau x_j)`.
    pub w: Vec<f64>,
    pub beta: Vec<[f64; 3]>,
    /// Rows of `A^(1)`; for axis 0 this is `A_1`.
    pub a1: Vec<[f64; 3]>,
    /// Rows of `A^(2)`.
    pub a2: Vec<[f64; 3]>,
}

/// Assembled tridiagonal factors for every axis of a grid. Row `j` holds
/// the weights on `(j-1, j, j+1)`; first rows are null, last rows have no
/// superdiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOperators {
    shape: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
    axes: Vec<AxisFactors>,
}

pub fn assemble_operators(grid: &Grid, md: &MarketData) -> Result<SplitOperators> {
    if grid.dim() > md.num_rates() {
        return Err(FmmError::domain(format!(
            "grid has {} axes but the market has {} rates",
            grid.dim(),
            md.num_rates()
        )));
    }
    let mut axes = Vec::with_capacity(grid.dim());
    for (k, axis) in grid.axes().iter().enumerate() {
        let tau = md.tenor.tau(k + 1);
        let x = axis.nodes().to_vec();
        let mut w = Vec::with_capacity(x.len());
        for &xj in &x {
            w.push(tau * xj / growth_factor(tau, xj, k + 1)?);
        }
        let beta = axis.betas().to_vec();
        let mut a1 = Vec::with_capacity(x.len());
        let mut a2 = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            let (b, e) = (beta[j], axis.eta(j));
            let adv = w[j] * x[j];
            let diff = 0.5 * x[j] * x[j];
            a1.push([
                adv * b[0] + diff * e[0],
                adv * b[1] + diff * e[1],
                adv * b[2] + diff * e[2],
            ]);
            a2.push([b[0] * x[j], b[1] * x[j], b[2] * x[j]]);
        }
        axes.push(AxisFactors { x, w, beta, a1, a2 });
    }
    Ok(SplitOperators {
        shape: grid.shape(),
        strides: grid.strides().to_vec(),
        len: grid.len(),
        axes,
    })
}

impl SplitOperators {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn axis(&self, k: usize) -> &AxisFactors {
        &self.axes[k]
    }

    /// Advective coupling of direction `k` at a node, `sum_{l<k} cross[k][l]
    /// w_l`. With value coefficients this is `lambda_k (d_k(t))_J`.
    pub fn coupling(&self, k: usize, index: &[usize], coeffs: &OperatorCoeffs) -> f64 {
        (0..k)
            .map(|l| coeffs.cross(k, l) * self.axes[l].w[index[l]])
            .sum()
    }

    /// Evaluates the selected terms of `F` (or `dF/dt`, depending on
    /// `coeffs`) at `y` into `out`.
    pub fn apply(&self, coeffs: &OperatorCoeffs, part: Part, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.len, "state length does not match the grid");
        assert_eq!(out.len(), self.len, "output length does not match the grid");
        assert_eq!(coeffs.dim(), self.dim(), "coefficients do not match the grid");
        out.fill(0.0);
        let n = self.dim();
        let n0 = self.shape[0];
        let mut index = vec![0usize; n];
        let mut base = 0;
        while base < self.len {
            let line = &mut out[base..base + n0];
            if part.has_direction(0) && coeffs.direct[0] != 0.0 {
                self.line_axis0(coeffs.direct[0], &y[base..base + n0], line);
            }
            for k in 1..n {
                if part.has_direction(k) {
                    self.line_direction(k, &index, base, coeffs, y, line);
                }
            }
            if part.has_mixed() {
                for k in 0..n {
                    for l in k + 1..n {
                        let c = coeffs.cross(k, l);
                        if c != 0.0 {
                            self.line_mixed(k, l, c, &index, base, y, line);
                        }
                    }
                }
            }
            base += n0;
            advance_outer(&mut index, &self.shape);
        }
    }

    /// `F` split into its parts: entry 0 is the mixed part, entry `k >= 1`
    /// the direction of axis `k - 1`.
    pub fn apply_parts(&self, coeffs: &OperatorCoeffs, y: &[f64]) -> Vec<Vec<f64>> {
        let mut parts = Vec::with_capacity(self.dim() + 1);
        let mut buf = vec![0.0; self.len];
        self.apply(coeffs, Part::Mixed, y, &mut buf);
        parts.push(buf);
        for k in 0..self.dim() {
            let mut buf = vec![0.0; self.len];
            self.apply(coeffs, Part::Direction(k), y, &mut buf);
            parts.push(buf);
        }
        parts
    }

    fn line_axis0(&self, direct: f64, y: &[f64], out: &mut [f64]) {
        let a1 = &self.axes[0].a1;
        let m = y.len() - 1;
        for i in 1..m {
            let c = a1[i];
            out[i] += direct * (c[0] * y[i - 1] + c[1] * y[i] + c[2] * y[i + 1]);
        }
        let c = a1[m];
        out[m] += direct * (c[0] * y[m - 1] + c[1] * y[m]);
    }

    fn line_direction(
        &self,
        k: usize,
        index: &[usize],
        base: usize,
        coeffs: &OperatorCoeffs,
        y: &[f64],
        out: &mut [f64],
    ) {
        let jk = index[k];
        if jk == 0 {
            return;
        }
        let n0 = out.len();
        let direct = coeffs.direct[k];
        let c0 = coeffs.cross(k, 0);
        let dconst: f64 = (1..k)
            .map(|l| coeffs.cross(k, l) * self.axes[l].w[index[l]])
            .sum();
        if direct == 0.0 && c0 == 0.0 && dconst == 0.0 {
            return;
        }
        let f = &self.axes[k];
        let (a1, a2) = (f.a1[jk], f.a2[jk]);
        let s = self.strides[k];
        let y0 = &y[base..base + n0];
        let ym = &y[base - s..base - s + n0];
        let w0 = &self.axes[0].w;
        let last = jk + 1 == self.shape[k];
        if last {
            for i in 0..n0 {
                let d = dconst + c0 * w0[i];
                out[i] += direct * (a1[0] * ym[i] + a1[1] * y0[i])
                    + d * (a2[0] * ym[i] + a2[1] * y0[i]);
            }
        } else {
            let yp = &y[base + s..base + s + n0];
            for i in 0..n0 {
                let d = dconst + c0 * w0[i];
                out[i] += direct * (a1[0] * ym[i] + a1[1] * y0[i] + a1[2] * yp[i])
                    + d * (a2[0] * ym[i] + a2[1] * y0[i] + a2[2] * yp[i]);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn line_mixed(
        &self,
        k: usize,
        l: usize,
        c: f64,
        index: &[usize],
        base: usize,
        y: &[f64],
        out: &mut [f64],
    ) {
        let jl = index[l];
        if jl == 0 {
            return;
        }
        let n0 = out.len();
        let fl = &self.axes[l];
        let bl = fl.beta[jl];
        let sl = self.strides[l];
        let rows_l = if jl + 1 == self.shape[l] { 2 } else { 3 };
        if k == 0 {
            let x0 = &self.axes[0].x;
            let b0 = &self.axes[0].beta;
            let scale = c * fl.x[jl];
            for r in 0..rows_l {
                let wr = bl[r];
                if wr == 0.0 {
                    continue;
                }
                let row = &y[base + r * sl - sl..base + r * sl - sl + n0];
                for i in 1..n0 - 1 {
                    let b = b0[i];
                    let g = b[0] * row[i - 1] + b[1] * row[i] + b[2] * row[i + 1];
                    out[i] += scale * x0[i] * wr * g;
                }
                let i = n0 - 1;
                let b = b0[i];
                let g = b[0] * row[i - 1] + b[1] * row[i];
                out[i] += scale * x0[i] * wr * g;
            }
        } else {
            let jk = index[k];
            if jk == 0 {
                return;
            }
            let fk = &self.axes[k];
            let bk = fk.beta[jk];
            let sk = self.strides[k];
            let rows_k = if jk + 1 == self.shape[k] { 2 } else { 3 };
            let scale = c * fk.x[jk] * fl.x[jl];
            for rl in 0..rows_l {
                for rk in 0..rows_k {
                    let wgt = scale * bl[rl] * bk[rk];
                    if wgt == 0.0 {
                        continue;
                    }
                    let start = base + rl * sl + rk * sk - sl - sk;
                    let row = &y[start..start + n0];
                    for (o, v) in out.iter_mut().zip(row) {
                        *o += wgt * v;
                    }
                }
            }
        }
    }
}

/// Advances the multi-index over axes `1..N`.
fn advance_outer(index: &mut [usize], shape: &[usize]) {
    for k in 1..index.len() {
        index[k] += 1;
        if index[k] < shape[k] {
            return;
        }
        index[k] = 0;
    }
}
