//! Pricing pipelines, Black implied volatilities and spatial convergence
//! studies.

use std::f64::consts::SQRT_2;
use std::time::Instant;

use crate::amfr::{default_nu, integrate, IntegratorConfig, Jump, DEFAULT_KAPPA};
use crate::error::{FmmError, Result};
use crate::market::{annuity, atm_strike, MarketData, VolSpec};
use crate::mc::{price_swaption_mc, CiEstimate, McConfig};
use crate::payoff::{deflated_swap_value, SwaptionSpec};
use crate::pde::{assemble_operators, smooth_payoff, Grid, GridSpec};

/// Time step of the PDE integrator, relative to the first accrual period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStepRule {
    /// `dt = tau_1 / 2^r`.
    Divisor(u32),
    /// `dt = tau_1 / (2 L)` with `L` the largest axis resolution.
    PerResolution,
    /// Explicit step in years.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeConfig {
    pub grid: GridSpec,
    pub time_step: TimeStepRule,
    pub theta: f64,
    /// Overrides the default `nu` when set.
    pub nu: Option<f64>,
    /// `kappa_N` for `N >= 4`.
    pub kappa: f64,
}

impl PdeConfig {
    pub fn new(grid: GridSpec, time_step: TimeStepRule) -> Self {
        Self {
            grid,
            time_step,
            theta: 0.5,
            nu: None,
            kappa: DEFAULT_KAPPA,
        }
    }

    pub fn dt(&self, md: &MarketData) -> f64 {
        let tau1 = md.tenor.tau(1);
        match self.time_step {
            TimeStepRule::Divisor(r) => tau1 / 2f64.powi(r as i32),
            TimeStepRule::PerResolution => {
                tau1 / (2.0 * *self.grid.resolution.iter().max().unwrap_or(&1) as f64)
            }
            TimeStepRule::Fixed(dt) => dt,
        }
    }

    pub fn nu(&self) -> f64 {
        self.nu
            .unwrap_or_else(|| default_nu(self.grid.dim(), self.theta, self.kappa))
    }

    pub fn with_resolution(&self, l: usize) -> Self {
        let mut cfg = self.clone();
        cfg.grid.resolution = vec![l; self.grid.dim()];
        cfg
    }
}

/// Nodal solution at physical time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
}

impl PdeSolution {
    pub fn at(&self, point: &[f64]) -> Result<f64> {
        multilinear_interp(&self.grid, &self.values, point)
    }
}

/// N-linear interpolation of nodal values over the cell containing `point`.
pub fn multilinear_interp(grid: &Grid, values: &[f64], point: &[f64]) -> Result<f64> {
    if point.len() != grid.dim() || values.len() != grid.len() {
        return Err(FmmError::domain("interpolation point or values do not match the grid"));
    }
    let n = grid.dim();
    let mut base = 0;
    let mut frac = Vec::with_capacity(n);
    for (k, (&p, axis)) in point.iter().zip(grid.axes()).enumerate() {
        let j = axis.cell(p).ok_or_else(|| {
            FmmError::domain(format!(
                "coordinate {p} of axis {} lies outside [0, {}]",
                k + 1,
                axis.upper()
            ))
        })?;
        base += j * grid.strides()[k];
        frac.push((p - axis.node(j)) / (axis.node(j + 1) - axis.node(j)));
    }
    let mut acc = 0.0;
    for corner in 0..1usize << n {
        let mut weight = 1.0;
        let mut flat = base;
        for k in 0..n {
            if corner >> k & 1 == 1 {
                weight *= frac[k];
                flat += grid.strides()[k];
            } else {
                weight *= 1.0 - frac[k];
            }
        }
        if weight != 0.0 {
            acc += weight * values[flat];
        }
    }
    Ok(acc)
}

/// Solves the time-reversed pricing problem of a European or Bermudan
/// payer swaption on a grid over the rates `R_1..R_b`.
pub fn solve_swaption_pde(spec: &SwaptionSpec, md: &MarketData, cfg: &PdeConfig) -> Result<PdeSolution> {
    spec.validate(md.num_rates(), &VolSpec::Lognormal)?;
    let b = spec.end;
    if cfg.grid.dim() != b {
        return Err(FmmError::config(
            "pde.resolution",
            format!("the swaption needs {b} axes, the grid has {}", cfg.grid.dim()),
        ));
    }
    let md = md.truncated(b)?;
    let grid = cfg.grid.build(spec.strike)?;
    let ops = assemble_operators(&grid, &md)?;
    let y0 = smooth_payoff(&grid, spec, &md.tenor)?;
    let origin = md.tenor.date(spec.expiry);
    let dt = cfg.dt(&md);
    let icfg = IntegratorConfig {
        dt,
        theta: cfg.theta,
        nu: cfg.nu(),
        horizon: origin,
        origin,
    };
    let jumps: Vec<Jump> = spec
        .exercise
        .iter()
        .filter(|&&e| e != spec.expiry)
        .map(|&e| {
            Jump::exercise(origin - md.tenor.date(e), exercise_values(&grid, spec, e, &md))
        })
        .collect();
    let steps = icfg.num_steps()?;
    let values = integrate(y0, &icfg, &ops, &md, &jumps)?;
    Ok(PdeSolution {
        grid,
        values,
        dt,
        steps,
    })
}

/// Deflated value of entering the swap over `T_{e+1}..T_b` at `T_e`, at
/// every node.
fn exercise_values(grid: &Grid, spec: &SwaptionSpec, e: usize, md: &MarketData) -> Vec<f64> {
    let mut index = vec![0; grid.dim()];
    let mut out = Vec::with_capacity(grid.len());
    loop {
        let x = grid.point(&index);
        out.push(deflated_swap_value(&x, e, spec.end, spec.strike, &md.tenor));
        if !grid.advance(&mut index) {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MonteCarlo,
    Pde,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::MonteCarlo => "MC",
            Method::Pde => "PDE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunInfo {
    Paths(McConfig),
    Grid {
        resolution: Vec<usize>,
        dt: f64,
        steps: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceReport {
    pub spec: SwaptionSpec,
    pub method: Method,
    pub price: f64,
    pub ci: Option<CiEstimate>,
    pub implied_vol: Option<f64>,
    pub info: RunInfo,
    /// Seconds.
    pub wall_time: f64,
}

/// PDE price at the initial curve, with its implied volatility for
/// European products.
pub fn price_swaption_pde(spec: &SwaptionSpec, md: &MarketData, cfg: &PdeConfig) -> Result<PriceReport> {
    let start = Instant::now();
    let solution = solve_swaption_pde(spec, md, cfg)?;
    let price = solution.at(&md.initial_forwards[..spec.end])?;
    let implied_vol = if spec.is_european() {
        implied_vol(price, spec, md).ok()
    } else {
        None
    };
    Ok(PriceReport {
        spec: spec.clone(),
        method: Method::Pde,
        price,
        ci: None,
        implied_vol,
        info: RunInfo::Grid {
            resolution: cfg.grid.resolution.clone(),
            dt: solution.dt,
            steps: solution.steps,
        },
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub fn price_swaption_mc_report(spec: &SwaptionSpec, md: &MarketData, cfg: &McConfig) -> Result<PriceReport> {
    let start = Instant::now();
    let ci = price_swaption_mc(spec, md, cfg)?;
    Ok(PriceReport {
        spec: spec.clone(),
        method: Method::MonteCarlo,
        price: ci.mean,
        ci: Some(ci),
        implied_vol: implied_vol(ci.mean, spec, md).ok(),
        info: RunInfo::Paths(*cfg),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Undiscounted Black call on a lognormal forward: `F N(d1) - K N(d2)`.
pub fn black_call(forward: f64, strike: f64, stdev: f64) -> f64 {
    let intrinsic = (forward - strike).max(0.0);
    if stdev <= 0.0 {
        return intrinsic;
    }
    if strike <= 0.0 {
        return forward - strike;
    }
    let d1 = (forward / strike).ln() / stdev + 0.5 * stdev;
    let d2 = d1 - stdev;
    (forward * norm_cdf(d1) - strike * norm_cdf(d2)).max(intrinsic)
}

/// Black price of a payer swaption with the annuity numeraire.
pub fn swaption_black_price(spec: &SwaptionSpec, md: &MarketData, vol: f64) -> Result<f64> {
    let (level, forward, expiry) = black_inputs(spec, md)?;
    Ok(level * black_call(forward, spec.strike, vol * expiry.sqrt()))
}

fn black_inputs(spec: &SwaptionSpec, md: &MarketData) -> Result<(f64, f64, f64)> {
    let level = annuity(md, spec.expiry, spec.end)?;
    let forward = atm_strike(md, spec.expiry, spec.end)?;
    Ok((level, forward, md.tenor.date(spec.expiry)))
}

/// Black volatility reproducing `price`, by bisection to `1e-10`.
pub fn implied_vol(price: f64, spec: &SwaptionSpec, md: &MarketData) -> Result<f64> {
    let (level, forward, expiry) = black_inputs(spec, md)?;
    let intrinsic = level * (forward - spec.strike).max(0.0);
    let upper_bound = level * forward;
    if !price.is_finite() || price < intrinsic - 1e-15 * level {
        return Err(FmmError::NoSolution(format!(
            "price {price:e} is below the intrinsic value {intrinsic:e}"
        )));
    }
    if price >= upper_bound {
        return Err(FmmError::NoSolution(format!(
            "price {price:e} reaches the forward bound {upper_bound:e}"
        )));
    }
    if price <= intrinsic {
        return Ok(0.0);
    }
    let value = |vol: f64| level * black_call(forward, spec.strike, vol * expiry.sqrt());
    let mut hi = 1.0;
    while value(hi) < price {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(FmmError::NoSolution(format!("no volatility reaches {price:e}")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if value(mid) < price {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One resolution of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub l: usize,
    pub l2_error: f64,
    pub linf_error: f64,
    pub l2_order: Option<f64>,
    pub linf_order: Option<f64>,
    /// Seconds.
    pub runtime: f64,
}

/// Root-mean-square and maximum difference between a coarse solution and
/// a reference, over the coarse nodes. Reference values come from the
/// coincident fine node when the meshes nest (same axis parameters and an
/// integer refinement ratio), and from multilinear interpolation
/// otherwise.
pub fn error_norms(coarse: &PdeSolution, reference: &PdeSolution) -> Result<(f64, f64)> {
    let (cg, fg) = (&coarse.grid, &reference.grid);
    if cg.dim() != fg.dim() {
        return Err(FmmError::domain("solutions live on grids of different dimension"));
    }
    let ratios: Vec<Option<usize>> = cg
        .axes()
        .iter()
        .zip(fg.axes())
        .map(|(c, f)| {
            let (mc, mf) = (c.resolution(), f.resolution());
            let nested = mf % mc == 0
                && c.kind() == f.kind()
                && c.upper() == f.upper()
                && (0..=mc).all(|j| {
                    (c.node(j) - f.node(j * mf / mc)).abs() <= 1e-12 * c.upper()
                });
            nested.then_some(mf / mc)
        })
        .collect();
    let mut index = vec![0; cg.dim()];
    let mut fine_index = vec![0; cg.dim()];
    let (mut sum_sq, mut max) = (0.0f64, 0.0f64);
    for &value in &coarse.values {
        let reference_value = if ratios.iter().all(Option::is_some) {
            for k in 0..cg.dim() {
                fine_index[k] = index[k] * ratios[k].unwrap();
            }
            reference.values[fg.flatten(&fine_index)]
        } else {
            multilinear_interp(fg, &reference.values, &cg.point(&index))?
        };
        let e = (value - reference_value).abs();
        sum_sq += e * e;
        max = max.max(e);
        cg.advance(&mut index);
    }
    Ok(((sum_sq / coarse.values.len() as f64).sqrt(), max))
}

/// `log(e_prev / e) / log(L / L_prev)` for successive rows.
pub fn estimated_order(l_prev: usize, e_prev: f64, l: usize, e: f64) -> f64 {
    (e_prev / e).ln() / (l as f64 / l_prev as f64).ln()
}

/// Spatial errors at each resolution `L` (all axes `L` intervals) against
/// the solution at `reference`, with the time step rule of `base`.
pub fn convergence_study(
    spec: &SwaptionSpec,
    md: &MarketData,
    base: &PdeConfig,
    resolutions: &[usize],
    reference: usize,
) -> Result<Vec<ConvergenceRow>> {
    let reference_solution = solve_swaption_pde(spec, md, &base.with_resolution(reference))?;
    convergence_against(spec, md, base, resolutions, &reference_solution)
}

/// As [`convergence_study`] with a precomputed reference solution.
pub fn convergence_against(
    spec: &SwaptionSpec,
    md: &MarketData,
    base: &PdeConfig,
    resolutions: &[usize],
    reference: &PdeSolution,
) -> Result<Vec<ConvergenceRow>> {
    if resolutions.len() < 2 {
        return Err(FmmError::domain("a convergence study needs at least two resolutions"));
    }
    let finest = reference.grid.axes().iter().map(|a| a.resolution()).min().unwrap_or(0);
    if resolutions.windows(2).any(|w| w[1] <= w[0]) || resolutions.iter().any(|&l| l >= finest) {
        return Err(FmmError::domain(
            "resolutions must increase and stay below the reference resolution",
        ));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(resolutions.len());
    for &l in resolutions {
        let start = Instant::now();
        let solution = solve_swaption_pde(spec, md, &base.with_resolution(l))?;
        let (l2, linf) = error_norms(&solution, reference)?;
        let (l2_order, linf_order) = match rows.last() {
            Some(prev) => (
                Some(estimated_order(prev.l, prev.l2_error, l, l2)),
                Some(estimated_order(prev.l, prev.linf_error, l, linf)),
            ),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            l,
            l2_error: l2,
            linf_error: linf,
            l2_order,
            linf_order,
            runtime: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}
