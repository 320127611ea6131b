//! One-stage AMFR-W1 time stepping of `Y' = F(t, Y)` with approximate
//! matrix factorization along the grid axes:
//!
//! ```text
//! K0  = dt F(t_n, Y_n)
//! (I - nu dt A_k) K_k = K_{k-1} + nu dt^2 alpha_k          k = 1..N
//! L0  = 2 K0 + theta dt^2 G - K_N + theta dt F(t_n, K_N)
//! (I - nu dt A_k) L_k = L_{k-1} + nu dt^2 alpha_k          k = 1..N
//! Y_{n+1} = Y_n + L_N
//! ```
//!
//! with `alpha_k = dF_k/dt` and `G = dF/dt` at `(t_n, Y_n)`. The product
//! `A K_N` is one more operator evaluation since `F` is linear in `Y`.

use crate::error::{FmmError, Result};
use crate::market::MarketData;
use crate::pde::{coefficients_at, OperatorCoeffs, Part, SplitOperators};

/// Default `kappa_N` for `N >= 4`, giving `nu = kappa_N N theta`.
pub const DEFAULT_KAPPA: f64 = 0.5;

/// `nu = theta` for `N <= 3`, `kappa N theta` beyond.
pub fn default_nu(n: usize, theta: f64, kappa: f64) -> f64 {
    if n <= 3 {
        theta
    } else {
        kappa * n as f64 * theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub theta: f64,
    pub nu: f64,
    /// Length of the reversed-time interval.
    pub horizon: f64,
    /// Physical time mapped to reversed time 0.
    pub origin: f64,
}

impl IntegratorConfig {
    /// `theta = 1/2` and the default `nu` for an `n`-dimensional grid.
    pub fn new(dt: f64, horizon: f64, origin: f64, n: usize) -> Self {
        Self {
            dt,
            theta: 0.5,
            nu: default_nu(n, 0.5, DEFAULT_KAPPA),
            horizon,
            origin,
        }
    }

    pub fn num_steps(&self) -> Result<usize> {
        steps_to(self.horizon, self.dt, "horizon")
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.theta > 0.0) || !(self.nu > 0.0) {
            return Err(FmmError::config(
                "integrator",
                format!(
                    "dt, theta and nu must be positive (got {}, {}, {})",
                    self.dt, self.theta, self.nu
                ),
            ));
        }
        self.num_steps().map(|_| ())
    }
}

fn steps_to(time: f64, dt: f64, what: &str) -> Result<usize> {
    let n = (time / dt).round();
    if n < 0.0 || (n * dt - time).abs() > 1e-9 * dt.max(time) {
        return Err(FmmError::config(
            "dt",
            format!("step {dt} does not divide the {what} {time}"),
        ));
    }
    Ok(n as usize)
}

/// Transformation applied to the solution once the integration reaches
/// `time`.
pub struct Jump<'a> {
    pub time: f64,
    pub apply: Box<dyn Fn(&mut [f64]) + 'a>,
}

impl<'a> Jump<'a> {
    /// Early exercise: `Y <- max(Y, values)`.
    pub fn exercise(time: f64, values: Vec<f64>) -> Self {
        Self {
            time,
            apply: Box::new(move |y: &mut [f64]| {
                for (v, e) in y.iter_mut().zip(&values) {
                    if *e > *v {
                        *v = *e;
                    }
                }
            }),
        }
    }
}

/// Solves `x` from `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] =
/// rhs[i]`. `lower[0]` and `upper[n-1]` are ignored.
pub fn tridiag_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 || lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(FmmError::domain("tridiagonal system sizes disagree"));
    }
    let mut cp = vec![0.0; n];
    let mut x = rhs.to_vec();
    let mut pivot = diag[0];
    for i in 0..n {
        if i > 0 {
            pivot = diag[i] - lower[i] * cp[i - 1];
        }
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(FmmError::SingularSystem { row: i });
        }
        cp[i] = if i + 1 < n { upper[i] / pivot } else { 0.0 };
        x[i] = if i > 0 { (x[i] - lower[i] * x[i - 1]) / pivot } else { x[i] / pivot };
    }
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Ok(x)
}

/// Solves `(I - shift A_k) K = rhs` in place, where `A_k` is the direction-`k`
/// Jacobian for `coeffs`. The system decouples into independent
/// tridiagonal systems along axis `k`.
pub fn solve_directional(
    ops: &SplitOperators,
    k: usize,
    coeffs: &OperatorCoeffs,
    shift: f64,
    rhs: &mut [f64],
) -> Result<()> {
    solve_directional_in(ops, k, coeffs, shift, rhs, &mut Vec::new())
}

fn solve_directional_in(
    ops: &SplitOperators,
    k: usize,
    coeffs: &OperatorCoeffs,
    shift: f64,
    rhs: &mut [f64],
    scratch: &mut Vec<f64>,
) -> Result<()> {
    assert_eq!(rhs.len(), ops.len(), "rhs length does not match the grid");
    if shift == 0.0 || coeffs.direction_vanishes(k) {
        return Ok(());
    }
    if k == 0 {
        solve_axis0(ops, coeffs.direct[0] * shift, rhs)
    } else {
        solve_strided(ops, k, coeffs, shift, rhs, scratch)
    }
}

/// Axis 0 has no advective coupling, so one factorization serves every
/// line.
fn solve_axis0(ops: &SplitOperators, scale: f64, rhs: &mut [f64]) -> Result<()> {
    let a1 = &ops.axis(0).a1;
    let n = a1.len();
    let lower: Vec<f64> = a1.iter().map(|r| -scale * r[0]).collect();
    let mut cp = vec![0.0; n];
    let mut inv = vec![0.0; n];
    for i in 0..n {
        let diag = 1.0 - scale * a1[i][1];
        let pivot = if i > 0 { diag - lower[i] * cp[i - 1] } else { diag };
        if pivot == 0.0 || !pivot.is_finite() {
            let mut slice = vec![0; ops.dim()];
            slice[0] = i;
            return Err(FmmError::SingularSlice { axis: 1, slice });
        }
        inv[i] = 1.0 / pivot;
        cp[i] = if i + 1 < n { -scale * a1[i][2] * inv[i] } else { 0.0 };
    }
    for line in rhs.chunks_exact_mut(n) {
        line[0] *= inv[0];
        for i in 1..n {
            line[i] = (line[i] - lower[i] * line[i - 1]) * inv[i];
        }
        for i in (0..n - 1).rev() {
            line[i] -= cp[i] * line[i + 1];
        }
    }
    Ok(())
}

/// Axis `k >= 1`: every block of `E_k (M_k + 1)` entries is an
/// `(M_k + 1) x E_k` array whose columns are the systems; the coupling
/// `d_k` varies over the columns only. Thomas elimination runs row by row
/// over all columns at once.
fn solve_strided(
    ops: &SplitOperators,
    k: usize,
    coeffs: &OperatorCoeffs,
    shift: f64,
    rhs: &mut [f64],
    cp: &mut Vec<f64>,
) -> Result<()> {
    let stride = ops.strides()[k];
    let rows = ops.shape()[k];
    let block = stride * rows;
    let f = ops.axis(k);
    let direct = coeffs.direct[k];

    // Coupling per column, indexed by the multi-index over axes 0..k.
    let mut coupling = vec![0.0; stride];
    let mut index = vec![0usize; k];
    for d in coupling.iter_mut() {
        *d = (0..k)
            .map(|l| coeffs.cross(k, l) * ops.axis(l).w[index[l]])
            .sum();
        for (l, j) in index.iter_mut().enumerate() {
            *j += 1;
            if *j < ops.shape()[l] {
                break;
            }
            *j = 0;
        }
    }
    let p: Vec<[f64; 3]> = f.a1.iter().map(|r| r.map(|v| -shift * direct * v)).collect();
    let q: Vec<[f64; 3]> = f.a2.iter().map(|r| r.map(|v| -shift * v)).collect();

    cp.resize(block, 0.0);
    for (b, data) in rhs.chunks_exact_mut(block).enumerate() {
        for j in 0..rows {
            let (pj, qj) = (p[j], q[j]);
            let (done, rest) = data.split_at_mut(j * stride);
            let cur = &mut rest[..stride];
            let (cp_done, cp_rest) = cp.split_at_mut(j * stride);
            let cp_cur = &mut cp_rest[..stride];
            if j == 0 {
                for i in 0..stride {
                    let d = coupling[i];
                    let pivot = 1.0 + pj[1] + d * qj[1];
                    if pivot == 0.0 || !pivot.is_finite() {
                        return Err(singular(ops, k, b, i, 0));
                    }
                    cp_cur[i] = (pj[2] + d * qj[2]) / pivot;
                    cur[i] /= pivot;
                }
            } else {
                let prev = &done[(j - 1) * stride..];
                let cp_prev = &cp_done[(j - 1) * stride..];
                for i in 0..stride {
                    let d = coupling[i];
                    let lo = pj[0] + d * qj[0];
                    let pivot = 1.0 + pj[1] + d * qj[1] - lo * cp_prev[i];
                    if pivot == 0.0 || !pivot.is_finite() {
                        return Err(singular(ops, k, b, i, j));
                    }
                    cp_cur[i] = (pj[2] + d * qj[2]) / pivot;
                    cur[i] = (cur[i] - lo * prev[i]) / pivot;
                }
            }
        }
        for j in (0..rows - 1).rev() {
            let (head, tail) = data.split_at_mut((j + 1) * stride);
            let cur = &mut head[j * stride..];
            let next = &tail[..stride];
            let cpj = &cp[j * stride..(j + 1) * stride];
            for i in 0..stride {
                cur[i] -= cpj[i] * next[i];
            }
        }
    }
    Ok(())
}

fn singular(ops: &SplitOperators, k: usize, block: usize, column: usize, row: usize) -> FmmError {
    let stride = ops.strides()[k];
    let flat = block * stride * ops.shape()[k] + row * stride + column;
    let mut slice = Vec::with_capacity(ops.dim());
    let mut rest = flat;
    for &len in ops.shape() {
        slice.push(rest % len);
        rest /= len;
    }
    slice[k] = 0;
    FmmError::SingularSlice { axis: k + 1, slice }
}

/// `alpha_k = dF_k/dt` for every axis and `G = dF/dt` at `y`.
pub fn time_derivatives(
    ops: &SplitOperators,
    dcoeffs: &OperatorCoeffs,
    y: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut alpha = Vec::new();
    let mut g = Vec::new();
    time_derivatives_in(ops, dcoeffs, y, &mut alpha, &mut g);
    (alpha, g)
}

/// Same as [`time_derivatives`] but reuses the output storage. Directions
/// whose derivative vanishes get an empty `alpha` entry.
fn time_derivatives_in(
    ops: &SplitOperators,
    dcoeffs: &OperatorCoeffs,
    y: &[f64],
    alpha: &mut Vec<Vec<f64>>,
    g: &mut Vec<f64>,
) {
    let n = ops.dim();
    alpha.resize_with(n, Vec::new);
    g.clear();
    g.resize(ops.len(), 0.0);
    if dcoeffs.is_zero() {
        alpha.iter_mut().for_each(Vec::clear);
        return;
    }
    ops.apply(dcoeffs, Part::Mixed, y, g);
    for (k, a) in alpha.iter_mut().enumerate() {
        if dcoeffs.direction_vanishes(k) {
            a.clear();
            continue;
        }
        a.resize(ops.len(), 0.0);
        ops.apply(dcoeffs, Part::Direction(k), y, a);
        for (gi, ai) in g.iter_mut().zip(a.iter()) {
            *gi += ai;
        }
    }
}

/// Reusable stage vectors.
#[derive(Debug, Clone, Default)]
pub struct StageBuffers {
    k0: Vec<f64>,
    k: Vec<f64>,
    tmp: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    g: Vec<f64>,
    scratch: Vec<f64>,
}

impl StageBuffers {
    pub fn new(len: usize) -> Self {
        Self {
            k0: vec![0.0; len],
            k: vec![0.0; len],
            tmp: vec![0.0; len],
            ..Self::default()
        }
    }
}

/// Advances `y` from reversed time `t` by one step of `cfg.dt`.
pub fn amfr_w1_step(
    y: &mut [f64],
    t: f64,
    cfg: &IntegratorConfig,
    ops: &SplitOperators,
    md: &MarketData,
    buffers: &mut StageBuffers,
) -> Result<()> {
    let n = ops.dim();
    let len = ops.len();
    if buffers.k0.len() != len {
        *buffers = StageBuffers::new(len);
    }
    let (coeffs, dcoeffs) = coefficients_at(t, cfg.origin, md, n);
    if coeffs.is_zero() && dcoeffs.is_zero() {
        return Ok(());
    }
    let dt = cfg.dt;
    let shift = cfg.nu * dt;
    let StageBuffers { k0, k, tmp, alpha, g, scratch } = buffers;
    time_derivatives_in(ops, &dcoeffs, y, alpha, g);
    let corr = cfg.nu * dt * dt;

    ops.apply(&coeffs, Part::All, y, k0);
    k0.iter_mut().for_each(|v| *v *= dt);

    k.copy_from_slice(k0);
    for d in 0..n {
        add_scaled(k, &alpha[d], corr);
        solve_directional_in(ops, d, &coeffs, shift, k, scratch)?;
    }

    ops.apply(&coeffs, Part::All, k, tmp);
    let th = cfg.theta;
    for i in 0..len {
        let gi = g[i];
        tmp[i] = 2.0 * k0[i] + th * dt * dt * gi - k[i] + th * dt * tmp[i];
    }
    for d in 0..n {
        add_scaled(tmp, &alpha[d], corr);
        solve_directional_in(ops, d, &coeffs, shift, tmp, scratch)?;
    }
    for (yi, ki) in y.iter_mut().zip(tmp.iter()) {
        *yi += ki;
    }
    Ok(())
}

fn add_scaled(dst: &mut [f64], src: &[f64], scale: f64) {
    if src.is_empty() {
        return;
    }
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Integrates from reversed time 0 to `cfg.horizon`, applying each jump
/// right after the step that lands on its time (jumps at time 0 act on
/// the initial data).
pub fn integrate(
    y0: Vec<f64>,
    cfg: &IntegratorConfig,
    ops: &SplitOperators,
    md: &MarketData,
    jumps: &[Jump<'_>],
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let steps = cfg.num_steps()?;
    let mut schedule = Vec::with_capacity(jumps.len());
    for (i, jump) in jumps.iter().enumerate() {
        if !(0.0..=cfg.horizon).contains(&jump.time) {
            return Err(FmmError::config(
                "jumps",
                format!("jump time {} lies outside [0, {}]", jump.time, cfg.horizon),
            ));
        }
        schedule.push((steps_to(jump.time, cfg.dt, "jump time")?, i));
    }
    schedule.sort();
    let mut y = y0;
    let mut buffers = StageBuffers::new(y.len());
    let mut next = 0;
    while next < schedule.len() && schedule[next].0 == 0 {
        (jumps[schedule[next].1].apply)(&mut y);
        next += 1;
    }
    for s in 0..steps {
        let t = s as f64 * cfg.dt;
        amfr_w1_step(&mut y, t, cfg, ops, md, &mut buffers)?;
        while next < schedule.len() && schedule[next].0 == s + 1 {
            (jumps[schedule[next].1].apply)(&mut y);
            next += 1;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiag_identity() {
        let n = 5;
        let rhs = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        let x = tridiag_solve(&vec![0.0; n], &vec![1.0; n], &vec![0.0; n], &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn tridiag_singular() {
        let n = 3;
        let err = tridiag_solve(&vec![0.0; n], &vec![0.0; n], &vec![0.0; n], &[1.0; 3]);
        assert_eq!(err, Err(FmmError::SingularSystem { row: 0 }));
    }

    #[test]
    fn nu_rule() {
        assert_eq!(default_nu(2, 0.5, 0.7), 0.5);
        assert_eq!(default_nu(3, 0.5, 0.7), 0.5);
        assert!((default_nu(4, 0.5, 0.7) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn misaligned_steps_are_rejected() {
        let cfg = IntegratorConfig::new(0.1, 0.25, 0.25, 2);
        assert!(cfg.num_steps().is_err());
        assert_eq!(IntegratorConfig::new(0.25 / 8.0, 0.25, 0.25, 2).num_steps().unwrap(), 8);
    }
}
