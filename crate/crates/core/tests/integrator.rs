//! Tridiagonal and directional solves, time derivatives and AMFR-W1 stepping.

mod common;

use common::{dense_solve, five_rates};
use fmm_core::amfr::{
    integrate, solve_directional, time_derivatives, tridiag_solve, IntegratorConfig, Jump,
};
use fmm_core::analytics::{solve_swaption_pde, PdeConfig, TimeStepRule};
use fmm_core::pde::{
    assemble_operators, coefficients_at, smooth_payoff, Grid, GridSpec, OperatorCoeffs, Part,
    SplitOperators,
};
use fmm_core::{MarketData, SwaptionSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #[test]
    fn tridiag_matches_dense(seed in any::<u64>()) {
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let upper: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                s * (lower[i].abs() + upper[i].abs() + rng.random_range(0.1..2.0))
            })
            .collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = diag[i];
            if i > 0 {
                dense[i][i - 1] = lower[i];
            }
            if i + 1 < n {
                dense[i][i + 1] = upper[i];
            }
        }
        let want = dense_solve(dense, rhs.clone());
        let got = tridiag_solve(&lower, &diag, &upper, &rhs).unwrap();
        prop_assert!(max_diff(&got, &want) <= 1e-12 * max_abs(&want));
    }

    #[test]
    fn directional_round_trip(seed in any::<u64>(), l in 3usize..12, k in 0usize..3) {
        let md = five_rates();
        let grid = GridSpec::square(3, l, 0.5).build(0.014).unwrap();
        let ops = assemble_operators(&grid, &md).unwrap();
        let coeffs = OperatorCoeffs::from_lambdas(&[0.2, 0.15, 0.25], &md);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shift = 0.5 * 0.25 / 256.0;
        let mut fw = vec![0.0; grid.len()];
        ops.apply(&coeffs, Part::Direction(k), &w, &mut fw);
        let mut rhs: Vec<f64> = w.iter().zip(&fw).map(|(w, f)| w - shift * f).collect();
        solve_directional(&ops, k, &coeffs, shift, &mut rhs).unwrap();
        prop_assert!(max_diff(&rhs, &w) <= 1e-12 * max_abs(&w));
    }
}

#[test]
fn tridiag_trivial_cases() {
    let rhs = [1.0, -2.0, 3.0];
    let ones = [1.0; 3];
    let zeros = [0.0; 3];
    assert_eq!(tridiag_solve(&zeros, &ones, &zeros, &rhs).unwrap(), rhs.to_vec());
    assert!(tridiag_solve(&zeros, &zeros, &zeros, &rhs).is_err());
}

#[test]
fn zero_shift_returns_rhs() {
    let md = five_rates();
    let grid = GridSpec::square(2, 6, 0.5).build(0.013).unwrap();
    let ops = assemble_operators(&grid, &md).unwrap();
    let coeffs = OperatorCoeffs::from_lambdas(&[0.2, 0.15], &md);
    let original: Vec<f64> = (0..grid.len()).map(|i| i as f64).collect();
    let mut rhs = original.clone();
    solve_directional(&ops, 1, &coeffs, 0.0, &mut rhs).unwrap();
    assert_eq!(rhs, original);
}

fn kron(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (na, nb) = (a.len(), b.len());
    let mut out = vec![vec![0.0; na * nb]; na * nb];
    for i in 0..na {
        for j in 0..na {
            for p in 0..nb {
                for q in 0..nb {
                    out[i * nb + p][j * nb + q] = a[i][j] * b[p][q];
                }
            }
        }
    }
    out
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect()
}

/// Tridiagonal matrix from per-row `(j-1, j, j+1)` weights.
fn banded(rows: &[[f64; 3]]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut m = vec![vec![0.0; n]; n];
    for (j, r) in rows.iter().enumerate() {
        for (o, &v) in r.iter().enumerate() {
            if v != 0.0 {
                m[j][j + o - 1] = v;
            }
        }
    }
    m
}

/// Direction `k` of a two-axis grid, built from the axis stencils with
/// Kronecker products (axis 0 varies fastest, so it is the right factor).
fn dense_direction(grid: &Grid, md: &MarketData, coeffs: &OperatorCoeffs, k: usize) -> Vec<Vec<f64>> {
    let factor = |axis: usize| {
        let ax = grid.axis(axis);
        let tau = md.tenor.tau(axis + 1);
        let x = ax.nodes();
        let a1: Vec<[f64; 3]> = (0..x.len())
            .map(|j| {
                let w = tau * x[j] / (1.0 + tau * x[j]);
                let (b, e) = (ax.beta(j), ax.eta(j));
                [0, 1, 2].map(|r| (w * b[r] + 0.5 * x[j] * e[r]) * x[j])
            })
            .collect();
        let a2: Vec<[f64; 3]> = (0..x.len()).map(|j| ax.beta(j).map(|v| v * x[j])).collect();
        (banded(&a1), banded(&a2))
    };
    let n0 = grid.axis(0).len();
    let n1 = grid.axis(1).len();
    if k == 0 {
        let (a1, _) = factor(0);
        let scaled: Vec<Vec<f64>> = a1.iter().map(|r| r.iter().map(|v| v * coeffs.direct[0]).collect()).collect();
        kron(&identity(n1), &scaled)
    } else {
        let (a1, a2) = factor(1);
        let tau0 = md.tenor.tau(1);
        let d: Vec<Vec<f64>> = (0..n0)
            .map(|j| {
                let x = grid.axis(0).node(j);
                (0..n0)
                    .map(|i| if i == j { coeffs.cross(1, 0) * tau0 * x / (1.0 + tau0 * x) } else { 0.0 })
                    .collect()
            })
            .collect();
        let first = kron(&a1, &identity(n0));
        let second = kron(&a2, &d);
        first
            .iter()
            .zip(&second)
            .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| coeffs.direct[1] * a + b).collect())
            .collect()
    }
}

#[test]
fn directional_solve_matches_kronecker_oracle() {
    let md = five_rates();
    let grid = GridSpec::square(2, 4, 0.5).build(0.013).unwrap();
    let ops = assemble_operators(&grid, &md).unwrap();
    let coeffs = OperatorCoeffs::from_lambdas(&[0.2, 0.15], &md);
    let shift = 0.37;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rhs: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    for k in 0..2 {
        let a = dense_direction(&grid, &md, &coeffs, k);
        // The dense operator agrees with the matrix-free kernel.
        let mut applied = vec![0.0; grid.len()];
        ops.apply(&coeffs, Part::Direction(k), &rhs, &mut applied);
        for (i, row) in a.iter().enumerate() {
            let v: f64 = row.iter().zip(&rhs).map(|(a, y)| a * y).sum();
            assert!((v - applied[i]).abs() <= 1e-12 * max_abs(&applied), "k {k} row {i}: {v} vs {}", applied[i]);
        }
        let system: Vec<Vec<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| f64::from(u8::from(i == j)) - shift * v)
                    .collect()
            })
            .collect();
        let want = dense_solve(system, rhs.clone());
        let mut got = rhs.clone();
        solve_directional(&ops, k, &coeffs, shift, &mut got).unwrap();
        assert!(max_diff(&got, &want) <= 1e-12 * max_abs(&want), "axis {k}");
    }
}

/// `F(t, y)` on `ops` with the coefficients of reversed time `t`.
fn rhs_at(ops: &SplitOperators, md: &MarketData, origin: f64, t: f64, part: Part, y: &[f64]) -> Vec<f64> {
    let (coeffs, _) = coefficients_at(t, origin, md, ops.dim());
    let mut out = vec![0.0; y.len()];
    ops.apply(&coeffs, part, y, &mut out);
    out
}

#[test]
fn time_derivatives_match_finite_differences() {
    let md = five_rates();
    let grid = GridSpec::square(3, 8, 0.5).build(0.014).unwrap();
    let ops = assemble_operators(&grid, &md).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    // Physical times 0.4 and 0.6: rate 2 or 3 inside its accrual period.
    for (origin, t) in [(0.5, 0.1), (0.75, 0.15), (0.75, 0.05)] {
        let (_, dcoeffs) = coefficients_at(t, origin, &md, 3);
        let (alpha, g) = time_derivatives(&ops, &dcoeffs, &y);
        let eps = 1e-6;
        let fd = |part| {
            let up = rhs_at(&ops, &md, origin, t + eps, part, &y);
            let down = rhs_at(&ops, &md, origin, t - eps, part, &y);
            up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * eps)).collect::<Vec<f64>>()
        };
        let g_fd = fd(Part::All);
        assert!(max_abs(&g_fd) > 0.0);
        assert!(max_diff(&g, &g_fd) <= 1e-6 * max_abs(&g_fd), "G at origin {origin}, t {t}");
        for (k, a) in alpha.iter().enumerate() {
            let a_fd = fd(Part::Direction(k));
            let a = if a.is_empty() { vec![0.0; y.len()] } else { a.clone() };
            assert!(
                max_diff(&a, &a_fd) <= 1e-6 * max_abs(&g_fd),
                "alpha_{k} at origin {origin}, t {t}"
            );
        }
    }
}

#[test]
fn constant_volatility_direction_has_no_direct_slope() {
    let md = five_rates();
    // Physical time 0.2: rate 1 decays, rates 2 and 3 have gamma = 1.
    let (_, d) = coefficients_at(0.05, 0.25, &md, 3);
    assert_eq!(d.direct[1], 0.0);
    assert_eq!(d.direct[2], 0.0);
    assert_eq!(d.cross(2, 1), 0.0);
    assert!(d.direct[0] != 0.0);
    let grid = GridSpec::square(3, 5, 0.5).build(0.014).unwrap();
    let ops = assemble_operators(&grid, &md).unwrap();
    let (alpha, _) = time_derivatives(&ops, &d, &vec![0.0; grid.len()]);
    assert!(alpha.iter().all(|a| a.iter().all(|&v| v == 0.0)));
}

fn european_setup(md: &MarketData, l: usize) -> (Grid, SplitOperators, Vec<f64>) {
    let spec = SwaptionSpec::european(1, 2, 0.013);
    let grid = GridSpec::square(2, l, 0.5).build(spec.strike).unwrap();
    let ops = assemble_operators(&grid, md).unwrap();
    let y0 = smooth_payoff(&grid, &spec, &md.tenor).unwrap();
    (grid, ops, y0)
}

#[test]
fn zero_operator_keeps_the_state() {
    let md = MarketData::with_constant_params(&[0.25, 0.5], &[0.01, 0.013], &[0.0, 0.0], 0.5).unwrap();
    let (_, ops, y0) = european_setup(&md, 8);
    let cfg = IntegratorConfig::new(0.25 / 16.0, 0.25, 0.25, 2);
    let y = integrate(y0.clone(), &cfg, &ops, &md, &[]).unwrap();
    assert_eq!(y, y0);
}

/// With the first rate's volatility at zero every coefficient is constant
/// on `[0, T_1]`.
#[test]
fn temporal_self_convergence() {
    let md = MarketData::with_constant_params(&[0.25, 0.5], &[0.01, 0.013], &[0.0, 0.15], 0.5).unwrap();
    let (_, ops, y0) = european_setup(&md, 16);
    let run = |steps: usize| {
        let cfg = IntegratorConfig::new(0.25 / steps as f64, 0.25, 0.25, 2);
        integrate(y0.clone(), &cfg, &ops, &md, &[]).unwrap()
    };
    let reference = run(8 * 64);
    let errors: Vec<f64> = [8, 16, 32].iter().map(|&s| max_diff(&run(s), &reference)).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    // Full five-rate dynamics as well, with time-dependent coefficients.
    let md = five_rates();
    let (_, ops, y0) = european_setup(&md, 16);
    let run = |steps: usize| {
        let cfg = IntegratorConfig::new(0.25 / steps as f64, 0.25, 0.25, 2);
        integrate(y0.clone(), &cfg, &ops, &md, &[]).unwrap()
    };
    let reference = run(8 * 64);
    let errors: Vec<f64> = [8, 16, 32].iter().map(|&s| max_diff(&run(s), &reference)).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn solution_operator_is_linear() {
    let md = five_rates();
    let (grid, ops, y0) = european_setup(&md, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let z: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1e-3..1e-3)).collect();
    let cfg = IntegratorConfig::new(0.25 / 32.0, 0.25, 0.25, 2);
    let c = -2.5;
    let combined: Vec<f64> = y0.iter().zip(&z).map(|(y, z)| c * y + z).collect();
    let lhs = integrate(combined, &cfg, &ops, &md, &[]).unwrap();
    let a = integrate(y0, &cfg, &ops, &md, &[]).unwrap();
    let b = integrate(z, &cfg, &ops, &md, &[]).unwrap();
    let rhs: Vec<f64> = a.iter().zip(&b).map(|(a, b)| c * a + b).collect();
    assert!(max_diff(&lhs, &rhs) <= 1e-12 * max_abs(&rhs));
}

#[test]
fn step_must_divide_horizon() {
    let md = five_rates();
    let (_, ops, y0) = european_setup(&md, 4);
    let cfg = IntegratorConfig::new(0.1, 0.25, 0.25, 2);
    assert!(integrate(y0, &cfg, &ops, &md, &[]).is_err());
}

#[test]
fn jumps() {
    let md = five_rates();
    let (grid, ops, y0) = european_setup(&md, 8);
    let cfg = IntegratorConfig::new(0.25 / 16.0, 0.25, 0.25, 2);
    let plain = integrate(y0.clone(), &cfg, &ops, &md, &[]).unwrap();
    let none = Jump::exercise(0.125, vec![f64::NEG_INFINITY; grid.len()]);
    assert_eq!(integrate(y0.clone(), &cfg, &ops, &md, &[none]).unwrap(), plain);
    let floor = Jump::exercise(0.125, vec![1.0; grid.len()]);
    let floored = integrate(y0, &cfg, &ops, &md, &[floor]).unwrap();
    assert!(floored.iter().zip(&plain).all(|(f, p)| f >= p));
}

#[test]
fn canary_dominates_european_at_every_node() {
    let md = five_rates();
    let k = 0.015;
    let mut cfg = PdeConfig::new(GridSpec::square(4, 6, 0.5), TimeStepRule::Divisor(4));
    cfg.kappa = 0.5;
    let european = solve_swaption_pde(&SwaptionSpec::european(3, 4, k), &md, &cfg).unwrap();
    let canary = solve_swaption_pde(&SwaptionSpec::bermudan(3, 4, k, &[1, 2]), &md, &cfg).unwrap();
    assert!(canary.values.iter().zip(&european.values).all(|(c, e)| c >= e));
}

