#![allow(dead_code)]

use fmm_core::payoff::{reduced_swap_value, relative_payoff_u0};
use fmm_core::pde::{smooth_payoff, GridSpec, OperatorCoeffs, SplitOperators};
use fmm_core::{MarketData, SwaptionSpec};

pub const DATES: [f64; 5] = [0.25, 0.5, 0.75, 1.0, 1.25];
pub const FORWARDS: [f64; 5] = [0.010, 0.013, 0.014, 0.015, 0.016];
pub const SIGMAS: [f64; 5] = [0.20, 0.15, 0.25, 0.26, 0.27];
pub const RHO: f64 = 0.5;

/// Five-rate quarterly curve with constant volatilities and correlation 0.5.
pub fn five_rates() -> MarketData {
    MarketData::with_constant_params(&DATES, &FORWARDS, &SIGMAS, RHO).unwrap()
}

pub fn five_rates_with_rho(rho: f64) -> MarketData {
    MarketData::with_constant_params(&DATES, &FORWARDS, &SIGMAS, rho).unwrap()
}

pub fn five_rates_without_vol() -> MarketData {
    MarketData::with_constant_params(&DATES, &FORWARDS, &[0.0; 5], RHO).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f == 0.0 {
                continue;
            }
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Composite Gauss-Legendre (5 points) on `[lo, hi]` split into `pieces`.
pub fn quadrature(f: impl Fn(f64) -> f64, lo: f64, hi: f64, pieces: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683,
        0.538_469_310_105_683,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
        0.236_926_885_056_189,
    ];
    let h = (hi - lo) / pieces as f64;
    let mut acc = 0.0;
    for p in 0..pieces {
        let mid = lo + (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            acc += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * acc
}

/// `|sum c_i f_i - expected|` measured against the size of the summands.
pub fn stencil_residual(c: [f64; 3], f: [f64; 3], expected: f64) -> f64 {
    let terms: Vec<f64> = c.iter().zip(f).map(|(c, f)| c * f).collect();
    let scale = terms.iter().map(|t| t.abs()).sum::<f64>().max(expected.abs());
    (terms.iter().sum::<f64>() - expected).abs() / scale.max(f64::MIN_POSITIVE)
}

/// Bound on the sum of absolute weights of any row of the full operator.
pub fn operator_scale(ops: &SplitOperators, coeffs: &OperatorCoeffs) -> f64 {
    let n = ops.dim();
    let row_max = |rows: &[[f64; 3]]| {
        rows.iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let cross_sum: f64 = coeffs.cross.iter().map(|c| c.abs()).sum();
    let mut total = 0.0;
    for k in 0..n {
        let f = ops.axis(k);
        let xb: Vec<[f64; 3]> = f.x.iter().zip(&f.beta).map(|(x, b)| b.map(|v| v * x)).collect();
        total += coeffs.direct[k] * row_max(&f.a1) + cross_sum * row_max(&f.a2);
        total += cross_sum * row_max(&xb) * row_max(&xb);
    }
    total
}

/// Compares smoothed initial data with a quadrature of the payoff over the
/// cell containing the kink, and checks that other nodes keep their payoff.
pub fn check_smoothing(spec: &SwaptionSpec, l: usize) {
    let md = five_rates();
    let b = spec.end;
    let a = spec.expiry;
    let grid = GridSpec::square(b, l, 0.5).build(spec.strike).unwrap();
    let smoothed = smooth_payoff(&grid, spec, &md.tenor).unwrap();
    let axis = grid.axis(a);
    let mut checked = 0;
    let mut index = vec![0; b];
    loop {
        let flat = grid.flatten(&index);
        let mut x = grid.point(&index);
        let nodal = relative_payoff_u0(&x, spec, &md.tenor);
        // Sign change of the swap value along axis a.
        let at = |v: f64, x: &mut Vec<f64>| {
            x[a] = v;
            reduced_swap_value(x, spec, &md.tenor)
        };
        let (mut lo, mut hi) = (0.0, axis.upper());
        let root = if at(lo, &mut x) < 0.0 && at(hi, &mut x) > 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if at(mid, &mut x) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(0.5 * (lo + hi))
        } else {
            None
        };
        let j = index[a];
        let nodes = axis.nodes();
        let nearest = root.map(|r| {
            (0..nodes.len())
                .min_by(|&p, &q| (nodes[p] - r).abs().total_cmp(&(nodes[q] - r).abs()))
                .unwrap()
        });
        if nearest == Some(j) && j > 0 && j < l {
            let (c_lo, c_hi) = (0.5 * (nodes[j - 1] + nodes[j]), 0.5 * (nodes[j] + nodes[j + 1]));
            let r = root.unwrap();
            let f = |v: f64| {
                let mut y = x.clone();
                y[a] = v;
                relative_payoff_u0(&y, spec, &md.tenor)
            };
            let integral = if r > c_lo && r < c_hi {
                quadrature(&f, r, c_hi, 8)
            } else {
                quadrature(&f, c_lo, c_hi, 8)
            };
            let want = integral / (c_hi - c_lo);
            let scale = f(c_hi).abs().max(f(c_lo).abs());
            assert!(
                (smoothed[flat] - want).abs() <= 1e-10 * scale,
                "node {index:?}: {} vs {want}",
                smoothed[flat]
            );
            checked += 1;
        } else {
            assert_eq!(smoothed[flat], nodal, "node {index:?} should keep its payoff");
        }
        if !grid.advance(&mut index) {
            break;
        }
    }
    assert!(checked > 0);
}
