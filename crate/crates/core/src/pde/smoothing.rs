use super::grid::Grid;
use crate::error::{FmmError, Result};
use crate::market::TenorStructure;
use crate::payoff::{relative_payoff_u0, SwaptionSpec};

/// Initial values of the time-reversed pricing problem: the deflated
/// payoff at every node, with cell averages on the nodes nearest to the
/// kink.
///
/// With `a` the expiry, the payoff is positive exactly where
/// `x_{a+1} > x~ = K - H / tau_{a+1}`, where `H` collects the swap legs after
/// `T_{a+1}`. For every slice of the rates `x_{a+2}..x_b`, the node of axis
/// `a` (rate `a+1`) nearest to `x~` gets the exact mean of the payoff over
/// its cell `[x^-, x^+]` (midpoints to the neighbours), for every value of
/// the rates `x_1..x_a`. Slices where `x~` falls outside the axis, or whose
/// nearest node is an axis end, keep the nodal payoff.
pub fn smooth_payoff(grid: &Grid, spec: &SwaptionSpec, tenor: &TenorStructure) -> Result<Vec<f64>> {
    let (a, b) = (spec.expiry, spec.end);
    if grid.dim() != b {
        return Err(FmmError::domain(format!(
            "grid has {} axes, the swaption needs {b}",
            grid.dim()
        )));
    }
    let k = spec.strike;
    let mut values = vec![0.0; grid.len()];
    let mut index = vec![0usize; b];
    let mut x = vec![0.0; b];
    for v in values.iter_mut() {
        for (l, (&j, axis)) in index.iter().zip(grid.axes()).enumerate() {
            x[l] = axis.node(j);
        }
        *v = relative_payoff_u0(&x, spec, tenor);
        grid.advance(&mut index);
    }

    let axis = grid.axis(a);
    let m = axis.resolution();
    let tau = tenor.tau(a + 1);
    // Slices over the trailing rates x_{a+2}..x_b.
    let trailing: Vec<usize> = (a + 1..b).collect();
    let mut tail = vec![0usize; trailing.len()];
    loop {
        let mut h = 0.0;
        let mut discount = 1.0;
        for (pos, &l) in trailing.iter().enumerate() {
            let xl = grid.axis(l).node(tail[pos]);
            let tl = tenor.tau(l + 1);
            discount /= 1.0 + tl * xl;
            h += discount * tl * (xl - k);
        }
        let x_tilde = k - h / tau;
        if x_tilde >= 0.0 && x_tilde <= axis.upper() {
            let j_ind = axis.nearest(x_tilde);
            if j_ind > 0 && j_ind < m {
                let lo = 0.5 * (axis.node(j_ind - 1) + axis.node(j_ind));
                let hi = 0.5 * (axis.node(j_ind) + axis.node(j_ind + 1));
                // On the cell the swap value is tau (x - x~) / (1 + tau x); with
                // z = tau (x - x~) / (1 + tau x~) its antiderivative is
                // (1 + tau x~) / tau * (z - ln(1 + z)).
                let start = x_tilde.max(lo);
                let u0 = 1.0 + tau * x_tilde;
                let z = |x: f64| tau * (x - x_tilde) / u0;
                let integral = if hi > start {
                    u0 / tau * (z_minus_ln1p(z(hi)) - z_minus_ln1p(z(start)))
                } else {
                    0.0
                };
                let mean = integral / (hi - lo);
                let mut head = vec![0usize; a];
                loop {
                    let mut prefix = 1.0;
                    for (l, &j) in head.iter().enumerate() {
                        prefix /= 1.0 + tenor.tau(l + 1) * grid.axis(l).node(j);
                    }
                    let mut full = head.clone();
                    full.push(j_ind);
                    full.extend_from_slice(&tail);
                    values[grid.flatten(&full)] = prefix * mean;
                    if !advance(&mut head, grid, 0) {
                        break;
                    }
                }
            }
        }
        if !advance(&mut tail, grid, a + 1) {
            break;
        }
    }
    Ok(values)
}

/// `z - ln(1 + z)` without cancellation for small `z`.
fn z_minus_ln1p(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let mut term = -z;
        let mut sum = 0.0;
        for n in 2..14 {
            term *= -z;
            sum += term / n as f64;
        }
        sum
    } else {
        z - z.ln_1p()
    }
}

/// Odometer over axes `first..first+index.len()`.
fn advance(index: &mut [usize], grid: &Grid, first: usize) -> bool {
    for (pos, j) in index.iter_mut().enumerate() {
        *j += 1;
        if *j < grid.axis(first + pos).len() {
            return true;
        }
        *j = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::axis::Axis;

    #[test]
    fn far_nodes_keep_raw_payoff() {
        let tenor = TenorStructure::from_payment_dates(&[0.25, 0.5]).unwrap();
        let k = 0.013;
        let spec = SwaptionSpec::european(1, 2, k);
        let grid = Grid::new(vec![
            Axis::uniform(0.5, 8).unwrap(),
            Axis::sinh(k, 0.5, 16, k / 10.0).unwrap(),
        ])
        .unwrap();
        let values = smooth_payoff(&grid, &spec, &tenor).unwrap();
        let j_ind = grid.axis(1).nearest(k);
        let mut changed = 0;
        for flat in 0..grid.len() {
            let idx = grid.unflatten(flat);
            let raw = relative_payoff_u0(&grid.point(&idx), &spec, &tenor);
            if idx[1] == j_ind {
                changed += usize::from(values[flat] != raw);
            } else {
                assert_eq!(values[flat], raw);
            }
        }
        assert!(changed > 0);
    }
}
