use crate::error::{FmmError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisKind {
    Uniform,
    /// `x = center + stretch * sinh(xi)` on a uniform `xi` mesh.
    Sinh { center: f64, stretch: f64 },
}

/// One spatial direction: nodes `x_0 = 0 < .. < x_M = R_max` with
/// three-point stencils for the first (`beta`) and second (`eta`)
/// derivatives at every node.
///
/// Boundary rows: at `j = 0` both stencils are zero, since every PDE
/// coefficient carries a factor `x` there. At `j = M` the condition
/// `u_xx = 0` is imposed; eliminating the virtual node turns the central
/// first derivative into the backward slope `(Y_M - Y_{M-1}) / h_M`, so
/// `beta = (-1/h_M, 1/h_M, 0)` and `eta = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    kind: AxisKind,
    nodes: Vec<f64>,
    beta: Vec<[f64; 3]>,
    eta: Vec<[f64; 3]>,
}

impl Axis {
    /// `x_j = j R_max / M`.
    pub fn uniform(r_max: f64, m: usize) -> Result<Self> {
        check_resolution(m)?;
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(FmmError::domain(format!("axis upper bound {r_max} must be positive")));
        }
        let h = r_max / m as f64;
        let mut nodes: Vec<f64> = (0..=m).map(|j| j as f64 * h).collect();
        nodes[m] = r_max;
        let mut beta = vec![[0.0; 3]; m + 1];
        let mut eta = vec![[0.0; 3]; m + 1];
        for j in 1..m {
            beta[j] = [-0.5 / h, 0.0, 0.5 / h];
            eta[j] = [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)];
        }
        beta[m] = [-1.0 / h, 1.0 / h, 0.0];
        Ok(Self {
            kind: AxisKind::Uniform,
            nodes,
            beta,
            eta,
        })
    }

    /// Mesh concentrated around `center`:
    /// `x_j = center + stretch * sinh(xi_min + j dxi)`, with `xi_min` and
    /// `xi_max` chosen so that `x_0 = 0` and `x_M = R_max`.
    pub fn sinh(center: f64, r_max: f64, m: usize, stretch: f64) -> Result<Self> {
        check_resolution(m)?;
        if !(center > 0.0 && center < r_max) || !r_max.is_finite() {
            return Err(FmmError::domain(format!(
                "sinh axis needs 0 < K < R_max, got K = {center}, R_max = {r_max}"
            )));
        }
        if !(stretch > 0.0) || !stretch.is_finite() {
            return Err(FmmError::domain(format!("stretch {stretch} must be positive")));
        }
        let xi_min = (-center / stretch).asinh();
        let xi_max = ((r_max - center) / stretch).asinh();
        let dxi = (xi_max - xi_min) / m as f64;
        let mut nodes: Vec<f64> = (0..=m)
            .map(|j| center + stretch * (xi_min + j as f64 * dxi).sinh())
            .collect();
        nodes[0] = 0.0;
        nodes[m] = r_max;
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FmmError::domain("sinh axis nodes are not strictly increasing"));
        }
        let mut beta = vec![[0.0; 3]; m + 1];
        let mut eta = vec![[0.0; 3]; m + 1];
        for j in 1..m {
            let h0 = nodes[j] - nodes[j - 1];
            let h1 = nodes[j + 1] - nodes[j];
            beta[j] = [
                -h1 / (h0 * (h0 + h1)),
                (h1 - h0) / (h0 * h1),
                h0 / (h1 * (h0 + h1)),
            ];
            eta[j] = [
                2.0 / (h0 * (h0 + h1)),
                -2.0 / (h0 * h1),
                2.0 / (h1 * (h0 + h1)),
            ];
        }
        let hm = nodes[m] - nodes[m - 1];
        beta[m] = [-1.0 / hm, 1.0 / hm, 0.0];
        Ok(Self {
            kind: AxisKind::Sinh { center, stretch },
            nodes,
            beta,
            eta,
        })
    }

    pub fn kind(&self) -> AxisKind {
        self.kind
    }

    /// Number of intervals `M`.
    pub fn resolution(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Number of nodes `M + 1`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    pub fn upper(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// `h_j = x_j - x_{j-1}` for `1 <= j <= M`.
    pub fn spacing(&self, j: usize) -> f64 {
        self.nodes[j] - self.nodes[j - 1]
    }

    /// First-derivative weights on `(x_{j-1}, x_j, x_{j+1})`.
    pub fn beta(&self, j: usize) -> [f64; 3] {
        self.beta[j]
    }

    /// Second-derivative weights on `(x_{j-1}, x_j, x_{j+1})`.
    pub fn eta(&self, j: usize) -> [f64; 3] {
        self.eta[j]
    }

    pub fn betas(&self) -> &[[f64; 3]] {
        &self.beta
    }

    pub fn etas(&self) -> &[[f64; 3]] {
        &self.eta
    }

    /// Index of the node nearest to `x` (lowest index on ties).
    pub fn nearest(&self, x: f64) -> usize {
        let p = self.nodes.partition_point(|&n| n < x);
        if p == 0 {
            0
        } else if p == self.nodes.len() {
            p - 1
        } else if x - self.nodes[p - 1] <= self.nodes[p] - x {
            p - 1
        } else {
            p
        }
    }

    /// Index `j` with `x_j <= x <= x_{j+1}`, `j < M`, for `x` in range.
    pub fn cell(&self, x: f64) -> Option<usize> {
        if !(x >= 0.0 && x <= self.upper()) {
            return None;
        }
        let p = self.nodes.partition_point(|&n| n <= x);
        Some(p.saturating_sub(1).min(self.resolution() - 1))
    }
}

fn check_resolution(m: usize) -> Result<()> {
    if m < 2 {
        return Err(FmmError::domain(format!("axis resolution {m} must be at least 2")));
    }
    Ok(())
}
