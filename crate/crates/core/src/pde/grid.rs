use super::axis::Axis;
use crate::error::{FmmError, Result};

/// Tensor grid over `N` axes, flattened with axis 0 fastest:
/// `J = sum_k j_k E_k`, `E_0 = 1`, `E_k = prod_{l<k} (M_l + 1)`.
///
/// Axis `k` (0-based) carries rate `R_{k+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(FmmError::domain("grid needs at least one axis"));
        }
        let mut strides = Vec::with_capacity(axes.len());
        let mut len = 1usize;
        for axis in &axes {
            strides.push(len);
            len = len
                .checked_mul(axis.len())
                .ok_or_else(|| FmmError::domain("grid size overflows"))?;
        }
        Ok(Self { axes, strides, len })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Node count per axis, `M_k + 1`.
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn flatten(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dim());
        index
            .iter()
            .zip(&self.strides)
            .map(|(j, s)| j * s)
            .sum()
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        debug_assert!(flat < self.len);
        self.axes
            .iter()
            .map(|axis| {
                let j = flat % axis.len();
                flat /= axis.len();
                j
            })
            .collect()
    }

    pub fn point(&self, index: &[usize]) -> Vec<f64> {
        index
            .iter()
            .zip(&self.axes)
            .map(|(&j, axis)| axis.node(j))
            .collect()
    }

    /// Advances `index` to the next multi-index in flattening order;
    /// returns false after the last one.
    pub fn advance(&self, index: &mut [usize]) -> bool {
        for (j, axis) in index.iter_mut().zip(&self.axes) {
            *j += 1;
            if *j < axis.len() {
                return true;
            }
            *j = 0;
        }
        false
    }
}
