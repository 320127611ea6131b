//! Swap and swaption payoffs, including the payoff deflated by the bank
//! account that serves as the initial condition of the pricing PDE.

use crate::error::{FmmError, Result};
use crate::market::{discount_factor, growth_factor, RateState, TenorStructure, VolSpec};

/// Payer swaption on the swap over `T_{a+1}..T_b`, exercisable at the listed
/// tenor dates. The last exercise date is the expiry `T_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwaptionSpec {
    pub expiry: usize,
    pub end: usize,
    pub strike: f64,
    pub exercise: Vec<usize>,
}

impl SwaptionSpec {
    pub fn european(expiry: usize, end: usize, strike: f64) -> Self {
        Self {
            expiry,
            end,
            strike,
            exercise: vec![expiry],
        }
    }

    /// Bermudan swaption; `early` lists the exercise dates before the expiry.
    pub fn bermudan(expiry: usize, end: usize, strike: f64, early: &[usize]) -> Self {
        let mut exercise = early.to_vec();
        exercise.push(expiry);
        Self {
            expiry,
            end,
            strike,
            exercise,
        }
    }

    pub fn is_european(&self) -> bool {
        self.exercise.len() == 1
    }

    pub fn validate(&self, num_rates: usize, spec: &VolSpec) -> Result<()> {
        let (a, b) = (self.expiry, self.end);
        if !(0 < a && a < b && b <= num_rates) {
            return Err(FmmError::domain(format!(
                "swaption indices need 0 < a < b <= N, got a = {a}, b = {b}, N = {num_rates}"
            )));
        }
        if !(self.strike > spec.lower_bound()) || !self.strike.is_finite() {
            return Err(FmmError::domain(format!(
                "strike {} must exceed the rate lower bound {}",
                self.strike,
                spec.lower_bound()
            )));
        }
        if self.exercise.is_empty()
            || self.exercise[0] == 0
            || self.exercise.windows(2).any(|w| w[1] <= w[0])
            || *self.exercise.last().unwrap() != a
        {
            return Err(FmmError::domain(format!(
                "exercise dates {:?} must be strictly increasing, positive and end at {a}",
                self.exercise
            )));
        }
        Ok(())
    }

    pub fn with_strike(&self, strike: f64) -> Self {
        Self {
            strike,
            ..self.clone()
        }
    }
}

/// Value at `T_a` of the payer swap over `T_{a+1}..T_b`.
pub fn irs_value(state: &RateState, spec: &SwaptionSpec, tenor: &TenorStructure) -> Result<f64> {
    let (a, b) = (spec.expiry, spec.end);
    if b <= a || b > tenor.len() {
        return Err(FmmError::domain(format!("swap needs a < b <= N, got a = {a}, b = {b}")));
    }
    let mut value = 0.0;
    for i in a + 1..=b {
        let rate = state
            .rates
            .get(i - 1)
            .copied()
            .ok_or(FmmError::IncompleteState { index: i })?;
        value += discount_factor(state, tenor, a, i)? * tenor.tau(i) * (rate - spec.strike);
    }
    Ok(value)
}

/// Swap value entered at `T_first` over `T_{first+1}..T_end`, deflated by the
/// bank account `P(T_first, T_0)`:
/// `sum_{k=first+1}^{end} (prod_{l=1}^{k} 1/(1 + tau_l x_l)) tau_k (x_k - K)`.
pub fn deflated_swap_value(
    x: &[f64],
    first: usize,
    end: usize,
    strike: f64,
    tenor: &TenorStructure,
) -> f64 {
    let mut discount = 1.0;
    for l in 1..=first {
        discount /= 1.0 + tenor.tau(l) * x[l - 1];
    }
    let mut value = 0.0;
    for k in first + 1..=end {
        let tau = tenor.tau(k);
        discount /= 1.0 + tau * x[k - 1];
        value += discount * tau * (x[k - 1] - strike);
    }
    value
}

/// Swaption payoff at expiry deflated by the bank account, as a function of
/// the rates `x_1..x_b` at expiry. This is the initial condition of the
/// time-reversed pricing PDE.
pub fn relative_payoff_u0(x: &[f64], spec: &SwaptionSpec, tenor: &TenorStructure) -> f64 {
    deflated_swap_value(x, spec.expiry, spec.end, spec.strike, tenor).max(0.0)
}

/// Swap value with the factors up to `T_{a+1}` removed:
/// `sum_{k=a+1}^{b} (prod_{l=a+1}^{k} 1/(1 + tau_l x_l)) tau_k (x_k - K)`.
/// Shares its sign with the deflated swap value; its zero set is where the
/// payoff loses differentiability.
pub fn reduced_swap_value(x: &[f64], spec: &SwaptionSpec, tenor: &TenorStructure) -> f64 {
    let mut discount = 1.0;
    let mut value = 0.0;
    for k in spec.expiry + 1..=spec.end {
        let tau = tenor.tau(k);
        discount /= 1.0 + tau * x[k - 1];
        value += discount * tau * (x[k - 1] - spec.strike);
    }
    value
}

/// Checked variant of [`relative_payoff_u0`] for arbitrary states.
pub fn checked_relative_payoff(
    x: &[f64],
    spec: &SwaptionSpec,
    tenor: &TenorStructure,
) -> Result<f64> {
    if x.len() < spec.end {
        return Err(FmmError::IncompleteState { index: x.len() + 1 });
    }
    for (l, &xl) in x.iter().enumerate().take(spec.end) {
        growth_factor(tenor.tau(l + 1), xl, l + 1)?;
    }
    Ok(relative_payoff_u0(x, spec, tenor))
}
