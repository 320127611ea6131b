//! Static market inputs of the forward market model: tenor arithmetic,
//! volatility decay, instantaneous volatilities, the risk-neutral drift and
//! the reconstruction of extended discount factors from forward-rate fixings.
//!
//! Rate indices are 1-based throughout (`k = 1..=N` addresses the rate
//! accruing over `[T_{k-1}, T_k)`); date indices run over `0..=N`.

use crate::error::{FmmError, Result};
use crate::mc::correlation_factor;

/// Dates `0 = T_0 < T_1 < ... < T_N` in year units.
#[derive(Debug, Clone, PartialEq)]
pub struct TenorStructure {
    dates: Vec<f64>,
    year_fractions: Vec<f64>,
}

impl TenorStructure {
    /// Builds a tenor from the full date list, `T_0` included.
    pub fn new(dates: Vec<f64>) -> Result<Self> {
        if dates.len() < 2 {
            return Err(FmmError::domain("a tenor needs at least T_0 and T_1"));
        }
        if dates[0] != 0.0 {
            return Err(FmmError::domain(format!("T_0 must be 0, got {}", dates[0])));
        }
        if dates.iter().any(|d| !d.is_finite()) {
            return Err(FmmError::domain("tenor dates must be finite"));
        }
        if let Some(w) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(FmmError::domain(format!(
                "tenor dates must be strictly increasing (T_{} = {} >= T_{} = {})",
                w,
                dates[w],
                w + 1,
                dates[w + 1]
            )));
        }
        let year_fractions = dates.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            dates,
            year_fractions,
        })
    }

    /// Builds a tenor from `T_1..T_N`; `T_0 = 0` is prepended.
    pub fn from_payment_dates(payment_dates: &[f64]) -> Result<Self> {
        let mut dates = Vec::with_capacity(payment_dates.len() + 1);
        dates.push(0.0);
        dates.extend_from_slice(payment_dates);
        Self::new(dates)
    }

    /// Number of modelled rates `N`.
    pub fn len(&self) -> usize {
        self.year_fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.year_fractions.is_empty()
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    /// `T_k` for `k = 0..=N`.
    pub fn date(&self, k: usize) -> f64 {
        self.dates[k]
    }

    /// `tau_k = T_k - T_{k-1}` for `k = 1..=N`.
    pub fn tau(&self, k: usize) -> f64 {
        self.year_fractions[k - 1]
    }

    pub fn year_fractions(&self) -> &[f64] {
        &self.year_fractions
    }

    /// Index of the first tenor date not before `t`.
    pub fn eta(&self, t: f64) -> Result<usize> {
        let last = *self.dates.last().unwrap();
        if !(0.0..=last).contains(&t) {
            return Err(FmmError::domain(format!(
                "time {t} lies outside the tenor [0, {last}]"
            )));
        }
        Ok(self.dates.partition_point(|&d| d < t))
    }

    /// Linear volatility decay of rate `k`: one before its accrual period,
    /// zero after it.
    pub fn gamma(&self, k: usize, t: f64) -> f64 {
        let start = self.dates[k - 1];
        let end = self.dates[k];
        if t <= start {
            1.0
        } else if t >= end {
            0.0
        } else {
            (end - t) / (end - start)
        }
    }

    /// Slope of `gamma(k, .)` just before `t` (left derivative).
    pub fn gamma_left_slope(&self, k: usize, t: f64) -> f64 {
        let start = self.dates[k - 1];
        let end = self.dates[k];
        if t > start && t <= end {
            -1.0 / (end - start)
        } else {
            0.0
        }
    }
}

/// Deterministic volatility level `sigma_k(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Volatility {
    Constant(f64),
    /// `values[i]` applies on `[breaks[i-1], breaks[i])`, with the open ends
    /// taken by the first and last values.
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<f64> },
}

impl Volatility {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Volatility::Constant(s) => *s,
            Volatility::PiecewiseConstant { breaks, values } => {
                values[breaks.partition_point(|&b| b <= t)]
            }
        }
    }

    /// Left limit `sigma(t-)`, used when stepping backwards in time.
    pub fn at_left(&self, t: f64) -> f64 {
        match self {
            Volatility::Constant(s) => *s,
            Volatility::PiecewiseConstant { breaks, values } => {
                values[breaks.partition_point(|&b| b < t)]
            }
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        let ok = match self {
            Volatility::Constant(s) => s.is_finite() && *s >= 0.0,
            Volatility::PiecewiseConstant { breaks, values } => {
                values.len() == breaks.len() + 1
                    && breaks.windows(2).all(|w| w[0] < w[1])
                    && values.iter().all(|s| s.is_finite() && *s >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(FmmError::domain(format!("invalid volatility for rate {k}")))
        }
    }
}

/// Instantaneous volatility specification `nu_k`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum VolSpec {
    Normal,
    #[default]
    Lognormal,
    /// Common positive shift applied to every rate.
    ShiftedLognormal(f64),
    /// Common exponent in `[0, 1]`.
    Cev(f64),
}

impl VolSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            VolSpec::ShiftedLognormal(shift) if !(shift > 0.0 && shift.is_finite()) => Err(
                FmmError::domain(format!("shift must be positive, got {shift}")),
            ),
            VolSpec::Cev(beta) if !(0.0..=1.0).contains(&beta) => Err(FmmError::domain(
                format!("CEV exponent must lie in [0, 1], got {beta}"),
            )),
            _ => Ok(()),
        }
    }

    /// Lower bound `R^min` admitted for the rates.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            VolSpec::Normal => f64::NEG_INFINITY,
            VolSpec::Lognormal | VolSpec::Cev(_) => 0.0,
            VolSpec::ShiftedLognormal(shift) => -shift,
        }
    }
}

/// `nu_k(t)` for a rate at level `x` with volatility level `sigma`.
pub fn nu(spec: &VolSpec, sigma: f64, x: f64) -> Result<f64> {
    if x < spec.lower_bound() || x.is_nan() {
        return Err(FmmError::domain(format!(
            "rate {x} below the lower bound {} of {spec:?}",
            spec.lower_bound()
        )));
    }
    Ok(match *spec {
        VolSpec::Normal => sigma,
        VolSpec::Lognormal => sigma * x,
        VolSpec::ShiftedLognormal(shift) => sigma * (x + shift),
        VolSpec::Cev(beta) => sigma * x.powf(beta),
    })
}

/// Symmetric correlation matrix with unit diagonal, validated positive
/// semi-definite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    dim: usize,
    entries: Vec<f64>,
}

impl Correlation {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(FmmError::domain("correlation matrix must be square"));
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        for i in 0..dim {
            if (entries[i * dim + i] - 1.0).abs() > 1e-12 {
                return Err(FmmError::domain(format!(
                    "correlation diagonal entry {} is {}, expected 1",
                    i + 1,
                    entries[i * dim + i]
                )));
            }
            for j in 0..dim {
                let v = entries[i * dim + j];
                if !v.is_finite() || v.abs() > 1.0 {
                    return Err(FmmError::domain(format!(
                        "correlation entry ({}, {}) = {v} outside [-1, 1]",
                        i + 1,
                        j + 1
                    )));
                }
                if (v - entries[j * dim + i]).abs() > 1e-12 {
                    return Err(FmmError::domain(format!(
                        "correlation matrix is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let corr = Self { dim, entries };
        correlation_factor(&corr)?;
        Ok(corr)
    }

    /// Every off-diagonal entry equal to `rho`.
    pub fn constant(dim: usize, rho: f64) -> Result<Self> {
        let rows = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { rho }).collect())
            .collect();
        Self::new(rows)
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(dim, 0.0).expect("identity is a valid correlation")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Zero-based matrix entry.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }
}

/// Static model inputs: tenor, initial forwards, volatility levels and
/// correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    pub tenor: TenorStructure,
    pub initial_forwards: Vec<f64>,
    pub vols: Vec<Volatility>,
    pub correlation: Correlation,
}

impl MarketData {
    pub fn new(
        tenor: TenorStructure,
        initial_forwards: Vec<f64>,
        vols: Vec<Volatility>,
        correlation: Correlation,
    ) -> Result<Self> {
        let n = tenor.len();
        if initial_forwards.len() != n || vols.len() != n || correlation.dim() != n {
            return Err(FmmError::domain(format!(
                "market data sizes disagree: {n} dates, {} forwards, {} vols, {}x{0} correlation",
                initial_forwards.len(),
                vols.len(),
                correlation.dim()
            )));
        }
        for (k, vol) in vols.iter().enumerate() {
            vol.validate(k + 1)?;
        }
        if let Some(k) = initial_forwards.iter().position(|r| !r.is_finite()) {
            return Err(FmmError::domain(format!("initial forward {} is not finite", k + 1)));
        }
        Ok(Self {
            tenor,
            initial_forwards,
            vols,
            correlation,
        })
    }

    /// Market data with constant volatilities and a constant correlation.
    pub fn with_constant_params(
        payment_dates: &[f64],
        initial_forwards: &[f64],
        sigmas: &[f64],
        rho: f64,
    ) -> Result<Self> {
        let tenor = TenorStructure::from_payment_dates(payment_dates)?;
        let corr = Correlation::constant(tenor.len(), rho)?;
        Self::new(
            tenor,
            initial_forwards.to_vec(),
            sigmas.iter().map(|&s| Volatility::Constant(s)).collect(),
            corr,
        )
    }

    pub fn num_rates(&self) -> usize {
        self.tenor.len()
    }

    /// `R_k(0)`.
    pub fn forward0(&self, k: usize) -> f64 {
        self.initial_forwards[k - 1]
    }

    /// `sigma_k(t)`.
    pub fn sigma(&self, k: usize, t: f64) -> f64 {
        self.vols[k - 1].at(t)
    }

    /// `rho_{kl}`, 1-based.
    pub fn rho(&self, k: usize, l: usize) -> f64 {
        self.correlation.get(k - 1, l - 1)
    }

    /// `P(0, T_j)` on the initial curve.
    pub fn initial_discount(&self, j: usize) -> Result<f64> {
        let state = RateState::new(0.0, self.initial_forwards.clone());
        discount_factor(&state, &self.tenor, 0, j)
    }

    /// Market data restricted to the first `n` rates.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.num_rates() {
            return Err(FmmError::domain(format!(
                "cannot truncate {} rates to {n}",
                self.num_rates()
            )));
        }
        let rows = (0..n)
            .map(|i| (0..n).map(|j| self.correlation.get(i, j)).collect())
            .collect();
        Self::new(
            TenorStructure::new(self.tenor.dates()[..=n].to_vec())?,
            self.initial_forwards[..n].to_vec(),
            self.vols[..n].to_vec(),
            Correlation::new(rows)?,
        )
    }
}

/// Values of the forward rates at time `t`. `rates[k-1]` is `R_k(t)`; for
/// rates already past their accrual period it is the realized fixing.
#[derive(Debug, Clone, PartialEq)]
pub struct RateState {
    pub t: f64,
    pub rates: Vec<f64>,
}

impl RateState {
    pub fn new(t: f64, rates: Vec<f64>) -> Self {
        Self { t, rates }
    }

    fn rate(&self, k: usize) -> Result<f64> {
        self.rates
            .get(k - 1)
            .copied()
            .filter(|r| r.is_finite())
            .ok_or(FmmError::IncompleteState { index: k })
    }
}

pub(crate) fn growth_factor(tau: f64, x: f64, k: usize) -> Result<f64> {
    let g = 1.0 + tau * x;
    if g <= 0.0 {
        Err(FmmError::SingularDenominator { index: k, value: g })
    } else {
        Ok(g)
    }
}

/// Risk-neutral drift `mu_k(t)` of rate `k` in state `state`.
pub fn drift_mu(
    k: usize,
    t: f64,
    state: &RateState,
    md: &MarketData,
    spec: &VolSpec,
) -> Result<f64> {
    let tenor = &md.tenor;
    if k == 0 || k > tenor.len() {
        return Err(FmmError::domain(format!("rate index {k} out of range")));
    }
    let gamma_k = tenor.gamma(k, t);
    if gamma_k == 0.0 {
        return Ok(0.0);
    }
    let first = tenor.eta(t)?.max(1);
    let mut sum = 0.0;
    for i in first..=k {
        let x = state.rate(i)?;
        let tau = tenor.tau(i);
        let growth = growth_factor(tau, x, i)?;
        let nu_i = nu(spec, md.sigma(i, t), x)?;
        sum += md.rho(i, k) * tau * nu_i * tenor.gamma(i, t) / growth;
    }
    let nu_k = nu(spec, md.sigma(k, t), state.rate(k)?)?;
    Ok(nu_k * gamma_k * sum)
}

/// Extended discount factor `P(T_i, T_j)` from the rates observed at `T_i`.
///
/// For `i < j` the rates `R_{i+1}..R_j` at `T_i` are needed; for `i > j` the
/// fixings `R_{j+1}(T_{j+1})..R_i(T_i)`, which the state carries as its
/// frozen values. `j = 0` yields the bank account `B(T_i)`.
pub fn discount_factor(state: &RateState, tenor: &TenorStructure, i: usize, j: usize) -> Result<f64> {
    let n = tenor.len();
    if i > n || j > n {
        return Err(FmmError::domain(format!(
            "date indices ({i}, {j}) outside 0..={n}"
        )));
    }
    let mut p = 1.0;
    if i < j {
        for k in i + 1..=j {
            p /= growth_factor(tenor.tau(k), state.rate(k)?, k)?;
        }
    } else {
        for k in j + 1..=i {
            p *= growth_factor(tenor.tau(k), state.rate(k)?, k)?;
        }
    }
    Ok(p)
}

/// Par rate of the swap fixing at `T_a` and paying over `T_{a+1}..T_b`,
/// valued on the initial curve.
pub fn atm_strike(md: &MarketData, a: usize, b: usize) -> Result<f64> {
    let (annuity, float_leg) = annuity_and_float(md, a, b)?;
    Ok(float_leg / annuity)
}

/// `sum_{i=a+1}^{b} tau_i P(0, T_i)`.
pub fn annuity(md: &MarketData, a: usize, b: usize) -> Result<f64> {
    Ok(annuity_and_float(md, a, b)?.0)
}

fn annuity_and_float(md: &MarketData, a: usize, b: usize) -> Result<(f64, f64)> {
    if a >= b || b > md.num_rates() {
        return Err(FmmError::domain(format!(
            "swap indices need 0 <= a < b <= N, got a = {a}, b = {b}, N = {}",
            md.num_rates()
        )));
    }
    let mut annuity = 0.0;
    let mut float_leg = 0.0;
    for i in a + 1..=b {
        let w = md.tenor.tau(i) * md.initial_discount(i)?;
        annuity += w;
        float_leg += w * md.forward0(i);
    }
    Ok((annuity, float_leg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_rates() -> MarketData {
        MarketData::with_constant_params(
            &[0.25, 0.5, 0.75, 1.0, 1.25],
            &[0.01, 0.013, 0.014, 0.015, 0.016],
            &[0.2, 0.15, 0.25, 0.26, 0.27],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn eta_examples() {
        let md = five_rates();
        assert_eq!(md.tenor.eta(0.3).unwrap(), 2);
        assert_eq!(md.tenor.eta(0.5).unwrap(), 2);
        assert_eq!(md.tenor.eta(0.0).unwrap(), 0);
        for j in 0..=5 {
            assert_eq!(md.tenor.eta(md.tenor.date(j)).unwrap(), j);
        }
        assert!(md.tenor.eta(1.3).is_err());
        assert!(md.tenor.eta(-0.1).is_err());
    }

    #[test]
    fn gamma_examples() {
        let md = five_rates();
        assert!((md.tenor.gamma(1, 0.1) - 0.6).abs() < 1e-15);
        assert_eq!(md.tenor.gamma(2, 0.2), 1.0);
        assert_eq!(md.tenor.gamma(2, 0.25), 1.0);
        assert_eq!(md.tenor.gamma(2, 0.5), 0.0);
        assert_eq!(md.tenor.gamma(2, 0.9), 0.0);
    }

    #[test]
    fn tenor_rejects_bad_dates() {
        assert!(TenorStructure::from_payment_dates(&[0.25, 0.25]).is_err());
        assert!(TenorStructure::from_payment_dates(&[0.5, 0.25]).is_err());
        assert!(TenorStructure::new(vec![0.1, 0.25]).is_err());
    }

    #[test]
    fn nu_examples() {
        assert!((nu(&VolSpec::Lognormal, 0.2, 0.01).unwrap() - 0.002).abs() < 1e-18);
        assert_eq!(nu(&VolSpec::Normal, 0.2, 0.37).unwrap(), 0.2);
        assert_eq!(nu(&VolSpec::Normal, 0.2, -3.0).unwrap(), 0.2);
        let shifted = nu(&VolSpec::ShiftedLognormal(0.02), 0.15, -0.01).unwrap();
        assert!((shifted - 0.0015).abs() < 1e-15);
        assert!(nu(&VolSpec::Lognormal, 0.2, -0.001).is_err());
        assert!((nu(&VolSpec::Cev(0.5), 0.2, 0.04).unwrap() - 0.04).abs() < 1e-15);
        assert!(VolSpec::Cev(1.5).validate().is_err());
        assert!(VolSpec::ShiftedLognormal(0.0).validate().is_err());
    }

    #[test]
    fn drift_single_term() {
        let md = five_rates();
        let state = RateState::new(0.0, md.initial_forwards.clone());
        let mu = drift_mu(1, 0.0, &state, &md, &VolSpec::Lognormal).unwrap();
        // (0.2 * 0.01)^2 * 0.25 / 1.0025
        let expected = 0.002 * 0.25 * 0.002 / 1.0025;
        assert!((mu - expected).abs() < 1e-20);
        assert!((mu - 9.97506e-7).abs() < 1e-12);
    }

    #[test]
    fn drift_vanishes_after_expiry() {
        let md = five_rates();
        let state = RateState::new(0.6, md.initial_forwards.clone());
        assert_eq!(drift_mu(2, 0.6, &state, &md, &VolSpec::Lognormal).unwrap(), 0.0);
        assert_eq!(drift_mu(1, 0.25, &state, &md, &VolSpec::Lognormal).unwrap(), 0.0);
    }

    #[test]
    fn drift_uncorrelated_is_self_term() {
        let md = MarketData::with_constant_params(&[0.25, 0.5], &[0.01, 0.013], &[0.2, 0.15], 0.0)
            .unwrap();
        let state = RateState::new(0.1, md.initial_forwards.clone());
        let mu = drift_mu(2, 0.1, &state, &md, &VolSpec::Lognormal).unwrap();
        let nu2 = 0.15 * 0.013;
        let expected = nu2 * nu2 * 0.25 / (1.0 + 0.25 * 0.013);
        assert!((mu - expected).abs() < 1e-20);
    }

    #[test]
    fn drift_flags_singular_denominator() {
        let md = five_rates();
        let state = RateState::new(0.0, vec![-4.0, 0.013, 0.014, 0.015, 0.016]);
        let err = drift_mu(2, 0.0, &state, &md, &VolSpec::Normal).unwrap_err();
        assert!(matches!(err, FmmError::SingularDenominator { index: 1, .. }));
    }

    #[test]
    fn discount_factor_examples() {
        let md = five_rates();
        let state = RateState::new(0.0, md.initial_forwards.clone());
        assert_eq!(discount_factor(&state, &md.tenor, 3, 3).unwrap(), 1.0);
        let p01 = discount_factor(&state, &md.tenor, 0, 1).unwrap();
        assert!((p01 - 1.0 / 1.0025).abs() < 1e-15);
        assert!((p01 - 0.99750623).abs() < 1e-8);

        let fixed = RateState::new(0.5, vec![0.011, 0.012]);
        let b = discount_factor(&fixed, &md.tenor, 2, 0).unwrap();
        assert!((b - (1.0 + 0.25 * 0.011) * (1.0 + 0.25 * 0.012)).abs() < 1e-15);
    }

    #[test]
    fn discount_factor_missing_fixing() {
        let md = five_rates();
        let state = RateState::new(0.0, vec![0.01]);
        assert_eq!(
            discount_factor(&state, &md.tenor, 0, 2).unwrap_err(),
            FmmError::IncompleteState { index: 2 }
        );
    }

    #[test]
    fn atm_strike_examples() {
        let md = five_rates();
        assert!((atm_strike(&md, 1, 2).unwrap() - 0.013).abs() < 1e-15);
        assert!(atm_strike(&md, 2, 2).is_err());
        assert!(atm_strike(&md, 3, 2).is_err());

        // Oracle: bisection on the time-0 swap value.
        let npv = |k: f64| -> f64 {
            (2..=3)
                .map(|i| md.tenor.tau(i) * md.initial_discount(i).unwrap() * (md.forward0(i) - k))
                .sum()
        };
        let (mut lo, mut hi) = (0.0, 0.1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if npv(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = atm_strike(&md, 1, 3).unwrap();
        assert!((k - 0.5 * (lo + hi)).abs() < 1e-15);
        assert!(k > 0.013 && k < 0.014);
    }

    #[test]
    fn correlation_validation() {
        assert!(Correlation::constant(2, 1.5).is_err());
        assert!(Correlation::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(Correlation::new(vec![vec![1.0, 0.9, 0.9], vec![0.9, 1.0, -0.9], vec![0.9, -0.9, 1.0]]).is_err());
        assert!(Correlation::constant(3, 1.0).is_ok());
    }

    #[test]
    fn piecewise_volatility_lookup() {
        let v = Volatility::PiecewiseConstant {
            breaks: vec![0.25, 0.5],
            values: vec![0.1, 0.2, 0.3],
        };
        assert_eq!(v.at(0.0), 0.1);
        assert_eq!(v.at(0.25), 0.2);
        assert_eq!(v.at_left(0.25), 0.1);
        assert_eq!(v.at(0.49), 0.2);
        assert_eq!(v.at(2.0), 0.3);
    }
}
