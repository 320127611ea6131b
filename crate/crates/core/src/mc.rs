//! Monte Carlo simulation of the forward market model under the risk-neutral
//! measure, in logarithmic coordinates.
//!
//! With lognormal volatilities the diffusion coefficient of `ln R_k` is
//! deterministic, so the Euler and Milstein schemes coincide:
//!
//! ```text
//! R_k(t+dt) = R_k(t) exp( mu_k/R_k dt - 1/2 gamma_k^2 sigma_k^2 dt + sigma_k gamma_k dW_k )
//! ```
//!
//! Each sample path draws from its own ChaCha8 stream, selected by
//! `(seed, path index)`, so results do not depend on how paths are sharded
//! across worker threads. Normal variates come from `rand_distr`'s ziggurat
//! `StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{FmmError, Result};
use crate::market::{Correlation, MarketData, RateState, VolSpec};
use crate::payoff::{relative_payoff_u0, SwaptionSpec};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;

/// Paths per shard; shards are reduced in index order.
const SHARD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub num_paths: usize,
    /// Time steps over `[0, T_a]`.
    pub num_steps: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(num_paths: usize, num_steps: usize, seed: u64) -> Self {
        Self {
            num_paths,
            num_steps,
            seed,
            antithetic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_paths < 2 || self.num_steps < 1 {
            return Err(FmmError::domain(format!(
                "Monte Carlo needs at least 2 paths and 1 step, got {} and {}",
                self.num_paths, self.num_steps
            )));
        }
        if self.antithetic && self.num_paths % 2 != 0 {
            return Err(FmmError::domain("antithetic sampling needs an even path count"));
        }
        Ok(())
    }
}

/// Sample mean with its 95% confidence half-interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub std_error: f64,
    pub num_paths: usize,
}

impl CiEstimate {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower() <= x && x <= self.upper()
    }
}

/// Lower-triangular `L` with `L L^T = rho`. Semi-definite matrices are
/// accepted; their null directions get zero columns.
pub fn correlation_factor(corr: &Correlation) -> Result<Vec<Vec<f64>>> {
    const TOL: f64 = 1e-10;
    let n = corr.dim();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = corr.get(j, j) - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -TOL {
            return Err(FmmError::Factorization { pivot: j + 1, value: d });
        }
        let pivot = if d > TOL { d.sqrt() } else { 0.0 };
        l[j][j] = pivot;
        for i in j + 1..n {
            let v = corr.get(i, j) - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if pivot == 0.0 {
                if v.abs() > 1e-8 {
                    return Err(FmmError::Factorization { pivot: j + 1, value: d });
                }
            } else {
                l[i][j] = v / pivot;
            }
        }
    }
    Ok(l)
}

/// One log-Euler step of the lognormal model from `state.t` to
/// `state.t + dt` with correlated Brownian increments `dw` (variance `dt`).
/// Rates whose decay factor vanishes at `state.t` are left untouched.
pub fn step_log(state: &RateState, dt: f64, dw: &[f64], md: &MarketData) -> Result<RateState> {
    let n = state.rates.len();
    if n > md.num_rates() || dw.len() < n {
        return Err(FmmError::domain("state, increments and market data sizes disagree"));
    }
    let coeffs = StepCoeffs::at(md, n, state.t)?;
    for k in coeffs.first..n {
        if coeffs.vol[k] > 0.0 && !(state.rates[k] > 0.0) {
            return Err(FmmError::domain(format!(
                "lognormal step needs positive rates, R_{} = {}",
                k + 1,
                state.rates[k]
            )));
        }
    }
    let mut rates = state.rates.clone();
    coeffs.advance(&mut rates, dt, dw, md);
    Ok(RateState::new(state.t + dt, rates))
}

/// Per-step deterministic coefficients shared by all paths.
#[derive(Debug, Clone)]
struct StepCoeffs {
    /// Zero-based index of the first rate still evolving.
    first: usize,
    /// `sigma_k(t) gamma_k(t)`.
    vol: Vec<f64>,
}

impl StepCoeffs {
    fn at(md: &MarketData, n: usize, t: f64) -> Result<Self> {
        let first = md.tenor.eta(t)?.max(1) - 1;
        let vol = (1..=n)
            .map(|k| md.sigma(k, t) * md.tenor.gamma(k, t))
            .collect();
        Ok(Self { first, vol })
    }

    fn advance(&self, rates: &mut [f64], dt: f64, dw: &[f64], md: &MarketData) {
        let n = rates.len();
        // Drift terms use the rates at the start of the step.
        let mut weighted = [0.0f64; 64];
        let mut weighted_vec;
        let w: &mut [f64] = if n <= 64 {
            &mut weighted[..n]
        } else {
            weighted_vec = vec![0.0; n];
            &mut weighted_vec
        };
        for i in self.first..n {
            let tau = md.tenor.tau(i + 1);
            w[i] = tau * self.vol[i] * rates[i] / (1.0 + tau * rates[i]);
        }
        for k in self.first..n {
            let vol = self.vol[k];
            if vol == 0.0 {
                continue;
            }
            let mut sum = 0.0;
            for (i, wi) in w.iter().enumerate().take(k + 1).skip(self.first) {
                sum += md.correlation.get(i, k) * wi;
            }
            let drift_over_rate = vol * sum;
            rates[k] *= (drift_over_rate * dt - 0.5 * vol * vol * dt + vol * dw[k]).exp();
        }
    }
}

/// Simulation time grid over `[0, T_a]` that contains every tenor date up
/// to `T_a`; steps are spread over the accrual periods in proportion to
/// their length, at least one per period.
pub fn simulation_times(md: &MarketData, expiry: usize, num_steps: usize) -> Vec<f64> {
    let horizon = md.tenor.date(expiry);
    let mut counts: Vec<usize> = (1..=expiry)
        .map(|k| ((num_steps as f64 * md.tenor.tau(k) / horizon).round() as usize).max(1))
        .collect();
    let total: usize = counts.iter().sum();
    if total != num_steps {
        let last = counts.last_mut().unwrap();
        *last = (*last + num_steps).saturating_sub(total).max(1);
    }
    let mut times = vec![0.0];
    for (k, &count) in counts.iter().enumerate() {
        let start = md.tenor.date(k);
        let end = md.tenor.date(k + 1);
        for s in 1..=count {
            times.push(if s == count {
                end
            } else {
                start + (end - start) * s as f64 / count as f64
            });
        }
    }
    times
}

struct SimulationPlan {
    steps: Vec<(f64, StepCoeffs)>,
    chol: Vec<Vec<f64>>,
    num_rates: usize,
}

impl SimulationPlan {
    fn new(md: &MarketData, expiry: usize, num_rates: usize, num_steps: usize) -> Result<Self> {
        let times = simulation_times(md, expiry, num_steps);
        let steps = times
            .windows(2)
            .map(|w| Ok((w[1] - w[0], StepCoeffs::at(md, num_rates, w[0])?)))
            .collect::<Result<Vec<_>>>()?;
        let chol = correlation_factor(&md.correlation)?
            .into_iter()
            .take(num_rates)
            .map(|row| row.into_iter().take(num_rates).collect())
            .collect();
        Ok(Self {
            steps,
            chol,
            num_rates,
        })
    }

    /// Runs one path from the initial curve; `sign` flips the normals for
    /// the antithetic partner.
    fn run(&self, md: &MarketData, normals: &[f64], sign: f64, rates: &mut [f64], dw: &mut [f64]) {
        let n = self.num_rates;
        rates.copy_from_slice(&md.initial_forwards[..n]);
        for (s, (dt, coeffs)) in self.steps.iter().enumerate() {
            let z = &normals[s * n..(s + 1) * n];
            let sq = dt.sqrt();
            for k in 0..n {
                let row = &self.chol[k];
                let mut acc = 0.0;
                for j in 0..=k {
                    acc += row[j] * z[j];
                }
                dw[k] = sign * sq * acc;
            }
            coeffs.advance(rates, *dt, dw, md);
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * self.count as f64 * other.count as f64 / count as f64;
        Moments { count, mean, m2 }
    }
}

/// Estimates `E[f(R_1(T_a), .., R_b(T_a))]` under the risk-neutral measure
/// of the lognormal model. Rates that fixed before `T_a` carry their
/// fixings. `f` is responsible for any deflation.
pub fn expectation_at_expiry<F>(
    md: &MarketData,
    expiry: usize,
    num_rates: usize,
    cfg: &McConfig,
    payoff: F,
) -> Result<CiEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if expiry == 0 || expiry > md.num_rates() || num_rates > md.num_rates() || num_rates == 0 {
        return Err(FmmError::domain(format!(
            "simulation needs 0 < a <= N and 0 < b <= N, got a = {expiry}, b = {num_rates}"
        )));
    }
    if let Some(k) = md.initial_forwards[..num_rates].iter().position(|&r| !(r > 0.0)) {
        return Err(FmmError::domain(format!(
            "lognormal simulation needs positive initial forwards, R_{}(0) = {}",
            k + 1,
            md.initial_forwards[k]
        )));
    }
    let plan = SimulationPlan::new(md, expiry, num_rates, cfg.num_steps)?;
    let samples = if cfg.antithetic {
        cfg.num_paths / 2
    } else {
        cfg.num_paths
    };
    let num_normals = plan.steps.len() * num_rates;
    let shards = samples.div_ceil(SHARD);

    let per_shard: Vec<Moments> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut normals = vec![0.0; num_normals];
            let mut rates = vec![0.0; num_rates];
            let mut dw = vec![0.0; num_rates];
            let mut moments = Moments::default();
            let end = ((shard + 1) * SHARD).min(samples);
            for sample in shard * SHARD..end {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(sample as u64);
                for z in normals.iter_mut() {
                    *z = StandardNormal.sample(&mut rng);
                }
                plan.run(md, &normals, 1.0, &mut rates, &mut dw);
                let mut value = payoff(&rates);
                if cfg.antithetic {
                    plan.run(md, &normals, -1.0, &mut rates, &mut dw);
                    value = 0.5 * (value + payoff(&rates));
                }
                moments.push(value);
            }
            moments
        })
        .collect();

    let total = per_shard
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    let variance = if total.count > 1 {
        total.m2 / (total.count - 1) as f64
    } else {
        0.0
    };
    let std_error = (variance / total.count as f64).sqrt();
    Ok(CiEstimate {
        mean: total.mean,
        half_width: Z_95 * std_error,
        std_error,
        num_paths: cfg.num_paths,
    })
}

/// Time-0 price of a European payer swaption: the expectation of its payoff
/// deflated by the simulated bank account.
pub fn price_swaption_mc(spec: &SwaptionSpec, md: &MarketData, cfg: &McConfig) -> Result<CiEstimate> {
    spec.validate(md.num_rates(), &VolSpec::Lognormal)?;
    if !spec.is_european() {
        return Err(FmmError::domain(
            "Monte Carlo pricing supports single-exercise swaptions only",
        ));
    }
    let tenor = &md.tenor;
    expectation_at_expiry(md, spec.expiry, spec.end, cfg, |rates| {
        relative_payoff_u0(rates, spec, tenor)
    })
}
