//! TOML run configuration.
//!
//! ```toml
//! [market]
//! correlation = 0.5            # constant off-diagonal value, or a full matrix
//! rows = [
//!   { t = 0.25, r0 = 0.010, sigma = 0.20 },
//!   { t = 0.50, r0 = 0.013, sigma = 0.15 },
//! ]
//!
//! [product]
//! expiry = 1                   # a: option expiry T_a
//! end = 2                      # b: last payment date T_b
//! strikes = ["x1.2 ATM", "ATM", 0.0125]
//! early_exercise = []          # Bermudan dates before T_a
//!
//! [mc]
//! paths = 1000000
//! steps = 100
//! seed = 1
//! antithetic = false
//!
//! [pde]
//! resolution = 256             # L for every axis, or one value per axis
//! r_max = 0.5                  # one bound or one per axis; default max(0.5, 30 K_ATM)
//! mesh = "non-uniform"         # or "uniform"
//! stretch = 0.1                # sinh stretch as a multiple of the strike
//! dt_divisor = 10              # dt = tau_1 / 2^r; omitted: dt = tau_1 / (2 L)
//! theta = 0.5
//! kappa = 0.5                  # nu = kappa N theta for N >= 4
//! # nu = 0.5                   # explicit nu
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use toml::Spanned;

use crate::amfr::DEFAULT_KAPPA;
use crate::analytics::{PdeConfig, TimeStepRule};
use crate::error::{FmmError, Result};
use crate::market::{atm_strike, Correlation, MarketData, TenorStructure, Volatility};
use crate::mc::McConfig;
use crate::payoff::SwaptionSpec;
use crate::pde::{GridSpec, MeshKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrikeSpec {
    Absolute(f64),
    /// Multiple of the par rate of the underlying swap.
    AtmMultiple(f64),
}

impl StrikeSpec {
    pub fn resolve(&self, k_atm: f64) -> f64 {
        match *self {
            StrikeSpec::Absolute(k) => k,
            StrikeSpec::AtmMultiple(m) => m * k_atm,
        }
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let t = text.trim();
        if let Ok(k) = t.parse::<f64>() {
            return Ok(StrikeSpec::Absolute(k));
        }
        let upper = t.to_ascii_uppercase();
        let Some(head) = upper.strip_suffix("ATM") else {
            return Err(format!("strike `{text}` is neither a number nor `xM ATM`"));
        };
        let head = head.trim();
        if head.is_empty() {
            return Ok(StrikeSpec::AtmMultiple(1.0));
        }
        let factor = head.strip_prefix('X').unwrap_or(head).trim();
        factor
            .parse::<f64>()
            .map(StrikeSpec::AtmMultiple)
            .map_err(|_| format!("bad ATM multiple in strike `{text}`"))
    }
}

impl fmt::Display for StrikeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrikeSpec::Absolute(k) => write!(f, "{k}"),
            StrikeSpec::AtmMultiple(m) if *m == 1.0 => write!(f, "ATM"),
            StrikeSpec::AtmMultiple(m) => write!(f, "x{m} ATM"),
        }
    }
}

impl Serialize for StrikeSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StrikeSpec::Absolute(k) => s.serialize_f64(*k),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for StrikeSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(k) => Ok(StrikeSpec::Absolute(k)),
            Raw::Text(t) => StrikeSpec::parse(&t).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrelationSpec {
    Constant(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketRow {
    /// Payment date `T_k`.
    pub t: f64,
    /// `R_k(0)`.
    pub r0: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub correlation: CorrelationSpec,
    pub rows: Vec<MarketRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSection {
    pub expiry: usize,
    pub end: usize,
    pub strikes: Vec<StrikeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub early_exercise: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Square(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Common(f64),
    PerAxis(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshName {
    #[default]
    NonUniform,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    pub resolution: Resolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<Bound>,
    #[serde(default)]
    pub mesh: MeshName,
    #[serde(default = "default_stretch")]
    pub stretch: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_divisor: Option<u32>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

fn default_stretch() -> f64 {
    GridSpec::DEFAULT_STRETCH
}

fn default_theta() -> f64 {
    0.5
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketSection,
    pub product: ProductSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeSection>,
}

/// Mirror of [`RunConfig`] that keeps source spans for error messages.
#[derive(Deserialize)]
struct RawConfig {
    market: Spanned<RawMarket>,
    product: Spanned<RawProduct>,
    mc: Option<Spanned<McSection>>,
    pde: Option<Spanned<PdeSection>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    correlation: Spanned<CorrelationSpec>,
    rows: Spanned<Vec<Spanned<MarketRow>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProduct {
    expiry: Spanned<usize>,
    end: Spanned<usize>,
    strikes: Spanned<Vec<Spanned<StrikeSpec>>>,
    #[serde(default)]
    early_exercise: Vec<usize>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn located(src: &str, field: &str, span: std::ops::Range<usize>, message: impl fmt::Display) -> FmmError {
    FmmError::config(format!("{field} (line {})", line_of(src, span.start)), message.to_string())
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FmmError::config(path.display().to_string(), e.to_string()))?;
    parse_config_str(&text)
}

/// Parses and validates a configuration; errors name the offending field
/// and its line.
pub fn parse_config_str(src: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of(src, s.start)).unwrap_or(0);
        FmmError::config(format!("line {line}"), e.message().to_string())
    })?;

    let market_span = raw.market.span();
    let market = raw.market.into_inner();
    let rows_span = market.rows.span();
    let mut rows = Vec::new();
    let mut prev = 0.0;
    for (k, row) in market.rows.into_inner().into_iter().enumerate() {
        let span = row.span();
        let row = row.into_inner();
        let field = format!("market.rows[{k}]");
        if !(row.t > prev) || !row.t.is_finite() {
            return Err(located(src, &field, span, format!(
                "payment dates must be strictly increasing and positive ({} after {prev})",
                row.t
            )));
        }
        if !(row.sigma >= 0.0) || !row.sigma.is_finite() {
            return Err(located(src, &field, span, "volatility must be nonnegative"));
        }
        if !row.r0.is_finite() {
            return Err(located(src, &field, span, "initial forward must be finite"));
        }
        prev = row.t;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(located(src, "market.rows", rows_span, "needs at least one rate"));
    }
    let corr_span = market.correlation.span();
    let correlation = market.correlation.into_inner();
    build_correlation(&correlation, rows.len())
        .map_err(|e| located(src, "market.correlation", corr_span, e))?;
    let _ = market_span;

    let product_span = raw.product.span();
    let product = raw.product.into_inner();
    let strikes_span = product.strikes.span();
    let strikes: Vec<StrikeSpec> = product
        .strikes
        .into_inner()
        .into_iter()
        .map(|s| {
            let span = s.span();
            match s.into_inner() {
                StrikeSpec::AtmMultiple(m) if !(m > 0.0) => Err(located(
                    src,
                    "product.strikes",
                    span,
                    format!("ATM multiple {m} must be positive"),
                )),
                other => Ok(other),
            }
        })
        .collect::<Result<_>>()?;
    if strikes.is_empty() {
        return Err(located(src, "product.strikes", strikes_span, "needs at least one strike"));
    }
    let (expiry, end) = (product.expiry.into_inner(), product.end.into_inner());
    if !(0 < expiry && expiry < end && end <= rows.len()) {
        return Err(located(src, "product", product_span, format!(
            "needs 0 < expiry < end <= {} (got {expiry}, {end})",
            rows.len()
        )));
    }
    let ex = &product.early_exercise;
    if ex.iter().any(|&e| e == 0 || e >= expiry) || ex.windows(2).any(|w| w[1] <= w[0]) {
        return Err(located(src, "product.early_exercise", product_span, format!(
            "early exercise dates {ex:?} must increase strictly within 1..{expiry}"
        )));
    }

    let mc = match raw.mc {
        Some(s) => {
            let span = s.span();
            let mc = s.into_inner();
            if mc.paths < 2 || mc.steps < 1 {
                return Err(located(src, "mc", span, "needs paths >= 2 and steps >= 1"));
            }
            Some(mc)
        }
        None => None,
    };
    let pde = match raw.pde {
        Some(s) => {
            let span = s.span();
            let pde = s.into_inner();
            validate_pde(&pde, end).map_err(|m| located(src, "pde", span, m))?;
            Some(pde)
        }
        None => None,
    };

    Ok(RunConfig {
        market: MarketSection { correlation, rows },
        product: ProductSection {
            expiry,
            end,
            strikes,
            early_exercise: product.early_exercise,
        },
        mc,
        pde,
    })
}

fn validate_pde(pde: &PdeSection, dim: usize) -> std::result::Result<(), String> {
    let res = match &pde.resolution {
        Resolution::Square(l) => vec![*l],
        Resolution::PerAxis(v) => {
            if v.len() != dim {
                return Err(format!("resolution lists {} axes, the product needs {dim}", v.len()));
            }
            v.clone()
        }
    };
    if res.iter().any(|&m| m < 2) {
        return Err("every axis needs a resolution of at least 2".into());
    }
    match &pde.r_max {
        Some(Bound::PerAxis(v)) if v.len() != dim => {
            return Err(format!("r_max lists {} axes, the product needs {dim}", v.len()));
        }
        Some(Bound::Common(r)) if !(*r > 0.0) => return Err("r_max must be positive".into()),
        Some(Bound::PerAxis(v)) if v.iter().any(|r| !(*r > 0.0)) => {
            return Err("r_max must be positive".into());
        }
        _ => {}
    }
    if !(pde.stretch > 0.0) || !(pde.theta > 0.0) || !(pde.kappa > 0.0) {
        return Err("stretch, theta and kappa must be positive".into());
    }
    if pde.nu.is_some_and(|nu| !(nu > 0.0)) {
        return Err("nu must be positive".into());
    }
    Ok(())
}

fn build_correlation(spec: &CorrelationSpec, n: usize) -> Result<Correlation> {
    match spec {
        CorrelationSpec::Constant(rho) => Correlation::constant(n, *rho),
        CorrelationSpec::Matrix(rows) => {
            if rows.len() != n {
                return Err(FmmError::domain(format!(
                    "correlation matrix has {} rows for {n} rates",
                    rows.len()
                )));
            }
            Correlation::new(rows.clone())
        }
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn market_data(&self) -> Result<MarketData> {
        let rows = &self.market.rows;
        let dates: Vec<f64> = rows.iter().map(|r| r.t).collect();
        MarketData::new(
            TenorStructure::from_payment_dates(&dates)?,
            rows.iter().map(|r| r.r0).collect(),
            rows.iter().map(|r| Volatility::Constant(r.sigma)).collect(),
            build_correlation(&self.market.correlation, rows.len())?,
        )
    }

    /// Par rate of the configured swap.
    pub fn atm(&self, md: &MarketData) -> Result<f64> {
        atm_strike(md, self.product.expiry, self.product.end)
    }

    /// One swaption per configured strike.
    pub fn swaptions(&self, md: &MarketData) -> Result<Vec<(StrikeSpec, SwaptionSpec)>> {
        let k_atm = self.atm(md)?;
        let p = &self.product;
        Ok(p.strikes
            .iter()
            .map(|s| {
                (
                    *s,
                    SwaptionSpec::bermudan(p.expiry, p.end, s.resolve(k_atm), &p.early_exercise),
                )
            })
            .collect())
    }

    pub fn mc_config(&self) -> Result<McConfig> {
        let mc = self
            .mc
            .as_ref()
            .ok_or_else(|| FmmError::config("mc", "section missing"))?;
        Ok(McConfig {
            num_paths: mc.paths,
            num_steps: mc.steps,
            seed: mc.seed,
            antithetic: mc.antithetic,
        })
    }

    pub fn pde_config(&self, md: &MarketData) -> Result<PdeConfig> {
        let pde = self
            .pde
            .as_ref()
            .ok_or_else(|| FmmError::config("pde", "section missing"))?;
        let n = self.product.end;
        let resolution = match &pde.resolution {
            Resolution::Square(l) => vec![*l; n],
            Resolution::PerAxis(v) => v.clone(),
        };
        let r_max = match &pde.r_max {
            Some(Bound::Common(r)) => vec![*r; n],
            Some(Bound::PerAxis(v)) => v.clone(),
            None => vec![GridSpec::default_r_max(self.atm(md).unwrap_or(0.0)); n],
        };
        let grid = GridSpec {
            resolution,
            r_max,
            mesh: match pde.mesh {
                MeshName::NonUniform => MeshKind::NonUniform,
                MeshName::Uniform => MeshKind::Uniform,
            },
            stretch: pde.stretch,
        };
        let time_step = match pde.dt_divisor {
            Some(r) => TimeStepRule::Divisor(r),
            None => TimeStepRule::PerResolution,
        };
        Ok(PdeConfig {
            grid,
            time_step,
            theta: pde.theta,
            nu: pde.nu,
            kappa: pde.kappa,
        })
    }
}
