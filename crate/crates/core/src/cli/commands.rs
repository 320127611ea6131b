use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config::{parse_config, Bound, MeshName, Resolution, RunConfig, StrikeSpec};
use super::report;
use crate::analytics::{
    convergence_study, implied_vol, price_swaption_mc_report, price_swaption_pde, PriceReport,
};
use crate::error::FmmError;
use crate::market::MarketData;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fmm", version, about = "RFR swaption pricing under the Forward Market Model")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, env = "FMM_CONFIG", global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo prices with 95% confidence intervals.
    PriceMc(McArgs),
    /// PDE prices on the configured grid.
    PricePde(PdeArgs),
    /// Black implied volatility of a given price.
    ImpliedVol {
        #[arg(long)]
        price: f64,
        /// Strike as a number or `xM ATM`; defaults to the first configured strike.
        #[arg(long)]
        strike: Option<String>,
    },
    /// Spatial errors and orders against a fine reference solution.
    Converge {
        #[command(flatten)]
        pde: PdeArgs,
        /// Resolutions L, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        /// Reference resolution.
        #[arg(long)]
        reference: usize,
    },
    /// Checks that each PDE price lies inside its Monte Carlo interval.
    CrossValidate {
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        pde: PdeArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct McArgs {
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub antithetic: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PdeArgs {
    /// Intervals L on every axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// r in dt = tau_1 / 2^r; without it dt = tau_1 / (2L).
    #[arg(long)]
    pub dt_divisor: Option<u32>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Uniform mesh on every axis.
    #[arg(long)]
    pub uniform: bool,
}

enum Failure {
    Usage(String),
    Numerical(FmmError),
}

impl From<FmmError> for Failure {
    fn from(e: FmmError) -> Self {
        match e {
            FmmError::Config { .. } => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other),
        }
    }
}

/// Runs a parsed command line, writing reports to `out`; returns the exit
/// code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> i32 {
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e}");
            EXIT_NUMERICAL
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("no configuration given (use --config or FMM_CONFIG)".into()))?;
    let mut cfg = parse_config(path).map_err(|e| Failure::Usage(e.to_string()))?;
    let md = cfg.market_data()?;
    let csv = cli.format == Format::Csv;
    let w = |out: &mut dyn Write, s: &str| out.write_all(s.as_bytes()).map_err(io_failure);

    match &cli.command {
        Command::PriceMc(args) => {
            apply_mc(&mut cfg, args)?;
            let mc = cfg.mc_config()?;
            let mut rows = Vec::new();
            for (label, spec) in cfg.swaptions(&md)? {
                eprintln!("pricing {label} by Monte Carlo");
                rows.push((label, price_swaption_mc_report(&spec, &md, &mc)?));
            }
            emit_prices(out, &rows, csv)?;
        }
        Command::PricePde(args) => {
            apply_pde(&mut cfg, args)?;
            let rows = pde_prices(&cfg, &md)?;
            emit_prices(out, &rows, csv)?;
        }
        Command::ImpliedVol { price, strike } => {
            let swaptions = cfg.swaptions(&md)?;
            let k_atm = cfg.atm(&md)?;
            let (label, mut spec) = swaptions[0].clone();
            let label = match strike {
                Some(s) => {
                    let parsed = StrikeSpec::parse(s).map_err(Failure::Usage)?;
                    spec = spec.with_strike(parsed.resolve(k_atm));
                    parsed
                }
                None => label,
            };
            let vol = implied_vol(*price, &spec, &md)?;
            if csv {
                w(out, "strike_spec,strike,price,implied_vol\n")?;
                w(out, &format!("{label},{:.10e},{price:.10e},{vol:.10}\n", spec.strike))?;
            } else {
                w(out, &format!("strike {label} ({:.6e}): implied vol {vol:.6}\n", spec.strike))?;
            }
        }
        Command::Converge { pde, levels, reference } => {
            if levels.len() < 2 {
                return Err(Failure::Usage("converge needs at least two --levels".into()));
            }
            if levels.iter().any(|&l| l >= *reference) {
                return Err(Failure::Usage("--reference must exceed every level".into()));
            }
            apply_pde(&mut cfg, pde)?;
            let pcfg = cfg.pde_config(&md)?;
            let (_, spec) = cfg.swaptions(&md)?.swap_remove(0);
            eprintln!("convergence study for strike {:.6e}, reference L = {reference}", spec.strike);
            let rows = convergence_study(&spec, &md, &pcfg, levels, *reference)?;
            if csv {
                w(out, &format!("{}\n", report::CONVERGENCE_HEADER))?;
                for r in &rows {
                    w(out, &format!("{}\n", report::convergence_csv(r)))?;
                }
            } else {
                w(out, &report::convergence_table(&rows))?;
            }
        }
        Command::CrossValidate { mc, pde } => {
            apply_mc(&mut cfg, mc)?;
            apply_pde(&mut cfg, pde)?;
            let mc_cfg = cfg.mc_config()?;
            let pde_rows = pde_prices(&cfg, &md)?;
            if csv {
                w(out, &format!("{}\n", report::CROSS_HEADER))?;
            }
            for (label, pde_report) in pde_rows {
                eprintln!("pricing {label} by Monte Carlo");
                let mc_report = price_swaption_mc_report(&pde_report.spec, &md, &mc_cfg)?;
                let ci = mc_report.ci.expect("Monte Carlo reports carry an interval");
                let status = if ci.contains(pde_report.price) { "PASS" } else { "FAIL" };
                let line = if csv {
                    format!(
                        "{label},{:.10e},{:.10e},{:.10e},{:.10e},{status}\n",
                        pde_report.spec.strike,
                        ci.lower(),
                        ci.upper(),
                        pde_report.price
                    )
                } else {
                    format!(
                        "{:<10} MC [{:.6e}, {:.6e}]  PDE {:.6e}  {status}\n",
                        label.to_string(),
                        ci.lower(),
                        ci.upper(),
                        pde_report.price
                    )
                };
                w(out, &line)?;
            }
        }
    }
    Ok(())
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Usage(format!("cannot write output: {e}"))
}

fn pde_prices(cfg: &RunConfig, md: &MarketData) -> Result<Vec<(StrikeSpec, PriceReport)>, Failure> {
    let pcfg = cfg.pde_config(md)?;
    let mut rows = Vec::new();
    for (label, spec) in cfg.swaptions(md)? {
        eprintln!("pricing {label} by PDE on {:?}", pcfg.grid.resolution);
        rows.push((label, price_swaption_pde(&spec, md, &pcfg)?));
    }
    Ok(rows)
}

fn emit_prices(out: &mut dyn Write, rows: &[(StrikeSpec, PriceReport)], csv: bool) -> Result<(), Failure> {
    let text = if csv {
        let mut s = format!("{}\n", report::PRICE_HEADER);
        for (label, r) in rows {
            s.push_str(&report::price_csv(label, r));
            s.push('\n');
        }
        s
    } else {
        report::price_table(rows)
    };
    out.write_all(text.as_bytes()).map_err(io_failure)
}

fn apply_mc(cfg: &mut RunConfig, args: &McArgs) -> Result<(), Failure> {
    let mc = cfg
        .mc
        .as_mut()
        .ok_or_else(|| Failure::Usage("configuration has no [mc] section".into()))?;
    if let Some(p) = args.paths {
        mc.paths = p;
    }
    if let Some(s) = args.steps {
        mc.steps = s;
    }
    if let Some(s) = args.seed {
        mc.seed = s;
    }
    mc.antithetic |= args.antithetic;
    Ok(())
}

fn apply_pde(cfg: &mut RunConfig, args: &PdeArgs) -> Result<(), Failure> {
    let pde = cfg
        .pde
        .as_mut()
        .ok_or_else(|| Failure::Usage("configuration has no [pde] section".into()))?;
    if let Some(l) = args.resolution {
        pde.resolution = Resolution::Square(l);
    }
    if args.dt_divisor.is_some() {
        pde.dt_divisor = args.dt_divisor;
    }
    if let Some(t) = args.theta {
        pde.theta = t;
    }
    if args.nu.is_some() {
        pde.nu = args.nu;
    }
    if let Some(k) = args.kappa {
        pde.kappa = k;
    }
    if let Some(r) = args.r_max {
        pde.r_max = Some(Bound::Common(r));
    }
    if args.uniform {
        pde.mesh = MeshName::Uniform;
    }
    Ok(())
}
