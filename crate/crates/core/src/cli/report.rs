//! Text tables and CSV rows.
//!
//! CSV columns, in order:
//!
//! * prices: `method,expiry,end,strike_spec,strike,price,ci_low,ci_high,std_error,implied_vol,paths,steps,resolution,dt,runtime_s`
//! * convergence: `L,l2_error,linf_error,l2_order,linf_order,runtime_s`
//! * cross-validation: `strike_spec,strike,mc_low,mc_high,pde_price,status`
//!
//! Empty fields mark values that do not apply.

use std::fmt::Write;

use super::config::StrikeSpec;
use crate::analytics::{ConvergenceRow, PriceReport, RunInfo};

pub const PRICE_HEADER: &str = "method,expiry,end,strike_spec,strike,price,ci_low,ci_high,std_error,implied_vol,paths,steps,resolution,dt,runtime_s";
pub const CONVERGENCE_HEADER: &str = "L,l2_error,linf_error,l2_order,linf_order,runtime_s";
pub const CROSS_HEADER: &str = "strike_spec,strike,mc_low,mc_high,pde_price,status";

fn opt(v: Option<f64>, fmt: impl Fn(f64) -> String) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn price_csv(label: &StrikeSpec, r: &PriceReport) -> String {
    let (paths, steps, resolution, dt) = match &r.info {
        RunInfo::Paths(cfg) => (cfg.num_paths.to_string(), cfg.num_steps.to_string(), String::new(), String::new()),
        RunInfo::Grid { resolution, dt, steps } => (
            String::new(),
            steps.to_string(),
            resolution.iter().map(ToString::to_string).collect::<Vec<_>>().join("x"),
            format!("{dt:e}"),
        ),
    };
    format!(
        "{},{},{},{},{:.10e},{:.10e},{},{},{},{},{},{},{},{},{:.3}",
        r.method.label(),
        r.spec.expiry,
        r.spec.end,
        label,
        r.spec.strike,
        r.price,
        opt(r.ci.map(|c| c.lower()), |v| format!("{v:.10e}")),
        opt(r.ci.map(|c| c.upper()), |v| format!("{v:.10e}")),
        opt(r.ci.map(|c| c.std_error), |v| format!("{v:.6e}")),
        opt(r.implied_vol, |v| format!("{v:.8}")),
        paths,
        steps,
        resolution,
        dt,
        r.wall_time,
    )
}

pub fn price_table(rows: &[(StrikeSpec, PriceReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>8} {:>16} {:>35} {:>10} {:>9}",
        "strike", "method", "price", "95% CI", "impl vol", "time (s)"
    );
    for (label, r) in rows {
        let ci = r
            .ci
            .map(|c| format!("[{:.6e}, {:.6e}]", c.lower(), c.upper()))
            .unwrap_or_else(|| "-".into());
        let iv = opt(r.implied_vol, |v| format!("{v:.6}"));
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>16.6e} {:>35} {:>10} {:>9.2}",
            label.to_string(),
            r.method.label(),
            r.price,
            ci,
            if iv.is_empty() { "-".into() } else { iv },
            r.wall_time
        );
    }
    out
}

pub fn convergence_csv(row: &ConvergenceRow) -> String {
    format!(
        "{},{:.6e},{:.6e},{},{},{:.3}",
        row.l,
        row.l2_error,
        row.linf_error,
        opt(row.l2_order, |v| format!("{v:.4}")),
        opt(row.linf_order, |v| format!("{v:.4}")),
        row.runtime
    )
}

pub fn convergence_table(rows: &[ConvergenceRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6} {:>12} {:>12} {:>9} {:>9} {:>10}",
        "L", "l2-error", "linf-error", "l2-order", "linf-ord", "time (s)"
    );
    for r in rows {
        let o = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:>6} {:>12.2e} {:>12.2e} {:>9} {:>9} {:>10.2}",
            r.l,
            r.l2_error,
            r.linf_error,
            o(r.l2_order),
            o(r.linf_order),
            r.runtime
        );
    }
    out
}
