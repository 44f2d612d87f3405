//! Parameter sweeps over the security bounds, emitted as CSV.

use std::io::Write;

use anyhow::{bail, Context, Result};
use clap::Args;

use qstack_core::bounds::{
    default_k_rule, max_inefficiency, ot_min_lambda, qkd_min_received, token_min_n,
    ThresholdMargins,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepKind {
    /// Minimum received pulses for one secret key bit, over qber.
    QkdMinN,
    /// Minimum received pulses for one transfer, over qber.
    OtMinLambda,
    /// Secret-bit rate per received pulse, over qber.
    OtRate,
    /// Maximum tolerable code inefficiency, over qber.
    MaxInefficiency,
    /// Minimum pulses per token block, over detection probability.
    TokenMinN,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub kind: SweepKind,
    /// Output CSV path.
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Grid as start:stop:step over the kind's sweep variable.
    #[arg(long)]
    pub grid: Option<String>,
    /// Pulse repetition rate for the time column.
    #[arg(long, default_value_t = 80e6)]
    pub rep_rate_hz: f64,

    // bound parameters (kind-dependent defaults)
    #[arg(long, default_value_t = 1e-10)]
    pub eps_sec: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub eps_cor: f64,
    #[arg(long, default_value_t = -23)]
    pub eps1_exp2: i32,
    #[arg(long, default_value_t = -23)]
    pub eps2_exp2: i32,
    #[arg(long, default_value_t = -34)]
    pub eps_exp2: i32,
    #[arg(long)]
    pub inefficiency: Option<f64>,
    #[arg(long, default_value_t = 256.0)]
    pub target_l: f64,
    #[arg(long, default_value_t = 0.02)]
    pub qber: f64,
    #[arg(long, default_value_t = 0.02)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta_pb: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta_ps: f64,
    #[arg(long, default_value_t = 0.0)]
    pub phi: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub eps_unf: f64,
    #[arg(long, default_value_t = 0.1)]
    pub margin_det: f64,
    #[arg(long, default_value_t = 0.02)]
    pub margin_err: f64,
    #[arg(long)]
    pub eq4_literal: bool,
}

fn parse_grid(spec: &Option<String>, default: (f64, f64, f64)) -> Result<Vec<f64>> {
    let (start, stop, step) = match spec {
        None => default,
        Some(s) => {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                bail!("grid must be start:stop:step, got {s:?}");
            }
            let nums: Vec<f64> = parts
                .iter()
                .map(|p| p.parse::<f64>().with_context(|| format!("grid part {p:?}")))
                .collect::<Result<_>>()?;
            (nums[0], nums[1], nums[2])
        }
    };
    if step <= 0.0 {
        bail!("grid step must be positive");
    }
    let mut grid = Vec::new();
    let mut x = start;
    while x <= stop + 1e-12 {
        grid.push(x);
        x += step;
    }
    Ok(grid)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let rows = build_rows(args)?;
    let mut file = std::fs::File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    for line in rows {
        writeln!(file, "{line}")?;
    }
    Ok(())
}

/// CSV lines for the sweep: a units comment, a schema-stable header, one
/// row per grid point with a feasibility flag.
pub fn build_rows(args: &SweepArgs) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let eps1 = (2f64).powi(args.eps1_exp2);
    let eps2 = (2f64).powi(args.eps2_exp2);
    match args.kind {
        SweepKind::QkdMinN => {
            let ineff = args.inefficiency.unwrap_or(1.2);
            out.push("# units: qber fraction, min_received pulses, time_s seconds".into());
            out.push("qber,eps_sec,eps_cor,inefficiency,min_received,time_s,feasible".into());
            for qber in parse_grid(&args.grid, (0.005, 0.04, 0.005))? {
                match qkd_min_received(args.eps_sec, args.eps_cor, qber, ineff, default_k_rule) {
                    Ok(n) => {
                        let time = n as f64 / args.rep_rate_hz;
                        out.push(format!(
                            "{qber},{},{},{ineff},{n},{time},true",
                            args.eps_sec, args.eps_cor
                        ));
                    }
                    Err(_) => out.push(format!(
                        "{qber},{},{},{ineff},,,false",
                        args.eps_sec, args.eps_cor
                    )),
                }
            }
        }
        SweepKind::OtMinLambda | SweepKind::OtRate => {
            let ineff = args.inefficiency.unwrap_or(1.40);
            out.push(
                "# units: qber fraction, lambda_ot/n0 pulses, rate bits-per-pulse, time_s seconds"
                    .into(),
            );
            out.push(
                "qber,eps_sec1,eps_sec2,inefficiency,target_l,lambda_ot,n0,rate,time_s,feasible"
                    .into(),
            );
            for qber in parse_grid(&args.grid, (0.005, 0.035, 0.005))? {
                match ot_min_lambda(eps1, eps2, qber, ineff, args.target_l, args.eq4_literal) {
                    Ok(lambda) => {
                        let received = 2 * lambda;
                        let time = received as f64 / args.rep_rate_hz;
                        let rate = args.target_l / lambda as f64;
                        out.push(format!(
                            "{qber},{eps1:e},{eps2:e},{ineff},{},{lambda},{},{rate:e},{time},true",
                            args.target_l,
                            lambda / 2
                        ));
                    }
                    Err(_) => out.push(format!(
                        "{qber},{eps1:e},{eps2:e},{ineff},{},,,,,false",
                        args.target_l
                    )),
                }
            }
        }
        SweepKind::MaxInefficiency => {
            let eps = (2f64).powi(args.eps_exp2);
            out.push("# units: qber fraction, max_inefficiency ratio".into());
            out.push("qber,eps_sec,target_l,max_inefficiency,feasible".into());
            for qber in parse_grid(&args.grid, (0.005, 0.035, 0.005))? {
                match max_inefficiency(eps, qber, args.target_l) {
                    Ok(v) => out.push(format!("{qber},{eps:e},{},{v:.6},true", args.target_l)),
                    Err(_) => out.push(format!("{qber},{eps:e},{},,false", args.target_l)),
                }
            }
        }
        SweepKind::TokenMinN => {
            out.push(
                "# units: p_det probability, n_min pulses-per-block, time_s seconds".into(),
            );
            out.push(
                "p_det,qber,mu,gamma_det,gamma_err,eps_unf,nu_unf,n_min,time_s,feasible".into(),
            );
            let margins = ThresholdMargins {
                det: args.margin_det,
                err: args.margin_err,
            };
            for p_det in parse_grid(&args.grid, (0.01, 0.1, 0.01))? {
                match token_min_n(
                    p_det,
                    args.qber,
                    args.mu,
                    args.beta_pb,
                    args.beta_ps,
                    args.phi,
                    args.eps_unf,
                    margins,
                ) {
                    Ok(res) => {
                        let time = res.n_min as f64 / (p_det * args.rep_rate_hz);
                        out.push(format!(
                            "{p_det},{},{},{:.6e},{:.6e},{:e},{:.6e},{},{time},true",
                            args.qber,
                            args.mu,
                            res.gamma_det,
                            res.gamma_err,
                            args.eps_unf,
                            res.nu_unf,
                            res.n_min
                        ));
                    }
                    Err(_) => out.push(format!(
                        "{p_det},{},{},,,{:e},,,,false",
                        args.qber, args.mu, args.eps_unf
                    )),
                }
            }
        }
    }
    Ok(out)
}
