//! The `solve`, `sweep` and `selftest` subcommands.

use serde::Serialize;

use sphb_core::eval::{assign_symbols, build_scenario, db_to_linear, gen_channels, run_sweep, CellDetail, SchemeId};
use sphb_core::model::{make_constellation, C64};
use sphb_core::par::{derive_seed, with_workers};
use sphb_core::precoder::{
    iterative_sphere_bounding, maxmin_snr_lower_bound, solve_nonrobust, solve_sphere_bounding, IterOptions,
    ProbMethod, Scenario,
};
use sphb_core::prob::radius;
use sphb_core::selftest;
use sphb_core::socp::SolveStatus;

use crate::config::{Config, Format};
use crate::error::CliError;
use crate::output::{csv_bytes, now_unix_ms, to_json, Artifacts};

const TAG_SOLVE_MC: u64 = 0x534f_4c56;

fn scenario(cfg: &Config, gamma_hat: f64) -> Result<Scenario, CliError> {
    let s = &cfg.system;
    let k = make_constellation(s.mod_order)?;
    let (channel, symbols) = if cfg.solve.users.is_empty() {
        let ch = gen_channels(s.m_antennas, s.n_users, 1, cfg.sweep.seed).remove(0);
        (ch, assign_symbols(&k, s.n_users, cfg.sweep.seed))
    } else {
        let ch = cfg
            .solve
            .users
            .iter()
            .map(|u| u.h.iter().map(|&[re, im]| C64::new(re, im)).collect())
            .collect();
        (ch, cfg.solve.users.iter().map(|u| u.symbol).collect())
    };
    Ok(build_scenario(
        &channel,
        &symbols,
        &k,
        s.sigma_z,
        cfg.error_model.err_var,
        gamma_hat,
        cfg.targets.p_hat,
    )?)
}

#[derive(Debug, Serialize)]
struct AntennaRow {
    antenna: usize,
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize)]
struct UserRow {
    user: usize,
    p_exact: f64,
    p_target_used: f64,
    radius_used: f64,
}

#[derive(Debug, Serialize)]
struct TraceRow {
    l: usize,
    user: usize,
    p_act: f64,
    delta_p: f64,
    p_hat_adj: f64,
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    scheme: SchemeId,
    snr_db: f64,
    status: SolveStatus,
    power: Option<f64>,
    /// Max-min scheme only: guaranteed common SNR at the power budget.
    gamma_lb: Option<f64>,
    converged: bool,
    outer_iters: usize,
    solver_iters: usize,
    min_connect_prob: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SolveReport<'a> {
    #[serde(flatten)]
    summary: &'a SolveSummary,
    precoder: &'a [AntennaRow],
    users: &'a [UserRow],
    trace: &'a [TraceRow],
}

pub fn solve(cfg: &Config) -> Result<(), CliError> {
    let started = now_unix_ms();
    let scheme = SchemeId::parse(&cfg.solve.scheme)?;
    let level = db_to_linear(cfg.solve.snr_db);
    let (status, x, per_user, trace, power, gamma_lb, converged, solver_iters) = match scheme {
        SchemeId::Maxmin => {
            let s = scenario(cfg, 1.0)?;
            let r = maxmin_snr_lower_bound(&s, level)?;
            let users = match (&r.gamma_lb, &r.x_tilde) {
                (Some(g), Some(xt)) => {
                    let r0 = radius(cfg.targets.p_hat)?;
                    s.with_gamma_hat(*g)?
                        .connect_probs(xt)?
                        .into_iter()
                        .enumerate()
                        .map(|(user, p)| UserRow {
                            user,
                            p_exact: p,
                            p_target_used: cfg.targets.p_hat,
                            radius_used: r0,
                        })
                        .collect()
                }
                _ => Vec::new(),
            };
            let power = r.gamma_lb.map(|_| level);
            (r.status, r.x, users, Vec::new(), power, r.gamma_lb, true, r.solver_iters)
        }
        _ => {
            let s = scenario(cfg, level)?;
            let r = match scheme {
                SchemeId::Nonrobust => solve_nonrobust(&s)?,
                SchemeId::Sphere => solve_sphere_bounding(&s)?,
                _ => {
                    let it = &cfg.iteration;
                    let opts = IterOptions {
                        eta: it.eta,
                        delta: it.delta,
                        max_iter: it.max_iter,
                        update: it.update,
                        prob: if it.mc_probability {
                            ProbMethod::MonteCarlo {
                                n_samples: cfg.sweep.n_mc,
                                seed: derive_seed(cfg.sweep.seed, &[TAG_SOLVE_MC]),
                            }
                        } else {
                            ProbMethod::Exact
                        },
                    };
                    iterative_sphere_bounding(&s, &opts)?
                }
            };
            let users = r
                .per_user
                .iter()
                .enumerate()
                .map(|(user, u)| UserRow {
                    user,
                    p_exact: u.p_exact,
                    p_target_used: u.p_target_used,
                    radius_used: u.radius_used,
                })
                .collect();
            let trace = r
                .trace
                .iter()
                .flat_map(|t| {
                    (0..t.p_act.len()).map(move |user| TraceRow {
                        l: t.l,
                        user,
                        p_act: t.p_act[user],
                        delta_p: t.delta_p[user],
                        p_hat_adj: t.p_hat_adj[user],
                    })
                })
                .collect();
            (r.status, r.x, users, trace, r.power, None, r.converged, r.solver_iters)
        }
    };
    let precoder: Vec<AntennaRow> = x
        .unwrap_or_default()
        .iter()
        .enumerate()
        .map(|(antenna, v)| AntennaRow { antenna, re: v.re, im: v.im })
        .collect();
    let summary = SolveSummary {
        scheme,
        snr_db: cfg.solve.snr_db,
        status,
        power,
        gamma_lb,
        converged,
        outer_iters: trace.iter().map(|t: &TraceRow| t.l).max().unwrap_or(1),
        solver_iters,
        min_connect_prob: per_user.iter().map(|u: &UserRow| u.p_exact).reduce(f64::min),
    };

    let mut out = Artifacts::new();
    match cfg.output.format {
        Format::Csv => {
            out.add("precoder.csv", csv_bytes(&precoder, &["antenna", "re", "im"])?);
            out.add(
                "users.csv",
                csv_bytes(&per_user, &["user", "p_exact", "p_target_used", "radius_used"])?,
            );
            out.add(
                "trace.csv",
                csv_bytes(&trace, &["l", "user", "p_act", "delta_p", "p_hat_adj"])?,
            );
        }
        Format::Json => {
            let report = SolveReport {
                summary: &summary,
                precoder: &precoder,
                users: &per_user,
                trace: &trace,
            };
            out.add("result.json", to_json(&report)?);
        }
    }
    let manifest = out.commit(cfg, "solve", &summary, started)?;
    match summary.power {
        Some(p) => println!("{}: {} power {p:.6e}", scheme.as_str(), status.as_str()),
        None => println!("{}: {}", scheme.as_str(), status.as_str()),
    }
    println!("manifest: {}", manifest.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    seed: u64,
    n_channels: usize,
    cells: &'a [CellDetail],
}

pub fn sweep(cfg: &Config, workers: Option<usize>) -> Result<(), CliError> {
    let started = now_unix_ms();
    let sc = cfg.sweep_config()?;
    let report = with_workers(workers, || run_sweep(&sc))??;
    let mut out = Artifacts::new();
    match cfg.output.format {
        Format::Csv => out.add("report.csv", report.to_csv()?.into_bytes()),
        Format::Json => out.add("report.json", to_json(&report)?),
    }
    let summary = SweepSummary {
        seed: sc.seed,
        n_channels: sc.n_channels,
        cells: &report.details,
    };
    let manifest = out.commit(cfg, "sweep", &summary, started)?;
    for r in &report.rows {
        println!(
            "{:>9} {:>6.1} dB  connect {:.4}  outage {:.3}",
            r.scheme.as_str(),
            r.snr_target_db,
            r.connect_prob_exact_mean,
            r.outage_rate
        );
    }
    println!("manifest: {}", manifest.display());
    Ok(())
}

pub fn selftest(perturb: Option<&str>) -> Result<(), CliError> {
    let checks = selftest::run(perturb)?;
    let mut failed = 0;
    for c in &checks {
        if !c.passed {
            failed += 1;
        }
        println!(
            "{} {:<28} measured {:.3e}  tolerance {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        );
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        return Err(CliError::Checks(failed));
    }
    Ok(())
}
