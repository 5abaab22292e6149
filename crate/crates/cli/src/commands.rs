//! One function per subcommand, each producing a [`Report`].

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lossylab::enumerate::Mappings;
use lossylab::equivalence::{
    build_corresponding, exhaustive_identity_check, sampled_identity_check,
    verify_optimum_coincidence, IdentitySweep,
};
use lossylab::oneshot::{
    logloss_avg_optimum, logloss_codebook, logloss_excess_optimum, logloss_excess_oracle,
    solve_avg, solve_avg_oracle, solve_codebook, solve_excess, OneShotCode, EXCESS_ORACLE_LIMIT,
};
use lossylab::prob::entropy;
use lossylab::rd::{rd_at_distortion, rd_curve, verify_csiszar_identity, RdPoint, SolverOptions};
use lossylab::successive::{
    construct_sr, construct_sr_chain, timeshare_simulate, timeshare_two_decoders, verify_sr,
    verify_sr_chain, SrReport, TimeshareReport,
};
use lossylab::{Error, Pmf};
use serde_json::{json, Map, Value};

use crate::input::{parse_list, parse_pmf, ProblemFile};
use crate::report::{cell, matrix, num, plain, plain_vec, Report, Table, Units};
use crate::CliError;

/// Residual threshold for the identity between the two coding problems.
pub const IDENTITY_TOL: f64 = 1e-6;

/// Slack on the lower bound `E ℓ ≥ H(X | X̂*)`.
pub const BOUND_SLACK: f64 = 1e-9;

/// Tolerance of the successive-refinement checks.
pub const SR_CHECK_TOL: f64 = 1e-9;

/// Largest code space on which the brute-force cross-check still runs.
pub const ORACLE_LIMIT: u128 = 1_000_000;

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub tol: f64,
    pub seed: u64,
    pub units: Units,
}

impl Context {
    fn report(&self, command: &'static str) -> Report {
        let mut r = Report::new(command, self.units);
        r.tolerance("solver", self.tol);
        r
    }
}

struct Labels {
    sources: Vec<String>,
    reconstructions: Vec<String>,
}

impl Labels {
    fn numbered(r: usize, s: usize) -> Self {
        Labels {
            sources: (0..r).map(|i| i.to_string()).collect(),
            reconstructions: (0..s).map(|i| i.to_string()).collect(),
        }
    }

    fn of(file: &ProblemFile) -> Self {
        let p = &file.problem;
        let mut l = Self::numbered(p.sources(), p.reconstructions());
        if let Some(src) = &file.labels {
            l.sources = src.clone();
            if file.reconstruction_labels.is_none() && p.sources() == p.reconstructions() {
                l.reconstructions = src.clone();
            }
        }
        if let Some(rec) = &file.reconstruction_labels {
            l.reconstructions = rec.clone();
        }
        l
    }

    fn code(&self, code: &OneShotCode) -> Value {
        let encoder: Map<String, Value> = self
            .sources
            .iter()
            .zip(&code.encoder)
            .map(|(x, &m)| (x.clone(), json!(m)))
            .collect();
        let decoder: Map<String, Value> = code
            .decoder
            .iter()
            .enumerate()
            .map(|(m, &y)| (m.to_string(), json!(self.reconstructions[y])))
            .collect();
        json!({ "messages": code.messages, "encoder": encoder, "decoder": decoder })
    }
}

fn echo_problem(report: &mut Report, path: &Path, file: &ProblemFile) {
    report.input("problem_file", path.display().to_string());
    report.input("problem_name", file.name.clone());
    if let Some(d) = &file.description {
        report.input("problem_description", d.clone());
    }
    report.input("source", crate::report::nums(file.problem.px().probs()));
    report.input(
        "distortion",
        Value::Array(
            file.problem
                .dist()
                .iter()
                .map(|r| crate::report::nums(r))
                .collect(),
        ),
    );
}

fn require<T>(value: Option<T>, flag: &str, why: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Input(format!("{flag} is required {why}")))
}

// ---------------------------------------------------------------------------
// rd

#[derive(Debug, Args)]
pub struct RdArgs {
    /// Problem file (TOML).
    pub problem: PathBuf,
    /// Target expected distortion.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    pub d: Option<f64>,
    /// Comma-separated distortion grid; emits one curve row per point.
    #[arg(long)]
    pub grid: Option<String>,
    /// Iteration cap per fixed-slope run.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

pub fn cmd_rd(args: &RdArgs, ctx: &Context) -> Result<Report, CliError> {
    let file = ProblemFile::load(&args.problem)?;
    let labels = Labels::of(&file);
    let problem = &file.problem;
    let mut opts = SolverOptions::with_tol(ctx.tol);
    if let Some(n) = args.max_iter {
        opts = opts.max_iter(n);
    }
    let mut report = ctx.report("rd");
    echo_problem(&mut report, &args.problem, &file);
    report.tolerance("stationarity", opts.ba_tol);
    report.output("d_min", plain(problem.d_min(), 0.0));
    report.output("d_max", plain(problem.d_max(), 0.0));

    let mut table = Table::new(&["d", "rate", "lambda_star"]);
    let units = ctx.units;
    let row = |pt: &RdPoint| {
        vec![
            cell(pt.achieved_d),
            cell(units.convert(pt.rate)),
            cell(units.convert(pt.lambda_star)),
        ]
    };
    match (&args.d, &args.grid) {
        (Some(d), _) => {
            report.input("d", num(*d));
            let pt = rd_at_distortion(problem, *d, &opts)?;
            let residual = verify_csiszar_identity(problem, &pt)?;
            table.push(row(&pt));
            point_outputs(&mut report, problem.px(), &pt, residual, &labels, ctx);
        }
        (None, Some(grid)) => {
            let grid = parse_list(grid, "--grid")?;
            report.input("grid", crate::report::nums(&grid));
            let points = rd_curve(problem, &grid, &opts)?;
            let mut curve = Vec::new();
            for pt in &points {
                let residual = verify_csiszar_identity(problem, pt)?;
                table.push(row(pt));
                curve.push(json!({
                    "target_d": num(pt.target_d),
                    "achieved_d": plain(pt.achieved_d, ctx.tol),
                    "rate": ctx.units.info(pt.rate, ctx.tol),
                    "lambda_star": ctx.units.info(pt.lambda_star, ctx.tol),
                    "csiszar_residual": plain(residual, 0.0),
                }));
            }
            report.output("curve", curve);
        }
        (None, None) => unreachable!("clap requires --d or --grid"),
    }
    report.table = Some(table);
    Ok(report)
}

fn point_outputs(
    report: &mut Report,
    px: &Pmf,
    pt: &RdPoint,
    residual: f64,
    labels: &Labels,
    ctx: &Context,
) {
    let u = ctx.units;
    let mean_tilted: f64 = px.probs().iter().zip(&pt.tilted).map(|(p, t)| p * t).sum();
    let mut tilted = u.info_vec(&pt.tilted, ctx.tol);
    tilted["symbols"] = json!(labels.sources);
    report
        .output("target_d", plain(pt.target_d, 0.0))
        .output("achieved_d", plain(pt.achieved_d, ctx.tol))
        .output("rate", u.info(pt.rate, ctx.tol))
        .output("lambda_star", u.info(pt.lambda_star, ctx.tol))
        .output("tilted_information", tilted)
        .output("mean_tilted_information", u.info(mean_tilted, ctx.tol))
        .output("csiszar_residual", plain(residual, 0.0))
        .output(
            "kept_reconstructions",
            pt.kept_columns
                .iter()
                .map(|&y| labels.reconstructions[y].clone())
                .collect::<Vec<_>>(),
        )
        .output(
            "output_marginal",
            plain_vec(pt.output_marginal.probs(), ctx.tol),
        )
        .output("forward_channel", matrix(pt.forward.rows(), ctx.tol))
        .output(
            "diagnostics",
            json!({
                "iterations": pt.diagnostics.iterations,
                "slope_evaluations": pt.diagnostics.slope_evaluations,
                "final_gap": num(pt.diagnostics.final_gap),
                "passes": pt.diagnostics.passes,
            }),
        );
}

// ---------------------------------------------------------------------------
// oneshot

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Criterion {
    /// Minimum expected distortion with M messages.
    Avg,
    /// Minimum probability of exceeding D with M messages, or, with --eps,
    /// the smallest M meeting that probability.
    Excess,
}

#[derive(Debug, Args)]
pub struct OneshotArgs {
    /// Problem file (TOML). Optional with --logloss when --pmf is given.
    pub problem: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Criterion::Avg)]
    pub criterion: Criterion,
    /// Number of messages.
    #[arg(long)]
    pub m: Option<usize>,
    /// Distortion level (excess criterion).
    #[arg(long)]
    pub d: Option<f64>,
    /// Target excess probability; asks for the smallest sufficient M.
    #[arg(long, conflicts_with = "m")]
    pub eps: Option<f64>,
    /// Solve under logarithmic loss; the distortion matrix is ignored.
    #[arg(long)]
    pub logloss: bool,
    /// Inline source law for --logloss: `p1,p2,...` or `uniform:N`.
    #[arg(long, requires = "logloss")]
    pub pmf: Option<String>,
}

fn source_law(
    problem: Option<&PathBuf>,
    pmf: Option<&String>,
    report: &mut Report,
) -> Result<Pmf, CliError> {
    match (pmf, problem) {
        (Some(spec), _) => {
            report.input("pmf", spec.clone());
            parse_pmf(spec)
        }
        (None, Some(path)) => {
            let file = ProblemFile::load(path)?;
            report.input("problem_file", path.display().to_string());
            report.input("problem_name", file.name.clone());
            Ok(file.problem.px().clone())
        }
        (None, None) => Err(CliError::Input(
            "either a problem file or --pmf is required".into(),
        )),
    }
}

pub fn cmd_oneshot(args: &OneshotArgs, ctx: &Context) -> Result<Report, CliError> {
    let mut report = ctx.report("oneshot");
    report.input(
        "criterion",
        match args.criterion {
            Criterion::Avg => "avg",
            Criterion::Excess => "excess",
        },
    );
    report.input("logloss", args.logloss);
    if let Some(m) = args.m {
        report.input("m", m);
    }
    if let Some(d) = args.d {
        report.input("d", num(d));
    }
    if let Some(eps) = args.eps {
        report.input("eps", num(eps));
    }
    if args.m == Some(0) {
        return Err(CliError::Input("--m must be at least 1".into()));
    }
    if args.logloss {
        let px = source_law(args.problem.as_ref(), args.pmf.as_ref(), &mut report)?;
        report.input("source", crate::report::nums(px.probs()));
        oneshot_logloss(args, &px, ctx, &mut report)?;
    } else {
        let path = require(args.problem.as_ref(), "a problem file", "without --logloss")?;
        let file = ProblemFile::load(path)?;
        echo_problem(&mut report, path, &file);
        oneshot_distortion(args, &file, &mut report)?;
    }
    Ok(report)
}

fn oneshot_distortion(
    args: &OneshotArgs,
    file: &ProblemFile,
    report: &mut Report,
) -> Result<(), CliError> {
    let problem = &file.problem;
    let labels = Labels::of(file);
    let (r, s) = (problem.sources(), problem.reconstructions());
    match args.criterion {
        Criterion::Avg => {
            let m = require(args.m, "--m", "for the avg criterion")?;
            let (code, value) = solve_avg(problem, m)?;
            report
                .output("d_star", plain(value, 0.0))
                .output("code", labels.code(&code));
            if Mappings::count(r, m).saturating_mul(Mappings::count(m, s)) <= ORACLE_LIMIT {
                let oracle = solve_avg_oracle(problem, m)?;
                report.output(
                    "oracle",
                    json!({ "d_star": plain(oracle, 0.0), "agrees": oracle == value }),
                );
            }
        }
        Criterion::Excess => {
            let d = require(args.d, "--d", "for the excess criterion")?;
            match (args.m, args.eps) {
                (Some(m), None) => {
                    let (code, eps) = solve_excess(problem, m, d)?;
                    report
                        .output("epsilon_star", plain(eps, 0.0))
                        .output("code", labels.code(&code));
                }
                (None, Some(eps)) => {
                    let m = solve_codebook(problem, d, eps)?;
                    report.output("m_star", m);
                }
                _ => {
                    return Err(CliError::Input(
                        "excess criterion needs exactly one of --m or --eps".into(),
                    ))
                }
            }
        }
    }
    Ok(())
}

fn oneshot_logloss(
    args: &OneshotArgs,
    px: &Pmf,
    ctx: &Context,
    report: &mut Report,
) -> Result<(), CliError> {
    let u = ctx.units;
    let hx = entropy(px);
    report.output("source_entropy", u.info(hx, 0.0));
    match args.criterion {
        Criterion::Avg => {
            let m = require(args.m, "--m", "for the avg criterion")?;
            let (scheme, value) = logloss_avg_optimum(px, m)?;
            let bound = hx - (m as f64).ln();
            report
                .output("d_star", u.info(value, 0.0))
                .output("lower_bound", u.info(bound, 0.0))
                .output("bound_gap", u.info(value - bound, 0.0))
                .output(
                    "scheme",
                    json!({
                        "messages": scheme.messages,
                        "encoder": indexed(&scheme.encoder),
                        "cell_masses": plain_vec(&scheme.cell_masses, 0.0),
                        "decoder_rows": matrix(
                            &scheme.posterior_rows.iter().map(|p| p.probs().to_vec()).collect::<Vec<_>>(),
                            0.0,
                        ),
                    }),
                );
        }
        Criterion::Excess => {
            let d = require(args.d, "--d", "for the excess criterion")?;
            match (args.m, args.eps) {
                (Some(m), None) => {
                    let scheme = logloss_excess_optimum(px, m, d)?;
                    report
                        .output("epsilon_star", plain(scheme.achieved_epsilon, 0.0))
                        .output(
                            "scheme",
                            json!({
                                "messages": scheme.messages,
                                "cell_size": scheme.cell_size,
                                "sort_order": scheme.sort_order,
                                "encoder": indexed(&scheme.encoder),
                                "decoder_rows": matrix(
                                    &scheme.decoder_rows.iter().map(|p| p.probs().to_vec()).collect::<Vec<_>>(),
                                    0.0,
                                ),
                            }),
                        );
                    if px.len() <= EXCESS_ORACLE_LIMIT {
                        let oracle = logloss_excess_oracle(px, m, d)?;
                        report.output(
                            "oracle",
                            json!({
                                "epsilon_star": plain(oracle, 0.0),
                                "agrees": oracle == scheme.achieved_epsilon,
                            }),
                        );
                    }
                }
                (None, Some(eps)) => {
                    report.output("m_star", logloss_codebook(px, d, eps)?);
                }
                _ => {
                    return Err(CliError::Input(
                        "excess criterion needs exactly one of --m or --eps".into(),
                    ))
                }
            }
        }
    }
    Ok(())
}

fn indexed(values: &[usize]) -> Value {
    Value::Object(
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (i.to_string(), json!(v)))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// equiv

#[derive(Debug, Args)]
pub struct EquivArgs {
    /// Problem file (TOML).
    pub problem: PathBuf,
    /// Number of messages.
    #[arg(long)]
    pub m: usize,
    /// Check the identity on this many random codes instead of all of them.
    #[arg(long)]
    pub samples: Option<usize>,
}

pub fn cmd_equiv(args: &EquivArgs, ctx: &Context) -> Result<Report, CliError> {
    let file = ProblemFile::load(&args.problem)?;
    let labels = Labels::of(&file);
    let problem = &file.problem;
    let u = ctx.units;
    let mut report = ctx.report("equiv");
    echo_problem(&mut report, &args.problem, &file);
    report.input("m", args.m);
    report
        .tolerance("identity", IDENTITY_TOL)
        .tolerance("bound_slack", BOUND_SLACK)
        .tolerance("argmin", lossylab::equivalence::ARGMIN_TOL)
        .tolerance("row_match", lossylab::equivalence::ROW_MATCH_TOL);
    if args.m == 0 {
        return Err(CliError::Input("--m must be at least 1".into()));
    }

    let cp = build_corresponding(problem, args.m, &SolverOptions::with_tol(ctx.tol))?;
    report
        .output("d_star_m", plain(cp.d_star_m, 0.0))
        .output("lambda_star", u.info(cp.lambda_star, ctx.tol))
        .output("h_x_given_xhat", u.info(cp.h_x_given_xhat, ctx.tol))
        .output("rate_at_d_star_m", u.info(cp.source_point.rate, ctx.tol))
        .output("log_messages", u.info(cp.log_messages(), 0.0))
        .output(
            "kept_reconstructions",
            cp.kept_columns()
                .iter()
                .map(|&y| labels.reconstructions[y].clone())
                .collect::<Vec<_>>(),
        )
        .output(
            "logloss_reconstructions",
            matrix(
                &cp.y_rows
                    .iter()
                    .map(|p| p.probs().to_vec())
                    .collect::<Vec<_>>(),
                ctx.tol,
            ),
        )
        .output("optimal_code", labels.code(&cp.optimal_code));

    let (mode, sweep) = match args.samples {
        Some(n) => {
            report.input("samples", n).input("seed", ctx.seed);
            ("sampled", sampled_identity_check(&cp, n, ctx.seed)?)
        }
        None => match exhaustive_identity_check(&cp) {
            Ok(sweep) => ("exhaustive", sweep),
            Err(Error::TooLarge(what)) => {
                return Err(CliError::Input(format!(
                    "code space too large for exhaustive checking ({what}); pass --samples"
                )))
            }
            Err(e) => return Err(e.into()),
        },
    };
    report.output("identity", identity_json(mode, &sweep, u));

    match verify_optimum_coincidence(&cp) {
        Ok(c) => {
            report.output(
                "coincidence",
                json!({
                    "verdict": if c.coincide { "pass" } else { "fail" },
                    "distortion_argmin_size": c.distortion_argmin.len(),
                    "logloss_argmin_size": c.logloss_argmin.len(),
                    "min_expected_distortion": plain(c.min_expected_distortion, 0.0),
                    "min_expected_loss": u.info(c.min_expected_loss, ctx.tol),
                    "optimum_loss_residual": u.info(c.optimum_loss_residual, 0.0),
                }),
            );
        }
        Err(Error::TooLarge(_)) => {
            report.output("coincidence", json!({ "verdict": "not evaluated" }));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(report)
}

fn identity_json(mode: &str, sweep: &IdentitySweep, u: Units) -> Value {
    let passed = sweep.max_residual < IDENTITY_TOL && sweep.min_excess_over_bound >= -BOUND_SLACK;
    json!({
        "mode": mode,
        "codes": sweep.codes,
        "max_residual": u.info(sweep.max_residual, 0.0),
        "min_excess_over_bound": u.info(sweep.min_excess_over_bound, 0.0),
        "passed": passed,
    })
}

// ---------------------------------------------------------------------------
// sr

#[derive(Debug, Args)]
pub struct SrArgs {
    /// Problem file (TOML).
    pub problem: PathBuf,
    /// Log-loss target of the first decoder.
    #[arg(long, conflicts_with = "chain", required_unless_present = "chain")]
    pub d1: Option<f64>,
    /// Distortion target of the second (final) decoder.
    #[arg(long)]
    pub d2: f64,
    /// Comma-separated, non-increasing log-loss targets for a chain of
    /// refinement layers ahead of the final decoder.
    #[arg(long)]
    pub chain: Option<String>,
}

pub fn cmd_sr(args: &SrArgs, ctx: &Context) -> Result<Report, CliError> {
    let file = ProblemFile::load(&args.problem)?;
    let problem = &file.problem;
    let u = ctx.units;
    let opts = SolverOptions::with_tol(ctx.tol);
    let mut report = ctx.report("sr");
    echo_problem(&mut report, &args.problem, &file);
    report
        .input("d2", num(args.d2))
        .tolerance("checks", SR_CHECK_TOL);

    if let Some(chain) = &args.chain {
        let ds = parse_list(chain, "--chain")?;
        report.input("chain", crate::report::nums(&ds));
        let chain = construct_sr_chain(problem, &ds, args.d2, &opts)?;
        let check = verify_sr_chain(&chain, SR_CHECK_TOL)?;
        let layers: Vec<Value> = chain
            .layers
            .iter()
            .zip(&check.layers)
            .map(|(layer, rep)| {
                json!({
                    "d1": u.info(layer.d1, 0.0),
                    "delta": plain(layer.delta, ctx.tol),
                    "checks": checks_json(rep, u),
                    "all_passed": rep.all_passed(),
                })
            })
            .collect();
        report
            .output("deltas", plain_vec(&chain.deltas, ctx.tol))
            .output("increments", plain_vec(&chain.increments, ctx.tol))
            .output(
                "conditional_entropies",
                u.info_vec(&check.conditional_entropies, SR_CHECK_TOL),
            )
            .output("target_residual", u.info(check.target_residual, 0.0))
            .output("monotone", check.monotone)
            .output("layers", layers)
            .output("all_passed", check.all_passed(SR_CHECK_TOL));
        return Ok(report);
    }

    let d1 = args.d1.expect("clap requires --d1 without --chain");
    report.input("d1", num(d1));
    let c = construct_sr(problem, d1, args.d2, &opts)?;
    let rep = verify_sr(&c, SR_CHECK_TOL)?;
    let (lo, hi) = c.feasible_d1();
    report
        .output("delta", plain(c.delta, ctx.tol))
        .output(
            "feasible_d1",
            json!({ "lo": u.info(lo, ctx.tol), "hi": u.info(hi, 0.0) }),
        )
        .output("h_x", u.info(c.h_x, 0.0))
        .output("h_x_given_xhat", u.info(c.h_x_given_xhat, ctx.tol))
        .output("q_masses", plain_vec(&c.q_masses, ctx.tol))
        .output(
            "q_rows",
            matrix(
                &c.q_rows
                    .iter()
                    .map(|p| p.probs().to_vec())
                    .collect::<Vec<_>>(),
                ctx.tol,
            ),
        )
        .output("checks", checks_json(&rep, u))
        .output("h_x_given_z", u.info(rep.h_x_given_z, SR_CHECK_TOL))
        .output(
            "mutual_information_q",
            u.info(rep.mutual_information_q, SR_CHECK_TOL),
        )
        .output("expected_loss", u.info(rep.expected_loss, SR_CHECK_TOL))
        .output("all_passed", rep.all_passed());
    Ok(report)
}

fn checks_json(rep: &SrReport, u: Units) -> Value {
    Value::Array(
        rep.checks()
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "residual": u.info(c.residual, 0.0),
                    "passed": c.passed,
                })
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// timeshare

#[derive(Debug, Args)]
pub struct TimeshareArgs {
    /// Problem file (TOML); only its source law is used.
    pub problem: Option<PathBuf>,
    /// Inline source law: `p1,p2,...` or `uniform:N`.
    #[arg(long)]
    pub pmf: Option<String>,
    /// Log-loss target.
    #[arg(long)]
    pub d: f64,
    /// Optional second, smaller target served from the same prefix.
    #[arg(long)]
    pub d2: Option<f64>,
    /// Block length.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
}

pub fn cmd_timeshare(args: &TimeshareArgs, ctx: &Context) -> Result<Report, CliError> {
    let mut report = ctx.report("timeshare");
    let px = source_law(args.problem.as_ref(), args.pmf.as_ref(), &mut report)?;
    report
        .input("source", crate::report::nums(px.probs()))
        .input("d", num(args.d))
        .input("n", args.n)
        .input("seed", ctx.seed);
    let hx = entropy(&px);
    report.output("source_entropy", ctx.units.info(hx, 0.0));
    match args.d2 {
        None => {
            let r = timeshare_simulate(&px, args.d, args.n, ctx.seed)?;
            report.output("decoder", timeshare_json(&r, hx, ctx.units));
        }
        Some(d2) => {
            report.input("d2", num(d2));
            let (a, b) = timeshare_two_decoders(&px, args.d, d2, args.n, ctx.seed)?;
            report.output(
                "decoders",
                vec![
                    timeshare_json(&a, hx, ctx.units),
                    timeshare_json(&b, hx, ctx.units),
                ],
            );
        }
    }
    Ok(report)
}

fn timeshare_json(r: &TimeshareReport, hx: f64, u: Units) -> Value {
    let root_n = (r.n as f64).sqrt();
    let rate_target = hx - r.target_d;
    let rate_se = r.rate_std / root_n;
    let rate_sigmas = if rate_se > 0.0 {
        (r.ideal_rate - rate_target) / rate_se
    } else {
        0.0
    };
    json!({
        "target_d": u.info(r.target_d, 0.0),
        "k": r.k,
        "n": r.n,
        "empirical_loss": u.info(r.empirical_loss, r.loss_std / root_n),
        "loss_deviation_sigmas": plain(r.loss_deviation_sigmas(), 0.0),
        "ideal_rate": u.info(r.ideal_rate, rate_se),
        "rate_target": u.info(rate_target, 0.0),
        "rate_deviation_sigmas": plain(rate_sigmas, 0.0),
    })
}
