//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p lossylab-cli --test acceptance`.

use std::f64::consts::LN_2;
use std::process::Command;
use std::time::{Duration, Instant};

use lossylab::equivalence::{
    build_corresponding, exhaustive_identity_check, verify_optimum_coincidence,
    CorrespondingProblem,
};
use lossylab::oneshot::{
    logloss_avg_optimum, logloss_codebook, logloss_excess_optimum, logloss_excess_oracle,
    solve_avg, solve_avg_oracle,
};
use lossylab::prob::{binary_entropy, entropy};
use lossylab::rd::{rd_at_distortion, verify_csiszar_identity, SolverOptions};
use lossylab::successive::{
    construct_sr, construct_sr_chain, timeshare_simulate, timeshare_two_decoders, verify_sr,
    verify_sr_chain,
};
use lossylab::{Error, Pmf, SourceProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RD_ORACLE_TOL: f64 = 1e-6;
const SOLVER_TOL: f64 = 1e-10;
const CSISZAR_TOL: f64 = 1e-6;
const TILTED_MEAN_TOL: f64 = 1e-8;
const IDENTITY_TOL: f64 = 1e-6;
const BOUND_SLACK: f64 = 1e-9;
const ORACLE_EXACT_TOL: f64 = 1e-12;
const CLOSED_FORM_TOL: f64 = 1e-12;
const SR_TOL: f64 = 1e-9;
const MC_SIGMAS: f64 = 4.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn run(id: usize, title: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took < l);
    let passed = out.passed && in_time;
    let budget = match limit {
        Some(l) if in_time => format!(" (limit {}s)", l.as_secs()),
        Some(l) => format!(" (limit {}s, exceeded)", l.as_secs()),
        None => String::new(),
    };
    println!(
        "criterion {id}: {} {title}: {}; {:.2}s{budget}",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
    );
    passed
}

fn hamming(px: Vec<f64>) -> SourceProblem {
    SourceProblem::hamming(Pmf::new(px).unwrap())
}

fn random_problem(rng: &mut ChaCha8Rng, max_r: usize, max_s: usize) -> SourceProblem {
    let r = rng.gen_range(2..=max_r);
    let s = rng.gen_range(2..=max_s);
    let px = Pmf::renormalize((0..r).map(|_| rng.gen_range(0.05..1.0)).collect()).unwrap();
    let dist = (0..r)
        .map(|_| (0..s).map(|_| rng.gen_range(0.0..2.0)).collect())
        .collect();
    SourceProblem::new(px, dist).unwrap()
}

fn random_pmf(rng: &mut ChaCha8Rng, r: usize) -> Pmf {
    Pmf::renormalize((0..r).map(|_| rng.gen_range(0.01..1.0)).collect()).unwrap()
}

/// Uniform-3 and uniform-4 Hamming plus two skewed 4x4 instances.
fn suite() -> Vec<(&'static str, SourceProblem)> {
    let abs: Vec<Vec<f64>> = (0..4)
        .map(|x| (0..4).map(|y| (x as f64 - y as f64).abs()).collect())
        .collect();
    let asym = vec![
        vec![0.0, 1.0, 2.0, 1.5],
        vec![0.7, 0.0, 1.2, 2.0],
        vec![1.9, 0.8, 0.0, 0.6],
        vec![1.1, 2.2, 0.9, 0.0],
    ];
    vec![
        ("uniform-3/hamming", SourceProblem::uniform_hamming(3)),
        ("uniform-4/hamming", SourceProblem::uniform_hamming(4)),
        (
            "skewed-4/abs",
            SourceProblem::new(Pmf::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap(), abs).unwrap(),
        ),
        (
            "skewed-4/asym",
            SourceProblem::new(Pmf::new(vec![0.5, 0.25, 0.15, 0.1]).unwrap(), asym).unwrap(),
        ),
    ]
}

/// Non-degenerate corresponding problems of the suite for M in {2, 3}.
fn suite_correspondences() -> Result<Vec<(String, CorrespondingProblem)>, String> {
    let mut out = Vec::new();
    for (name, p) in suite() {
        for m in [2, 3] {
            match build_corresponding(&p, m, &SolverOptions::with_tol(SOLVER_TOL)) {
                Ok(cp) => out.push((format!("{name} M={m}"), cp)),
                Err(Error::Degenerate(_)) => {}
                Err(e) => return Err(format!("{name} M={m}: {e}")),
            }
        }
    }
    Ok(out)
}

fn criterion1() -> Outcome {
    let p = SourceProblem::uniform_hamming(2);
    let opts = SolverOptions::with_tol(SOLVER_TOL);
    let mut worst_rate: f64 = 0.0;
    let mut worst_lambda: f64 = 0.0;
    for d in [0.05, 0.1, 0.2, 0.3] {
        let pt = match rd_at_distortion(&p, d, &opts) {
            Ok(pt) => pt,
            Err(e) => return outcome(false, format!("D={d}: {e}")),
        };
        worst_rate = worst_rate.max((pt.rate - (LN_2 - binary_entropy(d))).abs());
        worst_lambda = worst_lambda.max((pt.lambda_star - ((1.0 - d) / d).ln()).abs());
    }
    outcome(
        worst_rate < RD_ORACLE_TOL && worst_lambda < RD_ORACLE_TOL,
        format!("max |R - (ln2 - h(D))| = {worst_rate:.2e}, max |lambda* - ln((1-D)/D)| = {worst_lambda:.2e} (tol {RD_ORACLE_TOL:e})"),
    )
}

fn criterion2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = SolverOptions::with_tol(SOLVER_TOL);
    let mut worst_csiszar: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    for i in 0..50 {
        let p = random_problem(&mut rng, 6, 6);
        let t = rng.gen_range(0.1..0.9);
        let d = p.d_min() + t * (p.d_max() - p.d_min());
        let pt = match rd_at_distortion(&p, d, &opts) {
            Ok(pt) => pt,
            Err(e) => return outcome(false, format!("problem {i}: {e}")),
        };
        match verify_csiszar_identity(&p, &pt) {
            Ok(r) => worst_csiszar = worst_csiszar.max(r),
            Err(e) => return outcome(false, format!("problem {i}: {e}")),
        }
        let mean: f64 = p
            .px()
            .probs()
            .iter()
            .zip(&pt.tilted)
            .map(|(a, b)| a * b)
            .sum();
        worst_mean = worst_mean.max((mean - pt.rate).abs());
    }
    outcome(
        worst_csiszar < CSISZAR_TOL && worst_mean < TILTED_MEAN_TOL,
        format!("50 problems: max residual {worst_csiszar:.2e} (tol {CSISZAR_TOL:e}), max |E[j] - R| {worst_mean:.2e} (tol {TILTED_MEAN_TOL:e})"),
    )
}

fn criterion3() -> Outcome {
    let cps = match suite_correspondences() {
        Ok(c) => c,
        Err(e) => return outcome(false, e),
    };
    let mut codes = 0;
    let mut worst: f64 = 0.0;
    let mut min_excess = f64::INFINITY;
    for (name, cp) in &cps {
        match exhaustive_identity_check(cp) {
            Ok(sweep) => {
                codes += sweep.codes;
                worst = worst.max(sweep.max_residual);
                min_excess = min_excess.min(sweep.min_excess_over_bound);
            }
            Err(e) => return outcome(false, format!("{name}: {e}")),
        }
    }
    outcome(
        cps.len() >= 6 && worst < IDENTITY_TOL && min_excess >= -BOUND_SLACK,
        format!(
            "{} instances, {codes} codes: max |lhs - rhs| {worst:.2e} (tol {IDENTITY_TOL:e}), min lhs - H(X|X*) {min_excess:.2e} (slack {BOUND_SLACK:e})",
            cps.len()
        ),
    )
}

fn criterion4() -> Outcome {
    let cps = match suite_correspondences() {
        Ok(c) => c,
        Err(e) => return outcome(false, e),
    };
    let mut failed = Vec::new();
    let mut sizes = 0;
    for (name, cp) in &cps {
        match verify_optimum_coincidence(cp) {
            Ok(rep) => {
                sizes += rep.distortion_argmin.len();
                if !rep.coincide {
                    failed.push(name.clone());
                }
            }
            Err(e) => return outcome(false, format!("{name}: {e}")),
        }
    }
    outcome(
        failed.is_empty(),
        format!(
            "{} instances, {sizes} optimal codes in total; mismatched: {}",
            cps.len(),
            if failed.is_empty() {
                "none".to_string()
            } else {
                failed.join(", ")
            }
        ),
    )
}

fn criterion5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut instances: Vec<SourceProblem> = suite().into_iter().map(|(_, p)| p).collect();
    instances.extend((0..40).map(|_| random_problem(&mut rng, 5, 5)));
    let mut avg_checked = 0;
    let mut avg_worst: f64 = 0.0;
    for p in &instances {
        for m in 1..=3usize.min(p.reconstructions()) {
            let fast = match solve_avg(p, m) {
                Ok((_, v)) => v,
                Err(e) => return outcome(false, e.to_string()),
            };
            let slow = match solve_avg_oracle(p, m) {
                Ok(v) => v,
                Err(e) => return outcome(false, e.to_string()),
            };
            avg_worst = avg_worst.max((fast - slow).abs());
            avg_checked += 1;
        }
    }

    let mut pmfs: Vec<Pmf> = (2..=10).map(Pmf::uniform).collect();
    pmfs.extend((0..40).map(|i| random_pmf(&mut rng, 2 + i % 9)));
    let mut excess_checked = 0;
    let mut excess_worst: f64 = 0.0;
    for px in &pmfs {
        for m in 1..=3 {
            for d in [0.0, 0.5, LN_2, 1.2] {
                let closed = match logloss_excess_optimum(px, m, d) {
                    Ok(s) => s.achieved_epsilon,
                    Err(e) => return outcome(false, e.to_string()),
                };
                let oracle = match logloss_excess_oracle(px, m, d) {
                    Ok(v) => v,
                    Err(e) => return outcome(false, e.to_string()),
                };
                excess_worst = excess_worst.max((closed - oracle).abs());
                excess_checked += 1;
            }
        }
    }
    outcome(
        avg_worst <= ORACLE_EXACT_TOL && excess_worst <= ORACLE_EXACT_TOL,
        format!(
            "{avg_checked} average-distortion cases max diff {avg_worst:.1e}, {excess_checked} log-loss excess cases max diff {excess_worst:.1e} (tol {ORACLE_EXACT_TOL:e})"
        ),
    )
}

fn criterion6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = Vec::new();
    let mut checked = 0;
    let check = |px: &Pmf, m: usize, expect_equal: bool, violations: &mut Vec<String>| {
        let (_, value) = match logloss_avg_optimum(px, m) {
            Ok(v) => v,
            Err(e) => {
                violations.push(e.to_string());
                return;
            }
        };
        let gap = value - (entropy(px) - (m as f64).ln());
        let equal = gap.abs() <= CLOSED_FORM_TOL;
        if gap < -CLOSED_FORM_TOL || equal != expect_equal {
            violations.push(format!("r={} M={m} gap {gap:.2e}", px.len()));
        }
    };
    for _ in 0..100 {
        let r = rng.gen_range(2..=10);
        let px = random_pmf(&mut rng, r);
        let m = rng.gen_range(2..=4usize.min(r));
        check(&px, m, false, &mut violations);
        checked += 1;
    }
    for r in 2..=10 {
        for m in 1..=4usize.min(r) {
            check(&Pmf::uniform(r), m, r % m == 0, &mut violations);
            checked += 1;
        }
    }

    let mut consistency = 0;
    for _ in 0..40 {
        let r = rng.gen_range(2..=10);
        let px = random_pmf(&mut rng, r);
        for m in 1..=4 {
            for d in [0.0, 0.5, LN_2, 1.2, 2.0] {
                let eps = match logloss_excess_optimum(&px, m, d) {
                    Ok(s) => s.achieved_epsilon,
                    Err(e) => {
                        violations.push(e.to_string());
                        continue;
                    }
                };
                match logloss_codebook(&px, d, eps) {
                    Ok(back) if back <= m => {}
                    Ok(back) => violations.push(format!("M*(D={d}, eps*={eps}) = {back} > {m}")),
                    Err(e) => violations.push(e.to_string()),
                }
                consistency += 1;
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "{checked} bound checks, {consistency} closed-form round trips; violations: {}",
            if violations.is_empty() {
                "none".to_string()
            } else {
                violations.join("; ")
            }
        ),
    )
}

fn criterion7() -> Outcome {
    let opts = SolverOptions::with_tol(1e-12);
    let skewed = SourceProblem::new(
        Pmf::new(vec![0.5, 0.3, 0.2]).unwrap(),
        vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.0],
            vec![2.0, 1.0, 0.0],
        ],
    )
    .unwrap();
    let cases = [
        ("uniform-2/hamming", hamming(vec![0.5, 0.5]), 0.1),
        ("skewed-3/abs", skewed, 0.3),
    ];
    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, p, d2) in &cases {
        let pt = match rd_at_distortion(p, *d2, &opts) {
            Ok(pt) => pt,
            Err(e) => return outcome(false, format!("{name}: {e}")),
        };
        let (h, hx) = (pt.conditional_entropy(p.px()), entropy(p.px()));
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let d1 = h + t * (hx - h);
            match construct_sr(p, d1, *d2, &opts).and_then(|c| verify_sr(&c, SR_TOL)) {
                Ok(rep) if rep.all_passed() => {}
                Ok(rep) => failures.push(format!("{name} D1={d1:.4}: {:?}", rep.failures())),
                Err(e) => failures.push(format!("{name} D1={d1:.4}: {e}")),
            }
            checked += 1;
        }
    }
    let chain_ok = match construct_sr_chain(&cases[0].1, &[0.65, 0.5, 0.4], 0.1, &opts)
        .and_then(|c| verify_sr_chain(&c, SR_TOL))
    {
        Ok(rep) if rep.all_passed(SR_TOL) => true,
        Ok(rep) => {
            failures.push(format!(
                "chain: residual {:.2e}, monotone {}",
                rep.target_residual, rep.monotone
            ));
            false
        }
        Err(e) => {
            failures.push(format!("chain: {e}"));
            false
        }
    };
    outcome(
        failures.is_empty() && chain_ok,
        format!(
            "{checked} two-stage constructions and a 3-layer chain at tol {SR_TOL:e}; failures: {}",
            if failures.is_empty() {
                "none".to_string()
            } else {
                failures.join("; ")
            }
        ),
    )
}

fn criterion8() -> Outcome {
    let px = Pmf::uniform(4);
    let n = 100_000;
    let seeds = 30u64;
    let band = |stds: &[f64]| {
        let sigma = stds.iter().sum::<f64>() / stds.len() as f64;
        MC_SIGMAS * sigma / ((seeds as f64) * n as f64).sqrt()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let mut loss = Vec::new();
    let mut rate = Vec::new();
    let mut loss_std = Vec::new();
    let mut rate_std = Vec::new();
    for seed in 0..seeds {
        match timeshare_simulate(&px, LN_2, n, seed) {
            Ok(r) => {
                loss.push(r.empirical_loss);
                rate.push(r.ideal_rate);
                loss_std.push(r.loss_std);
                rate_std.push(r.rate_std);
            }
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let loss_dev = (mean(&loss) - LN_2).abs();
    let rate_dev = (mean(&rate) - LN_2).abs();
    let single_ok = loss_dev <= band(&loss_std) && rate_dev <= band(&rate_std);

    let d2 = 4f64.ln() / 4.0;
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    let mut s1 = Vec::new();
    let mut s2 = Vec::new();
    for seed in 0..seeds {
        match timeshare_two_decoders(&px, LN_2, d2, n, seed) {
            Ok((a, b)) => {
                l1.push(a.empirical_loss);
                l2.push(b.empirical_loss);
                s1.push(a.loss_std);
                s2.push(b.loss_std);
            }
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let dev1 = (mean(&l1) - LN_2).abs();
    let dev2 = (mean(&l2) - d2).abs();
    let two_ok = dev1 <= band(&s1) && dev2 <= band(&s2);
    outcome(
        single_ok && two_ok,
        format!(
            "loss dev {loss_dev:.2e} (band {:.2e}), rate dev {rate_dev:.2e} (band {:.2e}), two-decoder devs {dev1:.2e}/{dev2:.2e} (bands {:.2e}/{:.2e})",
            band(&loss_std),
            band(&rate_std),
            band(&s1),
            band(&s2)
        ),
    )
}

fn strip_clock(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("\"wall_clock_seconds\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_lossylab");
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../problems");
    let runs: Vec<Vec<String>> = [
        "rd {root}/binary-hamming.toml --d 0.1",
        "rd {root}/skewed3.toml --grid 0.2,0.4,0.6 --format table",
        "oneshot {root}/uniform3-hamming.toml --m 2",
        "oneshot --logloss --pmf uniform:4 --criterion excess --m 2 --d 0",
        "equiv {root}/uniform3-hamming.toml --m 2",
        "equiv {root}/skewed3.toml --m 2 --samples 500 --seed 7",
        "sr {root}/binary-hamming.toml --d1 0.5 --d2 0.1",
        "sr {root}/binary-hamming.toml --chain 0.6,0.4 --d2 0.1",
        "timeshare --pmf uniform:4 --d 0.6931471805599453 --n 20000 --seed 3",
        "timeshare {root}/skewed3.toml --d 0.6 --d2 0.3 --n 20000 --seed 3",
    ]
    .iter()
    .map(|t| {
        t.replace("{root}", root)
            .split_whitespace()
            .map(String::from)
            .collect()
    })
    .collect();
    let mut differing = Vec::new();
    for args in &runs {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            match Command::new(bin).args(args).output() {
                Ok(o) if o.status.success() => {
                    outputs.push(strip_clock(&String::from_utf8_lossy(&o.stdout)))
                }
                Ok(o) => {
                    return outcome(
                        false,
                        format!(
                            "`{}` exited {:?}: {}",
                            args.join(" "),
                            o.status.code(),
                            String::from_utf8_lossy(&o.stderr)
                        ),
                    )
                }
                Err(e) => return outcome(false, format!("cannot run {bin}: {e}")),
            }
        }
        if outputs[0] != outputs[1] {
            differing.push(args[0].clone());
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} invocations run twice; differing: {}",
            runs.len(),
            if differing.is_empty() {
                "none".to_string()
            } else {
                differing.join(", ")
            }
        ),
    )
}

fn main() {
    let secs = |n| Some(Duration::from_secs(n));
    let results = [
        run(1, "analytic rate-distortion oracle", secs(1), criterion1),
        run(
            2,
            "Csiszar identity on random problems",
            secs(30),
            criterion2,
        ),
        run(
            3,
            "correspondence identity, exhaustive",
            secs(60),
            criterion3,
        ),
        run(4, "optimum coincidence", secs(60), criterion4),
        run(5, "one-shot oracle equivalence", secs(120), criterion5),
        run(6, "closed-form log-loss optima", secs(30), criterion6),
        run(
            7,
            "successive refinement construction",
            secs(10),
            criterion7,
        ),
        run(8, "time-sharing Monte Carlo", secs(60), criterion8),
        run(9, "CLI determinism", None, criterion9),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
