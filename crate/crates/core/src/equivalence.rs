//! The logarithmic-loss problem corresponding to an arbitrary-distortion
//! single-shot problem.
//!
//! Solve the rate-distortion problem at `D = D*(M)`; the reverse channel
//! rows `P*(· | x̂)` become the reconstruction alphabet of a log-loss problem
//! with the same source and message count. A code `(f, g)` maps to
//! `(f, x̂ ↦ P*(· | g(m)))`, and for every code
//!
//! ```text
//! E ℓ(X, g_ℓ(f(X))) = H(X | X̂*) + λ* (E d(X, g(f(X))) − D*(M))
//! ```
//!
//! so the two problems share their optimal codes.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::enumerate::Mappings;
use crate::error::{Error, Result};
use crate::oneshot::{solve_avg, OneShotCode, ENUMERATION_LIMIT};
use crate::prob::{log_loss, Pmf};
use crate::problem::SourceProblem;
use crate::rd::{rd_at_distortion, RdPoint, SolverOptions};

/// Acceptance radius when matching a decoder row to a reconstruction row.
pub const ROW_MATCH_TOL: f64 = 1e-9;

/// Reconstruction rows closer than this would break the code bijection.
pub const ROW_DISTINCT_TOL: f64 = 1e-9;

/// Objective values within this of the minimum count as optimal.
pub const ARGMIN_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Serialize)]
pub struct CorrespondingProblem {
    pub problem: SourceProblem,
    pub messages: usize,
    /// `P*(· | x̂)` for each kept reconstruction, in `kept_columns` order.
    pub y_rows: Vec<Pmf>,
    pub lambda_star: f64,
    /// `H(X | X̂*)` under `px × P*`.
    pub h_x_given_xhat: f64,
    pub d_star_m: f64,
    /// Optimal code found by the single-shot solver.
    pub optimal_code: OneShotCode,
    pub source_point: RdPoint,
    /// Smallest pairwise max-norm distance between reconstruction rows.
    pub min_row_separation: f64,
}

impl CorrespondingProblem {
    pub fn px(&self) -> &Pmf {
        self.problem.px()
    }

    pub fn kept_columns(&self) -> &[usize] {
        &self.source_point.kept_columns
    }

    /// `ln M`, which bounds `R(D*(M))` from above.
    pub fn log_messages(&self) -> f64 {
        (self.messages as f64).ln()
    }
}

/// Builds the corresponding log-loss problem at `m` messages.
///
/// Fails with [`Error::Degenerate`] when `D*(M)` sits at either end of the
/// distortion range (the slope diverges or vanishes) or only one
/// reconstruction survives.
pub fn build_corresponding(
    problem: &SourceProblem,
    m: usize,
    opts: &SolverOptions,
) -> Result<CorrespondingProblem> {
    let (optimal_code, d_star) = solve_avg(problem, m)?;
    let (lo, hi) = (problem.d_min(), problem.d_max());
    if d_star <= lo + opts.tol {
        return Err(Error::Degenerate(format!(
            "D*({m}) = {d_star} equals D_min = {lo}; the slope diverges"
        )));
    }
    if d_star >= hi - opts.tol {
        return Err(Error::Degenerate(format!(
            "D*({m}) = {d_star} equals D_max = {hi}; zero-rate endpoint"
        )));
    }
    let pt = rd_at_distortion(problem, d_star, opts)?;
    if pt.kept_columns.len() < 2 {
        return Err(Error::Degenerate(format!(
            "only {} reconstruction survives at D*({m})",
            pt.kept_columns.len()
        )));
    }
    let y_rows: Vec<Pmf> = pt
        .reverse
        .rows()
        .iter()
        .map(|row| Pmf::new(row.clone()))
        .collect::<Result<_>>()?;
    let mut min_row_separation = f64::INFINITY;
    for (i, a) in y_rows.iter().enumerate() {
        for b in &y_rows[i + 1..] {
            min_row_separation = min_row_separation.min(a.max_abs_diff(b));
        }
    }
    if min_row_separation <= ROW_DISTINCT_TOL {
        return Err(Error::Numeric(format!(
            "reverse-channel rows are not distinct (separation {min_row_separation:e})"
        )));
    }
    Ok(CorrespondingProblem {
        problem: problem.clone(),
        messages: m,
        lambda_star: pt.lambda_star,
        h_x_given_xhat: pt.conditional_entropy(problem.px()),
        d_star_m: d_star,
        optimal_code,
        y_rows,
        min_row_separation,
        source_point: pt,
    })
}

/// Encoder plus soft reconstructions for the log-loss problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLossCode {
    pub messages: usize,
    pub encoder: Vec<usize>,
    pub decoder_rows: Vec<Pmf>,
}

impl LogLossCode {
    pub fn expected_loss(&self, px: &Pmf) -> f64 {
        px.probs()
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(x, p)| p * log_loss(x, &self.decoder_rows[self.encoder[x]]))
            .sum()
    }
}

fn check_code(cp: &CorrespondingProblem, code: &OneShotCode) -> Result<()> {
    code.check(&cp.problem)?;
    if code.messages != cp.messages {
        return Err(Error::DimensionMismatch {
            what: "code message count",
            expected: cp.messages,
            got: code.messages,
        });
    }
    Ok(())
}

/// `f_ℓ = f`, `g_ℓ(m) = P*(· | g(m))`.
pub fn map_code(cp: &CorrespondingProblem, code: &OneShotCode) -> Result<LogLossCode> {
    check_code(cp, code)?;
    let decoder_rows = code
        .decoder
        .iter()
        .enumerate()
        .map(|(message, &column)| {
            cp.source_point
                .kept_position(column)
                .map(|j| cp.y_rows[j].clone())
                .ok_or(Error::PrunedColumn { message, column })
        })
        .collect::<Result<_>>()?;
    Ok(LogLossCode {
        messages: code.messages,
        encoder: code.encoder.clone(),
        decoder_rows,
    })
}

/// Inverse of [`map_code`]; each decoder row must lie within
/// [`ROW_MATCH_TOL`] (max-norm) of a reconstruction row.
pub fn unmap_code(cp: &CorrespondingProblem, lcode: &LogLossCode) -> Result<OneShotCode> {
    if lcode.decoder_rows.len() != lcode.messages {
        return Err(Error::DimensionMismatch {
            what: "decoder rows vs messages",
            expected: lcode.messages,
            got: lcode.decoder_rows.len(),
        });
    }
    let decoder = lcode
        .decoder_rows
        .iter()
        .enumerate()
        .map(|(message, row)| {
            if row.len() != cp.px().len() {
                return Err(Error::DimensionMismatch {
                    what: "decoder row length",
                    expected: cp.px().len(),
                    got: row.len(),
                });
            }
            let (j, distance) = cp
                .y_rows
                .iter()
                .map(|y| y.max_abs_diff(row))
                .enumerate()
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if distance > ROW_MATCH_TOL {
                return Err(Error::UnmatchedRow { message, distance });
            }
            Ok(cp.kept_columns()[j])
        })
        .collect::<Result<_>>()?;
    let code = OneShotCode::new(lcode.encoder.clone(), decoder)?;
    check_code(cp, &code)?;
    Ok(code)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityCheck {
    /// `E ℓ` of the mapped code.
    pub lhs: f64,
    /// `H(X|X̂*) + λ* (E d − D*(M))`.
    pub rhs: f64,
    pub residual: f64,
    pub expected_distortion: f64,
    /// `lhs − H(X|X̂*)`; never below `-tol` for a valid code.
    pub excess_over_bound: f64,
}

/// Evaluates both sides of the correspondence identity for one code.
pub fn verify_identity(cp: &CorrespondingProblem, code: &OneShotCode) -> Result<IdentityCheck> {
    let lcode = map_code(cp, code)?;
    let lhs = lcode.expected_loss(cp.px());
    let expected_distortion = code.expected_distortion(&cp.problem);
    let rhs = cp.h_x_given_xhat + cp.lambda_star * (expected_distortion - cp.d_star_m);
    Ok(IdentityCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        expected_distortion,
        excess_over_bound: lhs - cp.h_x_given_xhat,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SuboptimalityGap {
    /// `E ℓ − H(X|X̂*)`.
    pub logloss_excess: f64,
    /// `λ* (E d − D*(M))`.
    pub scaled_distortion_excess: f64,
}

impl SuboptimalityGap {
    pub fn mismatch(&self) -> f64 {
        (self.logloss_excess - self.scaled_distortion_excess).abs()
    }
}

pub fn suboptimality_gap(
    cp: &CorrespondingProblem,
    code: &OneShotCode,
) -> Result<SuboptimalityGap> {
    let check = verify_identity(cp, code)?;
    Ok(SuboptimalityGap {
        logloss_excess: check.lhs - cp.h_x_given_xhat,
        scaled_distortion_excess: cp.lambda_star * (check.expected_distortion - cp.d_star_m),
    })
}

/// Summary of the identity over a family of codes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentitySweep {
    pub codes: usize,
    pub max_residual: f64,
    /// Smallest `lhs − H(X|X̂*)` seen.
    pub min_excess_over_bound: f64,
}

impl IdentitySweep {
    fn new() -> Self {
        IdentitySweep {
            codes: 0,
            max_residual: 0.0,
            min_excess_over_bound: f64::INFINITY,
        }
    }

    fn add(&mut self, check: &IdentityCheck) {
        self.codes += 1;
        self.max_residual = self.max_residual.max(check.residual);
        self.min_excess_over_bound = self.min_excess_over_bound.min(check.excess_over_bound);
    }
}

fn guard_space(r: usize, m: usize, s: usize) -> Result<()> {
    let space = Mappings::count(r, m).saturating_mul(Mappings::count(m, s));
    if space > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(format!(
            "{m}^{r} encoders x {s}^{m} decoders = {space} codes"
        )));
    }
    Ok(())
}

/// Checks the identity on every code whose decoder uses kept reconstructions.
pub fn exhaustive_identity_check(cp: &CorrespondingProblem) -> Result<IdentitySweep> {
    let (r, m, kept) = (cp.px().len(), cp.messages, cp.kept_columns());
    guard_space(r, m, kept.len())?;
    let mut sweep = IdentitySweep::new();
    for encoder in Mappings::new(r, m) {
        for picks in Mappings::new(m, kept.len()) {
            let decoder = picks.iter().map(|&j| kept[j]).collect();
            let code = OneShotCode {
                messages: m,
                encoder: encoder.clone(),
                decoder,
            };
            sweep.add(&verify_identity(cp, &code)?);
        }
    }
    Ok(sweep)
}

/// Checks the identity on `samples` codes drawn uniformly (encoder and
/// kept-reconstruction decoder) from a ChaCha8 stream seeded with `seed`.
pub fn sampled_identity_check(
    cp: &CorrespondingProblem,
    samples: usize,
    seed: u64,
) -> Result<IdentitySweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, m, kept) = (cp.px().len(), cp.messages, cp.kept_columns());
    let mut sweep = IdentitySweep::new();
    for _ in 0..samples {
        let encoder = (0..r).map(|_| rng.gen_range(0..m)).collect();
        let decoder = (0..m).map(|_| kept[rng.gen_range(0..kept.len())]).collect();
        let code = OneShotCode {
            messages: m,
            encoder,
            decoder,
        };
        sweep.add(&verify_identity(cp, &code)?);
    }
    Ok(sweep)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoincidenceReport {
    /// Codes minimizing `E d` over all encoders and decoders.
    pub distortion_argmin: Vec<OneShotCode>,
    /// Codes minimizing `E ℓ` over encoders and decoders with rows in the
    /// reconstruction alphabet, pulled back through [`unmap_code`].
    pub logloss_argmin: Vec<OneShotCode>,
    pub min_expected_distortion: f64,
    pub min_expected_loss: f64,
    /// `|min E ℓ − H(X|X̂*)|`.
    pub optimum_loss_residual: f64,
    pub coincide: bool,
}

/// Enumerates both code spaces and compares their sets of minimizers.
pub fn verify_optimum_coincidence(cp: &CorrespondingProblem) -> Result<CoincidenceReport> {
    let problem = &cp.problem;
    let (r, m, s) = (problem.sources(), cp.messages, problem.reconstructions());
    guard_space(r, m, s)?;
    let px = cp.px();

    let codes = || {
        Mappings::new(r, m).flat_map(move |encoder| {
            Mappings::new(m, s).map(move |decoder| OneShotCode {
                messages: m,
                encoder: encoder.clone(),
                decoder,
            })
        })
    };
    let min_d = codes()
        .map(|c| c.expected_distortion(problem))
        .fold(f64::INFINITY, f64::min);
    let distortion_argmin: BTreeSet<Vec<usize>> = codes()
        .filter(|c| c.expected_distortion(problem) <= min_d + ARGMIN_TOL)
        .map(code_key)
        .collect();

    let n_rows = cp.y_rows.len();
    let lcodes = || {
        Mappings::new(r, m).flat_map(move |encoder| {
            Mappings::new(m, n_rows).map(move |picks| LogLossCode {
                messages: m,
                encoder: encoder.clone(),
                decoder_rows: picks.iter().map(|&j| cp.y_rows[j].clone()).collect(),
            })
        })
    };
    let min_l = lcodes()
        .map(|c| c.expected_loss(px))
        .fold(f64::INFINITY, f64::min);
    let logloss_argmin: BTreeSet<Vec<usize>> = lcodes()
        .filter(|c| c.expected_loss(px) <= min_l + ARGMIN_TOL)
        .map(|c| unmap_code(cp, &c).map(code_key))
        .collect::<Result<_>>()?;

    let to_codes = |set: &BTreeSet<Vec<usize>>| -> Vec<OneShotCode> {
        set.iter()
            .map(|key| OneShotCode {
                messages: m,
                encoder: key[..r].to_vec(),
                decoder: key[r..].to_vec(),
            })
            .collect()
    };
    Ok(CoincidenceReport {
        coincide: distortion_argmin == logloss_argmin,
        distortion_argmin: to_codes(&distortion_argmin),
        logloss_argmin: to_codes(&logloss_argmin),
        min_expected_distortion: min_d,
        min_expected_loss: min_l,
        optimum_loss_residual: (min_l - cp.h_x_given_xhat).abs(),
    })
}

fn code_key(code: OneShotCode) -> Vec<usize> {
    let mut key = code.encoder;
    key.extend(code.decoder);
    key
}
