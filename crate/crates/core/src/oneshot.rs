//! Exact single-shot (fixed-length, one symbol) lossy codes.
//!
//! Arbitrary distortion is handled by exhaustive search over codebooks;
//! logarithmic loss over the full simplex has closed-form optima: the
//! average criterion reduces to maximizing `H(f(X))` over partitions, and
//! the excess criterion to covering the most probable symbols with cells of
//! `⌊e^D⌋` symbols each.

use itertools::Itertools;
use serde::Serialize;

use crate::enumerate::{block_count, Mappings, RestrictedGrowth};
use crate::error::{Error, Result};
use crate::prob::{entropy, entropy_of, log_loss, Pmf};
use crate::problem::SourceProblem;

/// Largest function space the brute-force oracles will walk.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Largest source alphabet for partition enumeration.
pub const PARTITION_LIMIT: usize = 14;

/// Largest source alphabet for the log-loss excess oracle.
pub const EXCESS_ORACLE_LIMIT: usize = 12;

/// Slack on probability comparisons against caller targets.
const PROB_SLACK: f64 = 1e-12;

/// Deterministic code: `encoder[x]` is a message in `0..messages`,
/// `decoder[m]` a reconstruction column.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct OneShotCode {
    pub messages: usize,
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
}

impl OneShotCode {
    pub fn new(encoder: Vec<usize>, decoder: Vec<usize>) -> Result<Self> {
        let messages = decoder.len();
        if messages == 0 {
            return Err(Error::InvalidArgument(
                "a code needs at least one message".into(),
            ));
        }
        if let Some(&m) = encoder.iter().find(|&&m| m >= messages) {
            return Err(Error::InvalidArgument(format!(
                "encoder emits message {m} but only {messages} exist"
            )));
        }
        Ok(OneShotCode {
            messages,
            encoder,
            decoder,
        })
    }

    /// Checks the code is total for the problem's alphabets.
    pub fn check(&self, problem: &SourceProblem) -> Result<()> {
        if self.encoder.len() != problem.sources() {
            return Err(Error::DimensionMismatch {
                what: "encoder length vs source alphabet",
                expected: problem.sources(),
                got: self.encoder.len(),
            });
        }
        if let Some(&y) = self
            .decoder
            .iter()
            .find(|&&y| y >= problem.reconstructions())
        {
            return Err(Error::InvalidArgument(format!(
                "decoder emits reconstruction {y} outside the alphabet"
            )));
        }
        Ok(())
    }

    pub fn reconstruct(&self, x: usize) -> usize {
        self.decoder[self.encoder[x]]
    }

    /// `E d(X, g(f(X)))`.
    pub fn expected_distortion(&self, problem: &SourceProblem) -> f64 {
        problem
            .px()
            .probs()
            .iter()
            .enumerate()
            .map(|(x, p)| p * problem.d(x, self.reconstruct(x)))
            .sum()
    }

    /// `P[d(X, g(f(X))) > d]`.
    pub fn excess_probability(&self, problem: &SourceProblem, d: f64) -> f64 {
        problem
            .px()
            .probs()
            .iter()
            .enumerate()
            .filter(|&(x, _)| problem.d(x, self.reconstruct(x)) > d)
            .map(|(_, p)| p)
            .sum()
    }
}

fn check_messages(problem: &SourceProblem, m: usize) -> Result<()> {
    if m < 1 || m > problem.reconstructions() {
        return Err(Error::InvalidArgument(format!(
            "message count {m} outside 1..={}",
            problem.reconstructions()
        )));
    }
    Ok(())
}

/// Code sending each symbol to its nearest codeword in `book` (ties to the
/// lowest message), padded to `messages` messages.
fn nearest_codeword_code(problem: &SourceProblem, book: &[usize], messages: usize) -> OneShotCode {
    let encoder = (0..problem.sources())
        .map(|x| {
            book.iter()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (j, &y)| {
                    let d = problem.d(x, y);
                    if d < best.1 {
                        (j, d)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect();
    let mut decoder = book.to_vec();
    decoder.resize(messages, book[0]);
    OneShotCode {
        messages,
        encoder,
        decoder,
    }
}

/// Minimum average distortion `D*(M)` and one optimal code.
///
/// Walks every codebook of at most `m` reconstructions, each with its
/// nearest-codeword encoder; the first optimum found is returned.
pub fn solve_avg(problem: &SourceProblem, m: usize) -> Result<(OneShotCode, f64)> {
    check_messages(problem, m)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for k in 1..=m {
        for book in (0..problem.reconstructions()).combinations(k) {
            let value: f64 = problem
                .px()
                .probs()
                .iter()
                .zip(problem.dist())
                .map(|(p, row)| p * book.iter().map(|&y| row[y]).fold(f64::INFINITY, f64::min))
                .sum();
            if best.as_ref().is_none_or(|b| value < b.1) {
                best = Some((book, value));
            }
        }
    }
    let (book, _) = best.expect("at least one codebook");
    let code = nearest_codeword_code(problem, &book, m);
    let value = code.expected_distortion(problem);
    Ok((code, value))
}

/// Brute-force `D*(M)` over all `m^r` encoders, each cell taking its best
/// reconstruction.
pub fn solve_avg_oracle(problem: &SourceProblem, m: usize) -> Result<f64> {
    if m < 1 {
        return Err(Error::InvalidArgument(
            "message count must be at least 1".into(),
        ));
    }
    let r = problem.sources();
    let space = Mappings::count(r, m);
    if space > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(format!("{m}^{r} = {space} encoders")));
    }
    let px = problem.px().probs();
    let s = problem.reconstructions();
    let mut best = f64::INFINITY;
    let mut cell_cost = vec![0.0; s];
    for encoder in Mappings::new(r, m) {
        let mut total = 0.0;
        for msg in 0..m {
            cell_cost.iter_mut().for_each(|c| *c = 0.0);
            let mut used = false;
            for x in (0..r).filter(|&x| encoder[x] == msg) {
                used = true;
                for (y, c) in cell_cost.iter_mut().enumerate() {
                    *c += px[x] * problem.d(x, y);
                }
            }
            if used {
                total += cell_cost.iter().copied().fold(f64::INFINITY, f64::min);
            }
        }
        best = best.min(total);
    }
    Ok(best)
}

/// Minimum excess-distortion probability `ε*(M, D)` and one optimal code.
///
/// A symbol is covered by `y` when `d(x, y) ≤ d`. Codebooks larger than the
/// reconstruction alphabet add nothing, so `m` is clamped to `s`.
pub fn solve_excess(problem: &SourceProblem, m: usize, d: f64) -> Result<(OneShotCode, f64)> {
    if m < 1 {
        return Err(Error::InvalidArgument(
            "message count must be at least 1".into(),
        ));
    }
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distortion level {d} must be ≥ 0"
        )));
    }
    let px = problem.px().probs();
    let k = m.min(problem.reconstructions());
    let mut best: Option<(Vec<usize>, f64)> = None;
    for book in (0..problem.reconstructions()).combinations(k) {
        let uncovered: f64 = (0..problem.sources())
            .filter(|&x| !book.iter().any(|&y| problem.d(x, y) <= d))
            .map(|x| px[x])
            .sum();
        if best.as_ref().is_none_or(|b| uncovered < b.1) {
            best = Some((book, uncovered));
        }
    }
    let (book, eps) = best.expect("at least one codebook");
    let mut code = nearest_codeword_code(problem, &book, m);
    // Prefer a covering codeword over a merely nearest one.
    for x in 0..problem.sources() {
        if let Some(j) = book.iter().position(|&y| problem.d(x, y) <= d) {
            code.encoder[x] = j;
        }
    }
    Ok((code, eps))
}

/// Smallest `M` with `ε*(M, D) ≤ eps`. `eps = 1` returns 1.
pub fn solve_codebook(problem: &SourceProblem, d: f64, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    if eps >= 1.0 {
        return Ok(1);
    }
    for m in 1..=problem.reconstructions() {
        let (_, e) = solve_excess(problem, m, d)?;
        if e <= eps + PROB_SLACK {
            return Ok(m);
        }
    }
    let (_, floor) = solve_excess(problem, problem.reconstructions(), d)?;
    Err(Error::InfeasibleTarget(format!(
        "excess probability {eps} unreachable at distortion {d}: best with all {} reconstructions is {floor}",
        problem.reconstructions()
    )))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside [0, 1]")));
    }
    Ok(())
}

/// Optimal average-criterion scheme under log loss with soft reconstructions.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionScheme {
    pub messages: usize,
    /// Cell (message) of each source symbol; cells are numbered in order of
    /// first appearance.
    pub encoder: Vec<usize>,
    /// `u_m = P[f(X) = m]` for each used cell.
    pub cell_masses: Vec<f64>,
    /// `P(X | f(X) = m)`, supported on the cell.
    pub posterior_rows: Vec<Pmf>,
}

impl PartitionScheme {
    /// `H(f(X))`.
    pub fn message_entropy(&self) -> f64 {
        entropy_of(&self.cell_masses)
    }

    /// `E ℓ(X, q^{f(X)})` using the posterior rows as decoder.
    pub fn expected_log_loss(&self, px: &Pmf) -> f64 {
        px.probs()
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(x, p)| p * log_loss(x, &self.posterior_rows[self.encoder[x]]))
            .sum()
    }
}

/// `D*(M) = H(X) − max_{|f| ≤ M} H(f(X))` by enumerating every partition of
/// the source alphabet into at most `m` cells.
pub fn logloss_avg_optimum(px: &Pmf, m: usize) -> Result<(PartitionScheme, f64)> {
    let r = px.len();
    if m < 1 || m > r {
        return Err(Error::InvalidArgument(format!(
            "message count {m} outside 1..={r}"
        )));
    }
    if r > PARTITION_LIMIT {
        return Err(Error::TooLarge(format!(
            "partitions of {r} symbols (limit {PARTITION_LIMIT})"
        )));
    }
    let probs = px.probs();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut masses = vec![0.0; m];
    for labels in RestrictedGrowth::new(r, m) {
        masses.iter_mut().for_each(|u| *u = 0.0);
        for (&b, &p) in labels.iter().zip(probs) {
            masses[b] += p;
        }
        let h = entropy_of(&masses);
        if best.as_ref().is_none_or(|b| h > b.1 + PROB_SLACK) {
            best = Some((labels, h));
        }
    }
    let (labels, h_msg) = best.expect("at least one partition");
    let blocks = block_count(&labels);
    let mut cell_masses = vec![0.0; blocks];
    for (&b, &p) in labels.iter().zip(probs) {
        cell_masses[b] += p;
    }
    let posterior_rows = (0..blocks)
        .map(|b| {
            let members = labels.iter().filter(|&&l| l == b).count();
            let row: Vec<f64> = labels
                .iter()
                .zip(probs)
                .map(|(&l, &p)| match (l == b, cell_masses[b] > 0.0) {
                    (false, _) => 0.0,
                    (true, true) => p / cell_masses[b],
                    // A zero-mass cell is never used; any row on it will do.
                    (true, false) => 1.0 / members as f64,
                })
                .collect();
            Pmf::renormalize(row).expect("cell row has positive mass")
        })
        .collect();
    let scheme = PartitionScheme {
        messages: m,
        encoder: labels,
        cell_masses,
        posterior_rows,
    };
    Ok((scheme, (entropy(px) - h_msg).max(0.0)))
}

/// `⌊e^D⌋` as the largest integer `k` with `ln k ≤ D + 1e-12`, saturating
/// far above any alphabet size.
pub fn floor_exp(d: f64) -> usize {
    const CAP: usize = 1 << 52;
    if d >= (CAP as f64).ln() {
        return CAP;
    }
    let mut k = (d.exp().floor() as usize).max(1);
    while k > 1 && (k as f64).ln() > d + PROB_SLACK {
        k -= 1;
    }
    while ((k + 1) as f64).ln() <= d + PROB_SLACK {
        k += 1;
    }
    k
}

/// Optimal excess-criterion scheme under log loss.
#[derive(Debug, Clone, Serialize)]
pub struct ExcessScheme {
    pub d: f64,
    pub messages: usize,
    /// Symbols by non-increasing probability (stable).
    pub sort_order: Vec<usize>,
    /// `⌊e^D⌋`, the number of symbols one soft reconstruction can cover.
    pub cell_size: usize,
    pub encoder: Vec<usize>,
    /// Uniform over the covered members of each used cell.
    pub decoder_rows: Vec<Pmf>,
    pub achieved_epsilon: f64,
}

fn sorted_order(px: &Pmf) -> Vec<usize> {
    let mut order: Vec<usize> = (0..px.len()).collect();
    order.sort_by(|&a, &b| px[b].total_cmp(&px[a]));
    order
}

/// `ε*(M, D) = 1 − F(M ⌊e^D⌋)` with its optimal scheme.
pub fn logloss_excess_optimum(px: &Pmf, m: usize, d: f64) -> Result<ExcessScheme> {
    if m < 1 {
        return Err(Error::InvalidArgument(
            "message count must be at least 1".into(),
        ));
    }
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distortion level {d} must be ≥ 0"
        )));
    }
    let r = px.len();
    let order = sorted_order(px);
    let cell_size = floor_exp(d);
    let k = cell_size.min(r);
    let covered = m.saturating_mul(k).min(r);
    let used = covered.div_ceil(k);

    let mut encoder = vec![0; r];
    for (rank, &x) in order.iter().enumerate() {
        encoder[x] = (rank / k).min(m - 1);
    }
    let decoder_rows = (0..used)
        .map(|cell| {
            let members = &order[cell * k..((cell + 1) * k).min(covered)];
            let mut row = vec![0.0; r];
            for &x in members {
                row[x] = 1.0 / members.len() as f64;
            }
            Pmf::renormalize(row).expect("non-empty cell")
        })
        .collect();
    let achieved_epsilon = order[covered..].iter().map(|&x| px[x]).sum();
    Ok(ExcessScheme {
        d,
        messages: m,
        sort_order: order,
        cell_size,
        encoder,
        decoder_rows,
        achieved_epsilon,
    })
}

/// `M*(D, ε) = ⌈F⁻¹(1 − ε) / ⌊e^D⌋⌉` on the sorted source law.
pub fn logloss_codebook(px: &Pmf, d: f64, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distortion level {d} must be ≥ 0"
        )));
    }
    let order = sorted_order(px);
    let target = 1.0 - eps;
    let mut cdf = 0.0;
    let mut needed = px.len();
    for (i, &x) in order.iter().enumerate() {
        cdf += px[x];
        if cdf >= target - PROB_SLACK {
            needed = i + 1;
            break;
        }
    }
    Ok(needed.div_ceil(floor_exp(d)).max(1))
}

/// Brute-force `ε*(M, D)` under log loss: every encoder, and in each cell
/// every subset `T` a single pmf can give mass `≥ e^{-D}` to, which is
/// possible iff `|T| e^{-D} ≤ 1`.
pub fn logloss_excess_oracle(px: &Pmf, m: usize, d: f64) -> Result<f64> {
    let r = px.len();
    if m < 1 {
        return Err(Error::InvalidArgument(
            "message count must be at least 1".into(),
        ));
    }
    if r > EXCESS_ORACLE_LIMIT {
        return Err(Error::TooLarge(format!(
            "{r} symbols (limit {EXCESS_ORACLE_LIMIT})"
        )));
    }
    let space = Mappings::count(r, m);
    if space > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(format!("{m}^{r} = {space} encoders")));
    }
    let threshold = (-d).exp();
    let feasible = |t: u32| (t as f64) * threshold <= 1.0 + PROB_SLACK;

    let full = 1usize << r;
    let mass: Vec<f64> = (0..full)
        .map(|mask| (0..r).filter(|&x| mask >> x & 1 == 1).map(|x| px[x]).sum())
        .collect();
    // Best coverable submask of every mask.
    let mut best_sub = vec![(0.0f64, 0usize); full];
    for (mask, slot) in best_sub.iter_mut().enumerate() {
        let mut sub = mask;
        loop {
            if feasible(sub.count_ones()) && mass[sub] > slot.0 {
                *slot = (mass[sub], sub);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
    }

    let mut best = (-1.0f64, 0usize);
    let mut cells = vec![0usize; m];
    for encoder in Mappings::new(r, m) {
        cells.iter_mut().for_each(|c| *c = 0);
        for (x, &msg) in encoder.iter().enumerate() {
            cells[msg] |= 1 << x;
        }
        let (total, union) = cells.iter().fold((0.0, 0usize), |(t, u), &c| {
            let (v, sub) = best_sub[c];
            (t + v, u | sub)
        });
        if total > best.0 {
            best = (total, union);
        }
    }
    Ok((0..r)
        .filter(|&x| best.1 >> x & 1 == 0)
        .map(|x| px[x])
        .sum())
}
