//! Informational rate-distortion function of a finite problem.
//!
//! [`ba_fixed_slope`] runs Blahut–Arimoto alternating minimization at a fixed
//! slope `λ`; [`rd_at_distortion`] bisects `λ` to hit a target distortion,
//! prunes dead reconstruction symbols and fills an [`RdPoint`] with the
//! achieving forward/reverse channels and the `D`-tilted information.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{
    self, conditional_entropy, entropy, information_density, max_abs_diff, posterior, Channel,
    Joint, Pmf,
};
use crate::problem::SourceProblem;

/// Reconstruction symbols whose output mass falls below this are discarded.
pub const PRUNE_THRESHOLD: f64 = 1e-9;

/// Largest slope tried while expanding the bisection bracket.
const LAMBDA_CAP: f64 = (1u64 << 40) as f64;

const BISECTION_STEPS: usize = 200;

/// Slack on interval checks for caller-supplied distortion targets.
const RANGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Accepted `|achieved − target|` distortion mismatch.
    pub tol: f64,
    /// Stationarity residual at which alternating minimization stops.
    pub ba_tol: f64,
    /// Cap on iterations per fixed-slope run, both kinds combined.
    pub max_iter: usize,
    /// Plain alternating-minimization updates before switching to Newton
    /// steps on the output marginal.
    pub ba_warmup: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions::with_tol(1e-8)
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ba_tol: (tol * 0.1).max(1e-14),
            max_iter: 100_000,
            ba_warmup: 2_000,
        }
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn ba_warmup(mut self, ba_warmup: usize) -> Self {
        self.ba_warmup = ba_warmup;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.ba_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Converged output of one fixed-slope run.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeSolution {
    pub lambda: f64,
    pub distortion: f64,
    pub rate: f64,
    pub output_marginal: Pmf,
    pub forward: Channel,
    /// Lagrangian `I + λ E d` at the returned pair.
    pub objective: f64,
    pub iterations: usize,
    /// Final stationarity residual (see [`ba_fixed_slope`]).
    pub gap: f64,
}

/// Alternating minimization at slope `lambda`.
///
/// Starting from a uniform output marginal `q`, repeats
/// `W(y|x) ∝ q(y) exp(−λ d(x,y))`, `q ← pushforward of W`. Writing
/// `c(y) = q'(y)/q(y)`, the run stops once `ln c(y) ≤ tol` everywhere and
/// `|ln c(y)| ≤ tol` on every symbol with `q(y) ≥ PRUNE_THRESHOLD`; the
/// first bound certifies the objective is within `tol` of optimal, the second
/// is stationarity on the support.
///
/// After `opts.ba_warmup` updates without convergence the run switches to
/// damped Newton steps on `q` (active set, Armijo backtracking), which keep
/// the objective monotone and converge quadratically where the plain
/// updates crawl, near slopes at which the optimal support changes.
pub fn ba_fixed_slope(
    problem: &SourceProblem,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<SlopeSolution> {
    run_slope(problem, lambda, opts, None)
}

/// Like [`ba_fixed_slope`], also returning the objective after every update.
pub fn ba_fixed_slope_trace(
    problem: &SourceProblem,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<(SlopeSolution, Vec<f64>)> {
    let mut trace = Vec::new();
    let sol = run_slope(problem, lambda, opts, Some(&mut trace))?;
    Ok((sol, trace))
}

fn run_slope(
    problem: &SourceProblem,
    lambda: f64,
    opts: &SolverOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SlopeSolution> {
    opts.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "slope must be finite and non-negative, got {lambda}"
        )));
    }
    let px = problem.px().probs();
    let s = problem.reconstructions();
    let (kernel, shift) = shifted_kernel(problem, lambda);

    let mut q = vec![1.0 / s as f64; s];
    let mut z = vec![0.0; px.len()];
    let mut c = vec![0.0; s];
    let mut gap = f64::INFINITY;
    let mut best = (f64::INFINITY, q.clone(), 0);

    for iter in 1..=opts.max_iter {
        partition(&kernel, px, &q, &mut z, &mut c);
        let objective = lambda * shift - dual_log_partition(px, &z);
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective);
        }

        gap = stationarity_gap(&q, &c);
        if gap <= opts.ba_tol {
            return Ok(assemble(problem, lambda, &q, &kernel, &z, iter, gap));
        }
        if iter > opts.ba_warmup {
            if gap < best.0 {
                best = (gap, q.clone(), iter);
            } else if iter - best.2 > STALL_WINDOW && best.0 <= STALL_GAP_FACTOR * opts.ba_tol {
                let q = best.1;
                partition(&kernel, px, &q, &mut z, &mut c);
                return Ok(assemble(problem, lambda, &q, &kernel, &z, iter, best.0));
            }
        }

        if iter <= opts.ba_warmup || !newton_step(&kernel, px, &mut q, &z, &c, opts.ba_tol) {
            for (qy, cy) in q.iter_mut().zip(&c) {
                *qy *= cy;
            }
            let total: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= total);
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        gap,
    })
}

/// Newton iterations without a new best gap before the run settles for it.
const STALL_WINDOW: usize = 200;

/// How far above `ba_tol` a stalled run may settle.
const STALL_GAP_FACTOR: f64 = 10.0;

/// `exp(−λ (d(x,y) − min_y d(x,y)))` and the constant `Σ px(x) min_y d(x,y)`
/// removed by the shift. Every row keeps a largest entry of 1 for any `λ`.
fn shifted_kernel(problem: &SourceProblem, lambda: f64) -> (Vec<Vec<f64>>, f64) {
    let row_min: Vec<f64> = problem
        .dist()
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let kernel = problem
        .dist()
        .iter()
        .zip(&row_min)
        .map(|(row, m)| row.iter().map(|d| (-lambda * (d - m)).exp()).collect())
        .collect();
    let shift = problem
        .px()
        .probs()
        .iter()
        .zip(&row_min)
        .map(|(p, m)| p * m)
        .sum();
    (kernel, shift)
}

/// Fills `z(x) = Σ_y q(y) k(x,y)` and `c(y) = Σ_x px(x) k(x,y) / z(x)`.
fn partition(kernel: &[Vec<f64>], px: &[f64], q: &[f64], z: &mut [f64], c: &mut [f64]) {
    for ((zx, krow), &p) in z.iter_mut().zip(kernel).zip(px) {
        *zx = if p > 0.0 {
            krow.iter().zip(q).map(|(k, qy)| k * qy).sum()
        } else {
            1.0
        };
    }
    c.iter_mut().for_each(|v| *v = 0.0);
    for ((krow, &zx), &p) in kernel.iter().zip(z.iter()).zip(px) {
        if p > 0.0 {
            let w = p / zx;
            for (cy, k) in c.iter_mut().zip(krow) {
                *cy += w * k;
            }
        }
    }
}

/// Mass given to a symbol brought back into the support.
const REVIVE_MASS: f64 = 1e-6;

/// Shrinking symbols below this mass leave the support outright.
const DROP_MASS: f64 = 1e-15;

/// One damped Newton step on `min_q −Σ px ln (K q)(x)` over the simplex,
/// restricted to the current support. Returns `false` when no descent step
/// was found, leaving `q` untouched.
fn newton_step(
    kernel: &[Vec<f64>],
    px: &[f64],
    q: &mut [f64],
    z: &[f64],
    c: &[f64],
    tol: f64,
) -> bool {
    let support_gap = q
        .iter()
        .zip(c)
        .filter(|(qy, _)| **qy > 0.0)
        .map(|(_, cy)| cy.ln().abs())
        .fold(0.0, f64::max);
    let revive: Vec<usize> = (0..q.len())
        .filter(|&y| q[y] == 0.0 && c[y].ln() > tol.max(2.0 * support_gap))
        .collect();
    if !revive.is_empty() {
        for &y in &revive {
            q[y] = REVIVE_MASS;
        }
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        return true;
    }
    let negligible: Vec<usize> = (0..q.len())
        .filter(|&y| q[y] > 0.0 && q[y] < DROP_MASS && c[y] < 1.0)
        .collect();
    if !negligible.is_empty() {
        for &y in &negligible {
            q[y] = 0.0;
        }
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        return true;
    }

    let support: Vec<usize> = (0..q.len()).filter(|&y| q[y] > 0.0).collect();
    let n = support.len();
    let mut h = DMatrix::<f64>::zeros(n + 1, n + 1);
    for (x, krow) in kernel.iter().enumerate() {
        if px[x] <= 0.0 {
            continue;
        }
        let w = px[x] / (z[x] * z[x]);
        for (a, &ya) in support.iter().enumerate() {
            for (b, &yb) in support.iter().enumerate() {
                h[(a, b)] += w * krow[ya] * krow[yb];
            }
        }
    }
    let ridge = 1e-14 * (0..n).map(|a| h[(a, a)]).sum::<f64>() / n as f64;
    for a in 0..n {
        h[(a, a)] += ridge;
        h[(a, n)] = 1.0;
        h[(n, a)] = 1.0;
    }
    let rhs = DVector::from_iterator(
        n + 1,
        support.iter().map(|&y| c[y]).chain(std::iter::once(0.0)),
    );
    let Some(sol) = h.lu().solve(&rhs) else {
        return false;
    };
    let step: Vec<f64> = (0..n).map(|a| sol[a]).collect();

    let mut max_len = 1.0;
    let mut blocking = None;
    for (a, &y) in support.iter().enumerate() {
        if step[a] < 0.0 && q[y] + step[a] <= 0.0 {
            let len = -q[y] / step[a];
            if len < max_len {
                max_len = len;
                blocking = Some(y);
            }
        }
    }

    let before = -dual_log_partition(px, z);
    let slope: f64 = -support
        .iter()
        .zip(&step)
        .map(|(&y, s)| c[y] * s)
        .sum::<f64>();
    if !(slope < 0.0) {
        return false;
    }
    let mut len = max_len;
    let mut trial = q.to_vec();
    let mut zt = vec![0.0; z.len()];
    for _ in 0..60 {
        trial.copy_from_slice(q);
        for (&y, s) in support.iter().zip(&step) {
            trial[y] = (trial[y] + len * s).max(0.0);
        }
        if len == max_len {
            if let Some(y) = blocking {
                trial[y] = 0.0;
            }
        }
        let total: f64 = trial.iter().sum();
        trial.iter_mut().for_each(|v| *v /= total);
        for ((zx, krow), &p) in zt.iter_mut().zip(kernel).zip(px) {
            *zx = if p > 0.0 {
                krow.iter().zip(&trial).map(|(k, qy)| k * qy).sum()
            } else {
                1.0
            };
        }
        let after = -dual_log_partition(px, &zt);
        let slack = 4.0 * f64::EPSILON * before.abs().max(1.0);
        if after.is_finite() && after <= before + 1e-4 * len * slope + slack {
            q.copy_from_slice(&trial);
            return true;
        }
        len *= 0.5;
    }
    false
}

fn dual_log_partition(px: &[f64], z: &[f64]) -> f64 {
    px.iter()
        .zip(z)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, zx)| p * zx.ln())
        .sum()
}

fn stationarity_gap(q: &[f64], c: &[f64]) -> f64 {
    let mut gap: f64 = 0.0;
    for (&qy, &cy) in q.iter().zip(c) {
        let lc = if cy > 0.0 { cy.ln() } else { f64::NEG_INFINITY };
        if qy >= PRUNE_THRESHOLD {
            gap = gap.max(lc.abs());
        } else {
            gap = gap.max(lc);
        }
    }
    gap
}

fn assemble(
    problem: &SourceProblem,
    lambda: f64,
    q: &[f64],
    kernel: &[Vec<f64>],
    z: &[f64],
    iterations: usize,
    gap: f64,
) -> SlopeSolution {
    let px = problem.px();
    let rows: Vec<Vec<f64>> = kernel
        .iter()
        .zip(z)
        .zip(px.probs())
        .map(|((krow, &zx), &p)| {
            if p > 0.0 {
                krow.iter().zip(q).map(|(k, qy)| k * qy / zx).collect()
            } else {
                let w: Vec<f64> = krow.iter().zip(q).map(|(k, qy)| k * qy).collect();
                let t: f64 = w.iter().sum();
                w.into_iter().map(|v| v / t).collect()
            }
        })
        .collect();
    let forward = Channel::new(rows).expect("kernel rows normalize to valid pmfs");
    let output_marginal = forward.pushforward(px).expect("dimensions match");
    let rate = prob::mutual_information(px, &forward).expect("dimensions match");
    let distortion = expected_distortion(problem, &forward, None);
    SlopeSolution {
        lambda,
        distortion,
        rate,
        objective: rate + lambda * distortion,
        output_marginal,
        forward,
        iterations,
        gap,
    }
}

/// `E d(X, Y)` when `Y` is drawn through `forward`; `columns` maps forward
/// outputs back to problem columns.
pub fn expected_distortion(
    problem: &SourceProblem,
    forward: &Channel,
    columns: Option<&[usize]>,
) -> f64 {
    let mut acc = 0.0;
    for (x, (&p, row)) in problem.px().probs().iter().zip(forward.rows()).enumerate() {
        for (j, &w) in row.iter().enumerate() {
            let col = columns.map_or(j, |c| c[j]);
            acc += p * w * problem.d(x, col);
        }
    }
    acc
}

#[derive(Debug, Clone, Serialize)]
pub struct RdDiagnostics {
    /// Alternating-minimization iterations in the final fixed-slope run.
    pub iterations: usize,
    /// Fixed-slope runs spent on bracketing and bisection, all passes.
    pub slope_evaluations: usize,
    /// Stationarity residual of the final run.
    pub final_gap: f64,
    /// Pruning passes (1 when nothing was pruned).
    pub passes: usize,
}

/// One solved point of the informational rate-distortion curve.
#[derive(Debug, Clone, Serialize)]
pub struct RdPoint {
    pub target_d: f64,
    /// Expected distortion of `forward`; within `tol` of `target_d`.
    pub achieved_d: f64,
    pub rate: f64,
    pub lambda_star: f64,
    /// `P*(x̂ | x)` over the kept columns.
    pub forward: Channel,
    pub output_marginal: Pmf,
    /// `P*(x | x̂)`, one row per kept column.
    pub reverse: Channel,
    /// `ȷ(x, D)` per source symbol.
    pub tilted: Vec<f64>,
    /// Original indices of the reconstruction symbols retained.
    pub kept_columns: Vec<usize>,
    pub diagnostics: RdDiagnostics,
}

impl RdPoint {
    /// `H(X | X̂*)` under `px × forward`.
    pub fn conditional_entropy(&self, px: &Pmf) -> f64 {
        conditional_entropy(&Joint::from_channel(px, &self.forward).expect("dimensions match"))
    }

    /// Position of an original column among the kept ones.
    pub fn kept_position(&self, column: usize) -> Option<usize> {
        self.kept_columns.iter().position(|&c| c == column)
    }
}

fn check_range(problem: &SourceProblem, d: f64) -> Result<()> {
    let (lo, hi) = (problem.d_min(), problem.d_max());
    if !d.is_finite() || d < lo - RANGE_SLACK || d > hi + RANGE_SLACK {
        return Err(Error::Infeasible {
            what: "distortion",
            value: d,
            lo,
            hi,
        });
    }
    Ok(())
}

/// Solves `R(D)` at `d`, with `D_min ≤ d ≤ D_max`.
///
/// At `d ≥ D_max − tol` the answer is the zero-rate single-codeword solution
/// and `λ*` is reported as 0, the slope of the flat part of the curve.
pub fn rd_at_distortion(problem: &SourceProblem, d: f64, opts: &SolverOptions) -> Result<RdPoint> {
    opts.validate()?;
    check_range(problem, d)?;
    if d >= problem.d_max() - opts.tol {
        return Ok(zero_rate_point(problem, d));
    }

    let mut columns: Vec<usize> = (0..problem.reconstructions()).collect();
    let mut evaluations = 0;
    let mut passes = 0;
    loop {
        passes += 1;
        let sub = problem.restrict_columns(&columns)?;
        let sol = bisect_slope(&sub, d, opts, &mut evaluations)?;
        let keep: Vec<usize> = (0..columns.len())
            .filter(|&j| sol.output_marginal[j] >= PRUNE_THRESHOLD)
            .collect();
        if keep.len() == columns.len() {
            return finish_point(
                problem,
                d,
                sol,
                columns,
                RdDiagnostics {
                    iterations: 0,
                    slope_evaluations: evaluations,
                    final_gap: 0.0,
                    passes,
                },
            );
        }
        columns = keep.into_iter().map(|j| columns[j]).collect();
    }
}

fn bisect_slope(
    problem: &SourceProblem,
    target: f64,
    opts: &SolverOptions,
    evaluations: &mut usize,
) -> Result<SlopeSolution> {
    let mut solve = |lambda: f64| {
        *evaluations += 1;
        ba_fixed_slope(problem, lambda, opts)
    };

    // Distortion is non-increasing in λ; at λ = 0 it is at least D_max.
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let sol = solve(hi)?;
        if (sol.distortion - target).abs() < opts.tol {
            return Ok(sol);
        }
        if sol.distortion < target {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > LAMBDA_CAP {
            return Err(Error::Numeric(format!(
                "could not bracket distortion {target}: still {} at slope {lo}",
                sol.distortion
            )));
        }
    }

    // Closest solutions found with distortion above and below the target.
    let mut above: Option<SlopeSolution> = None;
    let mut below: Option<SlopeSolution> = None;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let sol = solve(mid)?;
        let err = sol.distortion - target;
        if err.abs() < opts.tol {
            return Ok(sol);
        }
        if err > 0.0 {
            lo = mid;
            above = Some(sol);
        } else {
            hi = mid;
            below = Some(sol);
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }

    // The bracket has collapsed onto a slope at which a whole face of
    // output marginals is optimal: the curve is a segment there.
    let mut nearest: Vec<SlopeSolution> = above.into_iter().chain(below).collect();
    nearest.sort_by(|a, b| {
        (a.distortion - target)
            .abs()
            .total_cmp(&(b.distortion - target).abs())
    });
    for sol in &nearest {
        if let Some(adjusted) = slide_along_face(problem, sol, target, opts) {
            return Ok(adjusted);
        }
    }
    if let [a, b] = nearest.as_slice() {
        if let Some(mixed) = mix_endpoints(problem, a, b, target, opts) {
            return Ok(mixed);
        }
    }
    let miss = nearest.first().map_or(f64::NAN, |b| b.distortion - target);
    Err(Error::Numeric(format!(
        "slope bisection stalled at λ ≈ {lo} with distortion off by {miss:e}"
    )))
}

/// Columns with `ln c(y)` within this of 0 count as active on the face.
const FACE_ACTIVE_TOL: f64 = 1e-9;

/// Moves an optimal output marginal along the face of optimal marginals at
/// the same slope until the distortion reaches `target`.
///
/// With `z = K q` fixed the distortion is linear in `q`, so the move follows
/// the projection of the per-column distortion onto `null(K_A)` (`A` the
/// active columns), dropping columns that reach zero mass.
fn slide_along_face(
    problem: &SourceProblem,
    sol: &SlopeSolution,
    target: f64,
    opts: &SolverOptions,
) -> Option<SlopeSolution> {
    let px = problem.px().probs();
    let (kernel, _) = shifted_kernel(problem, sol.lambda);
    let mut q = sol.output_marginal.probs().to_vec();
    let s = q.len();
    let mut z = vec![0.0; px.len()];
    let mut c = vec![0.0; s];
    partition(&kernel, px, &q, &mut z, &mut c);

    // Distortion contributed per unit of q(y) with z held fixed.
    let unit_distortion = |z: &[f64]| -> Vec<f64> {
        (0..s)
            .map(|y| {
                (0..px.len())
                    .filter(|&x| px[x] > 0.0)
                    .map(|x| px[x] * kernel[x][y] * problem.d(x, y) / z[x])
                    .sum()
            })
            .collect()
    };
    let mut active: Vec<usize> = (0..s)
        .filter(|&y| c[y].ln().abs() <= FACE_ACTIVE_TOL)
        .collect();
    let rows: Vec<usize> = (0..px.len()).filter(|&x| px[x] > 0.0).collect();

    for _ in 0..s + 4 {
        partition(&kernel, px, &q, &mut z, &mut c);
        let e = unit_distortion(&z);
        let current: f64 = q.iter().zip(&e).map(|(a, b)| a * b).sum();
        let need = target - current;
        if need.abs() < 0.5 * opts.tol {
            break;
        }
        if active.is_empty() {
            return None;
        }
        let ka_t = DMatrix::from_fn(active.len(), rows.len(), |a, i| kernel[rows[i]][active[a]]);
        let ea = DVector::from_iterator(active.len(), active.iter().map(|&y| e[y]));
        let svd = ka_t.clone().svd(true, true);
        let eps = 1e-8 * svd.singular_values.max();
        let w = svd.solve(&ea, eps).ok()?;
        let v = &ea - &ka_t * w;
        let gain = v.dot(&ea);
        if gain <= 1e-14 * ea.norm_squared() {
            return None;
        }
        let dir = need.signum();
        let mut len = need.abs() / gain;
        let mut blocking = None;
        for (a, &y) in active.iter().enumerate() {
            let rate = dir * v[a];
            if rate < 0.0 && q[y] + len * rate <= 0.0 {
                len = q[y] / -rate;
                blocking = Some(a);
            }
        }
        for (a, &y) in active.iter().enumerate() {
            q[y] = (q[y] + len * dir * v[a]).max(0.0);
        }
        if let Some(a) = blocking {
            q[active[a]] = 0.0;
            active.remove(a);
        }
    }

    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    partition(&kernel, px, &q, &mut z, &mut c);
    let gap = stationarity_gap(&q, &c);
    let out = assemble(problem, sol.lambda, &q, &kernel, &z, sol.iterations, gap);
    ((out.distortion - target).abs() < opts.tol && gap <= STALL_GAP_FACTOR * opts.ba_tol.max(1e-12))
        .then_some(out)
}

/// Blends two solutions found at (numerically) the same slope, one on each
/// side of `target`, and keeps the blend that meets it if it is still
/// stationary.
fn mix_endpoints(
    problem: &SourceProblem,
    a: &SlopeSolution,
    b: &SlopeSolution,
    target: f64,
    opts: &SolverOptions,
) -> Option<SlopeSolution> {
    let px = problem.px().probs();
    let (kernel, _) = shifted_kernel(problem, a.lambda);
    let qa = a.output_marginal.probs();
    let qb = b.output_marginal.probs();
    let mut q = vec![0.0; qa.len()];
    let mut z = vec![0.0; px.len()];
    let mut c = vec![0.0; qa.len()];
    let mut eval = |t: f64, q: &mut Vec<f64>| {
        for ((v, x), y) in q.iter_mut().zip(qa).zip(qb) {
            *v = (1.0 - t) * x + t * y;
        }
        partition(&kernel, px, q, &mut z, &mut c);
        assemble(
            problem,
            a.lambda,
            q,
            &kernel,
            &z,
            a.iterations,
            stationarity_gap(q, &c),
        )
    };
    let sign = (a.distortion - target).signum();
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = eval(0.0, &mut q);
    for _ in 0..80 {
        if (best.distortion - target).abs() < opts.tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        best = eval(mid, &mut q);
        if (best.distortion - target) * sign > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ((best.distortion - target).abs() < opts.tol
        && best.gap <= STALL_GAP_FACTOR * opts.ba_tol.max(1e-12))
    .then_some(best)
}

fn finish_point(
    problem: &SourceProblem,
    target: f64,
    sol: SlopeSolution,
    kept_columns: Vec<usize>,
    mut diagnostics: RdDiagnostics,
) -> Result<RdPoint> {
    let px = problem.px();
    let (reverse, output_marginal) = posterior(px, &sol.forward)?;
    diagnostics.iterations = sol.iterations;
    diagnostics.final_gap = sol.gap;
    let mut pt = RdPoint {
        target_d: target,
        achieved_d: sol.distortion,
        rate: sol.rate,
        lambda_star: sol.lambda,
        forward: sol.forward,
        output_marginal,
        reverse,
        tilted: Vec::new(),
        kept_columns,
        diagnostics,
    };
    pt.tilted = tilted_information(problem, &pt);
    Ok(pt)
}

fn zero_rate_point(problem: &SourceProblem, target: f64) -> RdPoint {
    let best = (0..problem.reconstructions())
        .map(|y| (y, problem.column_cost(y)))
        .fold(
            (0, f64::INFINITY),
            |acc, cur| if cur.1 < acc.1 { cur } else { acc },
        );
    let r = problem.sources();
    let forward = Channel::new(vec![vec![1.0]; r]).expect("unit rows");
    let px = problem.px().clone();
    let mut pt = RdPoint {
        target_d: target,
        achieved_d: best.1,
        rate: 0.0,
        lambda_star: 0.0,
        forward,
        output_marginal: Pmf::point_mass(1, 0),
        reverse: Channel::from_pmfs(vec![px]).expect("source is a pmf"),
        tilted: Vec::new(),
        kept_columns: vec![best.0],
        diagnostics: RdDiagnostics {
            iterations: 0,
            slope_evaluations: 0,
            final_gap: 0.0,
            passes: 1,
        },
    };
    pt.tilted = tilted_information(problem, &pt);
    pt
}

/// One [`RdPoint`] per grid value.
pub fn rd_curve(
    problem: &SourceProblem,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<RdPoint>> {
    grid.iter()
        .map(|&d| rd_at_distortion(problem, d, opts))
        .collect()
}

/// `ȷ(x, D) = −ln Σ_x̂ P*(x̂) exp(λ* D − λ* d(x, x̂))`, evaluated at the
/// distortion the returned channel actually achieves.
pub fn tilted_information(problem: &SourceProblem, pt: &RdPoint) -> Vec<f64> {
    let lambda = pt.lambda_star;
    let d = pt.achieved_d;
    (0..problem.sources())
        .map(|x| {
            let exps: Vec<f64> = pt
                .kept_columns
                .iter()
                .map(|&c| lambda * (d - problem.d(x, c)))
                .collect();
            let peak = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = exps
                .iter()
                .zip(pt.output_marginal.probs())
                .map(|(e, q)| q * (e - peak).exp())
                .sum();
            -(peak + sum.ln())
        })
        .collect()
}

/// Largest violation of
/// `ȷ(x, D) = ı(x; x̂) + λ* d(x, x̂) − λ* D`
/// over source symbols of positive mass and kept reconstructions.
///
/// Pairs whose forward probability underflowed below the smallest normal
/// double carry no representable mass and are skipped.
pub fn verify_csiszar_identity(problem: &SourceProblem, pt: &RdPoint) -> Result<f64> {
    let px = problem.px();
    let joint = Joint::from_channel(px, &pt.forward)?;
    let lambda = pt.lambda_star;
    let d = pt.achieved_d;
    let mut worst: f64 = 0.0;
    for x in (0..problem.sources()).filter(|&x| px[x] > 0.0) {
        for (j, &c) in pt.kept_columns.iter().enumerate() {
            if pt.forward.get(x, j) < f64::MIN_POSITIVE {
                continue;
            }
            let density = information_density(&joint, x, j)?;
            let residual = pt.tilted[x] - density - lambda * problem.d(x, c) + lambda * d;
            worst = worst.max(residual.abs());
        }
    }
    Ok(worst)
}

/// Largest violation of the reverse-channel form of the same identity,
/// `ln 1/P*(x|x̂) = ln 1/P(x) − ȷ(x, D) + λ* d(x, x̂) − λ* D`.
pub fn reverse_identity_residual(problem: &SourceProblem, pt: &RdPoint) -> f64 {
    let px = problem.px();
    let mut worst: f64 = 0.0;
    for x in (0..problem.sources()).filter(|&x| px[x] > 0.0) {
        for (j, &c) in pt.kept_columns.iter().enumerate() {
            if pt.forward.get(x, j) < f64::MIN_POSITIVE {
                continue;
            }
            let lhs = -pt.reverse.get(j, x).ln();
            let rhs =
                -px[x].ln() - pt.tilted[x] + pt.lambda_star * (problem.d(x, c) - pt.achieved_d);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

/// Rate-distortion function under logarithmic loss, `H(X) − D`.
pub fn logloss_rd(px: &Pmf, d: f64) -> Result<f64> {
    let h = entropy(px);
    if !d.is_finite() || d < -RANGE_SLACK || d > h + RANGE_SLACK {
        return Err(Error::Infeasible {
            what: "log-loss distortion",
            value: d,
            lo: 0.0,
            hi: h,
        });
    }
    Ok((h - d).max(0.0))
}

/// Tolerance used by [`verify_posterior_channel`].
pub const POSTERIOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct PosteriorChannelReport {
    /// Largest `|P(x|q) − q(x)|` over rows of positive mass.
    pub posterior_deviation: f64,
    pub posterior_consistent: bool,
    /// `H(X | Q)`, the distortion level the construction realizes.
    pub conditional_entropy: f64,
    pub mutual_information: f64,
    pub expected_log_loss: f64,
    /// `|I(X;Q) − (H(X) − D)|`.
    pub rate_residual: f64,
    /// `|E ℓ(X, Q) − D|`.
    pub loss_residual: f64,
    pub failures: Vec<String>,
}

impl PosteriorChannelReport {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks that a soft-reconstruction channel `weights = P(Q | X)` whose
/// rows are posterior-consistent achieves the log-loss rate-distortion
/// function at `D = H(X | Q)`.
pub fn verify_posterior_channel(
    px: &Pmf,
    q_rows: &[Pmf],
    weights: &Channel,
) -> Result<PosteriorChannelReport> {
    if weights.inputs() != px.len() {
        return Err(Error::DimensionMismatch {
            what: "weight rows vs source alphabet",
            expected: px.len(),
            got: weights.inputs(),
        });
    }
    if weights.outputs() != q_rows.len() {
        return Err(Error::DimensionMismatch {
            what: "weight columns vs reconstruction rows",
            expected: q_rows.len(),
            got: weights.outputs(),
        });
    }
    if let Some(bad) = q_rows.iter().find(|q| q.len() != px.len()) {
        return Err(Error::DimensionMismatch {
            what: "reconstruction row length",
            expected: px.len(),
            got: bad.len(),
        });
    }
    let joint = Joint::from_channel(px, weights)?;
    let pq = joint.y_marginal();
    let mut deviation: f64 = 0.0;
    for (j, (&mass, row)) in pq.iter().zip(q_rows).enumerate() {
        if mass <= 0.0 {
            continue;
        }
        let post: Vec<f64> = (0..px.len()).map(|x| joint.get(x, j) / mass).collect();
        deviation = deviation.max(max_abs_diff(&post, row.probs()));
    }
    let d = conditional_entropy(&joint);
    let mi = prob::mutual_information(px, weights)?;
    let loss = joint.expect(|x, j| prob::log_loss(x, &q_rows[j]));
    let rate_residual = (mi - (entropy(px) - d)).abs();
    let loss_residual = (loss - d).abs();

    let mut failures = Vec::new();
    if deviation > POSTERIOR_TOL {
        failures.push(format!(
            "posterior consistency P(x|q) = q violated by {deviation:e}"
        ));
    }
    if rate_residual > POSTERIOR_TOL {
        failures.push(format!("I(X;Q) = H(X) - D violated by {rate_residual:e}"));
    }
    if !(loss_residual <= POSTERIOR_TOL) {
        failures.push(format!("E[loss] = D violated by {loss_residual:e}"));
    }
    Ok(PosteriorChannelReport {
        posterior_deviation: deviation,
        posterior_consistent: deviation <= POSTERIOR_TOL,
        conditional_entropy: d,
        mutual_information: mi,
        expected_log_loss: loss,
        rate_residual,
        loss_residual,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::binary_entropy;

    fn tight() -> SolverOptions {
        SolverOptions::with_tol(1e-10)
    }

    #[test]
    fn zero_slope_gives_zero_rate() {
        let p = SourceProblem::hamming(Pmf::new(vec![0.7, 0.2, 0.1]).unwrap());
        let sol = ba_fixed_slope(&p, 0.0, &tight()).unwrap();
        assert!(sol.rate.abs() < 1e-15);
        for row in sol.forward.rows() {
            assert!(max_abs_diff(row, sol.output_marginal.probs()) < 1e-15);
        }
    }

    #[test]
    fn binary_hamming_parametric_solution() {
        let p = SourceProblem::uniform_hamming(2);
        let sol = ba_fixed_slope(&p, 9f64.ln(), &tight()).unwrap();
        assert!((sol.distortion - 0.1).abs() < 1e-12);
        assert!((sol.rate - (2f64.ln() - binary_entropy(0.1))).abs() < 1e-12);

        let sol = ba_fixed_slope(&p, 50.0, &tight()).unwrap();
        assert!(sol.distortion < 1e-6);
        assert!((sol.rate - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn objective_never_increases() {
        let px = Pmf::new(vec![0.45, 0.3, 0.15, 0.1]).unwrap();
        let dist = vec![
            vec![0.0, 1.0, 2.0, 0.7],
            vec![1.3, 0.0, 1.1, 0.4],
            vec![2.0, 0.6, 0.0, 1.9],
            vec![0.5, 1.7, 0.9, 0.0],
        ];
        let p = SourceProblem::new(px, dist).unwrap();
        for lambda in [0.3, 1.0, 2.5, 7.0] {
            let (_, trace) = ba_fixed_slope_trace(&p, lambda, &tight()).unwrap();
            assert!(trace.len() > 1);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-14, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn newton_steps_keep_the_objective_monotone() {
        let p = SourceProblem::hamming(Pmf::new(vec![0.45, 0.3, 0.15, 0.1]).unwrap());
        for lambda in [0.8, 2.0, 6.0] {
            let opts = tight().ba_warmup(3);
            let (sol, trace) = ba_fixed_slope_trace(&p, lambda, &opts).unwrap();
            let plain = ba_fixed_slope(&p, lambda, &tight()).unwrap();
            assert!((sol.rate - plain.rate).abs() < 1e-9);
            assert!(sol.iterations < plain.iterations.max(4));
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-14, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn slow_support_change_converges() {
        let px = Pmf::new(vec![
            0.10821883069306693,
            0.554635488367584,
            0.33714568093934905,
        ])
        .unwrap();
        let dist = vec![
            vec![
                0.9909009146923183,
                0.0,
                1.2679550791844794,
                0.479962143501488,
            ],
            vec![
                1.8634670198132108,
                1.9706802883823749,
                1.2654670420000234,
                1.531354879571008,
            ],
            vec![
                0.39292788904691495,
                0.8532505370839084,
                1.674088118596885,
                0.7543264377294921,
            ],
        ];
        let p = SourceProblem::new(px, dist).unwrap();
        let a = rd_at_distortion(&p, 1.0243375116920834, &tight()).unwrap();
        let b = rd_at_distortion(&p, 1.0488814496455283, &tight()).unwrap();
        assert!(a.rate >= b.rate);
        assert!(verify_csiszar_identity(&p, &a).unwrap() < 1e-6);
    }

    #[test]
    fn linear_segment_is_resolved_on_the_face() {
        // The third reconstruction costs 0.3 everywhere; between D ≈ 0.1417
        // and 0.3 the curve is the tangent line from (0.3, 0).
        let dist = vec![vec![0.0, 1.0, 0.3], vec![1.0, 0.0, 0.3]];
        let p = SourceProblem::new(Pmf::uniform(2), dist).unwrap();
        for (d, rate) in [(0.2, 0.180107177538854), (0.25, 0.0900535887694270)] {
            let pt = rd_at_distortion(&p, d, &tight()).unwrap();
            assert!((pt.achieved_d - d).abs() < 1e-10);
            assert!((pt.rate - rate).abs() < 1e-6, "{} vs {rate}", pt.rate);
            assert!((pt.lambda_star - 1.801071775388538).abs() < 1e-6);
            assert_eq!(pt.kept_columns, vec![0, 1, 2]);
            assert!(verify_csiszar_identity(&p, &pt).unwrap() < 1e-6);
            let mean: f64 = (0..2).map(|x| 0.5 * pt.tilted[x]).sum();
            assert!((mean - pt.rate).abs() < 1e-8);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let p = SourceProblem::hamming(Pmf::new(vec![0.6, 0.3, 0.1]).unwrap());
        let err = ba_fixed_slope(&p, 1.2, &tight().max_iter(2)).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 2, .. }));
    }

    #[test]
    fn uniform_binary_point() {
        let p = SourceProblem::uniform_hamming(2);
        let pt = rd_at_distortion(&p, 0.1, &tight()).unwrap();
        assert!((pt.rate - 0.368064).abs() < 1e-6);
        assert!((pt.lambda_star - 2.197225).abs() < 1e-6);
        for t in &pt.tilted {
            assert!((t - 0.368064).abs() < 1e-6);
        }
        assert!(verify_csiszar_identity(&p, &pt).unwrap() < 1e-6);
        assert!(reverse_identity_residual(&p, &pt) < 1e-6);
    }

    #[test]
    fn uniform_ternary_point() {
        let p = SourceProblem::uniform_hamming(3);
        let pt = rd_at_distortion(&p, 1.0 / 3.0, &tight()).unwrap();
        assert!((pt.rate - 0.231049).abs() < 1e-6);
        assert!((pt.lambda_star - 4f64.ln()).abs() < 1e-6);
        for t in &pt.tilted {
            assert!((t - 0.231049).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_rate_endpoint() {
        let p = SourceProblem::hamming(Pmf::new(vec![0.5, 0.3, 0.2]).unwrap());
        let pt = rd_at_distortion(&p, p.d_max(), &tight()).unwrap();
        assert_eq!(pt.rate, 0.0);
        assert_eq!(pt.kept_columns, vec![0]);
        assert!(pt.tilted.iter().all(|t| t.abs() < 1e-12));
        assert!(verify_csiszar_identity(&p, &pt).unwrap() < 1e-6);
    }

    #[test]
    fn out_of_range_targets() {
        let p = SourceProblem::uniform_hamming(2);
        assert!(matches!(
            rd_at_distortion(&p, 0.6, &tight()),
            Err(Error::Infeasible { .. })
        ));
        assert!(matches!(
            rd_at_distortion(&p, -0.1, &tight()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn prunes_dead_reconstructions() {
        // Column 2 is dominated: it never helps below D_max.
        let px = Pmf::new(vec![0.5, 0.5]).unwrap();
        let p = SourceProblem::new(px, vec![vec![0.0, 1.0, 0.9], vec![1.0, 0.0, 0.9]]).unwrap();
        let pt = rd_at_distortion(&p, 0.2, &tight()).unwrap();
        assert_eq!(pt.kept_columns, vec![0, 1]);
        assert!(pt.diagnostics.passes >= 2);
        assert!((pt.rate - (2f64.ln() - binary_entropy(0.2))).abs() < 1e-7);
        assert!(verify_csiszar_identity(&p, &pt).unwrap() < 1e-6);
    }

    #[test]
    fn perturbed_channel_fails_identity() {
        let p = SourceProblem::uniform_hamming(2);
        let mut pt = rd_at_distortion(&p, 0.1, &tight()).unwrap();
        pt.forward = Channel::new(vec![vec![0.8, 0.2], vec![0.05, 0.95]]).unwrap();
        pt.output_marginal = pt.forward.pushforward(p.px()).unwrap();
        assert!(verify_csiszar_identity(&p, &pt).unwrap() > 1e-3);
    }

    #[test]
    fn logloss_rd_line() {
        let u4 = Pmf::uniform(4);
        assert_eq!(logloss_rd(&u4, 0.0).unwrap(), entropy(&u4));
        assert_eq!(logloss_rd(&u4, entropy(&u4)).unwrap(), 0.0);
        assert!((logloss_rd(&u4, 2f64.ln()).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(logloss_rd(&u4, 2.0).is_err());
        assert!(logloss_rd(&u4, -0.5).is_err());
    }

    #[test]
    fn posterior_channel_examples() {
        let px = Pmf::new(vec![0.2, 0.5, 0.3]).unwrap();
        let h = entropy(&px);

        let rows: Vec<Pmf> = (0..3).map(|i| Pmf::point_mass(3, i)).collect();
        let r = verify_posterior_channel(&px, &rows, &Channel::identity(3)).unwrap();
        assert!(r.holds());
        assert!(r.conditional_entropy.abs() < 1e-12);
        assert!((r.mutual_information - h).abs() < 1e-12);

        let r = verify_posterior_channel(
            &px,
            &[px.clone()],
            &Channel::new(vec![vec![1.0]; 3]).unwrap(),
        )
        .unwrap();
        assert!(r.holds());
        assert!((r.conditional_entropy - h).abs() < 1e-12);
        assert!(r.mutual_information.abs() < 1e-12);

        let rows = vec![
            Pmf::new(vec![0.9, 0.1]).unwrap(),
            Pmf::new(vec![0.1, 0.9]).unwrap(),
        ];
        let r =
            verify_posterior_channel(&Pmf::uniform(2), &rows, &Channel::bsc(0.1).unwrap()).unwrap();
        assert!(r.holds(), "{:?}", r.failures);
        assert!((r.conditional_entropy - binary_entropy(0.1)).abs() < 1e-12);
        assert!((r.expected_log_loss - binary_entropy(0.1)).abs() < 1e-12);

        // Rows that are not the true posteriors.
        let rows = vec![
            Pmf::new(vec![0.8, 0.2]).unwrap(),
            Pmf::new(vec![0.2, 0.8]).unwrap(),
        ];
        let r =
            verify_posterior_channel(&Pmf::uniform(2), &rows, &Channel::bsc(0.1).unwrap()).unwrap();
        assert!(!r.posterior_consistent);
        assert!(!r.holds());

        assert!(verify_posterior_channel(&px, &rows, &Channel::bsc(0.1).unwrap()).is_err());
    }
}
