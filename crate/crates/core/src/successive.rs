//! Successive refinement with a logarithmic-loss first decoder.
//!
//! The second decoder operates at an optimal test channel `P*(x̂ | x)` for
//! `R_2(D_2)`. The first decoder sees `Z`, obtained from `X̂` by an erasure
//! channel: `Z = X̂` with probability `1 − δ`, `Z = ⊥` otherwise. Then
//! `H(X|Z) = (1 − δ) H(X|X̂*) + δ H(X)`, which is linear in `δ`, and the
//! first decoder outputs the posterior `Q = P_{X|Z}(· | Z)`.
//!
//! The module also simulates the block time-sharing scheme for log loss:
//! losslessly describe a prefix of the block and emit `px` for the rest.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{entropy, log_loss, Channel, Pmf};
use crate::problem::SourceProblem;
use crate::rd::{rd_at_distortion, RdPoint, SolverOptions};

/// Posterior rows closer than this (max-norm) are merged into one `Q` value.
pub const MERGE_TOL: f64 = 1e-9;

/// Symbol of the first decoder's observation `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ZSymbol {
    /// An original reconstruction index.
    Reconstruction(usize),
    Erasure,
}

#[derive(Debug, Clone, Serialize)]
pub struct SrConstruction {
    pub problem: SourceProblem,
    pub second_point: RdPoint,
    pub d1: f64,
    pub d2: f64,
    /// Erasure weight.
    pub delta: f64,
    pub h_x: f64,
    /// `H(X | X̂*)`, the smallest feasible `D1`.
    pub h_x_given_xhat: f64,
    /// Kept reconstructions in `second_point.kept_columns` order, then `⊥`.
    pub z_alphabet: Vec<ZSymbol>,
    /// `P(z | x̂)`, rows indexed by kept position.
    pub pz_given_xhat: Channel,
    /// Distinct posteriors `P_{X|Z}(· | z)` over symbols with positive mass.
    pub q_rows: Vec<Pmf>,
    pub q_masses: Vec<f64>,
    /// Row of `q_rows` used for each `z`; `None` when `z` has zero mass.
    pub q_index: Vec<Option<usize>>,
    /// `(R_1(D_1), R_2(D_2)) = (H(X) − D_1, I(X; X̂*))`.
    pub rates: (f64, f64),
}

impl SrConstruction {
    /// Feasible range of `D1` for this second stage.
    pub fn feasible_d1(&self) -> (f64, f64) {
        (self.h_x_given_xhat, self.h_x)
    }

    /// `P(x, x̂, z)` indexed `[x][kept position][z]`.
    pub fn joint(&self) -> Vec<Vec<Vec<f64>>> {
        let px = self.problem.px();
        let fwd = &self.second_point.forward;
        (0..px.len())
            .map(|x| {
                (0..fwd.outputs())
                    .map(|j| {
                        let pxj = px[x] * fwd.get(x, j);
                        self.pz_given_xhat.row(j).iter().map(|w| pxj * w).collect()
                    })
                    .collect()
            })
            .collect()
    }
}

fn erasure_channel(kept: usize, delta: f64) -> Channel {
    let rows = (0..kept)
        .map(|j| {
            let mut row = vec![0.0; kept + 1];
            row[j] = 1.0 - delta;
            row[kept] += delta;
            row
        })
        .collect();
    Channel::new(rows).expect("erasure rows are stochastic")
}

/// Posterior rows of `X` given `Z = z`, merged when within [`MERGE_TOL`].
fn posterior_rows(
    px: &Pmf,
    forward: &Channel,
    pz_given_xhat: &Channel,
) -> Result<(Vec<Pmf>, Vec<f64>, Vec<Option<usize>>)> {
    let to_z = forward.compose(pz_given_xhat)?;
    let nz = to_z.outputs();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    let mut index = vec![None; nz];
    for (z, slot) in index.iter_mut().enumerate() {
        let joint: Vec<f64> = (0..px.len()).map(|x| px[x] * to_z.get(x, z)).collect();
        let mass: f64 = joint.iter().sum();
        if mass <= 0.0 {
            continue;
        }
        let post: Vec<f64> = joint.iter().map(|v| v / mass).collect();
        let hit = rows
            .iter()
            .position(|r| r.iter().zip(&post).all(|(a, b)| (a - b).abs() <= MERGE_TOL));
        match hit {
            Some(i) => {
                let total = masses[i] + mass;
                for (a, b) in rows[i].iter_mut().zip(&post) {
                    *a = (*a * masses[i] + b * mass) / total;
                }
                masses[i] = total;
                *slot = Some(i);
            }
            None => {
                rows.push(post);
                masses.push(mass);
                *slot = Some(rows.len() - 1);
            }
        }
    }
    let rows = rows
        .into_iter()
        .map(Pmf::renormalize)
        .collect::<Result<_>>()?;
    Ok((rows, masses, index))
}

/// Erasure weight that puts `H(X|Z)` at `d1`, or an infeasibility error.
fn erasure_weight(d1: f64, h: f64, hx: f64, tol: f64) -> Result<f64> {
    if !d1.is_finite() || d1 < h - tol || d1 > hx + tol {
        return Err(Error::Infeasible {
            what: "D1",
            value: d1,
            lo: h,
            hi: hx,
        });
    }
    if hx - h <= tol {
        // Zero-rate second stage: only a fully erased Z fits.
        return Ok(1.0);
    }
    Ok(((d1 - h) / (hx - h)).clamp(0.0, 1.0))
}

fn assemble(
    problem: &SourceProblem,
    pt: &RdPoint,
    d1: f64,
    d2: f64,
    delta: f64,
    pz_given_xhat: Channel,
) -> Result<SrConstruction> {
    let px = problem.px();
    let (q_rows, q_masses, q_index) = posterior_rows(px, &pt.forward, &pz_given_xhat)?;
    let mut z_alphabet: Vec<ZSymbol> = pt
        .kept_columns
        .iter()
        .map(|&c| ZSymbol::Reconstruction(c))
        .collect();
    z_alphabet.push(ZSymbol::Erasure);
    let h_x = entropy(px);
    Ok(SrConstruction {
        problem: problem.clone(),
        second_point: pt.clone(),
        d1,
        d2,
        delta,
        h_x,
        h_x_given_xhat: pt.conditional_entropy(px),
        z_alphabet,
        pz_given_xhat,
        q_rows,
        q_masses,
        q_index,
        rates: (h_x - d1, pt.rate),
    })
}

/// Builds the two-stage construction at `(d1, d2)`.
///
/// `d1` must lie in `[H(X|X̂*), H(X)]`, where `X̂*` is the optimal
/// reconstruction at `d2`.
pub fn construct_sr(
    problem: &SourceProblem,
    d1: f64,
    d2: f64,
    opts: &SolverOptions,
) -> Result<SrConstruction> {
    let pt = rd_at_distortion(problem, d2, opts)?;
    let px = problem.px();
    let h = pt.conditional_entropy(px);
    let delta = erasure_weight(d1, h, entropy(px), opts.tol)?;
    let channel = erasure_channel(pt.kept_columns.len(), delta);
    assemble(problem, &pt, d1, d2, delta, channel)
}

#[derive(Debug, Clone, Serialize)]
pub struct SrCheck {
    pub name: &'static str,
    pub residual: f64,
    pub passed: bool,
}

/// Results of the six refinability checks, each recomputed from the joint
/// `P(x, x̂, z)`.
#[derive(Debug, Clone, Serialize)]
pub struct SrReport {
    pub tol: f64,
    /// (a) `P(x,x̂,z) P(x̂) = P(x,x̂) P(x̂,z)`.
    pub markov: SrCheck,
    /// (b) `I(X;Q) = H(X) − D1`.
    pub first_rate: SrCheck,
    /// (c) `E ℓ(X, Q) = D1`.
    pub first_loss: SrCheck,
    /// (d) `I(X;X̂) = R_2(D_2)`.
    pub second_rate: SrCheck,
    /// (e) `E d(X, X̂) ≤ D2`; residual is the excess over `D2`.
    pub second_distortion: SrCheck,
    /// (f) `P_{X|Q}(· | q) = q` for every row.
    pub posterior: SrCheck,
    /// `H(X|Z)` from the joint.
    pub h_x_given_z: f64,
    pub mutual_information_q: f64,
    pub expected_loss: f64,
}

impl SrReport {
    pub fn checks(&self) -> [&SrCheck; 6] {
        [
            &self.markov,
            &self.first_rate,
            &self.first_loss,
            &self.second_rate,
            &self.second_distortion,
            &self.posterior,
        ]
    }

    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks()
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }
}

fn check(name: &'static str, residual: f64, tol: f64) -> SrCheck {
    SrCheck {
        name,
        residual,
        passed: residual <= tol,
    }
}

fn cond_entropy_from(pxz: &[Vec<f64>]) -> f64 {
    let nz = pxz[0].len();
    let pz: Vec<f64> = (0..nz).map(|z| pxz.iter().map(|r| r[z]).sum()).collect();
    let mut acc = 0.0;
    for row in pxz {
        for (&m, &q) in row.iter().zip(&pz) {
            if m > 0.0 {
                acc -= m * (m / q).ln();
            }
        }
    }
    acc.max(0.0)
}

pub fn verify_sr(c: &SrConstruction, tol: f64) -> Result<SrReport> {
    let px = c.problem.px();
    let joint = c.joint();
    let (r, kept, nz) = (
        px.len(),
        c.second_point.forward.outputs(),
        c.z_alphabet.len(),
    );
    if c.pz_given_xhat.inputs() != kept || c.pz_given_xhat.outputs() != nz {
        return Err(Error::DimensionMismatch {
            what: "P(z|x̂) shape",
            expected: kept * nz,
            got: c.pz_given_xhat.inputs() * c.pz_given_xhat.outputs(),
        });
    }
    if c.q_index.len() != nz {
        return Err(Error::DimensionMismatch {
            what: "q_index length",
            expected: nz,
            got: c.q_index.len(),
        });
    }

    let pxj: Vec<Vec<f64>> = joint
        .iter()
        .map(|a| a.iter().map(|b| b.iter().sum()).collect())
        .collect();
    let pj: Vec<f64> = (0..kept)
        .map(|j| pxj.iter().map(|row| row[j]).sum())
        .collect();
    let pjz: Vec<Vec<f64>> = (0..kept)
        .map(|j| {
            (0..nz)
                .map(|z| joint.iter().map(|a| a[j][z]).sum())
                .collect()
        })
        .collect();
    let mut markov = 0.0f64;
    for x in 0..r {
        for j in 0..kept {
            for z in 0..nz {
                let gap = joint[x][j][z] * pj[j] - pxj[x][j] * pjz[j][z];
                markov = markov.max(gap.abs());
            }
        }
    }

    let pxz: Vec<Vec<f64>> = joint
        .iter()
        .map(|a| (0..nz).map(|z| a.iter().map(|b| b[z]).sum()).collect())
        .collect();
    let nq = c.q_rows.len();
    let mut pxq = vec![vec![0.0; nq]; r];
    for z in 0..nz {
        let mass: f64 = pxz.iter().map(|row| row[z]).sum();
        match c.q_index[z] {
            Some(q) if q < nq => {
                for x in 0..r {
                    pxq[x][q] += pxz[x][z];
                }
            }
            Some(q) => {
                return Err(Error::InvalidArgument(format!(
                    "q_index points at missing row {q}"
                )))
            }
            None if mass > 0.0 => {
                return Err(Error::InvalidArgument(format!(
                    "Z symbol {z} has mass {mass} but no Q row"
                )))
            }
            None => {}
        }
    }
    let pq: Vec<f64> = (0..nq)
        .map(|q| pxq.iter().map(|row| row[q]).sum())
        .collect();
    let mut posterior = 0.0f64;
    for q in 0..nq {
        if pq[q] <= 0.0 {
            continue;
        }
        for x in 0..r {
            posterior = posterior.max((pxq[x][q] / pq[q] - c.q_rows[q][x]).abs());
        }
    }
    let h_x = entropy(px);
    let h_x_given_q = cond_entropy_from(&pxq);
    let mutual_information_q = h_x - h_x_given_q;
    let mut expected_loss = 0.0;
    for (x, row) in pxq.iter().enumerate() {
        for (q, &m) in row.iter().enumerate() {
            if m > 0.0 {
                expected_loss += m * log_loss(x, &c.q_rows[q]);
            }
        }
    }

    let mut second_mi = 0.0;
    for x in 0..r {
        for j in 0..kept {
            let m = pxj[x][j];
            if m > 0.0 {
                second_mi += m * (m / (px[x] * pj[j])).ln();
            }
        }
    }
    let mut second_d = 0.0;
    for x in 0..r {
        for (j, &col) in c.second_point.kept_columns.iter().enumerate() {
            second_d += pxj[x][j] * c.problem.d(x, col);
        }
    }

    Ok(SrReport {
        tol,
        markov: check("markov", markov, tol),
        first_rate: check(
            "first_rate",
            (mutual_information_q - (h_x - c.d1)).abs(),
            tol,
        ),
        first_loss: check("first_loss", (expected_loss - c.d1).abs(), tol),
        second_rate: check("second_rate", (second_mi - c.second_point.rate).abs(), tol),
        second_distortion: check("second_distortion", (second_d - c.d2).max(0.0), tol),
        posterior: check("posterior", posterior, tol),
        h_x_given_z: cond_entropy_from(&pxz),
        mutual_information_q,
        expected_loss,
    })
}

/// A chain `X − X̂ − Z_K − … − Z_1` of erasure channels.
#[derive(Debug, Clone, Serialize)]
pub struct SrChain {
    /// `layers[k]` is the construction for `Z_{k+1}` at `D_{k+1}`.
    pub layers: Vec<SrConstruction>,
    /// Cumulative erasure weight of each layer.
    pub deltas: Vec<f64>,
    /// `increments[k]`: extra erasure turning the next finer layer (or `X̂`
    /// for the last) into layer `k`.
    pub increments: Vec<f64>,
    /// `steps[k]` maps the next finer alphabet into layer `k`'s.
    pub steps: Vec<Channel>,
}

/// Builds a chain of first-stage observations for targets
/// `ds = [D_1, …, D_K]`, non-increasing, all sharing the second stage at
/// `d_final`.
pub fn construct_sr_chain(
    problem: &SourceProblem,
    ds: &[f64],
    d_final: f64,
    opts: &SolverOptions,
) -> Result<SrChain> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument("empty chain".into()));
    }
    if let Some(w) = ds.windows(2).find(|w| w[1] > w[0] + opts.tol) {
        return Err(Error::InvalidArgument(format!(
            "chain targets must be non-increasing, got {} then {}",
            w[0], w[1]
        )));
    }
    let pt = rd_at_distortion(problem, d_final, opts)?;
    let px = problem.px();
    let (h, hx) = (pt.conditional_entropy(px), entropy(px));
    let deltas = ds
        .iter()
        .map(|&d| erasure_weight(d, h, hx, opts.tol))
        .collect::<Result<Vec<_>>>()?;
    let kept = pt.kept_columns.len();
    let k_len = ds.len();

    let mut increments = vec![0.0; k_len];
    let mut steps = Vec::with_capacity(k_len);
    for k in 0..k_len {
        let finer = deltas.get(k + 1).copied();
        let eps = match finer {
            None => deltas[k],
            Some(f) if f >= 1.0 => 0.0,
            Some(f) => (1.0 - (1.0 - deltas[k]) / (1.0 - f)).clamp(0.0, 1.0),
        };
        increments[k] = eps;
        let step = if finer.is_none() {
            erasure_channel(kept, eps)
        } else {
            let mut rows: Vec<Vec<f64>> = erasure_channel(kept, eps).rows().to_vec();
            let mut erased = vec![0.0; kept + 1];
            erased[kept] = 1.0;
            rows.push(erased);
            Channel::new(rows)?
        };
        steps.push(step);
    }

    let mut cumulative: Vec<Channel> = vec![steps[k_len - 1].clone(); k_len];
    for k in (0..k_len - 1).rev() {
        cumulative[k] = cumulative[k + 1].compose(&steps[k])?;
    }
    let layers = cumulative
        .into_iter()
        .zip(ds.iter().zip(&deltas))
        .map(|(ch, (&d, &delta))| assemble(problem, &pt, d, d_final, delta, ch))
        .collect::<Result<_>>()?;
    Ok(SrChain {
        layers,
        deltas,
        increments,
        steps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub layers: Vec<SrReport>,
    /// `H(X | Z_k)` per layer, from the composed channels.
    pub conditional_entropies: Vec<f64>,
    /// Largest `|H(X|Z_k) − D_k|`.
    pub target_residual: f64,
    /// `H(X|Z_1) ≥ … ≥ H(X|Z_K) ≥ H(X|X̂*)` up to `tol`.
    pub monotone: bool,
}

impl ChainReport {
    pub fn all_passed(&self, tol: f64) -> bool {
        self.monotone && self.target_residual <= tol && self.layers.iter().all(SrReport::all_passed)
    }
}

pub fn verify_sr_chain(chain: &SrChain, tol: f64) -> Result<ChainReport> {
    let layers = chain
        .layers
        .iter()
        .map(|c| verify_sr(c, tol))
        .collect::<Result<Vec<_>>>()?;
    let conditional_entropies: Vec<f64> = layers.iter().map(|r| r.h_x_given_z).collect();
    let target_residual = conditional_entropies
        .iter()
        .zip(&chain.layers)
        .map(|(h, c)| (h - c.d1).abs())
        .fold(0.0, f64::max);
    let floor = chain.layers.last().map_or(0.0, |c| c.h_x_given_xhat);
    let monotone = conditional_entropies.windows(2).all(|w| w[0] >= w[1] - tol)
        && conditional_entropies
            .last()
            .is_some_and(|&h| h >= floor - tol);
    Ok(ChainReport {
        layers,
        conditional_entropies,
        target_residual,
        monotone,
    })
}

/// Outcome of one simulated block of the time-sharing scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeshareReport {
    pub n: usize,
    /// Prefix length described losslessly.
    pub k: usize,
    pub target_d: f64,
    /// Mean log loss per symbol.
    pub empirical_loss: f64,
    /// `−ln P_X^k(x^k) / n`.
    pub ideal_rate: f64,
    pub seed: u64,
    /// Sample standard deviation of the per-symbol loss.
    pub loss_std: f64,
    /// Sample standard deviation of the per-symbol codelength.
    pub rate_std: f64,
}

impl TimeshareReport {
    /// `(empirical_loss − D) / (σ̂ / √n)`, or 0 when `σ̂ = 0` and the loss
    /// is on target.
    pub fn loss_deviation_sigmas(&self) -> f64 {
        sigmas(self.empirical_loss - self.target_d, self.loss_std, self.n)
    }
}

fn sigmas(diff: f64, std: f64, n: usize) -> f64 {
    let se = std / (n as f64).sqrt();
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

fn check_time_share(px: &Pmf, d: f64, n: usize) -> Result<f64> {
    let hx = entropy(px);
    if !d.is_finite() || d < 0.0 || d > hx + 1e-12 {
        return Err(Error::Infeasible {
            what: "D",
            value: d,
            lo: 0.0,
            hi: hx,
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "block length must be at least 1".into(),
        ));
    }
    Ok(hx)
}

fn draw_block(px: &Pmf, n: usize, seed: u64) -> Result<Vec<usize>> {
    let dist =
        WeightedIndex::new(px.probs()).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

fn prefix_len(n: usize, d: f64, hx: f64) -> usize {
    if hx <= 0.0 {
        return 0;
    }
    let frac = ((hx - d) / hx).clamp(0.0, 1.0);
    ((n as f64 * frac).round() as usize).min(n)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn report_for(px: &Pmf, xs: &[usize], d: f64, k: usize, seed: u64) -> TimeshareReport {
    let n = xs.len();
    let surprisal = |x: usize| log_loss(x, px);
    // Revealed symbols cost their surprisal in rate and nothing in loss.
    let loss = xs
        .iter()
        .enumerate()
        .map(move |(i, &x)| if i < k { 0.0 } else { surprisal(x) });
    let rate = xs
        .iter()
        .enumerate()
        .map(move |(i, &x)| if i < k { surprisal(x) } else { 0.0 });
    let (empirical_loss, loss_std) = mean_std(loss, n);
    let (ideal_rate, rate_std) = mean_std(rate, n);
    TimeshareReport {
        n,
        k,
        target_d: d,
        empirical_loss,
        ideal_rate,
        seed,
        loss_std,
        rate_std,
    }
}

/// Simulates one block of length `n`: `x^n` i.i.d. from `px` drawn from a
/// ChaCha8 stream seeded with `seed`; the first
/// `k = round(n (H(X) − D) / H(X))` symbols are revealed exactly and the
/// rest are reconstructed as `px`.
pub fn timeshare_simulate(px: &Pmf, d: f64, n: usize, seed: u64) -> Result<TimeshareReport> {
    let hx = check_time_share(px, d, n)?;
    let xs = draw_block(px, n, seed)?;
    Ok(report_for(px, &xs, d, prefix_len(n, d, hx), seed))
}

/// Two decoders sharing one encoded prefix: the second reads `k2` symbols,
/// the first only the leading `k1 ≤ k2`.
pub fn timeshare_two_decoders(
    px: &Pmf,
    d1: f64,
    d2: f64,
    n: usize,
    seed: u64,
) -> Result<(TimeshareReport, TimeshareReport)> {
    let hx = check_time_share(px, d1, n)?;
    check_time_share(px, d2, n)?;
    if d2 > d1 {
        return Err(Error::InvalidArgument(format!(
            "second decoder target {d2} exceeds first decoder target {d1}"
        )));
    }
    let xs = draw_block(px, n, seed)?;
    let (k1, k2) = (prefix_len(n, d1, hx), prefix_len(n, d2, hx));
    Ok((
        report_for(px, &xs, d1, k1, seed),
        report_for(px, &xs, d2, k2, seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::binary_entropy;

    const LN2: f64 = std::f64::consts::LN_2;

    fn opts() -> SolverOptions {
        SolverOptions::with_tol(1e-12)
    }

    fn binary() -> SourceProblem {
        SourceProblem::uniform_hamming(2)
    }

    #[test]
    fn boundary_without_erasure() {
        let c = construct_sr(&binary(), binary_entropy(0.1), 0.1, &opts()).unwrap();
        assert!(c.delta.abs() < 1e-9);
        assert_eq!(c.q_rows.len(), 2);
        assert!((c.q_rows[0][0] - 0.9).abs() < 1e-9);
        let rep = verify_sr(&c, 1e-9).unwrap();
        assert!(rep.all_passed(), "{:?}", rep.failures());
        assert!((rep.mutual_information_q - (LN2 - binary_entropy(0.1))).abs() < 1e-9);
    }

    #[test]
    fn boundary_full_erasure() {
        let c = construct_sr(&binary(), LN2, 0.1, &opts()).unwrap();
        assert_eq!(c.delta, 1.0);
        assert_eq!(c.q_rows, vec![Pmf::uniform(2)]);
        assert_eq!(c.q_index, vec![None, None, Some(0)]);
        let rep = verify_sr(&c, 1e-9).unwrap();
        assert!(rep.all_passed());
        assert!(rep.mutual_information_q.abs() < 1e-15);
        assert!((rep.expected_loss - LN2).abs() < 1e-15);
    }

    #[test]
    fn interior_erasure_weight() {
        let c = construct_sr(&binary(), 0.5, 0.1, &opts()).unwrap();
        assert!((c.h_x_given_xhat - 0.325083).abs() < 1e-6);
        assert!((c.delta - 0.475235).abs() < 1e-6);
        let rep = verify_sr(&c, 1e-9).unwrap();
        assert!(rep.all_passed(), "{:?}", rep.failures());
        assert!((rep.mutual_information_q - 0.193147).abs() < 1e-6);
        assert!((rep.h_x_given_z - 0.5).abs() < 1e-9);
        assert!((c.rates.0 - (LN2 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn erasure_row_merges_with_uniform_posterior() {
        // Uniform-3 at D2 = 1/3: no posterior equals px, but a symmetric
        // zero-rate second stage makes every row px.
        let p = SourceProblem::uniform_hamming(3);
        let c = construct_sr(&p, 3f64.ln(), 2.0 / 3.0, &opts()).unwrap();
        assert_eq!(c.q_rows.len(), 1);
        assert!((c.q_masses[0] - 1.0).abs() < 1e-12);
        assert!(verify_sr(&c, 1e-9).unwrap().all_passed());
    }

    #[test]
    fn jittered_rows_fail_posterior_check() {
        let mut c = construct_sr(&binary(), 0.5, 0.1, &opts()).unwrap();
        c.q_rows = c
            .q_rows
            .iter()
            .map(|q| Pmf::new(vec![q[0] + 1e-3, q[1] - 1e-3]).unwrap())
            .collect();
        let rep = verify_sr(&c, 1e-9).unwrap();
        assert!(!rep.posterior.passed);
        assert!(rep.markov.passed && rep.second_rate.passed);
    }

    #[test]
    fn infeasible_first_stage_reports_interval() {
        let err = construct_sr(&binary(), 0.2, 0.1, &opts()).unwrap_err();
        match err {
            Error::Infeasible { lo, hi, .. } => {
                assert!((lo - binary_entropy(0.1)).abs() < 1e-9);
                assert!((hi - LN2).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(construct_sr(&binary(), 0.8, 0.1, &opts()).is_err());
    }

    #[test]
    fn chain_of_two() {
        let chain = construct_sr_chain(&binary(), &[0.6, 0.4], 0.1, &opts()).unwrap();
        assert!((chain.deltas[0] - 0.746927).abs() < 1e-6);
        assert!((chain.deltas[1] - 0.203543).abs() < 1e-6);
        let expected = 1.0 - (1.0 - chain.deltas[0]) / (1.0 - chain.deltas[1]);
        assert!((chain.increments[0] - expected).abs() < 1e-15);
        let rep = verify_sr_chain(&chain, 1e-9).unwrap();
        assert!(rep.all_passed(1e-9), "{rep:?}");
        assert!((rep.conditional_entropies[0] - 0.6).abs() < 1e-9);
    }

    #[test]
    fn single_layer_chain_matches_construction() {
        let chain = construct_sr_chain(&binary(), &[0.5], 0.1, &opts()).unwrap();
        let c = construct_sr(&binary(), 0.5, 0.1, &opts()).unwrap();
        assert_eq!(chain.layers[0].pz_given_xhat, c.pz_given_xhat);
        assert_eq!(chain.layers[0].q_rows, c.q_rows);
    }

    #[test]
    fn equal_targets_add_no_erasure() {
        let chain = construct_sr_chain(&binary(), &[0.5, 0.5, 0.5], 0.1, &opts()).unwrap();
        assert_eq!(&chain.increments[..2], &[0.0, 0.0]);
        for layer in &chain.layers {
            assert_eq!(layer.q_rows, chain.layers[2].q_rows);
        }
        assert!(construct_sr_chain(&binary(), &[0.4, 0.6], 0.1, &opts()).is_err());
    }

    #[test]
    fn time_sharing_endpoints() {
        let px = Pmf::new(vec![0.5, 0.25, 0.25]).unwrap();
        let lossless = timeshare_simulate(&px, 0.0, 1000, 3).unwrap();
        assert_eq!(lossless.k, 1000);
        assert_eq!(lossless.empirical_loss, 0.0);

        let silent = timeshare_simulate(&px, entropy(&px), 1000, 3).unwrap();
        assert_eq!(silent.k, 0);
        assert_eq!(silent.ideal_rate, 0.0);
        assert!((silent.empirical_loss - lossless.ideal_rate).abs() < 1e-12);
        assert!(timeshare_simulate(&px, 2.0, 10, 0).is_err());
    }

    #[test]
    fn time_sharing_uniform_four() {
        let px = Pmf::uniform(4);
        let rep = timeshare_simulate(&px, LN2, 100_000, 1).unwrap();
        assert_eq!(rep.k, 50_000);
        assert!(rep.loss_deviation_sigmas().abs() <= 4.0);
        let band = 4.0 * rep.rate_std / (rep.n as f64).sqrt();
        assert!((rep.ideal_rate - LN2).abs() <= band);
        assert_eq!(rep, timeshare_simulate(&px, LN2, 100_000, 1).unwrap());
    }

    #[test]
    fn two_decoders_share_a_prefix() {
        let px = Pmf::uniform(4);
        let (a, b) = timeshare_two_decoders(&px, 0.7, 0.7, 500, 9).unwrap();
        assert_eq!(a, b);
        let (a, b) = timeshare_two_decoders(&px, entropy(&px), 0.0, 500, 9).unwrap();
        assert_eq!((a.k, b.k), (0, 500));
        assert_eq!(a.ideal_rate, 0.0);
        assert_eq!(b.empirical_loss, 0.0);
        assert!(timeshare_two_decoders(&px, 0.1, 0.5, 10, 0).is_err());
    }
}
