//! Finite-alphabet probability primitives.
//!
//! Every quantity is in nats. Symbols are 0-based indices into the alphabet.
//! The conventions `0 ln 0 = 0` and `p ln(p / 0) = +inf` (for `p > 0`) hold
//! throughout; an infinite divergence or loss is `f64::INFINITY`, never an
//! overflowed intermediate.

use std::ops::Index;

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution accepted at construction.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// `-p ln p` with `0 ln 0 = 0`.
#[inline]
pub(crate) fn neg_p_ln_p(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.is_empty() {
        return Err(Error::InvalidDistribution(format!("{what} is empty")));
    }
    if let Some((i, p)) = row
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0)
    {
        return Err(Error::InvalidDistribution(format!(
            "{what} entry {i} is {p}, expected a finite non-negative number"
        )));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {total}, expected 1 within {NORMALIZATION_TOL:e}"
        )));
    }
    Ok(())
}

/// Probability mass function over `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Pmf(Vec<f64>);

impl Pmf {
    /// Validates `probs`; inputs off by more than [`NORMALIZATION_TOL`] are
    /// rejected, not fixed up. Use [`Pmf::renormalize`] for that.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_row(&probs, "pmf")?;
        Ok(Pmf(probs))
    }

    /// Scales non-negative finite weights to unit mass.
    pub fn renormalize(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("weights are empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution(
                "weights have zero total mass".into(),
            ));
        }
        Ok(Pmf(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform pmf needs a non-empty alphabet");
        Pmf(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        assert!(at < n, "point mass index out of range");
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Pmf(probs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Max-norm distance to another pmf of the same length.
    pub fn max_abs_diff(&self, other: &Pmf) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}

impl Index<usize> for Pmf {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for Pmf {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Row-stochastic matrix; rows are inputs, columns outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Channel {
    rows: Vec<Vec<f64>>,
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidDistribution("channel has no rows".into()));
        };
        let width = first.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    what: "channel row length",
                    expected: width,
                    got: row.len(),
                });
            }
            check_row(row, &format!("channel row {i}"))?;
        }
        Ok(Channel { rows })
    }

    pub fn from_pmfs(rows: Vec<Pmf>) -> Result<Self> {
        Channel::new(rows.into_iter().map(Pmf::into_inner).collect())
    }

    pub fn identity(n: usize) -> Self {
        Channel {
            rows: (0..n).map(|i| Pmf::point_mass(n, i).into_inner()).collect(),
        }
    }

    /// Every input produces the same output law.
    pub fn constant(row: &Pmf, inputs: usize) -> Self {
        Channel {
            rows: vec![row.probs().to_vec(); inputs],
        }
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        Channel::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn outputs(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, input: usize, output: usize) -> f64 {
        self.rows[input][output]
    }

    /// Output law when the input is drawn from `px`.
    pub fn pushforward(&self, px: &Pmf) -> Result<Pmf> {
        self.check_input(px)?;
        let mut out = vec![0.0; self.outputs()];
        for (p, row) in px.probs().iter().zip(&self.rows) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += p * w;
            }
        }
        Ok(Pmf(out))
    }

    /// Cascade `self` then `next`.
    pub fn compose(&self, next: &Channel) -> Result<Channel> {
        if self.outputs() != next.inputs() {
            return Err(Error::DimensionMismatch {
                what: "composed channel inner dimension",
                expected: self.outputs(),
                got: next.inputs(),
            });
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut out = vec![0.0; next.outputs()];
                for (w, nrow) in row.iter().zip(&next.rows) {
                    for (o, v) in out.iter_mut().zip(nrow) {
                        *o += w * v;
                    }
                }
                out
            })
            .collect();
        Ok(Channel { rows })
    }

    fn check_input(&self, px: &Pmf) -> Result<()> {
        if px.len() != self.inputs() {
            return Err(Error::DimensionMismatch {
                what: "source length vs channel inputs",
                expected: self.inputs(),
                got: px.len(),
            });
        }
        Ok(())
    }
}

/// Joint law over pairs `(x, y)`; rows index `x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Joint {
    mass: Vec<Vec<f64>>,
}

impl Joint {
    pub fn new(mass: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = mass.first() else {
            return Err(Error::InvalidDistribution("joint has no rows".into()));
        };
        let width = first.len();
        if width == 0 {
            return Err(Error::InvalidDistribution("joint has no columns".into()));
        }
        let mut total = 0.0;
        for row in &mass {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    what: "joint row length",
                    expected: width,
                    got: row.len(),
                });
            }
            for &m in row {
                if !m.is_finite() || m < 0.0 {
                    return Err(Error::InvalidDistribution(format!(
                        "joint entry {m} is not a finite non-negative number"
                    )));
                }
                total += m;
            }
        }
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "joint sums to {total}, expected 1 within {NORMALIZATION_TOL:e}"
            )));
        }
        Ok(Joint { mass })
    }

    /// `P(x, y) = px(x) ch(y | x)`.
    pub fn from_channel(px: &Pmf, ch: &Channel) -> Result<Self> {
        ch.check_input(px)?;
        let mass = px
            .probs()
            .iter()
            .zip(ch.rows())
            .map(|(p, row)| row.iter().map(|w| p * w).collect())
            .collect();
        Ok(Joint { mass })
    }

    pub fn product(p: &Pmf, q: &Pmf) -> Self {
        Joint {
            mass: p
                .probs()
                .iter()
                .map(|a| q.probs().iter().map(|b| a * b).collect())
                .collect(),
        }
    }

    pub fn mass(&self) -> &[Vec<f64>] {
        &self.mass
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.mass[x][y]
    }

    pub fn x_len(&self) -> usize {
        self.mass.len()
    }

    pub fn y_len(&self) -> usize {
        self.mass[0].len()
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        self.mass.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn y_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.y_len()];
        for row in &self.mass {
            for (o, m) in out.iter_mut().zip(row) {
                *o += m;
            }
        }
        out
    }

    /// Expectation of `f(x, y)` under the joint, skipping zero-mass cells.
    pub fn expect(&self, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for (x, row) in self.mass.iter().enumerate() {
            for (y, &m) in row.iter().enumerate() {
                if m > 0.0 {
                    acc += m * f(x, y);
                }
            }
        }
        acc
    }
}

pub fn entropy(p: &Pmf) -> f64 {
    entropy_of(p.probs())
}

/// `-Σ w ln w` over raw weights.
pub(crate) fn entropy_of(weights: &[f64]) -> f64 {
    weights.iter().copied().map(neg_p_ln_p).sum()
}

/// `D(p || q)`; `+inf` when `p` charges a symbol `q` does not.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            what: "kl_divergence operands",
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut acc = 0.0;
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc += a * (a / b).ln();
        }
    }
    Ok(acc.max(0.0))
}

/// `H(X | Y)` where `X` indexes rows of the joint.
pub fn conditional_entropy(joint: &Joint) -> f64 {
    let py = joint.y_marginal();
    let mut acc = 0.0;
    for row in joint.mass() {
        for (&m, &q) in row.iter().zip(&py) {
            if m > 0.0 {
                acc -= m * (m / q).ln();
            }
        }
    }
    acc.max(0.0)
}

/// `I(X; Y)` for `X ~ px` sent through `ch`.
pub fn mutual_information(px: &Pmf, ch: &Channel) -> Result<f64> {
    let py = ch.pushforward(px)?;
    let mut acc = 0.0;
    for (&p, row) in px.probs().iter().zip(ch.rows()) {
        if p <= 0.0 {
            continue;
        }
        for (&w, &q) in row.iter().zip(py.probs()) {
            if w > 0.0 {
                acc += p * w * (w / q).ln();
            }
        }
    }
    Ok(acc.max(0.0))
}

/// `I(X; Y)` computed from a joint law.
pub fn mutual_information_joint(joint: &Joint) -> f64 {
    let px = joint.x_marginal();
    let py = joint.y_marginal();
    joint
        .expect(|x, y| (joint.get(x, y) / (px[x] * py[y])).ln())
        .max(0.0)
}

/// `ln P(x, y) / (P(x) P(y))`.
pub fn information_density(joint: &Joint, x: usize, y: usize) -> Result<f64> {
    if x >= joint.x_len() || y >= joint.y_len() {
        return Err(Error::InvalidArgument(format!(
            "pair ({x}, {y}) outside a {}x{} joint",
            joint.x_len(),
            joint.y_len()
        )));
    }
    let px: f64 = joint.mass()[x].iter().sum();
    let py: f64 = joint.mass().iter().map(|row| row[y]).sum();
    if px <= 0.0 || py <= 0.0 {
        return Err(Error::ZeroProbability(format!(
            "marginal of ({x}, {y}) is zero"
        )));
    }
    let m = joint.get(x, y);
    if m <= 0.0 {
        return Err(Error::ZeroProbability(format!(
            "pair ({x}, {y}) has zero joint mass"
        )));
    }
    Ok((m / (px * py)).ln())
}

/// Bayes inversion: returns `P(X | Y)` (rows indexed by `y`) and `P(Y)`.
///
/// Zero-probability output columns are rejected; prune them first.
pub fn posterior(px: &Pmf, ch: &Channel) -> Result<(Channel, Pmf)> {
    let py = ch.pushforward(px)?;
    if let Some(y) = py.probs().iter().position(|&q| q <= 0.0) {
        return Err(Error::ZeroProbability(format!(
            "output column {y} has zero probability"
        )));
    }
    let rows = (0..ch.outputs())
        .map(|y| {
            let weights: Vec<f64> = px
                .probs()
                .iter()
                .zip(ch.rows())
                .map(|(p, row)| p * row[y])
                .collect();
            let total: f64 = weights.iter().sum();
            weights.into_iter().map(|w| w / total).collect()
        })
        .collect();
    Ok((Channel { rows }, py))
}

/// `ln 1 / q(x)`.
pub fn log_loss(x: usize, q: &Pmf) -> f64 {
    let p = q[x];
    if p <= 0.0 {
        f64::INFINITY
    } else {
        -p.ln()
    }
}

/// Per-symbol average log loss of a sequence of soft reconstructions.
pub fn log_loss_seq(xs: &[usize], qs: &[Pmf]) -> Result<f64> {
    if xs.len() != qs.len() {
        return Err(Error::DimensionMismatch {
            what: "log_loss_seq lengths",
            expected: xs.len(),
            got: qs.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let total: f64 = xs.iter().zip(qs).map(|(&x, q)| log_loss(x, q)).sum();
    Ok(total / xs.len() as f64)
}

/// Binary entropy `h(p)` in nats.
pub fn binary_entropy(p: f64) -> f64 {
    neg_p_ln_p(p) + neg_p_ln_p(1.0 - p)
}
