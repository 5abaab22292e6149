//! Finite source coding problems: a source law and a distortion matrix.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::Pmf;

/// Two reconstruction columns closer than this (entrywise) count as identical.
pub const COLUMN_IDENTITY_TOL: f64 = 1e-12;

/// Source `px` over `r` symbols with distortion `dist[x][x̂]` over `s`
/// reconstructions. Distortions are finite and non-negative, and no two
/// reconstruction columns coincide.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceProblem {
    px: Pmf,
    dist: Vec<Vec<f64>>,
}

impl SourceProblem {
    pub fn new(px: Pmf, dist: Vec<Vec<f64>>) -> Result<Self> {
        if dist.len() != px.len() {
            return Err(Error::DimensionMismatch {
                what: "distortion rows vs source alphabet",
                expected: px.len(),
                got: dist.len(),
            });
        }
        let s = dist[0].len();
        if s == 0 {
            return Err(Error::InvalidProblem(
                "empty reconstruction alphabet".into(),
            ));
        }
        for (x, row) in dist.iter().enumerate() {
            if row.len() != s {
                return Err(Error::DimensionMismatch {
                    what: "distortion row length",
                    expected: s,
                    got: row.len(),
                });
            }
            if let Some((y, d)) = row
                .iter()
                .enumerate()
                .find(|(_, d)| !d.is_finite() || **d < 0.0)
            {
                return Err(Error::InvalidProblem(format!(
                    "distortion d({x},{y}) = {d} must be finite and non-negative"
                )));
            }
        }
        for a in 0..s {
            for b in a + 1..s {
                if dist
                    .iter()
                    .all(|row| (row[a] - row[b]).abs() <= COLUMN_IDENTITY_TOL)
                {
                    return Err(Error::InvalidProblem(format!(
                        "reconstruction columns {a} and {b} are identical"
                    )));
                }
            }
        }
        Ok(SourceProblem { px, dist })
    }

    /// Uniform source over `n` symbols with Hamming distortion.
    pub fn uniform_hamming(n: usize) -> Self {
        Self::hamming(Pmf::uniform(n))
    }

    pub fn hamming(px: Pmf) -> Self {
        let n = px.len();
        let dist = (0..n)
            .map(|x| (0..n).map(|y| if x == y { 0.0 } else { 1.0 }).collect())
            .collect();
        SourceProblem { px, dist }
    }

    pub fn px(&self) -> &Pmf {
        &self.px
    }

    pub fn dist(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn d(&self, x: usize, y: usize) -> f64 {
        self.dist[x][y]
    }

    /// Source alphabet size `r`.
    pub fn sources(&self) -> usize {
        self.px.len()
    }

    /// Reconstruction alphabet size `s`.
    pub fn reconstructions(&self) -> usize {
        self.dist[0].len()
    }

    /// Smallest achievable expected distortion, `Σ px(x) min_y d(x, y)`.
    pub fn d_min(&self) -> f64 {
        self.px
            .probs()
            .iter()
            .zip(&self.dist)
            .map(|(p, row)| p * row.iter().copied().fold(f64::INFINITY, f64::min))
            .sum()
    }

    /// Expected distortion of the single reconstruction `y`.
    pub fn column_cost(&self, y: usize) -> f64 {
        self.px
            .probs()
            .iter()
            .zip(&self.dist)
            .map(|(p, row)| p * row[y])
            .sum()
    }

    /// Distortion reachable at zero rate, `min_y E d(X, y)`.
    pub fn d_max(&self) -> f64 {
        (0..self.reconstructions())
            .map(|y| self.column_cost(y))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_distortion(&self) -> f64 {
        self.dist.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Same source restricted to the listed reconstruction columns.
    pub fn restrict_columns(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidArgument("no columns retained".into()));
        }
        if let Some(&c) = columns.iter().find(|&&c| c >= self.reconstructions()) {
            return Err(Error::InvalidArgument(format!("column {c} out of range")));
        }
        let dist = self
            .dist
            .iter()
            .map(|row| columns.iter().map(|&c| row[c]).collect())
            .collect();
        Ok(SourceProblem {
            px: self.px.clone(),
            dist,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_identical_columns_and_bad_entries() {
        let px = Pmf::uniform(2);
        assert!(matches!(
            SourceProblem::new(px.clone(), vec![vec![0.0, 0.0], vec![1.0, 1.0]]),
            Err(Error::InvalidProblem(_))
        ));
        assert!(
            SourceProblem::new(px.clone(), vec![vec![0.0, f64::INFINITY], vec![1.0, 0.0]]).is_err()
        );
        assert!(SourceProblem::new(px.clone(), vec![vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
        assert!(SourceProblem::new(px, vec![vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn distortion_range() {
        let p = SourceProblem::uniform_hamming(3);
        assert_eq!(p.d_min(), 0.0);
        assert!((p.d_max() - 2.0 / 3.0).abs() < 1e-15);
        let skew = SourceProblem::hamming(Pmf::new(vec![0.5, 0.3, 0.2]).unwrap());
        assert!((skew.d_max() - 0.5).abs() < 1e-15);
        let sub = skew.restrict_columns(&[2, 0]).unwrap();
        assert_eq!(sub.dist()[0], vec![1.0, 0.0]);
    }
}
