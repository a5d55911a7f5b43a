//! Undirected weighted communication graphs, their Laplacians and spectra.
//!
//! Three generator families are provided: complete graphs, paths and
//! `p`-cycles. A `p`-cycle on `n` nodes is the circulant graph in which
//! every node is joined to its `p/2` nearest neighbours on each side of the
//! ring, so `p` is the total degree of every node. `cycle:2` is the plain
//! ring and `cycle:(n-1)` (for odd `n`) is the complete graph.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Graph family understood by the generators and the CLI (`complete`,
/// `path`, `cycle:<p>`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    Complete,
    Path,
    /// Circulant graph of total degree `p`.
    Cycle(usize),
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Complete => write!(f, "complete"),
            Topology::Path => write!(f, "path"),
            Topology::Cycle(p) => write!(f, "cycle:{p}"),
        }
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "complete" => Ok(Topology::Complete),
            "path" => Ok(Topology::Path),
            _ => {
                let p = s
                    .strip_prefix("cycle:")
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown topology '{s}'")))?;
                p.parse::<usize>()
                    .map(Topology::Cycle)
                    .map_err(|_| Error::InvalidParameter(format!("bad cycle degree in '{s}'")))
            }
        }
    }
}

impl Serialize for Topology {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Topology {
    /// Builds the `n`-node member of this family with uniform edge weight.
    pub fn build(self, n: usize, weight: f64) -> Result<WeightedGraph> {
        match self {
            Topology::Complete => build_complete(n, weight),
            Topology::Path => build_path(n, weight),
            Topology::Cycle(p) => build_pcycle(n, p, weight),
        }
    }
}

/// Symmetric, zero-diagonal, connected weighted graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    weights: DMatrix<f64>,
}

/// JSON description of a generated graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub n: usize,
    pub topology: Topology,
    pub weight: f64,
}

impl GraphDoc {
    pub fn build(&self) -> Result<WeightedGraph> {
        self.topology.build(self.n, self.weight)
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if weight.is_finite() && weight > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "edge weight must be positive, got {weight}"
        )))
    }
}

/// Complete graph with every pair joined by `weight`.
pub fn build_complete(n: usize, weight: f64) -> Result<WeightedGraph> {
    if n < 2 {
        return Err(Error::InvalidSize(n));
    }
    check_weight(weight)?;
    let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { weight });
    WeightedGraph::from_weights(w)
}

/// Path `0 - 1 - ... - (n-1)`.
pub fn build_path(n: usize, weight: f64) -> Result<WeightedGraph> {
    if n < 2 {
        return Err(Error::InvalidSize(n));
    }
    check_weight(weight)?;
    let w = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { weight } else { 0.0 });
    WeightedGraph::from_weights(w)
}

/// Circulant graph where node `i` is adjacent to `i ± 1, ..., i ± p/2 (mod n)`.
pub fn build_pcycle(n: usize, p: usize, weight: f64) -> Result<WeightedGraph> {
    if n < 3 {
        return Err(Error::InvalidSize(n));
    }
    if p % 2 == 1 || p < 2 || p > n - 1 {
        return Err(Error::InvalidParameter(format!(
            "cycle degree p = {p} must be even with 2 <= p <= n - 1 = {}",
            n - 1
        )));
    }
    check_weight(weight)?;
    let half = p / 2;
    let w = DMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j);
        let ring = d.min(n - d);
        if ring >= 1 && ring <= half {
            weight
        } else {
            0.0
        }
    });
    WeightedGraph::from_weights(w)
}

impl WeightedGraph {
    /// Validates an explicit weight matrix.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if n < 2 {
            return Err(Error::InvalidSize(n));
        }
        if weights.ncols() != n {
            return Err(Error::InvalidWeights(format!(
                "{}x{} is not square",
                n,
                weights.ncols()
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidWeights(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidWeights(format!("weight ({i},{j}) = {w}")));
                }
                if w != weights[(j, i)] {
                    return Err(Error::InvalidWeights(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        let g = Self { weights };
        let components = g.components();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Number of connected components over edges with positive weight.
    pub fn components(&self) -> usize {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for (v, flag) in seen.iter_mut().enumerate() {
                    if !*flag && self.weights[(u, v)] > 0.0 {
                        *flag = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }

    /// Same topology with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        check_weight(factor)?;
        Self::from_weights(&self.weights * factor)
    }

    pub fn laplacian(&self) -> Laplacian {
        let n = self.n();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = self.weights.row(i).sum();
        }
        Laplacian(l)
    }

    /// Edge list `i,j,weight` with a header row, 0-based, each edge once (`i < j`).
    pub fn to_edge_csv(&self) -> String {
        let mut out = String::from("i,j,weight\n");
        let n = self.n();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.weights[(i, j)];
                if w > 0.0 {
                    out.push_str(&format!("{i},{j},{w}\n"));
                }
            }
        }
        out
    }

    /// Parses the format written by [`WeightedGraph::to_edge_csv`]; `n` is
    /// inferred from the largest index.
    pub fn from_edge_csv(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut n = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with('i')) {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::InvalidWeights(format!("line {}: '{line}'", lineno + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let i: usize = parts[0].parse().map_err(|_| bad())?;
            let j: usize = parts[1].parse().map_err(|_| bad())?;
            let w: f64 = parts[2].parse().map_err(|_| bad())?;
            n = n.max(i + 1).max(j + 1);
            edges.push((i, j, w));
        }
        let mut m = DMatrix::zeros(n, n);
        for (i, j, w) in edges {
            if i == j {
                return Err(Error::InvalidWeights(format!("self loop at {i}")));
            }
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
        Self::from_weights(m)
    }
}

/// Graph Laplacian `L = D - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian(DMatrix<f64>);

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn scaled(&self, factor: f64) -> Laplacian {
        Laplacian(&self.0 * factor)
    }

    /// Builds from an explicit matrix, checking symmetry and zero row sums.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n < 2 || m.ncols() != n {
            return Err(Error::InvalidSize(n));
        }
        let scale = m.amax().max(1.0);
        for i in 0..n {
            if m.row(i).sum().abs() > 1e-12 * scale * n as f64 {
                return Err(Error::InvalidWeights(format!(
                    "row {i} does not sum to zero"
                )));
            }
            for j in 0..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidWeights(format!("asymmetric at ({i},{j})")));
                }
                if i != j && m[(i, j)] > 0.0 {
                    return Err(Error::InvalidWeights(format!(
                        "positive off-diagonal at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Laplacian(m))
    }

    /// Symmetric eigendecomposition, see [`spectrum`].
    pub fn spectrum(&self) -> Result<Spectrum> {
        spectrum(self)
    }
}

/// Eigenvalues in ascending order with `λ1 = 0` and the matching orthonormal
/// eigenvectors as columns, `q1 = 1/sqrt(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

/// Relative threshold below which an eigenvalue counts as the consensus mode.
pub const ZERO_CLAMP: f64 = 1e-9;

/// Decomposes `L = Q diag(λ) Qᵀ`.
///
/// Each eigenvector is sign-fixed so its largest-magnitude entry is
/// positive, and the zero mode is replaced by the exact `1/sqrt(n)` vector.
/// Within a repeated eigenvalue the basis is whatever the solver returns.
pub fn spectrum(l: &Laplacian) -> Result<Spectrum> {
    let n = l.n();
    let eig = SymmetricEigen::new(l.matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambda_max = eig.eigenvalues[order[n - 1]];
    let threshold = ZERO_CLAMP * lambda_max.abs().max(f64::MIN_POSITIVE);
    let zeros = order
        .iter()
        .filter(|&&k| eig.eigenvalues[k] < threshold)
        .count();
    if zeros != 1 {
        return Err(Error::Disconnected {
            components: zeros.max(1),
        });
    }
    let mut eigenvalues = DVector::zeros(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = if dst == 0 { 0.0 } else { eig.eigenvalues[src] };
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if pivot < 0.0 {
            col = -col;
        }
        eigenvectors.set_column(dst, &col);
    }
    eigenvectors.set_column(0, &DVector::from_element(n, 1.0 / (n as f64).sqrt()));
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

impl Spectrum {
    /// Assembles a spectrum from an explicit eigenbasis, e.g. a rotated
    /// basis of a degenerate eigenspace. Checks ordering, the zero mode and
    /// orthonormality.
    pub fn from_parts(eigenvalues: DVector<f64>, eigenvectors: DMatrix<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        if n < 2 || eigenvectors.nrows() != n || eigenvectors.ncols() != n {
            return Err(Error::InvalidSize(n));
        }
        if eigenvalues[0] != 0.0 || eigenvalues.iter().skip(1).any(|&v| v <= 0.0) {
            return Err(Error::InvalidParameter(
                "eigenvalues must be 0 < λ2 <= ... ".into(),
            ));
        }
        if eigenvalues.as_slice().windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "eigenvalues must be ascending".into(),
            ));
        }
        let gram = eigenvectors.transpose() * &eigenvectors;
        if (gram - DMatrix::identity(n, n)).amax() > 1e-10 {
            return Err(Error::InvalidParameter(
                "eigenvectors are not orthonormal".into(),
            ));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Algebraic connectivity `λ2`.
    pub fn lambda_2(&self) -> f64 {
        self.eigenvalues[1]
    }

    /// Spectral radius `λn`.
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    /// `Q diag(λ) Qᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        q * DMatrix::from_diagonal(&self.eigenvalues) * q.transpose()
    }
}
