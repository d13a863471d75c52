//! The base space X, sampled elements of C(X), states and partitions of unity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

pub const ALGEBRA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSpace {
    Points { labels: Vec<String> },
    Grid { a: f64, b: f64, n: usize },
}

impl BaseSpace {
    pub fn grid(a: f64, b: f64, n: usize) -> Result<Self> {
        let s = BaseSpace::Grid { a, b, n };
        s.validate()?;
        Ok(s)
    }

    pub fn unit_grid(n: usize) -> Result<Self> {
        Self::grid(0.0, 1.0, n)
    }

    pub fn points<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let s = BaseSpace::Points {
            labels: labels.into_iter().map(Into::into).collect(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Finite space with labels `p0, p1, ...`.
    pub fn finite(n: usize) -> Result<Self> {
        Self::points((0..n).map(|i| format!("p{i}")))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaseSpace::Points { labels } => {
                if labels.is_empty() {
                    return Err(Error::input("finite space needs at least one point"));
                }
                let mut sorted = labels.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != labels.len() {
                    return Err(Error::input("point labels must be distinct"));
                }
                Ok(())
            }
            BaseSpace::Grid { a, b, n } => {
                if !(a.is_finite() && b.is_finite()) || a >= b {
                    return Err(Error::input(format!("grid needs a < b, got [{a}, {b}]")));
                }
                if *n < 2 {
                    return Err(Error::input(format!("grid needs at least 2 nodes, got {n}")));
                }
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BaseSpace::Points { labels } => labels.len(),
            BaseSpace::Grid { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of node `p`. Finite spaces use the node index.
    pub fn coord(&self, p: usize) -> f64 {
        match self {
            BaseSpace::Points { .. } => p as f64,
            BaseSpace::Grid { a, b, n } => a + (b - a) * p as f64 / (*n - 1) as f64,
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len()).map(|p| self.coord(p)).collect()
    }

    pub fn step(&self) -> Option<f64> {
        match self {
            BaseSpace::Grid { a, b, n } => Some((b - a) / (*n - 1) as f64),
            _ => None,
        }
    }

    /// Node whose coordinate equals `x` up to a tiny relative slack.
    pub fn node_at(&self, x: f64) -> Option<usize> {
        match self {
            BaseSpace::Grid { a, b, n } => {
                let h = (b - a) / (*n - 1) as f64;
                let k = ((x - a) / h).round();
                if k < 0.0 || k > (*n - 1) as f64 {
                    return None;
                }
                let k = k as usize;
                if (self.coord(k) - x).abs() <= 1e-9 * h {
                    Some(k)
                } else {
                    None
                }
            }
            BaseSpace::Points { labels } => {
                let k = x.round();
                if (k - x).abs() < 1e-12 && k >= 0.0 && (k as usize) < labels.len() {
                    Some(k as usize)
                } else {
                    None
                }
            }
        }
    }

    pub fn label(&self, p: usize) -> String {
        match self {
            BaseSpace::Points { labels } => labels[p].clone(),
            BaseSpace::Grid { .. } => format!("x={}", self.coord(p)),
        }
    }

    pub(crate) fn check_same(&self, other: &BaseSpace) -> Result<()> {
        if self != other {
            return Err(Error::input("objects live on different base spaces"));
        }
        Ok(())
    }
}

/// Nodal samples of a continuous function on X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawElement")]
pub struct AlgebraElement {
    pub space: BaseSpace,
    pub values: Vec<C64>,
}

#[derive(Deserialize)]
struct RawElement {
    space: BaseSpace,
    values: Vec<C64>,
}

impl TryFrom<RawElement> for AlgebraElement {
    type Error = Error;
    fn try_from(r: RawElement) -> Result<Self> {
        AlgebraElement::new(r.space, r.values)
    }
}

impl AlgebraElement {
    pub fn new(space: BaseSpace, values: Vec<C64>) -> Result<Self> {
        space.validate()?;
        if values.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::input("algebra element has non-finite samples"));
        }
        Ok(Self { space, values })
    }

    pub fn from_fn(space: &BaseSpace, f: impl Fn(f64) -> C64) -> Self {
        let values = (0..space.len()).map(|p| f(space.coord(p))).collect();
        Self {
            space: space.clone(),
            values,
        }
    }

    pub fn from_real_fn(space: &BaseSpace, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(space, |x| C64::from(f(x)))
    }

    pub fn constant(space: &BaseSpace, v: C64) -> Self {
        Self {
            space: space.clone(),
            values: vec![v; space.len()],
        }
    }

    pub fn one(space: &BaseSpace) -> Self {
        Self::constant(space, C64::from(1.0))
    }

    pub fn zero(space: &BaseSpace) -> Self {
        Self::constant(space, C64::from(0.0))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.space.check_same(&other.space)?;
        Ok(Self {
            space: self.space.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            space: self.space.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|v| v * s)
    }

    pub fn adjoint(&self) -> Self {
        self.map(|v| v.conj())
    }

    /// Sup norm over the nodes.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_selfadjoint(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.im.abs() <= tol)
    }

    /// Largest real part, the value of `sup` on selfadjoint elements.
    pub fn max_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }
}

/// `1 - n|x - t|` clipped at zero: the tent of height 1 at `t` with support of
/// radius `1/n`.
pub fn tent(space: &BaseSpace, t: f64, n: f64) -> AlgebraElement {
    AlgebraElement::from_real_fn(space, |x| (1.0 - n * (x - t).abs()).max(0.0))
}

pub fn is_positive(a: &AlgebraElement, tol: f64) -> bool {
    a.values.iter().all(|v| v.im.abs() <= tol && v.re >= -tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum State {
    Pure { node: usize },
    Measure { weights: Vec<f64> },
}

impl State {
    pub fn pure(node: usize) -> Self {
        State::Pure { node }
    }

    pub fn measure(weights: Vec<f64>) -> Self {
        State::Measure { weights }
    }

    pub fn uniform(space: &BaseSpace) -> Self {
        let n = space.len();
        State::Measure {
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Trapezoid weights of a grid; they integrate affine functions exactly.
    pub fn trapezoid(space: &BaseSpace) -> Self {
        let n = space.len();
        let h = 1.0 / (n - 1) as f64;
        let mut w = vec![h; n];
        w[0] = h / 2.0;
        w[n - 1] = h / 2.0;
        State::Measure { weights: w }
    }

    /// Right-endpoint Riemann weights: node 0 carries no mass.
    pub fn right_riemann(space: &BaseSpace) -> Self {
        let n = space.len();
        let h = 1.0 / (n - 1) as f64;
        let mut w = vec![h; n];
        w[0] = 0.0;
        State::Measure { weights: w }
    }

    pub fn validate(&self, space: &BaseSpace) -> Result<()> {
        match self {
            State::Pure { node } => {
                if *node >= space.len() {
                    return Err(Error::InvalidState(format!(
                        "node {node} out of range for {} nodes",
                        space.len()
                    )));
                }
            }
            State::Measure { weights } => {
                if weights.len() != space.len() {
                    return Err(Error::InvalidState(format!(
                        "measure has {} weights for {} nodes",
                        weights.len(),
                        space.len()
                    )));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidState("measure weights must be finite and nonnegative".into()));
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidState(format!("measure weights sum to {s}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Nodes with positive mass together with their weights.
    pub fn support(&self) -> Vec<(usize, f64)> {
        match self {
            State::Pure { node } => vec![(*node, 1.0)],
            State::Measure { weights } => weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(p, w)| (p, *w))
                .collect(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            State::Pure { node } => format!("pure({node})"),
            State::Measure { weights } => {
                let supp = weights.iter().filter(|w| **w > 0.0).count();
                format!("measure(support={supp})")
            }
        }
    }
}

pub fn evaluate_state(state: &State, a: &AlgebraElement) -> Result<C64> {
    state.validate(&a.space)?;
    if a.values.iter().any(|v| v.re.is_nan() || v.im.is_nan()) {
        return Err(Error::input("NaN sample in algebra element"));
    }
    Ok(state
        .support()
        .into_iter()
        .map(|(p, w)| a.values[p] * w)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    pub parts: Vec<AlgebraElement>,
}

impl PartitionOfUnity {
    /// Validates `Σ ρ_j* ρ_j = 1` before accepting the parts.
    pub fn new(parts: Vec<AlgebraElement>, tol: f64) -> Result<Self> {
        if !verify_partition_of_unity(&parts, tol)? {
            return Err(Error::input("parts do not satisfy Σ ρ*ρ = 1"));
        }
        Ok(Self { parts })
    }

    /// Square roots of piecewise-linear hat functions centered at the given
    /// increasing nodes of an interval grid.
    pub fn tent_roots(space: &BaseSpace, centers: &[f64]) -> Result<Self> {
        if centers.len() < 2 || centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("need at least two increasing centers"));
        }
        let m = centers.len();
        let chi = |j: usize, x: f64| -> f64 {
            let c = centers[j];
            if x <= centers[0] {
                return if j == 0 { 1.0 } else { 0.0 };
            }
            if x >= centers[m - 1] {
                return if j == m - 1 { 1.0 } else { 0.0 };
            }
            if j > 0 && x >= centers[j - 1] && x <= c {
                return (x - centers[j - 1]) / (c - centers[j - 1]);
            }
            if j + 1 < m && x >= c && x <= centers[j + 1] {
                return (centers[j + 1] - x) / (centers[j + 1] - c);
            }
            0.0
        };
        let parts = (0..m)
            .map(|j| AlgebraElement::from_real_fn(space, |x| chi(j, x).max(0.0).sqrt()))
            .collect();
        Self::new(parts, 1e-12)
    }
}

pub fn verify_partition_of_unity(parts: &[AlgebraElement], tol: f64) -> Result<bool> {
    let first = parts
        .first()
        .ok_or_else(|| Error::input("empty partition"))?;
    let mut dev = 0.0f64;
    for p in 0..first.len() {
        let mut s = C64::from(0.0);
        for r in parts {
            r.space.check_same(&first.space)?;
            s += r.values[p].conj() * r.values[p];
        }
        dev = dev.max((s - 1.0).norm());
    }
    Ok(dev <= tol)
}

/// `Σ ρ_j* x_j ρ_j` nodewise.
pub fn a_convex_combine(parts: &PartitionOfUnity, xs: &[AlgebraElement]) -> Result<AlgebraElement> {
    if parts.parts.len() != xs.len() {
        return Err(Error::DimensionMismatch {
            expected: parts.parts.len(),
            found: xs.len(),
        });
    }
    let space = parts.parts[0].space.clone();
    let mut out = AlgebraElement::zero(&space);
    for (r, x) in parts.parts.iter().zip(xs) {
        x.space.check_same(&space)?;
        for p in 0..space.len() {
            out.values[p] += r.values[p].conj() * x.values[p] * r.values[p];
        }
    }
    Ok(out)
}
