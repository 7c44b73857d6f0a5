//! Quadrature grids representing measures on an interval.
//!
//! A [`Grid`] discretizes a measure on `[a, b]` by nodes and strictly
//! positive weights, so that `inner` computes the L2 pairing
//! `sum_j w_j f(t_j) g(t_j)`. Lebesgue measure is covered by the composite
//! midpoint rule and by Gauss-Legendre rules; weighted measures `w * dL`
//! arise from [`Grid::reweight`].

use serde::{Deserialize, Serialize};

use crate::error::{KlError, Result};

/// Quadrature rule that produced a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleTag {
    UniformMidpoint,
    GaussLegendre,
    Weighted,
}

/// Nodes and positive weights discretizing a measure on `[a, b]`.
///
/// Immutable after construction; all methods are pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridData", into = "GridData")]
pub struct Grid {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    rule_tag: RuleTag,
}

/// Serialization mirror of [`Grid`]; validated on the way in.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridData {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    rule_tag: RuleTag,
}

impl TryFrom<GridData> for Grid {
    type Error = KlError;

    fn try_from(d: GridData) -> Result<Grid> {
        Grid::from_parts(d.a, d.b, d.nodes, d.weights, d.rule_tag)
    }
}

impl From<Grid> for GridData {
    fn from(g: Grid) -> GridData {
        GridData {
            a: g.a,
            b: g.b,
            nodes: g.nodes,
            weights: g.weights,
            rule_tag: g.rule_tag,
        }
    }
}

impl Grid {
    /// Composite midpoint rule for Lebesgue measure on `[a, b]`:
    /// `t_j = a + (j - 1/2)(b - a)/n`, `w_j = (b - a)/n`.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Grid> {
        check_interval(a, b, n)?;
        let h = (b - a) / n as f64;
        let nodes = (0..n).map(|j| a + (j as f64 + 0.5) * h).collect();
        let weights = vec![h; n];
        Ok(Grid {
            a,
            b,
            nodes,
            weights,
            rule_tag: RuleTag::UniformMidpoint,
        })
    }

    /// Gauss-Legendre rule mapped affinely from `[-1, 1]` to `[a, b]`;
    /// exact for polynomials of degree `<= 2n - 1` under Lebesgue measure.
    pub fn gauss_legendre(a: f64, b: f64, n: usize) -> Result<Grid> {
        check_interval(a, b, n)?;
        let (x, w) = legendre_nodes_weights(n);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let nodes = x.iter().map(|&xi| mid + half * xi).collect();
        let weights = w.iter().map(|&wi| half * wi).collect();
        Ok(Grid {
            a,
            b,
            nodes,
            weights,
            rule_tag: RuleTag::GaussLegendre,
        })
    }

    /// Builds a grid from explicit parts, enforcing the type invariants:
    /// strictly increasing nodes inside `[a, b]` and strictly positive weights.
    pub fn from_parts(
        a: f64,
        b: f64,
        nodes: Vec<f64>,
        weights: Vec<f64>,
        rule_tag: RuleTag,
    ) -> Result<Grid> {
        if !a.is_finite() || !b.is_finite() || b <= a {
            return Err(KlError::InvalidArgument(format!(
                "endpoints must be finite with b > a, got [{a}, {b}]"
            )));
        }
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(KlError::InvalidArgument(format!(
                "need matching nonempty nodes/weights, got {} and {}",
                nodes.len(),
                weights.len()
            )));
        }
        for pair in nodes.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(KlError::InvalidArgument(
                    "nodes must be strictly increasing".into(),
                ));
            }
        }
        if nodes[0] < a || *nodes.last().unwrap() > b {
            return Err(KlError::InvalidArgument(
                "nodes must lie inside [a, b]".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(KlError::InvalidArgument(
                "weights must be finite and strictly positive".into(),
            ));
        }
        Ok(Grid {
            a,
            b,
            nodes,
            weights,
            rule_tag,
        })
    }

    /// Multiplies each weight by `density(t_j)`, dropping nodes whose new
    /// weight is zero. Models the weighted measure `density * d(mu)`.
    pub fn reweight(&self, density: impl Fn(f64) -> f64) -> Result<Grid> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut weights = Vec::with_capacity(self.nodes.len());
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            let d = density(t);
            if !d.is_finite() || d < 0.0 {
                return Err(KlError::InvalidDensity(format!(
                    "density({t}) = {d} is negative or non-finite"
                )));
            }
            if d > 0.0 {
                nodes.push(t);
                weights.push(w * d);
            }
        }
        if nodes.is_empty() {
            return Err(KlError::DegenerateMeasure(
                "all reweighted weights are zero".into(),
            ));
        }
        Ok(Grid {
            a: self.a,
            b: self.b,
            nodes,
            weights,
            rule_tag: RuleTag::Weighted,
        })
    }

    /// Discrete L2 pairing `sum_j w_j f(t_j) g(t_j)`.
    pub fn inner(&self, f_vals: &[f64], g_vals: &[f64]) -> Result<f64> {
        if f_vals.len() != self.len() || g_vals.len() != self.len() {
            return Err(KlError::InvalidArgument(format!(
                "value arrays must have grid length {}, got {} and {}",
                self.len(),
                f_vals.len(),
                g_vals.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(f_vals.iter().zip(g_vals))
            .map(|(w, (f, g))| w * f * g)
            .sum())
    }

    /// Samples a function at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&t| f(t)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rule_tag(&self) -> RuleTag {
        self.rule_tag
    }

    /// Total mass `nu([a, b]) = sum_j w_j`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index of the node exactly equal to `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        self.nodes
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
            .ok()
    }
}

fn check_interval(a: f64, b: f64, n: usize) -> Result<()> {
    if !a.is_finite() || !b.is_finite() {
        return Err(KlError::InvalidArgument(format!(
            "endpoints must be finite, got [{a}, {b}]"
        )));
    }
    if b <= a {
        return Err(KlError::InvalidArgument(format!(
            "need b > a, got [{a}, {b}]"
        )));
    }
    if n == 0 {
        return Err(KlError::InvalidArgument("need at least one node".into()));
    }
    Ok(())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Roots of the Legendre polynomial `P_n` by Newton iteration from the
/// Chebyshev-like initial guess, converged to 1e-15; deterministic.
fn legendre_nodes_weights(n: usize) -> (Vec<f64>, Vec<f64>) {
    use std::f64::consts::PI;

    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence: evaluates P_n(z) and P_n'(z).
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        // The middle node of an odd rule is exactly zero.
        x[n / 2] = 0.0;
    }
    (x, w)
}
