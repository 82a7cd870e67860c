//! Interpolation nodes, barycentric Lagrange evaluation, Lebesgue constants
//! and plain snapshot interpolation in the parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsiError};
use crate::field::SampledField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Chebyshev,
    Equispaced,
    Custom,
}

/// Interpolation points on an interval, with precomputed barycentric weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    interval: (f64, f64),
    nodes: Vec<f64>,
    kind: NodeKind,
    weights: Vec<f64>,
}

impl NodeSet {
    pub fn custom(nodes: Vec<f64>, a: f64, b: f64) -> Result<Self> {
        Self::build(nodes, a, b, NodeKind::Custom)
    }

    fn build(nodes: Vec<f64>, a: f64, b: f64, kind: NodeKind) -> Result<Self> {
        if nodes.is_empty() {
            return Err(TsiError::InvalidNodes("empty node set".into()));
        }
        if !(a < b) {
            return Err(TsiError::InvalidNodes(format!("bad interval [{a}, {b}]")));
        }
        for w in nodes.windows(2) {
            if w[1] <= w[0] {
                return Err(TsiError::InvalidNodes("nodes not strictly increasing".into()));
            }
        }
        if nodes[0] < a - 1e-12 * (b - a) || nodes[nodes.len() - 1] > b + 1e-12 * (b - a) {
            return Err(TsiError::InvalidNodes("nodes outside interval".into()));
        }
        let weights = barycentric_weights(&nodes, a, b);
        Ok(Self { interval: (a, b), nodes, kind, weights })
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    /// Index of the node equal to `eta` (within a relative tolerance).
    pub fn index_of(&self, eta: f64) -> Option<usize> {
        let span = self.interval.1 - self.interval.0;
        self.nodes
            .iter()
            .position(|&n| (n - eta).abs() <= 1e-12 * span.max(1.0))
    }

    /// Lagrange basis values at `mu` via the second barycentric form.
    ///
    /// The coefficients sum to one, and evaluation at a node returns the
    /// corresponding Kronecker delta exactly.
    pub fn lagrange_coeffs(&self, mu: f64) -> Vec<f64> {
        let n = self.nodes.len();
        if n == 1 {
            return vec![1.0];
        }
        // exact hit on a node
        for (k, &x) in self.nodes.iter().enumerate() {
            if mu == x {
                let mut out = vec![0.0; n];
                out[k] = 1.0;
                return out;
            }
        }
        let mut out = vec![0.0; n];
        let mut denom = 0.0;
        for (k, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let term = w / (mu - x);
            out[k] = term;
            denom += term;
        }
        for v in &mut out {
            *v /= denom;
        }
        out
    }

    /// Midpoints between consecutive nodes plus the interval endpoints.
    ///
    /// The standard training-parameter placement for a cell: disjoint from
    /// the nodes and at least as numerous.
    pub fn training_params(&self) -> Vec<f64> {
        let (a, b) = self.interval;
        let mut out = Vec::with_capacity(self.nodes.len() + 1);
        out.push(a);
        for w in self.nodes.windows(2) {
            out.push(0.5 * (w[0] + w[1]));
        }
        out.push(b);
        out.retain(|p| self.index_of(*p).is_none());
        out
    }
}

fn barycentric_weights(nodes: &[f64], a: f64, b: f64) -> Vec<f64> {
    // Scale differences by 4/(b-a) to keep products in range for larger n.
    let scale = 4.0 / (b - a);
    let mut weights: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let mut w = 1.0;
            for (k, &xk) in nodes.iter().enumerate() {
                if k != j {
                    w /= (xj - xk) * scale;
                }
            }
            w
        })
        .collect();
    let max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max > 0.0 {
        for w in &mut weights {
            *w /= max;
        }
    }
    weights
}

/// `n` Chebyshev points of the first kind mapped affinely to `[a, b]`.
pub fn chebyshev_nodes(n: usize, a: f64, b: f64) -> NodeSet {
    assert!(n >= 1, "need at least one node");
    let mut nodes: Vec<f64> = (1..=n)
        .map(|k| {
            let t = ((2 * k - 1) as f64) * std::f64::consts::PI / (2.0 * n as f64);
            let c = t.cos();
            0.5 * (a + b) + 0.5 * (b - a) * c
        })
        .collect();
    nodes.reverse(); // cos is decreasing; sort ascending
    if n == 1 {
        nodes[0] = 0.5 * (a + b);
    }
    NodeSet::build(nodes, a, b, NodeKind::Chebyshev).expect("chebyshev nodes are valid")
}

/// `n` equispaced points on `[a, b]` including the endpoints (midpoint for n = 1).
pub fn equispaced_nodes(n: usize, a: f64, b: f64) -> NodeSet {
    assert!(n >= 1, "need at least one node");
    let nodes: Vec<f64> = if n == 1 {
        vec![0.5 * (a + b)]
    } else {
        (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect()
    };
    NodeSet::build(nodes, a, b, NodeKind::Equispaced).expect("equispaced nodes are valid")
}

/// Pointwise Lagrange combination of one snapshot per node at parameter `mu`.
pub fn interpolate_fields(
    snapshots: &[SampledField],
    nodes: &NodeSet,
    mu: f64,
) -> Result<SampledField> {
    if snapshots.len() != nodes.len() {
        return Err(TsiError::SnapshotCountMismatch {
            expected: nodes.len(),
            got: snapshots.len(),
        });
    }
    for s in &snapshots[1..] {
        if s.grid() != snapshots[0].grid() {
            return Err(TsiError::GridMismatch);
        }
    }
    let coeffs = nodes.lagrange_coeffs(mu);
    let mut out = SampledField::constant(snapshots[0].grid().clone(), 0.0);
    for (c, s) in coeffs.iter().zip(snapshots) {
        out.axpy(*c, s);
    }
    Ok(out)
}

/// Maximum of the Lebesgue function over a dense uniform sample of the
/// node span `[nodes[0], nodes[n-1]]`.
pub fn lebesgue_constant(nodes: &NodeSet, resolution: usize) -> f64 {
    assert!(
        resolution >= 10 * nodes.len(),
        "resolution too coarse for a reliable maximum"
    );
    let a = nodes.nodes()[0];
    let b = nodes.nodes()[nodes.len() - 1];
    if a == b {
        return 1.0;
    }
    let mut best = 1.0f64;
    for i in 0..=resolution {
        let mu = a + (b - a) * i as f64 / resolution as f64;
        let sum: f64 = nodes.lagrange_coeffs(mu).iter().map(|c| c.abs()).sum();
        best = best.max(sum);
    }
    best
}
