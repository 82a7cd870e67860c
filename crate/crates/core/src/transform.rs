//! Parametric spatial transforms: discrete representation, evaluation,
//! chain composition, and the stability diagnostics (transform ODE residual,
//! Gronwall ratio bound, push-forward constant, transform DOF counts).
//!
//! A transform set stores, for every source node `eta`, the displacement
//! expansion
//!
//! `phi(mu, eta)(x) = x + sum_q l_q(mu) * [param factors] * sum_j c_j psi_j(x)`
//!
//! with Lagrange factors `l_q` on the source-node axis (and on each
//! previously-processed parameter axis in the extended case) and a small
//! polynomial basis `psi_j` in space. The diagonal coefficient block
//! (target node equal to the source node) is pinned to zero, which enforces
//! the interpolation condition `phi(eta, eta) = id` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsiError};
use crate::field::Grid1D;
use crate::interp::NodeSet;

/// Scaled monomial basis `psi_j(x) = ((2x - a - b) / (b - a))^j` on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyBasis {
    interval: (f64, f64),
    k: usize,
}

impl PolyBasis {
    pub fn new(interval: (f64, f64), k: usize) -> Self {
        assert!(k >= 1, "spatial basis needs at least one function");
        assert!(interval.0 < interval.1, "empty spatial interval");
        Self { interval, k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    fn normalized(&self, x: f64) -> f64 {
        (2.0 * x - self.interval.0 - self.interval.1) / (self.interval.1 - self.interval.0)
    }

    pub fn eval(&self, j: usize, x: f64) -> f64 {
        self.normalized(x).powi(j as i32)
    }

    /// Evaluate `sum_j coeffs[j] psi_j(x)` by Horner's rule.
    pub fn combine(&self, coeffs: &[f64], x: f64) -> f64 {
        let t = self.normalized(x);
        let mut acc = 0.0;
        for &c in coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }
}

/// Coefficient tensor for the parametric transforms of one interpolation axis.
///
/// `param_node_sets` lists the Lagrange factors for previously-processed
/// parameter axes (empty for the first axis). With one such axis, the
/// transform acts on extended points `(x, mu_1)`; the `mu_1` component of the
/// displacement is independent of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSet {
    source_nodes: NodeSet,
    param_node_sets: Vec<NodeSet>,
    basis: PolyBasis,
    /// spatial displacement, indexed by (source, target node, param multi-index, j)
    coeffs: Vec<f64>,
    /// per parameter axis: displacement of that coordinate, indexed by
    /// (source, target node, param multi-index)
    param_coeffs: Vec<Vec<f64>>,
}

impl TransformSet {
    /// The identity transform: all coefficients zero.
    pub fn identity(
        source_nodes: NodeSet,
        param_node_sets: Vec<NodeSet>,
        spatial_interval: (f64, f64),
        k: usize,
    ) -> Self {
        let n = source_nodes.len();
        let m: usize = param_node_sets.iter().map(|s| s.len()).product();
        let coeffs = vec![0.0; n * n * m * k];
        let param_coeffs = param_node_sets.iter().map(|_| vec![0.0; n * n * m]).collect();
        Self {
            source_nodes,
            param_node_sets,
            basis: PolyBasis::new(spatial_interval, k),
            coeffs,
            param_coeffs,
        }
    }

    pub fn source_nodes(&self) -> &NodeSet {
        &self.source_nodes
    }

    pub fn param_node_sets(&self) -> &[NodeSet] {
        &self.param_node_sets
    }

    pub fn spatial_basis_size(&self) -> usize {
        self.basis.k()
    }

    pub fn spatial_interval(&self) -> (f64, f64) {
        self.basis.interval()
    }

    pub fn basis(&self) -> &PolyBasis {
        &self.basis
    }

    fn m_total(&self) -> usize {
        self.param_node_sets.iter().map(|s| s.len()).product()
    }

    fn idx(&self, s: usize, q: usize, mi: usize, j: usize) -> usize {
        let n = self.source_nodes.len();
        ((s * n + q) * self.m_total() + mi) * self.basis.k() + j
    }

    fn pidx(&self, s: usize, q: usize, mi: usize) -> usize {
        let n = self.source_nodes.len();
        (s * n + q) * self.m_total() + mi
    }

    pub fn coeff(&self, s: usize, q: usize, mi: usize, j: usize) -> f64 {
        self.coeffs[self.idx(s, q, mi, j)]
    }

    /// Set a spatial-displacement coefficient. The diagonal block `q == s`
    /// is pinned to zero and cannot be set.
    pub fn set_coeff(&mut self, s: usize, q: usize, mi: usize, j: usize, val: f64) {
        assert!(q != s, "diagonal coefficient blocks are pinned to zero");
        let i = self.idx(s, q, mi, j);
        self.coeffs[i] = val;
    }

    pub fn param_coeff(&self, axis: usize, s: usize, q: usize, mi: usize) -> f64 {
        self.param_coeffs[axis][self.pidx(s, q, mi)]
    }

    pub fn set_param_coeff(&mut self, axis: usize, s: usize, q: usize, mi: usize, val: f64) {
        assert!(q != s, "diagonal coefficient blocks are pinned to zero");
        let i = self.pidx(s, q, mi);
        self.param_coeffs[axis][i] = val;
    }

    /// Flattened view of the free (off-diagonal) spatial and parameter
    /// coefficients, used by the optimizer.
    pub(crate) fn pack_free(&self) -> Vec<f64> {
        let n = self.source_nodes.len();
        let m = self.m_total();
        let k = self.basis.k();
        let mut out = Vec::new();
        for s in 0..n {
            for q in 0..n {
                if q == s {
                    continue;
                }
                for mi in 0..m {
                    for j in 0..k {
                        out.push(self.coeffs[self.idx(s, q, mi, j)]);
                    }
                    for axis in 0..self.param_coeffs.len() {
                        out.push(self.param_coeffs[axis][self.pidx(s, q, mi)]);
                    }
                }
            }
        }
        out
    }

    pub(crate) fn unpack_free(&mut self, packed: &[f64]) {
        let n = self.source_nodes.len();
        let m = self.m_total();
        let k = self.basis.k();
        let mut it = packed.iter();
        for s in 0..n {
            for q in 0..n {
                if q == s {
                    continue;
                }
                for mi in 0..m {
                    for j in 0..k {
                        let i = self.idx(s, q, mi, j);
                        self.coeffs[i] = *it.next().expect("packed length");
                    }
                    for axis in 0..self.param_coeffs.len() {
                        let i = self.pidx(s, q, mi);
                        self.param_coeffs[axis][i] = *it.next().expect("packed length");
                    }
                }
            }
        }
        debug_assert!(it.next().is_none(), "packed length mismatch");
    }

    /// Combined Lagrange weights over (target node, param multi-index) for a
    /// fixed target parameter and extended-point parameter coordinates.
    fn weights(&self, mu: f64, params: &[f64]) -> Vec<f64> {
        debug_assert_eq!(params.len(), self.param_node_sets.len());
        let lag_t = self.source_nodes.lagrange_coeffs(mu);
        let lag_p: Vec<Vec<f64>> = self
            .param_node_sets
            .iter()
            .zip(params)
            .map(|(s, &p)| s.lagrange_coeffs(p))
            .collect();
        let m = self.m_total();
        let n = self.source_nodes.len();
        let mut out = Vec::with_capacity(n * m);
        for &lt in &lag_t {
            for mi in 0..m {
                let mut w = lt;
                let mut rest = mi;
                for lp in lag_p.iter().rev() {
                    w *= lp[rest % lp.len()];
                    rest /= lp.len();
                }
                out.push(w);
            }
        }
        out
    }

    /// Fix target parameter, source node and extended parameter coordinates;
    /// evaluation over `x` then costs one short polynomial per call.
    pub fn prepare(&self, mu: f64, source: usize, params: &[f64]) -> PreparedTransform<'_> {
        let w = self.weights(mu, params);
        let m = self.m_total();
        let k = self.basis.k();
        let mut poly = vec![0.0; k];
        for (qm, &wq) in w.iter().enumerate() {
            if wq == 0.0 {
                continue;
            }
            let base = (source * self.source_nodes.len() + qm / m) * m + qm % m;
            for j in 0..k {
                poly[j] += wq * self.coeffs[base * k + j];
            }
        }
        let mut param_disp = Vec::with_capacity(self.param_coeffs.len());
        for pc in &self.param_coeffs {
            let mut d = 0.0;
            for (qm, &wq) in w.iter().enumerate() {
                if wq == 0.0 {
                    continue;
                }
                let base = (source * self.source_nodes.len() + qm / m) * m + qm % m;
                d += wq * pc[base];
            }
            param_disp.push(d);
        }
        PreparedTransform { basis: &self.basis, poly, param_disp }
    }

    /// `x + displacement` for a transform without extended parameter axes.
    pub fn apply_x(&self, mu: f64, source: usize, x: f64) -> f64 {
        debug_assert!(self.param_node_sets.is_empty());
        self.prepare(mu, source, &[]).x(x)
    }

    /// Transform an extended point; `point[0]` is `x`, the rest are the
    /// previously-processed parameter coordinates. The source is given by
    /// its node value.
    pub fn apply(&self, mu: f64, eta: f64, point: &[f64]) -> Result<Vec<f64>> {
        let source = self
            .source_nodes
            .index_of(eta)
            .ok_or(TsiError::UnknownSourceNode(eta))?;
        let (x, params) = point.split_first().expect("point needs a spatial coordinate");
        let prep = self.prepare(mu, source, params);
        let mut out = Vec::with_capacity(point.len());
        out.push(prep.x(*x));
        for (axis, &p) in params.iter().enumerate() {
            out.push(p + prep.param_disp[axis]);
        }
        Ok(out)
    }

    /// Displacement evaluation with the source interpolated between nodes;
    /// used by the ODE diagnostic where `phi(mu, s)` is needed for `s`
    /// between source nodes.
    pub fn apply_interp_source(&self, mu: f64, s: f64, params: &[f64], x: f64) -> f64 {
        let lag_s = self.source_nodes.lagrange_coeffs(s);
        let w = self.weights(mu, params);
        let m = self.m_total();
        let n = self.source_nodes.len();
        let k = self.basis.k();
        let mut poly = vec![0.0; k];
        for (si, &ls) in lag_s.iter().enumerate() {
            if ls == 0.0 {
                continue;
            }
            for (qm, &wq) in w.iter().enumerate() {
                let base = (si * n + qm / m) * m + qm % m;
                for j in 0..k {
                    poly[j] += ls * wq * self.coeffs[base * k + j];
                }
            }
        }
        x + self.basis.combine(&poly, x)
    }

    /// Direction field `Phi(eta, z)` read from the transform set via the
    /// target derivative on the diagonal, by central differences.
    pub fn direction_field_at(&self, eta: f64, z: f64) -> f64 {
        let (a, b) = self.source_nodes.interval();
        let dt = 1e-6 * (b - a);
        let up = self.apply_interp_source(eta + dt, eta, &[], z);
        let dn = self.apply_interp_source(eta - dt, eta, &[], z);
        -(up - dn) / (2.0 * dt)
    }
}

/// A transform set prepared for one (target, source, parameter) combination.
pub struct PreparedTransform<'a> {
    basis: &'a PolyBasis,
    poly: Vec<f64>,
    param_disp: Vec<f64>,
}

impl PreparedTransform<'_> {
    pub fn x(&self, x: f64) -> f64 {
        x + self.basis.combine(&self.poly, x)
    }

    pub fn displacement(&self, x: f64) -> f64 {
        self.basis.combine(&self.poly, x)
    }

    /// Displacement of extended parameter coordinate `axis` (independent of x).
    pub fn param_displacement(&self, axis: usize) -> f64 {
        self.param_disp[axis]
    }
}

/// One local-in-parameter transform step `x -> x + sum_j c_j psi_j(x)`,
/// pulling points in the `target` frame back to the `source` frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformStep {
    pub target: f64,
    pub source: f64,
    basis: PolyBasis,
    coeffs: Vec<f64>,
}

impl TransformStep {
    pub fn new(target: f64, source: f64, basis: PolyBasis, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), basis.k());
        Self { target, source, basis, coeffs }
    }

    pub fn identity(target: f64, source: f64, basis: PolyBasis) -> Self {
        let coeffs = vec![0.0; basis.k()];
        Self { target, source, basis, coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        x + self.basis.combine(&self.coeffs, x)
    }
}

/// Composition of local steps along a parameter chain. The steps are applied
/// in the order given: the first entry pulls back from the overall target.
#[derive(Debug, Clone)]
pub struct ComposedMap {
    steps: Vec<TransformStep>,
    pub target: f64,
    pub source: f64,
}

impl ComposedMap {
    pub fn eval(&self, x: f64) -> f64 {
        self.steps.iter().fold(x, |x, s| s.eval(x))
    }
}

/// Compose per-step transforms along a parameter chain. Consecutive steps
/// must match endpoints: step `i` ends at the frame step `i + 1` starts from.
pub fn compose_chain(steps: Vec<TransformStep>) -> Result<ComposedMap> {
    assert!(!steps.is_empty(), "empty chain");
    for w in steps.windows(2) {
        if (w[0].source - w[1].target).abs() > 1e-12 * (1.0 + w[0].source.abs()) {
            return Err(TsiError::ChainEndpointMismatch {
                left: w[0].source,
                right: w[1].target,
            });
        }
    }
    let target = steps[0].target;
    let source = steps[steps.len() - 1].source;
    Ok(ComposedMap { steps, target, source })
}

/// Finite-difference defect of the transform ODE
/// `d/d eta phi(mu, eta)(x) = Phi(eta, phi(mu, eta)(x))`.
///
/// Zero (up to O(dh)) exactly when the transform set is consistent with the
/// chain decomposition.
pub fn ode_residual(t: &TransformSet, mu: f64, eta: f64, x: f64, dh: f64) -> f64 {
    let phi0 = t.apply_interp_source(mu, eta, &[], x);
    let phi1 = t.apply_interp_source(mu, eta + dh, &[], x);
    let lhs = (phi1 - phi0) / dh;
    let rhs = t.direction_field_at(eta, phi0);
    (lhs - rhs).abs()
}

/// A direction field `Phi(eta, x)` with an optional singular parameter
/// `mu_bar` where `|eta - mu_bar| * Phi` stays Lipschitz in `x`.
pub struct DirectionField {
    field: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    singular_param: Option<f64>,
}

impl DirectionField {
    pub fn new(
        field: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        singular_param: Option<f64>,
    ) -> Self {
        Self { field: Box::new(field), singular_param }
    }

    pub fn eval(&self, eta: f64, x: f64) -> f64 {
        (self.field)(eta, x)
    }

    pub fn singular_param(&self) -> Option<f64> {
        self.singular_param
    }
}

/// Embedded Cash-Karp RK45 step for a 2-vector ODE.
fn rk45_step(
    f: &impl Fn(f64, [f64; 2]) -> [f64; 2],
    t: f64,
    y: [f64; 2],
    h: f64,
) -> ([f64; 2], f64) {
    const A: [f64; 5] = [1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];
    const B: [[f64; 5]; 5] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
        [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [
            1631.0 / 55296.0,
            175.0 / 512.0,
            575.0 / 13824.0,
            44275.0 / 110592.0,
            253.0 / 4096.0,
        ],
    ];
    const C5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
    const C4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        1.0 / 4.0,
    ];
    let mut k = [[0.0f64; 2]; 6];
    k[0] = f(t, y);
    for i in 0..5 {
        let mut yi = y;
        for (j, kj) in k.iter().enumerate().take(i + 1) {
            yi[0] += h * B[i][j] * kj[0];
            yi[1] += h * B[i][j] * kj[1];
        }
        k[i + 1] = f(t + A[i] * h, yi);
    }
    let mut y5 = y;
    let mut y4 = y;
    for (j, kj) in k.iter().enumerate() {
        y5[0] += h * C5[j] * kj[0];
        y5[1] += h * C5[j] * kj[1];
        y4[0] += h * C4[j] * kj[0];
        y4[1] += h * C4[j] * kj[1];
    }
    let err = ((y5[0] - y4[0]).abs()).max((y5[1] - y4[1]).abs());
    (y5, err)
}

fn integrate_pair(
    field: &DirectionField,
    from: f64,
    to: f64,
    y0: [f64; 2],
    tol: f64,
) -> ([f64; 2], (f64, f64)) {
    let f = |t: f64, y: [f64; 2]| [field.eval(t, y[0]), field.eval(t, y[1])];
    let mut t = from;
    let mut y = y0;
    let span = to - from;
    let mut h = span / 64.0;
    let mut lo = y0[0].min(y0[1]);
    let mut hi = y0[0].max(y0[1]);
    let mut guard = 0usize;
    while (to - t).abs() > 1e-15 * (1.0 + to.abs()) {
        if (h.abs() > (to - t).abs()) || (h == 0.0) {
            h = to - t;
        }
        let (ynew, err) = rk45_step(&f, t, y, h);
        let scale = tol * (1.0 + y[0].abs().max(y[1].abs()));
        if err <= scale {
            t += h;
            y = ynew;
            lo = lo.min(y[0].min(y[1]));
            hi = hi.max(y[0].max(y[1]));
            if err < 0.1 * scale {
                h *= 2.0;
            }
        } else {
            h *= 0.5;
        }
        guard += 1;
        if guard > 2_000_000 {
            break;
        }
    }
    (y, (lo, hi))
}

/// Integrate the transform ODE from `(mu, x)` and `(mu, y)` to `eta` and
/// compare the separation of the two solutions against the Gronwall-type
/// bound `|(eta - mu_bar)/(mu - mu_bar)|^L |x - y|` (or `exp(L |eta - mu|)`
/// for a field without a singular parameter).
///
/// Under the lemma hypotheses the returned pair satisfies
/// `lhs <= bound * (1 + 1e-6)`.
pub fn gronwall_ratio_check(
    field: &DirectionField,
    mu: f64,
    eta: f64,
    x: f64,
    y: f64,
) -> Result<(f64, f64)> {
    assert!(x != y, "need two distinct initial values");
    let lo = mu.min(eta);
    let hi = mu.max(eta);
    if let Some(mb) = field.singular_param() {
        if (lo..=hi).contains(&mb) {
            return Err(TsiError::SingularInsideRange { mu_bar: mb, lo, hi });
        }
    }
    let (end, (xlo, xhi)) = integrate_pair(field, mu, eta, [x, y], 1e-11);
    let lhs = (end[0] - end[1]).abs();

    // Lipschitz constant of the weighted field, estimated on the traversed box.
    let pad = 0.1 * (xhi - xlo).max(1e-6);
    let (xlo, xhi) = (xlo - pad, xhi + pad);
    let dx = (xhi - xlo) / 200.0;
    let mut lip = 0.0f64;
    for i in 0..=40 {
        let t = lo + (hi - lo) * i as f64 / 40.0;
        let w = match field.singular_param() {
            Some(mb) => (t - mb).abs(),
            None => 1.0,
        };
        for j in 0..=200 {
            let xs = xlo + (xhi - xlo) * j as f64 / 200.0;
            let d = (field.eval(t, xs + dx) - field.eval(t, xs - dx)) / (2.0 * dx);
            lip = lip.max((w * d).abs());
        }
    }
    let bound = match field.singular_param() {
        Some(mb) => ((eta - mb) / (mu - mb)).abs().powf(lip) * (x - y).abs(),
        None => (lip * (eta - mu).abs()).exp() * (x - y).abs(),
    };
    Ok((lhs, bound))
}

/// Push-forward constant of the realized map `x -> phi(mu, eta)(x)` on a
/// grid: the largest ratio by which the inverse map stretches a cell.
pub fn pushforward_gamma(
    t: &TransformSet,
    mu: f64,
    eta: f64,
    grid: &Grid1D,
) -> Result<f64> {
    let source = t
        .source_nodes
        .index_of(eta)
        .ok_or(TsiError::UnknownSourceNode(eta))?;
    pushforward_gamma_prepared(&t.prepare(mu, source, &[]), grid)
}

pub(crate) fn pushforward_gamma_prepared(
    prep: &PreparedTransform<'_>,
    grid: &Grid1D,
) -> Result<f64> {
    let h = grid.h();
    let mut prev = prep.x(grid.node(0));
    let mut gamma = 0.0f64;
    for i in 1..grid.n_points() {
        let cur = prep.x(grid.node(i));
        let d = cur - prev;
        if d <= 0.0 {
            return Err(TsiError::FoldingTransform(i));
        }
        gamma = gamma.max(h / d);
        prev = cur;
    }
    Ok(gamma)
}

/// Exact degrees of freedom of the component-wise discrete transforms for
/// `n` nodes per axis, `d` parameter dimensions and `K` spatial basis
/// functions, together with the closed-form bound `2 n^(d+1) K`.
pub fn dof_count(n: u64, d: u32, k: u64) -> (u64, u64) {
    assert!(n >= 2 && d >= 1 && k >= 1);
    let exact: u64 = (1..=d).map(|i| n * n.pow(i) * k).sum();
    let bound = 2 * n.pow(d + 1) * k;
    (exact, bound)
}
