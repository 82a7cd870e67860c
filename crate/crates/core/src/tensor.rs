//! Component-wise TSI for two parameter axes: a first-axis model (plain or
//! hp-adaptive) per frozen second-axis node, then a second-axis TSI whose
//! transforms act on the extended domain `(x, mu_1)`, optionally composed
//! with a region-aware monotone warp of the first parameter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;
use std::sync::Mutex;

use crate::error::{Result, TsiError};
use crate::field::{Grid1D, SampledField};
use crate::fit::{
    descend, objective_quadrature, AxisDescription, FitConfig, FitReport, FreeLayout,
    SnapshotProvider, TruthSource,
};
use crate::hp::{adapt, AdaptConfig, CellModel, Partition};
use crate::interp::{chebyshev_nodes, equispaced_nodes, lebesgue_constant, NodeSet};
use crate::transform::{pushforward_gamma_prepared, TransformSet};
use crate::tsi::TsiCellModel;

/// Source of snapshots `(mu_1, mu_2) -> u(., mu_1, mu_2)` on a fixed grid.
pub trait Snapshot2Provider: Sync {
    fn snapshot2(&self, mu1: f64, mu2: f64) -> SampledField;
}

impl<F: Fn(f64, f64) -> SampledField + Sync> Snapshot2Provider for F {
    fn snapshot2(&self, mu1: f64, mu2: f64) -> SampledField {
        self(mu1, mu2)
    }
}

/// Memoizing wrapper counting unique `(mu_1, mu_2)` queries (PDE solves).
pub struct CountingProvider2<'a> {
    inner: &'a dyn Snapshot2Provider,
    cache: Mutex<BTreeMap<(u64, u64), SampledField>>,
}

impl<'a> CountingProvider2<'a> {
    pub fn new(inner: &'a dyn Snapshot2Provider) -> Self {
        Self { inner, cache: Mutex::new(BTreeMap::new()) }
    }

    pub fn unique_queries(&self) -> usize {
        self.cache.lock().expect("cache").len()
    }

    /// All unique `(mu_1, mu_2)` pairs requested so far, in a stable order.
    pub fn queried_params(&self) -> Vec<(f64, f64)> {
        self.cache
            .lock()
            .expect("cache")
            .keys()
            .map(|&(a, b)| (f64::from_bits(a), f64::from_bits(b)))
            .collect()
    }
}

impl Snapshot2Provider for CountingProvider2<'_> {
    fn snapshot2(&self, mu1: f64, mu2: f64) -> SampledField {
        let key = (mu1.to_bits(), mu2.to_bits());
        if let Some(hit) = self.cache.lock().expect("cache").get(&key) {
            return hit.clone();
        }
        let snap = self.inner.snapshot2(mu1, mu2);
        self.cache.lock().expect("cache").insert(key, snap.clone());
        snap
    }
}

/// Monotone warps of the first parameter anchored on the interface curve
/// `mu_bar(mu_hat)`: the warp for a pair of second-axis values fixes the
/// interval endpoints and maps `mu_bar(mu_hat)` to `mu_bar(eta_hat)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamWarp {
    axis1_domain: (f64, f64),
    /// sorted samples of `(mu_hat, mu_bar(mu_hat))`
    curve: Vec<(f64, f64)>,
}

impl ParamWarp {
    /// Interface location for a second-axis value, piecewise linear in the
    /// stored samples.
    pub fn mu_bar(&self, mu_hat: f64) -> f64 {
        let n = self.curve.len();
        if mu_hat <= self.curve[0].0 {
            return self.curve[0].1;
        }
        if mu_hat >= self.curve[n - 1].0 {
            return self.curve[n - 1].1;
        }
        let idx = self.curve.partition_point(|&(m, _)| m < mu_hat);
        let (m0, v0) = self.curve[idx - 1];
        let (m1, v1) = self.curve[idx];
        if mu_hat == m0 {
            return v0;
        }
        v0 + (v1 - v0) * (mu_hat - m0) / (m1 - m0)
    }

    /// The two-segment monotone map fixing the endpoints and sending the
    /// target interface to the source interface.
    pub fn apply(&self, mu_hat: f64, eta_hat: f64, mu1: f64) -> f64 {
        let (lo, hi) = self.axis1_domain;
        let mt = self.mu_bar(mu_hat);
        let ms = self.mu_bar(eta_hat);
        let mu1 = mu1.clamp(lo, hi);
        if mu1 <= mt {
            lo + (ms - lo) * (mu1 - lo) / (mt - lo)
        } else {
            ms + (hi - ms) * (mu1 - mt) / (hi - mt)
        }
    }
}

/// Build the region-aware warp from the interface curve. The curve is
/// sampled densely over the second axis and the given node pairs are
/// inserted exactly, so anchors at the nodes hold to machine precision.
pub fn build_param_warp(
    mu_bar_curve: impl Fn(f64) -> f64,
    axis1_domain: (f64, f64),
    axis2_domain: (f64, f64),
    node_pairs: &[(f64, f64)],
    samples: usize,
) -> Result<ParamWarp> {
    let (a2, b2) = axis2_domain;
    let mut points: Vec<f64> = (0..=samples.max(2))
        .map(|i| a2 + (b2 - a2) * i as f64 / samples.max(2) as f64)
        .collect();
    for &(m, e) in node_pairs {
        points.push(m);
        points.push(e);
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let (lo, hi) = axis1_domain;
    let mut curve = Vec::with_capacity(points.len());
    for m in points {
        let v = mu_bar_curve(m);
        if v <= lo || v >= hi {
            return Err(TsiError::MuBarOnBoundary(v));
        }
        curve.push((m, v));
    }
    Ok(ParamWarp { axis1_domain, curve })
}

/// First-axis model per frozen second-axis value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Stage1 {
    Plain(TsiCellModel),
    Adaptive(Partition),
}

impl Stage1 {
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Stage1::Plain(m) => m.interval(),
            Stage1::Adaptive(p) => p.domain,
        }
    }

    /// Evaluate at `mu1`, clamping into the axis-1 domain; the flag reports
    /// whether clamping occurred.
    pub fn evaluate_clamped(&self, mu1: f64) -> Result<(SampledField, bool)> {
        let (a, b) = self.domain();
        let clamped = mu1 < a || mu1 > b;
        let mu = mu1.clamp(a, b);
        let field = match self {
            Stage1::Plain(m) => m.tsi_evaluate(mu)?,
            Stage1::Adaptive(p) => p.evaluate(mu)?,
        };
        Ok((field, clamped))
    }

    /// Same models over mollified snapshots.
    pub fn mollified(&self, width: f64) -> Stage1 {
        match self {
            Stage1::Plain(m) => Stage1::Plain(m.mollified(width)),
            Stage1::Adaptive(p) => {
                let mut q = p.clone();
                for cell in &mut q.cells {
                    cell.model = cell.model.as_ref().map(|m| match m {
                        CellModel::Tsi(t) => CellModel::Tsi(t.mollified(width)),
                        CellModel::Constant { mu_t, snapshot } => CellModel::Constant {
                            mu_t: *mu_t,
                            snapshot: snapshot.mollify(width),
                        },
                    });
                }
                Stage1::Adaptive(q)
            }
        }
    }

    /// First-axis interpolation points with nonzero weight at `mu1`.
    pub fn active_nodes(&self, mu1: f64) -> Result<Vec<f64>> {
        let (a, b) = self.domain();
        let mu = mu1.clamp(a, b);
        match self {
            Stage1::Plain(m) => Ok(filter_active(m.nodes(), mu)),
            Stage1::Adaptive(p) => {
                let cell = &p.cells[p.locate(mu)?];
                match &cell.model {
                    Some(CellModel::Tsi(m)) => Ok(filter_active(m.nodes(), mu)),
                    Some(CellModel::Constant { mu_t, .. }) => Ok(vec![*mu_t]),
                    None => Err(TsiError::UnfittedCell {
                        a: cell.interval.0,
                        b: cell.interval.1,
                    }),
                }
            }
        }
    }

    /// Interpolation parameters used for reconstruction.
    pub fn reconstruction_nodes(&self) -> Vec<f64> {
        match self {
            Stage1::Plain(m) => m.nodes().nodes().to_vec(),
            Stage1::Adaptive(p) => p.all_nodes(),
        }
    }

    /// Number of reconstruction snapshots this model stores.
    pub fn snapshot_count(&self) -> usize {
        match self {
            Stage1::Plain(m) => m.nodes().len(),
            Stage1::Adaptive(p) => p.snapshot_count(),
        }
    }

    fn grid(&self) -> Result<Grid1D> {
        match self {
            Stage1::Plain(m) => Ok(m.snapshots()[0].grid().clone()),
            Stage1::Adaptive(p) => {
                for cell in &p.cells {
                    match &cell.model {
                        Some(CellModel::Tsi(m)) => return Ok(m.snapshots()[0].grid().clone()),
                        Some(CellModel::Constant { snapshot, .. }) => {
                            return Ok(snapshot.grid().clone())
                        }
                        None => continue,
                    }
                }
                Err(TsiError::UnfittedCell { a: p.domain.0, b: p.domain.1 })
            }
        }
    }
}

fn filter_active(nodes: &NodeSet, mu: f64) -> Vec<f64> {
    let lag = nodes.lagrange_coeffs(mu);
    nodes
        .nodes()
        .iter()
        .zip(&lag)
        .filter(|(_, &w)| w.abs() > 1e-14)
        .map(|(&n, _)| n)
        .collect()
}

/// Component-wise TSI model over `(mu_1, mu_2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentModel {
    pub axis1_domain: (f64, f64),
    pub axis2_nodes: NodeSet,
    pub stage1_at_nodes: Vec<Stage1>,
    /// First-axis models at second-axis training points (fine quadrature).
    pub stage1_at_train: Vec<(f64, Stage1)>,
    /// Extended-domain transforms: sources on axis 2, one Lagrange factor
    /// set on axis 1, and the spatial basis.
    pub transforms: TransformSet,
    pub warp: Option<ParamWarp>,
    pub stage2_report: Option<FitReport>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalDiagnostics {
    /// Some transformed first-axis coordinate left the axis-1 domain and
    /// was clamped.
    pub clamped: bool,
}

impl ComponentModel {
    fn transformed_mu1(&self, prep: &crate::transform::PreparedTransform<'_>, mu2: f64, s: usize, mu1: f64) -> f64 {
        let base = match &self.warp {
            Some(w) => w.apply(mu2, self.axis2_nodes.nodes()[s], mu1),
            None => mu1,
        };
        base + prep.param_displacement(0)
    }

    pub fn evaluate_diag(&self, mu1: f64, mu2: f64) -> Result<(SampledField, EvalDiagnostics)> {
        let (a2, b2) = self.axis2_nodes.interval();
        if mu2 < a2 - 1e-12 * (b2 - a2) || mu2 > b2 + 1e-12 * (b2 - a2) {
            return Err(TsiError::OutsideCell { mu: mu2, a: a2, b: b2 });
        }
        let lag2 = self.axis2_nodes.lagrange_coeffs(mu2);
        let grid = self.stage1_at_nodes[0].grid()?;
        let mut out = SampledField::constant(grid.clone(), 0.0);
        let mut diag = EvalDiagnostics::default();
        for (s, &ls) in lag2.iter().enumerate() {
            if ls == 0.0 {
                continue;
            }
            let prep = self.transforms.prepare(mu2, s, &[mu1]);
            let mu1t = self.transformed_mu1(&prep, mu2, s, mu1);
            let (field, clamped) = self.stage1_at_nodes[s].evaluate_clamped(mu1t)?;
            diag.clamped |= clamped;
            let transformed =
                SampledField::from_fn(grid.clone(), |x| field.evaluate(prep.x(x)));
            out.axpy(ls, &transformed);
        }
        Ok((out, diag))
    }
}

/// Evaluate the component-wise TSI at `(mu_1, mu_2)`.
pub fn evaluate_componentwise(
    model: &ComponentModel,
    mu1: f64,
    mu2: f64,
) -> Result<SampledField> {
    model.evaluate_diag(mu1, mu2).map(|(f, _)| f)
}

/// Tensor node pairs `(mu_1 node, mu_2 node)` contributing to the
/// evaluation at `(mu_1, mu_2)`.
pub fn active_points(model: &ComponentModel, mu1: f64, mu2: f64) -> Result<Vec<(f64, f64)>> {
    let lag2 = model.axis2_nodes.lagrange_coeffs(mu2);
    let mut out = Vec::new();
    for (s, &ls) in lag2.iter().enumerate() {
        if ls.abs() <= 1e-14 {
            continue;
        }
        let prep = model.transforms.prepare(mu2, s, &[mu1]);
        let mu1t = model.transformed_mu1(&prep, mu2, s, mu1);
        for n1 in model.stage1_at_nodes[s].active_nodes(mu1t)? {
            out.push((n1, model.axis2_nodes.nodes()[s]));
        }
    }
    out.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).expect("finite"));
    out.dedup_by(|a, b| a == b);
    Ok(out)
}

/// Stability prefactor `gamma * Lambda_n` of the second-stage TSI: the
/// push-forward constant of the spatial maps at `(mu_1, mu_2)` times the
/// Lebesgue constant of the second-axis nodes.
pub fn stage2_stability_bound(model: &ComponentModel, mu1: f64, mu2: f64) -> Result<f64> {
    let grid = model.stage1_at_nodes[0].grid()?;
    let mut gamma = 0.0f64;
    for s in 0..model.axis2_nodes.len() {
        let prep = model.transforms.prepare(mu2, s, &[mu1]);
        gamma = gamma.max(pushforward_gamma_prepared(&prep, &grid)?);
    }
    let lambda = lebesgue_constant(&model.axis2_nodes, 100 * model.axis2_nodes.len());
    Ok(gamma * lambda)
}

/// Configuration of the component-wise fit.
#[derive(Debug, Clone)]
pub struct TensorConfig {
    /// Second-axis TSI degree (node count minus one).
    pub axis2_degree: usize,
    pub adaptive_axis1: bool,
    /// Used when `adaptive_axis1` is set.
    pub axis1_adapt: AdaptConfig,
    /// Single-cell first-axis degree otherwise.
    pub axis1_degree: usize,
    /// Optimizer settings for the second stage (mode, smoothing, steps).
    pub stage2_fit: FitConfig,
    /// Degree of the transforms' dependence on the first parameter.
    pub transform_param_degree: usize,
    /// Fine-quadrature points along the first axis.
    pub axis1_fine_points: usize,
    pub warp: Option<ParamWarp>,
}

impl Default for TensorConfig {
    fn default() -> Self {
        Self {
            axis2_degree: 2,
            adaptive_axis1: true,
            axis1_adapt: AdaptConfig::default(),
            axis1_degree: 2,
            stage2_fit: FitConfig::default(),
            transform_param_degree: 1,
            axis1_fine_points: 51,
            warp: None,
        }
    }
}

struct FrozenAxis1Provider<'a> {
    provider: &'a dyn Snapshot2Provider,
    mu2: f64,
}

impl SnapshotProvider for FrozenAxis1Provider<'_> {
    fn snapshot(&self, mu1: f64) -> SampledField {
        self.provider.snapshot2(mu1, self.mu2)
    }
}

fn fit_stage1(
    provider: &dyn Snapshot2Provider,
    axis1_domain: (f64, f64),
    mu2: f64,
    cfg: &TensorConfig,
) -> Result<Stage1> {
    let frozen = FrozenAxis1Provider { provider, mu2 };
    if cfg.adaptive_axis1 {
        let out = adapt(&frozen, axis1_domain, &cfg.axis1_adapt)?;
        Ok(Stage1::Adaptive(out.partition))
    } else {
        let nodes = chebyshev_nodes(cfg.axis1_degree + 1, axis1_domain.0, axis1_domain.1);
        let (transforms, _) =
            crate::fit::fit_localized(&frozen, &nodes, &cfg.axis1_adapt.fit)?;
        let snaps: Vec<SampledField> =
            nodes.nodes().iter().map(|&m| frozen.snapshot(m)).collect();
        Ok(Stage1::Plain(TsiCellModel::new(nodes, snaps, transforms)?))
    }
}

struct Stage2Objective {
    axis2_nodes: NodeSet,
    stage1_moll: Vec<Stage1>,
    /// per training mu2: (mu2, one truth field per first-axis quad point)
    truths: Vec<(f64, Vec<SampledField>)>,
    q1: Vec<f64>,
    template: TransformSet,
    warp: Option<ParamWarp>,
    grid: Grid1D,
    layout: FreeLayout,
    fd_delta: f64,
}

impl Stage2Objective {
    fn transformed_mu1(
        &self,
        prep: &crate::transform::PreparedTransform<'_>,
        mu2: f64,
        s: usize,
        mu1: f64,
    ) -> f64 {
        let base = match &self.warp {
            Some(w) => w.apply(mu2, self.axis2_nodes.nodes()[s], mu1),
            None => mu1,
        };
        base + prep.param_displacement(0)
    }

    fn eval(&self, packed: &[f64]) -> f64 {
        let mut t = self.template.clone();
        t.unpack_free(packed);
        let h = self.grid.h();
        let npts = self.grid.n_points();
        let terms: Vec<f64> = self
            .truths
            .par_iter()
            .map(|(mu2, fields)| {
                let lag2 = self.axis2_nodes.lagrange_coeffs(*mu2);
                let mut acc2 = 0.0;
                for (qi, &mu1) in self.q1.iter().enumerate() {
                    let mut contribs = Vec::new();
                    for (s, &ls) in lag2.iter().enumerate() {
                        if ls == 0.0 {
                            continue;
                        }
                        let prep = t.prepare(*mu2, s, &[mu1]);
                        let mu1t = self.transformed_mu1(&prep, *mu2, s, mu1);
                        let field = match self.stage1_moll[s].evaluate_clamped(mu1t) {
                            Ok((f, _)) => f,
                            Err(_) => return f64::INFINITY,
                        };
                        contribs.push((ls, prep, field));
                    }
                    let truth = &fields[qi];
                    let mut acc = 0.0;
                    for i in 0..npts {
                        let x = self.grid.node(i);
                        let mut v = 0.0;
                        for (ls, prep, field) in &contribs {
                            v += ls * field.evaluate(prep.x(x));
                        }
                        let w = if i == 0 || i == npts - 1 { 0.5 } else { 1.0 };
                        acc += w * (v - truth.values()[i]).abs();
                    }
                    acc2 += acc * h;
                }
                acc2 / self.q1.len() as f64
            })
            .collect();
        terms.iter().sum::<f64>() / self.truths.len() as f64
    }

    fn grad(&self, packed: &[f64]) -> Vec<f64> {
        let mut t = self.template.clone();
        t.unpack_free(packed);
        let h = self.grid.h();
        let npts = self.grid.n_points();
        let basis = t.basis().clone();
        let param_nodes = &t.param_node_sets()[0];
        let m = param_nodes.len();
        let partials: Vec<Vec<f64>> = self
            .truths
            .par_iter()
            .map(|(mu2, fields)| {
                let mut g = vec![0.0; self.layout.len()];
                let lag2 = self.axis2_nodes.lagrange_coeffs(*mu2);
                for (qi, &mu1) in self.q1.iter().enumerate() {
                    let lag1 = param_nodes.lagrange_coeffs(mu1);
                    let mut contribs = Vec::new();
                    for (s, &ls) in lag2.iter().enumerate() {
                        if ls == 0.0 {
                            continue;
                        }
                        let prep = t.prepare(*mu2, s, &[mu1]);
                        let mu1t = self.transformed_mu1(&prep, *mu2, s, mu1);
                        let Ok((field, _)) = self.stage1_moll[s].evaluate_clamped(mu1t) else {
                            return g;
                        };
                        let up = self.stage1_moll[s].evaluate_clamped(mu1t + self.fd_delta);
                        let dn = self.stage1_moll[s].evaluate_clamped(mu1t - self.fd_delta);
                        let (Ok((up, _)), Ok((dn, _))) = (up, dn) else { return g };
                        contribs.push((s, ls, prep, field, up, dn));
                    }
                    let truth = &fields[qi];
                    for i in 0..npts {
                        let x = self.grid.node(i);
                        let mut v = 0.0;
                        for (_, ls, prep, field, _, _) in &contribs {
                            v += ls * field.evaluate(prep.x(x));
                        }
                        let r = v - truth.values()[i];
                        if r == 0.0 {
                            continue;
                        }
                        let w = if i == 0 || i == npts - 1 { 0.5 } else { 1.0 };
                        let sgn = if r > 0.0 { w * h } else { -w * h };
                        for (s, ls, prep, field, up, dn) in &contribs {
                            let phix = prep.x(x);
                            let dwdx = field.derivative_at(phix);
                            let dwdp =
                                (up.evaluate(phix) - dn.evaluate(phix)) / (2.0 * self.fd_delta);
                            for q in 0..self.axis2_nodes.len() {
                                if q == *s || lag2[q] == 0.0 {
                                    continue;
                                }
                                for (mi, &l1) in lag1.iter().enumerate().take(m) {
                                    let wfac = lag2[q] * l1;
                                    if wfac == 0.0 {
                                        continue;
                                    }
                                    if dwdx != 0.0 {
                                        for j in 0..self.layout.k {
                                            g[self.layout.spatial(*s, q, mi, j)] +=
                                                sgn * ls * dwdx * wfac * basis.eval(j, x);
                                        }
                                    }
                                    if dwdp != 0.0 {
                                        g[self.layout.param(*s, q, mi, 0)] +=
                                            sgn * ls * dwdp * wfac;
                                    }
                                }
                            }
                        }
                    }
                }
                let scale = 1.0 / self.q1.len() as f64;
                for v in &mut g {
                    *v *= scale;
                }
                g
            })
            .collect();
        let mut g = vec![0.0; self.layout.len()];
        for p in &partials {
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi += pi;
            }
        }
        let scale = 1.0 / self.truths.len() as f64;
        for v in &mut g {
            *v *= scale;
        }
        g
    }
}

/// Fit the component-wise TSI: stage one fits a first-axis model per frozen
/// second-axis node (and per training point in fine quadrature), stage two
/// fits the extended-domain transforms against the stage-one models.
pub fn fit_componentwise(
    provider: &dyn Snapshot2Provider,
    axis1_domain: (f64, f64),
    axis2_domain: (f64, f64),
    cfg: &TensorConfig,
) -> Result<ComponentModel> {
    let axis2_nodes = chebyshev_nodes(cfg.axis2_degree + 1, axis2_domain.0, axis2_domain.1);
    let train2 = axis2_nodes.training_params();

    // stage 1 at the second-axis nodes (parallel over frozen values)
    let stage1_at_nodes: Vec<Stage1> = axis2_nodes
        .nodes()
        .par_iter()
        .map(|&mu2| fit_stage1(provider, axis1_domain, mu2, cfg))
        .collect::<Result<_>>()?;

    let plan = objective_quadrature(
        cfg.stage2_fit.quadrature_mode,
        &[AxisDescription {
            lo: axis1_domain.0,
            hi: axis1_domain.1,
            fine_points: cfg.axis1_fine_points,
        }],
        cfg.stage2_fit.coarse_points,
    );
    let q1 = plan.param_axes[0].clone();

    // additional stage-1 models at the training points (fine quadrature)
    let stage1_at_train: Vec<(f64, Stage1)> = if plan.truth_source
        == TruthSource::TransformedAxisModels
    {
        train2
            .par_iter()
            .map(|&mu2| Ok((mu2, fit_stage1(provider, axis1_domain, mu2, cfg)?)))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let grid = stage1_at_nodes[0].grid()?;
    let width = cfg.stage2_fit.smoothing_width;

    // training truth per (mu2, q1 point), mollified for the optimizer
    let truths_moll: Vec<(f64, Vec<SampledField>)> = match plan.truth_source {
        TruthSource::TransformedAxisModels => stage1_at_train
            .iter()
            .map(|(mu2, s1)| {
                let moll = s1.mollified(width);
                let fields = q1
                    .iter()
                    .map(|&m1| moll.evaluate_clamped(m1).map(|(f, _)| f))
                    .collect::<Result<Vec<_>>>()?;
                Ok((*mu2, fields))
            })
            .collect::<Result<_>>()?,
        TruthSource::PdeOracle => train2
            .iter()
            .map(|&mu2| {
                let fields = q1
                    .iter()
                    .map(|&m1| provider.snapshot2(m1, mu2).mollify(width))
                    .collect();
                Ok((mu2, fields))
            })
            .collect::<Result<_>>()?,
    };

    let param_nodes = equispaced_nodes(
        cfg.transform_param_degree + 1,
        axis1_domain.0,
        axis1_domain.1,
    );
    let template = TransformSet::identity(
        axis2_nodes.clone(),
        vec![param_nodes],
        (grid.x_min(), grid.x_max()),
        cfg.stage2_fit.transform_degree + 1,
    );
    let layout = FreeLayout::of(&template);
    let objective = Stage2Objective {
        axis2_nodes: axis2_nodes.clone(),
        stage1_moll: stage1_at_nodes.iter().map(|s| s.mollified(width)).collect(),
        truths: truths_moll,
        q1: q1.clone(),
        template: template.clone(),
        warp: cfg.warp.clone(),
        grid: grid.clone(),
        layout,
        fd_delta: 1e-4 * (axis1_domain.1 - axis1_domain.0),
    };

    let eval = |x: &[f64]| objective.eval(x);
    let gradient = |x: &[f64]| objective.grad(x);
    let out = descend(
        &eval,
        &gradient,
        template.pack_free(),
        cfg.stage2_fit.max_iters,
        cfg.stage2_fit.step_size,
        cfg.stage2_fit.stop_tol,
    )?;
    let mut transforms = template;
    transforms.unpack_free(&out.x);

    let mut model = ComponentModel {
        axis1_domain,
        axis2_nodes,
        stage1_at_nodes,
        stage1_at_train,
        transforms,
        warp: cfg.warp.clone(),
        stage2_report: None,
    };

    // report: unmollified mean-over-axis-1 L1 error per training parameter
    let mut per_param = Vec::new();
    let mut worst = 0.0f64;
    for (ti, &mu2) in train2.iter().enumerate() {
        let mut acc = 0.0;
        for &mu1 in &q1 {
            let approx = evaluate_componentwise(&model, mu1, mu2)?;
            let truth = match plan.truth_source {
                TruthSource::TransformedAxisModels => {
                    model.stage1_at_train[ti].1.evaluate_clamped(mu1)?.0
                }
                TruthSource::PdeOracle => provider.snapshot2(mu1, mu2),
            };
            acc += approx.l1_distance(&truth)?;
        }
        let err = acc / q1.len() as f64;
        per_param.push((mu2, err));
        worst = worst.max(err);
    }
    model.stage2_report = Some(FitReport {
        final_training_error: worst,
        per_param_errors: per_param,
        iterations_used: out.iterations,
        error_history: vec![(cfg.axis2_degree, worst)],
    });
    Ok(model)
}
