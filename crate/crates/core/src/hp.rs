//! Parameter-interval partitioning with h and p refinement driven by
//! training-error indicators, plus the theoretical graded-dyadic schedule
//! refined toward a single shock-topology-change parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsiError};
use crate::field::SampledField;
use crate::fit::{fit_localized, CountingProvider, FitConfig, SnapshotProvider};
use crate::interp::chebyshev_nodes;
use crate::tsi::TsiCellModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellMode {
    Tsi,
    PiecewiseConstant,
}

/// Fitted approximation stored on a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellModel {
    Tsi(TsiCellModel),
    Constant { mu_t: f64, snapshot: SampledField },
}

/// One dyadic parameter cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub interval: (f64, f64),
    pub level: u32,
    pub degree: usize,
    pub mode: CellMode,
    pub model: Option<CellModel>,
    /// `(degree, training error)` pairs across fits of this cell.
    pub error_history: Vec<(usize, f64)>,
    pub training_error: Option<f64>,
    /// Below the target tolerance or the quadrature noise floor.
    pub converged: bool,
}

impl Cell {
    pub fn fresh(interval: (f64, f64), level: u32, degree: usize, mode: CellMode) -> Self {
        Self {
            interval,
            level,
            degree,
            mode,
            model: None,
            error_history: Vec::new(),
            training_error: None,
            converged: false,
        }
    }

    pub fn width(&self) -> f64 {
        self.interval.1 - self.interval.0
    }

    pub fn contains(&self, mu: f64) -> bool {
        mu >= self.interval.0 && mu <= self.interval.1
    }
}

/// Ordered dyadic cells tiling the parameter domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    pub domain: (f64, f64),
    pub cells: Vec<Cell>,
}

/// Outcome of the hp decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    H,
    P,
}

/// The hp decision of the training-error convergence-rate rule:
/// from `eps(n_T - 1) / eps(n_T - 2) ~ ((n_T-1)/(n_T-2))^{-(m_T - 1)}`,
/// p-refine if `n_T <= m_T - 1`, h-refine otherwise. Cells without a usable
/// two-entry history (in particular degree below 3) h-refine, the
/// conservative branch near singularities.
pub fn hp_decide(history: &[(usize, f64)], n_t: usize) -> Result<Refinement> {
    let lookup = |deg: usize| history.iter().rev().find(|(d, _)| *d == deg).map(|&(_, e)| e);
    if n_t < 3 {
        return Ok(Refinement::H);
    }
    let (e1, e2) = match (lookup(n_t - 1), lookup(n_t - 2)) {
        (Some(e1), Some(e2)) => (e1, e2),
        _ => return Ok(Refinement::H),
    };
    if e1 <= 0.0 || e2 <= 0.0 {
        return Err(TsiError::BadErrorHistory(format!(
            "nonpositive errors {e1}, {e2}"
        )));
    }
    let ratio = e1 / e2;
    let base = (n_t as f64 - 1.0) / (n_t as f64 - 2.0);
    let m_t = 1.0 - ratio.ln() / base.ln();
    if (n_t as f64) <= m_t - 1.0 {
        Ok(Refinement::P)
    } else {
        Ok(Refinement::H)
    }
}

impl Partition {
    pub fn root(domain: (f64, f64), degree: usize) -> Self {
        Self {
            domain,
            cells: vec![Cell::fresh(domain, 0, degree, CellMode::Tsi)],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index of the cell containing `mu`; shared boundaries resolve left.
    pub fn locate(&self, mu: f64) -> Result<usize> {
        let (a, b) = self.domain;
        if mu < a - 1e-12 * (b - a) || mu > b + 1e-12 * (b - a) {
            return Err(TsiError::OutsideCell { mu, a, b });
        }
        let idx = self.cells.partition_point(|c| c.interval.1 < mu);
        Ok(idx.min(self.cells.len() - 1))
    }

    /// Evaluate the partition's model at `mu`.
    pub fn evaluate(&self, mu: f64) -> Result<SampledField> {
        let cell = &self.cells[self.locate(mu)?];
        match &cell.model {
            Some(CellModel::Tsi(model)) => model.tsi_evaluate(mu),
            Some(CellModel::Constant { snapshot, .. }) => Ok(snapshot.clone()),
            None => Err(TsiError::UnfittedCell { a: cell.interval.0, b: cell.interval.1 }),
        }
    }

    /// Tiling, dyadic widths and one-level grading.
    pub fn check_invariants(&self) -> Result<()> {
        let (a, b) = self.domain;
        let len = b - a;
        if self.cells.is_empty() {
            return Err(TsiError::InvalidSchedule("no cells".into()));
        }
        let tol = 1e-9 * len;
        if (self.cells[0].interval.0 - a).abs() > tol
            || (self.cells[self.cells.len() - 1].interval.1 - b).abs() > tol
        {
            return Err(TsiError::InvalidSchedule("cells do not span the domain".into()));
        }
        for w in self.cells.windows(2) {
            if (w[0].interval.1 - w[1].interval.0).abs() > tol {
                return Err(TsiError::InvalidSchedule("cells do not tile".into()));
            }
            if w[0].level.abs_diff(w[1].level) > 1 {
                return Err(TsiError::InvalidSchedule("grading violated".into()));
            }
        }
        for c in &self.cells {
            let want = len * 0.5f64.powi(c.level as i32);
            if (c.width() - want).abs() > tol {
                return Err(TsiError::InvalidSchedule(format!(
                    "cell [{}, {}] is not dyadic at level {}",
                    c.interval.0, c.interval.1, c.level
                )));
            }
        }
        Ok(())
    }

    /// Bisect cell `idx`; cascading splits keep neighboring levels within one.
    /// Children inherit `max(1, degree - 1)` and forget their models.
    pub fn split_with_grading(&mut self, idx: usize) {
        self.split_cell(idx);
        loop {
            let mut done = true;
            for i in 0..self.cells.len() - 1 {
                if self.cells[i].level + 1 < self.cells[i + 1].level {
                    self.split_cell(i);
                    done = false;
                    break;
                }
                if self.cells[i + 1].level + 1 < self.cells[i].level {
                    self.split_cell(i + 1);
                    done = false;
                    break;
                }
            }
            if done {
                break;
            }
        }
    }

    fn split_cell(&mut self, idx: usize) {
        let cell = self.cells.remove(idx);
        let mid = 0.5 * (cell.interval.0 + cell.interval.1);
        let degree = cell.degree.saturating_sub(1).max(1);
        let left = Cell::fresh((cell.interval.0, mid), cell.level + 1, degree, cell.mode);
        let right = Cell::fresh((mid, cell.interval.1), cell.level + 1, degree, cell.mode);
        self.cells.insert(idx, right);
        self.cells.insert(idx, left);
    }

    /// Total number of reconstruction snapshots stored on the cells.
    pub fn snapshot_count(&self) -> usize {
        self.cells
            .iter()
            .map(|c| match c.mode {
                CellMode::Tsi => c.degree + 1,
                CellMode::PiecewiseConstant => 1,
            })
            .sum()
    }

    /// All interpolation parameters of all cells (the active-point pool).
    pub fn all_nodes(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.cells {
            match &c.model {
                Some(CellModel::Tsi(m)) => out.extend_from_slice(m.nodes().nodes()),
                Some(CellModel::Constant { mu_t, .. }) => out.push(*mu_t),
                None => {}
            }
        }
        out
    }

    /// Active interpolation points for `mu`: the containing cell's nodes.
    pub fn active_points(&self, mu: f64) -> Result<Vec<f64>> {
        let cell = &self.cells[self.locate(mu)?];
        match &cell.model {
            Some(CellModel::Tsi(m)) => Ok(m.nodes().nodes().to_vec()),
            Some(CellModel::Constant { mu_t, .. }) => Ok(vec![*mu_t]),
            None => Err(TsiError::UnfittedCell { a: cell.interval.0, b: cell.interval.1 }),
        }
    }

    pub fn max_error_cell(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.cells.iter().enumerate() {
            if c.converged {
                continue;
            }
            if let Some(e) = c.training_error {
                if best.map_or(true, |(_, be)| e > be) {
                    best = Some((i, e));
                }
            }
        }
        best
    }
}

/// Adaptive-refinement configuration.
#[derive(Debug, Clone)]
pub struct AdaptConfig {
    pub target_tol: f64,
    /// Maximum number of unique snapshot parameters (PDE solves).
    pub budget: usize,
    pub initial_degree: usize,
    /// Template for the per-cell transform fits; an empty
    /// `training_params` means per-cell midpoints plus endpoints.
    pub fit: FitConfig,
    pub max_rounds: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            target_tol: 0.02,
            budget: 60,
            initial_degree: 1,
            fit: FitConfig::default(),
            max_rounds: 200,
        }
    }
}

/// Result of [`adapt`]: the fitted partition and whether the tolerance was
/// reached within the snapshot budget.
#[derive(Debug)]
pub struct AdaptOutcome {
    pub partition: Partition,
    pub converged: bool,
    pub snapshots_used: usize,
}

const NOISE_FLOOR: f64 = 1e-12;

fn fit_cell_ramp(
    cell: &mut Cell,
    provider: &dyn SnapshotProvider,
    cfg: &AdaptConfig,
) -> Result<()> {
    // Fit increasing degrees up to the target so the decision rule has a
    // two-entry error history available from the start.
    let lo = cell.degree.saturating_sub(2).max(1);
    for d in lo..=cell.degree {
        fit_cell_at_degree(cell, d, provider, cfg)?;
    }
    Ok(())
}

fn fit_cell_at_degree(
    cell: &mut Cell,
    degree: usize,
    provider: &dyn SnapshotProvider,
    cfg: &AdaptConfig,
) -> Result<()> {
    let nodes = chebyshev_nodes(degree + 1, cell.interval.0, cell.interval.1);
    let fit_cfg = FitConfig { training_params: Vec::new(), ..cfg.fit.clone() };
    let (transforms, report) = fit_localized(provider, &nodes, &fit_cfg)?;
    let snaps: Vec<SampledField> =
        nodes.nodes().iter().map(|&mu| provider.snapshot(mu)).collect();
    let model = TsiCellModel::new(nodes, snaps, transforms)?;
    cell.degree = degree;
    cell.model = Some(CellModel::Tsi(model));
    cell.training_error = Some(report.final_training_error);
    cell.error_history.push((degree, report.final_training_error));
    cell.converged = report.final_training_error <= NOISE_FLOOR;
    Ok(())
}

fn fit_unfitted(
    partition: &mut Partition,
    provider: &dyn SnapshotProvider,
    cfg: &AdaptConfig,
) -> Result<()> {
    for cell in &mut partition.cells {
        if cell.model.is_none() {
            fit_cell_ramp(cell, provider, cfg)?;
        }
    }
    Ok(())
}

/// Iteratively refine the cell with the largest training error, choosing h
/// or p by [`hp_decide`], until the tolerance or the snapshot budget is hit.
pub fn adapt(
    provider: &dyn SnapshotProvider,
    domain: (f64, f64),
    cfg: &AdaptConfig,
) -> Result<AdaptOutcome> {
    if cfg.budget < 2 {
        return Err(TsiError::InvalidConfig("budget below two snapshots".into()));
    }
    let counting = CountingProvider::new(provider);
    let mut partition = Partition::root(domain, cfg.initial_degree);
    fit_unfitted(&mut partition, &counting, cfg)?;
    let mut converged = false;
    for _ in 0..cfg.max_rounds {
        let Some((idx, eps)) = partition.max_error_cell() else {
            converged = true;
            break;
        };
        if eps <= cfg.target_tol {
            converged = true;
            break;
        }
        if counting.unique_queries() >= cfg.budget {
            break;
        }
        let cell = &partition.cells[idx];
        match hp_decide(&cell.error_history, cell.degree)? {
            Refinement::P => {
                let degree = cell.degree + 1;
                fit_cell_at_degree(&mut partition.cells[idx], degree, &counting, cfg)?;
            }
            Refinement::H => {
                partition.split_with_grading(idx);
                fit_unfitted(&mut partition, &counting, cfg)?;
            }
        }
        debug_assert!(partition.check_invariants().is_ok());
    }
    Ok(AdaptOutcome {
        partition,
        converged,
        snapshots_used: counting.unique_queries(),
    })
}

/// Configuration of the theoretical graded-dyadic schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Finest level L.
    pub max_level: u32,
    /// Minimal level of any cell.
    pub min_level: u32,
    /// Degree scaling: `n_T = ceil(b L / (level + 1))`.
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Derivative-bound constant C.
    pub c_bound: f64,
    /// Parameter of the shock topology change the mesh refines toward.
    pub mu_bar: f64,
}

impl ScheduleConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(TsiError::InvalidSchedule(format!("alpha {} not in [0,1)", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(TsiError::InvalidSchedule(format!("beta {} not in [0,1]", self.beta)));
        }
        if self.b <= self.beta {
            return Err(TsiError::InvalidSchedule(format!(
                "b {} must exceed beta {}",
                self.b, self.beta
            )));
        }
        if self.alpha * (self.min_level as f64 + 1.0) < self.c_bound.log2() {
            return Err(TsiError::InvalidSchedule(
                "alpha (min_level + 1) below log2 C".into(),
            ));
        }
        if self.max_level < self.min_level {
            return Err(TsiError::InvalidSchedule("max level below min level".into()));
        }
        Ok(())
    }
}

/// Graded dyadic mesh refined toward `mu_bar` with finest level L: cells at
/// level `>= L - 1` use a piecewise-constant approximation at the cell
/// midpoint, all other cells get degree `ceil(b L / (level + 1))` with
/// Chebyshev nodes. Models are left unfitted.
pub fn theoretical_schedule(cfg: &ScheduleConfig, domain: (f64, f64)) -> Result<Partition> {
    cfg.validate()?;
    let (a, b) = domain;
    if cfg.mu_bar < a || cfg.mu_bar > b {
        return Err(TsiError::MuBarOutsideDomain { mu_bar: cfg.mu_bar, a, b });
    }
    let mut partition = Partition::root(domain, 1);
    // uniform start at the minimal level
    for _ in 0..cfg.min_level {
        for idx in (0..partition.cells.len()).rev() {
            partition.split_cell(idx);
        }
    }
    // grade toward mu_bar
    loop {
        let idx = partition.locate(cfg.mu_bar)?;
        if partition.cells[idx].level >= cfg.max_level {
            break;
        }
        partition.split_with_grading(idx);
    }
    for cell in &mut partition.cells {
        if cell.level >= cfg.max_level.saturating_sub(1) {
            cell.mode = CellMode::PiecewiseConstant;
            cell.degree = 0;
        } else {
            cell.mode = CellMode::Tsi;
            cell.degree = ((cfg.b * cfg.max_level as f64) / (cell.level as f64 + 1.0)).ceil()
                as usize;
        }
        cell.model = None;
    }
    partition.check_invariants()?;
    Ok(partition)
}

/// Fit every unfitted cell of a schedule: constant cells snapshot the cell
/// midpoint, TSI cells run the localized transform fit at their degree.
pub fn fit_partition(
    partition: &mut Partition,
    provider: &dyn SnapshotProvider,
    fit: &FitConfig,
) -> Result<()> {
    for cell in &mut partition.cells {
        if cell.model.is_some() {
            continue;
        }
        match cell.mode {
            CellMode::PiecewiseConstant => {
                let mu_t = 0.5 * (cell.interval.0 + cell.interval.1);
                cell.model = Some(CellModel::Constant {
                    mu_t,
                    snapshot: provider.snapshot(mu_t),
                });
            }
            CellMode::Tsi => {
                let nodes =
                    chebyshev_nodes(cell.degree + 1, cell.interval.0, cell.interval.1);
                let (transforms, report) = fit_localized(provider, &nodes, fit)?;
                let snaps: Vec<SampledField> =
                    nodes.nodes().iter().map(|&mu| provider.snapshot(mu)).collect();
                cell.model = Some(CellModel::Tsi(TsiCellModel::new(nodes, snaps, transforms)?));
                cell.training_error = Some(report.final_training_error);
                cell.error_history.push((cell.degree, report.final_training_error));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid1D;

    #[test]
    fn hp_decide_formula_cases() {
        // ratio 0.5 at n_T = 4: m_T = 1 + ln 2 / ln(3/2) ~ 2.71 -> h
        let hist = vec![(2, 1.0), (3, 0.5)];
        assert_eq!(hp_decide(&hist, 4).unwrap(), Refinement::H);
        // ratio at n_T = 3 with eps(2)/eps(1) = 0.9: m_T = 1 + 0.152 -> h
        let hist = vec![(1, 1.0), (2, 0.9)];
        assert_eq!(hp_decide(&hist, 3).unwrap(), Refinement::H);
        // ratio engineered to give m_T = 11 at n_T = 5 -> p
        let ratio = (4.0f64 / 3.0).powi(-10);
        let hist = vec![(3, 1.0), (4, ratio)];
        assert_eq!(hp_decide(&hist, 5).unwrap(), Refinement::P);
        // degenerate histories h-refine
        assert_eq!(hp_decide(&[], 1).unwrap(), Refinement::H);
        assert_eq!(hp_decide(&[(1, 0.5)], 2).unwrap(), Refinement::H);
        // nonpositive error is an error
        assert!(hp_decide(&[(2, 0.0), (3, 0.5)], 4).is_err());
    }

    #[test]
    fn split_with_grading_cascades() {
        let mut p = Partition::root((0.0, 1.0), 1);
        p.split_with_grading(0);
        p.split_with_grading(0);
        p.split_with_grading(0);
        p.check_invariants().unwrap();
        let levels: Vec<u32> = p.cells.iter().map(|c| c.level).collect();
        assert_eq!(levels, vec![3, 3, 2, 1]);
    }

    #[test]
    fn locate_resolves_boundaries_left() {
        let mut p = Partition::root((0.0, 1.0), 1);
        p.split_with_grading(0);
        assert_eq!(p.locate(0.0).unwrap(), 0);
        assert_eq!(p.locate(0.5).unwrap(), 0);
        assert_eq!(p.locate(0.50001).unwrap(), 1);
        assert_eq!(p.locate(1.0).unwrap(), 1);
        assert!(p.locate(1.5).is_err());
    }

    #[test]
    fn theoretical_schedule_levels_toward_left_endpoint() {
        let cfg = ScheduleConfig {
            max_level: 3,
            min_level: 1,
            b: 2.0,
            alpha: 0.5,
            beta: 0.5,
            c_bound: 1.0,
            mu_bar: 0.0,
        };
        let p = theoretical_schedule(&cfg, (0.0, 1.0)).unwrap();
        let levels: Vec<u32> = p.cells.iter().map(|c| c.level).collect();
        assert_eq!(levels, vec![3, 3, 2, 1]);
        assert_eq!(p.cells[0].mode, CellMode::PiecewiseConstant);
        assert_eq!(p.cells[1].mode, CellMode::PiecewiseConstant);
        assert_eq!(p.cells[2].mode, CellMode::PiecewiseConstant);
        assert_eq!(p.cells[3].mode, CellMode::Tsi);
        // n_T = ceil(bL/(l+1)) = ceil(6/2) = 3 on the level-1 cell
        assert_eq!(p.cells[3].degree, 3);
        // degree formula example: L = 4, level 2, b = 2 -> ceil(8/3) = 3
        let cfg = ScheduleConfig { max_level: 4, ..cfg };
        let p = theoretical_schedule(&cfg, (0.0, 1.0)).unwrap();
        let cell = p.cells.iter().find(|c| c.level == 2).unwrap();
        assert_eq!(cell.degree, 3);

        let bad = ScheduleConfig { mu_bar: 2.0, ..cfg };
        assert!(theoretical_schedule(&bad, (0.0, 1.0)).is_err());
    }

    #[test]
    fn schedule_satisfies_level_distance_lemma() {
        for max_level in 2..=6u32 {
            let cfg = ScheduleConfig {
                max_level,
                min_level: 1,
                b: 1.5,
                alpha: 0.5,
                beta: 0.5,
                c_bound: 1.0,
                mu_bar: 0.7,
            };
            let p = theoretical_schedule(&cfg, (0.0, 1.0)).unwrap();
            p.check_invariants().unwrap();
            let len = 1.0;
            for c in &p.cells {
                if c.level >= max_level {
                    continue;
                }
                let dist = if cfg.mu_bar < c.interval.0 {
                    c.interval.0 - cfg.mu_bar
                } else if cfg.mu_bar > c.interval.1 {
                    cfg.mu_bar - c.interval.1
                } else {
                    0.0
                };
                let bound = 0.5f64.powi(c.level as i32)
                    * (1.0 - 0.5f64.powi(max_level as i32 - c.level as i32 - 1) * 2.0)
                    * len;
                assert!(
                    dist >= bound - 1e-12,
                    "L={max_level} level {}: dist {dist} < bound {bound}",
                    c.level
                );
                // ratio bound on TSI cells
                if c.level + 1 < max_level {
                    let far = (c.interval.0 - cfg.mu_bar)
                        .abs()
                        .max((c.interval.1 - cfg.mu_bar).abs());
                    let near = (c.interval.0 - cfg.mu_bar)
                        .abs()
                        .min((c.interval.1 - cfg.mu_bar).abs());
                    assert!(far / near <= 3.0 + 1e-12, "ratio {}", far / near);
                }
            }
        }
    }

    #[test]
    fn adapt_smooth_family_pure_p() {
        // amplitude variation cannot be aligned away by transforms, so the
        // error history is the exponentially decaying interpolation error
        // and the decision formula keeps choosing p
        let grid = Grid1D::from_step(0.0, 1.0, 0.02).unwrap();
        let provider = move |mu: f64| {
            SampledField::from_fn(grid.clone(), move |x| (3.0 * x).sin() * mu.exp())
        };
        let cfg = AdaptConfig {
            target_tol: 1e-6,
            budget: 200,
            initial_degree: 3,
            max_rounds: 20,
            ..AdaptConfig::default()
        };
        let out = adapt(&provider, (0.0, 1.0), &cfg).unwrap();
        assert!(out.converged);
        assert_eq!(out.partition.cells.len(), 1, "pure p-refinement expected");
        assert!(out.partition.cells[0].error_history.len() >= 2);
    }

    #[test]
    fn adapt_zero_family_stops_immediately() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.05).unwrap();
        let provider = move |_mu: f64| SampledField::constant(grid.clone(), 0.0);
        let cfg = AdaptConfig { target_tol: 0.01, ..AdaptConfig::default() };
        let out = adapt(&provider, (0.0, 1.0), &cfg).unwrap();
        assert!(out.converged);
        assert_eq!(out.partition.cells.len(), 1);
        assert!(out.partition.cells[0].training_error.unwrap() <= 1e-12);
    }

    #[test]
    fn adapt_refines_toward_collision_time() {
        // two-shock family along t at fixed mu: topology change at t* = 2/mu
        let mu = 1.5f64;
        let grid = Grid1D::from_step(-1.0, 2.5, 0.01).unwrap();
        let ic = crate::burgers::PiecewiseConstantIC::two_shocks(mu);
        let provider = move |t: f64| {
            crate::burgers::solve_front_tracking(&ic, t)
                .expect("front tracking")
                .sample(&grid)
        };
        let cfg = AdaptConfig {
            target_tol: 0.02,
            budget: 120,
            initial_degree: 1,
            fit: FitConfig { max_iters: 200, ..FitConfig::default() },
            max_rounds: 60,
        };
        let out = adapt(&provider, (0.0, 2.0), &cfg).unwrap();
        assert!(out.converged, "did not converge: {} cells", out.partition.cells.len());
        let t_star = 2.0 / mu;
        let finest = out.partition.cells.iter().map(|c| c.level).max().unwrap();
        let idx = out.partition.locate(t_star).unwrap();
        let near: Vec<&Cell> = out.partition.cells
            [idx.saturating_sub(1)..=(idx + 1).min(out.partition.cells.len() - 1)]
            .iter()
            .collect();
        assert!(
            near.iter().any(|c| c.level >= finest.saturating_sub(1)),
            "most refined cells should sit at the collision time"
        );
        // evaluation works everywhere, boundary points resolve left
        for t in [0.0, 0.5, t_star, 2.0] {
            out.partition.evaluate(t).unwrap();
        }
    }

    #[test]
    fn evaluate_partition_constant_cells() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.05).unwrap();
        let provider = move |mu: f64| SampledField::constant(grid.clone(), mu);
        let mut p = Partition::root((0.0, 1.0), 1);
        p.split_with_grading(0);
        for c in &mut p.cells {
            c.mode = CellMode::PiecewiseConstant;
        }
        fit_partition(&mut p, &provider, &FitConfig::default()).unwrap();
        // constant cells return the midpoint snapshot regardless of mu
        let f = p.evaluate(0.1).unwrap();
        assert!((f.values()[0] - 0.25).abs() < 1e-12);
        let f = p.evaluate(0.49).unwrap();
        assert!((f.values()[0] - 0.25).abs() < 1e-12);
        // Lipschitz family: error bounded by C_L * cell width
        for mu in [0.05, 0.3, 0.6, 0.95] {
            let err = p
                .evaluate(mu)
                .unwrap()
                .l1_distance(&provider(mu))
                .unwrap();
            assert!(err <= 0.5 * 1.0 + 1e-12, "err {err}");
        }
    }

    #[test]
    fn active_points_are_the_containing_cells_nodes() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.02).unwrap();
        let provider = move |mu: f64| SampledField::constant(grid.clone(), mu * mu);
        let cfg = AdaptConfig { target_tol: 1e-4, budget: 40, ..AdaptConfig::default() };
        let out = adapt(&provider, (0.0, 1.0), &cfg).unwrap();
        for mu in [0.1, 0.52, 0.9] {
            let idx = out.partition.locate(mu).unwrap();
            let Some(CellModel::Tsi(m)) = &out.partition.cells[idx].model else {
                panic!("expected a fitted TSI cell")
            };
            assert_eq!(out.partition.active_points(mu).unwrap(), m.nodes().nodes());
        }
    }

    #[test]
    fn adapt_flags_budget_exhaustion() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.02).unwrap();
        let provider = move |mu: f64| {
            SampledField::from_fn(grid.clone(), move |x| if x >= mu { 1.0 } else { 0.0 })
        };
        // impossible tolerance with a tiny budget
        let cfg = AdaptConfig { target_tol: 1e-9, budget: 6, ..AdaptConfig::default() };
        let out = adapt(&provider, (0.3, 0.7), &cfg).unwrap();
        assert!(!out.converged);
        assert!(out.partition.evaluate(0.5).is_ok());
    }

    #[test]
    fn schedule_snapshot_count_scales_like_l_log_l() {
        for max_level in 2..=8u32 {
            let cfg = ScheduleConfig {
                max_level,
                min_level: 1,
                b: 1.5,
                alpha: 0.5,
                beta: 0.5,
                c_bound: 1.0,
                mu_bar: 0.7,
            };
            let p = theoretical_schedule(&cfg, (0.0, 1.0)).unwrap();
            let n = p.snapshot_count() as f64;
            let l = max_level as f64;
            assert!(
                n <= 6.0 * l * (l + 1.0).log2() + 8.0,
                "L = {max_level}: n = {n}"
            );
        }
    }

    #[test]
    fn partition_serializes() {
        let mut p = Partition::root((0.0, 1.0), 2);
        p.split_with_grading(0);
        let json = serde_json::to_string(&p).unwrap();
        let back: Partition = serde_json::from_str(&json).unwrap();
        assert_eq!(back.cells.len(), p.cells.len());
    }
}
