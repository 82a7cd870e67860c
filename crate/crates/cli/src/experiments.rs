//! The experiment runner: builds snapshot providers from the Burgers
//! front-tracking oracle, fits the configured models, and writes the CSV
//! outputs. All files are written at the end of a run, so a failed fit
//! leaves no partial outputs.

use std::path::PathBuf;

use anyhow::{Context, Result};

use tsi_core::burgers::{solve_front_tracking, PiecewiseConstantIC};
use tsi_core::field::{Grid1D, SampledField};
use tsi_core::fit::{fit_localized, FitConfig, QuadratureMode};
use tsi_core::hp::AdaptConfig;
use tsi_core::interp::{chebyshev_nodes, interpolate_fields};
use tsi_core::tensor::{
    evaluate_componentwise, fit_componentwise, ComponentModel, CountingProvider2, TensorConfig,
};
use tsi_core::tsi::TsiCellModel;

use crate::config::{ExperimentConfig, ExperimentKind, Quadrature};
use crate::csv::{self, ResultsRow};

/// Everything a run produced; files are listed after they are written.
pub struct RunOutput {
    pub row: ResultsRow,
    pub files: Vec<PathBuf>,
    pub model: Option<ComponentModel>,
    pub rate_rows: Vec<(usize, f64)>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::TwoShocks | ExperimentKind::ShockRwave => run_componentwise(cfg),
        ExperimentKind::RateStudy => run_rate_study(cfg),
        ExperimentKind::NwidthDemo => run_nwidth(cfg),
    }
}

fn spatial_grid(cfg: &ExperimentConfig) -> Result<Grid1D> {
    Ok(Grid1D::from_step(cfg.x_min, cfg.x_max, cfg.h)?)
}

fn initial_condition(kind: ExperimentKind, mu: f64) -> PiecewiseConstantIC {
    match kind {
        ExperimentKind::ShockRwave => PiecewiseConstantIC::shock_rwave(mu),
        _ => PiecewiseConstantIC::two_shocks(mu),
    }
}

/// Snapshot provider over `(t, mu)`; the time is the first (hp) axis.
fn oracle(kind: ExperimentKind, grid: Grid1D) -> impl Fn(f64, f64) -> SampledField + Sync {
    move |t: f64, mu: f64| {
        let ic = initial_condition(kind, mu);
        solve_front_tracking(&ic, t)
            .expect("front tracking of piecewise-constant data")
            .sample(&grid)
    }
}

/// Time of the first wave interaction, used for figure annotations.
pub fn collision_curve(kind: ExperimentKind, mu: f64) -> f64 {
    match kind {
        ExperimentKind::ShockRwave => 2.0 / (1.5 - mu),
        _ => 2.0 / mu,
    }
}

fn fit_config(cfg: &ExperimentConfig) -> FitConfig {
    FitConfig {
        smoothing_width: cfg.smoothing_width,
        max_iters: cfg.max_iters,
        step_size: cfg.step_size,
        transform_degree: cfg.transform_degree_x,
        coarse_points: cfg.coarse_points,
        quadrature_mode: match cfg.quadrature {
            Quadrature::Fine => QuadratureMode::Fine,
            Quadrature::Coarse => QuadratureMode::Coarse,
        },
        seed: cfg.seed,
        ..FitConfig::default()
    }
}

fn tensor_config(cfg: &ExperimentConfig, budget: usize) -> TensorConfig {
    let (t0, t1) = cfg.t_range;
    TensorConfig {
        axis2_degree: cfg.mu_degree,
        adaptive_axis1: true,
        axis1_adapt: AdaptConfig {
            target_tol: cfg.stop_tol,
            budget,
            initial_degree: cfg.t_degree,
            fit: fit_config(cfg),
            max_rounds: 200,
        },
        axis1_degree: cfg.t_degree,
        stage2_fit: fit_config(cfg),
        transform_param_degree: cfg.transform_degree_t,
        axis1_fine_points: ((t1 - t0) / cfg.h).round() as usize + 1,
        warp: None,
    }
}

/// Greedy points of maximal distance to the anchors (then to each other).
fn max_distance_points(range: (f64, f64), anchors: &[f64], count: usize) -> Vec<f64> {
    let mut taken: Vec<f64> = anchors.to_vec();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best = range.0;
        let mut best_d = -1.0;
        for i in 0..=1000 {
            let x = range.0 + (range.1 - range.0) * i as f64 / 1000.0;
            let d = taken
                .iter()
                .map(|a| (x - a).abs())
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = x;
            }
        }
        out.push(best);
        taken.push(best);
    }
    out
}

/// The four reconstruction parameters plotted by the solution CSV: two values
/// per axis, maximally distant from the interpolation nodes.
fn sample_pairs(model: &ComponentModel, cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    let mu_nodes = model.axis2_nodes.nodes().to_vec();
    let mut t_nodes = Vec::new();
    for s1 in &model.stage1_at_nodes {
        t_nodes.extend(s1.reconstruction_nodes());
    }
    let mus = max_distance_points(cfg.mu_range, &mu_nodes, 2);
    let ts = max_distance_points(cfg.t_range, &t_nodes, 2);
    let mut out = Vec::with_capacity(4);
    for &mu in &mus {
        for &t in &ts {
            out.push((t, mu));
        }
    }
    out
}

struct FittedRun {
    model: ComponentModel,
    snapshots_tsi: usize,
    snapshots_all: usize,
    queried: Vec<(f64, f64)>,
    error_sample: f64,
    /// `(t, mu)` pairs of the plotted reconstructions.
    pairs: Vec<(f64, f64)>,
    solution_columns: Vec<(Vec<f64>, Vec<f64>)>,
}

fn fit_and_sample(
    cfg: &ExperimentConfig,
    budget: usize,
    fixed_pairs: Option<&[(f64, f64)]>,
) -> Result<FittedRun> {
    let grid = spatial_grid(cfg)?;
    let truth_fn = oracle(cfg.experiment, grid.clone());
    let counting = CountingProvider2::new(&truth_fn);
    let tensor_cfg = tensor_config(cfg, budget);
    let model = fit_componentwise(&counting, cfg.t_range, cfg.mu_range, &tensor_cfg)?;
    let snapshots_all = counting.unique_queries();
    let queried = counting.queried_params();
    let snapshots_tsi: usize =
        model.stage1_at_nodes.iter().map(|s| s.snapshot_count()).sum();

    let pairs: Vec<(f64, f64)> = match fixed_pairs {
        Some(p) => p.to_vec(),
        None => sample_pairs(&model, cfg),
    };
    let mut error_sample = 0.0f64;
    let mut solution_columns = Vec::with_capacity(pairs.len());
    for &(t, mu) in &pairs {
        let truth = truth_fn(t, mu);
        let approx = evaluate_componentwise(&model, t, mu)?;
        error_sample = error_sample.max(approx.l1_distance(&truth)?);
        solution_columns.push((truth.values().to_vec(), approx.values().to_vec()));
    }
    Ok(FittedRun {
        model,
        snapshots_tsi,
        snapshots_all,
        queried,
        error_sample,
        pairs,
        solution_columns,
    })
}

fn run_componentwise(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let grid = spatial_grid(cfg)?;
    let fitted = fit_and_sample(cfg, cfg.budget, None)?;
    let report = fitted
        .model
        .stage2_report
        .as_ref()
        .expect("component fit stores a report");

    let label = format!("{}_{}", cfg.experiment.name(), cfg.quadrature.name());
    let row = ResultsRow {
        experiment: label,
        snapshots_tsi: fitted.snapshots_tsi,
        snapshots_all: fitted.snapshots_all,
        error_train: report.final_training_error,
        error_sample: fitted.error_sample,
    };

    // parameter rows: reconstruction nodes, training-only queries, the
    // plotted sample parameters, and the collision-time annotations
    let mut node_rows: Vec<(f64, f64)> = Vec::new();
    for (s, &mu2) in fitted.model.axis2_nodes.nodes().iter().enumerate() {
        for t in fitted.model.stage1_at_nodes[s].reconstruction_nodes() {
            node_rows.push((mu2, t));
        }
    }
    let is_node = |t: f64, mu: f64| {
        node_rows
            .iter()
            .any(|&(nm, nt)| (nm - mu).abs() < 1e-12 && (nt - t).abs() < 1e-12)
    };
    let mut rows: Vec<(f64, f64, &str)> = Vec::new();
    for &(mu, t) in &node_rows {
        rows.push((mu, t, "nodes"));
    }
    for &(t, mu) in &fitted.queried {
        if !is_node(t, mu) {
            rows.push((mu, t, "train"));
        }
    }
    for &(t, mu) in &fitted.pairs {
        rows.push((mu, t, "experiment"));
    }
    if cfg.experiment == ExperimentKind::TwoShocks {
        for &mu in fitted.model.axis2_nodes.nodes() {
            rows.push((mu, 2.0 / mu, "collision"));
        }
    }

    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let mut files = Vec::new();

    let solution_path = cfg.out_dir.join("solution.csv");
    let xs: Vec<f64> = grid.nodes().collect();
    std::fs::write(&solution_path, csv::solution_csv(&xs, &fitted.solution_columns))?;
    files.push(solution_path);

    let params_path = cfg.out_dir.join("params.csv");
    std::fs::write(&params_path, csv::params_csv(&rows))?;
    files.push(params_path);

    let model_path = cfg.out_dir.join("model.json");
    std::fs::write(&model_path, serde_json::to_string(&fitted.model)?)?;
    files.push(model_path);

    let results_path = cfg.out_dir.join("results.csv");
    csv::append_results(&results_path, &row)?;
    files.push(results_path);

    Ok(RunOutput { row, files, model: Some(fitted.model), rate_rows: Vec::new() })
}

fn run_rate_study(cfg: &ExperimentConfig) -> Result<RunOutput> {
    // fixed sample parameters so errors are comparable across budgets; a
    // denser time sampling makes the sweep sensitive to every refinement
    let mu_nodes = chebyshev_nodes(cfg.mu_degree + 1, cfg.mu_range.0, cfg.mu_range.1);
    let mus = max_distance_points(cfg.mu_range, mu_nodes.nodes(), 2);
    let (t0, t1) = cfg.t_range;
    let mut pairs = Vec::new();
    for &mu in &mus {
        for i in 0..8 {
            let t = t0 + (t1 - t0) * (i as f64 + 0.5) / 8.0;
            pairs.push((t, mu));
        }
    }

    // a tolerance far below the snapshot floor keeps the budget binding,
    // so the sweep exposes error versus snapshot count
    let mut rate_cfg = cfg.clone();
    rate_cfg.stop_tol = (cfg.stop_tol / 5.0).min(0.004);
    let mut rate_rows: Vec<(usize, f64)> = Vec::new();
    let mut last: Option<FittedRun> = None;
    for &budget in &cfg.rate_budgets {
        let fitted = fit_and_sample(&rate_cfg, budget, Some(&pairs))?;
        rate_rows.push((fitted.snapshots_all, fitted.error_sample));
        last = Some(fitted);
    }
    let fitted = last.expect("at least one budget");
    let report = fitted.model.stage2_report.as_ref().expect("report");
    let row = ResultsRow {
        experiment: format!("rate_study_{}", cfg.quadrature.name()),
        snapshots_tsi: fitted.snapshots_tsi,
        snapshots_all: fitted.snapshots_all,
        error_train: report.final_training_error,
        error_sample: fitted.error_sample,
    };

    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let mut files = Vec::new();
    let rate_path = cfg.out_dir.join("rate.csv");
    std::fs::write(&rate_path, csv::rate_csv(&rate_rows))?;
    files.push(rate_path);
    let results_path = cfg.out_dir.join("results.csv");
    csv::append_results(&results_path, &row)?;
    files.push(results_path);

    Ok(RunOutput { row, files, model: Some(fitted.model), rate_rows })
}

/// Moving-step family: plain interpolation saturates at first order in the
/// snapshot count while the TSI with fitted transforms reaches grid accuracy.
fn run_nwidth(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let grid = spatial_grid(cfg)?;
    let (a, b) = cfg.mu_range;
    let provider = {
        let grid = grid.clone();
        move |mu: f64| {
            SampledField::from_fn(grid.clone(), move |x| if x >= mu { 1.0 } else { 0.0 })
        }
    };
    let test_mus: Vec<f64> = (0..25)
        .map(|i| a + (b - a) * (i as f64 + 0.5) / 25.0)
        .collect();

    // mean L1 error over the test parameters: the sup is noisier in n while
    // the barrier statement concerns the decay rate, not the constant
    let mut plain_rows: Vec<(usize, f64)> = Vec::new();
    for n in 2..=16 {
        let nodes = chebyshev_nodes(n, a, b);
        let snaps: Vec<SampledField> = nodes.nodes().iter().map(|&m| provider(m)).collect();
        let mut acc = 0.0f64;
        for &mu in &test_mus {
            let approx = interpolate_fields(&snaps, &nodes, mu)?;
            acc += approx.l1_distance(&provider(mu))?;
        }
        plain_rows.push((n, acc / test_mus.len() as f64));
    }

    let mut tsi_rows: Vec<(usize, f64)> = Vec::new();
    let mut final_report = None;
    for n in [2usize, 4, 8] {
        let nodes = chebyshev_nodes(n, a, b);
        let fcfg = fit_config(cfg);
        let (transforms, report) = fit_localized(&provider, &nodes, &fcfg)?;
        let snaps: Vec<SampledField> = nodes.nodes().iter().map(|&m| provider(m)).collect();
        let model = TsiCellModel::new(nodes, snaps, transforms)?;
        let mut acc = 0.0f64;
        for &mu in &test_mus {
            acc += model.tsi_evaluate(mu)?.l1_distance(&provider(mu))?;
        }
        tsi_rows.push((n, acc / test_mus.len() as f64));
        final_report = Some(report);
    }
    let report = final_report.expect("tsi fits ran");
    let tsi_final = tsi_rows.last().expect("tsi rows").1;

    let row = ResultsRow {
        experiment: "nwidth_demo".into(),
        snapshots_tsi: 8,
        snapshots_all: 8 + report.per_param_errors.len(),
        error_train: report.final_training_error,
        error_sample: tsi_final,
    };

    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let mut files = Vec::new();
    let plain_path = cfg.out_dir.join("nwidth_plain.csv");
    std::fs::write(&plain_path, csv::rate_csv(&plain_rows))?;
    files.push(plain_path);
    let tsi_path = cfg.out_dir.join("nwidth_tsi.csv");
    std::fs::write(&tsi_path, csv::rate_csv(&tsi_rows))?;
    files.push(tsi_path);
    let results_path = cfg.out_dir.join("results.csv");
    csv::append_results(&results_path, &row)?;
    files.push(results_path);

    Ok(RunOutput { row, files, model: None, rate_rows: plain_rows })
}
