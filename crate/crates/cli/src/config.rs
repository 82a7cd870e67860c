//! Experiment configuration: defaults per experiment, a flat `key = value`
//! config-file format, and CLI overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    TwoShocks,
    ShockRwave,
    RateStudy,
    NwidthDemo,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "two_shocks" => Self::TwoShocks,
            "shock_rwave" => Self::ShockRwave,
            "rate_study" => Self::RateStudy,
            "nwidth_demo" => Self::NwidthDemo,
            other => bail!("unknown experiment '{other}'"),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::TwoShocks => "two_shocks",
            Self::ShockRwave => "shock_rwave",
            Self::RateStudy => "rate_study",
            Self::NwidthDemo => "nwidth_demo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Fine,
    Coarse,
}

impl Quadrature {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "fine" => Self::Fine,
            "coarse" => Self::Coarse,
            other => bail!("unknown quadrature '{other}' (expected fine or coarse)"),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fine => "fine",
            Self::Coarse => "coarse",
        }
    }
}

/// Full configuration of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub out_dir: PathBuf,
    pub x_min: f64,
    pub x_max: f64,
    pub h: f64,
    pub t_range: (f64, f64),
    pub mu_range: (f64, f64),
    /// Second-axis (mu) TSI degree.
    pub mu_degree: usize,
    /// Initial first-axis (t) TSI degree for the hp refinement.
    pub t_degree: usize,
    pub transform_degree_x: usize,
    pub transform_degree_t: usize,
    pub quadrature: Quadrature,
    pub coarse_points: usize,
    pub smoothing_width: f64,
    /// Refinement stop threshold on the training error.
    pub stop_tol: f64,
    /// Snapshot budget per first-axis refinement.
    pub budget: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub step_size: f64,
    /// Budgets swept by the rate study.
    pub rate_budgets: Vec<usize>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment,
            out_dir: PathBuf::from("out"),
            x_min: -1.0,
            x_max: 2.5,
            h: 0.01,
            t_range: (0.0, 2.0),
            mu_range: (1.3, 1.6),
            mu_degree: 2,
            t_degree: 1,
            transform_degree_x: 1,
            transform_degree_t: 1,
            quadrature: Quadrature::Fine,
            coarse_points: 3,
            smoothing_width: 0.02,
            stop_tol: 0.02,
            budget: 120,
            seed: 0,
            max_iters: 300,
            step_size: 0.05,
            rate_budgets: vec![5, 9, 14, 24, 40, 70],
        };
        match experiment {
            ExperimentKind::TwoShocks => {}
            ExperimentKind::RateStudy => {
                cfg.quadrature = Quadrature::Coarse;
            }
            ExperimentKind::ShockRwave => {
                cfg.mu_range = (-0.5, 0.5);
                cfg.mu_degree = 2;
                cfg.t_degree = 3;
                cfg.transform_degree_x = 2;
                cfg.transform_degree_t = 2;
                cfg.quadrature = Quadrature::Coarse;
            }
            ExperimentKind::NwidthDemo => {
                cfg.x_min = 0.0;
                cfg.x_max = 1.0;
                cfg.mu_range = (0.3, 0.7);
            }
        }
        cfg
    }

    /// Parse a flat `key = value` file (one pair per line, `#` comments).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected 'key = value'", path.display(), lineno + 1);
            };
            self.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = |v: &str| -> Result<f64> {
            v.parse::<f64>().with_context(|| format!("bad number '{v}'"))
        };
        let u = |v: &str| -> Result<usize> {
            v.parse::<usize>().with_context(|| format!("bad integer '{v}'"))
        };
        match key {
            "experiment" => self.experiment = ExperimentKind::parse(value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "x_min" => self.x_min = f(value)?,
            "x_max" => self.x_max = f(value)?,
            "h" => self.h = f(value)?,
            "t_min" => self.t_range.0 = f(value)?,
            "t_max" => self.t_range.1 = f(value)?,
            "mu_min" => self.mu_range.0 = f(value)?,
            "mu_max" => self.mu_range.1 = f(value)?,
            "mu_degree" => self.mu_degree = u(value)?,
            "t_degree" => self.t_degree = u(value)?,
            "transform_degree_x" => self.transform_degree_x = u(value)?,
            "transform_degree_t" => self.transform_degree_t = u(value)?,
            "quadrature" => self.quadrature = Quadrature::parse(value)?,
            "coarse_points" => self.coarse_points = u(value)?,
            "smoothing_width" => self.smoothing_width = f(value)?,
            "tol" => self.stop_tol = f(value)?,
            "budget" => self.budget = u(value)?,
            "seed" => self.seed = value.parse().with_context(|| format!("bad seed '{value}'"))?,
            "max_iters" => self.max_iters = u(value)?,
            "step_size" => self.step_size = f(value)?,
            "rate_budgets" => {
                self.rate_budgets = value
                    .split(',')
                    .map(|v| u(v.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.h <= 0.0 {
            bail!("mesh size h must be positive");
        }
        if self.x_min >= self.x_max {
            bail!("empty spatial domain");
        }
        if self.mu_range.0 >= self.mu_range.1 || self.t_range.0 >= self.t_range.1 {
            bail!("empty parameter range");
        }
        if self.rate_budgets.is_empty() {
            bail!("rate study needs at least one budget");
        }
        Ok(())
    }
}
