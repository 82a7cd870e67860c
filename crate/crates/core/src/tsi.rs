//! Single-cell transformed snapshot interpolation: snapshots at the cell's
//! interpolation nodes, pre-composed with the fitted spatial transforms and
//! combined with the Lagrange weights of the target parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsiError};
use crate::field::SampledField;
use crate::interp::NodeSet;
use crate::transform::TransformSet;

/// One cell's TSI model: nodes, one snapshot per node, and the transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsiCellModel {
    nodes: NodeSet,
    snapshots: Vec<SampledField>,
    transforms: TransformSet,
}

impl TsiCellModel {
    pub fn new(
        nodes: NodeSet,
        snapshots: Vec<SampledField>,
        transforms: TransformSet,
    ) -> Result<Self> {
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
        if transforms.source_nodes() != &nodes {
            return Err(TsiError::InvalidNodes(
                "transform source nodes differ from the cell nodes".into(),
            ));
        }
        Ok(Self { nodes, snapshots, transforms })
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn snapshots(&self) -> &[SampledField] {
        &self.snapshots
    }

    pub fn transforms(&self) -> &TransformSet {
        &self.transforms
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn interval(&self) -> (f64, f64) {
        self.nodes.interval()
    }

    /// The same model with mollified snapshots (transforms unchanged); the
    /// optimizer works on this view so jumps have grid-visible gradients.
    pub fn mollified(&self, width: f64) -> TsiCellModel {
        TsiCellModel {
            nodes: self.nodes.clone(),
            snapshots: self.snapshots.iter().map(|s| s.mollify(width)).collect(),
            transforms: self.transforms.clone(),
        }
    }

    /// Transformed snapshot `v_mu(x, eta) = u(phi(mu, eta)(x), eta)` on the grid.
    pub fn transformed_snapshot(&self, mu: f64, eta: f64) -> Result<SampledField> {
        let s = self
            .nodes
            .index_of(eta)
            .ok_or(TsiError::UnknownSourceNode(eta))?;
        Ok(self.transformed_snapshot_idx(mu, s))
    }

    pub(crate) fn transformed_snapshot_idx(&self, mu: f64, s: usize) -> SampledField {
        let prep = self.transforms.prepare(mu, s, &[]);
        let snap = &self.snapshots[s];
        SampledField::from_fn(snap.grid().clone(), |x| snap.evaluate(prep.x(x)))
    }

    /// TSI evaluation `sum_eta l_eta(mu) v_mu(., eta)` inside the cell.
    pub fn tsi_evaluate(&self, mu: f64) -> Result<SampledField> {
        let (a, b) = self.nodes.interval();
        if mu < a - 1e-12 * (b - a) || mu > b + 1e-12 * (b - a) {
            return Err(TsiError::OutsideCell { mu, a, b });
        }
        let coeffs = self.nodes.lagrange_coeffs(mu);
        let mut out = SampledField::constant(self.snapshots[0].grid().clone(), 0.0);
        for (s, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            out.axpy(c, &self.transformed_snapshot_idx(mu, s));
        }
        Ok(out)
    }

    /// Largest L1 reconstruction error over the given test parameters.
    pub fn worst_case_error(
        &self,
        truth: impl Fn(f64) -> SampledField,
        test_params: &[f64],
    ) -> Result<f64> {
        let mut worst = 0.0f64;
        for &mu in test_params {
            let err = self.tsi_evaluate(mu)?.l1_distance(&truth(mu))?;
            worst = worst.max(err);
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid1D;
    use crate::interp::{chebyshev_nodes, interpolate_fields};
    use crate::transform::TransformSet;

    fn step_field(grid: &Grid1D, pos: f64) -> SampledField {
        SampledField::from_fn(grid.clone(), |x| if x >= pos { 1.0 } else { 0.0 })
    }

    /// Exact aligning transforms for the moving-step family u = H(x - mu):
    /// phi(mu, eta)(x) = x - mu + eta, i.e. displacement eta - mu.
    fn shift_transforms(nodes: &NodeSet, interval: (f64, f64)) -> TransformSet {
        let mut t = TransformSet::identity(nodes.clone(), vec![], interval, 1);
        for s in 0..nodes.len() {
            for q in 0..nodes.len() {
                if q != s {
                    t.set_coeff(s, q, 0, 0, nodes.nodes()[s] - nodes.nodes()[q]);
                }
            }
        }
        t
    }

    #[test]
    fn node_reproduction_is_exact() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.01).unwrap();
        let nodes = chebyshev_nodes(3, 0.3, 0.7);
        let snaps: Vec<SampledField> =
            nodes.nodes().iter().map(|&mu| step_field(&grid, mu)).collect();
        let t = shift_transforms(&nodes, (0.0, 1.0));
        let model = TsiCellModel::new(nodes.clone(), snaps.clone(), t).unwrap();
        for (k, &mu) in nodes.nodes().iter().enumerate() {
            let got = model.tsi_evaluate(mu).unwrap();
            assert!(got.sup_distance(&snaps[k]).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn identity_transforms_reduce_to_plain_interpolation() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.02).unwrap();
        let nodes = chebyshev_nodes(4, 0.2, 0.8);
        let snaps: Vec<SampledField> = nodes
            .nodes()
            .iter()
            .map(|&mu| SampledField::from_fn(grid.clone(), move |x| (3.0 * x + mu).sin()))
            .collect();
        let t = TransformSet::identity(nodes.clone(), vec![], (0.0, 1.0), 2);
        let model = TsiCellModel::new(nodes.clone(), snaps.clone(), t).unwrap();
        for i in 0..20 {
            let mu = 0.2 + 0.6 * i as f64 / 19.0;
            let tsi = model.tsi_evaluate(mu).unwrap();
            let plain = interpolate_fields(&snaps, &nodes, mu).unwrap();
            assert!(tsi.sup_distance(&plain).unwrap() < 1e-12);
        }
    }

    #[test]
    fn transformed_snapshot_shifts_the_jump() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.01).unwrap();
        let nodes = NodeSet::custom(vec![0.2, 0.4], 0.2, 0.4).unwrap();
        // displacement (mu - eta) * 1.0 moves the jump left by mu - eta
        let mut t = TransformSet::identity(nodes.clone(), vec![], (0.0, 1.0), 1);
        t.set_coeff(0, 1, 0, 0, 0.2);
        t.set_coeff(1, 0, 0, 0, -0.2);
        let snaps = vec![step_field(&grid, 0.5), step_field(&grid, 0.5)];
        let model = TsiCellModel::new(nodes, snaps, t).unwrap();
        let v = model.transformed_snapshot(0.4, 0.2).unwrap();
        let want = step_field(&grid, 0.3);
        assert!(v.l1_distance(&want).unwrap() <= 2.0 * grid.h());
        assert!(model.transformed_snapshot(0.4, 0.3).is_err());
    }

    #[test]
    fn aligned_moving_step_is_grid_exact() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.01).unwrap();
        let nodes = chebyshev_nodes(3, 0.3, 0.7);
        let snaps: Vec<SampledField> =
            nodes.nodes().iter().map(|&mu| step_field(&grid, mu)).collect();
        let t = shift_transforms(&nodes, (0.0, 1.0));
        let model = TsiCellModel::new(nodes, snaps, t).unwrap();
        let truth = |mu: f64| step_field(&grid, mu);
        let test: Vec<f64> = (0..9).map(|i| 0.3 + 0.4 * i as f64 / 8.0).collect();
        let worst = model.worst_case_error(truth, &test).unwrap();
        assert!(worst <= 2.0 * grid.h(), "worst {worst}");
    }

    #[test]
    fn misaligned_steps_fail_badly() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.01).unwrap();
        let nodes = chebyshev_nodes(3, 0.3, 0.7);
        let snaps: Vec<SampledField> =
            nodes.nodes().iter().map(|&mu| step_field(&grid, mu)).collect();
        let t = TransformSet::identity(nodes.clone(), vec![], (0.0, 1.0), 1);
        let model = TsiCellModel::new(nodes, snaps, t).unwrap();
        let truth = |mu: f64| step_field(&grid, mu);
        // off-node parameters: the Lagrange mixture of misaligned steps
        let worst = model.worst_case_error(truth, &[0.41, 0.45, 0.59]).unwrap();
        assert!(worst >= 0.05, "worst {worst}");
    }

    #[test]
    fn evaluation_outside_cell_is_an_error() {
        let grid = Grid1D::from_step(0.0, 1.0, 0.05).unwrap();
        let nodes = chebyshev_nodes(2, 0.3, 0.7);
        let snaps = vec![step_field(&grid, 0.4), step_field(&grid, 0.6)];
        let t = TransformSet::identity(nodes.clone(), vec![], (0.0, 1.0), 1);
        let model = TsiCellModel::new(nodes, snaps, t).unwrap();
        assert!(model.tsi_evaluate(0.8).is_err());
        assert!(model.tsi_evaluate(0.5).is_ok());
    }

    #[test]
    fn perturbation_response_is_first_order() {
        // perturbing the transform coefficients by delta moves the output by
        // O(delta), with constant controlled by Lebesgue x TV x gamma
        let grid = Grid1D::from_step(0.0, 1.0, 0.01).unwrap();
        let nodes = chebyshev_nodes(3, 0.3, 0.7);
        let snaps: Vec<SampledField> = nodes
            .nodes()
            .iter()
            .map(|&mu| step_field(&grid, mu).mollify(0.02))
            .collect();
        let base_t = shift_transforms(&nodes, (0.0, 1.0));
        let base = TsiCellModel::new(nodes.clone(), snaps.clone(), base_t.clone()).unwrap();
        let mu = 0.52;
        let reference = base.tsi_evaluate(mu).unwrap();

        let lambda = crate::interp::lebesgue_constant(&nodes, 1000);
        let tv = snaps.iter().map(|s| s.total_variation()).fold(0.0, f64::max);
        let gamma = 1.0; // shifts preserve measure
        let c = lambda * tv * gamma;

        let mut logs = Vec::new();
        for &delta in &[1e-4, 1e-3, 1e-2] {
            let mut t = base_t.clone();
            for s in 0..nodes.len() {
                for q in 0..nodes.len() {
                    if q != s {
                        t.set_coeff(s, q, 0, 0, t.coeff(s, q, 0, 0) + delta);
                    }
                }
            }
            let pert = TsiCellModel::new(nodes.clone(), snaps.clone(), t).unwrap();
            let diff = pert.tsi_evaluate(mu).unwrap().l1_distance(&reference).unwrap();
            assert!(diff <= 2.0 * c * delta, "delta {delta}: diff {diff}");
            logs.push((delta.ln(), diff.ln()));
        }
        // log-log slope of the response, least squares
        let n = logs.len() as f64;
        let sx: f64 = logs.iter().map(|p| p.0).sum();
        let sy: f64 = logs.iter().map(|p| p.1).sum();
        let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope - 1.0).abs() <= 0.2, "slope {slope}");
    }
}
