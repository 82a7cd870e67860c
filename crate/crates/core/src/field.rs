//! Uniform-grid spatial fields: off-grid evaluation, L1 quadrature,
//! total variation and jump mollification.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsiError};

/// Uniform 1D spatial grid on `[x_min, x_max]` with `n_points` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(TsiError::InvalidGrid("non-finite bounds".into()));
        }
        if x_min >= x_max {
            return Err(TsiError::InvalidGrid(format!(
                "x_min {x_min} must be below x_max {x_max}"
            )));
        }
        if n_points < 2 {
            return Err(TsiError::InvalidGrid("need at least two nodes".into()));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    /// Grid with mesh size as close as possible to `h` (exact when
    /// `(x_max - x_min) / h` is integral).
    pub fn from_step(x_min: f64, x_max: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(TsiError::InvalidGrid(format!("invalid step {h}")));
        }
        let n = ((x_max - x_min) / h).round() as usize + 1;
        Self::new(x_min, x_max, n.max(2))
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Mesh size `(x_max - x_min) / (n_points - 1)`.
    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + self.h() * i as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.node(i))
    }
}

/// Function values on a [`Grid1D`]; the discrete representation of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl SampledField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(TsiError::InvalidField(format!(
                "{} values for {} nodes",
                values.len(),
                grid.n_points()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TsiError::InvalidField("non-finite value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = (0..grid.n_points()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        let values = vec![c; grid.n_points()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piecewise-linear interpolation of the stored values. Points outside
    /// the grid clamp to the nearest boundary value; points within 1e-9 of a
    /// node (in units of h) snap to it, so grid nodes reproduce exactly.
    pub fn evaluate(&self, x: f64) -> f64 {
        let h = self.grid.h();
        let s = (x - self.grid.x_min()) / h;
        let last = self.values.len() - 1;
        let r = s.round();
        if (s - r).abs() < 1e-9 {
            let i = (r.max(0.0) as usize).min(last);
            return self.values[i];
        }
        if s <= 0.0 {
            return self.values[0];
        }
        if s >= last as f64 {
            return self.values[last];
        }
        let i = s.floor() as usize;
        let frac = s - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Slope of the piecewise-linear interpolant at `x`; zero outside the grid.
    pub fn derivative_at(&self, x: f64) -> f64 {
        let h = self.grid.h();
        let s = (x - self.grid.x_min()) / h;
        let last = self.values.len() - 1;
        if s <= 0.0 || s >= last as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(last - 1);
        (self.values[i + 1] - self.values[i]) / h
    }

    /// Composite trapezoid quadrature of the field over its grid.
    pub fn integral(&self) -> f64 {
        let h = self.grid.h();
        let n = self.values.len();
        let mut sum = 0.5 * (self.values[0] + self.values[n - 1]);
        for v in &self.values[1..n - 1] {
            sum += v;
        }
        sum * h
    }

    /// Composite trapezoid quadrature of `|self - other|` over the common grid.
    pub fn l1_distance(&self, other: &SampledField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(TsiError::GridMismatch);
        }
        let h = self.grid.h();
        let n = self.values.len();
        let d = |i: usize| (self.values[i] - other.values[i]).abs();
        let mut sum = 0.5 * (d(0) + d(n - 1));
        for i in 1..n - 1 {
            sum += d(i);
        }
        Ok(sum * h)
    }

    /// Sum of absolute differences of consecutive values.
    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// Convolution with a normalized squared-cosine window of support `width`.
    ///
    /// Kernel weights are cell averages of `cos^2(pi t / width)` over the
    /// grid cells, so a support of about two mesh cells still smooths.
    /// Boundary values are replicated, which keeps constants exact.
    pub fn mollify(&self, width: f64) -> SampledField {
        assert!(width > 0.0, "mollifier width must be positive");
        let h = self.grid.h();
        let half = 0.5 * width;
        let m = ((half + 0.5 * h) / h).ceil() as i64;
        // Antiderivative of cos^2(pi t / width).
        let prim = |t: f64| 0.5 * t + width / (4.0 * std::f64::consts::PI) * (2.0 * std::f64::consts::PI * t / width).sin();
        let mut weights = Vec::with_capacity((2 * m + 1) as usize);
        for k in -m..=m {
            let lo = (k as f64 * h - 0.5 * h).max(-half);
            let hi = (k as f64 * h + 0.5 * h).min(half);
            weights.push(if hi > lo { prim(hi) - prim(lo) } else { 0.0 });
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let n = self.values.len() as i64;
        let values = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (idx, w) in weights.iter().enumerate() {
                    let k = idx as i64 - m;
                    let j = (i + k).clamp(0, n - 1) as usize;
                    acc += w * self.values[j];
                }
                acc
            })
            .collect();
        SampledField { grid: self.grid.clone(), values }
    }

    /// Largest absolute nodal difference to `other`.
    pub fn sup_distance(&self, other: &SampledField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(TsiError::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Pointwise linear combination `self + c * other`.
    pub fn axpy(&mut self, c: f64, other: &SampledField) {
        debug_assert_eq!(self.grid, other.grid);
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += c * o;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid1D {
        Grid1D::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn grid_invariants() {
        let g = Grid1D::from_step(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.n_points(), 11);
        assert!((g.h() - 0.1).abs() < 1e-12);
        assert!(Grid1D::new(1.0, 0.0, 5).is_err());
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn evaluate_constant_and_nodes() {
        let g = unit_grid(11);
        let f = SampledField::constant(g.clone(), 3.0);
        for x in [-1.0, 0.0, 0.37, 1.0, 2.0] {
            assert_eq!(f.evaluate(x), 3.0);
        }
        let f = SampledField::from_fn(g.clone(), |x| x * x);
        for (i, x) in g.nodes().enumerate() {
            assert_eq!(f.evaluate(x), f.values()[i]);
        }
    }

    #[test]
    fn evaluate_reproduces_linear() {
        let g = unit_grid(11);
        let f = SampledField::from_fn(g, |x| x);
        assert!((f.evaluate(0.25) - 0.25).abs() < 1e-15);
        // Clamping outside the domain.
        assert_eq!(f.evaluate(-0.5), 0.0);
        assert_eq!(f.evaluate(1.5), 1.0);
    }

    #[test]
    fn l1_distance_basics() {
        let g = unit_grid(101);
        let f = SampledField::constant(g.clone(), 1.0);
        let z = SampledField::constant(g.clone(), 0.0);
        assert_eq!(f.l1_distance(&f).unwrap(), 0.0);
        assert!((f.l1_distance(&z).unwrap() - 1.0).abs() < 1e-12);
        let other = SampledField::constant(unit_grid(51), 0.0);
        assert!(f.l1_distance(&other).is_err());
    }

    #[test]
    fn l1_distance_step() {
        let g = unit_grid(101);
        let step = SampledField::from_fn(g.clone(), |x| if x >= 0.5 { 1.0 } else { 0.0 });
        let z = SampledField::constant(g.clone(), 0.0);
        let d = step.l1_distance(&z).unwrap();
        assert!((d - 0.5).abs() <= g.h() + 1e-12, "d = {d}");
    }

    #[test]
    fn l1_triangle_inequality() {
        let g = unit_grid(37);
        let mut state = 0x243f6a8885a308d3u64;
        let mut rng = move || {
            // xorshift; plenty for test data
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let a = SampledField::from_fn(g.clone(), |_| rng() * 2.0 - 1.0);
            let b = SampledField::from_fn(g.clone(), |_| rng() * 2.0 - 1.0);
            let c = SampledField::from_fn(g.clone(), |_| rng() * 2.0 - 1.0);
            let ab = a.l1_distance(&b).unwrap();
            let bc = b.l1_distance(&c).unwrap();
            let ac = a.l1_distance(&c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn evaluate_is_lipschitz() {
        let g = unit_grid(64);
        let f = SampledField::from_fn(g.clone(), |x| (13.0 * x).sin());
        let lip = f.total_variation() / g.h();
        let mut state = 0x13198a2e03707344u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = rng() * 1.2 - 0.1;
            let y = rng() * 1.2 - 0.1;
            assert!((f.evaluate(x) - f.evaluate(y)).abs() <= lip * (x - y).abs() + 1e-12);
        }
    }

    #[test]
    fn total_variation_values() {
        let g = unit_grid(101);
        assert_eq!(SampledField::constant(g.clone(), 4.0).total_variation(), 0.0);
        let step = SampledField::from_fn(g.clone(), |x| if x >= 0.5 { 1.0 } else { 0.0 });
        assert!((step.total_variation() - 1.0).abs() < 1e-12);
        // Two-shock Burgers state at mu = 1.5: jumps of 0.75 and 0.75.
        let two = SampledField::from_fn(g.clone(), |x| {
            if x < 0.3 {
                1.5
            } else if x < 0.6 {
                0.75
            } else {
                0.0
            }
        });
        assert!((two.total_variation() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn mollify_preserves_constants() {
        let g = unit_grid(101);
        let f = SampledField::constant(g, 2.5);
        let m = f.mollify(0.02);
        for (a, b) in f.values().iter().zip(m.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mollify_step_profile() {
        let g = unit_grid(101);
        let step = SampledField::from_fn(g.clone(), |x| if x >= 0.5 { 1.0 } else { 0.0 });
        let m = step.mollify(0.02);
        for (i, x) in g.nodes().enumerate() {
            if x < 0.49 - 1e-9 {
                assert!(m.values()[i].abs() < 1e-12, "x = {x}");
            } else if x > 0.51 + 1e-9 {
                assert!((m.values()[i] - 1.0).abs() < 1e-12, "x = {x}");
            }
        }
        // monotone across the smeared jump
        let lo = (0.48 / g.h()).round() as usize;
        let hi = (0.52 / g.h()).round() as usize;
        for i in lo..hi {
            assert!(m.values()[i + 1] >= m.values()[i] - 1e-14);
        }
        assert!(m.values()[lo + 1] > 0.0 || m.values()[lo + 2] > 0.0);
    }

    #[test]
    fn mollify_preserves_interior_mass() {
        let g = unit_grid(201);
        let f = SampledField::from_fn(g, |x| {
            if (0.3..0.7).contains(&x) {
                (std::f64::consts::PI * (x - 0.3) / 0.4).sin()
            } else {
                0.0
            }
        });
        let m = f.mollify(0.02);
        assert!((f.integral() - m.integral()).abs() < 1e-10);
    }

    #[test]
    fn mollify_commutes_with_constant_shift() {
        let g = unit_grid(80);
        let f = SampledField::from_fn(g.clone(), |x| if x >= 0.4 { 1.0 } else { -0.5 });
        let mut shifted = f.clone();
        for v in &mut shifted.values {
            *v += 2.0;
        }
        let a = f.mollify(0.05);
        let b = shifted.mollify(0.05);
        for (va, vb) in a.values().iter().zip(b.values()) {
            assert!((va + 2.0 - vb).abs() < 1e-12);
        }
    }
}
