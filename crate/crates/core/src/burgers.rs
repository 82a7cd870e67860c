//! Exact front tracking for the inviscid Burgers equation with
//! piecewise-constant initial data, plus an independent first-order Godunov
//! solver used for cross-validation.
//!
//! Waves are shocks (Rankine-Hugoniot speed `(u_l + u_r) / 2`), rarefaction
//! fans (`u = (x - center) / t`), and contact-like fan edges. Interactions
//! are processed chronologically from an event queue; a shock inside a fan
//! follows the closed-form trajectory `x(t) = center + u t + c sqrt(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsiError};
use crate::field::{Grid1D, SampledField};

/// Piecewise-constant initial data: `states[i]` on `(breakpoints[i-1], breakpoints[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantIC {
    breakpoints: Vec<f64>,
    states: Vec<f64>,
}

impl PiecewiseConstantIC {
    pub fn new(breakpoints: Vec<f64>, states: Vec<f64>) -> Result<Self> {
        if states.len() != breakpoints.len() + 1 {
            return Err(TsiError::InvalidInitialData(format!(
                "{} states for {} breakpoints",
                states.len(),
                breakpoints.len()
            )));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TsiError::InvalidInitialData(
                "breakpoints not strictly increasing".into(),
            ));
        }
        if breakpoints.iter().chain(states.iter()).any(|v| !v.is_finite()) {
            return Err(TsiError::InvalidInitialData("non-finite entry".into()));
        }
        Ok(Self { breakpoints, states })
    }

    /// The two-shock initial data `(mu, mu/2, 0)` on `(-inf,0), [0,1), [1,inf)`.
    pub fn two_shocks(mu: f64) -> Self {
        Self::new(vec![0.0, 1.0], vec![mu, 0.5 * mu, 0.0]).expect("valid data")
    }

    /// The shock/rarefaction initial data `(1.5, 0, mu)` on `(-inf,0), [0,1), [1,inf)`.
    pub fn shock_rwave(mu: f64) -> Self {
        Self::new(vec![0.0, 1.0], vec![1.5, 0.0, mu]).expect("valid data")
    }

    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        self.states[idx]
    }

    /// Exact integral of the initial data over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        let mut total = 0.0;
        let mut lo = a;
        for (i, &bp) in self.breakpoints.iter().enumerate() {
            if bp <= lo {
                continue;
            }
            if bp >= b {
                break;
            }
            total += self.states[i] * (bp - lo);
            lo = bp;
        }
        let idx = self.breakpoints.partition_point(|&bp| bp <= lo);
        total + self.states[idx] * (b - lo)
    }
}

/// One segment of the exact solution at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolutionPiece {
    Constant(f64),
    /// Rarefaction fan centered at `center` (at time zero): `u = (x - center) / t`.
    Fan { center: f64 },
}

/// Exact entropy solution at a fixed time: `pieces[i]` lives on
/// `(boundaries[i-1], boundaries[i])`, tiling the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSolution {
    time: f64,
    boundaries: Vec<f64>,
    pieces: Vec<SolutionPiece>,
}

impl PiecewiseSolution {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn pieces(&self) -> &[SolutionPiece] {
        &self.pieces
    }

    fn piece_value(&self, piece: &SolutionPiece, x: f64) -> f64 {
        match piece {
            SolutionPiece::Constant(u) => *u,
            SolutionPiece::Fan { center } => (x - center) / self.time,
        }
    }

    /// Pointwise evaluation; at a boundary the left piece wins.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.boundaries.partition_point(|&b| b < x);
        self.piece_value(&self.pieces[idx], x)
    }

    /// Evaluate at the grid nodes.
    pub fn sample(&self, grid: &Grid1D) -> SampledField {
        SampledField::from_fn(grid.clone(), |x| self.eval(x))
    }

    /// Positions of genuine jumps (left value above right value).
    pub fn shock_positions(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, &b) in self.boundaries.iter().enumerate() {
            let ul = self.piece_value(&self.pieces[i], b);
            let ur = self.piece_value(&self.pieces[i + 1], b);
            if ul > ur + 1e-10 {
                out.push(b);
            }
        }
        out
    }
}

/// Pointwise evaluation of the exact solution at the grid nodes.
pub fn sample(sol: &PiecewiseSolution, grid: &Grid1D) -> SampledField {
    sol.sample(grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Seg {
    Const(f64),
    Fan { center: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FrontKind {
    Shock,
    FanEdge,
}

#[derive(Debug, Clone, Copy)]
struct Front {
    x: f64,
    kind: FrontKind,
}

/// Trajectory `x(t) = a + b t + c sqrt(t)` of a front, derived from its
/// neighboring segments and current position.
#[derive(Debug, Clone, Copy)]
struct Trajectory {
    a: f64,
    b: f64,
    c: f64,
}

impl Trajectory {
    fn at(&self, t: f64) -> f64 {
        self.a + self.b * t + self.c * t.sqrt()
    }

    fn velocity(&self, t: f64) -> f64 {
        if self.c == 0.0 {
            self.b
        } else {
            self.b + 0.5 * self.c / t.sqrt().max(1e-300)
        }
    }
}

struct Tracker {
    t: f64,
    segs: Vec<Seg>,
    fronts: Vec<Front>,
}

impl Tracker {
    fn init(ic: &PiecewiseConstantIC) -> Self {
        let mut segs = vec![Seg::Const(ic.states[0])];
        let mut fronts = Vec::new();
        for (i, &bp) in ic.breakpoints.iter().enumerate() {
            let a = ic.states[i];
            let b = ic.states[i + 1];
            if a > b {
                fronts.push(Front { x: bp, kind: FrontKind::Shock });
                segs.push(Seg::Const(b));
            } else if a < b {
                fronts.push(Front { x: bp, kind: FrontKind::FanEdge });
                segs.push(Seg::Fan { center: bp });
                fronts.push(Front { x: bp, kind: FrontKind::FanEdge });
                segs.push(Seg::Const(b));
            } else {
                // zero jump: merge neighboring states
                continue;
            }
        }
        Tracker { t: 0.0, segs, fronts }
    }

    fn trajectory(&self, i: usize) -> Trajectory {
        let f = &self.fronts[i];
        let left = self.segs[i];
        let right = self.segs[i + 1];
        match (f.kind, left, right) {
            (FrontKind::Shock, Seg::Const(ul), Seg::Const(ur)) => {
                let s = 0.5 * (ul + ur);
                Trajectory { a: f.x - s * self.t, b: s, c: 0.0 }
            }
            (FrontKind::Shock, Seg::Const(ul), Seg::Fan { center }) => {
                let c = (f.x - center - ul * self.t) / self.t.sqrt();
                Trajectory { a: center, b: ul, c }
            }
            (FrontKind::Shock, Seg::Fan { center }, Seg::Const(ur)) => {
                let c = (f.x - center - ur * self.t) / self.t.sqrt();
                Trajectory { a: center, b: ur, c }
            }
            (FrontKind::Shock, Seg::Fan { center: c1 }, Seg::Fan { center: c2 }) => {
                let a = 0.5 * (c1 + c2);
                Trajectory { a, b: (f.x - a) / self.t, c: 0.0 }
            }
            (FrontKind::FanEdge, Seg::Const(u), Seg::Fan { center })
            | (FrontKind::FanEdge, Seg::Fan { center }, Seg::Const(u)) => {
                Trajectory { a: center, b: u, c: 0.0 }
            }
            (FrontKind::FanEdge, _, _) => unreachable!("fan edge needs a fan neighbor"),
        }
    }

    /// First time strictly after `self.t` at which adjacent fronts `i`, `i+1`
    /// meet, or `self.t` itself for already-coincident approaching fronts.
    fn pair_collision_time(&self, i: usize) -> Option<f64> {
        let t1 = self.trajectory(i);
        let t2 = self.trajectory(i + 1);
        let scale = 1.0f64.max(self.fronts[i].x.abs()).max(self.fronts[i + 1].x.abs());
        if (self.fronts[i + 1].x - self.fronts[i].x).abs() <= 1e-12 * scale {
            if t1.velocity(self.t) >= t2.velocity(self.t) - 1e-13 {
                return Some(self.t);
            }
        }
        let da = t1.a - t2.a;
        let db = t1.b - t2.b;
        let dc = t1.c - t2.c;
        let t_min = self.t * (1.0 + 1e-12) + 1e-15;
        let mut best: Option<f64> = None;
        let mut consider = |s: f64| {
            if s.is_finite() && s >= 0.0 {
                let t = s * s;
                if t > t_min && best.map_or(true, |b| t < b) {
                    best = Some(t);
                }
            }
        };
        if db.abs() < 1e-300 {
            if dc.abs() > 1e-300 {
                consider(-da / dc);
            }
        } else {
            let disc = dc * dc - 4.0 * db * da;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                consider((-dc + sq) / (2.0 * db));
                consider((-dc - sq) / (2.0 * db));
            }
        }
        best
    }

    fn seg_value(&self, seg: Seg, x: f64, t: f64) -> f64 {
        match seg {
            Seg::Const(u) => u,
            Seg::Fan { center } => (x - center) / t,
        }
    }

    fn advance_positions(&mut self, t: f64) {
        let xs: Vec<f64> = (0..self.fronts.len())
            .map(|i| self.trajectory(i).at(t))
            .collect();
        for (f, x) in self.fronts.iter_mut().zip(xs) {
            f.x = x;
        }
        self.t = t;
    }

    /// Segment `i+1` has vanished: replace fronts `i`, `i+1` by the wave
    /// between segments `i` and `i+2`.
    fn process_event(&mut self, i: usize) {
        let x = 0.5 * (self.fronts[i].x + self.fronts[i + 1].x);
        self.fronts.remove(i + 1);
        self.fronts.remove(i);
        self.segs.remove(i + 1);
        let left = self.segs[i];
        let right = self.segs[i + 1];
        let ul = self.seg_value(left, x, self.t);
        let ur = self.seg_value(right, x, self.t);
        let tol = 1e-12 * (1.0 + ul.abs().max(ur.abs()));
        if ul > ur + tol {
            self.fronts.insert(i, Front { x, kind: FrontKind::Shock });
        } else if matches!(left, Seg::Fan { .. }) != matches!(right, Seg::Fan { .. }) {
            // matching values, one side a fan: the shock died into a fan edge
            self.fronts.insert(i, Front { x, kind: FrontKind::FanEdge });
        } else if let (Seg::Const(_), Seg::Const(_)) = (left, right) {
            // equal constants: the jump vanished entirely
            self.segs.remove(i + 1);
        } else {
            // two fans with matching value at one point still separate
            self.fronts.insert(i, Front { x, kind: FrontKind::Shock });
        }
    }

    fn next_event(&self) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.fronts.len().saturating_sub(1) {
            if let Some(t) = self.pair_collision_time(i) {
                match best {
                    None => best = Some((t, i)),
                    Some((bt, _)) if t < bt - 1e-13 * (1.0 + bt) => best = Some((t, i)),
                    _ => {}
                }
            }
        }
        best
    }

    fn into_solution(mut self, t: f64) -> PiecewiseSolution {
        self.advance_positions(t);
        let mut boundaries = Vec::new();
        let mut pieces = vec![match self.segs[0] {
            Seg::Const(u) => SolutionPiece::Constant(u),
            Seg::Fan { center } => SolutionPiece::Fan { center },
        }];
        for (i, f) in self.fronts.iter().enumerate() {
            let piece = match self.segs[i + 1] {
                Seg::Const(u) => SolutionPiece::Constant(u),
                Seg::Fan { center } => SolutionPiece::Fan { center },
            };
            // drop zero-width segments (events exactly at the target time)
            if let Some(&last) = boundaries.last() {
                if f.x - last <= 1e-14 * (1.0 + f.x.abs()) {
                    *pieces.last_mut().expect("nonempty") = piece;
                    continue;
                }
            }
            boundaries.push(f.x);
            pieces.push(piece);
        }
        PiecewiseSolution { time: t, boundaries, pieces }
    }
}

/// Exact weak entropy solution of `u_t + (u^2/2)_x = 0` at time `t`.
pub fn solve_front_tracking(ic: &PiecewiseConstantIC, t: f64) -> Result<PiecewiseSolution> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(TsiError::InvalidInitialData(format!("invalid time {t}")));
    }
    let mut tracker = Tracker::init(ic);
    if t == 0.0 {
        return Ok(tracker.into_solution(0.0));
    }
    // Each event removes one segment, so the loop terminates.
    while let Some((te, i)) = tracker.next_event() {
        if te > t {
            break;
        }
        tracker.advance_positions(te);
        tracker.process_event(i);
    }
    Ok(tracker.into_solution(t))
}

/// First interaction time of initial data made of exactly two entropy shocks.
pub fn collision_time(ic: &PiecewiseConstantIC) -> Result<Option<f64>> {
    let jumps: Vec<(f64, f64, f64)> = ic
        .breakpoints
        .iter()
        .enumerate()
        .filter(|(i, _)| ic.states[*i] != ic.states[*i + 1])
        .map(|(i, &bp)| (bp, ic.states[i], ic.states[i + 1]))
        .collect();
    if jumps.len() != 2 || jumps.iter().any(|&(_, l, r)| l < r) {
        return Err(TsiError::NotTwoShocks);
    }
    let (b1, l1, r1) = jumps[0];
    let (b2, l2, r2) = jumps[1];
    let s1 = 0.5 * (l1 + r1);
    let s2 = 0.5 * (l2 + r2);
    if s1 <= s2 {
        return Ok(None);
    }
    Ok(Some((b2 - b1) / (s1 - s2)))
}

fn godunov_flux(a: f64, b: f64) -> f64 {
    let f = |u: f64| 0.5 * u * u;
    f(a.max(0.0)).max(f(b.min(0.0)))
}

/// First-order Godunov finite-volume solution with exact Riemann fluxes and
/// outflow boundaries; cells are centered at the grid nodes.
pub fn godunov_solve(
    ic: &PiecewiseConstantIC,
    t: f64,
    grid: &Grid1D,
    cfl: f64,
) -> Result<SampledField> {
    if !(cfl > 0.0 && cfl < 1.0) {
        return Err(TsiError::InvalidConfig(format!("cfl {cfl} not in (0, 1)")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(TsiError::InvalidInitialData(format!("invalid time {t}")));
    }
    let h = grid.h();
    let mut u: Vec<f64> = grid
        .nodes()
        .map(|x| ic.integrate(x - 0.5 * h, x + 0.5 * h) / h)
        .collect();
    let n = u.len();
    let mut time = 0.0;
    let mut flux = vec![0.0; n + 1];
    while time < t {
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dt = if umax > 1e-300 { (cfl * h / umax).min(t - time) } else { t - time };
        flux[0] = godunov_flux(u[0], u[0]);
        flux[n] = godunov_flux(u[n - 1], u[n - 1]);
        for i in 1..n {
            flux[i] = godunov_flux(u[i - 1], u[i]);
        }
        for i in 0..n {
            u[i] -= dt / h * (flux[i + 1] - flux[i]);
        }
        time += dt;
    }
    SampledField::new(grid.clone(), u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn two_shocks_before_collision() {
        let ic = PiecewiseConstantIC::two_shocks(1.5);
        let sol = solve_front_tracking(&ic, 0.5).unwrap();
        let shocks = sol.shock_positions();
        assert_eq!(shocks.len(), 2);
        assert_close(shocks[0], 0.5625, 1e-12);
        assert_close(shocks[1], 1.1875, 1e-12);
        assert_close(sol.eval(0.0), 1.5, 1e-12);
        assert_close(sol.eval(1.0), 0.75, 1e-12);
        assert_close(sol.eval(2.0), 0.0, 1e-12);
    }

    #[test]
    fn two_shocks_after_collision() {
        let mu = 1.5f64;
        let ic = PiecewiseConstantIC::two_shocks(mu);
        for t in [1.4, 2.0, 3.0] {
            let sol = solve_front_tracking(&ic, t).unwrap();
            let shocks = sol.shock_positions();
            assert_eq!(shocks.len(), 1, "t = {t}");
            let expect = 1.5 + 0.75 * (t - 4.0 / 3.0);
            assert_close(shocks[0], expect, 1e-12);
            assert_close(sol.eval(shocks[0] - 0.01), 1.5, 1e-12);
            assert_close(sol.eval(shocks[0] + 0.01), 0.0, 1e-12);
        }
    }

    #[test]
    fn shock_rwave_structure() {
        let mu = 0.5;
        let ic = PiecewiseConstantIC::shock_rwave(mu);
        let t = 0.5;
        let sol = solve_front_tracking(&ic, t).unwrap();
        // left shock of speed 0.75 from x = 0
        let shocks = sol.shock_positions();
        assert_eq!(shocks.len(), 1);
        assert_close(shocks[0], 0.375, 1e-12);
        // fan from x = 1 with edges at speeds 0 and mu
        assert_close(sol.eval(1.0), 0.0, 1e-12);
        assert_close(sol.eval(1.0 + mu * t + 0.01), mu, 1e-12);
        for x in [1.05, 1.1, 1.2] {
            assert_close(sol.eval(x), (x - 1.0) / t, 1e-12);
        }
    }

    #[test]
    fn shock_absorbs_fan() {
        // After t = 4/3 the left shock enters the fan; closed form
        // x(t) = 1 + 1.5 t - sqrt(3 t).
        let ic = PiecewiseConstantIC::shock_rwave(0.5);
        let t = 2.0;
        let sol = solve_front_tracking(&ic, t).unwrap();
        let shocks = sol.shock_positions();
        assert_eq!(shocks.len(), 1);
        assert_close(shocks[0], 4.0 - 6.0f64.sqrt(), 1e-10);
        assert_close(sol.eval(1.8), 0.4, 1e-12); // still inside the fan
        assert_close(sol.eval(2.5), 0.5, 1e-12); // beyond the fan edge
    }

    #[test]
    fn shock_rwave_negative_mu_collides() {
        // mu < 0: two shocks, collision at 2 / (1.5 - mu).
        let mu = -0.5;
        let ic = PiecewiseConstantIC::shock_rwave(mu);
        let tc = 2.0 / (1.5 - mu);
        assert_close(collision_time(&ic).unwrap().unwrap(), tc, 1e-12);
        let sol = solve_front_tracking(&ic, tc + 0.3).unwrap();
        let shocks = sol.shock_positions();
        assert_eq!(shocks.len(), 1);
        assert_close(sol.eval(shocks[0] + 0.01), mu, 1e-12);
    }

    #[test]
    fn collision_time_examples() {
        let ic = PiecewiseConstantIC::two_shocks(1.5);
        assert_close(collision_time(&ic).unwrap().unwrap(), 4.0 / 3.0, 1e-14);
        let ic = PiecewiseConstantIC::two_shocks(1.6);
        assert_close(collision_time(&ic).unwrap().unwrap(), 1.25, 1e-14);
        let ic = PiecewiseConstantIC::new(vec![0.0, 1.0], vec![1.0, 0.5, 0.75]).unwrap();
        assert!(matches!(collision_time(&ic), Err(TsiError::NotTwoShocks)));
    }

    #[test]
    fn triple_collision_merges_cleanly() {
        let ic = PiecewiseConstantIC::new(vec![0.0, 0.5, 1.0], vec![3.0, 2.0, 1.0, 0.0]).unwrap();
        // all three shocks meet at t = 0.5, x = 1.25
        let sol = solve_front_tracking(&ic, 0.6).unwrap();
        let shocks = sol.shock_positions();
        assert_eq!(shocks.len(), 1);
        assert_close(shocks[0], 1.25 + 1.5 * 0.1, 1e-12);
        assert_close(sol.eval(0.0), 3.0, 1e-12);
        assert_close(sol.eval(2.0), 0.0, 1e-12);
    }

    #[test]
    fn sample_two_shocks_has_two_jumps() {
        let ic = PiecewiseConstantIC::two_shocks(1.5);
        let sol = solve_front_tracking(&ic, 0.5).unwrap();
        let grid = Grid1D::from_step(-1.0, 2.5, 0.01).unwrap();
        let f = sol.sample(&grid);
        let jumps = f
            .values()
            .windows(2)
            .filter(|w| (w[1] - w[0]).abs() > 0.5)
            .count();
        assert_eq!(jumps, 2);
    }

    #[test]
    fn constant_solution_stays_constant() {
        let ic = PiecewiseConstantIC::new(vec![], vec![0.7]).unwrap();
        let sol = solve_front_tracking(&ic, 1.3).unwrap();
        let grid = Grid1D::new(-1.0, 1.0, 21).unwrap();
        let f = sol.sample(&grid);
        assert!(f.values().iter().all(|&v| (v - 0.7).abs() < 1e-14));
    }

    #[test]
    fn entropy_no_upward_shocks() {
        for mu in [-0.5, -0.2, 0.1, 0.5] {
            let ic = PiecewiseConstantIC::shock_rwave(mu);
            // t = 0 carries the raw initial jumps, so entropy applies for t > 0
            for t in [0.05, 0.3, 1.0, 1.7, 2.0] {
                let sol = solve_front_tracking(&ic, t).unwrap();
                for (i, &b) in sol.boundaries.iter().enumerate() {
                    let ul = sol.piece_value(&sol.pieces[i], b);
                    let ur = sol.piece_value(&sol.pieces[i + 1], b);
                    assert!(ul >= ur - 1e-10, "mu={mu} t={t}: {ul} < {ur}");
                }
            }
        }
    }

    #[test]
    fn self_similarity_of_riemann_data() {
        // pure Riemann problem: u(x, t) = u(x/t, 1)
        let ic = PiecewiseConstantIC::new(vec![0.0], vec![-0.3, 0.9]).unwrap();
        let sol1 = solve_front_tracking(&ic, 1.0).unwrap();
        for t in [0.5, 2.0] {
            let solt = solve_front_tracking(&ic, t).unwrap();
            for i in -20..=20 {
                let x = i as f64 * 0.1;
                assert_close(solt.eval(x), sol1.eval(x / t), 1e-12);
            }
        }
    }

    #[test]
    fn godunov_initial_data_is_cell_average() {
        let ic = PiecewiseConstantIC::two_shocks(1.2);
        let grid = Grid1D::from_step(-1.0, 2.0, 0.05).unwrap();
        let f = godunov_solve(&ic, 0.0, &grid, 0.8).unwrap();
        let h = grid.h();
        for (i, x) in grid.nodes().enumerate() {
            let avg = ic.integrate(x - 0.5 * h, x + 0.5 * h) / h;
            assert_close(f.values()[i], avg, 1e-13);
        }
    }

    #[test]
    fn godunov_constant_is_exact() {
        let ic = PiecewiseConstantIC::new(vec![], vec![1.1]).unwrap();
        let grid = Grid1D::from_step(0.0, 1.0, 0.02).unwrap();
        let f = godunov_solve(&ic, 0.7, &grid, 0.5).unwrap();
        assert!(f.values().iter().all(|&v| (v - 1.1).abs() < 1e-13));
    }

    #[test]
    fn godunov_matches_front_tracking_on_shocks() {
        let ic = PiecewiseConstantIC::two_shocks(1.5);
        let grid = Grid1D::from_step(-1.0, 2.5, 0.005).unwrap();
        let g = godunov_solve(&ic, 0.5, &grid, 0.8).unwrap();
        let exact = solve_front_tracking(&ic, 0.5).unwrap().sample(&grid);
        let d = g.l1_distance(&exact).unwrap();
        assert!(d <= 5.0 * grid.h(), "l1 = {d}");
    }

    #[test]
    fn godunov_matches_front_tracking_through_fan_absorption() {
        let ic = PiecewiseConstantIC::shock_rwave(0.5);
        let grid = Grid1D::from_step(-1.0, 3.5, 0.004).unwrap();
        let g = godunov_solve(&ic, 2.0, &grid, 0.8).unwrap();
        let exact = solve_front_tracking(&ic, 2.0).unwrap().sample(&grid);
        let d = g.l1_distance(&exact).unwrap();
        assert!(d <= 10.0 * grid.h(), "l1 = {d}");
    }

    #[test]
    fn godunov_conserves_mass() {
        let ic = PiecewiseConstantIC::new(vec![-0.2, 0.4], vec![0.0, 1.3, 0.0]).unwrap();
        let grid = Grid1D::from_step(-4.0, 4.0, 0.01).unwrap();
        let before = godunov_solve(&ic, 0.0, &grid, 0.9).unwrap();
        let after = godunov_solve(&ic, 1.0, &grid, 0.9).unwrap();
        // cell-sum conservation of the finite-volume update
        let sum = |f: &SampledField| f.values().iter().sum::<f64>() * grid.h();
        assert_close(sum(&before), sum(&after), 1e-10);
    }
}
