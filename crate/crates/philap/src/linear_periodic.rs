//! T-periodic solutions of L[y] = (a(t) y')' + lambda y' + b(t) y = f(t) by
//! the fundamental-solution method, and the zero-average variant that also
//! determines the free constant mu*.
//!
//! `solve_periodic` expands (a y')' = a y'' + a' y' and integrates a
//! particular solution Y with (Y(0), Y'(0)) = (0, 1) together with the
//! homogeneous solutions y1 (0, 1) and y2 (1, 0) over one period, then picks
//! c1, c2 from the 2x2 system enforcing y(0) = y(T), y'(0) = y'(T). The three
//! initial-value problems are independent, so they are integrated as one
//! stacked system sharing coefficient evaluations and step control.
//!
//! `solve_zero_average` finds (y, mu*) with L[y] = mu* + f, y T-periodic and
//! of zero average, as y = Y_f + mu* Y_1 + c1 y1 + c2 y2 where Y_1 is a
//! particular solution for f = 1. The unknowns (c1, c2, mu*) solve a bordered
//! 3x3 system (two periodicity rows plus the zero-mean row, with the means
//! obtained from quadrature components carried along the integration). The
//! bordered form stays valid at b = 0, where L itself is singular on
//! constants and the two-stage composition y = L^-1[f] + mu L^-1[1] breaks
//! down.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::ivp::{integrate, IvpOptions};
use crate::periodic_fn::{PeriodicFunction, TrigBasis};

/// Matching systems with condition numbers beyond this are reported as
/// resonant/singular rather than solved.
pub const CONDITION_CAP: f64 = 1e12;

/// Coefficients and right-hand side of L[y] = (a y')' + lambda y' + b y = f.
#[derive(Debug, Clone)]
pub struct LinearPeriodicProblem {
    pub a: PeriodicFunction,
    /// a'(t); supplied by the caller when a cleaner route than spectral
    /// differentiation exists (chain rule on Newton coefficients).
    pub a_deriv: PeriodicFunction,
    pub lambda: f64,
    pub b: PeriodicFunction,
    pub f: PeriodicFunction,
    /// min over nodes of a(t); positive by construction.
    pub a_min: f64,
    pub ivp: IvpOptions,
}

impl LinearPeriodicProblem {
    /// a' is computed spectrally from a.
    pub fn new(
        a: PeriodicFunction,
        lambda: f64,
        b: PeriodicFunction,
        f: PeriodicFunction,
        ivp: IvpOptions,
    ) -> Result<Self> {
        let a_deriv = a.derivative(1);
        Self::with_a_deriv(a, a_deriv, lambda, b, f, ivp)
    }

    pub fn with_a_deriv(
        a: PeriodicFunction,
        a_deriv: PeriodicFunction,
        lambda: f64,
        b: PeriodicFunction,
        f: PeriodicFunction,
        ivp: IvpOptions,
    ) -> Result<Self> {
        assert_eq!(a.grid(), b.grid(), "coefficient grids must match");
        assert_eq!(a.grid(), f.grid(), "coefficient grids must match");
        assert_eq!(a.grid(), a_deriv.grid(), "coefficient grids must match");
        let a_min = a.samples().iter().copied().fold(f64::INFINITY, f64::min);
        if !(a_min > 0.0) {
            return Err(Error::CoefficientNotPositive { a_min });
        }
        Ok(Self { a, a_deriv, lambda, b, f, a_min, ivp })
    }
}

/// Node tracks of the fundamental solutions, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct FundamentalTracks {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub particular: Vec<f64>,
    /// Particular solution for f = 1 (zero-average variant only).
    pub particular_one: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LinearPeriodicSolution {
    pub y: PeriodicFunction,
    /// Free constant of the zero-average variant; `None` for `solve_periodic`.
    pub mu_star: Option<f64>,
    /// Condition number of the 2x2 or 3x3 matching system.
    pub condition_number: f64,
    /// |y(T) - y(0)| + |y'(T) - y'(0)| in the IVP representation, before
    /// resampling onto the grid.
    pub periodicity_defect: f64,
    /// sup over nodes of |L[y] - mu* - f| with y differentiated spectrally.
    pub residual_sup: f64,
    /// |integral(b y) - T mu* - integral(f)|; the averaging identity obtained
    /// by integrating the equation over one period (zero-average variant).
    pub averaging_defect: Option<f64>,
    pub tracks: FundamentalTracks,
}

/// Shared right-hand side of the second-order systems: for each (y, v) pair,
/// y' = v and v' = (s - (a' + lambda) v - b y) / a with source s.
struct Coefficients<'p> {
    p: &'p LinearPeriodicProblem,
    basis: TrigBasis,
}

impl<'p> Coefficients<'p> {
    fn new(p: &'p LinearPeriodicProblem) -> Self {
        let basis = TrigBasis::new(p.a.grid());
        Self { p, basis }
    }

    /// (a, a' + lambda, b, f) at time t.
    fn at(&mut self, t: f64) -> (f64, f64, f64, f64) {
        self.basis.fill(t);
        let a = self.p.a.eval_with_basis(&self.basis);
        let ad = self.p.a_deriv.eval_with_basis(&self.basis) + self.p.lambda;
        let b = self.p.b.eval_with_basis(&self.basis);
        let f = self.p.f.eval_with_basis(&self.basis);
        (a, ad, b, f)
    }
}

fn condition_2x2(m: &Matrix2<f64>) -> f64 {
    let sv = m.svd(false, false).singular_values;
    let (hi, lo) = (sv.max(), sv.min());
    if lo == 0.0 { f64::INFINITY } else { hi / lo }
}

fn condition_3x3(m: &Matrix3<f64>) -> f64 {
    let sv = m.svd(false, false).singular_values;
    let (hi, lo) = (sv.max(), sv.min());
    if lo == 0.0 { f64::INFINITY } else { hi / lo }
}

/// Strip integrator noise from a resampled solution: keep the contiguous
/// band of modes whose magnitude rises above the integration noise floor.
/// High modes of the true solution decay exponentially, so everything below
/// the floor is noise that spectral differentiation would amplify by
/// (m omega)^2.
fn denoise(y: PeriodicFunction, noise_floor: f64) -> PeriodicFunction {
    let half = y.len() / 2;
    let mut m_max = 0;
    for m in 1..=half {
        if y.mode_magnitude(m) > noise_floor {
            m_max = m;
        }
    }
    y.truncate_modes(m_max)
}

fn residual_sup(p: &LinearPeriodicProblem, y: &PeriodicFunction, mu_star: f64) -> f64 {
    let dy = y.derivative(1);
    let d2y = y.derivative(2);
    let mut worst = 0.0f64;
    for j in 0..y.len() {
        let r = p.a.samples()[j] * d2y.samples()[j]
            + (p.a_deriv.samples()[j] + p.lambda) * dy.samples()[j]
            + p.b.samples()[j] * y.samples()[j]
            - mu_star
            - p.f.samples()[j];
        worst = worst.max(r.abs());
    }
    worst
}

/// T-periodic solution of L[y] = f.
pub fn solve_periodic(p: &LinearPeriodicProblem) -> Result<LinearPeriodicSolution> {
    let grid = *p.f.grid();
    let period = grid.period();
    let nodes: Vec<f64> = grid.nodes().collect();
    let mut coeff = Coefficients::new(p);

    // State: [y1, v1, y2, v2, Y, V] with Y the particular solution.
    let rhs = |t: f64, s: &[f64; 6], ds: &mut [f64; 6]| {
        let (a, ad, b, f) = coeff.at(t);
        ds[0] = s[1];
        ds[1] = (-ad * s[1] - b * s[0]) / a;
        ds[2] = s[3];
        ds[3] = (-ad * s[3] - b * s[2]) / a;
        ds[4] = s[5];
        ds[5] = (f - ad * s[5] - b * s[4]) / a;
    };
    let y0 = [0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
    let sol = integrate(rhs, 0.0, period, y0, &nodes, &p.ivp)?;
    let end = sol.final_state;

    let m = Matrix2::new(end[0], end[2] - 1.0, end[1] - 1.0, end[3]);
    let cond = condition_2x2(&m);
    if !cond.is_finite() || cond > CONDITION_CAP {
        return Err(Error::ResonantLinearProblem { cond });
    }
    let rhs_vec = Vector2::new(-end[4], -(end[5] - 1.0));
    let c = m.lu().solve(&rhs_vec).ok_or(Error::ResonantLinearProblem { cond })?;
    let (c1, c2) = (c[0], c[1]);

    // Periodicity defect of the assembled combination at t = T vs t = 0.
    let y_at_t = end[4] + c1 * end[0] + c2 * end[2];
    let v_at_t = end[5] + c1 * end[1] + c2 * end[3];
    let defect = (y_at_t - c2).abs() + (v_at_t - (1.0 + c1)).abs();

    let mut scale = 0.0f64;
    let mut y1_track = Vec::with_capacity(nodes.len());
    let mut y2_track = Vec::with_capacity(nodes.len());
    let mut part_track = Vec::with_capacity(nodes.len());
    let mut samples = Vec::with_capacity(nodes.len());
    for s in &sol.samples {
        for v in s {
            scale = scale.max(v.abs());
        }
        y1_track.push(s[0]);
        y2_track.push(s[2]);
        part_track.push(s[4]);
        samples.push(s[4] + c1 * s[0] + c2 * s[2]);
    }

    let amplification = 1.0 + c1.abs().max(c2.abs());
    let noise_floor = 10.0 * (p.ivp.atol + p.ivp.rtol * scale) * amplification;
    let y = denoise(PeriodicFunction::from_samples(grid, samples), noise_floor);
    let res = residual_sup(p, &y, 0.0);

    Ok(LinearPeriodicSolution {
        y,
        mu_star: None,
        condition_number: cond,
        periodicity_defect: defect,
        residual_sup: res,
        averaging_defect: None,
        tracks: FundamentalTracks {
            y1: y1_track,
            y2: y2_track,
            particular: part_track,
            particular_one: None,
        },
    })
}

/// Find (y, mu*) with L[y] = mu* + f, y T-periodic and of zero average.
pub fn solve_zero_average(p: &LinearPeriodicProblem) -> Result<LinearPeriodicSolution> {
    let grid = *p.f.grid();
    let period = grid.period();
    let nodes: Vec<f64> = grid.nodes().collect();
    let mut coeff = Coefficients::new(p);

    // State: [y1, v1, y2, v2, Yf, Vf, Y1, V1, q1, q2, qf, q1c] where the q
    // components integrate the respective solutions, so the zero-mean row of
    // the bordered system uses quadrature at full integrator accuracy.
    let rhs = |t: f64, s: &[f64; 12], ds: &mut [f64; 12]| {
        let (a, ad, b, f) = coeff.at(t);
        ds[0] = s[1];
        ds[1] = (-ad * s[1] - b * s[0]) / a;
        ds[2] = s[3];
        ds[3] = (-ad * s[3] - b * s[2]) / a;
        ds[4] = s[5];
        ds[5] = (f - ad * s[5] - b * s[4]) / a;
        ds[6] = s[7];
        ds[7] = (1.0 - ad * s[7] - b * s[6]) / a;
        ds[8] = s[0];
        ds[9] = s[2];
        ds[10] = s[4];
        ds[11] = s[6];
    };
    let y0 = [0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    let sol = integrate(rhs, 0.0, period, y0, &nodes, &p.ivp)?;
    let e = sol.final_state;

    // Rows: periodicity of y, periodicity of y', zero mean. Unknowns
    // (c1, c2, mu*).
    #[rustfmt::skip]
    let m = Matrix3::new(
        e[0],       e[2] - 1.0, e[6],
        e[1] - 1.0, e[3],       e[7] - 1.0,
        e[8],       e[9],       e[11],
    );
    let cond = condition_3x3(&m);
    if !cond.is_finite() || cond > CONDITION_CAP {
        return Err(Error::SingularBorderedSystem { cond });
    }
    let rhs_vec = Vector3::new(-e[4], -(e[5] - 1.0), -e[10]);
    let c = m.lu().solve(&rhs_vec).ok_or(Error::SingularBorderedSystem { cond })?;
    let (c1, c2, mu_star) = (c[0], c[1], c[2]);

    let y_at_t = e[4] + mu_star * e[6] + c1 * e[0] + c2 * e[2];
    let v_at_t = e[5] + mu_star * e[7] + c1 * e[1] + c2 * e[3];
    let defect = (y_at_t - c2).abs() + (v_at_t - (1.0 + mu_star + c1)).abs();

    let mut scale = 0.0f64;
    let mut y1_track = Vec::with_capacity(nodes.len());
    let mut y2_track = Vec::with_capacity(nodes.len());
    let mut part_track = Vec::with_capacity(nodes.len());
    let mut one_track = Vec::with_capacity(nodes.len());
    let mut samples = Vec::with_capacity(nodes.len());
    for s in &sol.samples {
        for v in &s[..8] {
            scale = scale.max(v.abs());
        }
        y1_track.push(s[0]);
        y2_track.push(s[2]);
        part_track.push(s[4]);
        one_track.push(s[6]);
        samples.push(s[4] + mu_star * s[6] + c1 * s[0] + c2 * s[2]);
    }

    let amplification = 1.0 + c1.abs().max(c2.abs()).max(mu_star.abs());
    let noise_floor = 10.0 * (p.ivp.atol + p.ivp.rtol * scale) * amplification;
    let y = denoise(PeriodicFunction::from_samples(grid, samples), noise_floor)
        // The bordered row already enforces a zero mean up to integrator
        // accuracy; make it exact.
        .with_zero_mean();

    let res = residual_sup(p, &y, mu_star);
    let int_by = period
        * (p.b.samples().iter().zip(y.samples()).map(|(b, y)| b * y).sum::<f64>()
            / grid.len() as f64);
    let averaging_defect = (int_by - period * mu_star - p.f.integral()).abs();

    Ok(LinearPeriodicSolution {
        y,
        mu_star: Some(mu_star),
        condition_number: cond,
        periodicity_defect: defect,
        residual_sup: res,
        averaging_defect: Some(averaging_defect),
        tracks: FundamentalTracks {
            y1: y1_track,
            y2: y2_track,
            particular: part_track,
            particular_one: Some(one_track),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periodic_fn::PeriodicGrid;
    use std::f64::consts::PI;

    fn grid() -> PeriodicGrid {
        PeriodicGrid::new(1.0, 128)
    }

    fn constant(c: f64) -> PeriodicFunction {
        PeriodicFunction::constant(grid(), c)
    }

    fn problem(
        a: PeriodicFunction,
        lambda: f64,
        b: PeriodicFunction,
        f: PeriodicFunction,
    ) -> LinearPeriodicProblem {
        LinearPeriodicProblem::new(a, lambda, b, f, IvpOptions::default()).unwrap()
    }

    #[test]
    fn single_harmonic_oracle() {
        // (y')' + 2y = cos(2 pi t): harmonic balance gives y = cos / (2 - 4 pi^2)
        let g = grid();
        let f = PeriodicFunction::from_fn(g, |t| (2.0 * PI * t).cos());
        let sol = solve_periodic(&problem(constant(1.0), 0.0, constant(2.0), f)).unwrap();
        let amp = 1.0 / (2.0 - 4.0 * PI * PI);
        assert!((amp + 0.02668).abs() < 1e-4, "sanity on the closed form");
        let mut worst = 0.0f64;
        for (j, t) in g.nodes().enumerate() {
            worst = worst.max((sol.y.samples()[j] - amp * (2.0 * PI * t).cos()).abs());
        }
        assert!(worst < 1e-7, "max deviation from closed form {worst:.3e}");
        assert!(sol.periodicity_defect < 1e-8);
        assert!(sol.residual_sup < 1e-6 * 2.0);
    }

    #[test]
    fn constant_balance_oracle() {
        let sol = solve_periodic(&problem(constant(1.0), 0.0, constant(2.5), constant(3.0))).unwrap();
        for &v in sol.y.samples() {
            assert!((v - 3.0 / 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn damped_harmonic_oracle() {
        // y'' + y' + y = sin(w t): y = Im[e^{iwt} / (1 - w^2 + i w)]
        let g = grid();
        let w = g.omega();
        let f = PeriodicFunction::from_fn(g, |t| (w * t).sin());
        let sol = solve_periodic(&problem(constant(1.0), 1.0, constant(1.0), f)).unwrap();
        let dr = 1.0 - w * w;
        let di = w;
        let den = dr * dr + di * di;
        let mut worst = 0.0f64;
        for (j, t) in g.nodes().enumerate() {
            let exact = ((w * t).sin() * dr - (w * t).cos() * di) / den;
            worst = worst.max((sol.y.samples()[j] - exact).abs());
        }
        assert!(worst < 1e-7, "max deviation from closed form {worst:.3e}");
    }

    #[test]
    fn linearity_of_solve_periodic() {
        let g = grid();
        let a = PeriodicFunction::from_fn(g, |t| 1.5 + 0.3 * (g.omega() * t).cos());
        let b = PeriodicFunction::from_fn(g, |t| 2.0 + 0.5 * (g.omega() * t).sin());
        let f1 = PeriodicFunction::from_fn(g, |t| (g.omega() * t).cos());
        let f2 = PeriodicFunction::from_fn(g, |t| 0.7 * (2.0 * g.omega() * t).sin() + 0.2);
        let fsum = PeriodicFunction::from_samples(
            g,
            f1.samples().iter().zip(f2.samples()).map(|(x, y)| x + y).collect(),
        );
        let mk = |f: PeriodicFunction| {
            solve_periodic(&LinearPeriodicProblem::new(a.clone(), 0.4, b.clone(), f, IvpOptions::default()).unwrap())
                .unwrap()
        };
        let (s1, s2, ssum) = (mk(f1), mk(f2), mk(fsum));
        let mut worst = 0.0f64;
        for j in 0..g.len() {
            let lin = s1.y.samples()[j] + s2.y.samples()[j];
            worst = worst.max((ssum.y.samples()[j] - lin).abs());
        }
        assert!(worst < 1e-8, "linearity violated by {worst:.3e}");
    }

    #[test]
    fn resonant_problem_is_detected() {
        // b = 0 makes constants periodic homogeneous solutions; the 2x2
        // matching system is singular.
        let g = grid();
        let f = PeriodicFunction::from_fn(g, |t| (g.omega() * t).cos());
        let res = solve_periodic(&problem(constant(1.0), 0.0, constant(0.0), f));
        assert!(matches!(res, Err(Error::ResonantLinearProblem { .. })));
    }

    #[test]
    fn zero_average_degenerate_b_oracle() {
        // y'' = mu* + cos(w t): periodicity and zero mean force mu* = 0 and
        // y = -cos(w t) / w^2.
        let g = grid();
        let w = g.omega();
        let f = PeriodicFunction::from_fn(g, |t| (w * t).cos());
        let sol = solve_zero_average(&problem(constant(1.0), 0.0, constant(0.0), f)).unwrap();
        let mu = sol.mu_star.unwrap();
        assert!(mu.abs() < 1e-9, "mu* = {mu:.3e}");
        let mut worst = 0.0f64;
        for (j, t) in g.nodes().enumerate() {
            worst = worst.max((sol.y.samples()[j] + (w * t).cos() / (w * w)).abs());
        }
        assert!(worst < 1e-7);
    }

    #[test]
    fn zero_average_trivial_oracle() {
        // f = 0 in the uniqueness regime: the only solution is (0, 0).
        let g = grid();
        let a = PeriodicFunction::from_fn(g, |t| 1.0 + 0.3 * (g.omega() * t).cos());
        let b = PeriodicFunction::from_fn(g, |t| 0.1 * (g.omega() * t).sin());
        let sol = solve_zero_average(&problem(a, 0.2, b, constant(0.0))).unwrap();
        assert!(sol.mu_star.unwrap().abs() < 1e-10);
        assert!(sol.y.node_sup_abs() < 1e-10);
    }

    #[test]
    fn zero_average_constant_oracle() {
        // 2y = mu* + 5 with zero mean forces y = 0, mu* = -5.
        let sol = solve_zero_average(&problem(constant(1.0), 0.0, constant(2.0), constant(5.0))).unwrap();
        assert!((sol.mu_star.unwrap() + 5.0).abs() < 1e-9);
        assert!(sol.y.node_sup_abs() < 1e-9);
    }

    #[test]
    fn averaging_identity_holds() {
        let g = grid();
        let a = PeriodicFunction::from_fn(g, |t| 1.2 + 0.4 * (g.omega() * t).sin());
        let b = PeriodicFunction::from_fn(g, |t| 0.3 + 0.2 * (g.omega() * t).cos());
        let f = PeriodicFunction::from_fn(g, |t| 0.5 * (g.omega() * t).cos() + 0.1);
        let sol = solve_zero_average(&problem(a, 0.1, b, f)).unwrap();
        assert!(sol.averaging_defect.unwrap() < 1e-8);
        assert!(sol.y.mean().abs() < 1e-12);
        assert!(sol.periodicity_defect < 1e-8);
    }
}
