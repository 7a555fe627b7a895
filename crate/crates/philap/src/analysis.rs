//! Independent verification of computed orbits and detection of the branch
//! features the theory predicts.
//!
//! Verification re-integrates the full nonlinear equation from the stored
//! initial data (u(0), u'(0)) with the computed mu, in the first-order form
//!
//! ```text
//! u' = psi(w),    w' = -lambda psi(w) - k g(u) + mu + e(t),
//! ```
//!
//! where w = phi(u'). The w formulation keeps the right-hand side bounded,
//! so no division by phi' happens near the domain edge. An orbit passes when
//! its periodicity defect |u(T) - u(0)| + |u'(T) - u'(0)| stays below 1e-6.

use serde::Serialize;

use crate::continuation::{BranchCurve, PeriodicSolution};
use crate::error::Error;
use crate::ivp::{integrate, IvpOptions};
use crate::model::{GShape, ProblemSpec};
use crate::periodic_fn::PeriodicGrid;

/// Shooting verification acceptance threshold.
pub const SHOOTING_DEFECT_TOL: f64 = 1e-6;

/// Result of re-integrating one orbit from its initial data.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    /// |u(T) - u(0)| + |u'(T) - u'(0)| from re-integration.
    pub periodicity_defect: f64,
    /// Max deviation between the re-integrated orbit and the spectral
    /// solution at the grid nodes.
    pub max_node_deviation: f64,
    pub passed: bool,
    /// Set when the re-integration itself failed (blow-up time).
    pub failure_time: Option<f64>,
}

/// Integrate u' = psi(w), w' = -lambda psi(w) - k g(u) + mu + e(t) from
/// (u0, phi(uprime0)) over one period. Returns the periodicity defect and the
/// (u, u') track at the requested sample times.
pub fn reintegrate_orbit(
    spec: &ProblemSpec,
    u0: f64,
    uprime0: f64,
    mu: f64,
    ivp: &IvpOptions,
    sample_times: &[f64],
) -> crate::error::Result<(f64, Vec<[f64; 2]>)> {
    let rhs = |t: f64, y: &[f64; 2], dy: &mut [f64; 2]| {
        let uprime = spec.phi.psi(y[1]);
        dy[0] = uprime;
        dy[1] = -spec.lambda * uprime - spec.k * spec.g.g(y[0]) + mu + spec.forcing.eval(t);
    };
    let y0 = [u0, spec.phi.phi(uprime0)];
    let res = integrate(rhs, 0.0, spec.period, y0, sample_times, ivp)?;
    let end = res.final_state;
    let defect = (end[0] - u0).abs() + (spec.phi.psi(end[1]) - uprime0).abs();
    let track = res
        .samples
        .iter()
        .map(|s| [s[0], spec.phi.psi(s[1])])
        .collect();
    Ok((defect, track))
}

/// Re-integrate `sol` over one period and measure the periodicity defect.
pub fn verify_by_shooting(
    spec: &ProblemSpec,
    sol: &PeriodicSolution,
    ivp: &IvpOptions,
) -> VerificationReport {
    let grid = PeriodicGrid::new(spec.period, spec.grid_size);
    let nodes: Vec<f64> = grid.nodes().collect();
    match reintegrate_orbit(spec, sol.u0, sol.uprime0, sol.mu, ivp, &nodes) {
        Ok((defect, track)) => {
            let mut deviation = 0.0f64;
            for (s, &u_spectral) in track.iter().zip(sol.u_zero_mean.samples()) {
                deviation = deviation.max((s[0] - (sol.xi + u_spectral)).abs());
            }
            VerificationReport {
                periodicity_defect: defect,
                max_node_deviation: deviation,
                passed: defect < SHOOTING_DEFECT_TOL,
                failure_time: None,
            }
        }
        Err(err) => {
            let t = match err {
                Error::StepSizeUnderflow { t }
                | Error::DomainEscape { t }
                | Error::MaxStepsExceeded { t, .. } => t,
                _ => f64::NAN,
            };
            VerificationReport {
                periodicity_defect: f64::INFINITY,
                max_node_deviation: f64::INFINITY,
                passed: false,
                failure_time: Some(t),
            }
        }
    }
}

/// Run shooting verification on every point of a curve, attaching the reports.
/// Returns the number of failures.
pub fn verify_curve(curve: &mut BranchCurve, spec: &ProblemSpec, ivp: &IvpOptions) -> usize {
    let mut failures = 0;
    for p in &mut curve.points {
        let report = verify_by_shooting(spec, &p.solution, ivp);
        if !report.passed {
            failures += 1;
        }
        p.verification = Some(report);
    }
    failures
}

/// Features of a computed branch mu = mu(xi).
#[derive(Debug, Clone, Serialize)]
pub struct BranchFeatures {
    /// Average mu over the first/last 5 sweep points: limit estimates.
    pub mu_left_end: f64,
    pub mu_right_end: f64,
    /// Global extrema of mu over the sweep.
    pub mu_min: f64,
    pub mu_max: f64,
    /// sup over the overlap of |mu(xi + p) - mu(xi)| for periodic g;
    /// `None` when g is not periodic or the sweep is shorter than p.
    pub shift_periodicity_defect: Option<f64>,
    /// xi values where mu changes sign (linear interpolation).
    pub zero_crossings: Vec<f64>,
    /// (mu, solution count) samples at 0 and the half-extremes.
    pub multiplicity_samples: Vec<MultiplicitySample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplicitySample {
    pub mu: f64,
    pub count: usize,
    /// True when the count is per period of g, false when per sweep.
    pub per_period: bool,
}

/// Interpolate the branch at xi with a 6-point Lagrange stencil. The curve is
/// analytic in xi, so on a 0.1 grid the stencil error sits near 1e-9.
fn interp_mu(xis: &[f64], mus: &[f64], xi: f64) -> f64 {
    let n = xis.len();
    debug_assert!(n >= 2);
    let stencil = 6.min(n);
    // first node >= xi
    let pos = xis.partition_point(|&x| x < xi);
    let lo = pos.saturating_sub(stencil / 2).min(n - stencil);
    let xs = &xis[lo..lo + stencil];
    let ys = &mus[lo..lo + stencil];
    let mut acc = 0.0;
    for i in 0..stencil {
        let mut w = ys[i];
        for j in 0..stencil {
            if i != j {
                w *= (xi - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += w;
    }
    acc
}

fn sign_changes(xis: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..values.len() {
        let (v0, v1) = (values[i - 1], values[i]);
        if v0 == 0.0 {
            if i == 1 {
                out.push(xis[0]);
            }
            continue;
        }
        if v0 * v1 < 0.0 {
            out.push(xis[i - 1] + (xis[i] - xis[i - 1]) * v0 / (v0 - v1));
        } else if v1 == 0.0 {
            out.push(xis[i]);
        }
    }
    out
}

/// Count solutions of mu(xi) = mu_query, per period of g when g is periodic
/// and the sweep covers at least one period, per sweep otherwise. Valid
/// because xi is a global parameter in the validated regime, so crossings of
/// the level are in bijection with solutions.
pub fn multiplicity_at(curve: &BranchCurve, spec: &ProblemSpec, mu_query: f64) -> MultiplicitySample {
    let (xis, mus) = sorted_branch(curve);
    let shifted: Vec<f64> = mus.iter().map(|m| m - mu_query).collect();
    let crossings = sign_changes(&xis, &shifted);
    if let GShape::Periodic { period } = spec.g.shape {
        let span = xis.last().unwrap() - xis[0];
        if span >= period {
            let window_end = xis[0] + period;
            let count = crossings.iter().filter(|&&x| x < window_end).count();
            return MultiplicitySample { mu: mu_query, count, per_period: true };
        }
    }
    MultiplicitySample { mu: mu_query, count: crossings.len(), per_period: false }
}

fn sorted_branch(curve: &BranchCurve) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> =
        curve.points.iter().map(|p| (p.solution.xi, p.solution.mu)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite xi"));
    pairs.into_iter().unzip()
}

/// Detect the theorem-level features of a computed branch.
pub fn branch_features(curve: &BranchCurve, spec: &ProblemSpec) -> BranchFeatures {
    assert!(!curve.points.is_empty(), "curve must be non-empty");
    let (xis, mus) = sorted_branch(curve);
    let n = mus.len();
    let tail = 5.min(n);
    let mu_left_end = mus[..tail].iter().sum::<f64>() / tail as f64;
    let mu_right_end = mus[n - tail..].iter().sum::<f64>() / tail as f64;
    let mu_min = mus.iter().copied().fold(f64::INFINITY, f64::min);
    let mu_max = mus.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let shift_periodicity_defect = match spec.g.shape {
        GShape::Periodic { period } if n >= 2 && xis[n - 1] - xis[0] >= period => {
            let mut worst = 0.0f64;
            for i in 0..n {
                let target = xis[i] + period;
                if target > xis[n - 1] + 1e-12 {
                    break;
                }
                worst = worst.max((interp_mu(&xis, &mus, target) - mus[i]).abs());
            }
            Some(worst)
        }
        _ => None,
    };

    let zero_crossings = sign_changes(&xis, &mus);
    let multiplicity_samples = [0.0, 0.5 * mu_min, 0.5 * mu_max]
        .iter()
        .map(|&mq| multiplicity_at(curve, spec, mq))
        .collect();

    BranchFeatures {
        mu_left_end,
        mu_right_end,
        mu_min,
        mu_max,
        shift_periodicity_defect,
        zero_crossings,
        multiplicity_samples,
    }
}

/// One inequality check: lhs <= rhs with the margin rhs - lhs recorded.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IneqCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub margin: f64,
}

impl IneqCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        // equality cases are legitimate; allow rounding-level slack
        let holds = lhs <= rhs + 1e-12 * (1.0 + rhs.abs());
        Self { lhs, rhs, holds, margin: rhs - lhs }
    }
}

/// A-priori inequality audit of one solution. Failures are reported, never
/// thrown.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    /// sup^2 |U| <= (T/12) int U'^2.
    pub sobolev: IneqCheck,
    /// int U'^2 >= omega^2 int U^2 (stored as lhs = omega^2 int U^2).
    pub wirtinger: IneqCheck,
    /// int U'^2 <= a^2 T.
    pub energy: IneqCheck,
    /// sup |U| <= a T / (2 sqrt 3), present when a T < pi sqrt 3.
    pub two_solution_bound: Option<IneqCheck>,
    pub all_hold: bool,
}

pub fn inequality_audit(sol: &PeriodicSolution, spec: &ProblemSpec) -> AuditReport {
    let norms = sol.u_zero_mean.norms();
    let h1_sq = norms.h1 * norms.h1;
    let l2_sq = norms.l2 * norms.l2;
    let omega = spec.omega();
    let a = spec.phi.half_width;

    let sobolev = IneqCheck::new(norms.sup * norms.sup, spec.period / 12.0 * h1_sq);
    let wirtinger = IneqCheck::new(omega * omega * l2_sq, h1_sq);
    let energy = IneqCheck::new(h1_sq, a * a * spec.period);
    let two_solution_bound = (a * spec.period < std::f64::consts::PI * 3.0f64.sqrt())
        .then(|| IneqCheck::new(norms.sup, a * spec.period / (2.0 * 3.0f64.sqrt())));
    let all_hold = sobolev.holds
        && wirtinger.holds
        && energy.holds
        && two_solution_bound.map_or(true, |c| c.holds);
    AuditReport { sobolev, wirtinger, energy, two_solution_bound, all_hold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{solve_at_xi, sweep_xi, SolverOptions};
    use crate::model::{make_g, make_phi, Forcing, ProblemSpec};

    fn fig3() -> ProblemSpec {
        ProblemSpec::new(
            make_phi("relativistic").unwrap(),
            make_g("sin").unwrap(),
            0.1,
            0.1,
            1.0,
            Forcing::single("cos", 0.15, 1.0).unwrap(),
            256,
        )
        .unwrap()
    }

    fn unforced() -> ProblemSpec {
        ProblemSpec::new(
            make_phi("relativistic").unwrap(),
            make_g("sin").unwrap(),
            0.05,
            0.2,
            1.0,
            Forcing::zero(1.0),
            128,
        )
        .unwrap()
    }

    #[test]
    fn constant_solution_verifies_exactly() {
        let spec = unforced();
        let opts = SolverOptions::default();
        let sol = solve_at_xi(&spec, 0.9, None, &opts).unwrap();
        let rep = verify_by_shooting(&spec, &sol, &opts.ivp);
        assert!(rep.passed);
        assert!(rep.periodicity_defect < 1e-9, "defect {:.3e}", rep.periodicity_defect);
        assert!(rep.max_node_deviation < 1e-9);
    }

    #[test]
    fn figure3_point_verifies() {
        let spec = fig3();
        let opts = SolverOptions::default();
        let sol = solve_at_xi(&spec, 5.0, None, &opts).unwrap();
        let rep = verify_by_shooting(&spec, &sol, &opts.ivp);
        assert!(rep.passed, "defect {:.3e}", rep.periodicity_defect);
    }

    #[test]
    fn corrupted_mu_fails_verification() {
        // negative control: perturbing mu by 0.01 destroys periodicity
        let spec = fig3();
        let opts = SolverOptions::default();
        let mut sol = solve_at_xi(&spec, 5.0, None, &opts).unwrap();
        sol.mu += 0.01;
        let rep = verify_by_shooting(&spec, &sol, &opts.ivp);
        assert!(!rep.passed);
        assert!(rep.periodicity_defect > 1e-3, "defect {:.3e}", rep.periodicity_defect);
    }

    #[test]
    fn features_of_unforced_sine_curve() {
        let spec = unforced();
        let opts = SolverOptions::default();
        // 2 pi / 0.35 ~ 18 steps per period; sweep 1.5 periods
        let mut curve = sweep_xi(&spec, 0.0, 0.35, 27, &opts).unwrap();
        assert_eq!(verify_curve(&mut curve, &spec, &opts.ivp), 0);
        let f = branch_features(&curve, &spec);
        assert!((f.mu_max - 0.2).abs() < 1e-3);
        assert!((f.mu_min + 0.2).abs() < 1e-3);
        // mu = 0.2 sin(xi) crosses zero near 0, pi, 2 pi within the sweep
        assert!(f.zero_crossings.len() >= 3);
        assert!((f.zero_crossings[1] - std::f64::consts::PI).abs() < 1e-6);
        // two solutions per period at mu = 0.1
        let m = multiplicity_at(&curve, &spec, 0.1);
        assert!(m.per_period);
        assert_eq!(m.count, 2);
    }

    #[test]
    fn interp_mu_reproduces_analytic_curve() {
        let xis: Vec<f64> = (0..80).map(|i| i as f64 * 0.1).collect();
        let mus: Vec<f64> = xis.iter().map(|x| 0.2 * x.sin()).collect();
        for &x in &[0.317, 3.9514, 6.2831853] {
            let err = (interp_mu(&xis, &mus, x) - 0.2 * x.sin()).abs();
            assert!(err < 1e-8, "interp error {err:.3e} at {x}");
        }
    }

    #[test]
    fn audit_trivial_and_figure3() {
        let spec = unforced();
        let opts = SolverOptions::default();
        let sol = solve_at_xi(&spec, 0.4, None, &opts).unwrap();
        let audit = inequality_audit(&sol, &spec);
        assert!(audit.all_hold, "{audit:?}");

        let spec3 = fig3();
        let sol3 = solve_at_xi(&spec3, 5.0, None, &opts).unwrap();
        let audit3 = inequality_audit(&sol3, &spec3);
        assert!(audit3.all_hold, "{audit3:?}");
        // aT = 1 < pi sqrt 3, so the sup bound aT/(2 sqrt 3) ~ 0.2887 applies
        let bound = audit3.two_solution_bound.unwrap();
        assert!((bound.rhs - 1.0 / (2.0 * 3.0f64.sqrt())).abs() < 1e-12);
        assert!(bound.holds);
    }
}
