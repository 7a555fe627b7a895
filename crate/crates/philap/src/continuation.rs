//! The core engine: Newton iteration for the zero-mean equation
//!
//! ```text
//! F(U) = (phi(U'))' + lambda U' + kappa g(xi + U) - (kappa/T) int g(xi + U) = e(t)
//! ```
//!
//! at fixed (xi, kappa), continuation in kappa from the exactly solvable
//! kappa = 0 base solution up to kappa = k, a sweep in xi with warm starts,
//! and the average-equation evaluation mu = (k/T) int g(xi + U).
//!
//! Each Newton step linearizes F at the current iterate U_n and hands the
//! coefficients to the zero-average linear solver:
//!
//! ```text
//! a(t) = phi'(U_n'),   b(t) = kappa g'(xi + U_n),
//! f(t) = phi''(U_n') U_n' U_n'' + kappa g'(xi + U_n) U_n - kappa g(xi + U_n) + e(t),
//! ```
//!
//! where the first term of f is d/dt(phi'(U_n')U_n' - phi(U_n')) written out
//! by the chain rule, with U_n' and U_n'' computed spectrally. a'(t) is also
//! formed by the chain rule, phi''(U_n') U_n'', rather than by differentiating
//! the sampled composite.

use crate::analysis::VerificationReport;
use crate::error::{Error, Result};
use crate::ivp::IvpOptions;
use crate::linear_periodic::{solve_zero_average, LinearPeriodicProblem};
use crate::model::ProblemSpec;
use crate::periodic_fn::{node_sup_diff, PeriodicFunction, PeriodicGrid};
use crate::phi_linear::base_solution;

/// Margin keeping iterates away from the edge of the phi domain.
pub const DOMAIN_MARGIN: f64 = 1e-6;
/// Relative spectral compression applied to Newton coefficient functions.
const COEFF_COMPRESS: f64 = 1e-15;

/// Newton/continuation parameters.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop when the correction sup norm falls below this.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Uniform kappa-continuation steps from 0 to k for a cold start.
    pub n_kappa_steps: usize,
    pub ivp: IvpOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { newton_tol: 1e-10, max_newton_iters: 12, n_kappa_steps: 10, ivp: IvpOptions::default() }
    }
}

/// One Newton step: the new iterate and its diagnostics.
#[derive(Debug, Clone)]
pub struct NewtonStepReport {
    pub iterate: usize,
    /// U_{n+1}, zero mean.
    pub u_next: PeriodicFunction,
    pub mu_star: f64,
    /// sup |F(U_n) - e| before the step.
    pub residual_sup: f64,
    /// sup |U_{n+1} - U_n|.
    pub correction_sup: f64,
    /// |mu* - (kappa/T) int [g(xi+U_n) + g'(xi+U_n)(U_{n+1} - U_n)]|.
    pub mu_star_identity_defect: f64,
    /// Averaging-identity defect of the underlying linear solve.
    pub averaging_defect: f64,
    pub condition_number: f64,
}

/// Aggregated Newton statistics for one accepted branch point.
#[derive(Debug, Clone, Default)]
pub struct NewtonStats {
    /// Iterations of the final solve at kappa = k.
    pub iterations: usize,
    /// Correction sup norms of the final solve, in order.
    pub corrections: Vec<f64>,
    /// Iterations summed over all kappa stages.
    pub total_iterations: usize,
    /// Number of kappa-continuation stages (0 for a warm start).
    pub kappa_stages: usize,
    /// Worst mu*-identity defect seen across all Newton steps.
    pub max_identity_defect: f64,
    /// Worst averaging-identity defect seen across all Newton steps.
    pub max_averaging_defect: f64,
}

/// A solved T-periodic orbit u = xi + U.
#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    pub xi: f64,
    pub mu: f64,
    /// Zero-mean part U.
    pub u_zero_mean: PeriodicFunction,
    /// u(0) and u'(0), the initial data handed to shooting verification.
    pub u0: f64,
    pub uprime0: f64,
    /// sup |u'| over a refined mesh; strictly below the domain half-width.
    pub sup_uprime: f64,
    /// sup u - inf u over a refined mesh.
    pub variation: f64,
    pub newton: NewtonStats,
    /// Coupling at which the orbit was accepted (= spec.k).
    pub kappa: f64,
    /// sup over nodes of the full-equation residual with this mu.
    pub residual_sup: f64,
    /// A-priori bound alpha = psi(int |k g(u) - mu - e + lambda u'|) with
    /// sup|u'| <= alpha < a.
    pub alpha_bound: f64,
}

/// One recorded sweep point.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub solution: PeriodicSolution,
    /// Filled in by `analysis::verify_curve`.
    pub verification: Option<VerificationReport>,
}

/// Ordered sweep result: (xi_i, mu_i) with the attached solutions.
#[derive(Debug, Clone)]
pub struct BranchCurve {
    pub points: Vec<BranchPoint>,
    /// xi targets where Newton failed even after step halving.
    pub unsolved: Vec<f64>,
    pub xi0: f64,
    pub dxi: f64,
    pub nsteps: usize,
}

impl BranchCurve {
    pub fn xis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.solution.xi).collect()
    }

    pub fn mus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.solution.mu).collect()
    }
}

fn grid_of(spec: &ProblemSpec) -> PeriodicGrid {
    PeriodicGrid::new(spec.period, spec.grid_size)
}

fn forcing_samples(spec: &ProblemSpec) -> PeriodicFunction {
    PeriodicFunction::from_fn(grid_of(spec), |t| spec.forcing.eval(t))
}

/// (kappa/T) int g(xi + U) dt by periodic trapezoid.
fn g_average(spec: &ProblemSpec, xi: f64, u: &PeriodicFunction, kappa: f64) -> f64 {
    kappa * u.samples().iter().map(|&v| spec.g.g(xi + v)).sum::<f64>() / u.len() as f64
}

/// One Newton step at fixed (xi, kappa) from the iterate `u_n`.
pub fn newton_step(
    spec: &ProblemSpec,
    xi: f64,
    kappa: f64,
    u_n: &PeriodicFunction,
    iterate: usize,
    opts: &SolverOptions,
) -> Result<NewtonStepReport> {
    let limit = spec.phi.half_width - DOMAIN_MARGIN;
    let uprime = u_n.derivative(1);
    let sup_uprime = uprime.node_sup_abs();
    if sup_uprime >= limit {
        return Err(Error::IterateLeftDomain { sup_uprime, limit });
    }
    let usecond = u_n.derivative(2);
    let e = forcing_samples(spec);

    let n = u_n.len();
    let mut a = Vec::with_capacity(n);
    let mut a_deriv = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for j in 0..n {
        let up = uprime.samples()[j];
        let us = usecond.samples()[j];
        let uv = u_n.samples()[j];
        let d2 = spec.phi.d2phi(up);
        a.push(spec.phi.dphi(up));
        a_deriv.push(d2 * us);
        b.push(kappa * spec.g.dg(xi + uv));
        f.push(d2 * up * us + kappa * spec.g.dg(xi + uv) * uv - kappa * spec.g.g(xi + uv)
            + e.samples()[j]);
    }
    let grid = *u_n.grid();
    let problem = LinearPeriodicProblem::with_a_deriv(
        PeriodicFunction::from_samples(grid, a).compress(COEFF_COMPRESS),
        PeriodicFunction::from_samples(grid, a_deriv).compress(COEFF_COMPRESS),
        spec.lambda,
        PeriodicFunction::from_samples(grid, b).compress(COEFF_COMPRESS),
        PeriodicFunction::from_samples(grid, f).compress(COEFF_COMPRESS),
        opts.ivp,
    )?;
    let lin = solve_zero_average(&problem)?;
    let u_next = lin.y;
    let mu_star = lin.mu_star.expect("zero-average solve carries mu*");

    // residual of F(U_n) - e before the step
    let g_mean = g_average(spec, xi, u_n, kappa);
    let mut residual = 0.0f64;
    for j in 0..n {
        let up = uprime.samples()[j];
        let us = usecond.samples()[j];
        let r = spec.phi.dphi(up) * us + spec.lambda * up
            + kappa * spec.g.g(xi + u_n.samples()[j])
            - g_mean
            - e.samples()[j];
        residual = residual.max(r.abs());
    }

    // mu* identity: integrate the linearized equation over one period
    let predicted = kappa
        * u_n
            .samples()
            .iter()
            .zip(u_next.samples())
            .map(|(&uv, &un)| spec.g.g(xi + uv) + spec.g.dg(xi + uv) * (un - uv))
            .sum::<f64>()
        / n as f64;
    let identity_defect = (mu_star - predicted).abs();

    let correction = node_sup_diff(&u_next, u_n);
    Ok(NewtonStepReport {
        iterate,
        u_next,
        mu_star,
        residual_sup: residual,
        correction_sup: correction,
        mu_star_identity_defect: identity_defect,
        averaging_defect: lin.averaging_defect.unwrap_or(0.0),
        condition_number: lin.condition_number,
    })
}

/// Newton iteration at fixed (xi, kappa) until the correction sup norm drops
/// below the tolerance. Returns the converged iterate with per-step records.
fn newton_solve(
    spec: &ProblemSpec,
    xi: f64,
    kappa: f64,
    u_start: &PeriodicFunction,
    opts: &SolverOptions,
) -> Result<(PeriodicFunction, NewtonStats)> {
    let mut u = u_start.clone();
    let mut stats = NewtonStats::default();
    for it in 1..=opts.max_newton_iters {
        let report = newton_step(spec, xi, kappa, &u, it, opts)?;
        stats.iterations = it;
        stats.total_iterations += 1;
        stats.corrections.push(report.correction_sup);
        stats.max_identity_defect = stats.max_identity_defect.max(report.mu_star_identity_defect);
        stats.max_averaging_defect = stats.max_averaging_defect.max(report.averaging_defect);
        u = report.u_next;
        if report.correction_sup < opts.newton_tol {
            return Ok((u, stats));
        }
    }
    Err(Error::NewtonDidNotConverge {
        xi,
        kappa,
        last_correction: *stats.corrections.last().unwrap_or(&f64::NAN),
        iterations: stats.iterations,
    })
}

fn assemble_solution(
    spec: &ProblemSpec,
    xi: f64,
    u: PeriodicFunction,
    stats: NewtonStats,
) -> Result<PeriodicSolution> {
    let mu = g_average(spec, xi, &u, spec.k);
    let uprime = u.derivative(1);
    let usecond = u.derivative(2);
    let e = forcing_samples(spec);

    let mut residual = 0.0f64;
    let mut int_abs = 0.0f64;
    for j in 0..u.len() {
        let up = uprime.samples()[j];
        let gu = spec.g.g(xi + u.samples()[j]);
        let r = spec.phi.dphi(up) * usecond.samples()[j] + spec.lambda * up + spec.k * gu
            - mu
            - e.samples()[j];
        residual = residual.max(r.abs());
        int_abs += (spec.k * gu - mu - e.samples()[j] + spec.lambda * up).abs();
    }
    int_abs *= spec.period / u.len() as f64;
    let alpha = spec.phi.psi(int_abs).abs();

    let sup_uprime = uprime.sup_abs();
    if sup_uprime >= spec.phi.half_width {
        return Err(Error::IterateLeftDomain { sup_uprime, limit: spec.phi.half_width });
    }
    let (lo, hi) = u.refined_extrema();
    let u0 = xi + u.samples()[0];
    let uprime0 = uprime.samples()[0];
    Ok(PeriodicSolution {
        xi,
        mu,
        u_zero_mean: u,
        u0,
        uprime0,
        sup_uprime,
        variation: hi - lo,
        newton: stats,
        kappa: spec.k,
        residual_sup: residual,
        alpha_bound: alpha,
    })
}

/// Solve at a fixed average xi. With a warm start (the solution at a nearby
/// xi) Newton runs directly at kappa = k; otherwise the orbit is grown from
/// the exact kappa = 0 base solution by continuation in kappa, halving the
/// kappa step on Newton failure down to 1e-4 k.
pub fn solve_at_xi(
    spec: &ProblemSpec,
    xi: f64,
    warm_start: Option<&PeriodicSolution>,
    opts: &SolverOptions,
) -> Result<PeriodicSolution> {
    if let Some(w) = warm_start {
        let (u, stats) = newton_solve(spec, xi, spec.k, &w.u_zero_mean, opts)?;
        return assemble_solution(spec, xi, u, stats);
    }

    let base = base_solution(spec, xi)?;
    let mut u = base.u.add_constant(-xi);
    let dk0 = spec.k / opts.n_kappa_steps.max(1) as f64;
    let mut dk = dk0;
    let mut kappa = 0.0;
    let mut successes = 0usize;
    let mut agg = NewtonStats::default();
    let mut last = NewtonStats::default();
    while kappa < spec.k {
        let kappa_next = (kappa + dk).min(spec.k);
        match newton_solve(spec, xi, kappa_next, &u, opts) {
            Ok((u_new, st)) => {
                u = u_new;
                kappa = kappa_next;
                successes += 1;
                agg.kappa_stages += 1;
                agg.total_iterations += st.total_iterations;
                agg.max_identity_defect = agg.max_identity_defect.max(st.max_identity_defect);
                agg.max_averaging_defect = agg.max_averaging_defect.max(st.max_averaging_defect);
                last = st;
                if successes >= 2 {
                    dk = (2.0 * dk).min(dk0);
                }
            }
            Err(err) => {
                successes = 0;
                dk *= 0.5;
                if dk < 1e-4 * spec.k {
                    return Err(err);
                }
            }
        }
    }
    agg.iterations = last.iterations;
    agg.corrections = last.corrections;
    assemble_solution(spec, xi, u, agg)
}

/// Warm-started advance from a solved point to `target_xi`, bisecting the
/// interval (up to `depth` times) when Newton fails: the xi step is halved on
/// failure and restored once the bridge reaches the target.
fn advance(
    spec: &ProblemSpec,
    from: &PeriodicSolution,
    target_xi: f64,
    depth: usize,
    opts: &SolverOptions,
) -> Result<PeriodicSolution> {
    match solve_at_xi(spec, target_xi, Some(from), opts) {
        Ok(sol) => Ok(sol),
        Err(_) if depth > 0 => {
            let mid_xi = 0.5 * (from.xi + target_xi);
            let mid = advance(spec, from, mid_xi, depth - 1, opts)?;
            advance(spec, &mid, target_xi, depth - 1, opts)
        }
        Err(err) => Err(err),
    }
}

/// Sweep xi_i = xi0 + i dxi for i = 0..=nsteps. The first point is solved by
/// kappa-continuation; every later point warm-starts from its predecessor.
/// Interior failures are flagged and the sweep continues.
pub fn sweep_xi(
    spec: &ProblemSpec,
    xi0: f64,
    dxi: f64,
    nsteps: usize,
    opts: &SolverOptions,
) -> Result<BranchCurve> {
    assert!(dxi != 0.0, "dxi must be nonzero");
    let first = solve_at_xi(spec, xi0, None, opts)
        .map_err(|e| Error::FirstPointUnsolvable { xi: xi0, source: Box::new(e) })?;
    let mut points = vec![BranchPoint { solution: first, verification: None }];
    let mut unsolved = Vec::new();
    for i in 1..=nsteps {
        let target = xi0 + i as f64 * dxi;
        let prev = &points.last().expect("nonempty").solution;
        match advance(spec, prev, target, 6, opts) {
            Ok(sol) => points.push(BranchPoint { solution: sol, verification: None }),
            Err(_) => unsolved.push(target),
        }
    }
    Ok(BranchCurve { points, unsolved, xi0, dxi, nsteps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_g, make_phi, Forcing, ProblemSpec};

    pub(crate) fn figure3_spec() -> ProblemSpec {
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

    fn unforced_spec(k: f64) -> ProblemSpec {
        ProblemSpec::new(
            make_phi("relativistic").unwrap(),
            make_g("sin").unwrap(),
            0.1,
            k,
            1.0,
            Forcing::zero(1.0),
            128,
        )
        .unwrap()
    }

    #[test]
    fn constant_solution_is_a_newton_fixed_point() {
        // e = 0 and U_0 = 0: the step returns U_1 = 0 with mu* = kappa g(xi)
        let spec = unforced_spec(0.1);
        let xi = 0.8;
        let kappa = 0.07;
        let u0 = PeriodicFunction::constant(PeriodicGrid::new(1.0, 128), 0.0);
        let rep = newton_step(&spec, xi, kappa, &u0, 1, &SolverOptions::default()).unwrap();
        assert!(rep.u_next.node_sup_abs() < 1e-11, "U_1 = {:.3e}", rep.u_next.node_sup_abs());
        assert!((rep.mu_star - kappa * xi.sin()).abs() < 1e-11);
        assert!(rep.mu_star_identity_defect < 1e-10);
    }

    #[test]
    fn unforced_curve_is_k_sin_xi() {
        let spec = unforced_spec(0.37);
        let curve = sweep_xi(&spec, -1.0, 0.5, 6, &SolverOptions::default()).unwrap();
        assert_eq!(curve.points.len(), 7);
        assert!(curve.unsolved.is_empty());
        for p in &curve.points {
            let exact = 0.37 * p.solution.xi.sin();
            assert!(
                (p.solution.mu - exact).abs() < 1e-10,
                "mu({}) = {} vs {}",
                p.solution.xi,
                p.solution.mu,
                exact
            );
        }
    }

    #[test]
    fn figure3_point_and_convergence() {
        let spec = figure3_spec();
        let opts = SolverOptions::default();
        let sol = solve_at_xi(&spec, 5.0, None, &opts).unwrap();
        assert!(
            sol.mu > -0.09687 && sol.mu < -0.09587,
            "mu(5) = {:.6} outside the accepted window",
            sol.mu
        );
        assert!(sol.variation >= 0.002 && sol.variation <= 0.008, "variation {:.5}", sol.variation);
        assert!(sol.newton.max_identity_defect < 1e-8);
        assert!(sol.residual_sup < 1e-6);
        assert!(sol.u_zero_mean.mean().abs() < 1e-10);
        // Lemma-2.3 domain bound
        assert!(sol.sup_uprime <= sol.alpha_bound + 1e-12);
        assert!(sol.alpha_bound < spec.phi.half_width);
    }

    #[test]
    fn newton_contraction_is_quadratic() {
        // Jump from a converged point at xi = 4.5 straight to xi = 5 so the
        // first correction is far above the tolerance, then check
        // c_{n+1} <= C c_n^2 on the usable pairs.
        let spec = figure3_spec();
        let opts = SolverOptions::default();
        let at45 = solve_at_xi(&spec, 4.5, None, &opts).unwrap();
        let sol = solve_at_xi(&spec, 5.0, Some(&at45), &opts).unwrap();
        let c = &sol.newton.corrections;
        assert!(c.len() >= 2, "warm start converged too fast to observe: {c:?}");
        let mut checked = 0;
        for w in c.windows(2) {
            let (c0, c1) = (w[0], w[1]);
            if c0 > 1e-12 && c1 > 1e-13 {
                assert!(c1 <= 1e3 * c0 * c0, "not quadratic: {c0:.3e} -> {c1:.3e}");
                checked += 1;
            }
        }
        assert!(checked >= 1 || c[0] < 1e-10, "no usable correction pair in {c:?}");
    }

    #[test]
    fn warm_start_path_independence() {
        // kappa-continuation straight at xi = 2 vs sweeping from xi = 0
        let spec = figure3_spec();
        let opts = SolverOptions::default();
        let direct = solve_at_xi(&spec, 2.0, None, &opts).unwrap();
        let swept = sweep_xi(&spec, 0.0, 0.5, 4, &opts).unwrap();
        let last = &swept.points.last().unwrap().solution;
        assert!((last.xi - 2.0).abs() < 1e-12);
        assert!(
            (direct.mu - last.mu).abs() < 1e-8,
            "direct mu {} vs swept mu {}",
            direct.mu,
            last.mu
        );
    }

    #[test]
    fn iterate_outside_domain_is_rejected() {
        let spec = figure3_spec();
        let g = PeriodicGrid::new(1.0, 256);
        // sup|U'| = 0.9999995 breaches the 1e-6 margin
        let amp = (1.0 - 5e-7) / g.omega();
        let u = PeriodicFunction::from_fn(g, |t| amp * (g.omega() * t).sin());
        let res = newton_step(&spec, 0.0, 0.05, &u, 1, &SolverOptions::default());
        assert!(matches!(res, Err(Error::IterateLeftDomain { .. })));
    }
}
