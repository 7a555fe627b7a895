//! Exact starting solutions of (phi(u'))' + lambda u' = e(t) with prescribed
//! average xi, used as the kappa = 0 end of the continuation.
//!
//! For lambda = 0, u' = psi(E(t) + C0) where E(t) is the running integral of
//! e and C0 is the unique constant making u' mean-free; the map
//! C -> integral psi(E + C) is strictly increasing by monotonicity of psi, so
//! bracketing plus bisection finds C0.
//!
//! For lambda > 0, the substitution p = phi(u') turns the equation into the
//! scalar problem p' + lambda psi(p) = e(t), whose time-T Poincare map
//! p0 -> p(T, p0) is a strictly decreasing contraction; its unique fixed
//! point yields the periodic orbit. Working in the p variable keeps the
//! right-hand side bounded, since psi maps into (-a, a), so the singularity
//! of phi' near |u'| = a never enters.

use crate::error::{Error, Result};
use crate::ivp::{integrate, IvpOptions};
use crate::model::ProblemSpec;
use crate::periodic_fn::{PeriodicFunction, PeriodicGrid};

/// Which of the two constructions produced the base solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseCase {
    /// lambda = 0: constant C0 with zero-mean psi(E + C0).
    LambdaZero { c0: f64 },
    /// lambda > 0: fixed point p0 of the Poincare map.
    LambdaPositive { p0: f64 },
}

/// Periodic base solution of average xi with diagnostics.
#[derive(Debug, Clone)]
pub struct BaseSolutionReport {
    /// u with mean(u) = xi.
    pub u: PeriodicFunction,
    /// u' (zero mean).
    pub uprime: PeriodicFunction,
    pub case: BaseCase,
    /// sup over nodes of |(phi(u'))' + lambda u' - e|, evaluated spectrally.
    pub residual_sup: f64,
    /// A-priori bound alpha = psi(integral |e - lambda u'|) with
    /// sup|u'| <= alpha < a.
    pub alpha_bound: f64,
    /// alpha - sup|u'| (nonnegative when the bound holds).
    pub alpha_margin: f64,
}

/// Bisection to absolute width `width`, then two secant polishing steps.
/// Requires f(lo) and f(hi) of opposite sign and f monotone-ish; returns the
/// refined root.
fn bisect_then_secant(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, width: f64) -> f64 {
    let mut flo = f(lo);
    let fhi = f(hi);
    debug_assert!(flo * fhi <= 0.0, "root not bracketed");
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if (fmid > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    let mut x0 = lo;
    let mut x1 = hi;
    let mut f0 = f(x0);
    let mut f1 = f(x1);
    for _ in 0..2 {
        if f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !x2.is_finite() {
            break;
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f(x1);
    }
    if f1.abs() <= f0.abs() { x1 } else { x0 }
}

fn forcing_samples(spec: &ProblemSpec) -> PeriodicFunction {
    let grid = PeriodicGrid::new(spec.period, spec.grid_size);
    PeriodicFunction::from_fn(grid, |t| spec.forcing.eval(t))
}

fn finish(
    spec: &ProblemSpec,
    xi: f64,
    uprime_raw: &PeriodicFunction,
    case: BaseCase,
) -> BaseSolutionReport {
    // u is xi plus the zero-mean antiderivative of u'; its spectral
    // derivative is exactly the mean-free part of the raw samples.
    let u = uprime_raw.antiderivative_zero_mean().add_constant(xi);
    let uprime = uprime_raw.with_zero_mean();

    let e = forcing_samples(spec);
    let usecond = uprime.derivative(1);
    let mut residual = 0.0f64;
    let mut int_abs_rhs = 0.0f64;
    for j in 0..uprime.len() {
        let z = uprime.samples()[j];
        let r = spec.phi.dphi(z) * usecond.samples()[j] + spec.lambda * z - e.samples()[j];
        residual = residual.max(r.abs());
        int_abs_rhs += (e.samples()[j] - spec.lambda * z).abs();
    }
    int_abs_rhs *= spec.period / uprime.len() as f64;

    let sup_uprime = uprime.sup_abs();
    let alpha = spec.phi.psi(int_abs_rhs).abs();
    BaseSolutionReport {
        u,
        uprime,
        case,
        residual_sup: residual,
        alpha_bound: alpha,
        alpha_margin: alpha - sup_uprime,
    }
}

/// Case 1 of the base construction (lambda = 0).
pub fn base_solution_lambda0(spec: &ProblemSpec, xi: f64) -> Result<BaseSolutionReport> {
    assert_eq!(spec.lambda, 0.0, "lambda must be zero for case 1");
    let e = forcing_samples(spec);
    // E(t) = integral of e from 0 to t, as the spectral antiderivative
    // anchored at E(0) = 0.
    let anti = e.antiderivative_zero_mean();
    let e0 = anti.samples()[0];
    let big_e: Vec<f64> = anti.samples().iter().map(|v| v - e0).collect();

    let psi = |w: f64| spec.phi.psi(w);
    let mean_psi = |c: f64| big_e.iter().map(|&v| psi(v + c)).sum::<f64>() / big_e.len() as f64;

    let sup_e = big_e.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut bracket = sup_e + 1.0;
    loop {
        if mean_psi(-bracket) <= 0.0 && mean_psi(bracket) >= 0.0 {
            break;
        }
        bracket *= 10.0;
        if bracket > sup_e + 1e3 {
            return Err(Error::BracketNotFound(format!(
                "no sign change of the mean of psi(E + C) within |C| <= {bracket:.3e}; \
                 the catalog psi is not an increasing bijection"
            )));
        }
    }
    let c0 = bisect_then_secant(mean_psi, -bracket, bracket, 1e-12);

    let grid = *e.grid();
    let uprime = PeriodicFunction::from_samples(grid, big_e.iter().map(|&v| psi(v + c0)).collect());
    Ok(finish(spec, xi, &uprime, BaseCase::LambdaZero { c0 }))
}

/// Case 2 of the base construction (lambda > 0).
pub fn base_solution_lambda_pos(spec: &ProblemSpec, xi: f64) -> Result<BaseSolutionReport> {
    assert!(spec.lambda > 0.0, "lambda must be positive for case 2");
    let grid = PeriodicGrid::new(spec.period, spec.grid_size);
    let period = spec.period;
    // The fixed-point solve drives everything downstream; integrate tighter
    // than the default so p0 carries ~1e-12.
    let opts = IvpOptions::new(1e-12, 1e-14);

    let flow = |p0: f64, nodes: &[f64]| -> Result<(f64, Vec<[f64; 1]>)> {
        let rhs = |t: f64, p: &[f64; 1], dp: &mut [f64; 1]| {
            dp[0] = spec.forcing.eval(t) - spec.lambda * spec.phi.psi(p[0]);
        };
        let sol = integrate(rhs, 0.0, period, [p0], nodes, &opts)?;
        Ok((sol.final_state[0], sol.samples))
    };

    // |p| can never exceed the running integral of |e| plus lambda a T from
    // any start inside the bracket, so this interval maps into itself.
    let n_quad = grid.len().max(1024);
    let int_abs_e = (0..n_quad)
        .map(|j| spec.forcing.eval(j as f64 * period / n_quad as f64).abs())
        .sum::<f64>()
        / n_quad as f64
        * period;
    let mut big_p = int_abs_e + spec.lambda * spec.phi.half_width * period + 1.0;

    let h = |p0: f64| -> Result<f64> { Ok(flow(p0, &[])?.0 - p0) };
    // h is strictly decreasing: h(-P) > 0 > h(P).
    if !(h(-big_p)? > 0.0 && h(big_p)? < 0.0) {
        big_p *= 10.0;
        if !(h(-big_p)? > 0.0 && h(big_p)? < 0.0) {
            return Err(Error::BracketNotFound(format!(
                "Poincare map sign conditions failed at +-{big_p:.3e}"
            )));
        }
    }
    // bisect on -h so the bracketed function is increasing
    let p0 = bisect_then_secant(|p| -h(p).unwrap_or(f64::NAN), -big_p, big_p, 1e-12);

    let nodes: Vec<f64> = grid.nodes().collect();
    let (p_end, samples) = flow(p0, &nodes)?;
    let fixed_point_defect = (p_end - p0).abs();
    if fixed_point_defect > 1e-9 {
        return Err(Error::Internal(format!(
            "Poincare fixed point defect {fixed_point_defect:.3e} exceeds 1e-9"
        )));
    }

    let z = PeriodicFunction::from_samples(grid, samples.iter().map(|p| spec.phi.psi(p[0])).collect());
    // Integrating p' + lambda psi(p) = e over the period forces mean(z) = 0
    // up to the fixed-point defect.
    if z.mean().abs() > 1e-8 {
        return Err(Error::Internal(format!(
            "mean of u' is {:.3e}, expected 0 to 1e-8 from periodicity of p",
            z.mean()
        )));
    }
    Ok(finish(spec, xi, &z, BaseCase::LambdaPositive { p0 }))
}

/// Dispatch on lambda.
pub fn base_solution(spec: &ProblemSpec, xi: f64) -> Result<BaseSolutionReport> {
    if spec.lambda == 0.0 {
        base_solution_lambda0(spec, xi)
    } else {
        base_solution_lambda_pos(spec, xi)
    }
}
