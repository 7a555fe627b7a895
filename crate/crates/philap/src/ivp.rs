//! Adaptive Dormand-Prince 5(4) integrator with dense output.
//!
//! Used to build fundamental solutions of the periodic linear problem and to
//! re-integrate computed orbits for verification. The dimension is a const
//! generic so the stacked fundamental-solution systems monomorphize without
//! heap traffic in the inner loop.

use crate::error::{Error, Result};

/// Tolerances and limits for one integration.
#[derive(Debug, Clone, Copy)]
pub struct IvpOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IvpOptions {
    fn default() -> Self {
        // Newton convergence and the 2x2/3x3 matching systems need the
        // fundamental solutions accurate well below the Newton tolerance.
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 10_000_000 }
    }
}

impl IvpOptions {
    pub fn new(rtol: f64, atol: f64) -> Self {
        assert!(rtol > 0.0 && atol > 0.0, "tolerances must be positive");
        Self { rtol, atol, ..Self::default() }
    }
}

/// States at the requested sample times plus the final state and step counts.
#[derive(Debug, Clone)]
pub struct IvpSolution<const D: usize> {
    pub samples: Vec<[f64; D]>,
    pub final_state: [f64; D],
    pub accepted: usize,
    pub rejected: usize,
}

// Dormand-Prince 5(4) tableau (FSAL, 7 stages) and the coefficients of its
// quartic dense-output polynomial.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Error weights: 5th-order weights minus the embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D5: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 10.0;

struct DenseStep<const D: usize> {
    r1: [f64; D],
    r2: [f64; D],
    r3: [f64; D],
    r4: [f64; D],
    r5: [f64; D],
}

impl<const D: usize> DenseStep<D> {
    fn build(y: &[f64; D], y_new: &[f64; D], k: &[[f64; D]; 7], h: f64) -> Self {
        let mut r1 = [0.0; D];
        let mut r2 = [0.0; D];
        let mut r3 = [0.0; D];
        let mut r4 = [0.0; D];
        let mut r5 = [0.0; D];
        for i in 0..D {
            let dy = y_new[i] - y[i];
            let bspl = h * k[0][i] - dy;
            r1[i] = y[i];
            r2[i] = dy;
            r3[i] = bspl;
            r4[i] = dy - h * k[6][i] - bspl;
            let mut acc = 0.0;
            for s in 0..7 {
                acc += D5[s] * k[s][i];
            }
            r5[i] = h * acc;
        }
        Self { r1, r2, r3, r4, r5 }
    }

    fn eval(&self, theta: f64) -> [f64; D] {
        let th1 = 1.0 - theta;
        let mut out = [0.0; D];
        for i in 0..D {
            out[i] = self.r1[i]
                + theta
                    * (self.r2[i] + th1 * (self.r3[i] + theta * (self.r4[i] + th1 * self.r5[i])));
        }
        out
    }
}

fn error_norm<const D: usize>(err: &[f64; D], y: &[f64; D], y_new: &[f64; D], opts: &IvpOptions) -> f64 {
    let mut acc = 0.0;
    for i in 0..D {
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / D as f64).sqrt()
}

fn initial_step<const D: usize>(
    rhs: &mut impl FnMut(f64, &[f64; D], &mut [f64; D]),
    t0: f64,
    y0: &[f64; D],
    f0: &[f64; D],
    direction: f64,
    span: f64,
    opts: &IvpOptions,
) -> f64 {
    // Hairer's starting-step heuristic, order 5.
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for i in 0..D {
        let sc = opts.atol + opts.rtol * y0[i].abs();
        d0 += (y0[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    d0 = (d0 / D as f64).sqrt();
    d1 = (d1 / D as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let mut y1 = [0.0; D];
    for i in 0..D {
        y1[i] = y0[i] + direction * h0 * f0[i];
    }
    let mut f1 = [0.0; D];
    rhs(t0 + direction * h0, &y1, &mut f1);
    let mut d2: f64 = 0.0;
    for i in 0..D {
        let sc = opts.atol + opts.rtol * y0[i].abs();
        d2 += ((f1[i] - f0[i]) / sc).powi(2);
    }
    d2 = (d2 / D as f64).sqrt() / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrate y' = rhs(t, y) from t0 to t1 (either direction), sampling the
/// dense-output interpolant at `sample_times`, which must be ordered in the
/// direction of integration and lie in the closed span.
pub fn integrate<const D: usize, F>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y0: [f64; D],
    sample_times: &[f64],
    opts: &IvpOptions,
) -> Result<IvpSolution<D>>
where
    F: FnMut(f64, &[f64; D], &mut [f64; D]),
{
    assert!(t0 != t1, "empty integration span");
    let direction = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let h_floor = 1e-14 * span;

    let mut samples = Vec::with_capacity(sample_times.len());
    let mut sample_idx = 0;
    // Samples exactly at (or behind) the initial time come straight from y0.
    while sample_idx < sample_times.len()
        && (sample_times[sample_idx] - t0) * direction <= 0.0
    {
        samples.push(y0);
        sample_idx += 1;
    }

    let mut t = t0;
    let mut y = y0;
    let mut k = [[0.0; D]; 7];
    rhs(t, &y, &mut k[0]);
    if !k[0].iter().all(|v| v.is_finite()) {
        return Err(Error::DomainEscape { t });
    }

    let mut h = initial_step(&mut rhs, t0, &y0, &k[0].clone(), direction, span, opts);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut just_rejected = false;

    while (t - t1) * direction < 0.0 {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::MaxStepsExceeded { t, max_steps: opts.max_steps });
        }
        if h < h_floor {
            return Err(Error::StepSizeUnderflow { t });
        }
        let remaining = (t1 - t) * direction;
        let h_step = h.min(remaining);
        let hs = direction * h_step;

        for s in 1..7 {
            let mut ys = y;
            for j in 0..s {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..D {
                        ys[i] += hs * a * k[j][i];
                    }
                }
            }
            rhs(t + C[s] * hs, &ys, &mut k[s]);
        }

        // Stage 7 is evaluated at the 5th-order solution (FSAL).
        let mut y_new = [0.0; D];
        for i in 0..D {
            let mut acc = 0.0;
            for s in 0..6 {
                acc += A[6][s] * k[s][i];
            }
            y_new[i] = y[i] + hs * acc;
        }
        if !y_new.iter().all(|v| v.is_finite()) || !k.iter().all(|ks| ks.iter().all(|v| v.is_finite())) {
            return Err(Error::DomainEscape { t });
        }

        let mut err = [0.0; D];
        for i in 0..D {
            let mut acc = 0.0;
            for s in 0..7 {
                acc += E[s] * k[s][i];
            }
            err[i] = hs * acc;
        }
        let err_norm = error_norm(&err, &y, &y_new, opts);

        if err_norm <= 1.0 {
            accepted += 1;
            let t_new = t + hs;

            if sample_idx < sample_times.len()
                && (sample_times[sample_idx] - t_new) * direction <= 1e-12 * span
            {
                let dense = DenseStep::build(&y, &y_new, &k, hs);
                while sample_idx < sample_times.len() {
                    let ts = sample_times[sample_idx];
                    if (ts - t_new) * direction > 1e-12 * span {
                        break;
                    }
                    let theta = ((ts - t) / hs).clamp(0.0, 1.0);
                    samples.push(dense.eval(theta));
                    sample_idx += 1;
                }
            }

            t = t_new;
            y = y_new;
            k[0] = k[6];
            let scale = if err_norm == 0.0 {
                MAX_SCALE
            } else {
                (SAFETY * err_norm.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
            };
            let scale = if just_rejected { scale.min(1.0) } else { scale };
            just_rejected = false;
            h = h_step * scale;
        } else {
            rejected += 1;
            just_rejected = true;
            let scale = (SAFETY * err_norm.powf(-0.2)).clamp(MIN_SCALE, 1.0);
            h = h_step * scale;
        }
    }

    if sample_idx != sample_times.len() {
        return Err(Error::Internal(format!(
            "{} dense sample times were not covered by the integration span",
            sample_times.len() - sample_idx
        )));
    }

    Ok(IvpSolution { samples, final_state: y, accepted, rejected })
}
