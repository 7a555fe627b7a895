//! Uniform-grid representation of T-periodic functions.
//!
//! A `PeriodicFunction` stores N samples on the nodes t_j = j T / N together
//! with the coefficients of the trigonometric interpolant through them, so
//! evaluation anywhere, spectral differentiation, antiderivatives and
//! periodic quadrature are all available. Quadrature is the trapezoid rule,
//! which on a uniform periodic grid reduces to the sample mean and is
//! spectrally accurate for smooth integrands.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Uniform grid on [0, T) with an even number of nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    period: f64,
    n: usize,
}

impl PeriodicGrid {
    /// `n` must be even and >= 2, `period` positive.
    pub fn new(period: f64, n: usize) -> Self {
        assert!(period > 0.0, "period must be positive");
        assert!(n >= 2 && n % 2 == 0, "grid size must be even and >= 2");
        Self { period, n }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|j| self.node(j))
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn dft_forward(samples: &[f64]) -> Vec<Complex<f64>> {
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));
    let scale = 1.0 / n as f64;
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

fn dft_inverse(coeffs: &[Complex<f64>]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(&mut buf));
    buf.iter().map(|c| c.re).collect()
}

/// Shared evaluation basis: powers e^{i m omega t} for m = 0..=n/2.
///
/// Filling the basis once and dotting several coefficient vectors against it
/// is what the linear solver's right-hand side does on every integrator call.
pub struct TrigBasis {
    omega: f64,
    powers: Vec<Complex<f64>>,
}

impl TrigBasis {
    pub fn new(grid: &PeriodicGrid) -> Self {
        Self {
            omega: grid.omega(),
            powers: vec![Complex::new(1.0, 0.0); grid.len() / 2 + 1],
        }
    }

    pub fn fill(&mut self, t: f64) {
        let z = Complex::from_polar(1.0, self.omega * t);
        let mut w = Complex::new(1.0, 0.0);
        for p in &mut self.powers {
            *p = w;
            w *= z;
        }
    }
}

/// Sup, L2 norm and H1 seminorm of a periodic function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    /// sup |f| over a refined evaluation mesh (8N points).
    pub sup: f64,
    /// (integral of f^2 over one period)^(1/2).
    pub l2: f64,
    /// (integral of f'^2 over one period)^(1/2).
    pub h1: f64,
}

/// T-periodic function known through N uniform samples and the coefficients
/// of its trigonometric interpolant.
#[derive(Debug, Clone)]
pub struct PeriodicFunction {
    grid: PeriodicGrid,
    samples: Vec<f64>,
    /// DFT coefficients c_k = (1/N) sum_j f_j e^{-2 pi i j k / N}, FFT order.
    coeffs: Vec<Complex<f64>>,
    /// Highest mode index |m| that may carry a nonzero coefficient.
    significant: usize,
}

impl PeriodicFunction {
    pub fn from_samples(grid: PeriodicGrid, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), grid.len(), "sample count must match grid");
        let coeffs = dft_forward(&samples);
        let significant = grid.len() / 2;
        Self { grid, samples, coeffs, significant }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Self {
        let samples = grid.nodes().map(f).collect();
        Self::from_samples(grid, samples)
    }

    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        let n = grid.len();
        let mut coeffs = vec![Complex::new(0.0, 0.0); n];
        coeffs[0] = Complex::new(value, 0.0);
        Self { grid, samples: vec![value; n], coeffs, significant: 0 }
    }

    pub fn from_coeffs(grid: PeriodicGrid, coeffs: Vec<Complex<f64>>) -> Self {
        assert_eq!(coeffs.len(), grid.len());
        let samples = dft_inverse(&coeffs);
        let significant = grid.len() / 2;
        Self { grid, samples, coeffs, significant }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn period(&self) -> f64 {
        self.grid.period()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn coeffs(&self) -> &[Complex<f64>] {
        &self.coeffs
    }

    /// Trapezoidal mean over one period; on a uniform periodic grid this is
    /// the sample average, which equals the exact Fourier mean for
    /// band-limited data. Pairwise summation keeps it exact for constants on
    /// power-of-two grids.
    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.samples) / self.len() as f64
    }

    /// Integral over one period (trapezoid).
    pub fn integral(&self) -> f64 {
        self.mean() * self.period()
    }

    /// Evaluate the trigonometric interpolant at arbitrary t.
    pub fn eval(&self, t: f64) -> f64 {
        let mut basis = TrigBasis::new(&self.grid);
        basis.fill(t);
        self.eval_with_basis(&basis)
    }

    /// Evaluate using a prefilled basis (must come from a matching grid).
    pub fn eval_with_basis(&self, basis: &TrigBasis) -> f64 {
        let n = self.len();
        let half = n / 2;
        let top = self.significant.min(half);
        let mut acc = self.coeffs[0].re;
        let m_end = top.min(half - 1);
        for m in 1..=m_end {
            let c = self.coeffs[m];
            let p = basis.powers[m];
            // 2 Re(c_m e^{i m theta}) accounts for the conjugate pair.
            acc += 2.0 * (c.re * p.re - c.im * p.im);
        }
        if top == half {
            // Nyquist mode contributes c_{N/2} cos(N theta / 2).
            acc += self.coeffs[half].re * basis.powers[half].re;
        }
        acc
    }

    /// Spectral derivative of the given order. The Nyquist mode is zeroed for
    /// odd orders (its derivative is not representable in the sample basis).
    pub fn derivative(&self, order: usize) -> Self {
        assert!(order >= 1);
        let n = self.len();
        let half = n / 2;
        let omega = self.grid.omega();
        let mut coeffs = vec![Complex::new(0.0, 0.0); n];
        for k in 1..n {
            let m = if k <= half { k as i64 } else { k as i64 - n as i64 };
            if k == half && order % 2 == 1 {
                continue;
            }
            let factor = Complex::new(0.0, m as f64 * omega).powu(order as u32);
            coeffs[k] = self.coeffs[k] * factor;
        }
        let samples = dft_inverse(&coeffs);
        Self { grid: self.grid, samples, coeffs, significant: self.significant }
    }

    /// The unique zero-mean antiderivative (the mean and Nyquist modes are
    /// dropped; both are below rounding for smooth resolved data).
    pub fn antiderivative_zero_mean(&self) -> Self {
        let n = self.len();
        let half = n / 2;
        let omega = self.grid.omega();
        let mut coeffs = vec![Complex::new(0.0, 0.0); n];
        for k in 1..n {
            if k == half {
                continue;
            }
            let m = if k < half { k as i64 } else { k as i64 - n as i64 };
            coeffs[k] = self.coeffs[k] / Complex::new(0.0, m as f64 * omega);
        }
        let samples = dft_inverse(&coeffs);
        Self { grid: self.grid, samples, coeffs, significant: self.significant }
    }

    /// Shift by a constant.
    pub fn add_constant(&self, value: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0].re += value;
        for s in &mut out.samples {
            *s += value;
        }
        out
    }

    /// Project onto zero mean (subtract the sample mean exactly).
    pub fn with_zero_mean(&self) -> Self {
        let mut out = self.add_constant(-self.mean());
        out.coeffs[0] = Complex::new(0.0, 0.0);
        out
    }

    /// Drop coefficients below `rel_tol` times the largest coefficient
    /// magnitude and rebuild the samples. Spectra of smooth compositions
    /// decay exponentially, so this keeps evaluation cost proportional to the
    /// true frequency content without measurable loss.
    pub fn compress(&self, rel_tol: f64) -> Self {
        let n = self.len();
        let half = n / 2;
        let max = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return Self {
                grid: self.grid,
                samples: vec![0.0; n],
                coeffs: vec![Complex::new(0.0, 0.0); n],
                significant: 0,
            };
        }
        let tol = rel_tol * max;
        let mut coeffs = self.coeffs.clone();
        let mut significant = 0usize;
        for k in 0..n {
            if coeffs[k].norm() <= tol {
                coeffs[k] = Complex::new(0.0, 0.0);
            } else {
                let m = if k <= half { k } else { n - k };
                significant = significant.max(m);
            }
        }
        let samples = dft_inverse(&coeffs);
        Self { grid: self.grid, samples, coeffs, significant }
    }

    /// Keep only modes |m| <= m_max (and the mean); used to strip
    /// integrator noise from resampled solutions.
    pub fn truncate_modes(&self, m_max: usize) -> Self {
        let n = self.len();
        let half = n / 2;
        let mut coeffs = self.coeffs.clone();
        for k in 1..n {
            let m = if k <= half { k } else { n - k };
            if m > m_max {
                coeffs[k] = Complex::new(0.0, 0.0);
            }
        }
        let samples = dft_inverse(&coeffs);
        Self { grid: self.grid, samples, coeffs, significant: m_max.min(half) }
    }

    /// Magnitude of the coefficient pair at mode m (m = 0 is the mean).
    pub fn mode_magnitude(&self, m: usize) -> f64 {
        let n = self.len();
        let half = n / 2;
        assert!(m <= half);
        if m == 0 || m == half {
            self.coeffs[m].norm()
        } else {
            self.coeffs[m].norm() + self.coeffs[n - m].norm()
        }
    }

    /// Sup norm, L2 norm and H1 seminorm. The sup is taken over a refined
    /// mesh of 8N interpolant evaluations (which includes the nodes).
    pub fn norms(&self) -> Norms {
        let (lo, hi) = self.refined_extrema_signed();
        let sup = hi.max(-lo);
        let l2_sq = self.period() * mean_of_squares(&self.samples);
        let d = self.derivative(1);
        let h1_sq = self.period() * mean_of_squares(&d.samples);
        Norms { sup, l2: l2_sq.sqrt(), h1: h1_sq.sqrt() }
    }

    fn refined_extrema_signed(&self) -> (f64, f64) {
        let refine = 8;
        let total = refine * self.len();
        let dt = self.period() / total as f64;
        let mut basis = TrigBasis::new(&self.grid);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..total {
            basis.fill(j as f64 * dt);
            let v = self.eval_with_basis(&basis);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// (min, max) of the interpolant over a refined mesh of 8N points.
    pub fn refined_extrema(&self) -> (f64, f64) {
        self.refined_extrema_signed()
    }

    /// sup |f| over the refined mesh.
    pub fn sup_abs(&self) -> f64 {
        let (lo, hi) = self.refined_extrema_signed();
        hi.max(-lo)
    }

    /// sup over the nodes only (cheap variant used in inner loops).
    pub fn node_sup_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }
}

fn mean_of_squares(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
}

/// sup_j |a_j - b_j| over the shared grid nodes.
pub fn node_sup_diff(a: &PeriodicFunction, b: &PeriodicFunction) -> f64 {
    assert_eq!(a.grid(), b.grid());
    a.samples()
        .iter()
        .zip(b.samples())
        .fold(0.0, |m, (&x, &y)| m.max((x - y).abs()))
}
