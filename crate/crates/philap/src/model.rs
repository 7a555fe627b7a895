//! Problem definition: the homeomorphism phi, the nonlinearity g, the
//! zero-mean forcing e(t), and validation of the structural hypotheses the
//! solver relies on.
//!
//! All types here are immutable after construction and the operations are
//! pure functions, so everything is safe to share across threads.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance for the zero-mean check on the forcing.
pub const FORCING_MEAN_TOL: f64 = 1e-10;

/// Increasing homeomorphism phi : (-a, a) -> R with phi(0) = 0, together with
/// its derivatives, its inverse psi, and the analytic infimum a0 of phi'.
///
/// a0 is stored rather than recomputed: catalog entries carry the analytic
/// value, so no numerical minimization of phi' is needed.
#[derive(Debug, Clone, Copy)]
pub struct PhiFunction {
    name: &'static str,
    /// Half-width a of the domain (-a, a).
    pub half_width: f64,
    /// Infimum a0 of phi' over (-a, a).
    pub min_slope: f64,
    phi: fn(f64) -> f64,
    dphi: fn(f64) -> f64,
    d2phi: fn(f64) -> f64,
    psi: fn(f64) -> f64,
}

impl PhiFunction {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn phi(&self, z: f64) -> f64 {
        (self.phi)(z)
    }

    pub fn dphi(&self, z: f64) -> f64 {
        (self.dphi)(z)
    }

    pub fn d2phi(&self, z: f64) -> f64 {
        (self.d2phi)(z)
    }

    /// Inverse of phi; maps all of R into (-a, a).
    pub fn psi(&self, w: f64) -> f64 {
        (self.psi)(w)
    }
}

/// Qualitative shape of g, used by the branch-feature detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GShape {
    /// g(u + p) = g(u).
    Periodic { period: f64 },
    /// Finite limits at -inf/+inf with lower < g(u) < upper everywhere.
    Saturating { lower: f64, upper: f64 },
    /// u g(u) > 0 for large |u| and g(u) -> 0 at both infinities.
    VanishingSign,
    /// u g(u) > 0 for all u != 0.
    StrictSign,
    Other,
}

/// Nonlinearity g with derivative, a finite bound G on |g'|, and a shape tag.
#[derive(Debug, Clone, Copy)]
pub struct Nonlinearity {
    name: &'static str,
    g: fn(f64) -> f64,
    dg: fn(f64) -> f64,
    /// Finite upper bound G for |g'|.
    pub slope_bound: f64,
    pub shape: GShape,
}

impl Nonlinearity {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn g(&self, u: f64) -> f64 {
        (self.g)(u)
    }

    pub fn dg(&self, u: f64) -> f64 {
        (self.dg)(u)
    }
}

/// T-periodic forcing with zero average.
///
/// The paper-style forcings are finite sums of harmonics, which are zero-mean
/// by construction; `from_fn` admits arbitrary callables (whose mean is then
/// checked numerically by `validate_spec`).
#[derive(Clone)]
pub struct Forcing {
    period: f64,
    kind: ForcingKind,
    pub description: String,
}

#[derive(Clone)]
enum ForcingKind {
    Harmonics(Vec<HarmonicTerm>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// One term amp_sin * sin(m omega t) + amp_cos * cos(m omega t), m >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarmonicTerm {
    pub harmonic: u32,
    pub sin_amp: f64,
    pub cos_amp: f64,
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Forcing")
            .field("period", &self.period)
            .field("description", &self.description)
            .finish()
    }
}

impl Forcing {
    pub fn zero(period: f64) -> Self {
        Self { period, kind: ForcingKind::Harmonics(Vec::new()), description: "0".into() }
    }

    pub fn harmonics(period: f64, terms: Vec<HarmonicTerm>) -> Result<Self> {
        if period <= 0.0 {
            return Err(Error::Config("forcing period must be positive".into()));
        }
        if let Some(bad) = terms.iter().find(|h| h.harmonic == 0) {
            return Err(Error::Config(format!(
                "harmonic index must be >= 1 (constant terms would break zero mean): {bad:?}"
            )));
        }
        let description = if terms.is_empty() {
            "0".to_string()
        } else {
            terms
                .iter()
                .map(|h| format!("{:+}*sin({m}wt){:+}*cos({m}wt)", h.sin_amp, h.cos_amp, m = h.harmonic))
                .collect::<Vec<_>>()
                .join(" ")
        };
        Ok(Self { period, kind: ForcingKind::Harmonics(terms), description })
    }

    /// amplitude * sin(omega t) or amplitude * cos(omega t).
    pub fn single(kind: &str, amplitude: f64, period: f64) -> Result<Self> {
        let (sin_amp, cos_amp) = match kind {
            "sin" => (amplitude, 0.0),
            "cos" => (0.0, amplitude),
            other => return Err(Error::Config(format!("forcing kind must be sin or cos, got `{other}`"))),
        };
        if amplitude == 0.0 {
            return Self::harmonics(period, Vec::new());
        }
        Self::harmonics(period, vec![HarmonicTerm { harmonic: 1, sin_amp, cos_amp }])
    }

    /// Arbitrary T-periodic callable; `validate_spec` enforces the zero mean.
    pub fn from_fn(
        period: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        description: impl Into<String>,
    ) -> Self {
        Self { period, kind: ForcingKind::Custom(Arc::new(f)), description: description.into() }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            ForcingKind::Harmonics(terms) => {
                let omega = 2.0 * PI / self.period;
                terms
                    .iter()
                    .map(|h| {
                        let arg = h.harmonic as f64 * omega * t;
                        h.sin_amp * arg.sin() + h.cos_amp * arg.cos()
                    })
                    .sum()
            }
            ForcingKind::Custom(f) => f(t),
        }
    }

    /// (1/T) * integral of e over one period, by trapezoid on a fine mesh.
    pub fn numeric_mean(&self, min_points: usize) -> f64 {
        let m = min_points.max(1024);
        let dt = self.period / m as f64;
        (0..m).map(|j| self.eval(j as f64 * dt)).sum::<f64>() / m as f64
    }
}

/// Full problem instance for (phi(u'))' + lambda u' + k g(u) = mu + e(t).
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub phi: PhiFunction,
    pub g: Nonlinearity,
    /// Constant friction, >= 0.
    pub lambda: f64,
    /// Coupling k > 0.
    pub k: f64,
    /// Period T.
    pub period: f64,
    pub forcing: Forcing,
    /// 2 pi / T; set by the constructor, never independently.
    omega: f64,
    /// Even number of grid nodes for the spectral representation.
    pub grid_size: usize,
}

impl ProblemSpec {
    pub fn new(
        phi: PhiFunction,
        g: Nonlinearity,
        lambda: f64,
        k: f64,
        period: f64,
        forcing: Forcing,
        grid_size: usize,
    ) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(k > 0.0) {
            return Err(Error::Config(format!("k must be > 0, got {k}")));
        }
        if !(period > 0.0) {
            return Err(Error::Config(format!("period must be > 0, got {period}")));
        }
        if grid_size < 2 || grid_size % 2 != 0 {
            return Err(Error::Config(format!("grid size must be even and >= 2, got {grid_size}")));
        }
        if (forcing.period() - period).abs() > 1e-12 * period {
            return Err(Error::Config(format!(
                "forcing period {} does not match problem period {}",
                forcing.period(),
                period
            )));
        }
        let omega = 2.0 * PI / period;
        Ok(Self { phi, g, lambda, k, period, forcing, omega, grid_size })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Global-parameter regime k sup|g'| < a0 omega, the generalized form of
    /// the uniqueness condition (see `validate_spec`).
    pub fn uniqueness_condition_holds(&self) -> bool {
        self.k * self.g.slope_bound < self.phi.min_slope * self.omega
    }
}

/// Structural checks on a problem instance.
///
/// The uniqueness condition is tested in the generalized form
/// k sup|g'| < a0 omega (equivalent to the literal |g'| <= 1 form by
/// rescaling g; the literal test is reported alongside). Failure of either is
/// a warning, not an error: sweeps may still be attempted outside the regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Numerically measured mean of e (must be ~0 for the setup to make sense).
    pub forcing_mean: f64,
    /// k * sup|g'|.
    pub k_times_slope_bound: f64,
    /// a0 * omega.
    pub a0_omega: f64,
    /// Generalized uniqueness condition k sup|g'| < a0 omega.
    pub uniqueness_condition_holds: bool,
    /// Literal condition sup|g'| <= 1 together with k < a0 omega.
    pub literal_slope_condition_holds: bool,
    /// a T (multiplicity theory applies when a T < pi sqrt(3)).
    pub a_times_period: f64,
    pub two_solution_hypotheses_hold: bool,
    /// Half-width k cos(aT / (2 sqrt 3)) of the admissible mu-window, when
    /// the hypotheses above hold.
    pub mu_window_half_width: Option<f64>,
    pub warnings: Vec<String>,
}

/// Validate a fully populated spec. A nonzero-mean forcing is a hard error;
/// everything else is reported.
pub fn validate_spec(spec: &ProblemSpec) -> Result<ValidationReport> {
    let forcing_mean = spec.forcing.numeric_mean(4 * spec.grid_size);
    if forcing_mean.abs() > FORCING_MEAN_TOL {
        return Err(Error::NonzeroMeanForcing { mean: forcing_mean, tol: FORCING_MEAN_TOL });
    }

    let k_times_slope_bound = spec.k * spec.g.slope_bound;
    let a0_omega = spec.phi.min_slope * spec.omega;
    let uniqueness = k_times_slope_bound < a0_omega;
    let literal = spec.g.slope_bound <= 1.0 && spec.k < a0_omega;

    let a_times_period = spec.phi.half_width * spec.period;
    let two_solution = a_times_period < PI * 3.0f64.sqrt();
    let mu_window_half_width = two_solution
        .then(|| spec.k * (a_times_period / (2.0 * 3.0f64.sqrt())).cos());

    let mut warnings = Vec::new();
    if !uniqueness {
        warnings.push(format!(
            "k*sup|g'| = {k_times_slope_bound:.6} >= a0*omega = {a0_omega:.6}: \
             xi need not be a global parameter; continuation guarantees are void"
        ));
    }
    if !two_solution {
        warnings.push(format!(
            "aT = {a_times_period:.6} >= pi*sqrt(3): the two-solution window is not available"
        ));
    }

    Ok(ValidationReport {
        forcing_mean,
        k_times_slope_bound,
        a0_omega,
        uniqueness_condition_holds: uniqueness,
        literal_slope_condition_holds: literal,
        a_times_period,
        two_solution_hypotheses_hold: two_solution,
        mu_window_half_width,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Catalogs. Only analytically coded entries: no runtime expression parsing,
// so every derivative and every stored bound is auditable.
// ---------------------------------------------------------------------------

fn rel_phi(z: f64) -> f64 {
    z / (1.0 - z * z).sqrt()
}

fn rel_dphi(z: f64) -> f64 {
    (1.0 - z * z).powf(-1.5)
}

fn rel_d2phi(z: f64) -> f64 {
    3.0 * z * (1.0 - z * z).powf(-2.5)
}

fn rel_psi(w: f64) -> f64 {
    w / (1.0 + w * w).sqrt()
}

/// Look up a phi homeomorphism by catalog key.
///
/// `relativistic`: phi(z) = z / sqrt(1 - z^2) on (-1, 1), psi(w) = w / sqrt(1 + w^2),
/// phi'(z) = (1 - z^2)^(-3/2) with infimum a0 = 1 at z = 0.
pub fn make_phi(name: &str) -> Result<PhiFunction> {
    match name {
        "relativistic" => Ok(PhiFunction {
            name: "relativistic",
            half_width: 1.0,
            min_slope: 1.0,
            phi: rel_phi,
            dphi: rel_dphi,
            d2phi: rel_d2phi,
            psi: rel_psi,
        }),
        other => Err(Error::UnknownCatalogKey(other.to_string())),
    }
}

fn g_sin(u: f64) -> f64 {
    u.sin()
}

fn dg_sin(u: f64) -> f64 {
    u.cos()
}

fn g_atan(u: f64) -> f64 {
    u.atan()
}

fn dg_atan(u: f64) -> f64 {
    1.0 / (1.0 + u * u)
}

fn g_rational3(u: f64) -> f64 {
    3.0 * u / (1.0 + u * u)
}

fn dg_rational3(u: f64) -> f64 {
    let d = 1.0 + u * u;
    3.0 * (1.0 - u * u) / (d * d)
}

/// Look up a nonlinearity by catalog key: `sin`, `atan`, or `rational3`
/// (g(u) = 3u / (1 + u^2)). Slope bounds are the analytic maxima of |g'|.
pub fn make_g(name: &str) -> Result<Nonlinearity> {
    match name {
        "sin" => Ok(Nonlinearity {
            name: "sin",
            g: g_sin,
            dg: dg_sin,
            slope_bound: 1.0,
            shape: GShape::Periodic { period: 2.0 * PI },
        }),
        "atan" => Ok(Nonlinearity {
            name: "atan",
            g: g_atan,
            dg: dg_atan,
            slope_bound: 1.0,
            shape: GShape::Saturating { lower: -PI / 2.0, upper: PI / 2.0 },
        }),
        "rational3" => Ok(Nonlinearity {
            name: "rational3",
            g: g_rational3,
            dg: dg_rational3,
            slope_bound: 3.0,
            shape: GShape::VanishingSign,
        }),
        other => Err(Error::UnknownCatalogKey(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        let step = (hi - lo) / (n - 1) as f64;
        (0..n).map(move |i| lo + i as f64 * step)
    }

    #[test]
    fn relativistic_basics() {
        let phi = make_phi("relativistic").unwrap();
        assert_eq!(phi.phi(0.0), 0.0);
        // minimize phi' over a fine mesh: the infimum sits at z = 0
        let grid_min = mesh(-0.999, 0.999, 4001).map(|z| phi.dphi(z)).fold(f64::INFINITY, f64::min);
        assert!((phi.dphi(0.0) - 1.0).abs() < 1e-15);
        assert!(grid_min >= 1.0 - 1e-12, "a0 = 1 is the analytic infimum");
        assert_eq!(phi.min_slope, 1.0);
        assert!((phi.psi(phi.phi(0.5)) - 0.5).abs() < 1e-12);
        // phi blows up at the domain edge
        assert!(phi.phi(1.0 - 1e-6).abs() > 1e3);
    }

    #[test]
    fn phi_inverse_identities_on_meshes() {
        let phi = make_phi("relativistic").unwrap();
        for z in mesh(-0.95, 0.95, 381) {
            assert!((phi.psi(phi.phi(z)) - z).abs() < 1e-12, "psi(phi(z)) at z={z}");
        }
        for w in mesh(-1e3, 1e3, 401) {
            assert!((phi.phi(phi.psi(w)) - w).abs() < 1e-12 * (1.0 + w.abs()), "phi(psi(w)) at w={w}");
        }
    }

    #[test]
    fn phi_derivatives_match_finite_differences() {
        let phi = make_phi("relativistic").unwrap();
        let h = 1e-6;
        for z in mesh(-0.9, 0.9, 181) {
            let fd1 = (phi.phi(z + h) - phi.phi(z - h)) / (2.0 * h);
            assert!((fd1 - phi.dphi(z)).abs() / phi.dphi(z).abs() < 1e-6, "dphi at z={z}");
            let fd2 = (phi.dphi(z + h) - phi.dphi(z - h)) / (2.0 * h);
            let scale = phi.d2phi(z).abs().max(1.0);
            assert!((fd2 - phi.d2phi(z)).abs() / scale < 1e-6, "d2phi at z={z}");
        }
    }

    #[test]
    fn g_catalog_values() {
        let atan = make_g("atan").unwrap();
        match atan.shape {
            GShape::Saturating { lower, upper } => {
                assert_eq!((lower, upper), (-PI / 2.0, PI / 2.0));
            }
            other => panic!("wrong shape {other:?}"),
        }
        assert_eq!(atan.slope_bound, 1.0);

        // maximize |g'| for rational3 over a wide mesh: the max is 3 at u = 0
        let r3 = make_g("rational3").unwrap();
        let grid_max = mesh(-100.0, 100.0, 40001).map(|u| r3.dg(u).abs()).fold(0.0, f64::max);
        assert_eq!(r3.dg(0.0), 3.0);
        assert!(grid_max <= 3.0 + 1e-12);
        assert_eq!(r3.slope_bound, 3.0);

        let sin = make_g("sin").unwrap();
        assert!((sin.g(1.3 + 2.0 * PI) - sin.g(1.3)).abs() < 1e-12);
    }

    #[test]
    fn g_slope_bounds_hold_on_wide_mesh() {
        for name in ["sin", "atan", "rational3"] {
            let g = make_g(name).unwrap();
            for u in mesh(-100.0, 100.0, 2001) {
                assert!(g.dg(u).abs() <= g.slope_bound + 1e-12, "{name} at u={u}");
            }
        }
    }

    #[test]
    fn g_derivative_matches_finite_differences() {
        let h = 1e-6;
        for name in ["sin", "atan", "rational3"] {
            let g = make_g(name).unwrap();
            for u in mesh(-20.0, 20.0, 401) {
                let fd = (g.g(u + h) - g.g(u - h)) / (2.0 * h);
                let scale = g.dg(u).abs().max(1e-3);
                assert!((fd - g.dg(u)).abs() / scale < 1e-5, "{name} dg at u={u}");
            }
        }
    }

    #[test]
    fn g_shape_invariants_on_mesh() {
        let sin = make_g("sin").unwrap();
        for u in mesh(-30.0, 30.0, 301) {
            assert!((sin.g(u + 2.0 * PI) - sin.g(u)).abs() < 1e-12);
        }
        let atan = make_g("atan").unwrap();
        if let GShape::Saturating { lower, upper } = atan.shape {
            for u in mesh(-100.0, 100.0, 301) {
                assert!(lower < atan.g(u) && atan.g(u) < upper);
            }
        }
    }

    #[test]
    fn unknown_keys_are_configuration_errors() {
        assert!(matches!(make_phi("nope"), Err(Error::UnknownCatalogKey(_))));
        assert!(matches!(make_g("nope"), Err(Error::UnknownCatalogKey(_))));
    }

    fn fig3_spec() -> ProblemSpec {
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

    #[test]
    fn validate_figure3_parameters() {
        let report = validate_spec(&fig3_spec()).unwrap();
        // k G = 0.1 < a0 omega = 2 pi
        assert!(report.uniqueness_condition_holds);
        assert!((report.k_times_slope_bound - 0.1).abs() < 1e-15);
        assert!((report.a0_omega - 2.0 * PI).abs() < 1e-12);
        // aT = 1 < pi sqrt(3) ~ 5.441; window half-width ~ 0.9586 k
        assert!(report.two_solution_hypotheses_hold);
        let w = report.mu_window_half_width.unwrap();
        assert!((w - 0.1 * (1.0 / (2.0 * 3.0f64.sqrt())).cos()).abs() < 1e-15);
        assert!((w / 0.1 - 0.9586).abs() < 1e-4);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn validate_figure2_parameters() {
        let spec = ProblemSpec::new(
            make_phi("relativistic").unwrap(),
            make_g("rational3").unwrap(),
            0.05,
            0.1,
            0.2,
            Forcing::single("sin", 0.45, 0.2).unwrap(),
            256,
        )
        .unwrap();
        let report = validate_spec(&spec).unwrap();
        // k G = 0.3 < 2 pi / 0.2 ~ 31.4
        assert!((report.k_times_slope_bound - 0.3).abs() < 1e-15);
        assert!(report.uniqueness_condition_holds);
        // but the literal |g'| <= 1 test fails for G = 3
        assert!(!report.literal_slope_condition_holds);
    }

    #[test]
    fn validate_figure1_parameters() {
        let spec = ProblemSpec::new(
            make_phi("relativistic").unwrap(),
            make_g("atan").unwrap(),
            0.0,
            0.25,
            0.3,
            Forcing::single("sin", 0.3, 0.3).unwrap(),
            256,
        )
        .unwrap();
        let report = validate_spec(&spec).unwrap();
        assert!(report.uniqueness_condition_holds);
        assert!(report.literal_slope_condition_holds);
    }

    #[test]
    fn nonzero_mean_forcing_is_a_hard_error() {
        let spec = ProblemSpec::new(
            make_phi("relativistic").unwrap(),
            make_g("sin").unwrap(),
            0.0,
            0.1,
            1.0,
            Forcing::from_fn(1.0, |t| 0.01 + (2.0 * PI * t).sin(), "biased"),
            64,
        )
        .unwrap();
        assert!(matches!(validate_spec(&spec), Err(Error::NonzeroMeanForcing { .. })));
    }

    #[test]
    fn validate_spec_is_pure() {
        let spec = fig3_spec();
        assert_eq!(validate_spec(&spec).unwrap(), validate_spec(&spec).unwrap());
    }

    #[test]
    fn uniqueness_flag_matches_inequality() {
        let spec = fig3_spec();
        assert_eq!(
            spec.uniqueness_condition_holds(),
            spec.k * spec.g.slope_bound < spec.phi.min_slope * spec.omega()
        );
    }
}
