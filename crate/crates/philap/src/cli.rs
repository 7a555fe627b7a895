//! Configuration, orchestration and output emission.
//!
//! One JSON config describes one run: the problem block is validated, the
//! sweep executes, every point is re-verified by shooting, and the results
//! land in the output directory as `branch.csv`, `summary.json`, optional
//! per-point `profile_<xi>.csv` files and an optional `branch.svg`.
//!
//! All numeric output uses 15 significant digits, `.` as the decimal
//! separator and `\n` line endings, so identical configs produce
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    branch_features, inequality_audit, reintegrate_orbit, verify_curve, BranchFeatures,
    SHOOTING_DEFECT_TOL,
};
use crate::continuation::{sweep_xi, BranchCurve, SolverOptions};
use crate::error::{Error, Result};
use crate::ivp::IvpOptions;
use crate::model::{
    make_g, make_phi, validate_spec, Forcing, HarmonicTerm, ProblemSpec, ValidationReport,
};

/// Environment variable overriding the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "PHILAP_OUTPUT_DIR";

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct RunConfig {
    pub problem: ProblemBlock,
    pub sweep: SweepBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ProblemBlock {
    pub phi: String,
    pub g: String,
    pub lambda: f64,
    pub k: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub forcing: ForcingBlock,
    #[serde(rename = "N", default = "default_grid_size")]
    pub grid_size: usize,
}

fn default_grid_size() -> usize {
    256
}

/// Single-harmonic kind/amplitude plus optional extra
/// (harmonic, sin-amp, cos-amp) triples; zero mean holds by construction.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ForcingBlock {
    pub kind: String,
    pub amplitude: f64,
    #[serde(default)]
    pub harmonics: Vec<(u32, f64, f64)>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SweepBlock {
    pub xi0: f64,
    pub dxi: f64,
    pub nsteps: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SolverBlock {
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton_iters")]
    pub max_newton_iters: usize,
    #[serde(default = "default_n_kappa_steps")]
    pub n_kappa_steps: usize,
    #[serde(default = "default_ivp_rtol")]
    pub ivp_rtol: f64,
    #[serde(default = "default_ivp_atol")]
    pub ivp_atol: f64,
}

fn default_newton_tol() -> f64 {
    1e-10
}

fn default_max_newton_iters() -> usize {
    12
}

fn default_n_kappa_steps() -> usize {
    10
}

fn default_ivp_rtol() -> f64 {
    1e-10
}

fn default_ivp_atol() -> f64 {
    1e-12
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            newton_tol: default_newton_tol(),
            max_newton_iters: default_max_newton_iters(),
            n_kappa_steps: default_n_kappa_steps(),
            ivp_rtol: default_ivp_rtol(),
            ivp_atol: default_ivp_atol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct OutputBlock {
    pub directory: String,
    #[serde(default = "default_true")]
    pub emit_svg: bool,
    #[serde(default)]
    pub profile_xis: Vec<f64>,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))
    }

    pub fn build_spec(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        let mut terms = Vec::new();
        match p.forcing.kind.as_str() {
            "sin" | "cos" => {}
            other => {
                return Err(Error::Config(format!("forcing kind must be sin or cos, got `{other}`")))
            }
        }
        if p.forcing.amplitude != 0.0 {
            let (s, c) = if p.forcing.kind == "sin" {
                (p.forcing.amplitude, 0.0)
            } else {
                (0.0, p.forcing.amplitude)
            };
            terms.push(HarmonicTerm { harmonic: 1, sin_amp: s, cos_amp: c });
        }
        for &(m, s, c) in &p.forcing.harmonics {
            terms.push(HarmonicTerm { harmonic: m, sin_amp: s, cos_amp: c });
        }
        let forcing = Forcing::harmonics(p.period, terms)?;
        ProblemSpec::new(make_phi(&p.phi)?, make_g(&p.g)?, p.lambda, p.k, p.period, forcing, p.grid_size)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            newton_tol: self.solver.newton_tol,
            max_newton_iters: self.solver.max_newton_iters,
            n_kappa_steps: self.solver.n_kappa_steps,
            ivp: IvpOptions::new(self.solver.ivp_rtol, self.solver.ivp_atol),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from(&self.output.directory),
        }
    }
}

/// Everything a completed run produced, for callers that want more than the
/// exit status.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub curve: BranchCurve,
    pub features: BranchFeatures,
    pub validation: ValidationReport,
    pub verification_failures: usize,
    pub all_verified: bool,
}

#[derive(Debug, Serialize)]
struct AuditSummary {
    n_points: usize,
    all_hold: bool,
    min_sobolev_margin: f64,
    min_wirtinger_margin: f64,
    min_energy_margin: f64,
    min_two_solution_margin: Option<f64>,
    max_mu_star_identity_defect: f64,
    max_averaging_defect: f64,
}

#[derive(Debug, Serialize)]
struct VerificationSummary {
    n_points: usize,
    n_failed: usize,
    max_defect: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    validation: &'a ValidationReport,
    features: &'a BranchFeatures,
    audit: AuditSummary,
    verification: VerificationSummary,
    unsolved_xis: &'a [f64],
}

/// 15 significant digits, locale-independent.
fn fmt(x: f64) -> String {
    format!("{x:.14e}")
}

fn fmt_xi_label(xi: f64) -> String {
    format!("{xi}")
}

/// Execute one config end to end.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let spec = config.build_spec()?;
    let validation = validate_spec(&spec)?;
    for w in &validation.warnings {
        eprintln!("warning: {w}");
    }
    let opts = config.solver_options();
    let sweep = &config.sweep;
    let mut curve = sweep_xi(&spec, sweep.xi0, sweep.dxi, sweep.nsteps, &opts)?;
    let verification_failures = verify_curve(&mut curve, &spec, &opts.ivp);
    let features = branch_features(&curve, &spec);

    let out_dir = config.output_dir();
    fs::create_dir_all(&out_dir)?;
    write_branch_csv(&out_dir.join("branch.csv"), &curve)?;
    write_summary(&out_dir.join("summary.json"), &spec, &curve, &features, &validation)?;
    for &xi in &config.output.profile_xis {
        write_profile(&out_dir, &curve, xi)?;
    }
    if config.output.emit_svg {
        write_branch_svg(&out_dir.join("branch.svg"), &curve)?;
    }

    let all_verified = verification_failures == 0 && curve.unsolved.is_empty();
    Ok(RunOutcome { out_dir, curve, features, validation, verification_failures, all_verified })
}

fn write_branch_csv(path: &Path, curve: &BranchCurve) -> Result<()> {
    let mut out = String::new();
    out.push_str("xi,mu,u_at_0,uprime_at_0,sup_uprime,variation,shooting_defect,newton_iters\n");
    for p in &curve.points {
        let s = &p.solution;
        let defect = p
            .verification
            .as_ref()
            .map(|v| v.periodicity_defect)
            .unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt(s.xi),
            fmt(s.mu),
            fmt(s.u0),
            fmt(s.uprime0),
            fmt(s.sup_uprime),
            fmt(s.variation),
            fmt(defect),
            s.newton.iterations,
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_summary(
    path: &Path,
    spec: &ProblemSpec,
    curve: &BranchCurve,
    features: &BranchFeatures,
    validation: &ValidationReport,
) -> Result<()> {
    let mut audit = AuditSummary {
        n_points: curve.points.len(),
        all_hold: true,
        min_sobolev_margin: f64::INFINITY,
        min_wirtinger_margin: f64::INFINITY,
        min_energy_margin: f64::INFINITY,
        min_two_solution_margin: None,
        max_mu_star_identity_defect: 0.0,
        max_averaging_defect: 0.0,
    };
    let mut verif = VerificationSummary { n_points: curve.points.len(), n_failed: 0, max_defect: 0.0 };
    for p in &curve.points {
        let report = inequality_audit(&p.solution, spec);
        audit.all_hold &= report.all_hold;
        audit.min_sobolev_margin = audit.min_sobolev_margin.min(report.sobolev.margin);
        audit.min_wirtinger_margin = audit.min_wirtinger_margin.min(report.wirtinger.margin);
        audit.min_energy_margin = audit.min_energy_margin.min(report.energy.margin);
        if let Some(b) = report.two_solution_bound {
            let cur = audit.min_two_solution_margin.unwrap_or(f64::INFINITY);
            audit.min_two_solution_margin = Some(cur.min(b.margin));
        }
        audit.max_mu_star_identity_defect =
            audit.max_mu_star_identity_defect.max(p.solution.newton.max_identity_defect);
        audit.max_averaging_defect =
            audit.max_averaging_defect.max(p.solution.newton.max_averaging_defect);
        if let Some(v) = &p.verification {
            if !v.passed {
                verif.n_failed += 1;
            }
            if v.periodicity_defect.is_finite() {
                verif.max_defect = verif.max_defect.max(v.periodicity_defect);
            } else {
                verif.max_defect = f64::INFINITY;
            }
        }
    }
    let summary = Summary {
        validation,
        features,
        audit,
        verification: verif,
        unsolved_xis: &curve.unsolved,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_profile(out_dir: &Path, curve: &BranchCurve, xi: f64) -> Result<()> {
    let nearest = curve
        .points
        .iter()
        .min_by(|a, b| {
            let da = (a.solution.xi - xi).abs();
            let db = (b.solution.xi - xi).abs();
            da.partial_cmp(&db).expect("finite xi")
        })
        .ok_or_else(|| Error::Internal("profile requested on an empty curve".into()))?;
    let s = &nearest.solution;
    let u = &s.u_zero_mean;
    let uprime = u.derivative(1);
    let mut out = String::new();
    out.push_str("t,u,uprime\n");
    for (j, t) in u.grid().nodes().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt(t),
            fmt(s.xi + u.samples()[j]),
            fmt(uprime.samples()[j]),
        ));
    }
    fs::write(out_dir.join(format!("profile_{}.csv", fmt_xi_label(xi))), out)?;
    Ok(())
}

fn write_branch_svg(path: &Path, curve: &BranchCurve) -> Result<()> {
    const W: f64 = 800.0;
    const H: f64 = 520.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 20.0;
    const MB: f64 = 50.0;

    let xis = curve.xis();
    let mus = curve.mus();
    let (x_min, x_max) = bounds(&xis);
    let (y_min, y_max) = bounds(&mus);
    let x_span = (x_max - x_min).max(1e-12);
    let y_span = (y_max - y_min).max(1e-12);
    let sx = |x: f64| ML + (x - x_min) / x_span * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y_min) / y_span * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    // ticks
    for i in 0..=5 {
        let x = x_min + x_span * i as f64 / 5.0;
        let px = sx(x);
        svg.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{}\" x2=\"{px:.2}\" y2=\"{}\" stroke=\"black\"/>\n",
            H - MB,
            H - MB + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x:.3}</text>\n",
            H - MB + 20.0
        ));
        let y = y_min + y_span * i as f64 / 5.0;
        let py = sy(y);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py:.2}\" x2=\"{ML}\" y2=\"{py:.2}\" stroke=\"black\"/>\n",
            ML - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{y:.4}</text>\n",
            ML - 8.0,
            py + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">xi</text>\n",
        (ML + W - MR) / 2.0,
        H - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.2})\">mu</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    ));
    // the branch polyline
    let pts: Vec<String> = xis
        .iter()
        .zip(&mus)
        .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n",
        pts.join(" ")
    ));
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

fn bounds(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// One row of a verify pass.
#[derive(Debug, Clone)]
pub struct RowCheck {
    pub xi: f64,
    pub defect: f64,
    pub passed: bool,
}

#[derive(Debug)]
pub struct VerifyOutcome {
    pub rows: Vec<RowCheck>,
    pub all_passed: bool,
}

/// Re-run shooting verification for every row of a stored branch file, from
/// the (u(0), u'(0), mu) columns.
pub fn verify(config: &RunConfig, branch_csv: &Path) -> Result<VerifyOutcome> {
    let spec = config.build_spec()?;
    let opts = config.solver_options();
    let text = fs::read_to_string(branch_csv)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", branch_csv.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("branch file is empty".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let col = |name: &str| -> Result<usize> {
        columns
            .iter()
            .position(|&c| c == name)
            .ok_or_else(|| Error::Config(format!("branch file lacks required column `{name}`")))
    };
    let (ixi, imu, iu0, iup0) = (col("xi")?, col("mu")?, col("u_at_0")?, col("uprime_at_0")?);

    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |idx: usize| -> Result<f64> {
            fields
                .get(idx)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("bad numeric field on data row {}", lineno + 1)))
        };
        let (xi, mu, u0, uprime0) = (parse(ixi)?, parse(imu)?, parse(iu0)?, parse(iup0)?);
        let defect = match reintegrate_orbit(&spec, u0, uprime0, mu, &opts.ivp, &[]) {
            Ok((d, _)) => d,
            Err(_) => f64::INFINITY,
        };
        rows.push(RowCheck { xi, defect, passed: defect < SHOOTING_DEFECT_TOL });
    }
    if rows.is_empty() {
        return Err(Error::Config("branch file has no data rows".into()));
    }
    let all_passed = rows.iter().all(|r| r.passed);
    Ok(VerifyOutcome { rows, all_passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> RunConfig {
        serde_json::from_str(&format!(
            r#"{{
                "problem": {{
                    "phi": "relativistic", "g": "sin",
                    "lambda": 0.1, "k": 0.1, "T": 1.0,
                    "forcing": {{ "kind": "cos", "amplitude": 0.15 }},
                    "N": 128
                }},
                "sweep": {{ "xi0": 0.0, "dxi": 0.5, "nsteps": 4 }},
                "output": {{ "directory": {:?}, "emit_svg": true, "profile_xis": [1.0] }}
            }}"#,
            dir.to_str().unwrap()
        ))
        .unwrap()
    }

    #[test]
    fn run_emits_all_artifacts_deterministically() {
        let tmp = tempfile::tempdir().unwrap();
        let dir_a = tmp.path().join("a");
        let dir_b = tmp.path().join("b");
        let out_a = run(&small_config(&dir_a)).unwrap();
        let out_b = run(&small_config(&dir_b)).unwrap();
        assert!(out_a.all_verified);

        let csv_a = fs::read(dir_a.join("branch.csv")).unwrap();
        let csv_b = fs::read(dir_b.join("branch.csv")).unwrap();
        assert_eq!(csv_a, csv_b, "identical configs must give byte-identical CSV");
        assert!(dir_a.join("summary.json").exists());
        assert!(dir_a.join("branch.svg").exists());
        assert!(dir_a.join("profile_1.csv").exists());

        let header = String::from_utf8(csv_a).unwrap();
        assert!(header
            .starts_with("xi,mu,u_at_0,uprime_at_0,sup_uprime,variation,shooting_defect,newton_iters"));
        assert_eq!(out_b.curve.points.len(), 5);
    }

    #[test]
    fn verify_accepts_fresh_branch_and_rejects_corruption() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        let config = small_config(&dir);
        run(&config).unwrap();

        let branch = dir.join("branch.csv");
        let ok = verify(&config, &branch).unwrap();
        assert!(ok.all_passed);
        assert!(ok.rows.iter().all(|r| r.defect < 1e-6));

        // corrupt one mu by 0.01: that row must fail
        let text = fs::read_to_string(&branch).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut fields: Vec<String> = lines[2].split(',').map(String::from).collect();
        let mu: f64 = fields[1].parse().unwrap();
        fields[1] = format!("{:.14e}", mu + 0.01);
        lines[2] = fields.join(",");
        let corrupted = dir.join("corrupted.csv");
        fs::write(&corrupted, lines.join("\n") + "\n").unwrap();
        let bad = verify(&config, &corrupted).unwrap();
        assert!(!bad.all_passed);
        assert_eq!(bad.rows.iter().filter(|r| !r.passed).count(), 1);
    }

    #[test]
    fn verify_rejects_missing_columns_and_empty_files() {
        let tmp = tempfile::tempdir().unwrap();
        let config = small_config(&tmp.path().join("out"));
        let bad = tmp.path().join("bad.csv");
        fs::write(&bad, "xi,mu\n1.0,2.0\n").unwrap();
        assert!(matches!(verify(&config, &bad), Err(Error::Config(_))));
        let empty = tmp.path().join("empty.csv");
        fs::write(&empty, "xi,mu,u_at_0,uprime_at_0\n").unwrap();
        assert!(matches!(verify(&config, &empty), Err(Error::Config(_))));
    }

    #[test]
    fn unforced_config_reproduces_k_sin_xi() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        let mut config = small_config(&dir);
        config.problem.forcing.amplitude = 0.0;
        let outcome = run(&config).unwrap();
        for p in &outcome.curve.points {
            assert!((p.solution.mu - 0.1 * p.solution.xi.sin()).abs() < 1e-10);
        }
    }
}
