//! The `verify` pipeline: every certificate for one radius, collected into a single report.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::calibrate::{self, band_trace, conservation, invariant_conic_residual, CapParams};
use crate::error::{Error, Result};
use crate::geometry::{
    free_boundary_residual, geometry_report, great_sphere_profile, metric_report, minimality_residual, GeometryReport,
    ImmersionGrid,
};
use crate::mesh::Projection;
use crate::ode::Trace;
use crate::spectral::{profile_mismatch, spectrum, SpectrumReport};
use crate::stability::{self, second_fundamental_form, Derivatives, Frame, StabilityReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Grid size at which the acceptance tolerances for O(h²) quantities are stated.
pub const REFERENCE_GRID: usize = 256;

/// Run settings echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub r: f64,
    pub tol: f64,
    pub n_s: usize,
    pub n_theta: usize,
    pub k_max: usize,
    pub projection: Projection,
    /// Only picks the sign of the perturbation in the negative control.
    pub seed: u64,
    #[serde(skip)]
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            r: std::f64::consts::FRAC_PI_4,
            tol: 1e-10,
            n_s: 128,
            n_theta: 128,
            k_max: 8,
            projection: Projection::Drop0,
            seed: 0,
            parallel: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        calibrate::check_radius(self.r)?;
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if self.n_s < 16 || self.n_theta < 16 || !self.n_theta.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "grid sizes must be >= 16 with even n_theta, got {} x {}",
                self.n_s, self.n_theta
            )));
        }
        if self.k_max < 3 {
            return Err(Error::InvalidInput(format!(
                "k_max must be at least 3, got {}",
                self.k_max
            )));
        }
        Ok(())
    }

    /// Factor applied to tolerances of O(h²) quantities stated at the reference grid.
    pub fn fd_scale(&self) -> f64 {
        let q = (REFERENCE_GRID - 1) as f64 / (self.n_s - 1) as f64;
        (q * q).max(1.0)
    }
}

pub fn is_hemisphere(r: f64) -> bool {
    (r - FRAC_PI_2).abs() < 1e-9
}

/// One certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub tol: Option<f64>,
    pub pass: bool,
    /// Recorded but not part of the verdict.
    pub informational: bool,
    pub note: String,
}

impl Check {
    fn below(name: &str, value: f64, tol: f64) -> Self {
        Self::new(name, value, tol, value.abs() < tol)
    }

    fn new(name: &str, value: f64, tol: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            tol: Some(tol),
            pass,
            informational: false,
            note: String::new(),
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    fn informational(mut self) -> Self {
        self.informational = true;
        self
    }

    fn skipped(name: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            value: None,
            tol: None,
            pass: true,
            informational: false,
            note: format!("skipped: {why}"),
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self {
            name: name.into(),
            value: None,
            tol: None,
            pass: false,
            informational: false,
            note: format!("failed: {err}"),
        }
    }
}

/// A report section that either completed, failed, or did not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Section<T> {
    Done(T),
    Failed { failed: String, error: String },
    Skipped { skipped: String },
}

impl<T> Section<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(v) => Section::Done(v),
            Err(e) => Section::Failed {
                failed: e.to_string(),
                error: e.kind().into(),
            },
        }
    }

    pub fn done(&self) -> Option<&T> {
        match self {
            Section::Done(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub params: Section<CapParams>,
    pub spectrum: Section<SpectrumReport>,
    pub geometry: Section<GeometryReport>,
    pub stability: Section<StabilityReport>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Calibrates, or validates supplied parameters against the configured radius.
pub fn resolve_params(config: &RunConfig, supplied: Option<CapParams>) -> Result<CapParams> {
    match supplied {
        Some(p) => {
            p.validate()?;
            Ok(p)
        }
        None => calibrate::calibrate(config.r, config.tol),
    }
}

/// `(e_coarse / e_fine)` rescaled to an exact halving of the s spacing.
fn refinement_ratio(coarse: f64, fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    let q = 2.0 * h_fine / h_coarse;
    coarse / fine * q * q
}

fn coarse_sizes(config: &RunConfig) -> (usize, usize) {
    let n_s = (config.n_s - 1) / 2 + 1;
    let mut n_t = config.n_theta / 2;
    if !n_t.is_multiple_of(2) {
        n_t += 1;
    }
    (n_s.max(16), n_t.max(16))
}

const ORDER_WINDOW: (f64, f64) = (3.5, 4.5);

fn order_check(name: &str, ratio: f64) -> Check {
    Check::new(name, ratio, 4.0, (ORDER_WINDOW.0..=ORDER_WINDOW.1).contains(&ratio))
        .note("refinement ratio under halving of the grid spacing, accepted in [3.5, 4.5]")
}

fn spectrum_checks(params: &CapParams, trace: &Trace, spec: &SpectrumReport, checks: &mut Vec<Check>) {
    let tan = params.r.tan();
    let cot = 1.0 / tan;
    let tol = 1e-7;
    match spec.sigma0 {
        Some(s0) => checks.push(
            Check::below("sigma0_minus_neg_tan", (s0 + tan).abs() / tan.max(1.0), tol)
                .note("|sigma(0) + tan r| / max(1, tan r)"),
        ),
        None => checks.push(Check::skipped(
            "sigma0_minus_neg_tan",
            "mode 0 is Dirichlet-degenerate at the hemisphere",
        )),
    }
    for k in [1, 2] {
        let name = format!("sigma{k}_minus_cot");
        match spec.sigma(k) {
            Some(s) => checks.push(Check::below(&name, s - cot, tol)),
            None => checks.push(Check::failed(
                &name,
                &Error::VerificationFailure(format!("mode {k} missing")),
            )),
        }
    }
    checks.push(
        Check::new(
            "higher_modes_above_cot",
            spec.higher_mode_margin(),
            0.0,
            spec.higher_mode_margin() > 0.0,
        )
        .note("min over 3 <= k <= k_max of sigma(k) - cot r"),
    );
    type Reference = fn(&Trace, f64) -> Result<f64>;
    let refs: [(usize, &str, Reference); 3] = [
        (0, "eigenfunction_x", |t, s| Ok(t.x_at(s)?.0)),
        (1, "eigenfunction_y", |t, s| Ok(t.state_at(s)?.y)),
        (2, "eigenfunction_z", |t, s| Ok(t.state_at(s)?.z)),
    ];
    for (k, name, f) in refs {
        match spec.line(k) {
            Some(line) => match profile_mismatch(line, |s| f(trace, s)) {
                Ok(m) => checks.push(Check::below(name, m, tol).note("max-normalized profile difference")),
                Err(e) => checks.push(Check::failed(name, &e)),
            },
            None => checks.push(Check::skipped(name, "mode not in the spectrum")),
        }
    }
}

fn geometry_checks(
    config: &RunConfig,
    grid: &ImmersionGrid,
    coarse: Option<&ImmersionGrid>,
    geo: &GeometryReport,
    checks: &mut Vec<Check>,
) {
    let scale = config.fd_scale();
    checks.push(Check::below("sphere_constraint", geo.sphere, 1e-12));
    checks.push(Check::new(
        "containment_margin",
        geo.containment_margin,
        -1e-10,
        geo.containment_margin >= -1e-10,
    ));
    checks.push(
        Check::below("minimality", geo.minimality.max, 1e-5 * scale)
            .note(format!("tolerance 1e-5 at {REFERENCE_GRID} rows, scaled by h^2")),
    );
    checks.push(Check::below("free_boundary_defect", geo.free_boundary_defect, 1e-8));
    if let Some(c) = coarse {
        let mf = metric_report(grid);
        let mc = metric_report(c);
        checks.push(order_check(
            "conformality_order",
            refinement_ratio(mc.conformality(), mf.conformality(), c.h, grid.h),
        ));
        checks.push(order_check(
            "minimality_order",
            refinement_ratio(minimality_residual(c).max, geo.minimality.max, c.h, grid.h),
        ));
    }
}

fn stability_checks(
    config: &RunConfig,
    grid: &ImmersionGrid,
    coarse: Option<&ImmersionGrid>,
    rep: &StabilityReport,
    checks: &mut Vec<Check>,
) {
    let scale = config.fd_scale();
    for d in &rep.directions {
        checks.push(
            Check::below(&format!("index_gap_e{}", d.direction), d.relative_gap, 1e-3 * scale)
                .note("|I_direct - I_closed| / |I_closed|"),
        );
    }
    let worst = rep
        .directions
        .iter()
        .map(|d| d.closed)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new("index_closed_negative", worst, 0.0, worst < 0.0));
    let top = rep.gram.eigenvalues.last().copied().unwrap_or(f64::NAN);
    checks.push(
        Check::new("gram_negative_definite", top, 0.0, rep.gram.negative_definite)
            .note("largest eigenvalue of the 4x4 Gram matrix; negative certifies Morse index >= 4"),
    );
    checks.push(Check::below("gram_symmetry", rep.gram.symmetry_defect, 1e-10));
    checks.push(
        Check::below("g12_cross_check", rep.g12_relative_gap, 1e-3)
            .note("closed vs quadrature polarization, relative to max |G_ii|"),
    );
    checks.push(
        Check::below("q_nullity", rep.q_nullity, 1e-4 * scale)
            .note("Q(Phi_theta, Phi_theta) / integral of |Phi_theta|^2"),
    );
    if let Some(c) = coarse {
        let q = stability::q_nullity(c);
        checks.push(order_check(
            "q_nullity_order",
            refinement_ratio(q, rep.q_nullity, c.h, grid.h),
        ));
    }
}

fn control_checks(config: &RunConfig, params: &CapParams, checks: &mut Vec<Check>) {
    let sign = if config.seed.is_multiple_of(2) { 1.0 } else { -1.0 };
    let perturbed = params
        .perturbed(sign * 1e-3)
        .or_else(|_| params.perturbed(-sign * 1e-3))
        .and_then(|p| {
            let t = band_trace(&p)?;
            let g = ImmersionGrid::build(&p, &t, 32, 16)?;
            Ok((p, free_boundary_residual(&g).defect))
        });
    match perturbed {
        Ok((p, defect)) => checks.push(
            Check::new("perturbed_free_boundary_defect", defect, 1e-4, defect > 1e-4)
                .note(format!("negative control at a = {} (must exceed the tolerance)", p.a)),
        ),
        Err(e) => checks.push(Check::failed("perturbed_free_boundary_defect", &e)),
    }
    let sphere = ImmersionGrid::from_profile(1.0, 1.0, 65, 32, false, |s| Ok(great_sphere_profile(s))).and_then(|g| {
        let frame = Frame::new(&g)?;
        Ok(second_fundamental_form(&g, &frame, &Derivatives::new(&g)).max_norm2)
    });
    match sphere {
        Ok(b) => checks.push(Check::below("great_sphere_b2", b, 1e-10).note("totally geodesic control")),
        Err(e) => checks.push(Check::failed("great_sphere_b2", &e)),
    }
}

fn calibration_checks(params: &CapParams, trace: &Trace, checks: &mut Vec<Check>) {
    let res = params.residual[0].abs().max(params.residual[1].abs());
    checks.push(Check::below("calibration_residual", res, 1e-8));
    checks.push(Check::below("conservation", conservation(trace), 1e-9));
    checks.push(
        Check::below("seed_agreement", params.seed_a - params.a, 1e-8)
            .informational()
            .note("closed-form seed vs refined a; the seed is only exact at the hemisphere"),
    );
    let conic = invariant_conic_residual(trace, params.a);
    checks.push(
        Check::below("invariant_conic", conic, 1e-9)
            .informational()
            .note("holds on the canonical orbit only at the hemisphere"),
    );
}

/// Runs every certificate. Errors in one stage are recorded and the remaining stages still run
/// where they can; only a failure to obtain parameters or a trace ends the run early.
pub fn verify(config: &RunConfig, supplied: Option<CapParams>) -> Result<VerifyReport> {
    config.validate()?;
    let mut checks = Vec::new();
    let mut report = VerifyReport {
        tool: "capband".into(),
        version: VERSION.into(),
        config: config.clone(),
        params: Section::Skipped {
            skipped: "not reached".into(),
        },
        spectrum: Section::Skipped {
            skipped: "not reached".into(),
        },
        geometry: Section::Skipped {
            skipped: "not reached".into(),
        },
        stability: Section::Skipped {
            skipped: "not reached".into(),
        },
        checks: Vec::new(),
        pass: false,
    };
    let params = match resolve_params(config, supplied) {
        Ok(p) => p,
        Err(e) => {
            report.params = Section::from_result(Err(e));
            return Ok(report);
        }
    };
    report.params = Section::Done(params);
    let trace = match band_trace(&params) {
        Ok(t) => t,
        Err(e) => {
            report.checks.push(Check::failed("trace", &e));
            return Ok(report);
        }
    };
    calibration_checks(&params, &trace, &mut checks);

    let spec = spectrum(&params, &trace, config.k_max);
    if let Ok(s) = &spec {
        spectrum_checks(&params, &trace, s, &mut checks);
    } else if let Err(e) = &spec {
        checks.push(Check::failed("spectrum", e));
    }
    let (sigma0, sigma1) = match &spec {
        Ok(s) => (s.sigma0.unwrap_or(0.0), s.sigma1),
        Err(_) => (f64::NAN, f64::NAN),
    };
    report.spectrum = Section::from_result(spec);

    let grid = ImmersionGrid::build_with(&params, &trace, config.n_s, config.n_theta, config.parallel);
    let (cs, ct) = coarse_sizes(config);
    let coarse = ImmersionGrid::build_with(&params, &trace, cs, ct, config.parallel).ok();
    match grid {
        Ok(grid) => {
            let geo = geometry_report(&grid, sigma0, sigma1);
            geometry_checks(config, &grid, coarse.as_ref(), &geo, &mut checks);
            report.geometry = Section::Done(geo);
            if is_hemisphere(params.r) {
                report.stability = Section::Skipped {
                    skipped: "c(r) is undefined at r = pi/2".into(),
                };
            } else {
                let st = stability::stability_report(&grid);
                match &st {
                    Ok(rep) => stability_checks(config, &grid, coarse.as_ref(), rep, &mut checks),
                    Err(e) => checks.push(Check::failed("stability", e)),
                }
                report.stability = Section::from_result(st);
            }
        }
        Err(e) => {
            checks.push(Check::failed("geometry", &e));
            report.geometry = Section::from_result(Err(e));
        }
    }
    control_checks(config, &params, &mut checks);

    report.pass = checks.iter().all(|c| c.pass || c.informational);
    report.checks = checks;
    Ok(report)
}
