//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::time::{Duration, Instant};

use capband_core::calibrate::{
    band_trace, calibrate, candidate_a, invariant_conic_residual, printed_candidate_a, CapParams,
};
use capband_core::geometry::{
    free_boundary_residual, great_sphere_profile, metric_report, minimality_residual, ImmersionGrid,
};
use capband_core::ode::{integrate, Trace};
use capband_core::report::{verify, RunConfig};
use capband_core::spectral::{profile_mismatch, spectrum};
use capband_core::stability::{
    index_closed, index_direct, morse_gram, q_nullity, second_fundamental_form, vy_field, Derivatives, Frame,
    FrameOrder,
};
use capband_core::IntegratorConfig;

const TOL: f64 = 1e-10;
const RADII: [f64; 5] = [0.3, 0.6, FRAC_PI_4, 1.2, 1.5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn setup(r: f64) -> (CapParams, Trace) {
    let p = calibrate(r, TOL).expect("calibration");
    let t = band_trace(&p).expect("band trace");
    (p, t)
}

fn grid(r: f64, n: usize) -> ImmersionGrid {
    let (p, t) = setup(r);
    ImmersionGrid::build_with(&p, &t, n, n, true).expect("grid")
}

fn ratio(coarse: f64, fine: f64, hc: f64, hf: f64) -> f64 {
    let q = 2.0 * hf / hc;
    coarse / fine * q * q
}

fn in_window(x: f64) -> bool {
    (3.5..=4.5).contains(&x)
}

fn hemisphere_constant() -> Outcome {
    let start = Instant::now();
    let p = calibrate(FRAC_PI_2, TOL).expect("calibration");
    let elapsed = start.elapsed();
    let err = (p.a - (3.0f64 / 8.0).sqrt()).abs();
    outcome(
        err < 1e-8 && elapsed < Duration::from_secs(1),
        format!("|a - sqrt(3/8)| = {err:.2e}, {elapsed:.2?}"),
    )
}

fn calibration_residuals() -> Outcome {
    let start = Instant::now();
    let mut worst_res: f64 = 0.0;
    let mut worst_seed: f64 = 0.0;
    let mut printed_gap = 0.0;
    for r in RADII {
        let p = calibrate(r, TOL).expect("calibration");
        worst_res = worst_res.max(p.residual[0].abs()).max(p.residual[1].abs());
        worst_seed = worst_seed.max((candidate_a(r).unwrap() - p.a).abs());
        if r == FRAC_PI_4 {
            printed_gap = (printed_candidate_a(r).unwrap() - p.a).abs();
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_res < 1e-8 && worst_seed < 1e-8 && printed_gap > 0.1 && elapsed < Duration::from_secs(5),
        format!(
            "max |F| = {worst_res:.2e}, max |seed - a| = {worst_seed:.3e} (need < 1e-8), \
             |printed root - a| at pi/4 = {printed_gap:.3e} (need > 0.1), {elapsed:.2?}"
        ),
    )
}

fn conservation() -> Outcome {
    let cfg = IntegratorConfig::with_tol(1e-10);
    let mut drift: f64 = 0.0;
    let mut conic: f64 = 0.0;
    for r in RADII {
        let p = calibrate(r, TOL).expect("calibration");
        let t = integrate(p.a, p.s_r, &cfg).expect("integration");
        drift = drift.max(t.max_drift());
        conic = conic.max(invariant_conic_residual(&t, p.a));
    }
    outcome(
        drift < 1e-9 && conic < 1e-9,
        format!("max first-integral drift = {drift:.2e}, max conic residual = {conic:.3e} (need < 1e-9)"),
    )
}

fn geometry(g128: &ImmersionGrid, g256: &ImmersionGrid) -> Outcome {
    let (m128, m256) = (metric_report(g128), metric_report(g256));
    let conf = ratio(m128.conformality(), m256.conformality(), g128.h, g256.h);
    let (min128, min256) = (minimality_residual(g128).max, minimality_residual(g256).max);
    let min_ratio = ratio(min128, min256, g128.h, g256.h);
    let fb = free_boundary_residual(g256).defect;
    let pass = m256.sphere < 1e-12
        && m256.containment_margin >= -1e-10
        && in_window(conf)
        && min256 < 1e-5
        && in_window(min_ratio)
        && fb < 1e-8;
    outcome(
        pass,
        format!(
            "sphere {:.1e}, containment {:.1e}, conformality ratio {conf:.3}, minimality {min256:.3e} \
             (ratio {min_ratio:.3}), free-boundary defect {fb:.1e}",
            m256.sphere, m256.containment_margin
        ),
    )
}

fn spectrum_criterion() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut margin = f64::INFINITY;
    let mut profile: f64 = 0.0;
    for r in [0.6, FRAC_PI_4, 1.2] {
        let (p, t) = setup(r);
        let s = spectrum(&p, &t, 8).expect("spectrum");
        let (tan, cot) = (r.tan(), 1.0 / r.tan());
        worst = worst
            .max((s.sigma0.expect("mode 0") + tan).abs())
            .max((s.sigma(1).unwrap() - cot).abs())
            .max((s.sigma(2).unwrap() - cot).abs());
        margin = margin.min(s.higher_mode_margin());
        profile = profile
            .max(profile_mismatch(s.line(0).unwrap(), |x| Ok(t.x_at(x)?.0)).unwrap())
            .max(profile_mismatch(s.line(1).unwrap(), |x| Ok(t.state_at(x)?.y)).unwrap())
            .max(profile_mismatch(s.line(2).unwrap(), |x| Ok(t.state_at(x)?.z)).unwrap());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-7 && margin > 0.0 && profile < 1e-7 && elapsed < Duration::from_secs(5),
        format!(
            "max eigenvalue error {worst:.2e}, min sigma(k>=3) - cot r = {margin:.3}, \
             eigenfunction mismatch {profile:.2e}, {elapsed:.2?}"
        ),
    )
}

fn index_criterion(g256: &ImmersionGrid) -> Outcome {
    let start = Instant::now();
    let frame = Frame::new(g256).expect("frame");
    let derivs = Derivatives::new(g256);
    let mut worst_gap: f64 = 0.0;
    let mut worst_closed = f64::NEG_INFINITY;
    for d in 1..5 {
        let y = capband_core::grid::unit(d);
        let v = vy_field(g256, &frame, &y).expect("variation field");
        let closed = index_closed(g256, &frame, &y).unwrap();
        let direct = index_direct(g256, &frame, &derivs, &v, &v, FrameOrder::SFirst);
        worst_gap = worst_gap.max((direct - closed).abs() / closed.abs());
        worst_closed = worst_closed.max(closed);
    }
    let gram = morse_gram(g256, &frame).unwrap();
    let elapsed = start.elapsed();
    outcome(
        worst_gap < 1e-3 && worst_closed < 0.0 && gram.negative_definite && elapsed < Duration::from_secs(30),
        format!(
            "max relative gap {worst_gap:.2e}, max I_closed {worst_closed:.4}, Gram eigenvalues {:?}, {elapsed:.2?}",
            gram.eigenvalues.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn nullity(g128: &ImmersionGrid, g256: &ImmersionGrid) -> Outcome {
    let (q128, q256) = (q_nullity(g128), q_nullity(g256));
    let rr = ratio(q128, q256, g128.h, g256.h);
    outcome(
        q256.abs() < 1e-4 && in_window(rr),
        format!("|Q|/norm = {:.2e} at 256, refinement ratio {rr:.3}", q256.abs()),
    )
}

fn determinism() -> Outcome {
    let cfg = RunConfig {
        r: 1.2,
        n_s: 96,
        n_theta: 64,
        ..RunConfig::default()
    };
    let a = verify(&cfg, None).unwrap().to_json().unwrap();
    let b = verify(&cfg, None).unwrap().to_json().unwrap();
    let serial = verify(
        &RunConfig {
            parallel: false,
            ..cfg.clone()
        },
        None,
    )
    .unwrap()
    .to_json()
    .unwrap();
    outcome(
        a == b && a == serial,
        format!("repeat identical: {}, serial identical: {}", a == b, a == serial),
    )
}

fn negative_controls() -> Outcome {
    let (p, _) = setup(FRAC_PI_4);
    let q = p.perturbed(1e-3).expect("perturbed shot");
    let t = band_trace(&q).unwrap();
    let defect = free_boundary_residual(&ImmersionGrid::build(&q, &t, 64, 16).unwrap()).defect;
    let g = ImmersionGrid::from_profile(1.0, 1.0, 129, 32, false, |s| Ok(great_sphere_profile(s))).unwrap();
    let b2 = second_fundamental_form(&g, &Frame::new(&g).unwrap(), &Derivatives::new(&g)).max_norm2;
    outcome(
        defect > 1e-4 && b2 < 1e-10,
        format!("perturbed free-boundary defect {defect:.3e}, great-sphere |B|^2 {b2:.1e}"),
    )
}

fn main() {
    let g128 = grid(FRAC_PI_4, 128);
    let g256 = grid(FRAC_PI_4, 256);
    let results = [
        ("1 hemisphere constant", hemisphere_constant()),
        ("2 calibration residuals", calibration_residuals()),
        ("3 conservation", conservation()),
        ("4 geometry", geometry(&g128, &g256)),
        ("5 spectrum", spectrum_criterion()),
        ("6 index at desk scale", index_criterion(&g256)),
        ("7 Q-nullity", nullity(&g128, &g256)),
        ("8 determinism", determinism()),
        ("9 negative controls", negative_controls()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
