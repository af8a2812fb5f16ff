//! The four analyses. Each writes its CSV tables into the output directory
//! and returns the summary text and any warnings.

use std::fmt::Write as _;
use std::path::Path;

use lyap_core::holder::{
    compute_holder_exponent, contraction_check, holder_scan, k_alpha_sv_bound, HolderOptions, HolderParams,
    PathOptions, ScanOptions,
};
use lyap_core::lyapunov::{
    check_quasi_irreducible_m2, directional_profile, gap_from_spectrum, le_furstenberg, le_spectrum, le_trajectory,
};
use lyap_core::markov_operator::{
    lift_measure, mixing_rate, stationary_measure_q, Certificate, MixingReport, Observable, ObservableFamily,
    ProjectiveCocycle,
};
use lyap_core::projective::{make_grid, GridScheme, ProjectiveGrid};
use lyap_core::rng::{derive_seed, stream_rng};
use lyap_core::Error;
use rand::Rng;

use crate::config::{Model, RunConfig};
use crate::output::{num, write_csv};
use crate::{CliError, Command, Outcome};

pub fn dispatch(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let model = cfg.build()?;
    match cmd {
        Command::EstimateLe => estimate_le(cfg, &model, out),
        Command::Mixing => mixing(cfg, &model, out),
        Command::Holder => holder(cfg, &model, out),
        Command::CheckIrreducibility => check_irreducibility(cfg, &model, out),
    }
}

fn holder_options(cfg: &RunConfig) -> HolderOptions {
    HolderOptions {
        n_max: cfg.holder.n_max,
        le_steps: cfg.holder.le_steps,
        le_trajectories: cfg.holder.le_trajectories,
        seed: cfg.seed,
        paths: PathOptions { seed: derive_seed(cfg.seed, 0x7061_7468), ..PathOptions::default() },
        alpha0: 0.5,
    }
}

fn require_grid<'a>(grid: &'a Option<ProjectiveGrid>, m: usize) -> Result<&'a ProjectiveGrid, CliError> {
    grid.as_ref().ok_or(CliError::Core(Error::UnsupportedDimension(m)))
}

/// Uniqueness certificate for the stationary measure: the user override,
/// or `k_α < 1` from the Hölder exponent computation. Failures of the
/// computation's hypotheses become warnings.
fn certificate(cfg: &RunConfig, model: &Model, warnings: &mut Vec<String>) -> Result<(Certificate, Option<HolderParams>), CliError> {
    if cfg.holder.override_certificate {
        warnings.push("uniqueness asserted by holder.override_certificate, not verified".into());
        return Ok((Certificate::Override, None));
    }
    let Some(grid) = model.cert_grid.as_ref() else {
        warnings.push(format!("no uniqueness certificate: fiber dimension {} has no projective grid", model.pair.dim()));
        return Ok((Certificate::Absent, None));
    };
    match compute_holder_exponent(&model.pair, grid, &holder_options(cfg)) {
        Ok(p) if p.certified => {
            Ok((Certificate::KAlpha { alpha: p.alpha, n: p.n_star, k_alpha: p.k_alpha_value }, Some(p)))
        }
        Ok(p) => {
            warnings.push(format!(
                "no uniqueness certificate: k_alpha = {} (std err {}) at n* = {}",
                p.k_alpha_value, p.k_alpha_std_err, p.n_star
            ));
            Ok((Certificate::Absent, Some(p)))
        }
        Err(e @ (Error::NotSimple { .. } | Error::GapNotReached { .. })) => {
            warnings.push(format!("no uniqueness certificate: {e}"));
            Ok((Certificate::Absent, None))
        }
        Err(e) => Err(e.into()),
    }
}

fn certificate_line(c: &Certificate) -> String {
    match c {
        Certificate::KAlpha { alpha, n, k_alpha } => format!("k_alpha = {k_alpha} < 1 at alpha = {alpha}, n = {n}"),
        Certificate::Override => "asserted by configuration".into(),
        Certificate::Absent => "absent".into(),
    }
}

fn push_warnings(s: &mut String, warnings: &[String]) {
    if warnings.is_empty() {
        s.push_str("warnings: none\n");
    } else {
        for w in warnings {
            let _ = writeln!(s, "warning: {w}");
        }
    }
}

fn estimate_row(method: &str, value: f64, std_err: f64, n: usize, t: usize, seed: u64) -> Vec<String> {
    vec![method.into(), num(value), num(std_err), n.to_string(), t.to_string(), seed.to_string()]
}

fn estimate_le(cfg: &RunConfig, model: &Model, out: &Path) -> Result<Outcome, CliError> {
    let pair = &model.pair;
    let (n, t, seed) = (cfg.estimator.n, cfg.estimator.trajectories, cfg.seed);
    let mut warnings = Vec::new();
    let traj = le_trajectory(pair, n, t, seed)?;
    warnings.extend(traj.warnings.iter().cloned());
    let spectrum = le_spectrum(pair, n, t, seed)?;
    let gap = gap_from_spectrum(&spectrum)?;
    let (cert, _) = certificate(cfg, model, &mut warnings)?;

    let mut rows = vec![estimate_row("trajectory", traj.value, traj.std_err, n, t, seed)];
    for (k, (v, se)) in spectrum.values.iter().zip(&spectrum.std_errs).enumerate() {
        rows.push(estimate_row(&format!("spectrum_L{}", k + 1), *v, *se, n, t, seed));
    }
    let (sum, sum_se) = spectrum.sum();
    rows.push(estimate_row("spectrum_sum", sum, sum_se, n, t, seed));
    rows.push(estimate_row("mean_log_det", pair.mean_log_det(), 0.0, 0, 0, seed));
    rows.push(estimate_row("gap", gap.gap, gap.std_err, n, t, seed));

    let mut furst = None;
    if let Some(grid) = model.grid.as_ref() {
        let pc = ProjectiveCocycle::new(pair, grid)?;
        let stat = stationary_measure_q(&pc, cfg.estimator.stationary_tol, cert.clone())?;
        let lifted = lift_measure(&pc, &stat.eta)?;
        let f = le_furstenberg(&pc, &lifted.m, cfg.estimator.budget_alpha, cert.is_present())?;
        rows.push(estimate_row("furstenberg", f.value, f.std_err, grid.len(), 0, seed));
        for w in stat.warnings.iter().chain(&f.warnings) {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
        furst = Some((f, stat.residual, stat.iterations));
    }
    write_csv(&out.join("estimates.csv"), &["method", "value", "std_err", "n", "T", "seed"], &rows)?;

    let mut s = String::new();
    let _ = writeln!(s, "estimate-le: |Sigma| = {}, m = {}, n = {n}, T = {t}, seed = {seed}", pair.symbols(), pair.dim());
    let _ = writeln!(s, "L1 (trajectory) = {} +/- {}", traj.value, traj.std_err);
    for (k, (v, se)) in spectrum.values.iter().zip(&spectrum.std_errs).enumerate() {
        let _ = writeln!(s, "L{} (spectrum) = {v} +/- {se}", k + 1);
    }
    let _ = writeln!(s, "sum of exponents = {sum} +/- {sum_se}; mean log|det A| = {}", pair.mean_log_det());
    let _ = writeln!(s, "gap = {} +/- {}, simple = {}, borderline = {}", gap.gap, gap.std_err, gap.simple, gap.borderline);
    if let Some((f, residual, iters)) = furst {
        let _ = writeln!(
            s,
            "L1 (furstenberg) = {} +/- {} (grid budget); stationary residual {residual:e} after {iters} iterations",
            f.value, f.std_err
        );
    } else {
        s.push_str("L1 (furstenberg): not computed (no projective grid for this dimension)\n");
    }
    let _ = writeln!(s, "certificate: {}", certificate_line(&cert));
    push_warnings(&mut s, &warnings);
    Ok(Outcome { summary: s, warnings })
}

fn family(cfg: &RunConfig) -> ObservableFamily {
    match cfg.mixing.family.as_str() {
        "sigma-marginal" => ObservableFamily::SigmaMarginal,
        _ => ObservableFamily::Holder { alpha: cfg.mixing.alpha, terms: 3 },
    }
}

/// Max of `|Π Q̄ ψ − Q Π ψ|` over seeded random ψ on Σ×Σ×ℙ.
fn commutation_discrepancy(pc: &ProjectiveCocycle, trials: usize, seed: u64) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    let carrier = pc.sigma_sigma_p();
    for trial in 0..trials {
        let mut rng = stream_rng(seed, trial as u64);
        let values = (0..carrier.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let psi = Observable::new(carrier, values)?;
        let lhs = pc.project_pi(&pc.apply_qbar(&psi)?)?;
        let rhs = pc.apply_q(&pc.project_pi(&psi)?)?;
        let d = lhs.values().iter().zip(rhs.values()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        worst = worst.max(d);
    }
    Ok(worst)
}

fn mixing(cfg: &RunConfig, model: &Model, out: &Path) -> Result<Outcome, CliError> {
    let pair = &model.pair;
    let grid = require_grid(&model.grid, pair.dim())?;
    let mut warnings = Vec::new();
    let (cert, _) = certificate(cfg, model, &mut warnings)?;
    let pc = ProjectiveCocycle::new(pair, grid)?;
    let tol = cfg.estimator.stationary_tol;
    let stat = stationary_measure_q(&pc, tol, cert.clone())?;
    for w in &stat.warnings {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
    let lifted = lift_measure(&pc, &stat.eta)?;
    let commutation = commutation_discrepancy(&pc, cfg.mixing.commutation_trials, derive_seed(cfg.seed, 0x636f_6d6d))?;
    let fam = family(cfg);
    let mix_seed = derive_seed(cfg.seed, 0x006d_6978);
    let report = mixing_rate(&pc, &stat.eta, cfg.mixing.trials, mix_seed, fam, cfg.mixing.n_max, tol)?;
    let reseed = mixing_rate(&pc, &stat.eta, cfg.mixing.trials, derive_seed(mix_seed, 1), fam, cfg.mixing.n_max, tol)?;
    let spread = (report.sigma_hat - reseed.sigma_hat).abs();

    let labels = pair.space().labels();
    let big_n = grid.len();
    let ns = pair.symbols();
    let rows: Vec<Vec<String>> = stat
        .eta
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| vec![labels[i / big_n].clone(), (i % big_n).to_string(), num(*w)])
        .collect();
    write_csv(&out.join("stationary.csv"), &["symbol", "grid_index", "weight"], &rows)?;
    let rows: Vec<Vec<String>> = lifted
        .m
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (pair_idx, g) = (i / big_n, i % big_n);
            vec![labels[pair_idx / ns].clone(), labels[pair_idx % ns].clone(), g.to_string(), num(*w)]
        })
        .collect();
    write_csv(&out.join("stationary_lift.csv"), &["symbol", "symbol2", "grid_index", "weight"], &rows)?;
    write_mixing_csv(out, &report, &reseed)?;

    let mut s = String::new();
    let _ = writeln!(s, "mixing: |Sigma| = {ns}, m = {}, N = {big_n}, resolution = {}", pair.dim(), grid.resolution());
    let _ = writeln!(s, "stationary measure: TV residual {:e} after {} iterations", stat.residual, stat.iterations);
    let _ = writeln!(s, "lifted measure: Qbar residual {:e}", lifted.residual);
    let _ = writeln!(s, "commutation self-test: max discrepancy {commutation:e} over {} observables", cfg.mixing.commutation_trials);
    let _ = writeln!(
        s,
        "sigma_hat = {} +/- {spread} (re-seeded {}), c_hat = {}, fit points = {}",
        report.sigma_hat, reseed.sigma_hat, report.c_hat, report.fit_points
    );
    let _ = writeln!(s, "kernel lambda2_mod = {}", pair.kernel().lambda2_mod());
    let _ = writeln!(s, "certificate: {}", certificate_line(&cert));
    push_warnings(&mut s, &warnings);
    Ok(Outcome { summary: s, warnings })
}

fn write_mixing_csv(out: &Path, report: &MixingReport, reseed: &MixingReport) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = report
        .residuals
        .iter()
        .zip(&reseed.residuals)
        .enumerate()
        .map(|(i, (a, b))| vec![(i + 1).to_string(), num(*a), num((a - b).abs()), num(report.resolution)])
        .collect();
    write_csv(&out.join("mixing.csv"), &["step", "residual", "reseed_spread", "grid_resolution"], &rows)
}

fn holder(cfg: &RunConfig, model: &Model, out: &Path) -> Result<Outcome, CliError> {
    let pair = &model.pair;
    let grid = require_grid(&model.cert_grid, pair.dim())?;
    let opts = holder_options(cfg);
    let params = compute_holder_exponent(pair, grid, &opts)?;
    let mut warnings = params.warnings.clone();
    if !params.certified {
        warnings.push(format!("not certified: k_alpha = {} (std err {})", params.k_alpha_value, params.k_alpha_std_err));
    }
    let bound = k_alpha_sv_bound(pair, grid, params.alpha, params.n_star, &opts.paths)?;
    let contraction = contraction_check(
        pair,
        grid,
        params.alpha,
        params.n_star,
        cfg.holder.contraction_trials,
        derive_seed(cfg.seed, 0x636f_6e74),
        &opts.paths,
    )?;
    if !contraction.passed {
        warnings.push(format!("contraction check: {} violations", contraction.violations));
    }
    let scan = holder_scan(
        pair,
        &ScanOptions {
            n_probes: cfg.holder.probes,
            d_min: cfg.holder.d_min,
            d_max: cfg.holder.d_max,
            n: cfg.holder.scan_steps,
            t: cfg.holder.scan_trajectories,
            seed: derive_seed(cfg.seed, 0x7363_616e),
            alpha: params.alpha,
            certified: params.certified,
        },
    )?;
    warnings.extend(scan.warnings.iter().cloned());

    let q = |name: &str, v: f64, se: f64| vec![name.to_string(), num(v), num(se)];
    let rows = vec![
        q("alpha", params.alpha, 0.0),
        q("n_star", params.n_star as f64, 0.0),
        q("c_moment", params.c_moment, 0.0),
        q("contraction_sup", params.contraction_sup, 0.0),
        q("moment_bound", params.moment_bound, 0.0),
        q("k_alpha", params.k_alpha_value, params.k_alpha_std_err),
        q("k_alpha_sv_bound", bound.value, bound.std_err),
        q("gap", params.gap.gap, params.gap.std_err),
        q("contraction_max_ratio", contraction.max_ratio, contraction.resolution),
        q("scan_slope", scan.slope, 0.0),
        q("eta_constant", scan.eta_constant, 0.0),
    ];
    write_csv(&out.join("holder.csv"), &["quantity", "value", "std_err"], &rows)?;
    let rows: Vec<Vec<String>> = contraction
        .ratios
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), num(*r), num(contraction.k_alpha), num(contraction.resolution)])
        .collect();
    write_csv(&out.join("contraction.csv"), &["trial", "ratio", "k_alpha", "grid_resolution"], &rows)?;
    let rows: Vec<Vec<String>> = scan
        .rows
        .iter()
        .map(|r| {
            vec![
                r.probe_id.to_string(),
                num(r.d_fiber),
                num(r.d_kernel),
                num(r.d_total),
                num(r.l1_left),
                num(r.l1_right),
                num(r.dl1),
                num(r.noise_floor),
                r.included_in_fit.to_string(),
                r.kind.as_str().to_string(),
                num(r.eta_left),
                num(r.eta_right),
                num(r.eta_noise),
                r.eta_included.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("scan.csv"),
        &[
            "probe_id",
            "d_fiber",
            "d_kernel",
            "d_total",
            "L1_left",
            "L1_right",
            "dL1",
            "noise_floor",
            "included_in_fit",
            "kind",
            "eta_left",
            "eta_right",
            "eta_noise",
            "eta_included",
        ],
        &rows,
    )?;

    let mut s = String::new();
    let _ = writeln!(s, "holder: |Sigma| = {}, m = {}, certification grid N = {}", pair.symbols(), pair.dim(), grid.len());
    let _ = writeln!(s, "alpha* = {}, n* = {}, C = {}", params.alpha, params.n_star, params.c_moment);
    let _ = writeln!(
        s,
        "k_alpha = {} +/- {} (singular-value bound {}), certified = {}",
        params.k_alpha_value, params.k_alpha_std_err, bound.value, params.certified
    );
    let _ = writeln!(
        s,
        "contraction: max ratio {} vs k_alpha {} over {} observables, violations = {}, grid resolution {}",
        contraction.max_ratio,
        contraction.k_alpha,
        contraction.ratios.len(),
        contraction.violations,
        contraction.resolution
    );
    let _ = writeln!(s, "scan: {} probes, slope = {} from {} points", scan.rows.len(), scan.slope, scan.fit_points);
    match scan.eta_slope {
        Some(e) => {
            let _ = writeln!(s, "stationary-measure stability: slope {e}, constant {} from {} points", scan.eta_constant, scan.eta_fit_points);
        }
        None => {
            let _ = writeln!(s, "stationary-measure stability: constant {} from {} points", scan.eta_constant, scan.eta_fit_points);
        }
    }
    push_warnings(&mut s, &warnings);
    Ok(Outcome { summary: s, warnings })
}

fn check_irreducibility(cfg: &RunConfig, model: &Model, out: &Path) -> Result<Outcome, CliError> {
    let pair = &model.pair;
    if pair.dim() != 2 {
        let w = format!("not checked: irreducibility test supports m = 2 only (m = {})", pair.dim());
        let summary = format!("check-irreducibility: status = not checked\nwarning: {w}\n");
        return Ok(Outcome { summary, warnings: vec![w] });
    }
    let (n, t, seed) = (cfg.estimator.n, cfg.estimator.trajectories, cfg.seed);
    let report = check_quasi_irreducible_m2(pair, n, t, seed)?;
    let dirs = make_grid(2, cfg.profile.directions, GridScheme::UniformAngle)?;
    let profile = directional_profile(pair, &dirs, cfg.profile.n, cfg.profile.trajectories, derive_seed(seed, 0x7072_6f66))?;
    let labels = pair.space().labels();

    let mut rows = Vec::new();
    for (id, field) in report.witnesses.iter().enumerate() {
        for (x, line) in field.lines.iter().enumerate() {
            let angle = line.as_ref().map(|p| num(p.rep()[1].atan2(p.rep()[0]).rem_euclid(std::f64::consts::PI)));
            rows.push(vec![
                id.to_string(),
                labels[x].clone(),
                angle.unwrap_or_default(),
                num(field.exponent),
                num(report.l1.value),
                num(report.l1.std_err),
            ]);
        }
    }
    write_csv(&out.join("irreducibility.csv"), &["field_id", "symbol", "angle", "exponent", "L1", "L1_std_err"], &rows)?;
    let rows: Vec<Vec<String>> = profile
        .entries
        .iter()
        .map(|e| vec![labels[e.symbol].clone(), e.direction.to_string(), num(e.value), num(e.std_err), e.cluster.to_string()])
        .collect();
    write_csv(&out.join("profile.csv"), &["symbol", "direction_index", "value", "std_err", "cluster"], &rows)?;

    let mut warnings = Vec::new();
    if !report.quasi_irreducible {
        warnings.push("not quasi-irreducible: an invariant line field has exponent below L1".into());
    }
    let mut s = String::new();
    let _ = writeln!(s, "check-irreducibility: |Sigma| = {}, m = 2", pair.symbols());
    let _ = writeln!(s, "L1 = {} +/- {}", report.l1.value, report.l1.std_err);
    let _ = writeln!(
        s,
        "irreducible = {}, quasi-irreducible = {}, every line field invariant = {}",
        report.irreducible, report.quasi_irreducible, report.every_field_invariant
    );
    for (id, f) in report.witnesses.iter().enumerate() {
        let _ = writeln!(s, "witness {id}: invariant line field with exponent {}", f.exponent);
    }
    let _ = writeln!(
        s,
        "directional profile: {} levels {:?}, bandwidth {}, n = {}",
        profile.levels.len(),
        profile.levels,
        profile.bandwidth,
        profile.n
    );
    push_warnings(&mut s, &warnings);
    Ok(Outcome { summary: s, warnings })
}

/// Convenience for tests: the certificate a configuration would receive.
pub fn certify(cfg: &RunConfig, model: &Model) -> Result<(Certificate, Vec<String>), CliError> {
    let mut w = Vec::new();
    let (c, _) = certificate(cfg, model, &mut w)?;
    Ok((c, w))
}

