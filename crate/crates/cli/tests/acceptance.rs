//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::LN_2;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use lyap_core::benchmarks::{
    constant, diagonal_constant, hyperbolic_two_symbol, iid_diagonal_default, planar_benchmarks, random_kernel,
    random_pair, rotation_cocycle,
};
use lyap_core::cocycle::{CocyclePair, FiberMap};
use lyap_core::holder::{
    compute_holder_exponent, contraction_check, holder_scan, k_alpha_direct, k_alpha_sv_bound, HolderOptions,
    HolderParams, PathOptions, PerturbationKind, ScanOptions,
};
use lyap_core::linalg::Mat;
use lyap_core::lyapunov::{le_exterior, le_furstenberg, le_spectrum, le_trajectory};
use lyap_core::markov_operator::{
    lift_measure, mixing_rate, stationary_measure_q, Certificate, Observable, ObservableFamily, ProjectiveCocycle,
};
use lyap_core::projective::{make_grid, GridScheme, ProjectiveGrid};
use lyap_core::rng::{derive_seed, stream_rng};
use lyap_core::symbol_space::{ergodicity_report, Kernel, SymbolSpace};
use rand::Rng;

type Outcome = Result<String, String>;

fn grid(n: usize) -> ProjectiveGrid {
    make_grid(2, n, GridScheme::UniformAngle).unwrap()
}

fn certify(pair: &CocyclePair) -> HolderParams {
    compute_holder_exponent(pair, &grid(180), &HolderOptions::default()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    if elapsed <= limit {
        Ok(format!("{detail}; {:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
    } else {
        Err(format!("{detail}; {:.2}s exceeds {}s", elapsed.as_secs_f64(), limit.as_secs()))
    }
}

fn commutation() -> Outcome {
    let start = Instant::now();
    let pair = random_pair(3, 2, 2024).unwrap();
    let pc = ProjectiveCocycle::new(&pair, &grid(180)).unwrap();
    let carrier = pc.sigma_sigma_p();
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = stream_rng(77, trial);
        let psi = Observable::new(carrier, (0..carrier.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let lhs = pc.project_pi(&pc.apply_qbar(&psi).unwrap()).unwrap();
        let rhs = pc.apply_q(&pc.project_pi(&psi).unwrap()).unwrap();
        worst = lhs.values().iter().zip(rhs.values()).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    let detail = format!("max discrepancy {worst:e} over 100 observables");
    if worst > 1e-12 {
        return Err(detail);
    }
    within_time(start.elapsed(), Duration::from_secs(5), detail)
}

fn furstenberg() -> Outcome {
    let start = Instant::now();
    let fine = grid(720);
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, pair) in planar_benchmarks().unwrap() {
        let params = certify(&pair);
        let cert = Certificate::KAlpha { alpha: params.alpha, n: params.n_star, k_alpha: params.k_alpha_value };
        let pc = ProjectiveCocycle::new(&pair, &fine).unwrap();
        let eta = stationary_measure_q(&pc, 1e-12, cert).unwrap().eta;
        let m = lift_measure(&pc, &eta).unwrap().m;
        let f = le_furstenberg(&pc, &m, 1.0, params.certified).unwrap();
        let t = le_trajectory(&pair, 100_000, 64, 11).unwrap();
        let diff = (t.value - f.value).abs();
        let tol = (3.0 * t.std_err).max(f.std_err);
        let pass = params.certified && diff <= tol;
        ok &= pass;
        lines.push(format!("{name}: certified={} |diff|={diff:.2e} tol={tol:.2e}", params.certified));
    }
    let detail = lines.join("; ");
    if !ok {
        return Err(detail);
    }
    within_time(start.elapsed(), Duration::from_secs(60), detail)
}

fn closed_forms() -> Outcome {
    let diag = le_trajectory(&diagonal_constant().unwrap(), 10_000, 8, 3).unwrap();
    let rot = le_trajectory(&rotation_cocycle().unwrap(), 1_000_000, 8, 3).unwrap();
    let (iid, oracle) = iid_diagonal_default().unwrap();
    let iid_est = le_trajectory(&iid, 100_000, 64, 3).unwrap();
    let e1 = (diag.value - LN_2).abs();
    let e2 = rot.value.abs();
    let e3 = (iid_est.value - oracle).abs();
    check(
        e1 <= 1e-9 && e2 <= 1e-3 && e3 <= 3.0 * iid_est.std_err,
        format!(
            "diag |L1-log2|={e1:.1e}; rotation |L1|={e2:.1e}; iid |L1-{oracle}|={e3:.1e} (3se={:.1e})",
            3.0 * iid_est.std_err
        ),
    )
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn spectrum_identities() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, pair) in [("m=2 hyperbolic", hyperbolic_two_symbol().unwrap()), ("m=3 random", random_pair(3, 3, 8).unwrap())] {
        let (n, t, seed) = (50_000, 32, 5);
        let spectrum = le_spectrum(&pair, n, t, seed).unwrap();
        let (sum, sum_se) = spectrum.sum();
        let det = pair.mean_log_det();
        let trace_err = (sum - det).abs();
        let trace_tol = 1e-8 + 3.0 * sum_se;
        let ext = le_exterior(&pair, 2, n, t, seed).unwrap();
        // Per-trajectory L₁ + L₂ against L₁(∧₂A) on the same paths.
        let top2: Vec<f64> = (0..t).map(|i| spectrum.samples[0][i] + spectrum.samples[1][i]).collect();
        let (s12, se12) = mean_se(&top2);
        let ext_err = (ext.value - s12).abs();
        let ext_tol = 1e-8 + 3.0 * (ext.std_err.powi(2) + se12.powi(2)).sqrt();
        ok &= trace_err <= trace_tol && ext_err <= ext_tol;
        lines.push(format!(
            "{name}: |sum-E log|det||={trace_err:.1e} (tol {trace_tol:.1e}), |L1(wedge)-(L1+L2)|={ext_err:.1e} (tol {ext_tol:.1e})"
        ));
    }
    check(ok, lines.join("; "))
}

fn k_alpha_checks() -> Outcome {
    let exact = PathOptions { monte_carlo: false, ..PathOptions::default() };
    let scalar = constant(Mat::identity(2, 2) * 3.0).unwrap();
    let k_scalar = k_alpha_direct(&scalar, &grid(180), 0.7, 3, &exact).unwrap().value;
    let k_diag = k_alpha_direct(&diagonal_constant().unwrap(), &grid(1440), 1.0, 1, &exact).unwrap().value;
    let mut sub_worst = 0.0f64;
    let mut sub_cases = 0;
    for seed in 0..10u64 {
        let pair = random_pair(2 + seed as usize % 2, 2, seed).unwrap();
        let g = grid(180);
        let k: Vec<f64> = (1..=4).map(|n| k_alpha_direct(&pair, &g, 0.5, n, &exact).unwrap().value).collect();
        for (a, b) in [(1, 1), (1, 2), (2, 2), (1, 3)] {
            sub_worst = sub_worst.max(k[a + b - 1] / (k[a - 1] * k[b - 1]));
            sub_cases += 1;
        }
    }
    let mut dom_worst = f64::INFINITY;
    for seed in 0..50u64 {
        let pair = random_pair(2 + seed as usize % 3, 2, 1000 + seed).unwrap();
        let g = grid(120);
        let alpha = 0.2 + 0.8 * (seed as f64 / 49.0);
        let n = 1 + seed as usize % 3;
        let d = k_alpha_direct(&pair, &g, alpha, n, &exact).unwrap().value;
        let b = k_alpha_sv_bound(&pair, &g, alpha, n, &exact).unwrap().value;
        dom_worst = dom_worst.min(b - d);
    }
    check(
        (k_scalar - 1.0).abs() <= 1e-12 && (k_diag - 4.0).abs() <= 0.05 && sub_worst <= 1.0 + 1e-6 && dom_worst >= -1e-9,
        format!(
            "cI: {k_scalar}; diag(2,1/2): {k_diag:.4}; worst k(a+b)/(k(a)k(b)) = {sub_worst:.6} over {sub_cases} cases; min(bound-direct) = {dom_worst:.2e} over 50 instances"
        ),
    )
}

fn contraction() -> Outcome {
    let pair = hyperbolic_two_symbol().unwrap();
    let params = certify(&pair);
    let report =
        contraction_check(&pair, &grid(180), params.alpha, params.n_star, 100, 31, &PathOptions::default()).unwrap();
    check(
        params.certified && report.passed,
        format!(
            "certified={} alpha*={:.4} n*={} k_alpha={:.4}; max ratio {:.3e}, violations {}/100, grid resolution {:.2e}",
            params.certified, params.alpha, params.n_star, report.k_alpha, report.max_ratio, report.violations, report.resolution
        ),
    )
}

fn mixing() -> Outcome {
    let g = grid(720);
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, pair) in planar_benchmarks().unwrap() {
        let params = certify(&pair);
        let cert = Certificate::KAlpha { alpha: params.alpha, n: params.n_star, k_alpha: params.k_alpha_value };
        let pc = ProjectiveCocycle::new(&pair, &g).unwrap();
        let stat = stationary_measure_q(&pc, 1e-10, cert).unwrap();
        let fam = ObservableFamily::Holder { alpha: 0.5, terms: 3 };
        let a = mixing_rate(&pc, &stat.eta, 8, 101, fam, 200, 1e-10).unwrap();
        let b = mixing_rate(&pc, &stat.eta, 8, derive_seed(101, 1), fam, 200, 1e-10).unwrap();
        let rel = (a.sigma_hat - b.sigma_hat).abs() / a.sigma_hat.max(b.sigma_hat);
        let pass = params.certified && stat.residual <= 1e-10 && rel <= 0.10;
        ok &= pass;
        lines.push(format!("{name}: TV {:.1e}, sigma {:.4}/{:.4} (rel {rel:.1e})", stat.residual, a.sigma_hat, b.sigma_hat));
    }
    // Identity fiber: only the base chain mixes. Circulant kernel with rows
    // (0.5, 0.3, 0.2): eigenvalues 0.5 + 0.3ω + 0.2ω̄, ω = e^{2πi/3}.
    let (re, im) = (0.5 - 0.5 * (0.3 + 0.2), (0.3 - 0.2) * 3f64.sqrt() / 2.0);
    let lambda2 = (re * re + im * im).sqrt();
    let sp = Arc::new(SymbolSpace::discrete(3));
    let rows = (0..3).map(|i| (0..3).map(|j| [0.5, 0.3, 0.2][(j + 3 - i) % 3]).collect()).collect();
    let k = Kernel::new(sp.clone(), rows).unwrap();
    let pair = CocyclePair::new(FiberMap::constant(sp, Mat::identity(2, 2)).unwrap(), k).unwrap();
    let pc = ProjectiveCocycle::new(&pair, &grid(60)).unwrap();
    let stat = stationary_measure_q(&pc, 1e-12, Certificate::Absent).unwrap();
    let r = mixing_rate(&pc, &stat.eta, 8, 5, ObservableFamily::SigmaMarginal, 60, 1e-12).unwrap();
    let rel = (r.sigma_hat - lambda2).abs() / lambda2;
    ok &= rel <= 0.05;
    lines.push(format!("identity fiber: sigma {:.4} vs lambda2 {lambda2:.4} (rel {rel:.1e})", r.sigma_hat));
    check(ok, lines.join("; "))
}

fn holder_continuity() -> Outcome {
    let start = Instant::now();
    let pair = hyperbolic_two_symbol().unwrap();
    let params = certify(&pair);
    let opts = ScanOptions {
        n_probes: 200,
        d_min: 1e-4,
        d_max: 1e-1,
        n: 20_000,
        t: 16,
        seed: 4242,
        alpha: params.alpha,
        certified: params.certified,
    };
    let scan = holder_scan(&pair, &opts).unwrap();
    let kinds = [PerturbationKind::Fiber, PerturbationKind::Kernel, PerturbationKind::Joint];
    let covered = kinds.iter().all(|k| scan.rows.iter().any(|r| r.included_in_fit && r.kind == *k));
    // One constant, fitted on the larger half of the η probes, must cover the smaller half.
    let eta: Vec<(f64, f64)> = scan
        .rows
        .iter()
        .filter(|r| r.eta_included)
        .map(|r| (r.d_total, (r.eta_left - r.eta_right).abs() / r.d_total.powf(params.alpha)))
        .collect();
    let split = opts.d_min * (opts.d_max / opts.d_min).sqrt();
    let c_fit = eta.iter().filter(|p| p.0 >= split).map(|p| p.1).fold(0.0, f64::max);
    let held = eta.iter().filter(|p| p.0 < split).all(|p| p.1 <= c_fit);
    let detail = format!(
        "slope {:.3} from {} probes vs alpha* - 0.1 = {:.3}; all kinds included: {covered}; eta constant {:.3e} on {} probes, holds on small d: {held}",
        scan.slope,
        scan.fit_points,
        params.alpha - 0.1,
        c_fit,
        eta.len()
    );
    if !(params.certified && scan.slope >= params.alpha - 0.1 && covered && held && eta.len() >= 3 && c_fit > 0.0) {
        return Err(detail);
    }
    within_time(start.elapsed(), Duration::from_secs(600), detail)
}

fn uniform_ergodicity() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let n = 2 + seed as usize % 9;
        let k = random_kernel(Arc::new(SymbolSpace::discrete(n)), 500 + seed).unwrap();
        let eig = k.matrix().complex_eigenvalues();
        let mut mods: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
        mods.sort_by(|a, b| b.total_cmp(a));
        let lambda2 = mods[1];
        let r = ergodicity_report(&k, 2000).unwrap();
        worst = worst.max((r.sigma_hat - lambda2).abs() / lambda2);
    }
    check(worst <= 0.05, format!("worst relative error of sigma_hat vs lambda2 over 20 kernels: {worst:.2e}"))
}

fn reproducibility() -> Outcome {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-repro");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/hyperbolic_two_symbol.toml");
    let commands = ["estimate-le", "mixing", "holder", "check-irreducibility"];
    for threads in [1, 4, 8] {
        for cmd in commands {
            let out = root.join(format!("t{threads}")).join(cmd);
            let _ = std::fs::remove_dir_all(&out);
            let args = [
                "lyap".to_string(),
                cmd.into(),
                "--config".into(),
                config.display().to_string(),
                "--out".into(),
                out.display().to_string(),
                "--threads".into(),
                threads.to_string(),
                "--quiet".into(),
            ];
            if lyap_cli::run(args) == 1 {
                return Err(format!("{cmd} failed with {threads} threads"));
            }
        }
    }
    let mut compared = 0;
    for cmd in commands {
        let base = root.join("t1").join(cmd);
        for entry in std::fs::read_dir(&base).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            let reference = std::fs::read(&path).unwrap();
            for threads in [4, 8] {
                let other = root.join(format!("t{threads}")).join(cmd).join(path.file_name().unwrap());
                if std::fs::read(&other).unwrap() != reference {
                    return Err(format!("{} differs at {threads} threads", other.display()));
                }
            }
            compared += 1;
        }
    }
    check(compared >= 9, format!("{compared} CSV files byte-identical across 1, 4 and 8 threads"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("commutation", commutation),
        ("furstenberg consistency", furstenberg),
        ("closed-form exponents", closed_forms),
        ("spectrum identities", spectrum_identities),
        ("k_alpha", k_alpha_checks),
        ("contraction", contraction),
        ("strong mixing", mixing),
        ("hoelder continuity", holder_continuity),
        ("uniform ergodicity", uniform_ergodicity),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {name} [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
