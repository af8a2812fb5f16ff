//! Structural invariants checked over seeded random instances.

use std::sync::Arc;

use lyap_core::benchmarks::{random_fiber, random_kernel, random_pair};
use lyap_core::cocycle::{cocycle_distance, cocycle_product, CocyclePair};
use lyap_core::holder::{
    iteration_lipschitz, k_alpha_direct, k_alpha_sv_bound, perturb_fiber, perturb_kernel, PathOptions,
};
use lyap_core::linalg::{exterior_power_matrix, op_norm, singular_values, wedge_norm, Mat};
use lyap_core::lyapunov::{directional_profile, le_spectrum, le_trajectory};
use lyap_core::markov_operator::{Observable, ProjectiveCocycle};
use lyap_core::projective::{delta, make_grid, nearest_grid, proj_act, proj_delta, GridScheme, ProjPoint};
use lyap_core::rng::stream_rng;
use lyap_core::symbol_space::{
    kernel_distance, kernel_iterate, stationary_distribution, tv_distance, wasserstein1_solution, Carrier, Kernel,
    Measure, SymbolSpace,
};
use proptest::prelude::*;
use rand::Rng;

fn gaussian_matrix(m: usize, seed: u64, stream: u64) -> Mat {
    let mut rng = stream_rng(seed, stream);
    Mat::from_fn(m, m, |_, _| rng.sample(rand_distr::StandardNormal))
}

fn unit_vector(m: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    let v: Vec<f64> = (0..m).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn planar_space(n: usize, seed: u64) -> Arc<SymbolSpace> {
    let mut rng = stream_rng(seed, 99);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let dist = pts
        .iter()
        .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
        .collect();
    Arc::new(SymbolSpace::new((0..n).map(|i| format!("s{i}")).collect(), dist).unwrap())
}

fn random_measure(n: usize, seed: u64, stream: u64) -> Measure {
    let mut rng = stream_rng(seed, stream);
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(2)).collect();
    let s: f64 = w.iter().sum();
    Measure::new(Carrier::Sigma { symbols: n }, w.into_iter().map(|x| x / s).collect()).unwrap()
}

fn max_entry_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn kernel_powers_stay_stochastic(n in 2usize..8, seed in any::<u64>(), steps in 1usize..40) {
        let k = random_kernel(Arc::new(SymbolSpace::discrete(n)), seed).unwrap();
        let p = kernel_iterate(&k, steps).unwrap();
        for row in p.rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn chapman_kolmogorov(n in 2usize..8, seed in any::<u64>(), a in 1usize..12, b in 1usize..12) {
        let k = random_kernel(Arc::new(SymbolSpace::discrete(n)), seed).unwrap();
        let lhs = kernel_iterate(&k, a + b).unwrap().matrix();
        let rhs = kernel_iterate(&k, a).unwrap().compose(&kernel_iterate(&k, b).unwrap()).unwrap().matrix();
        prop_assert!(max_entry_diff(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn w1_primal_equals_dual(n in 2usize..=20, seed in any::<u64>()) {
        let space = planar_space(n, seed);
        let p = random_measure(n, seed, 1);
        let q = random_measure(n, seed, 2);
        let sol = wasserstein1_solution(&p, &q, &space).unwrap();
        prop_assert!((sol.value - sol.dual_value).abs() <= 1e-9);
        // Primal certificate: marginals and cost of the returned coupling.
        let cost: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| sol.coupling[i][j] * space.dist(i, j)).sum();
        prop_assert!((cost - sol.value).abs() <= 1e-9);
        for i in 0..n {
            prop_assert!((sol.coupling[i].iter().sum::<f64>() - p.weights()[i]).abs() <= 1e-9);
            prop_assert!(((0..n).map(|r| sol.coupling[r][i]).sum::<f64>() - q.weights()[i]).abs() <= 1e-9);
        }
        // Dual certificate: the potential is 1-Lipschitz.
        for i in 0..n {
            for j in 0..n {
                prop_assert!(sol.potential[i] - sol.potential[j] <= space.dist(i, j) + 1e-9);
            }
        }
    }

    #[test]
    fn stationary_is_fixed_point(n in 2usize..10, seed in any::<u64>()) {
        let k = random_kernel(Arc::new(SymbolSpace::discrete(n)), seed).unwrap();
        let mu = stationary_distribution(&k, 1e-12).unwrap();
        let w = mu.weights();
        let pushed: Vec<f64> = (0..n).map(|y| (0..n).map(|x| w[x] * k.prob(x, y)).sum()).collect();
        let pushed = Measure::new(mu.carrier(), pushed).unwrap();
        prop_assert!(tv_distance(&pushed, &mu).unwrap() <= 1e-12);
    }

    #[test]
    fn cocycle_property(seed in any::<u64>(), len in 2usize..30, cut in 0usize..30) {
        let space = Arc::new(SymbolSpace::discrete(3));
        let fiber = random_fiber(space, 2, seed).unwrap();
        let mut rng = stream_rng(seed, 7);
        let path: Vec<usize> = (0..=len).map(|_| rng.random_range(0..3)).collect();
        let cut = 1 + cut % (len - 1);
        let full = cocycle_product(&fiber, &path).unwrap();
        let first = cocycle_product(&fiber, &path[..=cut]).unwrap();
        let second = cocycle_product(&fiber, &path[cut..]).unwrap();
        let split = second * first;
        prop_assert!(op_norm(&(&full - &split)) <= 1e-12 * op_norm(&full).max(1.0));
    }

    #[test]
    fn exterior_power_is_homomorphism(m in 2usize..5, seed in any::<u64>(), k_raw in 1usize..5) {
        let k = 1 + (k_raw - 1) % m;
        let a = gaussian_matrix(m, seed, 0);
        let b = gaussian_matrix(m, seed, 1);
        let lhs = exterior_power_matrix(&(&a * &b), k);
        let rhs = exterior_power_matrix(&a, k) * exterior_power_matrix(&b, k);
        prop_assert!(max_entry_diff(&lhs, &rhs) <= 1e-9 * lhs.norm().max(1.0));
    }

    #[test]
    fn second_exterior_norm_is_top_two_singular_values(m in 2usize..6, seed in any::<u64>()) {
        let a = gaussian_matrix(m, seed, 0);
        let s = singular_values(&a);
        let w = op_norm(&exterior_power_matrix(&a, 2));
        prop_assert!((w - s[0] * s[1]).abs() <= 1e-9 * w);
    }

    #[test]
    fn cocycle_distance_is_metric(seed in any::<u64>()) {
        let x = random_pair(3, 2, seed).unwrap();
        let y = random_pair(3, 2, seed.wrapping_add(1)).unwrap();
        let z = random_pair(3, 2, seed.wrapping_add(2)).unwrap();
        let dxy = cocycle_distance(&x, &y).unwrap();
        prop_assert_eq!(dxy, cocycle_distance(&y, &x).unwrap());
        prop_assert_eq!(cocycle_distance(&x, &x).unwrap(), 0.0);
        let dxz = cocycle_distance(&x, &z).unwrap();
        let dyz = cocycle_distance(&y, &z).unwrap();
        prop_assert!(dxz <= dxy + dyz + 1e-12);
    }

    #[test]
    fn delta_scale_and_sign_invariant(m in 2usize..5, seed in any::<u64>(), c in 1e-3f64..1e3, d in -1e3f64..-1e-3) {
        let p = unit_vector(m, seed, 0);
        let q = unit_vector(m, seed, 1);
        let base = delta(&p, &q);
        let ps: Vec<f64> = p.iter().map(|x| x * c).collect();
        let qs: Vec<f64> = q.iter().map(|x| x * d).collect();
        let neg: Vec<f64> = p.iter().map(|x| -x).collect();
        prop_assert!((delta(&ps, &qs) - base).abs() <= 1e-15);
        prop_assert_eq!(delta(&neg, &q), base);
        let pp = ProjPoint::new(p.clone()).unwrap();
        let pn = ProjPoint::new(neg).unwrap();
        prop_assert_eq!(proj_delta(&pp, &pn), 0.0);
    }

    #[test]
    fn svd_identity_planar(seed in any::<u64>()) {
        let a = gaussian_matrix(2, seed, 0);
        let p = unit_vector(2, seed, 1);
        let q = unit_vector(2, seed, 2);
        let ap: Vec<f64> = (0..2).map(|i| a[(i, 0)] * p[0] + a[(i, 1)] * p[1]).collect();
        let aq: Vec<f64> = (0..2).map(|i| a[(i, 0)] * q[0] + a[(i, 1)] * q[1]).collect();
        let s = singular_values(&a);
        let nap = ap.iter().map(|x| x * x).sum::<f64>().sqrt();
        let naq = aq.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lhs = delta(&ap, &aq) * nap * naq;
        let rhs = s[0] * s[1] * delta(&p, &q);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
    }

    #[test]
    fn wedge_bound_higher_dimensions(m in 3usize..6, seed in any::<u64>()) {
        let a = gaussian_matrix(m, seed, 0);
        let p = unit_vector(m, seed, 1);
        let q = unit_vector(m, seed, 2);
        let apply = |v: &[f64]| -> Vec<f64> { (0..m).map(|i| (0..m).map(|j| a[(i, j)] * v[j]).sum()).collect() };
        let s = singular_values(&a);
        prop_assert!(wedge_norm(&apply(&p), &apply(&q)) <= s[0] * s[1] * wedge_norm(&p, &q) * (1.0 + 1e-10) + 1e-10);
    }

    #[test]
    fn proj_act_is_group_action(m in 2usize..5, seed in any::<u64>()) {
        let a = gaussian_matrix(m, seed, 0);
        let b = gaussian_matrix(m, seed, 1);
        let p = ProjPoint::new(unit_vector(m, seed, 2)).unwrap();
        let lhs = proj_act(&(&a * &b), &p).unwrap();
        let rhs = proj_act(&a, &proj_act(&b, &p).unwrap()).unwrap();
        prop_assert!(proj_delta(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn nearest_matches_exhaustive_scan(n in 8usize..400, seed in any::<u64>()) {
        let grid = make_grid(2, n, GridScheme::UniformAngle).unwrap();
        for s in 0..20u64 {
            let p = ProjPoint::new(unit_vector(2, seed, s)).unwrap();
            let got = nearest_grid(&grid, &p);
            let best = (0..grid.len()).map(|g| delta(grid.point(g), p.rep())).fold(f64::INFINITY, f64::min);
            prop_assert!(delta(grid.point(got), p.rep()) <= best + 1e-12);
        }
    }

    #[test]
    fn perturbations_hit_their_targets(seed in any::<u64>(), target in 1e-4f64..1e-1) {
        let pair = random_pair(4, 2, seed).unwrap();
        let mut rng = stream_rng(seed, 5);
        let fiber = perturb_fiber(&pair, target, &mut rng).unwrap();
        let fp = pair.with_fiber(fiber).unwrap();
        prop_assert!((cocycle_distance(&pair, &fp).unwrap() - target).abs() <= 1e-12 * target.max(1.0) + 1e-15);
        let kernel = perturb_kernel(&pair, target, &mut rng).unwrap();
        let d = kernel_distance(pair.kernel(), &kernel).unwrap();
        prop_assert!(d <= target * pair.space().diameter() + 1e-12);
        prop_assert!((d - target).abs() <= 1e-9 || d < target);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn q_commutes_and_is_markov(seed in any::<u64>(), n in 2usize..5) {
        let pair = random_pair(n, 2, seed).unwrap();
        let grid = make_grid(2, 60, GridScheme::UniformAngle).unwrap();
        let pc = ProjectiveCocycle::new(&pair, &grid).unwrap();
        let mut rng = stream_rng(seed, 3);
        let cc = pc.sigma_sigma_p();
        let psi = Observable::new(cc, (0..cc.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let lhs = pc.project_pi(&pc.apply_qbar(&psi).unwrap()).unwrap();
        let rhs = pc.apply_q(&pc.project_pi(&psi).unwrap()).unwrap();
        let gap = lhs.values().iter().zip(rhs.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(gap <= 1e-12);

        let c = pc.sigma_p();
        let one = Observable::new(c, vec![1.0; c.len()]).unwrap();
        prop_assert!(pc.apply_q(&one).unwrap().values().iter().all(|v| (v - 1.0).abs() <= 1e-15));
        let one_bar = Observable::new(cc, vec![1.0; cc.len()]).unwrap();
        prop_assert!(pc.apply_qbar(&one_bar).unwrap().values().iter().all(|v| (v - 1.0).abs() <= 1e-15));
        let phi = Observable::new(c, (0..c.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        prop_assert!(pc.apply_q(&phi).unwrap().sup_norm() <= phi.sup_norm());
        let pos = Observable::new(c, (0..c.len()).map(|_| rng.random::<f64>()).collect()).unwrap();
        prop_assert!(pc.apply_q(&pos).unwrap().values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn spectrum_is_ordered(seed in any::<u64>(), m in 2usize..4) {
        let pair = random_pair(3, m, seed).unwrap();
        let spectrum = le_spectrum(&pair, 2000, 4, seed).unwrap();
        for w in spectrum.values.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        let (sum, se) = spectrum.sum();
        prop_assert!((sum - pair.mean_log_det()).abs() <= 1e-8 + 3.0 * se + 5e-3);
    }

    #[test]
    fn profile_below_top_exponent(seed in any::<u64>()) {
        let pair = random_pair(3, 2, seed).unwrap();
        let grid = make_grid(2, 12, GridScheme::UniformAngle).unwrap();
        let l1 = le_trajectory(&pair, 4000, 16, seed).unwrap();
        let prof = directional_profile(&pair, &grid, 4000, 16, seed).unwrap();
        for e in &prof.entries {
            prop_assert!(e.value <= l1.value + 3.0 * (l1.std_err + e.std_err), "{} vs {}", e.value, l1.value);
        }
    }

    #[test]
    fn k_alpha_submultiplicative_and_dominated(seed in any::<u64>(), alpha in 0.1f64..1.0) {
        let pair = random_pair(2, 2, seed).unwrap();
        let grid = make_grid(2, 120, GridScheme::UniformAngle).unwrap();
        let opts = PathOptions { monte_carlo: false, ..PathOptions::default() };
        let k1 = k_alpha_direct(&pair, &grid, alpha, 1, &opts).unwrap();
        let k2 = k_alpha_direct(&pair, &grid, alpha, 2, &opts).unwrap();
        let k3 = k_alpha_direct(&pair, &grid, alpha, 3, &opts).unwrap();
        prop_assert!(k1.exact && k2.exact && k3.exact);
        prop_assert!(k2.value <= k1.value * k1.value * (1.0 + 1e-6));
        prop_assert!(k3.value <= k1.value * k2.value * (1.0 + 1e-6));
        for (n, k) in [(1, k1), (2, k2), (3, k3)] {
            let b = k_alpha_sv_bound(&pair, &grid, alpha, n, &opts).unwrap();
            prop_assert!(b.value >= k.value - 1e-9);
        }
    }

    #[test]
    fn iteration_map_is_lipschitz(seed in any::<u64>(), eps in 1e-4f64..1e-2) {
        let x = random_pair(3, 2, seed).unwrap();
        let mut rng = stream_rng(seed, 11);
        let fiber = perturb_fiber(&x, eps, &mut rng).unwrap();
        let kernel = perturb_kernel(&x, eps, &mut rng).unwrap();
        let y = CocyclePair::new(fiber, kernel).unwrap();
        for n in 1..=4 {
            let r = iteration_lipschitz(&x, &y, n).unwrap();
            prop_assert!(r.dn <= r.bound * r.d1 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn chain_transitions_follow_kernel(seed in any::<u64>()) {
        use lyap_core::symbol_space::sample_chain;
        let k = random_kernel(Arc::new(SymbolSpace::discrete(3)), seed).unwrap();
        let path = sample_chain(&k, 0, 60_000, seed).unwrap();
        let mut counts = [[0usize; 3]; 3];
        for w in path.windows(2) {
            counts[w[0]][w[1]] += 1;
        }
        // Pearson statistic per row, 2 degrees of freedom: P(χ² > 25) ≈ 4e-6.
        for x in 0..3 {
            let total: usize = counts[x].iter().sum();
            if total < 500 {
                continue;
            }
            let chi: f64 = (0..3)
                .map(|y| {
                    let e = total as f64 * k.prob(x, y);
                    let o = counts[x][y] as f64;
                    (o - e).powi(2) / e
                })
                .sum();
            prop_assert!(chi < 25.0, "row {} chi2 {}", x, chi);
        }
    }
}

#[test]
fn kernel_from_rows_rejects_bad_row_with_path() {
    let sp = Arc::new(SymbolSpace::discrete(2));
    let err = Kernel::new(sp, vec![vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap_err();
    assert!(err.to_string().contains("kernel.rows[0]"), "{err}");
}
