use coopsgd::bounds::{epsilon_iid, epsilon_niid, p_value, BoundInputs};
use coopsgd::matrix::{frobenius_norm, operator_norm, phi_product, DenseMatrix, DEFAULT_NORM_TOL};
use coopsgd::mixing::{delta_of, random_column_stochastic, MixingMatrix};
use coopsgd::objectives::make_quadratic;
use coopsgd::selection::select;
use coopsgd::{run, Algorithm, Init, Objective, RunConfig, ScheduleKind, SelectionPolicy};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-5.0..5.0f64, rows * cols).prop_map(move |e| DenseMatrix::new(rows, cols, e).unwrap())
}

fn square() -> impl Strategy<Value = DenseMatrix> {
    (1usize..7).prop_flat_map(|n| matrix(n, n))
}

fn pair() -> impl Strategy<Value = (DenseMatrix, DenseMatrix)> {
    (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(a, b, c)| (matrix(a, b), matrix(b, c)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn product_of_column_stochastic_is_column_stochastic(n in 2usize..8, count in 1usize..6, seed in any::<u64>()) {
        let all: Vec<usize> = (0..n).collect();
        let list: Vec<DenseMatrix> = (0..count)
            .map(|r| random_column_stochastic(n, &all, seed, r as u64, 1.0).unwrap().dense().clone())
            .collect();
        // phi_product returns Φᵀ, so Φ itself is the column-stochastic one.
        let phi = phi_product(n, &list).unwrap().transpose();
        for s in phi.column_sums() {
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
        let direct = list.iter().skip(1).fold(list[0].clone(), |acc, w| w.matmul(&acc).unwrap());
        for s in direct.column_sums() {
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn operator_norm_at_most_frobenius(a in square()) {
        let op = operator_norm(&a, DEFAULT_NORM_TOL).unwrap();
        prop_assert!(op <= frobenius_norm(&a) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn trace_bounded_by_frobenius_norms((a, b) in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| (matrix(r, c), matrix(c, r)))) {
        let t = a.matmul(&b).unwrap().trace();
        prop_assert!(t.abs() <= frobenius_norm(&a) * frobenius_norm(&b) + 1e-9);
    }

    #[test]
    fn product_frobenius_bounded_by_operator_norm((a, b) in pair()) {
        let lhs = frobenius_norm(&a.matmul(&b).unwrap());
        let rhs = operator_norm(&a, DEFAULT_NORM_TOL).unwrap() * frobenius_norm(&b);
        prop_assert!(lhs <= rhs * (1.0 + 1e-6) + 1e-9, "{lhs} > {rhs}");
    }

    #[test]
    fn delta_invariant_under_row_permutation(n in 2usize..8, seed in any::<u64>(), shift in 1usize..7, c in 0.1..=1.0f64) {
        let all: Vec<usize> = (0..n).collect();
        let w = random_column_stochastic(n, &all, seed, 0, 1.0).unwrap();
        let mut p = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                p.set((i + shift) % n, j, w.dense().get(i, j));
            }
        }
        let permuted = MixingMatrix::from_dense(p).unwrap();
        prop_assert_eq!(delta_of(&w, c).unwrap(), delta_of(&permuted, c).unwrap());
    }

    #[test]
    fn selection_is_deterministic_with_constant_size(m in 1usize..40, frac in 0.05..=1.0f64, seed in any::<u64>(), round in 0usize..1000) {
        let policy = SelectionPolicy::per_round_random(frac, seed);
        if let Ok(expected) = policy.count(m) {
            let a = select(&policy, round, m).unwrap();
            let b = select(&policy, round, m).unwrap();
            prop_assert_eq!(a.len(), expected);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn niid_excess_is_exact(delta in 0.0..3.0f64, kappa in 0.0..2.0f64, eta in 0.001..0.1f64) {
        let inputs = BoundInputs {
            l: 1.5, sigma: 0.2, kappa, f_u1: 3.0, f_inf: 0.0, eta, k: 200, tau: 4,
            c: 0.5, m: 10, v: 1, delta, x1_frob_sq: 2.0,
        };
        let p = p_value(eta, delta, 4, 200).unwrap();
        let gap = epsilon_niid(&inputs).unwrap() - epsilon_iid(&inputs).unwrap();
        prop_assert!((gap - 12.0 * p * 1.5 * 1.5 * kappa * kappa).abs() <= 1e-9 * gap.abs().max(1.0));
    }
}

#[test]
fn epsilon_increases_with_delta() {
    let mut inputs = BoundInputs {
        l: 1.0,
        sigma: 0.1,
        kappa: 0.0,
        f_u1: 1.0,
        f_inf: 0.0,
        eta: 0.05,
        k: 500,
        tau: 5,
        c: 0.5,
        m: 8,
        v: 0,
        delta: 0.0,
        x1_frob_sq: 1.0,
    };
    let mut last = epsilon_iid(&inputs).unwrap();
    for d in [0.1, 0.5, 1.0, 2.0, 3.5] {
        inputs.delta = d;
        let e = epsilon_iid(&inputs).unwrap();
        assert!(e > last);
        last = e;
    }
}

#[test]
fn epsilon_non_increasing_in_fraction_at_fixed_effective_rate() {
    let ee = 0.05;
    let m = 10;
    let mut last = f64::INFINITY;
    for c in [0.1, 0.2, 0.5, 0.8, 1.0] {
        let inputs = BoundInputs {
            l: 1.0,
            sigma: 0.3,
            kappa: 0.0,
            f_u1: 1.0,
            f_inf: 0.0,
            eta: ee / c,
            k: 400,
            tau: 4,
            c,
            m,
            v: 0,
            delta: 0.5,
            x1_frob_sq: 1.0,
        };
        let e = epsilon_iid(&inputs).unwrap();
        assert!(e <= last, "c={c}: {e} > {last}");
        last = e;
    }
}

#[test]
fn traces_are_identical_across_thread_counts() {
    let q = make_quadratic(5, 6, &[0.2, 0.4, 0.6, 0.8, 1.0], 0.3, 2).unwrap().with_sigma(0.2);
    let mut cfg = RunConfig::new(Algorithm::Unified, 0.1, 3, 60);
    cfg.selection = SelectionPolicy::per_round_random(0.5, 4);
    cfg.mixing = ScheduleKind::SeededRandom { seed: 3, blend: 0.5 };
    cfg.init = Init::Scaled(1.0);
    let reference = run(&cfg, &q).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let parallel: Vec<_> = pool.install(|| {
        use rayon::prelude::*;
        (0..8).into_par_iter().map(|_| run(&cfg, &q).unwrap()).collect()
    });
    for t in parallel {
        assert_eq!(t, reference);
    }
}

#[test]
fn smoothness_bounds_gradient_differences() {
    let q = make_quadratic(6, 3, &[0.1, 0.3, 0.5, 0.7, 0.9, 1.3], 0.5, 9).unwrap();
    let l = q.smoothness();
    let mut s = 1.0f64;
    for _ in 0..10_000 {
        s = (s * 12.9898).sin() * 43.5453;
        let x: Vec<f64> = (0..6).map(|i| (s + i as f64).sin()).collect();
        let y: Vec<f64> = (0..6).map(|i| (s * 1.7 + i as f64).cos()).collect();
        let gx = q.client_grad(1, &x);
        let gy = q.client_grad(1, &y);
        let dg: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dx: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(dg <= l * dx * (1.0 + 1e-12) + 1e-14);
    }
}
