//! Property-based invariants for the matrix-calculus helpers, the Riccati
//! solvers, and the simulation harness.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lqg_hardness::matcalc::{
    default_kernel_tol, gaussian_fisher, kernel_basis, kron, orth_projector,
    subspace_sin_distance, vec, vec_inv,
};
use lqg_hardness::model::{e1_instance, rollout_seed, simulate, PolicySpec};
use lqg_hardness::regret::bellman_gap;
use lqg_hardness::riccati::{scalar, solve_control_dare, spectral_radius};

fn dmatrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-3.0..3.0f64, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    dmatrix(n, n).prop_map(move |m| &m * m.transpose() + DMatrix::identity(n, n) * 0.5)
}

proptest! {
    #[test]
    fn vec_round_trips(rows in 1..8usize, cols in 1..8usize, seed in 0..1000u64) {
        let m = DMatrix::from_fn(rows, cols, |r, c| ((seed as usize + 3 * r + 7 * c) % 13) as f64);
        let back = vec_inv(&vec(&m), rows, cols);
        prop_assert_eq!(m, back);
    }

    #[test]
    fn kron_vec_identity(m in dmatrix(3, 3), n in dmatrix(3, 2), p in dmatrix(2, 4)) {
        // vec(M N P) = (P' (x) M) vec(N)
        let lhs = vec(&(&m * &n * &p));
        let rhs = kron(&p.transpose(), &m) * vec(&n);
        prop_assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn kernel_basis_annihilates(m in dmatrix(4, 4)) {
        let sym = &m * m.transpose();
        let tol = default_kernel_tol(4);
        let basis = kernel_basis(&sym, tol).unwrap();
        if basis.dim() > 0 {
            let scale = sym.norm().max(1.0);
            prop_assert!((&sym * basis.columns()).norm() <= 1e-6 * scale);
        }
    }

    #[test]
    fn sin_distance_symmetric_and_bounded(m in dmatrix(4, 2), n in dmatrix(4, 2)) {
        let qa = m.qr().q();
        let qb = n.qr().q();
        let a = lqg_hardness::matcalc::SubspaceBasis::new(qa).unwrap();
        let b = lqg_hardness::matcalc::SubspaceBasis::new(qb).unwrap();
        let dab = subspace_sin_distance(&a, &b).unwrap();
        let dba = subspace_sin_distance(&b, &a).unwrap();
        prop_assert!((dab - dba).abs() < 1e-9);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&dab));
        prop_assert!(subspace_sin_distance(&a, &a).unwrap() < 1e-9);
    }

    #[test]
    fn projector_is_idempotent(m in dmatrix(5, 2)) {
        let q = m.qr().q();
        let basis = lqg_hardness::matcalc::SubspaceBasis::new(q).unwrap();
        let p = orth_projector(&basis);
        prop_assert!((&p * &p - &p).norm() < 1e-9);
        prop_assert!((&p - p.transpose()).norm() < 1e-12);
    }

    #[test]
    fn gaussian_fisher_is_psd(mu in dmatrix(3, 2), sig in spd(3)) {
        let mut sigma_jac = DMatrix::zeros(9, 2);
        for i in 0..2 {
            let s = DMatrix::from_fn(3, 3, |r, c| ((i + r + 2 * c) as f64).cos());
            sigma_jac.set_column(i, &vec(&(&s + s.transpose())));
        }
        let info = gaussian_fisher(&mu, &sig, &sigma_jac).unwrap();
        let eigs = info.symmetric_eigen().eigenvalues;
        prop_assert!(eigs.min() > -1e-9);
    }

    #[test]
    fn scalar_dare_is_stabilizing(a in 0.1..4.0f64, b in 0.05..3.0f64) {
        let sol = solve_control_dare(&scalar(a), &scalar(b), &scalar(1.0), &scalar(1.0)).unwrap();
        prop_assert!(spectral_radius(&sol.closed_loop) < 1.0);
        prop_assert!(sol.p[(0, 0)] >= 1.0 - 1e-12); // P >= Q
    }

    #[test]
    fn bellman_gap_nonnegative(x in -5.0..5.0f64, u in -5.0..5.0f64) {
        let e1 = e1_instance();
        let gap = bellman_gap(
            &DVector::from_element(1, x),
            &DVector::from_element(1, u),
            &e1,
        );
        prop_assert!(gap >= -1e-12);
    }

    #[test]
    fn rollout_seeds_decorrelate(master in 0..u64::MAX / 2, i in 0..1000u64, j in 0..1000u64) {
        if i != j {
            prop_assert_ne!(rollout_seed(master, i), rollout_seed(master, j));
        }
        prop_assert_eq!(rollout_seed(master, i), rollout_seed(master, i));
    }

    #[test]
    fn simulation_is_seed_deterministic(seed in 0..10_000u64) {
        let e1 = e1_instance();
        let a = simulate(&e1, &PolicySpec::Optimal, 10, seed);
        let b = simulate(&e1, &PolicySpec::Optimal, 10, seed);
        prop_assert_eq!(&a.x, &b.x);
        prop_assert_eq!(&a.u, &b.u);
    }
}
