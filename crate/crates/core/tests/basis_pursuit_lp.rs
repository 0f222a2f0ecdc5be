use gridsleuth_core::numerics::{
    basis_pursuit_with, norm1, AdmmSettings, BasisPursuitProblem, ComplexMatrix, C64,
};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ℓ1 minimum of a real system via the split `x = p − q`, `p, q ≥ 0`.
fn lp_l1(a: &[Vec<f64>], b: &[f64]) -> f64 {
    let n = a[0].len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let p: Vec<_> = (0..n).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let q: Vec<_> = (0..n).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for (row, &bi) in a.iter().zip(b) {
        let mut terms = Vec::with_capacity(2 * n);
        for j in 0..n {
            terms.push((p[j], row[j]));
            terms.push((q[j], -row[j]));
        }
        lp.add_constraint(&terms, ComparisonOp::Eq, bi);
    }
    lp.solve().expect("LP oracle failed").objective()
}

#[test]
fn real_instances_match_lp_objective() {
    for seed in 0..20u64 {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let m = g.random_range(4..=12);
        let n = g.random_range(m + 1..=40);
        let a: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| g.random_range(-1.0..1.0)).collect())
            .collect();
        let k = g.random_range(1..=4.min(m));
        let mut x0 = vec![0.0; n];
        for _ in 0..k {
            x0[g.random_range(0..n)] = g.random_range(-3.0..3.0);
        }
        let b: Vec<f64> = a
            .iter()
            .map(|r| r.iter().zip(&x0).map(|(p, q)| p * q).sum())
            .collect();
        let oracle = lp_l1(&a, &b);
        let am = ComplexMatrix::from_fn(m, n, |i, j| C64::new(a[i][j], 0.0));
        let bm: Vec<C64> = b.iter().map(|&v| C64::new(v, 0.0)).collect();
        let rep = basis_pursuit_with(&BasisPursuitProblem::new(am, bm), &AdmmSettings::default())
            .unwrap();
        assert!(
            (rep.l1_norm - oracle).abs() <= 1e-6 * oracle.max(1.0),
            "seed {seed}: admm {} lp {}",
            rep.l1_norm,
            oracle
        );
    }
}

#[test]
fn solution_is_a_fixed_point() {
    let mut g = ChaCha8Rng::seed_from_u64(99);
    let a = ComplexMatrix::from_fn(8, 24, |_, _| {
        C64::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0))
    });
    let mut x0 = vec![C64::new(0.0, 0.0); 24];
    x0[2] = C64::new(1.0, 2.0);
    x0[11] = C64::new(-0.5, 0.1);
    let b = a.mul_vec(&x0).unwrap();
    let first = basis_pursuit_with(&BasisPursuitProblem::new(a.clone(), b), &AdmmSettings::default())
        .unwrap();
    let b2 = a.mul_vec(&first.x).unwrap();
    let second = basis_pursuit_with(&BasisPursuitProblem::new(a, b2), &AdmmSettings::default())
        .unwrap();
    assert!(norm1(&second.x) <= norm1(&first.x) * (1.0 + 1e-9));
}
