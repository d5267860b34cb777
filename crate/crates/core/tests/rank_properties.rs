mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use statlin::field::{PolyMatrixMap, PolyVectorField};
use statlin::lift::StatePoint;
use statlin::poly::Polynomial;
use statlin::rank::{random_point, Verdict};
use statlin::rational::from_i64;
use statlin::{
    check_condition_1, check_condition_2, check_hormander_lifted, check_rank_at_state, BracketMode,
    CheckOptions, ControlAffineSystem,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn quadratic_1d() -> ControlAffineSystem {
    let x = Polynomial::var(1, 0);
    ControlAffineSystem::new(
        PolyVectorField::new(vec![&x * &x]).unwrap(),
        vec![PolyVectorField::constant(&[from_i64(1)])],
        PolyMatrixMap::zeros(1, 1, 1),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rank_is_monotone_in_depth_cap(seed in any::<u64>(), n in 1usize..=2, m_u in 1usize..=2) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, m_u, 2, None);
        let points: Vec<_> = (0..3).map(|_| random_point(&mut r, n)).collect();
        let mut prev = vec![0usize; points.len()];
        for cap in 1..=5 {
            let opts = CheckOptions { depth_cap: Some(cap), seed, ..CheckOptions::default() };
            let rep = check_condition_1(&sys, &points, &opts).unwrap();
            for (p, q) in rep.points.iter().zip(prev.iter_mut()) {
                prop_assert!(p.rank >= *q);
                *q = p.rank;
            }
        }
    }

    #[test]
    fn subset_law(seed in any::<u64>(), n in 1usize..=2, m_u in 1usize..=2) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, m_u, 2, None);
        let points: Vec<_> = (0..2).map(|_| random_point(&mut r, n)).collect();
        let opts = CheckOptions { seed, ..CheckOptions::default() };
        let c1 = check_condition_1(&sys, &points, &opts).unwrap();
        let c2 = check_condition_2(&sys, &points, &opts).unwrap();
        let h = check_hormander_lifted(&sys, &points, &opts).unwrap();
        for k in 0..points.len() {
            if c2.points[k].verdict == Verdict::Pass {
                prop_assert_eq!(c1.points[k].verdict, Verdict::Pass);
            }
            if h.points[k].verdict == Verdict::Pass {
                prop_assert_eq!(c2.points[k].verdict, Verdict::Pass);
            }
        }
    }

    #[test]
    fn exact_and_svd_ranks_agree(seed in any::<u64>(), n in 1usize..=2, tol_exp in 6i32..=10) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 1, 2, None);
        let points: Vec<_> = (0..3).map(|_| random_point(&mut r, n)).collect();
        let opts = CheckOptions { tol: 10f64.powi(-tol_exp), seed, ..CheckOptions::default() };
        let rep = check_condition_1(&sys, &points, &opts).unwrap();
        for p in &rep.points {
            prop_assert_eq!(p.rank, p.svd_rank);
        }
    }

    #[test]
    fn biaffine_ceiling(seed in any::<u64>(), n in 1usize..=3, m_u in 1usize..=2) {
        let mut r = rng(seed);
        let sys = random_biaffine(&mut r, n, m_u, n).to_system();
        let big_n = n + n * (n + 1) / 2;
        let mut points: Vec<_> = (0..3).map(|_| random_nonzero_point(&mut r, n)).collect();
        points.push(vec![from_i64(0); n]);
        let rep = check_condition_1(&sys, &points, &CheckOptions { seed, ..CheckOptions::default() }).unwrap();
        for p in &rep.points[..3] {
            prop_assert!(p.rank < big_n);
        }
        prop_assert!(rep.points[3].rank <= n * (n + 1) / 2);
        prop_assert_eq!(rep.verdict, Verdict::Fail);
    }

    #[test]
    fn noiseless_rank_does_not_depend_on_covariance(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 1, 2, None);
        let m = random_point(&mut r, n);
        let p = statlin::rank::random_pd(&mut r, n);
        prop_assume!(p.to_f64().symmetric_eigen().eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b))
            <= 1e3 * p.to_f64().symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b)));
        let opts = CheckOptions { seed, ..CheckOptions::default() };
        let a = check_rank_at_state(&sys, &[StatePoint::at_identity(m.clone())], &opts, BracketMode::FullLie).unwrap();
        let b = check_rank_at_state(&sys, &[StatePoint::new(m, p).unwrap()], &opts, BracketMode::FullLie).unwrap();
        prop_assert_eq!(a.points[0].rank, b.points[0].rank);
        prop_assert_eq!(a.points[0].verdict, b.points[0].verdict);
    }
}

#[test]
fn depth_cap_yields_inconclusive_not_fail() {
    let sys = quadratic_1d();
    let zero = vec![vec![from_i64(0)]];
    let shallow = CheckOptions {
        depth_cap: Some(1),
        ..CheckOptions::default()
    };
    let r = check_condition_1(&sys, &zero, &shallow).unwrap();
    assert_eq!(r.points[0].rank, 1);
    assert_eq!(r.verdict, Verdict::InconclusiveAtCap);
    let r = check_condition_1(&sys, &zero, &CheckOptions::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert!(r.basis.contains(&"[f1,f0]".to_string()));
}

#[test]
fn zero_system_closes_and_fails() {
    let sys = ControlAffineSystem::new(PolyVectorField::zero(2), vec![PolyVectorField::zero(2)], PolyMatrixMap::zeros(2, 1, 2))
        .unwrap();
    let r = check_condition_1(&sys, &[vec![from_i64(1), from_i64(2)]], &CheckOptions::default()).unwrap();
    assert!(r.closed);
    assert_eq!(r.points[0].rank, 0);
    assert_eq!(r.verdict, Verdict::Fail);
}

#[test]
fn generic_point_is_reported_separately() {
    let opts = CheckOptions {
        generic: true,
        ..CheckOptions::default()
    };
    let r = check_condition_1(&quadratic_1d(), &[vec![from_i64(1)]], &opts).unwrap();
    assert_eq!(r.points.len(), 1);
    let g = r.generic.unwrap();
    assert_eq!(g.label, "generic");
    assert_eq!(g.verdict, Verdict::Pass);
}

#[test]
fn rank_at_state_requires_positive_definite_covariance() {
    let p = statlin::QMatrix::zeros(1, 1);
    let x = StatePoint::new(vec![from_i64(0)], p).unwrap();
    assert!(check_rank_at_state(&quadratic_1d(), &[x], &CheckOptions::default(), BracketMode::FullLie).is_err());
}
