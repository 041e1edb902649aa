mod common;

use common::*;
use llens_core::factor::svd;
use llens_core::subspace::{bases, decompose, project_on_weight};
use llens_core::tensor::Vector;
use proptest::prelude::*;
use rand::Rng;

fn random_vector(g: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vector {
    Vector::new((0..n).map(|_| g.random_range(-1.0..1.0)).collect())
}

#[test]
fn bases_are_orthonormal_and_complementary() {
    let mut g = rng(21);
    for _ in 0..20 {
        let (m, n) = random_shape(&mut g, 15);
        let r = g.random_range(1..=m.min(n));
        let w = random_low_rank(&mut g, m, n, r);
        let b = bases(&svd(&w).unwrap()).unwrap();
        assert_eq!(b.signal.len() + b.rejected_signal.len(), n);
        assert_eq!(b.signal_out.len() + b.rejected_out.len(), m);
        // W annihilates the rejected signal space; Wᵀ annihilates the rejected outputs
        for z in &b.rejected_signal {
            assert!(w.matvec(z).unwrap().norm2() <= 1e-10 * w.frobenius_norm());
        }
        for z in &b.rejected_out {
            assert!(w.tr_matvec(z).unwrap().norm2() <= 1e-10 * w.frobenius_norm());
        }
        for s in &b.signal {
            for z in &b.rejected_signal {
                assert!(s.dot(z).unwrap().abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn signal_part_solves_the_normal_equations() {
    // x_signal is the least-squares fit of x inside the row space of W:
    // it satisfies W x_signal = W x and is orthogonal to every null vector.
    let mut g = rng(22);
    for _ in 0..20 {
        let (m, n) = random_shape(&mut g, 12);
        let r = g.random_range(1..=m.min(n));
        let w = random_low_rank(&mut g, m, n, r);
        let b = bases(&svd(&w).unwrap()).unwrap();
        let x = random_vector(&mut g, n);
        let d = decompose(&x, &b).unwrap();
        let lhs = w.matvec(&d.x_signal).unwrap();
        let rhs = w.matvec(&x).unwrap();
        assert!(lhs.sub(&rhs).unwrap().norm2() <= 1e-10 * w.frobenius_norm() * x.norm2());
        for z in &b.rejected_signal {
            assert!(d.x_signal.dot(z).unwrap().abs() <= 1e-10 * x.norm2());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_splits_and_residual_orthogonality(n in 1usize..20, seed in any::<u64>()) {
        let mut g = rng(seed);
        let x = random_vector(&mut g, n);
        let w = random_vector(&mut g, n);
        let p = project_on_weight(&w, &x).unwrap();
        let e = x.norm_squared();
        prop_assert!((e - p.p.norm_squared() - p.residual.norm_squared()).abs() <= 1e-10 * e.max(f64::MIN_POSITIVE));
        prop_assert!(p.residual.dot(&w).unwrap().abs() <= 1e-10 * x.norm2() * w.norm2());
        prop_assert!((p.energy_kept + p.energy_removed - 1.0).abs() <= 1e-12);
    }
}
