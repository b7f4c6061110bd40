use folia_core::linalg::{self, Mat};
use folia_core::matrix_invariants::{det_expand, newton_transform, sigma, sigma_k};
use folia_core::scalar::ratio;
use folia_core::verifier::pairwise_sum;
use folia_core::{MultiIndex, RandersPoint, Rational, SquareMatrix};
use proptest::prelude::*;

fn rational_matrix(m: usize) -> impl Strategy<Value = SquareMatrix<Rational>> {
    prop::collection::vec((-6i64..=6, 1i64..=4), m * m).prop_map(move |v| {
        SquareMatrix::from_row_major(m, v.into_iter().map(|(p, q)| ratio(p, q)).collect()).unwrap()
    })
}

fn tuple(k: usize) -> impl Strategy<Value = Vec<SquareMatrix<Rational>>> {
    (1usize..=4).prop_flat_map(move |m| prop::collection::vec(rational_matrix(m), k))
}

fn randers3() -> impl Strategy<Value = (RandersPoint<f64, 3>, [f64; 3])> {
    (prop::array::uniform9(-0.5f64..0.5), prop::array::uniform3(-1.0f64..1.0), 0.0f64..0.9, prop::array::uniform3(-1.0f64..1.0))
        .prop_filter("nonzero y", |(_, _, _, y)| y.iter().map(|v| v * v).sum::<f64>() > 1e-2)
        .prop_filter("nonzero beta", |(_, b, _, _)| b.iter().map(|v| v * v).sum::<f64>() > 1e-4)
        .prop_map(|(e, b, len, y)| {
            let m: Mat<f64, 3> = [[e[0], e[1], e[2]], [e[3], e[4], e[5]], [e[6], e[7], e[8]]];
            let mut a = linalg::mat_mul(&m, &linalg::transpose(&m));
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += 0.4;
            }
            let ai = linalg::inverse(&a).unwrap();
            let norm = linalg::form(&ai, &b, &b).sqrt();
            (RandersPoint::new(a, linalg::vscale(&b, len / norm)).unwrap(), y)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sigma_matches_expansion(mats in tuple(2)) {
        let m = mats[0].dim();
        let poly = det_expand(&mats).unwrap();
        for i in 0..=m {
            for j in 0..=m - i {
                let l = MultiIndex::new(vec![i, j]);
                prop_assert_eq!(sigma(&mats, &l).unwrap(), poly.coefficient(&l));
            }
        }
    }

    #[test]
    fn sigma_beyond_dimension_is_zero(mats in tuple(2)) {
        let m = mats[0].dim();
        prop_assert_eq!(sigma(&mats, &MultiIndex::new(vec![m, 1])).unwrap(), ratio(0, 1));
    }

    #[test]
    fn newton_transform_scales_and_annihilates(a in rational_matrix(3), s in (-4i64..=4, 1i64..=3)) {
        let s = ratio(s.0, s.1);
        for k in 0..=3 {
            let lhs = newton_transform(&a.scale(&s), k).unwrap();
            let pow = (0..k).fold(ratio(1, 1), |p, _| p * s.clone());
            prop_assert_eq!(lhs, newton_transform(&a, k).unwrap().scale(&pow));
        }
        prop_assert!(newton_transform(&a, 3).unwrap().is_zero());
    }

    #[test]
    fn sigma_of_transpose(a in rational_matrix(4)) {
        for k in 0..=4 {
            prop_assert_eq!(sigma_k(&a, k), sigma_k(&a.transpose(), k));
        }
    }

    #[test]
    fn randers_homogeneity((p, y) in randers3(), lam in 0.1f64..10.0) {
        let ly = linalg::vscale(&y, lam);
        let f = p.norm(&y);
        prop_assert!(f > 0.0);
        prop_assert!((p.norm(&ly) - lam * f).abs() <= 1e-12 * lam * f);
        let g = p.fundamental_tensor(&y).unwrap();
        let gl = p.fundamental_tensor(&ly).unwrap();
        prop_assert!(linalg::mat_max_abs(&linalg::mat_sub(&g, &gl)) <= 1e-10 * linalg::mat_max_abs(&g));
        // Euler: g_y(y, y) = F(y)²
        prop_assert!((linalg::form(&g, &y, &y) - f * f).abs() <= 1e-12 * f * f);
        prop_assert!((p.distortion(&ly).unwrap() - p.distortion(&y).unwrap()).abs() <= 1e-12);
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        let c = p.cartan_torsion(&y, &e1, &e2, &e1).unwrap();
        let cl = p.cartan_torsion(&ly, &e1, &e2, &e1).unwrap();
        prop_assert!((cl * lam - c).abs() <= 1e-10 * c.abs().max(1.0));
        prop_assert!(p.cartan_torsion(&y, &y, &e1, &e2).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn randers_convexity((p, y) in randers3(), u in prop::array::uniform3(-1.0f64..1.0)) {
        prop_assert!(linalg::is_positive_definite(&p.fundamental_tensor(&y).unwrap()));
        let h = p.angular_form(&y, &u, &u).unwrap();
        prop_assert!(h >= -1e-12);
        prop_assert!(p.angular_form(&y, &y, &y).unwrap().abs() <= 1e-12);
        // triangle inequality and the fundamental inequality g_y(y, u) ≤ F(y)F(u)
        let s = linalg::vadd(&y, &u);
        prop_assert!(p.norm(&s) <= p.norm(&y) + p.norm(&u) + 1e-12);
        let g = p.fundamental_tensor(&y).unwrap();
        prop_assert!(linalg::form(&g, &y, &u) <= p.norm(&y) * p.norm(&u) + 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive(v in prop::collection::vec(-1e3f64..1e3, 0..300)) {
        let naive: f64 = v.iter().sum();
        let scale: f64 = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!((pairwise_sum(&v) - naive).abs() <= 1e-12 * scale);
    }
}
