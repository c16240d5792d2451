use proptest::prelude::*;

use gpa_core::metrics::{mae, rmse};

fn pairs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((1.0f64..=5.0, 1.0f64..=5.0), 1..40)
}

fn split(v: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    v.iter().copied().unzip()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mae_never_exceeds_rmse(v in pairs()) {
        let (p, t) = split(&v);
        prop_assert!(mae(&p, &t).unwrap() <= rmse(&p, &t).unwrap() + 1e-12);
    }

    #[test]
    fn joint_shuffle_changes_nothing(v in pairs(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = v.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (p, t) = split(&v);
        let (ps, ts) = split(&shuffled);
        prop_assert!((rmse(&p, &t).unwrap() - rmse(&ps, &ts).unwrap()).abs() < 1e-12);
        prop_assert!((mae(&p, &t).unwrap() - mae(&ps, &ts).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rmse_scales_linearly(v in pairs(), c in -10.0f64..10.0) {
        let (p, t) = split(&v);
        let cp: Vec<f64> = p.iter().map(|x| c * x).collect();
        let ct: Vec<f64> = t.iter().map(|x| c * x).collect();
        let want = c.abs() * rmse(&p, &t).unwrap();
        prop_assert!((rmse(&cp, &ct).unwrap() - want).abs() < 1e-9);
    }
}
