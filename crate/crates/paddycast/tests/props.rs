//! Property tests over the numeric invariants of the index, ensemble, and
//! metric primitives.

use paddycast::ensemble::{combine_predictions, compute_weights, ValidationErrors};
use paddycast::evaluation::compute_metrics;
use paddycast::indices::{
    compute_optical_index, compute_rvi, normalized_difference, BandReflectances, IndexId,
    SarBackscatter,
};
use proptest::prelude::*;

fn band() -> impl Strategy<Value = f64> {
    0.0001f64..1.5
}

fn bands() -> impl Strategy<Value = BandReflectances> {
    (
        (band(), band(), band(), band(), band()),
        (band(), band(), band(), band()),
    )
        .prop_map(|((b2, b3, b4, b5, b6), (b7, b8, b11, b12))| {
            BandReflectances::new(b2, b3, b4, b5, b6, b7, b8, b11, b12).unwrap()
        })
}

proptest! {
    #[test]
    fn normalized_difference_is_bounded_and_antisymmetric(a in band(), b in band()) {
        let v = normalized_difference(a, b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        let w = normalized_difference(b, a).unwrap();
        prop_assert!((v + w).abs() < 1e-12);
    }

    #[test]
    fn ndvi_family_stays_in_range(b in bands()) {
        for id in [IndexId::Ndvi, IndexId::NdviRe, IndexId::Ndre1, IndexId::Ndre2,
                   IndexId::Ndwi, IndexId::Bsi, IndexId::Lswi16, IndexId::Lswi22, IndexId::Cci] {
            let v = compute_optical_index(id, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v), "{} = {v}", id.name());
        }
        let gcc = compute_optical_index(IndexId::Gcc, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&gcc));
        let kndvi = compute_optical_index(IndexId::Kndvi, &b).unwrap();
        prop_assert!((0.0..1.0f64.tanh() + 1e-15).contains(&kndvi));
    }

    #[test]
    fn ratio_indices_are_scale_invariant(b in bands(), c in 0.01f64..100.0) {
        let scaled = BandReflectances::new(
            b.blue * c, b.green * c, b.red * c, b.red_edge1 * c, b.red_edge2 * c,
            b.red_edge3 * c, b.nir * c, b.swir1 * c, b.swir2 * c,
        ).unwrap();
        for id in [IndexId::Ndvi, IndexId::Sr, IndexId::Msr, IndexId::Kndvi, IndexId::Rgvi,
                   IndexId::Ndwi, IndexId::Cci, IndexId::Gcc, IndexId::Lswi16, IndexId::Lswi22] {
            match (compute_optical_index(id, &b), compute_optical_index(id, &scaled)) {
                (Some(x), Some(y)) => {
                    let tol = 1e-9 * x.abs().max(1.0);
                    prop_assert!((x - y).abs() < tol, "{}: {x} vs {y}", id.name());
                }
                (None, None) => {}
                other => prop_assert!(false, "definedness changed under scaling: {other:?}"),
            }
        }
    }

    #[test]
    fn rvi_is_a_proper_fraction(vv in 0.0001f64..2.0, vh in 0.0001f64..2.0) {
        let rvi = compute_rvi(&SarBackscatter::new(vv, vh).unwrap());
        prop_assert!(rvi > 0.0 && rvi < 1.0);
    }

    #[test]
    fn ensemble_weights_normalize_and_order(errors in prop::collection::vec(1e-6f64..1e4, 2..10)) {
        let w = compute_weights(&ValidationErrors::new(errors.clone()).unwrap());
        let sum: f64 = w.values().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        for i in 0..errors.len() {
            for j in 0..errors.len() {
                if errors[i] < errors[j] {
                    prop_assert!(w.values()[i] > w.values()[j]);
                }
            }
        }
    }

    #[test]
    fn ensemble_prediction_is_convex(
        preds in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 5), 2..5),
        errors in prop::collection::vec(0.1f64..10.0, 2..5),
    ) {
        prop_assume!(preds.len() == errors.len());
        let w = compute_weights(&ValidationErrors::new(errors).unwrap());
        let combined = combine_predictions(&preds, &w).unwrap();
        for (t, c) in combined.iter().enumerate() {
            let lo = preds.iter().map(|p| p[t]).fold(f64::MAX, f64::min);
            let hi = preds.iter().map(|p| p[t]).fold(f64::MIN, f64::max);
            prop_assert!(lo - 1e-9 <= *c && *c <= hi + 1e-9);
        }
    }

    #[test]
    fn rmse_dominates_mae(
        pred in prop::collection::vec(-1e3f64..1e3, 2..40),
        shift in -1e3f64..1e3,
    ) {
        let act: Vec<f64> = pred.iter().map(|p| p + shift).collect();
        let m = compute_metrics(&pred, &act, 1).unwrap();
        prop_assert!(m.rmse >= m.mae - 1e-12);
        // constant shift: every residual identical, so rmse == mae == |shift|
        prop_assert!((m.mae - shift.abs()).abs() < 1e-9);
        prop_assert!((m.rmse - shift.abs()).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_score_r2_one(act in prop::collection::vec(-1e3f64..1e3, 3..40)) {
        let spread = act.iter().fold(f64::MIN, |a, &b| a.max(b))
            - act.iter().fold(f64::MAX, |a, &b| a.min(b));
        prop_assume!(spread > 1e-6);
        let m = compute_metrics(&act, &act, 1).unwrap();
        prop_assert!((m.r2.unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(m.mae == 0.0 && m.rmse == 0.0);
    }
}
