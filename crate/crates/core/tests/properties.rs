//! Property-based invariants.

use ndarray::Array2;
use proptest::prelude::*;

use setid_dml::crossfit::PlpRecord;
use setid_dml::dataset::{kfold_partition, Dataset, Obs};
use setid_dml::estimators::{direction_grid, plug_in_support};
use setid_dml::learners::fit_conditional_quantile;
use setid_dml::moments::{plp_moment, q_generator};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kfold_assignments_form_balanced_partition(
        n in 2usize..200,
        k in 2usize..12,
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= n);
        let part = kfold_partition(n, k, seed).unwrap();
        prop_assert_eq!(part.assignments.len(), n);
        let mut sizes = vec![0usize; k];
        for &f in &part.assignments {
            prop_assert!(f >= 1 && f <= k);
            sizes[f - 1] += 1;
        }
        let total: usize = sizes.iter().sum();
        prop_assert_eq!(total, n);
        let lo = *sizes.iter().min().unwrap();
        let hi = *sizes.iter().max().unwrap();
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(lo, n / k);
        // Deterministic in (n, K, seed).
        prop_assert_eq!(&part, &kfold_partition(n, k, seed).unwrap());
    }

    #[test]
    fn q_generator_returns_an_endpoint(
        a in -1e6f64..1e6,
        w in 0f64..1e6,
        z in -1e6f64..1e6,
    ) {
        let y = q_generator(a, a + w, z).unwrap();
        prop_assert!(y == a || y == a + w);
        if z <= 0.0 {
            prop_assert_eq!(y, a);
        } else {
            prop_assert_eq!(y, a + w);
        }
    }

    #[test]
    fn plp_moment_scales_and_flips_signs(
        d in -5f64..5.0,
        eta in -5f64..5.0,
        yl in -5f64..5.0,
        w in 0f64..5.0,
        gl in -5f64..5.0,
        gul in 0f64..5.0,
        p in prop::num::f64::NORMAL.prop_filter("nonzero", |v| v.abs() > 1e-6 && v.abs() < 1e3),
        c in 0.1f64..10.0,
    ) {
        let d_arr = ndarray::array![d];
        let x_arr = ndarray::array![0.0];
        let obs = Obs {
            d: d_arr.view(),
            x: x_arr.view(),
            s: None,
            y: None,
            y_lower: Some(yl),
            y_upper: Some(yl + w),
        };
        let rec = PlpRecord { eta: vec![eta], gamma_l: gl, gamma_ul: gul };
        let base = plp_moment(&obs, &[p], &rec).unwrap();

        // Scaling equivariance in the outcome scale.
        let obs_scaled = Obs {
            y_lower: Some(c * yl),
            y_upper: Some(c * (yl + w)),
            ..obs
        };
        let rec_scaled = PlpRecord { eta: vec![eta], gamma_l: c * gl, gamma_ul: c * gul };
        let scaled = plp_moment(&obs_scaled, &[p], &rec_scaled).unwrap();
        prop_assert!((scaled.g - c * base.g).abs() <= 1e-9 * (1.0 + base.g.abs() * c));

        // Sign flip: -p flips the projected residual and swaps the branch.
        let flipped = plp_moment(&obs, &[-p], &rec).unwrap();
        let z = p * (d - eta);
        let y_ref = if -z <= 0.0 { yl } else { yl + w };
        let direct = -z * (y_ref - rec.gamma());
        prop_assert!((flipped.g - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn quantile_predictions_are_monotone_in_u(
        mut values in prop::collection::vec(-100f64..100.0, 2..40),
        u1 in 0f64..1.0,
        u2 in 0f64..1.0,
    ) {
        let n = values.len();
        let x = Array2::<f64>::zeros((n, 1));
        let model = fit_conditional_quantile(&x.view(), &values, &[0], None).unwrap();
        let cell = ndarray::array![0.0];
        let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
        let a = model.predict_quantile(lo, &cell.view()).unwrap();
        let b = model.predict_quantile(hi, &cell.view()).unwrap();
        prop_assert!(a <= b);
        values.sort_by(|p, q| p.partial_cmp(q).unwrap());
        prop_assert_eq!(model.predict_quantile(0.0, &cell.view()).unwrap(), values[0]);
        prop_assert_eq!(model.predict_quantile(1.0, &cell.view()).unwrap(), values[n - 1]);
    }

    #[test]
    fn plug_in_support_is_sublinear_with_nonnegative_width(
        rows in prop::collection::vec((-3f64..3.0, -3f64..3.0, -3f64..3.0, 0f64..3.0), 2..25),
        angle1 in 0f64..std::f64::consts::TAU,
        angle2 in 0f64..std::f64::consts::TAU,
    ) {
        let n = rows.len();
        let mut d = Array2::<f64>::zeros((n, 2));
        let mut yl = Vec::with_capacity(n);
        let mut yu = Vec::with_capacity(n);
        for (i, (d1, d2, low, width)) in rows.iter().enumerate() {
            d[[i, 0]] = *d1;
            d[[i, 1]] = *d2;
            yl.push(Some(*low));
            yu.push(Some(low + width));
        }
        let x = Array2::<f64>::zeros((n, 1));
        let data = Dataset::new(d, x, None, vec![None; n], yl, yu).unwrap();
        let records: Vec<PlpRecord> = (0..n)
            .map(|_| PlpRecord { eta: vec![0.0, 0.0], gamma_l: 0.0, gamma_ul: 0.0 })
            .collect();
        let profile = setid_dml::crossfit::NuisanceProfile {
            model: setid_dml::dataset::ModelKind::Plp,
            fold_of: setid_dml::dataset::FoldPartition::nosplit(n),
            records: setid_dml::crossfit::Records::Plp(records),
            pr_d0_s1: f64::NAN,
            provenance: setid_dml::crossfit::LearnerSet::default(),
        };
        let sigma = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
        let q1 = vec![angle1.cos(), angle1.sin()];
        let q2 = vec![angle2.cos(), angle2.sin()];
        let sum = [q1[0] + q2[0], q1[1] + q2[1]];
        let norm = (sum[0] * sum[0] + sum[1] * sum[1]).sqrt();
        prop_assume!(norm > 1e-6);
        let mid = vec![sum[0] / norm, sum[1] / norm];
        let neg1 = vec![-q1[0], -q1[1]];
        let grid = vec![q1, q2, mid, neg1];
        let est = plug_in_support(&data, &profile, &sigma, &grid).unwrap();
        prop_assert!(norm * est.values[2] <= est.values[0] + est.values[1] + 1e-10);
        prop_assert!(est.values[0] + est.values[3] >= -1e-10);
    }

    #[test]
    fn csv_roundtrip_is_lossless(
        rows in prop::collection::vec(
            (-1e3f64..1e3, -1e3f64..1e3, 0f64..10.0, any::<bool>()),
            1..30,
        ),
    ) {
        let n = rows.len();
        let mut d = Array2::<f64>::zeros((n, 1));
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut yl = Vec::new();
        let mut yu = Vec::new();
        for (i, (dv, xv, width, present)) in rows.iter().enumerate() {
            d[[i, 0]] = *dv;
            x[[i, 0]] = *xv;
            x[[i, 1]] = -xv;
            if *present {
                yl.push(Some(*xv));
                yu.push(Some(xv + width));
            } else {
                yl.push(None);
                yu.push(None);
            }
        }
        let data = Dataset::new(d, x, None, vec![None; n], yl, yu).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(data.d(), back.d());
        prop_assert_eq!(data.x(), back.x());
        prop_assert_eq!(data.y_lower(), back.y_lower());
        prop_assert_eq!(data.y_upper(), back.y_upper());
    }

    #[test]
    fn direction_grids_are_unit_norm(d in 1usize..5, m in 2usize..40) {
        for q in direction_grid(d, m) {
            let norm: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}
