use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::store::Role;

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn weighted_average_examples() {
    let (d, t) = ([1.0f32, 2.0], [3.0f32, 6.0]);
    assert_eq!(weighted_average(&d, &t, 0.0).unwrap(), vec![1.0, 2.0]);
    assert_eq!(weighted_average(&d, &t, 1.0).unwrap(), vec![3.0, 6.0]);
    assert_eq!(weighted_average(&d, &t, 0.5).unwrap(), vec![2.0, 4.0]);
    assert!(matches!(
        weighted_average(&d, &[1.0], 0.5),
        Err(MergeError::ShapeMismatch { .. })
    ));
    assert!(weighted_average(&d, &t, 1.5).is_err());
}

#[test]
fn slerp_examples() {
    let (out, diag) =
        slerp_merge("w", &[1.0, 0.0], &[0.0, 1.0], 0.5, DEFAULT_COLLINEARITY_EPS).unwrap();
    assert_abs_diff_eq!(out[0], std::f32::consts::FRAC_1_SQRT_2, epsilon = 1e-7);
    assert_abs_diff_eq!(out[1], std::f32::consts::FRAC_1_SQRT_2, epsilon = 1e-7);
    assert_abs_diff_eq!(
        diag.angle_radians,
        std::f64::consts::FRAC_PI_2,
        epsilon = 1e-12
    );
    assert!(!diag.collinear_fallback);

    let v0 = [0.3f32, -1.2, 2.5];
    let v1 = [1.1f32, 0.4, -0.7];
    let (out, _) = slerp_merge("w", &v0, &v1, 0.0, DEFAULT_COLLINEARITY_EPS).unwrap();
    assert_eq!(bits(&out), bits(&v0));
    let (out, _) = slerp_merge("w", &v0, &v1, 1.0, DEFAULT_COLLINEARITY_EPS).unwrap();
    assert_eq!(bits(&out), bits(&v1));

    let (out, diag) =
        slerp_merge("w", &[2.0, 0.0], &[4.0, 0.0], 0.5, DEFAULT_COLLINEARITY_EPS).unwrap();
    assert_eq!(out, vec![3.0, 0.0]);
    assert!(diag.collinear_fallback);

    let (out, diag) = slerp_merge(
        "w",
        &[1.0, 0.0],
        &[-1.0, 0.0],
        0.25,
        DEFAULT_COLLINEARITY_EPS,
    )
    .unwrap();
    assert!(diag.collinear_fallback);
    assert_abs_diff_eq!(diag.angle_radians, std::f64::consts::PI, epsilon = 1e-12);
    assert_eq!(out, vec![0.5, 0.0]);

    assert!(matches!(
        slerp_merge("w", &[0.0, 0.0], &[1.0, 0.0], 0.5, 1e-7),
        Err(MergeError::ZeroNorm {
            which: "direct",
            ..
        })
    ));
}

#[test]
fn dare_examples() {
    let mask = DropMask::new(1, "dare", Role::Direct, "w", 0.0);
    assert_eq!(dare_process(&[2.0, 4.0], &mask).unwrap(), vec![2.0, 4.0]);
    assert_eq!(
        dare_apply_mask(&[2.0, 4.0], &[true, false], 0.5).unwrap(),
        vec![4.0, 0.0]
    );
    assert!(dare_apply_mask(&[2.0], &[true], 1.0).is_err());

    // p = 0 degenerates to the task-vector linear merge
    let base = [0.5f32, -1.0, 2.0];
    let d = [1.0f32, -0.5, 2.5];
    let t = [0.0f32, 0.0, 3.0];
    let out = dare_merge("w", &d, &t, &base, 0.25, 0.0, 9).unwrap();
    for i in 0..3 {
        let (b, dd, tt) = (f64::from(base[i]), f64::from(d[i]), f64::from(t[i]));
        let want = (b + (0.75 * (dd - b) + 0.25 * (tt - b))) as f32;
        assert_eq!(out[i], want);
    }
    assert_eq!(
        bits(&dare_merge("w", &d, &t, &base, 1.0, 0.0, 9).unwrap()),
        bits(&t)
    );
    assert_eq!(
        bits(&dare_merge("w", &d, &t, &base, 0.0, 0.0, 9).unwrap()),
        bits(&d)
    );
}

#[test]
fn dare_fixed_mask_combination() {
    // base 0, Δd masked to [4, 0], Δt masked to [0, 6], λ = 0.5
    let dd = dare_apply_mask(&[2.0, 5.0], &[true, false], 0.5).unwrap();
    let dt = dare_apply_mask(&[1.0, 3.0], &[false, true], 0.5).unwrap();
    assert_eq!(dd, vec![4.0, 0.0]);
    assert_eq!(dt, vec![0.0, 6.0]);
    let out = dare::combine(&[0.0, 0.0], &dd, &dt, 0.5);
    assert_eq!(out, vec![2.0, 3.0]);
}

#[test]
fn dare_masks_are_independent_per_role() {
    let n = 4096;
    let base = vec![0.0f32; n];
    let ones = vec![1.0f32; n];
    // direct only vs think only at λ = 0.5: kept positions differ
    let a = dare_merge("w", &ones, &base, &base, 0.5, 0.5, 3).unwrap();
    let b = dare_merge("w", &base, &ones, &base, 0.5, 0.5, 3).unwrap();
    assert_ne!(a, b);
    let overlap = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| **x != 0.0 && **y != 0.0)
        .count();
    assert!((overlap as f64 / n as f64 - 0.25).abs() < 0.05);
}

#[test]
fn ties_examples() {
    let base = [0.0f32; 3];
    let out = ties_merge(&[1.0, -0.2, 0.5], &[-1.0, 0.3, 0.5], &base, 0.7, 2.0 / 3.0).unwrap();
    // trim keeps indices {0, 2} of both vectors, so index 1 carries no update
    assert_eq!(out, vec![-1.0, 0.0, 0.5]);

    let b = [0.1f32, 0.2, -0.3];
    let d = [0.4f32, -0.6, 0.9];
    let out = ties_merge(&d, &d, &b, 0.37, 1.0).unwrap();
    for i in 0..3 {
        let want = (f64::from(b[i]) + (f64::from(d[i]) - f64::from(b[i]))) as f32;
        assert_eq!(out[i], want);
    }
    let t = [-0.4f32, 0.25, 0.9];
    assert_eq!(bits(&ties_merge(&d, &t, &b, 1.0, 1.0).unwrap()), bits(&t));
    assert_eq!(bits(&ties_merge(&d, &t, &b, 0.0, 1.0).unwrap()), bits(&d));
    assert!(ties_merge(&d, &t, &b, 0.5, 0.0).is_err());
}

#[test]
fn ties_zero_vote_leaves_base() {
    // weighted vote 0.5·1 + 0.5·(−1) = 0
    let out = ties_merge(&[1.0], &[-1.0], &[0.0], 0.5, 1.0).unwrap();
    assert_eq!(out, vec![0.0]);
}

#[test]
fn emr_examples() {
    let out = emr_merge(&[1.0, -2.0], &[1.0, -2.0], &[0.0, 0.0], 0.3).unwrap();
    assert_eq!(out, vec![1.0, -2.0]);
    let out = emr_merge(&[2.0, 0.0], &[1.0, 0.0], &[0.0, 0.0], 0.5).unwrap();
    assert_eq!(out, vec![1.5, 0.0]);
    let out = emr_merge(&[1.25], &[-0.75], &[0.25], 0.8).unwrap();
    assert_eq!(out, vec![0.25]);
}

#[test]
fn lore_examples() {
    let m = [0.5f32, -1.0, 2.0, 0.25, 3.0, -0.75];
    for lambda in [0.0, 0.3, 1.0] {
        let out = lore_merge(&m, &m, &[2, 3], lambda, 0.1, 5).unwrap();
        assert_eq!(out, m.to_vec());
    }
    let out = lore_merge(&[0.0; 4], &[2.0, 0.0, 0.0, 0.0], &[2, 2], 1.0, 0.1, 1).unwrap();
    assert_eq!(out, vec![2.0, 0.0, 0.0, 0.0]);
    let out = lore_merge(&[1.0, 2.0], &[3.0, 6.0], &[2], 0.5, 0.1, 5).unwrap();
    assert_eq!(out, vec![2.0, 4.0]);
}

#[test]
fn svt_truncates_small_singular_values() {
    // diag(10, 0.5): 0.5 < 0.1·10 is removed
    let m = nalgebra::DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 0.5]);
    let out = singular_value_threshold(&m, 0.1).unwrap();
    assert_abs_diff_eq!(out[(0, 0)], 10.0, epsilon = 1e-12);
    assert_abs_diff_eq!(out[(1, 1)], 0.0, epsilon = 1e-12);
    let zero = nalgebra::DMatrix::<f64>::zeros(2, 3);
    assert_eq!(singular_value_threshold(&zero, 0.1).unwrap(), zero);
    let bad = nalgebra::DMatrix::from_row_slice(1, 2, &[f64::NAN, 1.0]);
    assert!(matches!(
        singular_value_threshold(&bad, 0.1),
        Err(MergeError::Svd(_))
    ));
}

#[test]
fn twin_examples() {
    let out = twin_merge(&[2.0, 0.0], &[0.0, 2.0], &[0.0, 0.0], 1.0, 0.0).unwrap();
    assert_eq!(out, vec![0.0, 2.0]);
    let out = twin_merge(&[2.0, 0.0], &[0.0, 2.0], &[0.0, 0.0], 0.5, 0.0).unwrap();
    assert_eq!(out, vec![1.0, 1.0]);
    let out = twin_merge(&[1.5, -0.5], &[1.5, -0.5], &[0.5, 0.5], 0.9, 0.2).unwrap();
    assert_eq!(out, vec![1.5, -0.5]);
}

#[test]
fn custom_examples() {
    let d = [1.0f32, 2.0, 3.0];
    let t = [1.1f32, 5.0, 3.05];
    assert_eq!(
        topk_replace(&d, &t, 1.0 / 3.0).unwrap(),
        vec![1.0, 5.0, 3.0]
    );
    assert_eq!(topk_replace(&d, &t, 1.0).unwrap(), t.to_vec());
    assert_eq!(topk_replace(&d, &d, 0.5).unwrap(), d.to_vec());

    assert_eq!(
        topk_diff_average(&d, &t, 1.0 / 3.0).unwrap(),
        vec![1.0, 3.5, 3.0]
    );
    let mid = topk_diff_average(&d, &t, 1.0).unwrap();
    for i in 0..3 {
        assert_abs_diff_eq!(mid[i], (d[i] + t[i]) / 2.0, epsilon = 1e-6);
    }
    assert_eq!(topk_diff_average(&d, &d, 0.5).unwrap(), d.to_vec());

    let g = global_avg_topk_override(&d, &t, 1.0 / 3.0).unwrap();
    assert_abs_diff_eq!(g[0], 1.05, epsilon = 1e-6);
    assert_eq!(g[1], 5.0);
    assert_abs_diff_eq!(g[2], 3.025, epsilon = 1e-6);
    assert_eq!(global_avg_topk_override(&d, &t, 1.0).unwrap(), t.to_vec());
    assert_eq!(global_avg_topk_override(&d, &d, 0.4).unwrap(), d.to_vec());
}

#[test]
fn recipe_validation() {
    let r = MergeRecipe::new(MergeMethod::Dare, 0.5);
    assert_eq!(
        r.validate(false),
        Err(MergeError::BaseRequired(MergeMethod::Dare))
    );
    assert!(r.validate(true).is_ok());
    assert!(MergeRecipe::new(MergeMethod::Slerp, 1.2)
        .validate(false)
        .is_err());
    assert!(MergeRecipe::new(MergeMethod::Ties, 0.5)
        .with_drop_rate(1.0)
        .validate(true)
        .is_err());
    assert!(MergeRecipe::new(MergeMethod::TopkReplace, 0.5)
        .with_top_k(0.0)
        .validate(false)
        .is_err());
    for m in MergeMethod::ALL {
        assert_eq!(m.as_str().parse::<MergeMethod>().unwrap(), m);
    }
    assert!("nope".parse::<MergeMethod>().is_err());
    let json =
        serde_json::to_string(&MergeRecipe::new(MergeMethod::GlobalAvgTopkOverride, 0.2)).unwrap();
    assert!(json.contains("\"global_avg_topk_override\""));
    let back: MergeRecipe = serde_json::from_str(r#"{"method":"ties","strength":0.4}"#).unwrap();
    assert_eq!(back.drop_rate, 0.2);
}

#[test]
fn merge_tensor_dispatches_and_checks_base() {
    let d = [1.0f32, 2.0];
    let t = [3.0f32, 6.0];
    let r = MergeRecipe::new(MergeMethod::WeightedAverage, 0.5);
    assert_eq!(
        merge_tensor(&r, "w", &[2], &d, &t, None).unwrap().values,
        vec![2.0, 4.0]
    );
    let r = MergeRecipe::new(MergeMethod::Twin, 0.5);
    assert!(matches!(
        merge_tensor(&r, "w", &[2], &d, &t, None),
        Err(MergeError::BaseRequired(MergeMethod::Twin))
    ));
    let r = MergeRecipe::new(MergeMethod::Slerp, 0.5);
    assert!(merge_tensor(&r, "w", &[2], &d, &t, None)
        .unwrap()
        .diagnostic
        .is_some());
    assert!(matches!(
        merge_tensor(&r, "w", &[3], &d, &t, None),
        Err(MergeError::ShapeMismatch { .. })
    ));
}

fn distinct_vec(n: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-4.0f32..4.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn endpoints_reproduce_parents(
        d in distinct_vec(12), t in distinct_vec(12), b in distinct_vec(12)
    ) {
        for (method, p) in [
            (MergeMethod::WeightedAverage, 0.2),
            (MergeMethod::Dare, 0.0),
            (MergeMethod::Ties, 0.0),
            (MergeMethod::Twin, 0.0),
        ] {
            let r0 = MergeRecipe::new(method, 0.0).with_drop_rate(p);
            let r1 = MergeRecipe::new(method, 1.0).with_drop_rate(p);
            let o0 = merge_tensor(&r0, "w", &[12], &d, &t, Some(&b)).unwrap().values;
            let o1 = merge_tensor(&r1, "w", &[12], &d, &t, Some(&b)).unwrap().values;
            prop_assert_eq!(bits(&o0), bits(&d), "{} at 0", method);
            prop_assert_eq!(bits(&o1), bits(&t), "{} at 1", method);
        }
    }

    #[test]
    fn permutation_equivariance(
        d in distinct_vec(10), t in distinct_vec(10), b in distinct_vec(10),
        lambda in 0.0f64..=1.0, perm_seed in any::<u64>()
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let apply = |v: &[f32]| perm.iter().map(|&i| v[i]).collect::<Vec<f32>>();
        let (pd, pt, pb) = (apply(&d), apply(&t), apply(&b));
        for method in [
            MergeMethod::WeightedAverage, MergeMethod::Slerp, MergeMethod::Ties,
            MergeMethod::Emr, MergeMethod::Lore, MergeMethod::Twin,
            MergeMethod::TopkReplace, MergeMethod::TopkDiffAverage,
            MergeMethod::GlobalAvgTopkOverride,
        ] {
            let r = MergeRecipe::new(method, lambda).with_top_k(0.3);
            let out = merge_tensor(&r, "w", &[10], &d, &t, Some(&b)).unwrap().values;
            let pout = merge_tensor(&r, "w", &[10], &pd, &pt, Some(&pb)).unwrap().values;
            let expect = apply(&out);
            for (x, y) in pout.iter().zip(&expect) {
                prop_assert!((x - y).abs() <= 1e-5 * (1.0 + y.abs()), "{}: {} vs {}", method, x, y);
            }
        }
    }

    #[test]
    fn slerp_stays_on_unit_sphere(
        a in prop::collection::vec(-1.0f32..1.0, 8),
        b in prop::collection::vec(-1.0f32..1.0, 8),
        t in 0.0f64..=1.0,
    ) {
        let norm = |v: &[f32]| v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
        let ua: Vec<f32> = a.iter().map(|x| (f64::from(*x) / norm(&a)) as f32).collect();
        let ub: Vec<f32> = b.iter().map(|x| (f64::from(*x) / norm(&b)) as f32).collect();
        let (out, diag) = slerp_merge("w", &ua, &ub, t, DEFAULT_COLLINEARITY_EPS).unwrap();
        prop_assume!(!diag.collinear_fallback);
        prop_assert!((norm(&out) - 1.0).abs() < 1e-5);
    }
}
