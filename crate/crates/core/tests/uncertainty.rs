mod support;

use ldk::fixtures::{recovery_loss, recovery_scene};
use ldk::optimizer::{ensemble_refine, RefineConfig};
use ldk::uncertainty::{ause, default_fractions, fuse_ensemble, EnsembleOutputs};
use proptest::prelude::*;
use support::{fusion_affine_error, fusion_oracle_error, fusion_permutation_exact, gauss, random_ensemble, rng};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Ranking by `-|error|` removes the smallest errors first, which keeps the
/// largest remaining RMSE at every fraction: no ordering has a larger area.
#[test]
fn inverted_ordering_has_the_largest_ause() {
    let fractions = default_fractions(20);
    for n in 2..=8 {
        let mut r = rng(n as u64);
        let errors: Vec<f64> = (0..n).map(|_| gauss(&mut r)).collect();
        let inverted: Vec<f64> = errors.iter().map(|e| -e.abs()).collect();
        let worst = ause(&inverted, &errors, &fractions).unwrap().ause;
        let mut best_other = f64::NEG_INFINITY;
        for p in permutations(n) {
            let unc: Vec<f64> = p.iter().map(|&k| k as f64).collect();
            best_other = best_other.max(ause(&unc, &errors, &fractions).unwrap().ause);
        }
        assert!(worst >= best_other - 1e-12, "n = {n}: {worst} < {best_other}");
        assert!((worst - best_other).abs() < 1e-12);
        assert!(worst > 0.0);
    }
}

#[test]
fn constant_uncertainty_has_positive_ause() {
    for seed in 0..100 {
        let mut r = rng(seed);
        let errors: Vec<f64> = (0..200).map(|_| gauss(&mut r)).collect();
        let a = ause(&vec![1.0; errors.len()], &errors, &default_fractions(100)).unwrap().ause;
        assert!(a > 0.0, "seed {seed}: {a}");
    }
}

/// Perturbed restarts disagree most where the image constrains depth least:
/// far from the light, where the scene is dark.
#[test]
fn epistemic_variance_grows_in_far_dark_regions() {
    let f = recovery_scene(2).unwrap();
    let cfg = RefineConfig { steps: 300, ..Default::default() };
    let members = ensemble_refine(&f.rig, &f.frame.image, None, None, &recovery_loss(), &cfg, 8, 5).unwrap();
    let fused = fuse_ensemble(&EnsembleOutputs { members: members.iter().map(|m| (m.depth.clone(), m.var_aleatoric.clone())).collect() }).unwrap();
    let gt = &f.frame.depth;
    let mut depths: Vec<f64> = (0..gt.data.len()).filter(|&i| gt.valid[i] && fused.mean.valid[i]).map(|i| gt.data[i]).collect();
    depths.sort_by(f64::total_cmp);
    let split = depths[depths.len() / 2];
    let (mut near, mut far) = ((0.0, 0), (0.0, 0));
    for i in 0..gt.data.len() {
        if !(gt.valid[i] && fused.mean.valid[i]) {
            continue;
        }
        let bucket = if gt.data[i] > split { &mut far } else { &mut near };
        bucket.0 += fused.var_epistemic[i];
        bucket.1 += 1;
    }
    let (near, far) = (near.0 / near.1 as f64, far.0 / far.1 as f64);
    assert!(far > near, "far {far:e} vs near {near:e}");
    // the far half is also the dark half under a point light
    let bright = |i: usize| f.frame.image.max_channel(i);
    let (mut b_near, mut b_far) = (0.0, 0.0);
    for i in 0..gt.data.len() {
        if gt.valid[i] {
            if gt.data[i] > split {
                b_far += bright(i);
            } else {
                b_near += bright(i);
            }
        }
    }
    assert!(b_far < b_near);
}

#[test]
fn fusion_oracle_on_many_instances() {
    for seed in 0..10 {
        let e = random_ensemble(50, 8, 8, 100 + seed);
        assert!(fusion_oracle_error(&e).0 < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_is_permutation_invariant(m in 1usize..12, seed in any::<u64>()) {
        prop_assert!(fusion_permutation_exact(&random_ensemble(m, 5, 4, seed)));
    }

    #[test]
    fn fusion_scales_affinely(m in 1usize..12, seed in any::<u64>(), e in -4i32..5, k in 0.1f64..10.0) {
        let ens = random_ensemble(m, 5, 4, seed);
        prop_assert_eq!(fusion_affine_error(&ens, 2f64.powi(e)), 0.0);
        prop_assert!(fusion_affine_error(&ens, k) < 1e-12);
    }

    /// Only the order of the uncertainties matters.
    #[test]
    fn ause_ignores_monotone_transforms(seed in any::<u64>(), n in 2usize..300) {
        let mut r = rng(seed);
        let errors: Vec<f64> = (0..n).map(|_| gauss(&mut r)).collect();
        let unc: Vec<f64> = (0..n).map(|_| gauss(&mut r)).collect();
        let fractions = default_fractions(50);
        let base = ause(&unc, &errors, &fractions).unwrap();
        let warped: Vec<f64> = unc.iter().map(|u| (2.0 * u).exp() + 3.0).collect();
        prop_assert_eq!(ause(&warped, &errors, &fractions).unwrap(), base);
    }
}
