use airway_core::distance::edt;
use airway_core::grid::{Geometry, Mask, Volume};
use airway_core::loss::{
    boundary_set, boundary_weights, finite_difference_check, hybrid_loss, weighted_dice_loss, LossParams,
};
use proptest::prelude::*;

fn case(dims: [usize; 3], seed: u64) -> (Mask, Volume<f64>) {
    let g = Geometry::new(dims, [1.0, 0.5, 2.0], [0.0; 3]).unwrap();
    let mut s = seed | 1;
    let mut next = move || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let centre = [dims[0] as f64 / 2.0, dims[1] as f64 / 2.0, dims[2] as f64 / 2.0];
    let gt = Volume::from_fn(g, |c| {
        (0..3).map(|a| (c[a] as f64 - centre[a]).powi(2)).sum::<f64>() < (dims[0].min(dims[1]) as f64 / 3.0).powi(2)
    });
    let p = Volume::from_fn(g, |_| 0.02 + 0.96 * next());
    (gt, p)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dice_ignores_weight_scale(dims in [3usize..8, 3usize..8, 3usize..8], seed in any::<u64>(), k in 0.01f64..100.0) {
        let (gt, p) = case(dims, seed);
        let w = boundary_weights(&gt, 2.0, 2.0).unwrap();
        let scaled = w.map(|&x| x * k);
        let a = weighted_dice_loss(&p, &gt, &w, 0.0).unwrap();
        let b = weighted_dice_loss(&p, &gt, &scaled, 0.0).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-12);
        for (x, y) in a.gradient.data().iter().zip(b.gradient.data()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-9));
        }
    }

    #[test]
    fn weights_peak_on_boundary_and_fall_with_distance(dims in [3usize..9, 3usize..9, 3usize..9], alpha in 0.1f64..5.0, sigma in 0.5f64..4.0) {
        let (gt, _) = case(dims, 1);
        prop_assume!(gt.any() && gt.count() < gt.len());
        let w = boundary_weights(&gt, alpha, sigma).unwrap();
        let b = boundary_set(&gt);
        let d = edt(&b).unwrap();
        for i in 0..w.len() {
            prop_assert!(w.data()[i] >= 1.0 && w.data()[i] <= 1.0 + alpha);
            if b.data()[i] {
                prop_assert_eq!(w.data()[i], 1.0 + alpha);
            }
        }
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&i, &j| d.data()[i].total_cmp(&d.data()[j]));
        prop_assert!(order.windows(2).all(|p| w.data()[p[0]] >= w.data()[p[1]]));
    }

    #[test]
    fn hybrid_gradient_matches_central_differences(dims in [3usize..6, 3usize..6, 3usize..6], seed in any::<u64>()) {
        let (gt, p) = case(dims, seed);
        let params = LossParams::default();
        let w = boundary_weights(&gt, params.alpha, params.sigma_mm(gt.geom().spacing)).unwrap();
        let h = hybrid_loss(&p, &gt, &w, &params).unwrap();
        let check = finite_difference_check(&p, &h.gradient, 1e-6, 1e-8, |q| hybrid_loss(q, &gt, &w, &params).unwrap().total);
        prop_assert!(check.max_rel_error < 1e-5, "{check:?}");
        prop_assert!(check.max_small_abs_error < 1e-8, "{check:?}");
    }

    #[test]
    fn perfect_prediction_minimizes_dice(dims in [3usize..8, 3usize..8, 3usize..8], seed in any::<u64>()) {
        let (gt, p) = case(dims, seed);
        prop_assume!(gt.any());
        let w = boundary_weights(&gt, 2.0, 2.0).unwrap();
        let exact = gt.map(|&g| if g { 1.0 } else { 0.0 });
        let best = weighted_dice_loss(&exact, &gt, &w, 1e-5).unwrap().value;
        let other = weighted_dice_loss(&p, &gt, &w, 1e-5).unwrap().value;
        prop_assert!(best.abs() < 1e-9);
        prop_assert!(other >= best);
    }
}
