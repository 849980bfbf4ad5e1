use airway_core::distance::edt_squared;
use airway_core::grid::{Geometry, Mask, Volume, NEIGHBORS_26, NEIGHBORS_6};
use airway_core::metrics::{centerline_recall, dice, mask_volume, Centerline};
use airway_core::nifti::{decode, encode, VoxelData, VoxelGrid};
use airway_core::segment::{connected_components, Connectivity};
use airway_core::transform::{clip_normalize, crop_to_bbox, mask_bbox, resample_trilinear};
use proptest::prelude::*;

fn geometry(max: usize) -> impl Strategy<Value = Geometry> {
    let dyadic = prop::sample::select(vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5]);
    ([1..=max, 1..=max, 1..=max], [dyadic.clone(), dyadic.clone(), dyadic])
        .prop_map(|(d, s)| Geometry::new(d, s, [0.0; 3]).unwrap())
}

fn mask(max: usize) -> impl Strategy<Value = Mask> {
    (geometry(max), 0.0f64..0.5, any::<u64>()).prop_map(|(g, density, seed)| {
        let mut state = seed | 1;
        Volume::from_fn(g, |_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 10_000) as f64 / 10_000.0 < density
        })
    })
}

fn flood_fill_count(m: &Mask, offsets: &[[isize; 3]]) -> usize {
    let g = *m.geom();
    let mut seen = vec![false; g.len()];
    let mut count = 0;
    for start in 0..g.len() {
        if !m.data()[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let c = g.coords(i);
            for &o in offsets {
                if let Some(n) = g.offset(c, o) {
                    let j = g.index(n[0], n[1], n[2]);
                    if m.data()[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    count
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn edt_matches_brute_force(m in mask(10)) {
        prop_assume!(m.any());
        let g = *m.geom();
        let fg: Vec<[f64; 3]> = m.foreground().map(|i| g.center(g.coords(i))).collect();
        let fast = edt_squared(&m).unwrap();
        for i in 0..g.len() {
            let c = g.center(g.coords(i));
            let best = fg
                .iter()
                .map(|f| (0..3).map(|a| (c[a] - f[a]).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            prop_assert_eq!(fast.data()[i], best);
        }
    }

    #[test]
    fn component_count_matches_flood_fill(m in mask(20)) {
        for (conn, offsets) in [(Connectivity::Six, &NEIGHBORS_6[..]), (Connectivity::TwentySix, &NEIGHBORS_26[..])] {
            let cc = connected_components(&m, conn);
            prop_assert_eq!(cc.count(), flood_fill_count(&m, offsets));
            prop_assert_eq!(cc.sizes.iter().sum::<usize>(), m.count());
            prop_assert!(cc.sizes.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn nifti_round_trip(g in geometry(8), which in 0..3u8, seed in any::<u32>()) {
        let n = g.len();
        let data = match which {
            0 => VoxelData::U8((0..n).map(|i| (i as u32).wrapping_mul(seed) as u8).collect()),
            1 => VoxelData::I16((0..n).map(|i| (i as u32).wrapping_mul(seed) as i16).collect()),
            _ => VoxelData::F32((0..n).map(|i| (i as f32 - 7.5) * (seed % 1000) as f32 * 0.37).collect()),
        };
        let grid = VoxelGrid::new(g, data).unwrap();
        let bytes = encode(&grid);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &grid);
        prop_assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn crop_dims_follow_expanded_bbox(m in mask(12), margin in 0usize..4) {
        prop_assume!(m.any());
        let b = mask_bbox(&m).unwrap();
        let (crop, used) = crop_to_bbox(&m, &m, margin).unwrap();
        for a in 0..3 {
            let lo = b.lo[a].saturating_sub(margin);
            let hi = (b.hi[a] + margin).min(m.dims()[a] - 1);
            prop_assert_eq!(crop.dims()[a], hi - lo + 1);
            prop_assert_eq!(used.lo[a], lo);
        }
        prop_assert_eq!(crop.count(), m.count());
    }

    #[test]
    fn clip_normalize_is_monotone(a in -3000.0f32..3000.0, b in -3000.0f32..3000.0) {
        let g = Geometry::unit([2, 1, 1]).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let v = Volume::new(g, vec![lo, hi]).unwrap();
        let n = clip_normalize(&v, -1000.0, 400.0).unwrap();
        prop_assert!(n.data()[0] <= n.data()[1]);
        prop_assert!(n.data().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn resample_to_same_dims_is_identity(g in geometry(7), seed in any::<u16>()) {
        let v = Volume::from_fn(g, |c| ((c[0] * 31 + c[1] * 17 + c[2] * 7 + seed as usize) % 101) as f32 - 50.0);
        let r = resample_trilinear(&v, g.dims).unwrap();
        let worst = v.data().iter().zip(r.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        prop_assert!(worst < 1e-5);
    }

    #[test]
    fn dice_is_symmetric_and_bounded(a in mask(8), seed in any::<u64>()) {
        let b = a.map(|&v| v ^ (seed % 3 == 0));
        let (x, y) = (dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
        if a.any() {
            prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn volume_is_additive(m in mask(8)) {
        let g = *m.geom();
        let left = Volume::from_fn(g, |c| *m.at(c) && c[0] % 2 == 0);
        let right = Volume::from_fn(g, |c| *m.at(c) && c[0] % 2 == 1);
        prop_assert!((mask_volume(&left) + mask_volume(&right) - mask_volume(&m)).abs() < 1e-9);
    }

    #[test]
    fn recall_is_monotone(m in mask(8), extra in mask(8), t1 in 0.0f64..3.0, t2 in 0.0f64..3.0) {
        let g = *m.geom();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let points = (0..g.len()).step_by(3).map(|i| g.center(g.coords(i))).collect();
        let cl = [Centerline { branch_id: 0, region: None, points }];
        let grown = if extra.geom() == m.geom() { m.or(&extra).unwrap() } else { m.clone() };
        let r_lo = centerline_recall(&cl, &m, lo).unwrap();
        prop_assert!(r_lo <= centerline_recall(&cl, &m, hi).unwrap());
        prop_assert!(r_lo <= centerline_recall(&cl, &grown, lo).unwrap());
    }
}
