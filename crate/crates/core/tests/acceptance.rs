//! One PASS/FAIL line per acceptance criterion. Lines go straight to stdout
//! so they show up even when the harness captures test output.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use airway_core::distance::edt_squared;
use airway_core::grid::{Geometry, Mask, Volume};
use airway_core::loss::{
    boundary_weights, finite_difference_check, hybrid_loss, weighted_ce_loss, weighted_dice_loss, LossParams,
};
use airway_core::metrics::{centerline_recall, dice, Centerline};
use airway_core::nifti::{decode, encode, VoxelData, VoxelGrid};
use airway_core::phantom::{build_phantom, PhantomConfig};
use airway_core::quant::{bsa_dubois, regional_volumes, restrict_to_lung};
use airway_core::region::RegionCode;
use airway_core::segment::{run_segmentation, SegmentParams};
use airway_core::stats::{fisher_exact, shapiro_wilk, t_test_summary, SummaryStat, TTestVariant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

type Outcome = Result<String, String>;

fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit_s} s"))
    }
}

fn s(n: usize, mean: f64, sd: f64) -> SummaryStat {
    SummaryStat { n, mean, sd }
}

fn pooled(a: SummaryStat, b: SummaryStat) -> f64 {
    t_test_summary(&a, &b, TTestVariant::Pooled).unwrap().p
}

fn welch(a: SummaryStat, b: SummaryStat) -> f64 {
    t_test_summary(&a, &b, TTestVariant::Welch).unwrap().p
}

const N0: usize = 79;
const N1: usize = 27;
const ROUNDING: f64 = 0.0015;

fn lobar_p_values() -> Outcome {
    let t = Instant::now();
    let rows = [
        ("RUL", 3815.58, 1389.97, 4683.04, 1657.47, 0.009),
        ("RML", 2574.49, 1121.00, 3047.37, 1016.74, 0.056),
        ("RLL", 6502.94, 3040.40, 7678.07, 3167.45, 0.089),
        ("LUL", 4725.57, 1724.13, 5577.67, 2107.39, 0.039),
        ("LLL", 6281.54, 2749.52, 7021.04, 3238.72, 0.252),
    ];
    let mut detail = vec![];
    let mut bad = vec![];
    for (name, m0, s0, m1, s1, printed) in rows {
        let r = t_test_summary(&s(N0, m0, s0), &s(N1, m1, s1), TTestVariant::Pooled).unwrap();
        if r.df != Some(104.0) {
            bad.push(format!("{name} df {:?}", r.df));
        }
        if (r.p - printed).abs() > ROUNDING {
            bad.push(format!("{name} p {:.4} vs {printed}", r.p));
        }
        detail.push(format!("{name} {:.4}", r.p));
    }
    within(t.elapsed(), 1.0)?;
    if bad.is_empty() {
        Ok(detail.join(", "))
    } else {
        Err(bad.join("; "))
    }
}

fn segmental_p_values() -> Outcome {
    let t = Instant::now();
    // printed p, None where the table leaves it blank; 0.0 marks "< 0.001"
    let rows: [(&str, f64, f64, f64, f64, Option<f64>); 18] = [
        ("R1", 1056.11, 513.73, 1352.04, 613.62, Some(0.016)),
        ("R2", 1351.14, 572.41, 1389.96, 580.73, Some(0.762)),
        ("R3", 1408.34, 540.71, 1940.93, 783.54, Some(0.0)),
        ("R4", 1158.10, 561.90, 1201.19, 412.07, Some(0.715)),
        ("R5", 1416.37, 619.75, 1846.11, 732.86, Some(0.004)),
        ("R6", 1316.00, 547.12, 1580.59, 662.12, Some(0.043)),
        ("R7", 1098.71, 563.02, 1432.93, 576.21, Some(0.009)),
        ("R8", 1476.22, 746.43, 1461.22, 977.37, Some(0.934)),
        ("R9", 1094.38, 582.37, 1308.81, 742.32, Some(0.191)),
        ("R10", 1517.61, 1009.22, 1899.63, 872.59, Some(0.065)),
        ("L1-2", 1420.09, 566.80, 1590.67, 546.23, None),
        ("L3", 1485.67, 678.29, 1813.52, 755.39, Some(0.038)),
        ("L4", 1063.18, 488.52, 1241.11, 635.54, Some(0.134)),
        ("L5", 756.65, 325.86, 932.41, 460.78, Some(0.075)),
        ("L6", 1358.09, 580.86, 1411.41, 618.55, Some(0.686)),
        ("L7-8", 1982.39, 886.38, 2446.22, 1300.96, Some(0.041)),
        ("L9", 1215.67, 799.08, 1262.48, 633.84, Some(0.783)),
        ("L10", 1725.38, 1001.29, 1901.00, 1165.79, Some(0.453)),
    ];
    let mut matched = 0;
    let mut bad = vec![];
    let mut unprinted = String::new();
    for (name, m0, s0, m1, s1, printed) in rows {
        let (a, b) = (s(N0, m0, s0), s(N1, m1, s1));
        let p = pooled(a, b);
        match printed {
            None => unprinted = format!("{name} computed {p:.4}"),
            Some(0.0) if p < 0.001 => matched += 1,
            Some(0.0) => bad.push(format!("{name} {p:.4} not < 0.001")),
            Some(x) if (p - x).abs() <= ROUNDING => matched += 1,
            Some(x) => bad.push(format!("{name} pooled {p:.4} vs {x} (welch {:.4})", welch(a, b))),
        }
    }
    within(t.elapsed(), 1.0)?;
    let summary = format!("{matched}/17 printed rows, {unprinted}");
    if bad.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; mismatches: {}", bad.join("; ")))
    }
}

fn binom(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact two-sided minimum-likelihood p by integer enumeration.
fn fisher_two_sided_exact(t: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = t;
    let (n, r0, c0) = (a + b + c + d, a + b, a + c);
    let lo = r0.saturating_sub(n - c0);
    let hi = r0.min(c0);
    let weight = |k: u64| binom(c0, k) * binom(n - c0, r0 - k);
    let obs = weight(a);
    let tail: u128 = (lo..=hi).map(weight).filter(|&w| w <= obs).sum();
    tail as f64 / binom(n, r0) as f64
}

fn demographics() -> Outcome {
    let t = Instant::now();
    let mut bad = vec![];
    let age = pooled(s(N0, 38.90, 13.28), s(N1, 49.07, 13.22));
    if (age - 0.001).abs() > ROUNDING {
        bad.push(format!("age p {age:.5}"));
    }
    let gender = fisher_exact([[4, 75], [2, 25]]).unwrap();
    if (gender.p_lower - 0.480).abs() > 0.001 {
        bad.push(format!("gender one-sided {:.4}", gender.p_lower));
    }
    let brute = fisher_two_sided_exact([[4, 75], [2, 25]]);
    if (gender.p_two_sided - brute).abs() > 1e-12 || (brute - 0.643).abs() > 0.001 {
        bad.push(format!(
            "gender two-sided {:.6} vs enumeration {brute:.6}",
            gender.p_two_sided
        ));
    }
    let msk = fisher_exact([[24, 55], [15, 12]]).unwrap();
    let conventions = [("one-sided lower", msk.p_lower), ("two-sided", msk.p_two_sided)];
    let matching: Vec<&str> = conventions
        .iter()
        .filter(|(_, p)| (p - 0.023).abs() <= 0.002)
        .map(|(n, _)| *n)
        .collect();
    if matching.is_empty() {
        bad.push(format!(
            "musculoskeletal lower {:.4}, two-sided {:.4}",
            msk.p_lower, msk.p_two_sided
        ));
    }

    // remaining categorical rows: which convention reproduces each printed value
    let rows = [
        ("renal", 35, 12, 1.000),
        ("hematologic", 25, 11, 0.481),
        ("neuropsychiatric", 18, 5, 0.789),
        ("mucocutaneous", 34, 14, 0.504),
        ("hemoptysis", 2, 0, 0.554),
        ("fever", 8, 2, 0.507),
        ("dyspnea", 1, 0, 0.745),
        ("cough", 10, 3, 0.568),
        ("anti-dsDNA", 37, 10, 0.256),
        ("CRP", 6, 2, 0.670),
        ("ESR", 22, 7, 0.530),
    ];
    let mut notes = vec![];
    for (name, k0, k1, printed) in rows {
        let f = fisher_exact([[k0, N0 as u64 - k0], [k1, N1 as u64 - k1]]).unwrap();
        let which: Vec<&str> = [("lower", f.p_lower), ("upper", f.p_upper), ("two-sided", f.p_two_sided)]
            .iter()
            .filter(|(_, p)| (p - printed).abs() <= 0.0015)
            .map(|(n, _)| *n)
            .collect();
        notes.push(format!(
            "{name}={}",
            if which.is_empty() {
                "none".into()
            } else {
                which.join("/")
            }
        ));
    }
    within(t.elapsed(), 1.0)?;
    if bad.is_empty() {
        Ok(format!(
            "age {age:.5}, gender lower {:.4} two-sided {:.4}, musculoskeletal matches {}; other rows: {}",
            gender.p_lower,
            gender.p_two_sided,
            matching.join(" and "),
            notes.join(" ")
        ))
    } else {
        Err(bad.join("; "))
    }
}

fn loss_gradients() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let params = LossParams::default();
    let (h, small) = (1e-6, 1e-6);
    let mut worst_rel: f64 = 0.0;
    let mut worst_small: f64 = 0.0;
    let instances = 24;
    for _ in 0..instances {
        let spacing = [
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..2.0),
        ];
        let g = Geometry::new([6, 6, 6], spacing, [0.0; 3]).unwrap();
        let density = rng.random_range(0.1..0.6);
        let gt: Mask = Volume::from_fn(g, |_| rng.random_bool(density));
        let p: Volume<f64> = Volume::from_fn(g, |_| rng.random_range(0.02..0.98));
        let w = boundary_weights(&gt, rng.random_range(0.0..4.0), rng.random_range(0.5..4.0)).unwrap();
        let dl = weighted_dice_loss(&p, &gt, &w, params.dice_eps).unwrap();
        let cl = weighted_ce_loss(&p, &gt, &w, params.ce_clamp).unwrap();
        let hl = hybrid_loss(&p, &gt, &w, &params).unwrap();
        let checks = [
            finite_difference_check(&p, &dl.gradient, h, small, |q| {
                weighted_dice_loss(q, &gt, &w, params.dice_eps).unwrap().value
            }),
            finite_difference_check(&p, &cl.gradient, h, small, |q| {
                weighted_ce_loss(q, &gt, &w, params.ce_clamp).unwrap().value
            }),
            finite_difference_check(&p, &hl.gradient, h, small, |q| {
                hybrid_loss(q, &gt, &w, &params).unwrap().total
            }),
        ];
        for c in checks {
            worst_rel = worst_rel.max(c.max_rel_error);
            worst_small = worst_small.max(c.max_small_abs_error);
        }
    }
    within(t.elapsed(), 10.0)?;
    let msg = format!("{instances} instances, max rel {worst_rel:.2e}, max abs on tiny gradients {worst_small:.2e}");
    if worst_rel < 1e-5 && worst_small < 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn brute_edt_squared(mask: &Mask) -> Vec<f64> {
    let g = mask.geom();
    let fg: Vec<[f64; 3]> = mask.foreground().map(|i| g.center(g.coords(i))).collect();
    (0..g.len())
        .map(|i| {
            let c = g.center(g.coords(i));
            fg.iter()
                .map(|f| (0..3).map(|a| (c[a] - f[a]).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn edt_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    // dyadic spacings keep every squared distance exactly representable
    let spacings = [0.5, 0.75, 1.0, 1.25, 2.0, 3.0];
    let mut voxels = 0;
    for case in 0..50 {
        let dims = [
            rng.random_range(1..=16),
            rng.random_range(1..=16),
            rng.random_range(1..=16),
        ];
        let sp = [0, 1, 2].map(|_| spacings[rng.random_range(0..spacings.len())]);
        let g = Geometry::new(dims, sp, [0.0; 3]).unwrap();
        let density = rng.random_range(0.005..0.3);
        let mut mask: Mask = Volume::from_fn(g, |_| rng.random_bool(density));
        if !mask.any() {
            mask.data_mut()[0] = true;
        }
        let fast = edt_squared(&mask).unwrap();
        let brute = brute_edt_squared(&mask);
        if let Some(i) = (0..brute.len()).find(|&i| fast.data()[i] != brute[i]) {
            return Err(format!(
                "case {case} dims {dims:?} spacing {sp:?}: voxel {i} {} vs {}",
                fast.data()[i],
                brute[i]
            ));
        }
        voxels += brute.len();
    }
    Ok(format!("50 masks, {voxels} voxels bit-identical, {:.2?}", t.elapsed()))
}

fn phantom_end_to_end() -> Outcome {
    let t = Instant::now();
    let cfg = PhantomConfig::default();
    let spacing = cfg.spacing.iter().cloned().fold(0.0, f64::max);
    if spacing > cfg.tree.root_radius / 3.0 {
        return Err(format!("spacing {spacing} exceeds radius/3"));
    }
    let ph = build_phantom(&cfg).map_err(|e| e.to_string())?;
    let seg = run_segmentation(&ph.intensity, &SegmentParams::default(), None).map_err(|e| e.to_string())?;
    let d = dice(&seg.airway, &ph.airway_gt).unwrap();
    let rec = centerline_recall(&ph.centerlines, &seg.airway, 0.0).unwrap();

    let airway = restrict_to_lung(&seg.airway, &ph.lung_mask).unwrap();
    let vols = regional_volumes(&airway, &ph.region_labels, None).unwrap();
    let vv = airway.geom().voxel_volume();
    let mut analytic = std::collections::BTreeMap::new();
    for b in &ph.branch_table {
        if let Some(r) = b.region {
            *analytic.entry(r).or_insert(0.0) += b.analytic_volume_mm3;
        }
    }
    let mut worst: (f64, &str) = (0.0, "");
    for (r, a) in &analytic {
        let err = (vols.get(*r) - a).abs() / a;
        if err > worst.0 {
            worst = (err, r.name());
        }
    }
    // label 0 (hilum and unassigned bronchi) never reaches a regional total
    let labelled = airway
        .foreground()
        .filter(|&i| (1..=18).contains(&ph.region_labels.data()[i]))
        .count() as f64
        * vv;
    let hilum_airway = ph.airway_gt.and(&ph.hilum_zone).unwrap().count();
    let partition_ok = (vols.segment_total() - labelled).abs() < 1e-9
        && (vols.segment_total() + vols.unassigned_mm3 - airway.count() as f64 * vv).abs() < 1e-9
        && hilum_airway > 0
        && airway.and(&ph.hilum_zone).unwrap().count() == 0;
    let lobes_ok = RegionCode::LOBES.iter().all(|l| {
        let members: f64 = l.members().iter().map(|m| vols.get(*m)).sum();
        vols.get(*l) >= members - 1e-9
    });
    let elapsed = t.elapsed();
    within(elapsed, 60.0)?;
    let msg = format!(
        "dice {d:.4}, recall {rec:.4}, worst region {} off by {:.1}%, {} regions, hilum voxels excluded {hilum_airway}, {elapsed:.2?}",
        worst.1,
        worst.0 * 100.0,
        analytic.len()
    );
    if d >= 0.95 && rec >= 0.99 && worst.0 < 0.10 && partition_ok && lobes_ok {
        Ok(msg)
    } else {
        Err(format!("{msg}; partition ok {partition_ok}, lobes ok {lobes_ok}"))
    }
}

fn bsa() -> Outcome {
    let b = bsa_dubois(70.0, 170.0).unwrap();
    let oracle = 0.007184 * 70f64.powf(0.425) * 170f64.powf(0.725);
    let mut bad = vec![];
    if (b - 1.810).abs() > 0.005 || (b - oracle).abs() > 1e-15 {
        bad.push(format!("bsa(70, 170) = {b}"));
    }
    for (w, h) in [(45.0, 150.0), (70.0, 170.0), (120.0, 195.0)] {
        let base = bsa_dubois(w, h).unwrap();
        let dw = bsa_dubois(2.0 * w, h).unwrap() / base;
        let dh = bsa_dubois(w, 2.0 * h).unwrap() / base;
        if (dw - 2f64.powf(0.425)).abs() > 1e-12 || (dh - 2f64.powf(0.725)).abs() > 1e-12 {
            bad.push(format!("scaling at ({w}, {h}): {dw}, {dh}"));
        }
    }
    if (bsa_dubois(1.0, 1.0).unwrap() - 0.007184).abs() > 1e-15 {
        bad.push("unit inputs".into());
    }
    if bad.is_empty() {
        Ok(format!("bsa(70, 170) = {b:.6} m²"))
    } else {
        Err(bad.join("; "))
    }
}

fn metric_identities() -> Outcome {
    // spacing is stored as f32, so pick values it represents exactly
    let g = Geometry::new([12, 10, 8], [0.75, 0.75, 1.5], [0.0; 3]).unwrap();
    let a: Mask = Volume::from_fn(g, |c| c[0] < 6 && c[1] > 2);
    let b: Mask = Volume::from_fn(g, |c| c[0] >= 6);
    let e: Mask = Volume::filled(g, false);
    let mut bad = vec![];
    if dice(&a, &a).unwrap() != 1.0 || dice(&a, &b).unwrap() != 0.0 || dice(&e, &e).unwrap() != 1.0 {
        bad.push("dice identities".to_string());
    }
    let line = Centerline {
        branch_id: 0,
        region: None,
        points: (0..40).map(|k| [0.4 + 0.2 * k as f64, 2.6, 5.0]).collect(),
    };
    let sparse: Mask = Volume::from_fn(g, |c| c[0] % 4 == 0 && c[1] == 3 && c[2] == 3);
    let recalls: Vec<f64> = [0.0, 0.5, 1.0, 1.5, 2.0, 4.0]
        .iter()
        .map(|&tol| centerline_recall(std::slice::from_ref(&line), &sparse, tol).unwrap())
        .collect();
    if recalls.windows(2).any(|w| w[1] < w[0]) || recalls[0] >= *recalls.last().unwrap() {
        bad.push(format!("recall not monotone: {recalls:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data = [
        VoxelData::U8((0..g.len()).map(|_| rng.random()).collect()),
        VoxelData::I16((0..g.len()).map(|_| rng.random()).collect()),
        VoxelData::F32((0..g.len()).map(|_| rng.random_range(-3000.0..3000.0)).collect()),
    ];
    for d in data {
        let grid = VoxelGrid::new(g, d).unwrap();
        let bytes = encode(&grid);
        let back = decode(&bytes).unwrap();
        if back != grid || encode(&back) != bytes {
            bad.push(format!("{:?} round trip", grid.dtype()));
        }
    }
    if bad.is_empty() {
        Ok(format!("recall by tolerance {recalls:?}, u8/i16/f32 round trips exact"))
    } else {
        Err(bad.join("; "))
    }
}

fn shapiro_oracle() -> Outcome {
    let t = Instant::now();
    let (mut accept, mut reject) = (0, 0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        if shapiro_wilk(&normal).unwrap().p > 0.05 {
            accept += 1;
        }
        let expo: Vec<f64> = (0..500).map(|_| rng.sample(Exp1)).collect();
        if shapiro_wilk(&expo).unwrap().p < 0.01 {
            reject += 1;
        }
    }
    let msg = format!(
        "normal accepted {accept}/100, exponential rejected {reject}/100, {:.2?}",
        t.elapsed()
    );
    if accept >= 90 && reject >= 95 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("lobar p-values", lobar_p_values),
        ("segmental p-values", segmental_p_values),
        ("demographics", demographics),
        ("loss gradient suite", loss_gradients),
        ("edt oracle equivalence", edt_oracle),
        ("phantom end-to-end", phantom_end_to_end),
        ("bsa", bsa),
        ("metric identities", metric_identities),
        ("shapiro-wilk oracle", shapiro_oracle),
    ];
    let mut failed = vec![];
    for (name, f) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = t.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(d) => emit(&format!("ACCEPTANCE PASS {name} [{ms:.0} ms]: {d}")),
            Err(d) => {
                emit(&format!("ACCEPTANCE FAIL {name} [{ms:.0} ms]: {d}"));
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
