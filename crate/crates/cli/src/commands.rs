use std::fs;
use std::path::Path;
use std::time::Instant;

use airway_core::grid::{LabelMap, Mask, Volume};
use airway_core::loss::{boundary_weights, finite_difference_check_at, hybrid_loss};
use airway_core::metrics::{evaluate, read_centerlines_csv};
use airway_core::nifti::{read_nifti, write_nifti, VoxelGrid};
use airway_core::phantom::{build_phantom, write_bundle};
use airway_core::quant::{
    append_subject_csv, build_cohort, read_subjects_csv, regional_volumes, restrict_to_lung, Group, SubjectRecord,
};
use airway_core::region::RegionCode;
use airway_core::segment::run_segmentation;
use airway_core::stats::{
    compare_categorical, compare_summaries, demographic_rows, group_compare, normality_table, read_categorical_csv,
    read_summary_csv, write_categorical_csv, write_normality_csv, write_report_csv, write_t_values_csv,
    write_table_layout_csv, CompareOptions, ComparisonRow,
};
use log::{info, warn};
use serde::Serialize;

use crate::config::{required, RunConfig};
use crate::error::CliError;

fn load_mask(path: &Path) -> Result<Mask, CliError> {
    Ok(read_nifti(path)?.to_mask()?)
}

fn load_labels(path: &Path) -> Result<LabelMap, CliError> {
    Ok(read_nifti(path)?.to_labels()?)
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn phantom(cfg: &RunConfig) -> Result<(), CliError> {
    let t = Instant::now();
    let out = build_phantom(&cfg.phantom)?;
    write_bundle(&out, &cfg.paths.out_dir)?;
    info!(
        "phantom: {} branches, {} airway voxels, written to {} in {:.2?}",
        out.branch_table.len(),
        out.airway_gt.count(),
        cfg.paths.out_dir.display(),
        t.elapsed()
    );
    Ok(())
}

pub const PRED_FILE: &str = "pred.nii";
pub const PRED_LUNG_FILE: &str = "pred_lung.nii";
pub const TRACE_FILE: &str = "growth_trace.csv";

pub fn segment(cfg: &RunConfig) -> Result<(), CliError> {
    let t = Instant::now();
    let input = required(&cfg.paths.intensity, "intensity")?;
    let intensity: Volume<f32> = read_nifti(input)?.to_f32();
    let gt = cfg.paths.airway_gt.as_deref().map(load_mask).transpose()?;
    let seg = run_segmentation(&intensity, &cfg.segment, gt)?;
    let dir = &cfg.paths.out_dir;
    write_nifti(&VoxelGrid::from_mask(&seg.airway), dir.join(PRED_FILE))?;
    write_nifti(&VoxelGrid::from_mask(&seg.lung), dir.join(PRED_LUNG_FILE))?;
    if let Some(trace) = &seg.trace {
        let p = dir.join(TRACE_FILE);
        trace.save_csv(&p).map_err(|e| CliError::io(&p, e))?;
    }
    info!(
        "segment: {} airway voxels via {} in {:.2?}",
        seg.airway.count(),
        cfg.segment.method,
        t.elapsed()
    );
    Ok(())
}

pub const EVAL_FILE: &str = "eval.json";

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let pred = load_mask(required(&cfg.paths.pred, "pred")?)?;
    let gt = load_mask(required(&cfg.paths.airway_gt, "airway_gt")?)?;
    let cl = read_centerlines_csv(required(&cfg.paths.centerlines, "centerlines")?)?;
    let report = evaluate(&pred, &gt, &cl, cfg.eval.tolerance_mm)?;
    write_json(&report, &cfg.paths.out_dir.join(EVAL_FILE))?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    info!(
        "eval: dice {:.4}, centerline recall {:.4}",
        report.dice, report.cl_recall
    );
    Ok(())
}

pub const VOLUMES_FILE: &str = "volumes.json";
pub const SUBJECTS_FILE: &str = "subjects.csv";

pub fn quant(cfg: &RunConfig) -> Result<(), CliError> {
    let mut airway = load_mask(required(&cfg.paths.pred, "pred")?)?;
    if cfg.quant.restrict_to_lung {
        let lung = load_mask(required(&cfg.paths.lung_mask, "lung_mask")?)?;
        airway = restrict_to_lung(&airway, &lung)?;
    }
    let regions = load_labels(required(&cfg.paths.region_labels, "region_labels")?)?;
    let lobes = cfg.paths.lobe_labels.as_deref().map(load_labels).transpose()?;
    let vols = regional_volumes(&airway, &regions, lobes.as_ref())?;
    let q = &cfg.quant;
    let record = SubjectRecord {
        id: q.subject_id.clone(),
        group: q.group,
        sex: q.sex,
        age: q.age,
        height_cm: q.height_cm,
        weight_kg: q.weight_kg,
        volumes: vols.volumes.clone(),
    };
    if record.bsa().is_none() {
        warn!(
            "subject {} has no height/weight; the bsa column is left empty",
            record.id
        );
    }
    let cohort = cfg
        .paths
        .cohort
        .clone()
        .unwrap_or_else(|| cfg.paths.out_dir.join(SUBJECTS_FILE));
    append_subject_csv(&record, &cohort)?;
    write_json(&vols, &cfg.paths.out_dir.join(VOLUMES_FILE))?;
    info!(
        "quant: segment total {:.1} mm³, unassigned {:.1} mm³, lobes by {:?}; appended to {}",
        vols.segment_total(),
        vols.unassigned_mm3,
        vols.lobar_mode,
        cohort.display()
    );
    Ok(())
}

fn check_degenerate(rows: &[ComparisonRow], degenerate: &mut Vec<String>) {
    degenerate.extend(rows.iter().filter(|r| r.degenerate).map(|r| r.region.clone()));
}

fn write_tables(rows: &[ComparisonRow], dir: &Path, stem: &str) -> Result<(), CliError> {
    write_report_csv(rows, dir.join(format!("{stem}_report.csv")))?;
    write_table_layout_csv(rows, dir.join(format!("{stem}_table.csv")))?;
    Ok(())
}

fn has_bsa_in_both(cohort: &airway_core::quant::CohortTable) -> bool {
    [Group::NonIld, Group::Ild]
        .iter()
        .all(|&g| cohort.group(g).filter(|s| s.bsa().is_some()).count() >= 2)
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let p = &cfg.paths;
    if p.summary.is_none() && p.categorical.is_none() && p.cohort.is_none() {
        return Err(CliError::Config(
            "compare needs at least one of paths.summary, paths.categorical or paths.cohort".into(),
        ));
    }
    let dir = &p.out_dir;
    let variant = cfg.compare.variant;
    let mut degenerate = vec![];

    if let Some(path) = &p.summary {
        let rows = compare_summaries(&read_summary_csv(path)?, variant)?;
        check_degenerate(&rows, &mut degenerate);
        write_report_csv(&rows, dir.join("report.csv"))?;
        write_table_layout_csv(&rows, dir.join("table.csv"))?;
        write_t_values_csv(&rows, dir.join("t_values.csv"))?;
        for r in &rows {
            info!("{:>6}: t = {:+.3}, p = {}", r.region, r.t, r.p_formatted());
        }
    }
    if let Some(path) = &p.categorical {
        let rows = compare_categorical(&read_categorical_csv(path)?)?;
        write_categorical_csv(&rows, dir.join("categorical.csv"))?;
    }
    if let Some(path) = &p.cohort {
        let cohort = build_cohort(read_subjects_csv(path)?)?;
        info!(
            "cohort: {} SLE-non-ILD, {} SLE-ILD",
            cohort.group_sizes[0], cohort.group_sizes[1]
        );
        let (continuous, categorical) = demographic_rows(&cohort, variant)?;
        check_degenerate(&continuous, &mut degenerate);
        write_report_csv(&continuous, dir.join("demographics_report.csv"))?;
        write_categorical_csv(&categorical, dir.join("demographics_categorical.csv"))?;

        let mut passes = vec![(false, "")];
        if cfg.compare.normalized {
            if has_bsa_in_both(&cohort) {
                passes.push((true, "_bsa"));
            } else {
                warn!("fewer than two subjects with height and weight in a group; skipping BSA-normalized tables");
            }
        }
        for (normalized, suffix) in passes {
            let opts = CompareOptions { variant, normalized };
            let lobar = group_compare(&cohort, &RegionCode::LOBES, &opts)?;
            let segmental = group_compare(&cohort, &RegionCode::SEGMENTS, &opts)?;
            check_degenerate(&lobar, &mut degenerate);
            check_degenerate(&segmental, &mut degenerate);
            write_tables(&lobar, dir, &format!("lobar{suffix}"))?;
            write_tables(&segmental, dir, &format!("segmental{suffix}"))?;
            let all: Vec<ComparisonRow> = lobar.into_iter().chain(segmental).collect();
            write_t_values_csv(&all, dir.join(format!("t_values{suffix}.csv")))?;
            let regions: Vec<RegionCode> = RegionCode::all().collect();
            write_normality_csv(
                &normality_table(&cohort, &regions, normalized),
                dir.join(format!("normality{suffix}.csv")),
            )?;
        }
    }
    if !degenerate.is_empty() {
        return Err(CliError::Degenerate(format!(
            "zero-variance groups with different means in: {} (reports written)",
            degenerate.join(", ")
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct LossReport {
    total: f64,
    dice_term: f64,
    ce_term: f64,
    alpha: f64,
    sigma_mm: f64,
    fd_step: f64,
    fd_voxels: usize,
    fd_skipped: usize,
    max_rel_error: f64,
    max_abs_error: f64,
    max_mixed_error: f64,
    max_small_abs_error: f64,
}

pub const LOSS_FILE: &str = "loss.json";
pub const GRADIENT_FILE: &str = "gradient.nii";
pub const WEIGHTS_FILE: &str = "weights.nii";

pub fn loss_check(cfg: &RunConfig) -> Result<(), CliError> {
    let prob = read_nifti(required(&cfg.paths.prob, "prob")?)?.to_f64();
    let gt = load_mask(required(&cfg.paths.airway_gt, "airway_gt")?)?;
    prob.geom().ensure_matches(gt.geom())?;
    let lp = &cfg.loss;
    let sigma = lp.sigma_mm(prob.geom().spacing);
    let w = boundary_weights(&gt, lp.alpha, sigma)?;
    let loss = hybrid_loss(&prob, &gt, &w, lp)?;

    let c = &cfg.loss_check;
    let h = c.fd_step;
    let n = prob.len();
    let count = if c.fd_voxels == 0 { n } else { c.fd_voxels.min(n) };
    // evenly spaced probes, skipping voxels where p ± h leaves [0, 1]
    let probes: Vec<usize> = (0..count).map(|k| k * n / count).collect();
    let usable: Vec<usize> = probes
        .iter()
        .copied()
        .filter(|&i| {
            let v = prob.data()[i];
            v - h >= 0.0 && v + h <= 1.0
        })
        .collect();
    let check = finite_difference_check_at(
        &prob,
        &loss.gradient,
        h,
        c.small_gradient,
        usable.iter().copied(),
        |q| hybrid_loss(q, &gt, &w, lp).map_or(f64::NAN, |l| l.total),
    );

    let dir = &cfg.paths.out_dir;
    write_nifti(&VoxelGrid::from_f64(&loss.gradient), dir.join(GRADIENT_FILE))?;
    write_nifti(&VoxelGrid::from_f64(&w), dir.join(WEIGHTS_FILE))?;
    let report = LossReport {
        total: loss.total,
        dice_term: loss.dice_term,
        ce_term: loss.ce_term,
        alpha: lp.alpha,
        sigma_mm: sigma,
        fd_step: h,
        fd_voxels: check.voxels,
        fd_skipped: probes.len() - usable.len(),
        max_rel_error: check.max_rel_error,
        max_abs_error: check.max_abs_error,
        max_mixed_error: check.max_mixed_error,
        max_small_abs_error: check.max_small_abs_error,
    };
    write_json(&report, &dir.join(LOSS_FILE))?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    if check.max_mixed_error > 1e-5 {
        warn!(
            "finite differences disagree with the analytic gradient: {:.3e}",
            check.max_mixed_error
        );
    }
    Ok(())
}
