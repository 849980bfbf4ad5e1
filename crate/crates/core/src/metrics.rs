//! Segmentation evaluation: Dice overlap, centerline recall and mask volume.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, Mask};
use crate::region::RegionCode;
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("centerline set is empty")]
    EmptyCenterlines,
    #[error("tolerance must be a finite non-negative distance, got {0}")]
    BadTolerance(f64),
    #[error("centerline csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("centerline csv line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Sampled axis of one airway branch, in mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centerline {
    pub branch_id: usize,
    pub region: Option<RegionCode>,
    pub points: Vec<Vec3>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dice: f64,
    pub cl_recall: f64,
    pub gt_volume_mm3: f64,
    pub pred_volume_mm3: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions: Option<BTreeMap<RegionCode, RegionEval>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionEval {
    pub cl_recall: f64,
    pub points: usize,
}

/// 2|P∩G| / (|P| + |G|); two empty masks score 1.
pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64, MetricsError> {
    pred.geom().ensure_matches(gt.geom())?;
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        np += p as usize;
        ng += g as usize;
        inter += (p && g) as usize;
    }
    if np + ng == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (np + ng) as f64)
}

/// Foreground voxel count times voxel volume, in mm³.
pub fn mask_volume(mask: &Mask) -> f64 {
    mask.count() as f64 * mask.geom().voxel_volume()
}

fn point_covered(pred: &Mask, p: Vec3, tol: f64) -> bool {
    let g = pred.geom();
    if let Some(c) = g.containing_voxel(p) {
        if *pred.at(c) {
            return true;
        }
    }
    if tol == 0.0 {
        return false;
    }
    let v = g.to_voxel(p);
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let r = tol / g.spacing[a];
        let l = (v[a] - r).ceil().max(0.0);
        let h = (v[a] + r).floor().min(g.dims[a] as f64 - 1.0);
        if h < l {
            return false;
        }
        lo[a] = l as usize;
        hi[a] = h as usize;
    }
    let tol2 = tol * tol;
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                if !pred.data()[g.index(x, y, z)] {
                    continue;
                }
                let c = g.center([x, y, z]);
                let d2 = (0..3).map(|a| (c[a] - p[a]).powi(2)).sum::<f64>();
                if d2 <= tol2 {
                    return true;
                }
            }
        }
    }
    false
}

/// Fraction of ground-truth centerline points covered by `pred`.
///
/// A point is covered when its containing voxel is foreground or, for a
/// positive tolerance, when any foreground voxel centre lies within
/// `tolerance_mm` of it. Points outside the grid are never covered.
pub fn centerline_recall(gt: &[Centerline], pred: &Mask, tolerance_mm: f64) -> Result<f64, MetricsError> {
    let (hit, total) = recall_counts(gt.iter(), pred, tolerance_mm)?;
    if total == 0 {
        return Err(MetricsError::EmptyCenterlines);
    }
    Ok(hit as f64 / total as f64)
}

fn recall_counts<'a>(
    lines: impl Iterator<Item = &'a Centerline>,
    pred: &Mask,
    tol: f64,
) -> Result<(usize, usize), MetricsError> {
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(MetricsError::BadTolerance(tol));
    }
    let mut hit = 0;
    let mut total = 0;
    for cl in lines {
        for &p in &cl.points {
            total += 1;
            hit += point_covered(pred, p, tol) as usize;
        }
    }
    Ok((hit, total))
}

/// Dice, recall and volumes in one report; per-region recall when the
/// centerlines carry region codes.
pub fn evaluate(
    pred: &Mask,
    gt: &Mask,
    centerlines: &[Centerline],
    tolerance_mm: f64,
) -> Result<EvalReport, MetricsError> {
    let d = dice(pred, gt)?;
    let rec = centerline_recall(centerlines, pred, tolerance_mm)?;
    let mut regions = BTreeMap::new();
    let codes: std::collections::BTreeSet<RegionCode> = centerlines.iter().filter_map(|c| c.region).collect();
    for code in codes {
        let (hit, total) = recall_counts(
            centerlines.iter().filter(|c| c.region == Some(code)),
            pred,
            tolerance_mm,
        )?;
        regions.insert(
            code,
            RegionEval {
                cl_recall: hit as f64 / total.max(1) as f64,
                points: total,
            },
        );
    }
    Ok(EvalReport {
        dice: d,
        cl_recall: rec,
        gt_volume_mm3: mask_volume(gt),
        pred_volume_mm3: mask_volume(pred),
        regions: (!regions.is_empty()).then_some(regions),
    })
}

fn region_field(r: Option<RegionCode>) -> String {
    r.map_or_else(|| "0".to_string(), |c| c.code().to_string())
}

/// Accepts either the numeric label (0 for none) or the region name.
pub(crate) fn parse_region_field(s: &str) -> Result<Option<RegionCode>, String> {
    let t = s.trim();
    if t.is_empty() || t == "0" {
        return Ok(None);
    }
    if let Ok(n) = t.parse::<u16>() {
        return RegionCode::from_code(n)
            .map(Some)
            .ok_or_else(|| format!("unknown region code {n}"));
    }
    t.parse::<RegionCode>().map(Some).map_err(|e| e.to_string())
}

/// Columns: branch_id, region_code, x_mm, y_mm, z_mm.
pub fn write_centerlines_csv(lines: &[Centerline], path: impl AsRef<Path>) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["branch_id", "region_code", "x_mm", "y_mm", "z_mm"])?;
    for cl in lines {
        for p in &cl.points {
            w.write_record([
                cl.branch_id.to_string(),
                region_field(cl.region),
                p[0].to_string(),
                p[1].to_string(),
                p[2].to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Rows are grouped into centerlines by consecutive `branch_id`.
pub fn read_centerlines_csv(path: impl AsRef<Path>) -> Result<Vec<Centerline>, MetricsError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<Centerline> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |msg: String| MetricsError::Parse { line, msg };
        if rec.len() < 5 {
            return Err(bad(format!("expected 5 columns, got {}", rec.len())));
        }
        let branch_id: usize = rec[0].trim().parse().map_err(|e| bad(format!("branch_id: {e}")))?;
        let region = parse_region_field(&rec[1]).map_err(bad)?;
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = rec[2 + a].trim().parse().map_err(|e| bad(format!("coordinate: {e}")))?;
        }
        match out.last_mut() {
            Some(cl) if cl.branch_id == branch_id => cl.points.push(p),
            _ => out.push(Centerline {
                branch_id,
                region,
                points: vec![p],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Geometry, Volume};

    fn mask_with(g: Geometry, on: impl Fn([usize; 3]) -> bool) -> Mask {
        Volume::from_fn(g, on)
    }

    #[test]
    fn dice_cases() {
        let g = Geometry::unit([10, 10, 2]).unwrap();
        let a = mask_with(g, |c| c[0] < 5);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let b = mask_with(g, |c| c[0] >= 5);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        let e = mask_with(g, |_| false);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(dice(&e, &a).unwrap(), 0.0);
    }

    #[test]
    fn dice_count_arithmetic() {
        // |P| = |G| = 100 with 80 shared voxels
        let g = Geometry::unit([120, 1, 1]).unwrap();
        let p = mask_with(g, |c| c[0] < 100);
        let gt = mask_with(g, |c| (20..120).contains(&c[0]));
        assert!((dice(&p, &gt).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn dice_geometry_mismatch() {
        let a = mask_with(Geometry::unit([2, 2, 2]).unwrap(), |_| true);
        let b = mask_with(Geometry::unit([2, 2, 3]).unwrap(), |_| true);
        assert!(matches!(dice(&a, &b), Err(MetricsError::Grid(_))));
    }

    #[test]
    fn volumes() {
        let g = Geometry::new([10, 10, 10], [1.0; 3], [0.0; 3]).unwrap();
        assert_eq!(mask_volume(&mask_with(g, |_| false)), 0.0);
        assert_eq!(mask_volume(&mask_with(g, |_| true)), 1000.0);
        let g = Geometry::new([10, 10, 10], [0.7, 0.7, 1.0], [0.0; 3]).unwrap();
        assert!((mask_volume(&mask_with(g, |_| true)) - 490.0).abs() < 1e-9);
    }

    fn straight_line(branch_id: usize, y: f64, n: usize) -> Centerline {
        Centerline {
            branch_id,
            region: None,
            points: (0..n).map(|i| [i as f64, y, 0.0]).collect(),
        }
    }

    #[test]
    fn recall_missing_one_of_four_branches() {
        let g = Geometry::unit([10, 8, 1]).unwrap();
        let lines: Vec<_> = (0..4).map(|b| straight_line(b, 2.0 * b as f64, 10)).collect();
        let pred = mask_with(g, |c| c[1] != 6);
        assert!((centerline_recall(&lines, &pred, 0.0).unwrap() - 0.75).abs() < 1e-12);
        let empty = mask_with(g, |_| false);
        assert_eq!(centerline_recall(&lines, &empty, 2.0).unwrap(), 0.0);
        assert!(matches!(
            centerline_recall(&[], &pred, 0.0),
            Err(MetricsError::EmptyCenterlines)
        ));
    }

    #[test]
    fn recall_grows_with_tolerance() {
        let g = Geometry::unit([10, 8, 1]).unwrap();
        let lines = vec![straight_line(0, 3.0, 10)];
        let pred = mask_with(g, |c| c[1] == 5);
        let mut last = 0.0;
        for tol in [0.0, 1.0, 1.99, 2.0, 3.0] {
            let r = centerline_recall(&lines, &pred, tol).unwrap();
            assert!(r >= last);
            last = r;
        }
        assert_eq!(centerline_recall(&lines, &pred, 1.0).unwrap(), 0.0);
        assert_eq!(centerline_recall(&lines, &pred, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn centerline_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cl.csv");
        let lines = vec![
            straight_line(0, 1.5, 3),
            Centerline {
                branch_id: 4,
                region: Some(RegionCode::L7_8),
                points: vec![[0.25, -1.0, 3.0]; 2],
            },
        ];
        write_centerlines_csv(&lines, &path).unwrap();
        assert_eq!(read_centerlines_csv(&path).unwrap(), lines);
    }
}
