//! Synthetic bronchial-tree phantoms with exact ground truth.
//!
//! A phantom bundles a CT-like intensity volume with the airway mask it was
//! drawn from, two lung fields, a segment label map, analytic centerlines and
//! per-branch analytic volumes. Generations 0 and 1 (trachea and main
//! bronchi) form the hilum: they lie outside the lung fields and carry label 0.

mod raster;
mod tree;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use raster::{rasterize_labeled, rasterize_tree, rasterize_with, Rasterized, NO_BRANCH};
pub use tree::{analytic_branch_volume, generate_tree, BranchSpec, TreeParams, TreeSpec};

use crate::grid::{Geometry, GridError, LabelMap, Mask, Volume, NEIGHBORS_26};
use crate::metrics::{write_centerlines_csv, Centerline, MetricsError};
use crate::nifti::{write_nifti, NiftiError, VoxelGrid};
use crate::region::{RegionCode, UNASSIGNED};
use crate::vec3::{self, Vec3};

pub const LUMEN_HU: f32 = -1000.0;
pub const WALL_HU: f32 = -100.0;
pub const PARENCHYMA_HU: f32 = -850.0;
pub const BODY_HU: f32 = 0.0;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Nifti(#[from] NiftiError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Lumen, a one-voxel wall shell (26-adjacent to lumen), parenchyma and body
/// at fixed HU, plus Gaussian noise.
pub fn synthesize_intensity(airway: &Mask, lung: &Mask, noise_sd: f64, seed: u64) -> Result<Volume<f32>, PhantomError> {
    airway.geom().ensure_matches(lung.geom())?;
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(PhantomError::BadParams(format!("noise sd {noise_sd}")));
    }
    let g = *airway.geom();
    let mut out = Volume::filled(g, BODY_HU);
    for i in 0..g.len() {
        let c = g.coords(i);
        out.data_mut()[i] = if airway.data()[i] {
            LUMEN_HU
        } else if NEIGHBORS_26
            .iter()
            .any(|&o| g.offset(c, o).is_some_and(|n| *airway.at(n)))
        {
            WALL_HU
        } else if lung.data()[i] {
            PARENCHYMA_HU
        } else {
            BODY_HU
        };
    }
    if noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sd).expect("finite positive sd");
        for v in out.data_mut() {
            *v += normal.sample(&mut rng) as f32;
        }
    }
    Ok(out)
}

/// Sample every branch axis at intervals of at most `step` mm, both ends
/// included. Terminal branches stop one radius short of their flat tip, where
/// the medial axis of the capped tube ends.
pub fn emit_centerlines(tree: &TreeSpec, step: f64) -> Result<Vec<Centerline>, PhantomError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(PhantomError::BadParams(format!("centerline step {step}")));
    }
    Ok(tree
        .branches
        .iter()
        .enumerate()
        .map(|(id, b)| {
            let span = if tree.is_terminal(id) {
                (b.length - b.radius).max(b.length / 2.0)
            } else {
                b.length
            };
            let segments = ((span / step) - 1e-9).ceil().max(1.0) as usize;
            let points = (0..=segments)
                .map(|k| b.point_at(span * k as f64 / segments as f64))
                .collect();
            Centerline {
                branch_id: id,
                region: b.region,
                points,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub tree: TreeParams,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub noise_sd: f64,
    /// Lung fields extend this far beyond the outermost branches.
    pub lung_margin_mm: f64,
    /// The hilum zone is the gen 0-1 cylinders widened by this margin.
    pub hilum_margin_mm: f64,
    /// Body voxels left above the top of the trachea.
    pub top_pad_voxels: usize,
    pub centerline_step_mm: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            tree: TreeParams::default(),
            dims: [96, 96, 96],
            spacing: [2.0, 2.0, 2.0],
            noise_sd: 0.0,
            lung_margin_mm: 12.0,
            hilum_margin_mm: 3.0,
            top_pad_voxels: 3,
            centerline_step_mm: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub branch_id: usize,
    pub region: Option<RegionCode>,
    pub generation: u32,
    pub radius_mm: f64,
    pub length_mm: f64,
    pub analytic_volume_mm3: f64,
}

#[derive(Clone, Debug)]
pub struct PhantomOutput {
    pub intensity: Volume<f32>,
    pub airway_gt: Mask,
    pub lung_mask: Mask,
    pub hilum_zone: Mask,
    /// Segment codes (1..=18) or 0.
    pub region_labels: LabelMap,
    /// Lobe codes (19..=23) or 0; contains every segment region of its lobe.
    pub lobe_labels: LabelMap,
    pub centerlines: Vec<Centerline>,
    pub branch_table: Vec<BranchRecord>,
    /// The tree in world coordinates.
    pub tree: TreeSpec,
    /// Covering branch per airway voxel.
    pub nearest_branch: Volume<u32>,
}

/// Shift the tree so it is centred in x/y and the trachea starts
/// `top_pad_voxels` below the top slice.
fn place(tree: &TreeSpec, geom: &Geometry, top_pad: usize) -> TreeSpec {
    let (lo, hi) = tree.bounds();
    let mut shift = [0.0; 3];
    for a in 0..2 {
        let centre = geom.origin[a] + (geom.dims[a] as f64 - 1.0) * geom.spacing[a] / 2.0;
        shift[a] = centre - (lo[a] + hi[a]) / 2.0;
    }
    let top = geom.origin[2] + (geom.dims[2].saturating_sub(1 + top_pad)) as f64 * geom.spacing[2];
    shift[2] = top - tree.branches[0].start[2];
    tree.translated(shift)
}

fn descendants(tree: &TreeSpec, root: usize) -> Vec<usize> {
    let mut out = vec![];
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        out.push(i);
        stack.extend(tree.children(i));
    }
    out
}

/// Two lung fields: boxes around each side's gen >= 2 branches, extended up
/// to the trachea inlet, split at the midline and with the hilum removed.
fn lung_fields(tree: &TreeSpec, geom: &Geometry, cfg: &PhantomConfig, hilum: &Mask) -> Mask {
    let mut lung = Volume::filled(*geom, false);
    if tree.branches.len() < 3 {
        return lung;
    }
    let mid_x = tree.branches[0].start[0];
    let gap = geom.spacing[0];
    let top_z = tree.branches[0].start[2];
    for (side_root, sign) in [(1usize, 1.0f64), (2, -1.0)] {
        let all = descendants(tree, side_root);
        let deep: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&i| tree.branches[i].generation >= 2)
            .collect();
        let members = if deep.is_empty() { all } else { deep };
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &members {
            let b = &tree.branches[i];
            let reach = b.radius + cfg.lung_margin_mm;
            for p in [b.start, b.end()] {
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a] - reach);
                    hi[a] = hi[a].max(p[a] + reach);
                }
            }
        }
        hi[2] = hi[2].max(top_z);
        // keep two voxels of body between the lungs and every face
        for a in 0..3 {
            let first = geom.origin[a] + 2.0 * geom.spacing[a];
            let last = geom.origin[a] + (geom.dims[a] as f64 - 3.0) * geom.spacing[a];
            lo[a] = lo[a].max(first);
            hi[a] = hi[a].min(last);
        }
        for i in 0..geom.len() {
            let c = geom.center(geom.coords(i));
            let inside = (0..3).all(|a| c[a] >= lo[a] && c[a] <= hi[a]);
            if inside && sign * (c[0] - mid_x) > gap && !hilum.data()[i] {
                lung.data_mut()[i] = true;
            }
        }
    }
    lung
}

fn nearest_terminal(terminals: &[(Vec3, u16)], p: Vec3) -> u16 {
    let mut best = (f64::INFINITY, UNASSIGNED);
    for &(e, code) in terminals {
        let d = vec3::dot(vec3::sub(p, e), vec3::sub(p, e));
        if d < best.0 {
            best = (d, code);
        }
    }
    best.1
}

fn code_of(r: Option<RegionCode>) -> u16 {
    r.map_or(UNASSIGNED, RegionCode::code)
}

/// Generate the tree, place it in the grid and derive every ground-truth volume.
pub fn build_phantom(cfg: &PhantomConfig) -> Result<PhantomOutput, PhantomError> {
    let geom = Geometry::new(cfg.dims, cfg.spacing, [0.0; 3])?;
    let floor = cfg.spacing.iter().cloned().fold(0.0, f64::max) / 2.0;
    let params = TreeParams {
        min_radius: cfg.tree.min_radius.max(floor),
        ..cfg.tree.clone()
    };
    let local = generate_tree(&params)?;
    let tree = place(&local, &geom, cfg.top_pad_voxels);

    let raster = rasterize_labeled(&tree, geom);
    let airway = raster.mask.clone();
    let hilum = rasterize_with(&tree, geom, |b| b.is_hilum().then_some(b.radius + cfg.hilum_margin_mm)).mask;
    let mut lung = lung_fields(&tree, &geom, cfg, &hilum);
    // airway outside the hilum always sits inside a lung field
    for i in 0..geom.len() {
        if airway.data()[i] && !hilum.data()[i] && raster.nearest.data()[i] != NO_BRANCH {
            let b = &tree.branches[raster.nearest.data()[i] as usize];
            if !b.is_hilum() {
                lung.data_mut()[i] = true;
            }
        }
    }

    let branch_lobes: Vec<u16> = (0..tree.branches.len()).map(|i| code_of(tree.lobe_of(i))).collect();
    let terminals: Vec<(Vec3, u16)> = (0..tree.branches.len())
        .filter(|&i| tree.is_terminal(i))
        .map(|i| (tree.branches[i].end(), code_of(tree.branches[i].region)))
        .collect();

    let mut regions = Volume::filled(geom, UNASSIGNED);
    let mut lobes = Volume::filled(geom, UNASSIGNED);
    for i in 0..geom.len() {
        let nb = raster.nearest.data()[i];
        let (seg, lobe) = if nb != NO_BRANCH {
            let b = &tree.branches[nb as usize];
            (code_of(b.region), branch_lobes[nb as usize])
        } else if lung.data()[i] {
            let seg = nearest_terminal(&terminals, geom.center(geom.coords(i)));
            let lobe = RegionCode::from_code(seg).map_or(UNASSIGNED, |c| c.lobe().code());
            (seg, lobe)
        } else {
            (UNASSIGNED, UNASSIGNED)
        };
        regions.data_mut()[i] = seg;
        lobes.data_mut()[i] = lobe;
    }

    let intensity = synthesize_intensity(&airway, &lung, cfg.noise_sd, cfg.tree.seed)?;
    let centerlines = emit_centerlines(&tree, cfg.centerline_step_mm)?;
    let branch_table = tree
        .branches
        .iter()
        .enumerate()
        .map(|(i, b)| BranchRecord {
            branch_id: i,
            region: b.region,
            generation: b.generation,
            radius_mm: b.radius,
            length_mm: b.length,
            analytic_volume_mm3: analytic_branch_volume(b),
        })
        .collect();

    Ok(PhantomOutput {
        intensity,
        airway_gt: airway,
        lung_mask: lung,
        hilum_zone: hilum,
        region_labels: regions,
        lobe_labels: lobes,
        centerlines,
        branch_table,
        tree,
        nearest_branch: raster.nearest,
    })
}

/// Columns: branch_id, region_code, radius_mm, length_mm, analytic_volume_mm3, generation.
pub fn write_branch_table(rows: &[BranchRecord], path: impl AsRef<Path>) -> Result<(), PhantomError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "branch_id",
        "region_code",
        "radius_mm",
        "length_mm",
        "analytic_volume_mm3",
        "generation",
    ])?;
    for r in rows {
        w.write_record([
            r.branch_id.to_string(),
            code_of(r.region).to_string(),
            r.radius_mm.to_string(),
            r.length_mm.to_string(),
            r.analytic_volume_mm3.to_string(),
            r.generation.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_branch_table(path: impl AsRef<Path>) -> Result<Vec<BranchRecord>, PhantomError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = vec![];
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let num = |i: usize| -> Result<f64, PhantomError> {
            field(i)
                .parse()
                .map_err(|_| PhantomError::BadParams(format!("branch table field {:?}", field(i))))
        };
        out.push(BranchRecord {
            branch_id: num(0)? as usize,
            region: crate::metrics::parse_region_field(&field(1)).map_err(PhantomError::BadParams)?,
            radius_mm: num(2)?,
            length_mm: num(3)?,
            analytic_volume_mm3: num(4)?,
            generation: if rec.len() > 5 { num(5)? as u32 } else { 0 },
        });
    }
    Ok(out)
}

/// File names used by [`write_bundle`].
pub mod files {
    pub const INTENSITY: &str = "intensity.nii";
    pub const AIRWAY: &str = "airway_gt.nii";
    pub const LUNG: &str = "lung_mask.nii";
    pub const REGIONS: &str = "region_labels.nii";
    pub const LOBES: &str = "lobe_labels.nii";
    pub const CENTERLINES: &str = "centerlines.csv";
    pub const BRANCHES: &str = "branches.csv";
}

pub fn write_bundle(out: &PhantomOutput, dir: impl AsRef<Path>) -> Result<(), PhantomError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| PhantomError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_nifti(&VoxelGrid::from_f32(&out.intensity), dir.join(files::INTENSITY))?;
    write_nifti(&VoxelGrid::from_mask(&out.airway_gt), dir.join(files::AIRWAY))?;
    write_nifti(&VoxelGrid::from_mask(&out.lung_mask), dir.join(files::LUNG))?;
    write_nifti(&VoxelGrid::from_labels(&out.region_labels)?, dir.join(files::REGIONS))?;
    write_nifti(&VoxelGrid::from_labels(&out.lobe_labels)?, dir.join(files::LOBES))?;
    write_centerlines_csv(&out.centerlines, dir.join(files::CENTERLINES))?;
    write_branch_table(&out.branch_table, dir.join(files::BRANCHES))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centerline_counts() {
        let mut t = generate_tree(&TreeParams {
            depth: 2,
            root_length: 10.0,
            root_radius: 2.0,
            ratio: 0.5,
            ..Default::default()
        })
        .unwrap();
        let cl = emit_centerlines(&t, 1.0).unwrap();
        assert_eq!(cl[0].points.len(), 11);
        // terminal: length 5, radius 1 -> axis sampled over [0, 4]
        assert_eq!(cl[1].points.len(), 5);
        t.branches[0].length = 10.5;
        let cl = emit_centerlines(&t, 1.0).unwrap();
        assert_eq!(cl[0].points.len(), 12);
        for w in cl[0].points.windows(2) {
            assert!(vec3::norm(vec3::sub(w[1], w[0])) <= 1.0 + 1e-12);
        }
        for p in &cl[0].points {
            let d = vec3::segment_distance(*p, t.branches[0].start, t.branches[0].direction, 10.5);
            assert!(d < 1e-9);
        }
        assert!(emit_centerlines(&t, 0.0).is_err());
    }

    #[test]
    fn noiseless_intensity_has_four_levels() {
        let g = Geometry::unit([12, 12, 12]).unwrap();
        let airway = Volume::from_fn(g, |c| {
            (5..7).contains(&c[0]) && (5..7).contains(&c[1]) && (3..9).contains(&c[2])
        });
        let lung = Volume::from_fn(g, |c| c[0] >= 2 && c[0] < 10 && c[1] >= 2 && c[1] < 10);
        let v = synthesize_intensity(&airway, &lung, 0.0, 1).unwrap();
        let mut levels: Vec<i32> = v.data().iter().map(|&x| x as i32).collect();
        levels.sort();
        levels.dedup();
        assert_eq!(levels, vec![-1000, -850, -100, 0]);
        let a = synthesize_intensity(&airway, &lung, 20.0, 9).unwrap();
        let b = synthesize_intensity(&airway, &lung, 20.0, 9).unwrap();
        assert_eq!(a, b);
        let other = Volume::filled(Geometry::unit([3, 3, 3]).unwrap(), false);
        assert!(synthesize_intensity(&airway, &other, 0.0, 1).is_err());
    }

    #[test]
    fn lumen_mean_within_standard_error() {
        let g = Geometry::unit([30, 30, 30]).unwrap();
        let airway = Volume::from_fn(g, |c| c.iter().all(|&v| (3..27).contains(&v)));
        let lung = Volume::filled(g, false);
        assert!(airway.count() >= 10_000);
        let v = synthesize_intensity(&airway, &lung, 20.0, 42).unwrap();
        let lumen: Vec<f64> = airway.foreground().map(|i| v.data()[i] as f64).collect();
        let mean = lumen.iter().sum::<f64>() / lumen.len() as f64;
        // 3 HU is > 15 standard errors at n >= 1e4
        assert!((mean + 1000.0).abs() < 3.0);
    }
}
