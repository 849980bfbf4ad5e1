use log::warn;

use super::tree::{BranchSpec, TreeSpec};
use crate::grid::{Geometry, Mask, Volume};
use crate::vec3;

/// Marker for voxels not covered by any branch.
pub const NO_BRANCH: u32 = u32::MAX;

/// Rasterized tree with, per voxel, the covering branch whose axis is nearest.
#[derive(Clone, Debug)]
pub struct Rasterized {
    pub mask: Mask,
    pub nearest: Volume<u32>,
}

fn voxel_range(geom: &Geometry, b: &BranchSpec, reach: f64) -> Option<([usize; 3], [usize; 3])> {
    let e = b.end();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let pmin = b.start[a].min(e[a]) - reach;
        let pmax = b.start[a].max(e[a]) + reach;
        let vmin = ((pmin - geom.origin[a]) / geom.spacing[a]).ceil().max(0.0);
        let vmax = ((pmax - geom.origin[a]) / geom.spacing[a]).floor();
        if vmax < 0.0 || vmin > (geom.dims[a] - 1) as f64 {
            return None;
        }
        lo[a] = vmin as usize;
        hi[a] = (vmax as usize).min(geom.dims[a] - 1);
        if hi[a] < lo[a] {
            return None;
        }
    }
    Some((lo, hi))
}

/// Rasterize cylinders of radius `radius_of(branch)` (skipping `None`).
/// A voxel belongs to a branch when its centre projects onto the branch axis
/// within `[0, length]` at a perpendicular distance of at most the radius.
pub fn rasterize_with(tree: &TreeSpec, geom: Geometry, radius_of: impl Fn(&BranchSpec) -> Option<f64>) -> Rasterized {
    let mut nearest = Volume::filled(geom, NO_BRANCH);
    let mut best = vec![f64::INFINITY; geom.len()];
    for (bi, b) in tree.branches.iter().enumerate() {
        let Some(r) = radius_of(b) else { continue };
        let Some((lo, hi)) = voxel_range(&geom, b, r) else {
            continue;
        };
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let c = geom.center([x, y, z]);
                    let Some(d) = vec3::cylinder_distance(c, b.start, b.direction, b.length) else {
                        continue;
                    };
                    let i = geom.index(x, y, z);
                    if d <= r && d < best[i] {
                        best[i] = d;
                        nearest.data_mut()[i] = bi as u32;
                    }
                }
            }
        }
    }
    let mask = nearest.map(|&b| b != NO_BRANCH);
    Rasterized { mask, nearest }
}

pub fn rasterize_labeled(tree: &TreeSpec, geom: Geometry) -> Rasterized {
    let (lo, hi) = tree.bounds();
    let inside = (0..3).all(|a| {
        lo[a] >= geom.origin[a] - 0.5 * geom.spacing[a]
            && hi[a] <= geom.origin[a] + (geom.dims[a] as f64 - 0.5) * geom.spacing[a]
    });
    if !inside {
        warn!("tree extends beyond the grid; rasterization is clipped");
    }
    rasterize_with(tree, geom, |b| Some(b.radius))
}

/// Binary airway mask of the tree on `geom`.
pub fn rasterize_tree(tree: &TreeSpec, geom: Geometry) -> Mask {
    rasterize_labeled(tree, geom).mask
}
