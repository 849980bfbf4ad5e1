//! Resampling, intensity windowing and bounding-box cropping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Geometry, GridError, Mask, Volume};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("clip range requires lo < hi, got lo={lo} hi={hi}")]
    BadRange { lo: f64, hi: f64 },
    #[error("target dims must be positive, got {0:?}")]
    BadTarget([usize; 3]),
    #[error("cannot crop to the bounding box of an empty mask")]
    EmptyMask,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Inclusive voxel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl BBox {
    pub fn dims(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0] + 1,
            self.hi[1] - self.lo[1] + 1,
            self.hi[2] - self.lo[2] + 1,
        ]
    }

    /// Grow by `margin` voxels on every side, clamped to `dims`.
    pub fn expand(&self, margin: usize, dims: [usize; 3]) -> BBox {
        let mut out = *self;
        for a in 0..3 {
            out.lo[a] = self.lo[a].saturating_sub(margin);
            out.hi[a] = (self.hi[a] + margin).min(dims[a] - 1);
        }
        out
    }

    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] <= self.hi[a])
    }
}

/// Tight bounding box of the foreground, or `None` for an empty mask.
pub fn mask_bbox(mask: &Mask) -> Option<BBox> {
    let g = mask.geom();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for i in mask.foreground() {
        let c = g.coords(i);
        any = true;
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    any.then_some(BBox { lo, hi })
}

/// Copy out the sub-volume covered by `bbox`; the origin follows the box.
pub fn extract<T: Clone>(grid: &Volume<T>, bbox: &BBox) -> Volume<T> {
    let g = grid.geom();
    let geom = Geometry {
        dims: bbox.dims(),
        spacing: g.spacing,
        origin: g.center(bbox.lo),
    };
    Volume::from_fn(geom, |c| {
        grid.at([c[0] + bbox.lo[0], c[1] + bbox.lo[1], c[2] + bbox.lo[2]])
            .clone()
    })
}

/// Sub-grid covering the mask's bounding box grown by `margin`, plus the box
/// needed to re-embed results with [`embed`].
pub fn crop_to_bbox<T: Clone>(
    grid: &Volume<T>,
    mask: &Mask,
    margin: usize,
) -> Result<(Volume<T>, BBox), TransformError> {
    grid.geom().ensure_matches(mask.geom())?;
    let bbox = mask_bbox(mask)
        .ok_or(TransformError::EmptyMask)?
        .expand(margin, grid.dims());
    Ok((extract(grid, &bbox), bbox))
}

/// Place `sub` back into a full-size grid filled with `fill`.
pub fn embed<T: Clone>(sub: &Volume<T>, bbox: &BBox, full: Geometry, fill: T) -> Result<Volume<T>, TransformError> {
    if sub.dims() != bbox.dims() || (0..3).any(|a| bbox.hi[a] >= full.dims[a]) {
        return Err(GridError::GeometryMismatch {
            left: sub.geom().describe(),
            right: full.describe(),
        }
        .into());
    }
    let mut out = Volume::filled(full, fill);
    let sg = *sub.geom();
    for i in 0..sg.len() {
        let c = sg.coords(i);
        *out.at_mut([c[0] + bbox.lo[0], c[1] + bbox.lo[1], c[2] + bbox.lo[2]]) = sub.data()[i].clone();
    }
    Ok(out)
}

/// Clamp to `[lo, hi]` and map linearly onto `[0, 1]`.
pub fn clip_normalize(grid: &Volume<f32>, lo: f64, hi: f64) -> Result<Volume<f32>, TransformError> {
    if !(lo < hi) {
        return Err(TransformError::BadRange { lo, hi });
    }
    let span = hi - lo;
    Ok(grid.map(|&v| (((v as f64).clamp(lo, hi) - lo) / span) as f32))
}

/// Trilinear resampling to `target` dims preserving the physical extent.
///
/// Voxel centres are aligned cell-centre to cell-centre; sample positions
/// that fall outside the source are clamped to the edge voxel.
pub fn resample_trilinear(grid: &Volume<f32>, target: [usize; 3]) -> Result<Volume<f32>, TransformError> {
    if target.contains(&0) {
        return Err(TransformError::BadTarget(target));
    }
    let src = *grid.geom();
    let mut spacing = [0.0; 3];
    let mut origin = [0.0; 3];
    let mut scale = [0.0; 3];
    for a in 0..3 {
        scale[a] = src.dims[a] as f64 / target[a] as f64;
        spacing[a] = src.spacing[a] * scale[a];
        origin[a] = src.origin[a] - 0.5 * src.spacing[a] + 0.5 * spacing[a];
    }
    let geom = Geometry::new(target, spacing, origin)?;

    // per-axis (lower index, upper index, weight of upper)
    let taps: Vec<Vec<(usize, usize, f64)>> = (0..3)
        .map(|a| {
            let n = src.dims[a];
            (0..target[a])
                .map(|i| {
                    if n == target[a] {
                        return (i, i, 0.0);
                    }
                    let pos = ((i as f64 + 0.5) * scale[a] - 0.5).clamp(0.0, (n - 1) as f64);
                    let i0 = pos.floor() as usize;
                    let i1 = (i0 + 1).min(n - 1);
                    (i0, i1, pos - i0 as f64)
                })
                .collect()
        })
        .collect();

    let data = grid.data();
    let idx = |x: usize, y: usize, z: usize| data[src.index(x, y, z)] as f64;
    Ok(Volume::from_fn(geom, |c| {
        let (x0, x1, wx) = taps[0][c[0]];
        let (y0, y1, wy) = taps[1][c[1]];
        let (z0, z1, wz) = taps[2][c[2]];
        let lerp = |a: f64, b: f64, w: f64| if w == 0.0 { a } else { a + (b - a) * w };
        let c00 = lerp(idx(x0, y0, z0), idx(x1, y0, z0), wx);
        let c10 = lerp(idx(x0, y1, z0), idx(x1, y1, z0), wx);
        let c01 = lerp(idx(x0, y0, z1), idx(x1, y0, z1), wx);
        let c11 = lerp(idx(x0, y1, z1), idx(x1, y1, z1), wx);
        lerp(lerp(c00, c10, wy), lerp(c01, c11, wy), wz) as f32
    }))
}
