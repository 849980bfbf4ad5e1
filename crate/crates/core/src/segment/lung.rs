use serde::{Deserialize, Serialize};

use super::components::{connected_components, Connectivity};
use super::SegmentError;
use crate::grid::{Mask, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LungParams {
    /// Voxels strictly below this HU are air-like.
    pub threshold_hu: f64,
    /// Fill background pockets enclosed within an axial slice.
    pub fill_holes: bool,
}

impl Default for LungParams {
    fn default() -> Self {
        Self {
            threshold_hu: -500.0,
            fill_holes: true,
        }
    }
}

fn faces_touched(labels: &Volume<u32>, count: usize) -> Vec<u8> {
    let g = labels.geom();
    let mut faces = vec![0u8; count + 1];
    for i in 0..labels.len() {
        let l = labels.data()[i];
        if l == 0 {
            continue;
        }
        let c = g.coords(i);
        for a in 0..3 {
            if c[a] == 0 {
                faces[l as usize] |= 1 << (2 * a);
            }
            if c[a] + 1 == g.dims[a] {
                faces[l as usize] |= 1 << (2 * a + 1);
            }
        }
    }
    faces
}

/// Fill background regions of each axial slice that do not reach the slice edge.
pub fn fill_holes_axial(mask: &Mask) -> Mask {
    let g = *mask.geom();
    let [nx, ny, nz] = g.dims;
    let mut out = mask.clone();
    let mut outside = vec![false; nx * ny];
    let mut stack = vec![];
    for z in 0..nz {
        let base = z * nx * ny;
        outside.iter_mut().for_each(|v| *v = false);
        for y in 0..ny {
            for x in 0..nx {
                if (x == 0 || y == 0 || x + 1 == nx || y + 1 == ny) && !mask.data()[base + y * nx + x] {
                    stack.push((x, y));
                }
            }
        }
        while let Some((x, y)) = stack.pop() {
            let k = y * nx + x;
            if outside[k] || mask.data()[base + k] {
                continue;
            }
            outside[k] = true;
            if x > 0 {
                stack.push((x - 1, y));
            }
            if x + 1 < nx {
                stack.push((x + 1, y));
            }
            if y > 0 {
                stack.push((x, y - 1));
            }
            if y + 1 < ny {
                stack.push((x, y + 1));
            }
        }
        for k in 0..nx * ny {
            if !outside[k] {
                out.data_mut()[base + k] = true;
            }
        }
    }
    out
}

/// Threshold air, drop components touching two or more volume faces (outside
/// air), keep the two largest 6-connected components and optionally fill
/// slice-wise holes.
pub fn segment_lung_coarse(intensity: &Volume<f32>, params: &LungParams) -> Result<Mask, SegmentError> {
    let air = intensity.map(|&v| (v as f64) < params.threshold_hu);
    let cc = connected_components(&air, Connectivity::Six);
    let faces = faces_touched(&cc.labels, cc.count());
    let kept: Vec<u32> = (1..=cc.count() as u32)
        .filter(|&l| faces[l as usize].count_ones() < 2)
        .take(2)
        .collect();
    if kept.is_empty() {
        return Err(SegmentError::EmptyLung);
    }
    let lung = cc.labels.map(|l| kept.contains(l));
    Ok(if params.fill_holes {
        fill_holes_axial(&lung)
    } else {
        lung
    })
}
