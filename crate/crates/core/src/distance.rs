//! Exact Euclidean distance transform.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Geometry, Mask, Volume};

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("mask has no foreground voxels; every distance is infinite")]
    NoForeground,
}

/// Lower envelope of parabolas `f[q] + (w·(p−q))²` along one line, in place.
fn envelope_1d(f: &mut [f64], w2: f64, v: &mut Vec<usize>, z: &mut Vec<f64>, out: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    out.clear();
    out.resize(n, f64::INFINITY);
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let (qf, pf) = (q as f64, p as f64);
            let s = ((f[q] + w2 * qf * qf) - (f[p] + w2 * pf * pf)) / (2.0 * w2 * (qf - pf));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < p as f64 {
            k += 1;
        }
        let d = (p as f64 - v[k] as f64) * (p as f64 - v[k] as f64);
        *o = f[v[k]] + w2 * d;
    }
    f.copy_from_slice(out);
}

fn pass(data: &mut [f64], dims: [usize; 3], axis: usize, w: f64) {
    let n = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let lines: Vec<usize> = (0..data.len()).filter(|i| (i / stride) % n == 0).collect();
    let w2 = w * w;
    let results: Vec<(usize, Vec<f64>)> = lines
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), Vec::new()),
            |(v, z, out), &start| {
                let mut f: Vec<f64> = (0..n).map(|k| data[start + k * stride]).collect();
                envelope_1d(&mut f, w2, v, z, out);
                (start, f)
            },
        )
        .collect();
    for (start, f) in results {
        for (k, val) in f.into_iter().enumerate() {
            data[start + k * stride] = val;
        }
    }
}

/// Squared distance in mm² from each voxel centre to the nearest foreground
/// voxel centre, exact for any positive spacing.
pub fn edt_squared(mask: &Mask) -> Result<Volume<f64>, DistanceError> {
    if !mask.any() {
        return Err(DistanceError::NoForeground);
    }
    let g: Geometry = *mask.geom();
    let mut data: Vec<f64> = mask
        .data()
        .iter()
        .map(|&m| if m { 0.0 } else { f64::INFINITY })
        .collect();
    for axis in 0..3 {
        if g.dims[axis] > 1 {
            pass(&mut data, g.dims, axis, g.spacing[axis]);
        }
    }
    Ok(Volume::new(g, data).expect("length preserved"))
}

/// Euclidean distance in mm to the nearest foreground voxel centre; 0 on foreground.
pub fn edt(mask: &Mask) -> Result<Volume<f64>, DistanceError> {
    Ok(edt_squared(mask)?.map(|d| d.sqrt()))
}
