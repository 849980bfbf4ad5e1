//! Voxel grids with physical geometry.
//!
//! Every volume in the crate is a [`Volume<T>`]: a dense array in x-fastest
//! linear order plus the [`Geometry`] that places it in millimetre space.
//! Binary masks are `Volume<bool>` so the {0, 1} invariant is carried by the
//! type, and label maps are `Volume<u16>`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be positive, got {0:?}")]
    ZeroDim([usize; 3]),
    #[error("voxel spacing must be strictly positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("data length {actual} does not match dims product {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("geometry mismatch: {left} vs {right}")]
    GeometryMismatch { left: String, right: String },
}

/// Face-adjacent neighbour offsets.
pub const NEIGHBORS_6: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

/// All 26 neighbour offsets of the 3x3x3 cube.
pub const NEIGHBORS_26: [[isize; 3]; 26] = {
    let mut out = [[0isize; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    /// Voxel size in mm.
    pub spacing: [f64; 3],
    /// Physical position (mm) of the centre of voxel (0, 0, 0).
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self, GridError> {
        if dims.contains(&0) {
            return Err(GridError::ZeroDim(dims));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(GridError::BadSpacing(spacing));
        }
        Ok(Self { dims, spacing, origin })
    }

    /// Unit-spaced geometry at the origin.
    pub fn unit(dims: [usize; 3]) -> Result<Self, GridError> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Voxel volume in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Index of the voxel displaced by `off`, or `None` when it falls outside.
    #[inline]
    pub fn offset(&self, c: [usize; 3], off: [isize; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as isize + off[a];
            if v < 0 || v >= self.dims[a] as isize {
                return None;
            }
            out[a] = v as usize;
        }
        Some(out)
    }

    /// Physical centre of a voxel in mm.
    pub fn center(&self, c: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + c[0] as f64 * self.spacing[0],
            self.origin[1] + c[1] as f64 * self.spacing[1],
            self.origin[2] + c[2] as f64 * self.spacing[2],
        ]
    }

    /// Continuous voxel coordinates of a physical point.
    pub fn to_voxel(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// The voxel whose cell contains `p`, if inside the grid.
    pub fn containing_voxel(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        let v = self.to_voxel(p);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = v[a].round();
            if !r.is_finite() || r < 0.0 || r >= self.dims[a] as f64 {
                return None;
            }
            out[a] = r as usize;
        }
        Some(out)
    }

    pub fn is_border(&self, c: [usize; 3]) -> bool {
        (0..3).any(|a| c[a] == 0 || c[a] + 1 == self.dims[a])
    }

    /// Same dims and, within 1e-6 mm, same spacing and origin.
    pub fn matches(&self, other: &Geometry) -> bool {
        self.dims == other.dims
            && (0..3).all(|a| {
                (self.spacing[a] - other.spacing[a]).abs() <= 1e-6 && (self.origin[a] - other.origin[a]).abs() <= 1e-6
            })
    }

    pub fn ensure_matches(&self, other: &Geometry) -> Result<(), GridError> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(GridError::GeometryMismatch {
                left: self.describe(),
                right: other.describe(),
            })
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "dims {:?} spacing {:?} origin {:?}",
            self.dims, self.spacing, self.origin
        )
    }
}

/// Dense scalar field over a [`Geometry`].
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    geom: Geometry,
    data: Vec<T>,
}

pub type Mask = Volume<bool>;
pub type LabelMap = Volume<u16>;

impl<T> Volume<T> {
    pub fn new(geom: Geometry, data: Vec<T>) -> Result<Self, GridError> {
        if data.len() != geom.len() {
            return Err(GridError::DataLength {
                expected: geom.len(),
                actual: data.len(),
            });
        }
        Ok(Self { geom, data })
    }

    pub fn from_fn(geom: Geometry, mut f: impl FnMut([usize; 3]) -> T) -> Self {
        let data = (0..geom.len()).map(|i| f(geom.coords(i))).collect();
        Self { geom, data }
    }

    pub fn geom(&self) -> &Geometry {
        &self.geom
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, c: [usize; 3]) -> &T {
        &self.data[self.geom.index(c[0], c[1], c[2])]
    }

    #[inline]
    pub fn at_mut(&mut self, c: [usize; 3]) -> &mut T {
        let i = self.geom.index(c[0], c[1], c[2]);
        &mut self.data[i]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            geom: self.geom,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Replace the geometry, keeping data. Dims must agree.
    pub fn with_geometry(self, geom: Geometry) -> Result<Self, GridError> {
        Volume::new(geom, self.data)
    }
}

impl<T: Clone> Volume<T> {
    pub fn filled(geom: Geometry, value: T) -> Self {
        Self {
            geom,
            data: vec![value; geom.len()],
        }
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &Mask) -> Result<Mask, GridError> {
        self.geom.ensure_matches(&other.geom)?;
        Ok(Volume {
            geom: self.geom,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        })
    }

    pub fn or(&self, other: &Mask) -> Result<Mask, GridError> {
        self.geom.ensure_matches(&other.geom)?;
        Ok(Volume {
            geom: self.geom,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        })
    }

    /// Indices of foreground voxels, ascending.
    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}
