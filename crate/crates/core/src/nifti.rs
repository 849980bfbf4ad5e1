//! Minimal single-file NIfTI-1 (`n+1`) reader and writer.
//!
//! Only little-endian, uncompressed files with datatypes uint8 (2), int16 (4)
//! and float32 (16) are supported. The qform offset is used for the origin;
//! sform and any oblique rotation are ignored.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::{Geometry, GridError, LabelMap, Mask, Volume};

pub const HEADER_SIZE: usize = 348;
pub const DATA_OFFSET: usize = 352;
const MAGIC: [u8; 4] = *b"n+1\0";

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated file: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("sizeof_hdr is {0}, expected 348")]
    HeaderSize(i32),
    #[error("big-endian files are not supported")]
    BigEndian,
    #[error("unsupported dim field {0:?}: only 1-3 spatial dimensions")]
    UnsupportedDims([i16; 8]),
    #[error("invalid vox_offset {0}")]
    BadOffset(f32),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("volume is not a binary mask: found value {0}")]
    NotBinary(f64),
    #[error("volume is not a label map: found value {0}")]
    NotLabel(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataType {
    U8,
    I16,
    F32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I16 => 4,
            DataType::F32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self, NiftiError> {
        match code {
            2 => Ok(DataType::U8),
            4 => Ok(DataType::I16),
            16 => Ok(DataType::F32),
            other => Err(NiftiError::UnsupportedDatatype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::F32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DataType {
        match self {
            VoxelData::U8(_) => DataType::U8,
            VoxelData::I16(_) => DataType::I16,
            VoxelData::F32(_) => DataType::F32,
        }
    }

    fn value(&self, i: usize) -> f64 {
        match self {
            VoxelData::U8(v) => v[i] as f64,
            VoxelData::I16(v) => v[i] as f64,
            VoxelData::F32(v) => v[i] as f64,
        }
    }
}

/// A volume as stored on disk: geometry plus dtype-tagged samples.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub geom: Geometry,
    pub data: VoxelData,
}

impl VoxelGrid {
    pub fn new(geom: Geometry, data: VoxelData) -> Result<Self, NiftiError> {
        if data.len() != geom.len() {
            return Err(GridError::DataLength {
                expected: geom.len(),
                actual: data.len(),
            }
            .into());
        }
        Ok(Self { geom, data })
    }

    pub fn dtype(&self) -> DataType {
        self.data.dtype()
    }

    pub fn to_f32(&self) -> Volume<f32> {
        let data = match &self.data {
            VoxelData::U8(v) => v.iter().map(|&x| x as f32).collect(),
            VoxelData::I16(v) => v.iter().map(|&x| x as f32).collect(),
            VoxelData::F32(v) => v.clone(),
        };
        Volume::new(self.geom, data).expect("length checked at construction")
    }

    pub fn to_f64(&self) -> Volume<f64> {
        Volume::from_fn(self.geom, |c| self.data.value(self.geom.index(c[0], c[1], c[2])))
    }

    /// Interpret as a binary mask; every value must be 0 or 1.
    pub fn to_mask(&self) -> Result<Mask, NiftiError> {
        let mut out = Vec::with_capacity(self.geom.len());
        for i in 0..self.geom.len() {
            let v = self.data.value(i);
            if v == 0.0 {
                out.push(false);
            } else if v == 1.0 {
                out.push(true);
            } else {
                return Err(NiftiError::NotBinary(v));
            }
        }
        Ok(Volume::new(self.geom, out)?)
    }

    /// Interpret as a label map of non-negative integer codes.
    pub fn to_labels(&self) -> Result<LabelMap, NiftiError> {
        let mut out = Vec::with_capacity(self.geom.len());
        for i in 0..self.geom.len() {
            let v = self.data.value(i);
            if v < 0.0 || v.fract() != 0.0 || v > u16::MAX as f64 {
                return Err(NiftiError::NotLabel(v));
            }
            out.push(v as u16);
        }
        Ok(Volume::new(self.geom, out)?)
    }

    pub fn from_mask(mask: &Mask) -> Self {
        Self {
            geom: *mask.geom(),
            data: VoxelData::U8(mask.data().iter().map(|&b| b as u8).collect()),
        }
    }

    /// Label maps are stored as int16; codes above `i16::MAX` are rejected.
    pub fn from_labels(labels: &LabelMap) -> Result<Self, NiftiError> {
        let mut out = Vec::with_capacity(labels.len());
        for &v in labels.data() {
            if v > i16::MAX as u16 {
                return Err(NiftiError::NotLabel(v as f64));
            }
            out.push(v as i16);
        }
        Ok(Self {
            geom: *labels.geom(),
            data: VoxelData::I16(out),
        })
    }

    pub fn from_f32(vol: &Volume<f32>) -> Self {
        Self {
            geom: *vol.geom(),
            data: VoxelData::F32(vol.data().to_vec()),
        }
    }

    pub fn from_f64(vol: &Volume<f64>) -> Self {
        Self {
            geom: *vol.geom(),
            data: VoxelData::F32(vol.data().iter().map(|&x| x as f32).collect()),
        }
    }
}

fn rd_i16(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn rd_i32(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn rd_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn wr_i16(b: &mut [u8], off: usize, v: i16) {
    b[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn wr_i32(b: &mut [u8], off: usize, v: i32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn wr_f32(b: &mut [u8], off: usize, v: f32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

/// Decode an in-memory `.nii` image.
pub fn decode(bytes: &[u8]) -> Result<VoxelGrid, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::Truncated {
            expected: HEADER_SIZE,
            actual: bytes.len(),
        });
    }
    let sizeof_hdr = rd_i32(bytes, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        if i32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == HEADER_SIZE as i32 {
            return Err(NiftiError::BigEndian);
        }
        return Err(NiftiError::HeaderSize(sizeof_hdr));
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[344..348]);
    if magic != MAGIC {
        return Err(NiftiError::BadMagic(magic));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = rd_i16(bytes, 40 + 2 * i);
    }
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) || dim[1..=ndim as usize].iter().any(|&d| d < 1) {
        return Err(NiftiError::UnsupportedDims(dim));
    }
    if ndim > 3 && dim[4..=ndim as usize].iter().any(|&d| d != 1) {
        return Err(NiftiError::UnsupportedDims(dim));
    }
    let mut dims = [1usize; 3];
    for a in 0..3.min(ndim as usize) {
        dims[a] = dim[a + 1] as usize;
    }

    let dtype = DataType::from_code(rd_i16(bytes, 70))?;
    let mut spacing = [1.0f64; 3];
    for a in 0..3.min(ndim as usize) {
        spacing[a] = rd_f32(bytes, 80 + 4 * a) as f64;
    }
    let vox_offset = rd_f32(bytes, 108);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(NiftiError::BadOffset(vox_offset));
    }
    let scl_slope = rd_f32(bytes, 112);
    let scl_inter = rd_f32(bytes, 116);
    let origin = [
        rd_f32(bytes, 268) as f64,
        rd_f32(bytes, 272) as f64,
        rd_f32(bytes, 276) as f64,
    ];

    let geom = Geometry::new(dims, spacing, origin)?;
    let n = geom.len();
    let start = vox_offset as usize;
    let expected = start + n * dtype.size();
    if bytes.len() < expected {
        return Err(NiftiError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let raw = &bytes[start..expected];
    let data = match dtype {
        DataType::U8 => VoxelData::U8(raw.to_vec()),
        DataType::I16 => VoxelData::I16(raw.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect()),
        DataType::F32 => VoxelData::F32(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
    };
    let mut grid = VoxelGrid { geom, data };

    let identity = scl_slope == 1.0 && scl_inter == 0.0;
    if scl_slope != 0.0 && scl_slope.is_finite() && !identity {
        let scaled = (0..n)
            .map(|i| (grid.data.value(i) * scl_slope as f64 + scl_inter as f64) as f32)
            .collect();
        grid.data = VoxelData::F32(scaled);
    }
    Ok(grid)
}

/// Encode as a single-file NIfTI-1 image: header, 4-byte empty extension, data.
pub fn encode(grid: &VoxelGrid) -> Vec<u8> {
    let dtype = grid.dtype();
    let mut out = vec![0u8; DATA_OFFSET + grid.geom.len() * dtype.size()];
    let h = &mut out[..HEADER_SIZE];
    wr_i32(h, 0, HEADER_SIZE as i32);
    h[38] = b'r';
    let dims = grid.geom.dims;
    let dim = [3i16, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        wr_i16(h, 40 + 2 * i, *d);
    }
    wr_i16(h, 70, dtype.code());
    wr_i16(h, 72, (dtype.size() * 8) as i16);
    // pixdim[0] is qfac
    wr_f32(h, 76, 1.0);
    for a in 0..3 {
        wr_f32(h, 80 + 4 * a, grid.geom.spacing[a] as f32);
    }
    for a in 4..8 {
        wr_f32(h, 76 + 4 * a, 1.0);
    }
    wr_f32(h, 108, DATA_OFFSET as f32);
    wr_f32(h, 112, 1.0);
    wr_f32(h, 116, 0.0);
    // xyzt_units: mm
    h[123] = 2;
    // qform_code scanner, sform_code unknown
    wr_i16(h, 252, 1);
    wr_i16(h, 254, 0);
    for a in 0..3 {
        wr_f32(h, 268 + 4 * a, grid.geom.origin[a] as f32);
    }
    h[344..348].copy_from_slice(&MAGIC);

    let body = &mut out[DATA_OFFSET..];
    match &grid.data {
        VoxelData::U8(v) => body.copy_from_slice(v),
        VoxelData::I16(v) => {
            for (dst, x) in body.chunks_exact_mut(2).zip(v) {
                dst.copy_from_slice(&x.to_le_bytes());
            }
        }
        VoxelData::F32(v) => {
            for (dst, x) in body.chunks_exact_mut(4).zip(v) {
                dst.copy_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<VoxelGrid, NiftiError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| NiftiError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

pub fn write_nifti(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let path = path.as_ref();
    fs::write(path, encode(grid)).map_err(|source| NiftiError::Io {
        path: path.to_path_buf(),
        source,
    })
}
