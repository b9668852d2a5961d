//! Single-file NIfTI-1 (`n+1`) decoding and encoding.
//!
//! Only little-endian headers are accepted. Gzip input is detected from the
//! `1f 8b` prefix. Supported payload types are `u8`, `i16` and `f32`; labels
//! are written as `u8` and images as `f32`. Orientation (qform/sform) is not
//! interpreted beyond `pixdim`.

use std::io::{Read, Write};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::NiftiError;
use crate::volcore::{Dims, LabelMap, Spacing, Volume, MAX_LABEL};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const SINGLE_FILE_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_MAGIC: usize = 344;

/// Subset of the NIfTI-1 header this crate reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub pixdim: [f32; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: f32,
    pub magic: [u8; 4],
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn bytes_per_voxel(datatype: i16) -> Option<(usize, i16)> {
    match datatype {
        DT_UINT8 => Some((1, 8)),
        DT_INT16 => Some((2, 16)),
        DT_FLOAT32 => Some((4, 32)),
        _ => None,
    }
}

impl NiftiHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self, NiftiError> {
        if bytes.len() < HEADER_SIZE {
            return Err(NiftiError::Truncated {
                expected: HEADER_SIZE,
                found: bytes.len(),
            });
        }
        let raw = [bytes[0], bytes[1], bytes[2], bytes[3]];
        let sizeof_hdr = i32::from_le_bytes(raw);
        if sizeof_hdr != HEADER_SIZE as i32 {
            if i32::from_be_bytes(raw) == HEADER_SIZE as i32 {
                return Err(NiftiError::BigEndian);
            }
            return Err(NiftiError::HeaderSize(sizeof_hdr));
        }
        let magic = [
            bytes[OFF_MAGIC],
            bytes[OFF_MAGIC + 1],
            bytes[OFF_MAGIC + 2],
            bytes[OFF_MAGIC + 3],
        ];
        if magic != MAGIC {
            return Err(NiftiError::BadMagic(magic));
        }
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = i16_at(bytes, OFF_DIM + 2 * i);
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = f32_at(bytes, OFF_PIXDIM + 4 * i);
        }
        Ok(NiftiHeader {
            dim,
            pixdim,
            datatype: i16_at(bytes, OFF_DATATYPE),
            bitpix: i16_at(bytes, OFF_BITPIX),
            scl_slope: f32_at(bytes, OFF_SCL_SLOPE),
            scl_inter: f32_at(bytes, OFF_SCL_INTER),
            vox_offset: f32_at(bytes, OFF_VOX_OFFSET),
            magic,
        })
    }

    /// Grid dimensions and spacing in slice-major order.
    pub fn geometry(&self) -> Result<(Dims, Spacing), NiftiError> {
        let rank = self.dim[0];
        if !(rank == 2 || rank == 3) {
            return Err(NiftiError::InvalidDim(format!("dim[0] = {rank}, expected 2 or 3")));
        }
        for i in 1..=rank as usize {
            if self.dim[i] < 1 {
                return Err(NiftiError::InvalidDim(format!("dim[{i}] = {}", self.dim[i])));
            }
            let p = self.pixdim[i];
            if !(p.is_finite() && p > 0.0) {
                return Err(NiftiError::InvalidDim(format!("pixdim[{i}] = {p}")));
            }
        }
        let slices = if rank == 3 { self.dim[3] as usize } else { 1 };
        let dims = Dims {
            slices,
            height: self.dim[2] as usize,
            width: self.dim[1] as usize,
        };
        let dz = if rank == 3 { self.pixdim[3] as f64 } else { 1.0 };
        let spacing = Spacing {
            dz,
            dy: self.pixdim[2] as f64,
            dx: self.pixdim[1] as f64,
        };
        Ok((dims, spacing))
    }

    fn for_grid(dims: Dims, spacing: Spacing, datatype: i16) -> Self {
        let (_, bitpix) = bytes_per_voxel(datatype).expect("writer datatype");
        let mut dim = [1i16; 8];
        dim[0] = 3;
        dim[1] = dims.width as i16;
        dim[2] = dims.height as i16;
        dim[3] = dims.slices as i16;
        let mut pixdim = [1f32; 8];
        pixdim[1] = spacing.dx as f32;
        pixdim[2] = spacing.dy as f32;
        pixdim[3] = spacing.dz as f32;
        NiftiHeader {
            dim,
            pixdim,
            datatype,
            bitpix,
            scl_slope: 1.0,
            scl_inter: 0.0,
            vox_offset: SINGLE_FILE_OFFSET as f32,
            magic: MAGIC,
        }
    }

    /// Header bytes followed by the empty extension flag.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = vec![0u8; SINGLE_FILE_OFFSET];
        b[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
        for (i, d) in self.dim.iter().enumerate() {
            b[OFF_DIM + 2 * i..OFF_DIM + 2 * i + 2].copy_from_slice(&d.to_le_bytes());
        }
        b[OFF_DATATYPE..OFF_DATATYPE + 2].copy_from_slice(&self.datatype.to_le_bytes());
        b[OFF_BITPIX..OFF_BITPIX + 2].copy_from_slice(&self.bitpix.to_le_bytes());
        for (i, p) in self.pixdim.iter().enumerate() {
            b[OFF_PIXDIM + 4 * i..OFF_PIXDIM + 4 * i + 4].copy_from_slice(&p.to_le_bytes());
        }
        b[OFF_VOX_OFFSET..OFF_VOX_OFFSET + 4].copy_from_slice(&self.vox_offset.to_le_bytes());
        b[OFF_SCL_SLOPE..OFF_SCL_SLOPE + 4].copy_from_slice(&self.scl_slope.to_le_bytes());
        b[OFF_SCL_INTER..OFF_SCL_INTER + 4].copy_from_slice(&self.scl_inter.to_le_bytes());
        // NIFTI_UNITS_MM
        b[OFF_XYZT_UNITS] = 2;
        b[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(&self.magic);
        b
    }
}

fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>, NiftiError> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| NiftiError::Gzip(e.to_string()))?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

/// Decoded voxel grid with scaling applied.
#[derive(Debug, Clone)]
pub struct NiftiGrid {
    pub header: NiftiHeader,
    pub dims: Dims,
    pub spacing: Spacing,
    pub values: Vec<f64>,
}

pub fn decode(bytes: &[u8]) -> Result<NiftiGrid, NiftiError> {
    let bytes = maybe_gunzip(bytes)?;
    let header = NiftiHeader::parse(&bytes)?;
    let (dims, spacing) = header.geometry()?;
    let (width, bitpix) =
        bytes_per_voxel(header.datatype).ok_or(NiftiError::UnsupportedDatatype(header.datatype))?;
    if header.bitpix != bitpix {
        return Err(NiftiError::InvalidDim(format!(
            "bitpix {} does not match datatype {}",
            header.bitpix, header.datatype
        )));
    }
    let offset = header.vox_offset;
    if !(offset.is_finite() && offset >= HEADER_SIZE as f32) {
        return Err(NiftiError::InvalidDim(format!("vox_offset {offset}")));
    }
    let offset = offset as usize;
    let n = dims.len();
    let expected = offset + n * width;
    if bytes.len() < expected {
        return Err(NiftiError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[offset..expected];
    let mut values: Vec<f64> = match header.datatype {
        DT_UINT8 => payload.iter().map(|&v| v as f64).collect(),
        DT_INT16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    };
    let slope = header.scl_slope as f64;
    if slope != 0.0 && slope.is_finite() {
        let inter = header.scl_inter as f64;
        if slope != 1.0 || inter != 0.0 {
            for v in &mut values {
                *v = *v * slope + inter;
            }
        }
    }
    Ok(NiftiGrid {
        header,
        dims,
        spacing,
        values,
    })
}

pub fn read_volume(bytes: &[u8], case_id: &str) -> Result<Volume, NiftiError> {
    let grid = decode(bytes)?;
    if let Some(bad) = grid.values.iter().find(|v| !v.is_finite()) {
        return Err(NiftiError::InvalidDim(format!("non-finite voxel {bad}")));
    }
    let data = grid.values.iter().map(|&v| v as f32).collect();
    Volume::new(grid.dims, grid.spacing, data, case_id).map_err(|e| NiftiError::InvalidDim(e.to_string()))
}

pub fn read_label_map(bytes: &[u8]) -> Result<LabelMap, NiftiError> {
    let grid = decode(bytes)?;
    let mut labels = Vec::with_capacity(grid.values.len());
    for &v in &grid.values {
        if !(v.fract() == 0.0 && (0.0..=MAX_LABEL as f64).contains(&v)) {
            return Err(NiftiError::InvalidLabel(v));
        }
        labels.push(v as u8);
    }
    LabelMap::new(grid.dims, grid.spacing, labels).map_err(|e| NiftiError::InvalidDim(e.to_string()))
}

pub fn write_volume(v: &Volume) -> Vec<u8> {
    let mut out = NiftiHeader::for_grid(v.dims(), v.spacing(), DT_FLOAT32).to_bytes();
    out.reserve(v.data().len() * 4);
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn write_label_map(lm: &LabelMap) -> Vec<u8> {
    let mut out = NiftiHeader::for_grid(lm.dims(), lm.spacing(), DT_UINT8).to_bytes();
    out.extend_from_slice(lm.labels());
    out
}

pub fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory write")
}
