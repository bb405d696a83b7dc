//! NIfTI-1 single-file (`.nii`, `.nii.gz`) and pair (`.hdr`/`.img`) volumes.
//!
//! Only 3D volumes of the common scalar datatypes are handled. Trailing
//! singleton dimensions (e.g. a 4D file with one frame) are dropped.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::{Array3, ShapeBuilder};

use crate::error::{Error, Result};
use crate::volume::{Affine, BrainMask, Stack};

pub const HEADER_SIZE: usize = 348;
const VOX_OFFSET_SINGLE: usize = 352;

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Int32 => 8,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => Datatype::Uint8,
            4 => Datatype::Int16,
            8 => Datatype::Int32,
            16 => Datatype::Float32,
            64 => Datatype::Float64,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    pub fn size(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Int32 | Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn take<const N: usize>(&self, offset: usize) -> Result<[u8; N]> {
        let slice = self
            .bytes
            .get(offset..offset + N)
            .ok_or_else(|| Error::parse(offset, "header truncated"))?;
        let mut out = [0u8; N];
        out.copy_from_slice(slice);
        if self.endian == Endian::Big {
            out.reverse();
        }
        Ok(out)
    }

    fn i16(&self, offset: usize) -> Result<i16> {
        self.take::<2>(offset).map(i16::from_le_bytes)
    }

    fn i32(&self, offset: usize) -> Result<i32> {
        self.take::<4>(offset).map(i32::from_le_bytes)
    }

    fn f32(&self, offset: usize) -> Result<f32> {
        self.take::<4>(offset).map(f32::from_le_bytes)
    }
}

/// Parsed subset of a NIfTI-1 header.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub dims: [usize; 3],
    pub datatype: Datatype,
    pub spacing: [f64; 3],
    pub vox_offset: usize,
    pub scl_slope: f64,
    pub scl_inter: f64,
    pub affine: Affine,
    pub single_file: bool,
    big_endian: bool,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::parse(
            bytes.len(),
            "file shorter than a NIfTI-1 header",
        ));
    }
    let mut r = Reader {
        bytes,
        endian: Endian::Little,
    };
    if r.i32(offsets::SIZEOF_HDR)? != HEADER_SIZE as i32 {
        r.endian = Endian::Big;
        if r.i32(offsets::SIZEOF_HDR)? != HEADER_SIZE as i32 {
            return Err(Error::parse(offsets::SIZEOF_HDR, "sizeof_hdr is not 348"));
        }
    }
    let magic = &bytes[offsets::MAGIC..offsets::MAGIC + 4];
    let single_file = match magic {
        b"n+1\0" => true,
        b"ni1\0" => false,
        _ => {
            return Err(Error::parse(
                offsets::MAGIC,
                format!("bad magic {:?}", String::from_utf8_lossy(&magic[..3])),
            ))
        }
    };

    let ndim = r.i16(offsets::DIM)?;
    if !(1..=7).contains(&ndim) {
        return Err(Error::parse(
            offsets::DIM,
            format!("dim[0] = {ndim} out of range"),
        ));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for i in 1..=ndim as usize {
        let d = r.i16(offsets::DIM + 2 * i)?;
        if d < 1 {
            return Err(Error::parse(
                offsets::DIM + 2 * i,
                format!("dim[{i}] = {d}"),
            ));
        }
        dims.push(d as usize);
    }
    while dims.len() > 3 && dims.last() == Some(&1) {
        dims.pop();
    }
    if dims.len() != 3 {
        return Err(Error::Dimension(format!(
            "expected a 3D volume, got dimensions {dims:?}"
        )));
    }

    let datatype = Datatype::from_code(r.i16(offsets::DATATYPE)?)?;
    let bitpix = r.i16(offsets::BITPIX)?;
    if bitpix as usize != datatype.size() * 8 {
        return Err(Error::parse(
            offsets::BITPIX,
            format!("bitpix {bitpix} inconsistent with datatype"),
        ));
    }

    let mut spacing = [0.0; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        let p = r.f32(offsets::PIXDIM + 4 * (i + 1))? as f64;
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::parse(
                offsets::PIXDIM + 4 * (i + 1),
                format!("pixdim[{}] = {p} is not positive", i + 1),
            ));
        }
        *s = p;
    }

    let vox_offset_raw = r.f32(offsets::VOX_OFFSET)?;
    let vox_offset = if single_file {
        if vox_offset_raw < HEADER_SIZE as f32 {
            return Err(Error::parse(
                offsets::VOX_OFFSET,
                "vox_offset inside header",
            ));
        }
        vox_offset_raw as usize
    } else {
        vox_offset_raw.max(0.0) as usize
    };

    let scl_slope = r.f32(offsets::SCL_SLOPE)? as f64;
    let scl_inter = r.f32(offsets::SCL_INTER)? as f64;

    let sform_code = r.i16(offsets::SFORM_CODE)?;
    let qform_code = r.i16(offsets::QFORM_CODE)?;
    let affine = if sform_code > 0 {
        let mut a = [[0.0; 4]; 4];
        for (row, line) in a.iter_mut().take(3).enumerate() {
            for (col, v) in line.iter_mut().enumerate() {
                *v = r.f32(offsets::SROW_X + 16 * row + 4 * col)? as f64;
            }
        }
        a[3][3] = 1.0;
        a
    } else if qform_code > 0 {
        let q = |i: usize| r.f32(offsets::QUATERN_B + 4 * i).map(|v| v as f64);
        let o = |i: usize| r.f32(offsets::QOFFSET_X + 4 * i).map(|v| v as f64);
        let qfac = if r.f32(offsets::PIXDIM)? < 0.0 {
            -1.0
        } else {
            1.0
        };
        quaternion_affine([q(0)?, q(1)?, q(2)?], [o(0)?, o(1)?, o(2)?], spacing, qfac)
    } else {
        crate::volume::identity_affine(spacing)
    };

    Ok(Header {
        dims: [dims[0], dims[1], dims[2]],
        datatype,
        spacing,
        vox_offset,
        scl_slope,
        scl_inter,
        affine,
        single_file,
        big_endian: r.endian == Endian::Big,
    })
}

fn quaternion_affine(bcd: [f64; 3], offset: [f64; 3], spacing: [f64; 3], qfac: f64) -> Affine {
    let [b, c, d] = bcd;
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let rot = [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - c * c - b * b,
        ],
    ];
    let scale = [spacing[0], spacing[1], spacing[2] * qfac];
    let mut out = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = rot[i][j] * scale[j];
        }
        out[i][3] = offset[i];
    }
    out[3][3] = 1.0;
    out
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::parse(0, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn companion_image(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    if let Some(stem) = s.strip_suffix(".hdr.gz") {
        PathBuf::from(format!("{stem}.img.gz"))
    } else if let Some(stem) = s.strip_suffix(".hdr") {
        PathBuf::from(format!("{stem}.img"))
    } else {
        path.with_extension("img")
    }
}

fn decode_voxels(header: &Header, data: &[u8], data_offset: usize) -> Result<Vec<f64>> {
    let n: usize = header.dims.iter().product();
    let size = header.datatype.size();
    let needed = n * size;
    let body = data.get(data_offset..data_offset + needed).ok_or_else(|| {
        Error::parse(
            data.len(),
            format!("voxel data truncated, need {needed} bytes"),
        )
    })?;
    let big = header.big_endian;
    let mut out = Vec::with_capacity(n);
    for chunk in body.chunks_exact(size) {
        let mut buf = [0u8; 8];
        buf[..size].copy_from_slice(chunk);
        if big {
            buf[..size].reverse();
        }
        let v = match header.datatype {
            Datatype::Uint8 => buf[0] as f64,
            Datatype::Int16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Datatype::Int32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Datatype::Float32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Datatype::Float64 => f64::from_le_bytes(buf),
        };
        out.push(v);
    }
    Ok(out)
}

/// Reads a header and the raw (scaled) voxel grid.
pub fn read_volume(path: &Path) -> Result<(Header, Array3<f64>)> {
    let bytes = read_maybe_gz(path)?;
    let header = parse_header(&bytes)?;
    let mut values = if header.single_file {
        decode_voxels(&header, &bytes, header.vox_offset)?
    } else {
        let img = read_maybe_gz(&companion_image(path))?;
        decode_voxels(&header, &img, header.vox_offset)?
    };
    if header.scl_slope != 0.0 && header.scl_slope.is_finite() {
        let inter = if header.scl_inter.is_finite() {
            header.scl_inter
        } else {
            0.0
        };
        for v in &mut values {
            *v = *v * header.scl_slope + inter;
        }
    }
    let [nx, ny, nz] = header.dims;
    let grid = Array3::from_shape_vec((nx, ny, nz).f(), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok((header, grid))
}

/// Loads a stack. Intensities are returned as floats with negative values
/// clamped to zero; subject and run ids are taken from BIDS entities in the
/// file name when present.
pub fn load_nifti(path: &Path) -> Result<Stack> {
    let (header, grid) = read_volume(path)?;
    let voxels = grid.mapv(|v| if v.is_finite() && v > 0.0 { v } else { 0.0 });
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let subject = crate::io::bids::entity(&name, "sub").unwrap_or_else(|| "sub-unknown".into());
    let run = crate::io::bids::entity(&name, "run").unwrap_or_else(|| "run-1".into());
    Stack::new(subject, run, voxels, header.spacing, header.affine)
}

pub fn load_mask(path: &Path) -> Result<BrainMask> {
    let (header, grid) = read_volume(path)?;
    BrainMask::new(grid.mapv(|v| v > 0.5), header.spacing, header.affine)
}

/// Serializes a volume as a little-endian single-file NIfTI-1 image.
pub fn encode_volume(
    data: &Array3<f64>,
    spacing: [f64; 3],
    affine: &Affine,
    datatype: Datatype,
) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET_SINGLE];
    let put = |h: &mut Vec<u8>, off: usize, b: &[u8]| h[off..off + b.len()].copy_from_slice(b);
    put(
        &mut h,
        offsets::SIZEOF_HDR,
        &(HEADER_SIZE as i32).to_le_bytes(),
    );
    let shape = data.shape();
    let dims: [i16; 8] = [
        3,
        shape[0] as i16,
        shape[1] as i16,
        shape[2] as i16,
        1,
        1,
        1,
        1,
    ];
    for (i, d) in dims.iter().enumerate() {
        put(&mut h, offsets::DIM + 2 * i, &d.to_le_bytes());
    }
    put(&mut h, offsets::DATATYPE, &datatype.code().to_le_bytes());
    put(
        &mut h,
        offsets::BITPIX,
        &((datatype.size() * 8) as i16).to_le_bytes(),
    );
    let pixdim: [f32; 8] = [
        1.0,
        spacing[0] as f32,
        spacing[1] as f32,
        spacing[2] as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    for (i, p) in pixdim.iter().enumerate() {
        put(&mut h, offsets::PIXDIM + 4 * i, &p.to_le_bytes());
    }
    put(
        &mut h,
        offsets::VOX_OFFSET,
        &(VOX_OFFSET_SINGLE as f32).to_le_bytes(),
    );
    put(&mut h, offsets::SCL_SLOPE, &1.0f32.to_le_bytes());
    // mm + seconds
    h[offsets::XYZT_UNITS] = 2 | 8;
    put(&mut h, offsets::SFORM_CODE, &1i16.to_le_bytes());
    for (row, values) in affine.iter().take(3).enumerate() {
        for (col, v) in values.iter().enumerate() {
            put(
                &mut h,
                offsets::SROW_X + 16 * row + 4 * col,
                &(*v as f32).to_le_bytes(),
            );
        }
    }
    put(&mut h, offsets::MAGIC, b"n+1\0");

    let mut out = h;
    out.reserve(data.len() * datatype.size());
    // NIfTI stores x fastest.
    for k in 0..shape[2] {
        for j in 0..shape[1] {
            for i in 0..shape[0] {
                let v = data[[i, j, k]];
                match datatype {
                    Datatype::Uint8 => out.push(v.round().clamp(0.0, 255.0) as u8),
                    Datatype::Int16 => out.extend((v.round() as i16).to_le_bytes()),
                    Datatype::Int32 => out.extend((v.round() as i32).to_le_bytes()),
                    Datatype::Float32 => out.extend((v as f32).to_le_bytes()),
                    Datatype::Float64 => out.extend(v.to_le_bytes()),
                }
            }
        }
    }
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let gz = path.to_string_lossy().ends_with(".gz");
    let payload = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, payload).map_err(|e| Error::io(path, e))
}

/// Writes a stack as float32; gzip-compressed when the path ends in `.gz`.
pub fn save_nifti(stack: &Stack, path: &Path) -> Result<()> {
    write_bytes(
        path,
        &encode_volume(
            &stack.voxels,
            stack.spacing,
            &stack.affine,
            Datatype::Float32,
        ),
    )
}

pub fn save_mask(mask: &BrainMask, path: &Path) -> Result<()> {
    let data = mask.voxels.mapv(|v| if v { 1.0 } else { 0.0 });
    write_bytes(
        path,
        &encode_volume(&data, mask.spacing, &mask.affine, Datatype::Uint8),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Stack {
        let v = Array3::from_shape_fn((4, 4, 3), |(i, j, k)| (i + 4 * j + 16 * k) as f64 * 0.5);
        Stack::from_voxels(v, [1.0, 1.0, 3.0]).unwrap()
    }

    #[test]
    fn roundtrip_plain_and_gz() {
        let dir = tempfile::tempdir().unwrap();
        let s = tiny();
        for name in ["a.nii", "a.nii.gz"] {
            let p = dir.path().join(name);
            save_nifti(&s, &p).unwrap();
            let back = load_nifti(&p).unwrap();
            assert_eq!(back.voxels, s.voxels);
            assert_eq!(back.spacing, s.spacing);
            assert_eq!(back.affine, s.affine);
            assert_eq!(back.through_plane_axis, 2);
        }
    }

    #[test]
    fn bad_magic_is_parse_error() {
        let mut bytes = encode_volume(
            &tiny().voxels,
            [1.0, 1.0, 3.0],
            &tiny().affine,
            Datatype::Float32,
        );
        bytes[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"XXX\0");
        let err = parse_header(&bytes).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 344, .. }), "{err}");
    }

    #[test]
    fn unsupported_datatype() {
        let mut bytes = encode_volume(
            &tiny().voxels,
            [1.0, 1.0, 3.0],
            &tiny().affine,
            Datatype::Float32,
        );
        bytes[offsets::DATATYPE..offsets::DATATYPE + 2].copy_from_slice(&32i16.to_le_bytes());
        assert!(matches!(
            parse_header(&bytes),
            Err(Error::UnsupportedDatatype(32))
        ));
    }

    #[test]
    fn four_d_with_frames_rejected() {
        let mut bytes = encode_volume(
            &tiny().voxels,
            [1.0, 1.0, 3.0],
            &tiny().affine,
            Datatype::Float32,
        );
        bytes[offsets::DIM..offsets::DIM + 2].copy_from_slice(&4i16.to_le_bytes());
        bytes[offsets::DIM + 8..offsets::DIM + 10].copy_from_slice(&2i16.to_le_bytes());
        assert!(matches!(parse_header(&bytes), Err(Error::Dimension(_))));
        // a single trailing frame is dropped
        bytes[offsets::DIM + 8..offsets::DIM + 10].copy_from_slice(&1i16.to_le_bytes());
        assert_eq!(parse_header(&bytes).unwrap().dims, [4, 4, 3]);
    }

    #[test]
    fn truncated_data_is_parse_error() {
        let bytes = encode_volume(
            &tiny().voxels,
            [1.0, 1.0, 3.0],
            &tiny().affine,
            Datatype::Float32,
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.nii");
        fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_nifti(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn mask_roundtrip() {
        let s = tiny();
        let m = BrainMask::new(s.voxels.mapv(|v| v > 5.0), s.spacing, s.affine).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.nii.gz");
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
    }

    #[test]
    fn quaternion_identity() {
        let a = quaternion_affine([0.0; 3], [1.0, 2.0, 3.0], [0.5, 0.5, 3.0], 1.0);
        assert_eq!(a[0][0], 0.5);
        assert_eq!(a[2][2], 3.0);
        assert_eq!(a[1][3], 2.0);
    }
}
