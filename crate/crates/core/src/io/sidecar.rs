//! BMVS motion sidecar files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "BMVS"
//!      4     4  version (u32) = 1
//!      8     4  grid_w (u32)
//!     12     4  grid_h (u32)
//!     16     4  block_size (u32)
//!     20     4  frame_count (u32)
//!     24     -  frame_count * grid_h * grid_w (dx, dy) pairs of i16,
//!               frames in order, blocks in raster order
//! ```
//!
//! Frame 0 has no predecessor and its field is all zero. Vectors use the
//! same sign convention as [`MotionField`].

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{MotionField, Offset};

pub const MAGIC: [u8; 4] = *b"BMVS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSidecar {
    grid_w: usize,
    grid_h: usize,
    block_size: usize,
    fields: Vec<MotionField>,
}

fn sidecar_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Sidecar {
        offset: offset as u64,
        message: message.into(),
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v)
        .map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit in 32 bits")))
}

fn to_i16(v: f64) -> Option<i16> {
    (v.fract() == 0.0 && v >= i16::MIN as f64 && v <= i16::MAX as f64).then_some(v as i16)
}

impl MotionSidecar {
    pub fn new(
        grid_w: usize,
        grid_h: usize,
        block_size: usize,
        fields: Vec<MotionField>,
    ) -> Result<Self> {
        if grid_w == 0 || grid_h == 0 || block_size == 0 {
            return Err(Error::Dimensions(format!(
                "sidecar grid {grid_w}x{grid_h} with block size {block_size}"
            )));
        }
        for (i, f) in fields.iter().enumerate() {
            if (f.grid_w(), f.grid_h(), f.block_size()) != (grid_w, grid_h, block_size) {
                return Err(Error::Mismatch(format!(
                    "field {i} is a {}x{} grid of {} px blocks, sidecar is {grid_w}x{grid_h} of {block_size} px",
                    f.grid_w(),
                    f.grid_h(),
                    f.block_size()
                )));
            }
            if let Some(v) = f
                .vectors()
                .iter()
                .find(|v| to_i16(v.dx).is_none() || to_i16(v.dy).is_none())
            {
                return Err(Error::InvalidArgument(format!(
                    "field {i}: vector {v} is not a 16-bit integer offset"
                )));
            }
        }
        if fields.first().is_some_and(|f| !f.is_zero()) {
            return Err(Error::InvalidArgument("field 0 must be all zero".into()));
        }
        Ok(Self {
            grid_w,
            grid_h,
            block_size,
            fields,
        })
    }

    /// Takes the grid from the first field.
    pub fn from_fields(fields: Vec<MotionField>) -> Result<Self> {
        let first = fields.first().ok_or_else(|| {
            Error::InvalidArgument("no motion fields; use MotionSidecar::new".into())
        })?;
        let (w, h, b) = (first.grid_w(), first.grid_h(), first.block_size());
        Self::new(w, h, b, fields)
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn fields(&self) -> &[MotionField] {
        &self.fields
    }

    pub fn into_fields(self) -> Vec<MotionField> {
        self.fields
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let blocks = self.grid_w * self.grid_h;
        let mut out = Vec::with_capacity(HEADER_LEN + self.fields.len() * blocks * 4);
        out.extend_from_slice(&MAGIC);
        for v in [
            VERSION,
            to_u32(self.grid_w, "grid width")?,
            to_u32(self.grid_h, "grid height")?,
            to_u32(self.block_size, "block size")?,
            to_u32(self.fields.len(), "frame count")?,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for f in &self.fields {
            for v in f.vectors() {
                // Checked at construction.
                out.extend_from_slice(&(v.dx as i16).to_le_bytes());
                out.extend_from_slice(&(v.dy as i16).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(sidecar_err(
                bytes.len(),
                format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
            ));
        }
        if bytes[..4] != MAGIC {
            return Err(sidecar_err(
                0,
                format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4])),
            ));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != VERSION {
            return Err(sidecar_err(4, format!("unsupported version {version}")));
        }
        let (grid_w, grid_h, block_size, count) = (word(8), word(12), word(16), word(20));
        for (at, v, what) in [
            (8, grid_w, "grid width"),
            (12, grid_h, "grid height"),
            (16, block_size, "block size"),
        ] {
            if v == 0 {
                return Err(sidecar_err(at, format!("{what} is zero")));
            }
        }
        let blocks = grid_w as u64 * grid_h as u64;
        let payload = blocks * count as u64 * 4;
        let available = (bytes.len() - HEADER_LEN) as u64;
        if available < payload {
            return Err(sidecar_err(
                bytes.len(),
                format!("truncated payload: {available} of {payload} bytes"),
            ));
        }
        if available > payload {
            return Err(sidecar_err(
                HEADER_LEN + payload as usize,
                format!("{} trailing bytes", available - payload),
            ));
        }
        let (gw, gh, bs) = (grid_w as usize, grid_h as usize, block_size as usize);
        let blocks = blocks as usize;
        let mut fields = Vec::with_capacity(count as usize);
        for (i, frame) in bytes[HEADER_LEN..].chunks_exact(blocks * 4).enumerate() {
            let vectors: Vec<Offset> = frame
                .chunks_exact(4)
                .map(|p| {
                    Offset::new(
                        i16::from_le_bytes([p[0], p[1]]) as f64,
                        i16::from_le_bytes([p[2], p[3]]) as f64,
                    )
                })
                .collect();
            if i == 0 && vectors.iter().any(|v| *v != Offset::ZERO) {
                return Err(sidecar_err(HEADER_LEN, "field 0 is not all zero"));
            }
            fields.push(MotionField::new(gw, gh, bs, vectors)?);
        }
        Ok(Self {
            grid_w: gw,
            grid_h: gh,
            block_size: bs,
            fields,
        })
    }
}

pub fn write_sidecar(path: impl AsRef<Path>, sidecar: &MotionSidecar) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, sidecar.to_bytes()?).map_err(Error::io(path))
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<MotionSidecar> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::io(path))?;
    MotionSidecar::from_bytes(&bytes)
}
