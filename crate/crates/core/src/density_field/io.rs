//! Binary grid format (little-endian):
//!
//! ```text
//! offset  size        field
//! 0       4           magic "FNGP"
//! 4       4           u32 version (1)
//! 8       12          u32 nx, ny, nz
//! 20      12          f32 bbox_min[3]
//! 32      12          f32 bbox_max[3]
//! 44      4*nx*ny*nz  f32 sigma, x fastest, then y, then z
//! ```

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::DensityGrid;
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"FNGP";
pub const GRID_VERSION: u32 = 1;
const HEADER_LEN: usize = 44;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::BinaryFormat {
        offset: offset as u64,
        message: message.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take4(&mut self, what: &str) -> Result<[u8; 4]> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| {
            format_err(self.bytes.len(), format!("truncated header while reading {what}"))
        })?;
        self.pos = end;
        Ok(chunk.try_into().unwrap())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take4(what).map(u32::from_le_bytes)
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        self.take4(what).map(f32::from_le_bytes)
    }
}

/// Decodes a grid from an in-memory buffer.
pub fn decode_grid(bytes: &[u8]) -> Result<DensityGrid> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take4("magic")?;
    if &magic != GRID_MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}, expected \"FNGP\"")));
    }
    let version = cur.u32("version")?;
    if version != GRID_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        *d = cur.u32("dimensions")? as usize;
        if *d == 0 {
            return Err(format_err(8 + 4 * a, "zero grid dimension"));
        }
    }
    let mut bbox_min = [0f32; 3];
    let mut bbox_max = [0f32; 3];
    for v in bbox_min.iter_mut() {
        *v = cur.f32("bbox_min")?;
    }
    for v in bbox_max.iter_mut() {
        *v = cur.f32("bbox_max")?;
    }
    for a in 0..3 {
        if !(bbox_min[a].is_finite() && bbox_max[a].is_finite() && bbox_max[a] > bbox_min[a]) {
            return Err(format_err(20 + 4 * a, format!("invalid bounding box on axis {a}")));
        }
    }

    let payload_len = dims
        .iter()
        .try_fold(4usize, |acc, &n| acc.checked_mul(n))
        .filter(|&n| n <= usize::MAX - HEADER_LEN)
        .ok_or_else(|| format_err(8, format!("dimensions {dims:?} overflow")))?;
    let expected = HEADER_LEN + payload_len;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(expected, "trailing bytes after sigma payload"));
    }
    let mut sigma = Vec::with_capacity(payload_len / 4);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(HEADER_LEN + 4 * i, "non-finite sigma value"));
        }
        sigma.push(v);
    }
    DensityGrid::from_parts(dims, bbox_min, bbox_max, sigma)
}

pub fn encode_grid(grid: &DensityGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.sigma().len());
    write_grid(&mut out, grid).expect("writing to a Vec cannot fail");
    out
}

pub fn write_grid<W: Write>(mut w: W, grid: &DensityGrid) -> std::io::Result<()> {
    let (min, max) = grid.raw_bbox();
    w.write_all(GRID_MAGIC)?;
    w.write_all(&GRID_VERSION.to_le_bytes())?;
    for d in grid.dims() {
        let d = u32::try_from(d)
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in min.iter().chain(max.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in grid.sigma() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid<R: Read>(mut r: R) -> Result<DensityGrid> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<reader>", e))?;
    decode_grid(&bytes)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<DensityGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}

pub fn save_grid(grid: &DensityGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_grid(&mut w, grid)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
