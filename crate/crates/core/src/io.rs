//! On-disk tensor format and grayscale previews.
//!
//! The "PFT1" layout is fixed byte for byte: 4 magic bytes, a little-endian
//! u32 rank, `rank` little-endian u32 dimensions, then the row-major f32
//! payload in little-endian order. Rank is capped at 8.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"PFT1";
const MAX_RANK: u32 = 8;

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    if t.rank() as u32 > MAX_RANK {
        return Err(Error::Format(format!(
            "rank {} exceeds the maximum of {MAX_RANK}",
            t.rank()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected \"PFT1\"",
            path.display(),
            magic
        )));
    }
    let mut buf4 = [0u8; 4];
    read_exact(&mut r, &mut buf4, path, "rank")?;
    let rank = u32::from_le_bytes(buf4);
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format(format!(
            "{}: rank {rank} outside 1..={MAX_RANK}",
            path.display()
        )));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        read_exact(&mut r, &mut buf4, path, "dims")?;
        shape.push(u32::from_le_bytes(buf4) as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        read_exact(&mut r, &mut buf4, path, "payload")?;
        data.push(f32::from_le_bytes(buf4));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after payload",
            path.display()
        )));
    }
    let t = Tensor::new(shape, data)?;
    t.validate_finite(&format!("{}", path.display()))?;
    Ok(t)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path, section: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| {
        Error::Format(format!(
            "{}: truncated while reading {section}",
            path.display()
        ))
    })
}

/// Writes a rank-2 (or [1,H,W]) tensor as a binary PGM (P5, maxval 255).
///
/// The display window [lo, hi] maps linearly to [0, 255]; values outside
/// the window saturate.
pub fn write_pgm(path: &Path, t: &Tensor, lo: f32, hi: f32) -> Result<()> {
    if hi <= lo {
        return Err(Error::Domain(format!("display window [{lo}, {hi}] is empty")));
    }
    let (h, w) = image_dims(t)?;
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    let scale = 255.0 / (hi - lo);
    let bytes: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| ((v - lo) * scale).clamp(0.0, 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Interprets a tensor as a single grayscale image, returning (height, width).
pub fn image_dims(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] => Ok((*h, *w)),
        [1, h, w] => Ok((*h, *w)),
        other => Err(Error::Dimension(format!(
            "expected [H,W] or [1,H,W] image, got {other:?}"
        ))),
    }
}
