//! Binary checkpoint format for pooled networks.
//!
//! Layout (all integers/floats little-endian):
//!
//! ```text
//! magic  b"MFPP"
//! u32    format version (currently 1)
//! u64    width m
//! u64    dim d
//! f64    trust radius
//! i8×m   frozen output signs (+1 / −1)
//! f64×md initial first-layer rows (row-major)
//! f64×md current first-layer rows (row-major)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{MfError, Result};

use super::DeepSetParams;

const MAGIC: &[u8; 4] = b"MFPP";
const VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, params: &DeepSetParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.width as u64).to_le_bytes())?;
    w.write_all(&(params.dim as u64).to_le_bytes())?;
    w.write_all(&params.radius.to_le_bytes())?;
    for &u in &params.out_signs {
        w.write_all(&[(u as i8) as u8])?;
    }
    for &x in &params.weights_init {
        w.write_all(&x.to_le_bytes())?;
    }
    for &x in &params.weights {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| MfError::Checkpoint(format!("truncated file: {e}")))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64_vec(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    read_exact(r, &mut bytes)?;
    let mut out = Vec::with_capacity(len);
    for chunk in bytes.chunks_exact(8) {
        let x = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        if !x.is_finite() {
            return Err(MfError::Checkpoint(format!("non-finite weight {x}")));
        }
        out.push(x);
    }
    Ok(out)
}

pub fn read_checkpoint(path: &Path) -> Result<DeepSetParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(MfError::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let mut vb = [0u8; 4];
    read_exact(&mut r, &mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(MfError::Checkpoint(format!("unsupported version {version}")));
    }
    let width = read_u64(&mut r)? as usize;
    let dim = read_u64(&mut r)? as usize;
    if width == 0 || dim == 0 || width.saturating_mul(dim) > (1 << 32) {
        return Err(MfError::Checkpoint(format!("implausible shape {width}×{dim}")));
    }
    let mut rb = [0u8; 8];
    read_exact(&mut r, &mut rb)?;
    let radius = f64::from_le_bytes(rb);
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(MfError::Checkpoint(format!("bad radius {radius}")));
    }
    let mut sign_bytes = vec![0u8; width];
    read_exact(&mut r, &mut sign_bytes)?;
    let mut out_signs = Vec::with_capacity(width);
    for b in sign_bytes {
        match b as i8 {
            1 => out_signs.push(1.0),
            -1 => out_signs.push(-1.0),
            other => return Err(MfError::Checkpoint(format!("sign byte {other} not ±1"))),
        }
    }
    let weights_init = read_f64_vec(&mut r, width * dim)?;
    let weights = read_f64_vec(&mut r, width * dim)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(MfError::Checkpoint("trailing bytes after weights".into()));
    }
    Ok(DeepSetParams { width, dim, out_signs, weights, weights_init, radius })
}
