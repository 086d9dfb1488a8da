use std::io::{Read, Write};
use std::path::Path;

use super::dense::{Activation, Dense, DenseNet};
use super::matrix::Matrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OWNN";
const VERSION: u32 = 1;

/// Writes `net` in the little-endian binary network format.
pub fn write_net<W: Write>(net: &DenseNet, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for layer in &net.layers {
        w.write_all(&(layer.weight.rows() as u32).to_le_bytes())?;
        w.write_all(&(layer.weight.cols() as u32).to_le_bytes())?;
        w.write_all(&[layer.activation.code()])?;
        for x in layer.weight.data().iter().chain(layer.bias.data()) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Reads a network written by [`write_net`]. `origin` only labels errors.
pub fn read_net<R: Read>(r: &mut R, origin: &Path) -> Result<DenseNet> {
    let bad = |reason: String| Error::format(origin, reason);
    let eof = |e: std::io::Error| Error::format(origin, format!("truncated network data ({e})"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != MAGIC {
        return Err(bad("not a network checkpoint".into()));
    }
    let version = read_u32(r).map_err(eof)?;
    if version != VERSION {
        return Err(bad(format!("unsupported network format version {version}")));
    }
    let n_layers = read_u32(r).map_err(eof)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(bad(format!("implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = read_u32(r).map_err(eof)? as usize;
        let cols = read_u32(r).map_err(eof)? as usize;
        if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 1 << 26 {
            return Err(bad(format!("implausible layer shape {rows}x{cols}")));
        }
        let mut code = [0u8; 1];
        r.read_exact(&mut code).map_err(eof)?;
        let activation = Activation::from_code(code[0])
            .ok_or_else(|| bad(format!("unknown activation code {}", code[0])))?;
        let weight = Matrix::from_vec(rows, cols, read_f64s(r, rows * cols).map_err(eof)?);
        let bias = Matrix::from_vec(1, cols, read_f64s(r, cols).map_err(eof)?);
        layers.push(Dense {
            weight,
            bias,
            activation,
        });
    }
    let net = DenseNet::from_layers(layers).map_err(|e| bad(e.to_string()))?;
    if !net.is_finite() {
        return Err(bad("non-finite weights".into()));
    }
    Ok(net)
}

pub fn save_net(net: &DenseNet, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_net(net, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_net(path: &Path) -> Result<DenseNet> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingCheckpoint(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    let mut cursor = bytes.as_slice();
    let net = read_net(&mut cursor, path)?;
    if !cursor.is_empty() {
        return Err(Error::format(path, "trailing bytes after network"));
    }
    Ok(net)
}
