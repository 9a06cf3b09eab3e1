//! Model checkpoint file.
//!
//! Layout (all integers `u32` little-endian, all values `f32` little-endian):
//!
//! ```text
//! magic            4 bytes  "FFSM"
//! version          u32      1
//! blocks_per_stage u32
//! patch_size       u32
//! widths           3 x u32
//! tensor_count     u32
//! tensor_count times:
//!     rank         u32
//!     dims         rank x u32
//!     values       prod(dims) x f32
//! ```
//!
//! Tensors appear in declaration order (stem, stage blocks, head), followed
//! by the running mean and running variance of every normalization layer in
//! the same order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::network::{Architecture, ScorerModel};
use super::tensor::{Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FFSM";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_tensor(w: &mut impl Write, shape: &[usize], values: impl Iterator<Item = f32>) -> std::io::Result<()> {
    put_u32(w, shape.len() as u32)?;
    for &d in shape {
        put_u32(w, d as u32)?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<T: Real>(model: &ScorerModel<T>, w: &mut impl Write) -> std::io::Result<()> {
    let arch = model.architecture();
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, arch.blocks_per_stage as u32)?;
    put_u32(w, arch.patch_size as u32)?;
    for &width in &arch.widths {
        put_u32(w, width as u32)?;
    }
    let stats = model.running_mean().len();
    put_u32(w, (model.params().len() + 2 * stats) as u32)?;
    for t in model.params() {
        put_tensor(w, &t.shape, t.data.iter().map(|v| v.to_f64() as f32))?;
    }
    for (mean, var) in model.running_mean().iter().zip(model.running_var()) {
        put_tensor(w, &[mean.len()], mean.iter().map(|v| v.to_f64() as f32))?;
        put_tensor(w, &[var.len()], var.iter().map(|v| v.to_f64() as f32))?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> std::io::Result<u32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn tensor<T: Real>(&mut self) -> std::io::Result<Tensor<T>> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<std::io::Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let mut bytes = vec![0u8; len * 4];
        self.inner.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        Ok(Tensor { shape, data })
    }
}

/// Parses a checkpoint. `context` names the source in error messages.
pub fn read_checkpoint<T: Real>(r: impl Read, context: &Path) -> Result<ScorerModel<T>> {
    let format = |message: String| Error::Format {
        path: context.to_path_buf(),
        message,
    };
    let io = |e: std::io::Error| format(format!("truncated or unreadable checkpoint: {e}"));
    let mut r = Reader { inner: r };
    let mut magic = [0u8; 4];
    r.inner.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(format("not a scorer checkpoint (bad magic)".into()));
    }
    let version = r.u32().map_err(io)?;
    if version != CHECKPOINT_VERSION {
        return Err(format(format!("unsupported checkpoint version {version}")));
    }
    let blocks_per_stage = r.u32().map_err(io)? as usize;
    let patch_size = r.u32().map_err(io)? as usize;
    let mut widths = [0usize; 3];
    for w in &mut widths {
        *w = r.u32().map_err(io)? as usize;
    }
    let arch = Architecture {
        blocks_per_stage,
        patch_size,
        widths,
    };
    arch.validate().map_err(|e| format(e.to_string()))?;
    let count = r.u32().map_err(io)? as usize;
    let template = ScorerModel::<T>::new(arch, 0)?;
    let n_params = template.params().len();
    let n_stats = template.running_mean().len();
    if count != n_params + 2 * n_stats {
        return Err(format(format!(
            "expected {} tensors for this architecture, found {count}",
            n_params + 2 * n_stats
        )));
    }
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(r.tensor().map_err(io)?);
    }
    let mut mean = Vec::with_capacity(n_stats);
    let mut var = Vec::with_capacity(n_stats);
    for _ in 0..n_stats {
        mean.push(r.tensor::<T>().map_err(io)?.data);
        var.push(r.tensor::<T>().map_err(io)?.data);
    }
    ScorerModel::from_parts(arch, params, mean, var).map_err(|e| format(e.to_string()))
}

pub fn save_checkpoint<T: Real>(model: &ScorerModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_checkpoint(model, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<ScorerModel<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let arch = Architecture {
            blocks_per_stage: 1,
            patch_size: 16,
            widths: [4, 8, 8],
        };
        let mut model = ScorerModel::<f32>::new(arch, 7).unwrap();
        model.params_mut()[1].data[0] = 1.25;
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FFSM");
        assert_eq!(u32::from_le_bytes([buf[4], buf[5], buf[6], buf[7]]), 1);
        let back: ScorerModel<f32> = read_checkpoint(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back.architecture(), model.architecture());
        assert_eq!(back.params(), model.params());
        assert_eq!(back.running_var(), model.running_var());
    }

    #[test]
    fn rejects_corrupt_input() {
        let model = ScorerModel::<f32>::new(Architecture::new(1, 8), 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        assert!(read_checkpoint::<f32>(&buf[..buf.len() - 3], Path::new("x")).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f32>(&bad[..], Path::new("x")).is_err());
        let mut wrong_version = buf;
        wrong_version[4] = 9;
        assert!(read_checkpoint::<f32>(&wrong_version[..], Path::new("x")).is_err());
    }
}
