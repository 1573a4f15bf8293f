//! Flat binary checkpoint format for `DenseNet`.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      4 bytes  "DNET"
//! version    u32      currently 1
//! n_dims     u32
//! dims       u32 * n_dims
//! act tags   u8  * (n_dims - 1)      0 = rectifier, 1 = linear
//! per layer, in order:
//!   weights  f64 * (out * in)        row-major
//!   bias     f64 * out
//!   mask     u8  * (out * in)        row-major, 0 = pruned
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, DenseNet, Matrix, NetError};

const MAGIC: [u8; 4] = *b"DNET";
const VERSION: u32 = 1;

pub fn save_checkpoint(net: &DenseNet, path: &Path) -> Result<(), NetError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let dims = net.dims();
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in &dims {
        w.write_all(&(*d as u32).to_le_bytes())?;
    }
    for l in 0..net.layer_count() {
        w.write_all(&[net.activation(l).tag()])?;
    }
    for l in 0..net.layer_count() {
        for v in net.weights(l).data() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in net.bias(l) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(net.mask(l))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<DenseNet, NetError> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(NetError::Format("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NetError::Format(format!("unsupported version {version}")));
    }
    let n_dims = read_u32(&mut r)? as usize;
    if n_dims < 2 || n_dims > 64 {
        return Err(NetError::Format(format!("implausible dim count {n_dims}")));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        let d = read_u32(&mut r)? as usize;
        if d == 0 {
            return Err(NetError::Format("zero layer width".into()));
        }
        dims.push(d);
    }
    let mut acts = Vec::with_capacity(n_dims - 1);
    for _ in 0..n_dims - 1 {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let act = Activation::from_tag(tag[0])
            .ok_or_else(|| NetError::Format(format!("unknown activation tag {}", tag[0])))?;
        acts.push(act);
    }

    let mut layers = Vec::with_capacity(n_dims - 1);
    for (li, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let count = fan_in * fan_out;
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            weights.push(read_f64(&mut r)?);
        }
        let mut bias = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            bias.push(read_f64(&mut r)?);
        }
        let mut mask = vec![0u8; count];
        r.read_exact(&mut mask)?;
        for (i, (&wv, &m)) in weights.iter().zip(mask.iter()).enumerate() {
            if m > 1 {
                return Err(NetError::Format(format!("layer {li} mask entry {i} is not binary")));
            }
            if m == 0 && wv != 0.0 {
                return Err(NetError::Format(format!(
                    "layer {li} weight {i} is masked but nonzero"
                )));
            }
        }
        layers.push(DenseNet::make_layer(
            Matrix::from_vec(fan_out, fan_in, weights),
            bias,
            mask,
            acts[li],
        ));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(NetError::Format("trailing bytes after parameters".into()));
    }
    Ok(DenseNet::from_parts(layers))
}

fn read_u32(r: &mut impl Read) -> Result<u32, NetError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64, NetError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
