//! Little-endian model files: magic, version, architecture, label order,
//! tensor table, f32 payload, trailing CRC32 of everything before it.

use std::fs;
use std::path::Path;

use crate::arch::{build_with_seed, ArchId, Model};
use crate::error::{Error, Result};
use crate::labels::LABELS;

pub const MAGIC: &[u8; 4] = b"LFVT";
pub const FORMAT_VERSION: u16 = 1;

fn label_names(num_labels: usize) -> Vec<String> {
    if num_labels == LABELS.len() {
        LABELS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_labels).map(|i| format!("label{i}")).collect()
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u16).to_le_bytes());
    out.extend(s.as_bytes());
}

pub fn model_to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(FORMAT_VERSION.to_le_bytes());
    put_str(&mut out, model.arch.name());
    for d in model.input_shape {
        out.extend((d as u32).to_le_bytes());
    }
    out.extend((model.num_labels as u32).to_le_bytes());
    out.extend((model.head_width as u32).to_le_bytes());
    out.extend(model.seed.to_le_bytes());
    let labels = label_names(model.num_labels);
    out.extend((labels.len() as u16).to_le_bytes());
    for l in &labels {
        put_str(&mut out, l);
    }

    // Parameters first, then batchnorm running statistics.
    let mut tensors: Vec<(String, &crate::Tensor)> =
        model.params().into_iter().map(|(n, p)| (n, &p.value)).collect();
    tensors.extend(model.state());
    out.extend((tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        put_str(&mut out, name);
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend((d as u32).to_le_bytes());
        }
    }
    for (_, t) in &tensors {
        for v in t.data() {
            out.extend(v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend(crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(self.path, "string is not UTF-8"))
    }
}

/// Parses a model file image. `path` only labels errors.
pub fn model_from_bytes(bytes: &[u8], path: &Path) -> Result<Model> {
    let fail = |msg: String| Error::format(path, msg);
    if bytes.len() < MAGIC.len() + 2 + 4 {
        return Err(fail(format!("truncated: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail("bad magic, not a model file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(fail(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader { bytes: body, pos: 6, path };
    let arch: ArchId = r.string()?.parse()?;
    let input_shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let num_labels = r.u32()? as usize;
    let head_width = r.u32()? as usize;
    let seed = r.u64()?;
    let n_labels = r.u16()? as usize;
    let labels: Vec<String> = (0..n_labels).map(|_| r.string()).collect::<Result<_>>()?;
    if labels != label_names(num_labels) {
        return Err(fail(format!("label order {labels:?} does not match the canonical order")));
    }
    let mut model = build_with_seed(arch, input_shape, num_labels, head_width, seed)
        .map_err(|e| fail(format!("header describes an invalid model: {e}")))?;

    let expected: Vec<(String, Vec<usize>)> = model
        .params()
        .into_iter()
        .map(|(n, p)| (n, p.value.shape().to_vec()))
        .chain(model.state().into_iter().map(|(n, t)| (n, t.shape().to_vec())))
        .collect();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(fail(format!("{count} tensors, {arch} has {}", expected.len())));
    }
    for (name, shape) in &expected {
        let got = r.string()?;
        let rank = r.take(1)?[0] as usize;
        let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        if &got != name || &dims != shape {
            return Err(fail(format!("tensor `{got}` {dims:?}, expected `{name}` {shape:?}")));
        }
    }
    let mut read_into = |dst: &mut [f32]| -> Result<()> {
        let raw = r.take(4 * dst.len())?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(())
    };
    for p in model.params_mut() {
        read_into(p.value.data_mut())?;
    }
    for t in model.state_mut() {
        read_into(t.data_mut())?;
    }
    if r.pos != body.len() {
        return Err(fail(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes, path)
}
