//! Tensor files (NPY v1, raw f32 with JSON sidecar) and the AUSN container.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coding::{pack, unpack, BitLayout};
use crate::error::{Error, Result};
use crate::quantizer::{Mode, QuantizedTensor};
use crate::tensor::{OriginStats, Tensor};

pub const CONTAINER_MAGIC: &[u8; 4] = b"AUSN";
pub const CONTAINER_VERSION: u8 = 1;
const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Float32,
    Float64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::Float32 => 4,
            Dtype::Float64 => 8,
        }
    }

    fn descr(self) -> &'static str {
        match self {
            Dtype::Float32 => "<f4",
            Dtype::Float64 => "<f8",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "<f4" | "float32" | "f32" => Ok(Dtype::Float32),
            "<f8" | "float64" | "f64" => Ok(Dtype::Float64),
            other => Err(Error::UnsupportedDtype(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub name: String,
    pub dtype: Dtype,
    pub tensor: Tensor,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads an NPY file, or a raw little-endian f32 file described by
/// `<path>.json`.
pub fn load_tensor(path: &Path) -> Result<TensorFile> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(NPY_MAGIC) {
        let (dtype, tensor) = decode_npy(&bytes)?;
        return Ok(TensorFile { name: file_stem(path), dtype, tensor });
    }
    let side: Sidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let dtype = Dtype::parse(&side.dtype)?;
    if dtype != Dtype::Float32 {
        return Err(Error::UnsupportedDtype(format!("raw files hold float32, sidecar says {}", side.dtype)));
    }
    let count: usize = side.shape.iter().product();
    if bytes.len() != count * 4 {
        return Err(Error::ShapeMismatch(format!(
            "shape {:?} needs {} bytes, file has {}",
            side.shape,
            count * 4,
            bytes.len()
        )));
    }
    let data = decode_floats(&bytes, dtype);
    Ok(TensorFile { name: side.name, dtype, tensor: Tensor::new(side.shape, data)? })
}

/// Writes `file` as NPY when the extension is `.npy`, raw f32 plus sidecar
/// otherwise.
pub fn save_tensor(path: &Path, file: &TensorFile) -> Result<()> {
    if path.extension().is_some_and(|e| e == "npy") {
        return fs::write(path, encode_npy(file.dtype, &file.tensor)).map_err(Into::into);
    }
    if file.dtype != Dtype::Float32 {
        return Err(Error::UnsupportedDtype("raw files hold float32 only".into()));
    }
    fs::write(path, encode_floats(file.tensor.data(), Dtype::Float32))?;
    let side = Sidecar { name: file.name.clone(), shape: file.tensor.shape().to_vec(), dtype: "float32".into() };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&side)?)?;
    Ok(())
}

fn decode_floats(bytes: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::Float32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        Dtype::Float64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    }
}

fn encode_floats(data: &[f64], dtype: Dtype) -> Vec<u8> {
    match dtype {
        Dtype::Float32 => data.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect(),
        Dtype::Float64 => data.iter().flat_map(|&x| x.to_le_bytes()).collect(),
    }
}

pub fn encode_npy(dtype: Dtype, tensor: &Tensor) -> Vec<u8> {
    let shape = match tensor.shape() {
        [n] => format!("({n},)"),
        dims => format!("({})", dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let mut header = format!("{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}", dtype.descr(), shape);
    let unpadded = NPY_MAGIC.len() + 2 + 2 + header.len() + 1;
    header.push_str(&" ".repeat(unpadded.next_multiple_of(64) - unpadded));
    header.push('\n');

    let mut out = Vec::with_capacity(unpadded + tensor.len() * dtype.size() + 64);
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend(encode_floats(tensor.data(), dtype));
    out
}

pub fn decode_npy(bytes: &[u8]) -> Result<(Dtype, Tensor)> {
    if bytes.len() < 10 || !bytes.starts_with(NPY_MAGIC) {
        return Err(Error::Format("not an NPY file".into()));
    }
    if bytes[6] != 1 {
        return Err(Error::Format(format!("NPY version {}.{} not supported", bytes[6], bytes[7])));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body = 10 + hlen;
    if bytes.len() < body {
        return Err(Error::Truncated { needed: body, got: bytes.len() });
    }
    let header = std::str::from_utf8(&bytes[10..body]).map_err(|_| Error::Format("NPY header is not UTF-8".into()))?;
    let descr = header_value(header, "descr")?;
    let descr = descr.trim().trim_matches(|c| c == '\'' || c == '"');
    let dtype = Dtype::parse(descr).map_err(|_| Error::UnsupportedDtype(descr.to_string()))?;
    match header_value(header, "fortran_order")?.trim() {
        "False" => {}
        "True" => return Err(Error::UnsupportedLayout("Fortran-ordered NPY".into())),
        other => return Err(Error::Format(format!("bad fortran_order {other:?}"))),
    }
    let shape = parse_shape(header_value(header, "shape")?)?;
    let count: usize = shape.iter().product();
    let payload = &bytes[body..];
    if payload.len() != count * dtype.size() {
        return Err(Error::ShapeMismatch(format!(
            "shape {shape:?} needs {} bytes, payload has {}",
            count * dtype.size(),
            payload.len()
        )));
    }
    Ok((dtype, Tensor::new(shape, decode_floats(payload, dtype))?))
}

/// Raw text of `key`'s value in a Python dict literal.
fn header_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let missing = || Error::Format(format!("NPY header lacks {key:?}"));
    let at = header.find(&format!("'{key}'")).ok_or_else(missing)?;
    let rest = &header[at + key.len() + 2..];
    let rest = rest.trim_start().strip_prefix(':').ok_or_else(missing)?.trim_start();
    let end = if rest.starts_with('(') { rest.find(')').map(|i| i + 1) } else { rest.find([',', '}']) };
    end.map(|e| &rest[..e]).ok_or_else(missing)
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    let inner = s.trim().strip_prefix('(').and_then(|s| s.strip_suffix(')'));
    let inner = inner.ok_or_else(|| Error::Format(format!("bad shape {s:?}")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Format(format!("bad shape entry {p:?}"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerMeta {
    pub layout: BitLayout,
    pub shape: Vec<usize>,
    pub power_j: i32,
    pub count: usize,
    pub mode: Mode,
    pub creator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_stats: Option<OriginStats>,
}

pub fn creator() -> String {
    format!("ausn {}", env!("CARGO_PKG_VERSION"))
}

pub fn encode_container(qt: &QuantizedTensor) -> Result<Vec<u8>> {
    qt.validate()?;
    let meta = ContainerMeta {
        layout: qt.layout.clone(),
        shape: qt.shape.clone(),
        power_j: qt.power_j,
        count: qt.len(),
        mode: qt.mode,
        creator: creator(),
        origin_stats: qt.origin_stats,
    };
    let meta = serde_json::to_vec(&meta)?;
    let payload = pack(&qt.codes, &qt.layout)?;
    let mut out = Vec::with_capacity(9 + meta.len() + payload.len());
    out.extend_from_slice(CONTAINER_MAGIC);
    out.push(CONTAINER_VERSION);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_container(bytes: &[u8]) -> Result<QuantizedTensor> {
    if bytes.len() < 4 || &bytes[..4] != CONTAINER_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 9 {
        return Err(Error::Truncated { needed: 9, got: bytes.len() });
    }
    if bytes[4] != CONTAINER_VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    let mlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body = 9 + mlen;
    if bytes.len() < body {
        return Err(Error::Truncated { needed: body, got: bytes.len() });
    }
    let meta: ContainerMeta = serde_json::from_slice(&bytes[9..body])?;
    if meta.shape.iter().product::<usize>() != meta.count {
        return Err(Error::ShapeMismatch(format!("shape {:?} does not hold {} codes", meta.shape, meta.count)));
    }
    let payload = &bytes[body..];
    let want = meta.layout.packed_len(meta.count);
    if payload.len() != want {
        return Err(Error::LengthMismatch { left: want, right: payload.len() });
    }
    let codes = unpack(payload, meta.count, &meta.layout)?;
    Ok(QuantizedTensor {
        layout: meta.layout,
        power_j: meta.power_j,
        shape: meta.shape,
        codes,
        mode: meta.mode,
        origin_stats: meta.origin_stats,
    })
}

pub fn save_container(path: &Path, qt: &QuantizedTensor) -> Result<()> {
    fs::write(path, encode_container(qt)?).map_err(Into::into)
}

pub fn load_container(path: &Path) -> Result<QuantizedTensor> {
    decode_container(&fs::read(path)?)
}
