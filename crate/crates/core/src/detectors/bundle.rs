//! ODT tensor bundles and the white-box capture they carry.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "ODT1"  u32 tensor_count
//! repeated: u32 name_len, name (UTF-8), u32 rank, u32 dims[rank], f32 data[prod(dims)]
//! ```
//!
//! A capture needs `features` (K×h×w), `gradients` (K×h×w), `stride`
//! (scalar, rank 0 or shape `[1]`) and `center` (`[2]`, input pixels `cx, cy`).
//! Other tensors are ignored.

use std::collections::HashMap;
use std::path::Path;

use super::DetectorError;

const MAGIC: &[u8; 4] = b"ODT1";

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteBoxCapture {
    layer_id: String,
    channels: usize,
    height: usize,
    width: usize,
    features: Vec<f32>,
    gradients: Vec<f32>,
    stride: f32,
    target_center: [f32; 2],
}

impl WhiteBoxCapture {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layer_id: String,
        channels: usize,
        height: usize,
        width: usize,
        features: Vec<f32>,
        gradients: Vec<f32>,
        stride: f32,
        target_center: [f32; 2],
    ) -> Result<Self, DetectorError> {
        let n = channels * height * width;
        if n == 0 {
            return Err(DetectorError::FormatError("capture has an empty dimension".into()));
        }
        if features.len() != n || gradients.len() != n {
            return Err(DetectorError::FormatError(format!(
                "features ({}) and gradients ({}) must both hold {channels}x{height}x{width} values",
                features.len(),
                gradients.len()
            )));
        }
        if !stride.is_finite() || stride <= 0.0 {
            return Err(DetectorError::FormatError(format!("stride must be positive, got {stride}")));
        }
        for (name, values) in [
            ("features", &features[..]),
            ("gradients", &gradients[..]),
            ("center", &target_center[..]),
        ] {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(DetectorError::NonFiniteTensor(name.into()));
            }
        }
        Ok(Self {
            layer_id,
            channels,
            height,
            width,
            features,
            gradients,
            stride,
            target_center,
        })
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn set_layer_id(&mut self, layer_id: impl Into<String>) {
        self.layer_id = layer_id.into();
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn stride(&self) -> f32 {
        self.stride
    }

    /// `[cx, cy]` in input pixels.
    pub fn target_center(&self) -> [f32; 2] {
        self.target_center
    }

    /// Channel `k` of the feature maps, row-major `h×w`.
    pub fn feature_map(&self, k: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.features[k * n..(k + 1) * n]
    }

    pub fn gradient_map(&self, k: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.gradients[k * n..(k + 1) * n]
    }

    pub fn feature(&self, k: usize, row: usize, col: usize) -> f32 {
        self.feature_map(k)[row * self.width + col]
    }

    pub fn gradient(&self, k: usize, row: usize, col: usize) -> f32 {
        self.gradient_map(k)[row * self.width + col]
    }

    /// Serializes as an ODT bundle.
    pub fn to_odt_bytes(&self) -> Vec<u8> {
        let dims = [self.channels as u32, self.height as u32, self.width as u32];
        let mut w = OdtWriter::new(4);
        w.tensor("features", &dims, &self.features);
        w.tensor("gradients", &dims, &self.gradients);
        w.tensor("stride", &[], &[self.stride]);
        w.tensor("center", &[2], &self.target_center);
        w.finish()
    }

    pub fn from_odt_bytes(bytes: &[u8], layer_id: impl Into<String>) -> Result<Self, DetectorError> {
        let tensors = parse_odt(bytes)?;
        let get = |name: &str| {
            tensors
                .get(name)
                .ok_or_else(|| DetectorError::FormatError(format!("missing tensor {name:?}")))
        };
        let features = get("features")?;
        let gradients = get("gradients")?;
        let stride = get("stride")?;
        let center = get("center")?;
        if features.dims.len() != 3 {
            return Err(DetectorError::FormatError(format!(
                "features must have rank 3, got {}",
                features.dims.len()
            )));
        }
        if gradients.dims != features.dims {
            return Err(DetectorError::FormatError(format!(
                "gradients dims {:?} differ from features dims {:?}",
                gradients.dims, features.dims
            )));
        }
        if !(stride.dims.is_empty() || stride.dims == [1]) {
            return Err(DetectorError::FormatError(format!("stride must be a scalar, got dims {:?}", stride.dims)));
        }
        if center.dims != [2] {
            return Err(DetectorError::FormatError(format!("center must have dims [2], got {:?}", center.dims)));
        }
        if !stride.data[0].is_finite() {
            return Err(DetectorError::NonFiniteTensor("stride".into()));
        }
        let [k, h, w] = [features.dims[0], features.dims[1], features.dims[2]].map(|d| d as usize);
        Self::new(
            layer_id.into(),
            k,
            h,
            w,
            features.data.clone(),
            gradients.data.clone(),
            stride.data[0],
            [center.data[0], center.data[1]],
        )
    }
}

/// Reads a bundle from disk. The layer id defaults to the file stem.
pub fn load_whitebox_capture(path: impl AsRef<Path>) -> Result<WhiteBoxCapture, DetectorError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let layer = path.file_stem().and_then(|s| s.to_str()).unwrap_or("capture");
    WhiteBoxCapture::from_odt_bytes(&bytes, layer)
}

/// Writes a capture atomically (temp file plus rename).
pub fn save_whitebox_capture(capture: &WhiteBoxCapture, path: impl AsRef<Path>) -> Result<(), DetectorError> {
    let path = path.as_ref();
    let tmp = path.with_extension("odt.partial");
    std::fs::write(&tmp, capture.to_odt_bytes())?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Tensor {
    dims: Vec<u32>,
    data: Vec<f32>,
}

/// Incremental ODT encoder; also used by tests to build malformed bundles.
pub struct OdtWriter {
    buf: Vec<u8>,
}

impl OdtWriter {
    pub fn new(tensor_count: u32) -> Self {
        let mut buf = MAGIC.to_vec();
        buf.extend_from_slice(&tensor_count.to_le_bytes());
        Self { buf }
    }

    pub fn tensor(&mut self, name: &str, dims: &[u32], data: &[f32]) -> &mut Self {
        self.buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(name.as_bytes());
        self.buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            self.buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in data {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DetectorError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            DetectorError::FormatError(format!("truncated bundle while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, DetectorError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

const MAX_RANK: u32 = 8;

fn parse_odt(bytes: &[u8]) -> Result<HashMap<String, Tensor>, DetectorError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(DetectorError::FormatError("bad magic (expected ODT1)".into()));
    }
    let count = cur.u32("tensor count")?;
    let mut out = HashMap::new();
    for _ in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "tensor name")?)
            .map_err(|_| DetectorError::FormatError("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32("rank")?;
        if rank > MAX_RANK {
            return Err(DetectorError::FormatError(format!("tensor {name:?} has rank {rank}")));
        }
        let dims = (0..rank).map(|_| cur.u32("dims")).collect::<Result<Vec<_>, _>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| DetectorError::FormatError(format!("tensor {name:?} is too large")))?;
        let raw = cur.take(
            n.checked_mul(4).ok_or_else(|| DetectorError::FormatError("tensor too large".into()))?,
            &format!("data of {name:?}"),
        )?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if out.insert(name.clone(), Tensor { dims, data }).is_some() {
            return Err(DetectorError::FormatError(format!("duplicate tensor {name:?}")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(DetectorError::FormatError(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - cur.pos
        )));
    }
    Ok(out)
}
