//! Convolutional encoder: interchange file reader/writer and a plain CPU
//! forward pass producing posterior means.
//!
//! File layout: `IMGEPENC1`, a little-endian `u32` header length, the JSON
//! header, then every tensor as little-endian `f32` in `tensor_order`.
//! The header checksum is the hex SHA-256 of the tensor bytes.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sim::{Image64, IMAGE_SIZE};

pub const ENCODER_MAGIC: &[u8; 9] = b"IMGEPENC1";

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed encoder header: {0}")]
    MalformedHeader(String),
    #[error("encoder shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("encoder checksum mismatch: header {expected}, tensors {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("mixing matrix is not orthogonal (max |MᵀM - I| = {0:e})")]
    NotOrthogonal(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// One layer as described in the header. Conv shapes are
/// `[out_channels, in_channels, kernel_h, kernel_w]`, dense shapes `[out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub shape: Vec<usize>,
    #[serde(default)]
    pub padding: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    pub activation: Activation,
}

fn default_stride() -> usize {
    2
}

impl LayerSpec {
    pub fn conv(out_c: usize, in_c: usize, k: usize, activation: Activation) -> Self {
        Self { kind: LayerKind::Conv, shape: vec![out_c, in_c, k, k], padding: 1, stride: 2, activation }
    }

    pub fn dense(out: usize, inp: usize, activation: Activation) -> Self {
        Self { kind: LayerKind::Dense, shape: vec![out, inp], padding: 0, stride: 1, activation }
    }

    fn weight_len(&self) -> usize {
        self.shape.iter().product()
    }

    fn bias_len(&self) -> usize {
        self.shape[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderHeader {
    pub n_d: usize,
    pub layers: Vec<LayerSpec>,
    pub kl_per_dim: Vec<f64>,
    pub tensor_order: Vec<String>,
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    spec: LayerSpec,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

/// Validated convolutional encoder. Input is a single 64×64 image
/// (`in_channels` of the first conv must be 1); the final dense layer emits
/// `2 * n_d` values (means then log standard deviations).
#[derive(Clone, Debug, PartialEq)]
pub struct CnnEncoder {
    n_d: usize,
    kl_per_dim: Vec<f64>,
    layers: Vec<Layer>,
}

/// The reference architecture: 4 × (conv 4×4/2, 32 channels) then two
/// 256-unit dense layers and a `2 * n_d` output.
pub fn reference_layers(n_d: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(32, 1, 4, Activation::Relu),
        LayerSpec::conv(32, 32, 4, Activation::Relu),
        LayerSpec::conv(32, 32, 4, Activation::Relu),
        LayerSpec::conv(32, 32, 4, Activation::Relu),
        LayerSpec::dense(256, 32 * 4 * 4, Activation::Relu),
        LayerSpec::dense(256, 256, Activation::Relu),
        LayerSpec::dense(2 * n_d, 256, Activation::None),
    ]
}

/// Checks that the layer list chains from a 1×64×64 input to `2 * n_d` outputs.
fn check_shapes(n_d: usize, layers: &[LayerSpec]) -> Result<(), EncoderError> {
    let mismatch = |s: String| Err(EncoderError::ShapeMismatch(s));
    let (mut c, mut h, mut w) = (1usize, IMAGE_SIZE, IMAGE_SIZE);
    let mut flat: Option<usize> = None;
    for (i, l) in layers.iter().enumerate() {
        match l.kind {
            LayerKind::Conv => {
                if l.shape.len() != 4 {
                    return mismatch(format!("layer {i}: conv shape must have 4 entries"));
                }
                if flat.is_some() {
                    return mismatch(format!("layer {i}: conv after dense"));
                }
                if l.shape[1] != c {
                    return mismatch(format!("layer {i}: expects {} input channels, got {c}", l.shape[1]));
                }
                let (kh, kw) = (l.shape[2], l.shape[3]);
                if l.stride == 0 || h + 2 * l.padding < kh || w + 2 * l.padding < kw {
                    return mismatch(format!("layer {i}: kernel does not fit input"));
                }
                h = (h + 2 * l.padding - kh) / l.stride + 1;
                w = (w + 2 * l.padding - kw) / l.stride + 1;
                c = l.shape[0];
            }
            LayerKind::Dense => {
                if l.shape.len() != 2 {
                    return mismatch(format!("layer {i}: dense shape must have 2 entries"));
                }
                let inp = flat.unwrap_or(c * h * w);
                if l.shape[1] != inp {
                    return mismatch(format!("layer {i}: expects {} inputs, got {inp}", l.shape[1]));
                }
                flat = Some(l.shape[0]);
            }
        }
        if l.shape.contains(&0) {
            return mismatch(format!("layer {i}: zero-sized dimension"));
        }
    }
    let out = flat.unwrap_or(c * h * w);
    if out != 2 * n_d {
        return mismatch(format!("final output has {out} values, header n_d = {n_d} needs {}", 2 * n_d));
    }
    Ok(())
}

fn tensor_names(n_layers: usize) -> Vec<String> {
    (0..n_layers).flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")]).collect()
}

fn tensor_bytes(layers: &[Layer]) -> Vec<u8> {
    let mut out = Vec::new();
    for l in layers {
        for v in l.weight.iter().chain(l.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl CnnEncoder {
    /// Builds an encoder from explicit tensors (`(weight, bias)` per layer).
    pub fn new(
        n_d: usize,
        layers: Vec<LayerSpec>,
        tensors: Vec<(Vec<f32>, Vec<f32>)>,
        kl_per_dim: Vec<f64>,
    ) -> Result<Self, EncoderError> {
        check_shapes(n_d, &layers)?;
        if kl_per_dim.len() != n_d {
            return Err(EncoderError::ShapeMismatch(format!(
                "kl_per_dim has {} entries, n_d = {n_d}",
                kl_per_dim.len()
            )));
        }
        if kl_per_dim.iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(EncoderError::MalformedHeader("kl_per_dim entries must be finite and >= 0".into()));
        }
        if tensors.len() != layers.len() {
            return Err(EncoderError::ShapeMismatch(format!(
                "{} tensor pairs for {} layers",
                tensors.len(),
                layers.len()
            )));
        }
        let layers = layers
            .into_iter()
            .zip(tensors)
            .enumerate()
            .map(|(i, (spec, (weight, bias)))| {
                if weight.len() != spec.weight_len() || bias.len() != spec.bias_len() {
                    return Err(EncoderError::ShapeMismatch(format!("layer {i}: tensor sizes do not match shape")));
                }
                Ok(Layer { spec, weight, bias })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { n_d, kl_per_dim, layers })
    }

    /// Random weights, mostly for tests and smoke runs.
    pub fn random(n_d: usize, layers: Vec<LayerSpec>, kl_per_dim: Vec<f64>, seed: u64) -> Result<Self, EncoderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layers
            .iter()
            .map(|l| {
                let fan_in = (l.weight_len() / l.bias_len()) as f32;
                let bound = (3.0 / fan_in).sqrt();
                let w = (0..l.weight_len()).map(|_| rng.random_range(-bound..=bound)).collect();
                let b = (0..l.bias_len()).map(|_| rng.random_range(-0.1f32..=0.1)).collect();
                (w, b)
            })
            .collect();
        Self::new(n_d, layers, tensors, kl_per_dim)
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn kl_per_dim(&self) -> &[f64] {
        &self.kl_per_dim
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    /// `(weight, bias)` of layer `i`.
    pub fn tensors(&self, i: usize) -> (&[f32], &[f32]) {
        (&self.layers[i].weight, &self.layers[i].bias)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = tensor_bytes(&self.layers);
        let header = EncoderHeader {
            n_d: self.n_d,
            layers: self.layer_specs(),
            kl_per_dim: self.kl_per_dim.clone(),
            tensor_order: tensor_names(self.layers.len()),
            checksum: sha256_hex(&tensors),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(13 + json.len() + tensors.len());
        out.extend_from_slice(ENCODER_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&tensors);
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| EncoderError::Io { path: path.to_path_buf(), source })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncoderError> {
        let malformed = |s: &str| EncoderError::MalformedHeader(s.to_string());
        let prefix = ENCODER_MAGIC.len();
        if bytes.len() < prefix + 4 || &bytes[..prefix] != ENCODER_MAGIC {
            return Err(malformed("missing IMGEPENC1 magic"));
        }
        let hlen = u32::from_le_bytes(bytes[prefix..prefix + 4].try_into().unwrap()) as usize;
        let start = prefix + 4;
        let json = bytes.get(start..start + hlen).ok_or_else(|| malformed("header extends past end of file"))?;
        let header: EncoderHeader = serde_json::from_slice(json).map_err(|e| malformed(&e.to_string()))?;
        if header.tensor_order != tensor_names(header.layers.len()) {
            return Err(malformed("tensor_order must list layer{i}.weight, layer{i}.bias in layer order"));
        }
        check_shapes(header.n_d, &header.layers)?;

        let data = &bytes[start + hlen..];
        let actual = sha256_hex(data);
        if actual != header.checksum {
            return Err(EncoderError::ChecksumMismatch { expected: header.checksum, actual });
        }
        let expected_len: usize = header.layers.iter().map(|l| 4 * (l.weight_len() + l.bias_len())).sum();
        if data.len() != expected_len {
            return Err(EncoderError::ShapeMismatch(format!(
                "{} tensor bytes, layers declare {expected_len}",
                data.len()
            )));
        }
        let mut floats = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let tensors = header
            .layers
            .iter()
            .map(|l| {
                let w: Vec<f32> = floats.by_ref().take(l.weight_len()).collect();
                let b: Vec<f32> = floats.by_ref().take(l.bias_len()).collect();
                (w, b)
            })
            .collect();
        Self::new(header.n_d, header.layers, tensors, header.kl_per_dim)
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let bytes = std::fs::read(path).map_err(|source| EncoderError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }

    /// Posterior means for one image.
    pub fn forward(&self, image: &Image64) -> Vec<f64> {
        let mut act: Vec<f32> = image.pixels().to_vec();
        let (mut h, mut w) = (IMAGE_SIZE, IMAGE_SIZE);
        for layer in &self.layers {
            let s = &layer.spec;
            act = match s.kind {
                LayerKind::Conv => {
                    let (out, oh, ow) = conv2d(&act, h, w, layer);
                    h = oh;
                    w = ow;
                    out
                }
                LayerKind::Dense => dense(&act, layer),
            };
            if s.activation == Activation::Relu {
                act.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        act[..self.n_d].iter().map(|v| *v as f64).collect()
    }
}

fn conv2d(input: &[f32], h: usize, w: usize, layer: &Layer) -> (Vec<f32>, usize, usize) {
    let s = &layer.spec;
    let (oc, ic, kh, kw) = (s.shape[0], s.shape[1], s.shape[2], s.shape[3]);
    let (pad, stride) = (s.padding as isize, s.stride);
    let oh = (h + 2 * s.padding - kh) / stride + 1;
    let ow = (w + 2 * s.padding - kw) / stride + 1;
    let mut out = vec![0.0f32; oc * oh * ow];
    for o in 0..oc {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = layer.bias[o]);
        for i in 0..ic {
            let src = &input[i * h * w..(i + 1) * h * w];
            let kernel = &layer.weight[(o * ic + i) * kh * kw..(o * ic + i + 1) * kh * kw];
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0f32;
                    for ky in 0..kh {
                        let iy = (y * stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * w..(iy as usize + 1) * w];
                        for kx in 0..kw {
                            let ix = (x * stride) as isize + kx as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += kernel[ky * kw + kx] * row[ix as usize];
                        }
                    }
                    plane[y * ow + x] += acc;
                }
            }
        }
    }
    (out, oh, ow)
}

fn dense(input: &[f32], layer: &Layer) -> Vec<f32> {
    let (out, inp) = (layer.spec.shape[0], layer.spec.shape[1]);
    (0..out)
        .map(|o| {
            let row = &layer.weight[o * inp..(o + 1) * inp];
            layer.bias[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f32>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::render_scene;

    fn tiny_layers(n_d: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv(1, 1, 4, Activation::Relu),
            LayerSpec::conv(1, 1, 4, Activation::Relu),
            LayerSpec::dense(2 * n_d, 16 * 16, Activation::None),
        ]
    }

    /// Direct nested-loop evaluation with explicit zero padding, written
    /// independently of `conv2d`.
    fn oracle_forward(enc: &CnnEncoder, img: &Image64) -> Vec<f64> {
        let mut chans: Vec<Vec<Vec<f64>>> = vec![(0..64)
            .map(|r| (0..64).map(|c| img.get(r, c) as f64).collect())
            .collect()];
        let mut flat: Option<Vec<f64>> = None;
        for (li, spec) in enc.layer_specs().iter().enumerate() {
            let (wt, bs) = enc.tensors(li);
            let mut next = match spec.kind {
                LayerKind::Conv => {
                    let (oc, ic, k) = (spec.shape[0], spec.shape[1], spec.shape[2]);
                    let n = chans[0].len();
                    let p = spec.padding;
                    let padded: Vec<Vec<Vec<f64>>> = chans
                        .iter()
                        .map(|ch| {
                            let mut g = vec![vec![0.0; n + 2 * p]; n + 2 * p];
                            for r in 0..n {
                                for c in 0..n {
                                    g[r + p][c + p] = ch[r][c];
                                }
                            }
                            g
                        })
                        .collect();
                    let on = (n + 2 * p - k) / spec.stride + 1;
                    let mut out = vec![vec![vec![0.0; on]; on]; oc];
                    for o in 0..oc {
                        for r in 0..on {
                            for c in 0..on {
                                let mut s = bs[o] as f64;
                                for i in 0..ic {
                                    for a in 0..k {
                                        for b in 0..k {
                                            s += wt[((o * ic + i) * k + a) * k + b] as f64
                                                * padded[i][r * spec.stride + a][c * spec.stride + b];
                                        }
                                    }
                                }
                                out[o][r][c] = s;
                            }
                        }
                    }
                    chans = out;
                    None
                }
                LayerKind::Dense => {
                    let x = flat.take().unwrap_or_else(|| chans.iter().flatten().flatten().copied().collect());
                    let (o, n) = (spec.shape[0], spec.shape[1]);
                    Some((0..o).map(|i| bs[i] as f64 + (0..n).map(|j| wt[i * n + j] as f64 * x[j]).sum::<f64>()).collect::<Vec<_>>())
                }
            };
            if spec.activation == Activation::Relu {
                match next.as_mut() {
                    Some(v) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
                    None => chans.iter_mut().flatten().flatten().for_each(|x| *x = x.max(0.0)),
                }
            }
            if next.is_some() {
                flat = next.take();
            }
        }
        flat.unwrap()[..enc.n_d()].to_vec()
    }

    #[test]
    fn tiny_forward_matches_nested_loop_oracle() {
        let enc = CnnEncoder::random(3, tiny_layers(3), vec![0.0; 3], 11).unwrap();
        for (b, d) in [([0.0, 0.0], [0.5, -0.5]), ([-0.7, 0.2], [0.9, 0.9]), ([0.31, -0.44], [-0.2, 0.6])] {
            let img = render_scene(b, d);
            let got = enc.forward(&img);
            let want = oracle_forward(&enc, &img);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-5, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn reference_forward_matches_oracle() {
        let enc = CnnEncoder::random(10, reference_layers(10), vec![0.0; 10], 5).unwrap();
        let img = render_scene([0.2, 0.1], [-0.6, 0.3]);
        let got = enc.forward(&img);
        let want = oracle_forward(&enc, &img);
        assert_eq!(got.len(), 10);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-4, "{g} vs {w}");
        }
    }

    #[test]
    fn zero_weights_give_zero_latent() {
        let layers = reference_layers(10);
        let tensors = layers.iter().map(|l| (vec![0.0; l.weight_len()], vec![0.0; l.bias_len()])).collect();
        let enc = CnnEncoder::new(10, layers, tensors, vec![0.0; 10]).unwrap();
        assert_eq!(enc.forward(&render_scene([0.0, 0.0], [0.5, 0.5])), vec![0.0; 10]);
    }

    #[test]
    fn byte_round_trip() {
        let kl = vec![0.1, 5.2, 4.8, 0.2, 6.1, 5.9, 0.05, 0.03, 0.02, 0.01];
        let enc = CnnEncoder::random(10, reference_layers(10), kl.clone(), 2).unwrap();
        let back = CnnEncoder::from_bytes(&enc.to_bytes()).unwrap();
        assert_eq!(back.kl_per_dim(), &kl[..]);
        assert_eq!(back.layer_specs(), enc.layer_specs());
        assert_eq!(back, enc);
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let enc = CnnEncoder::random(3, tiny_layers(3), vec![0.0; 3], 2).unwrap();
        let bytes = enc.to_bytes();
        let err = CnnEncoder::from_bytes(&bytes[..bytes.len() - 7]).unwrap_err();
        assert!(matches!(err, EncoderError::ChecksumMismatch { .. }), "{err}");
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let enc = CnnEncoder::random(3, tiny_layers(3), vec![0.0; 3], 2).unwrap();
        let mut bytes = enc.to_bytes();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        assert!(matches!(CnnEncoder::from_bytes(&bytes), Err(EncoderError::ChecksumMismatch { .. })));
    }

    #[test]
    fn header_n_d_must_match_output_layer() {
        let enc = CnnEncoder::random(10, reference_layers(10), vec![0.0; 10], 2).unwrap();
        let bytes = enc.to_bytes();
        let hlen = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let mut header: EncoderHeader = serde_json::from_slice(&bytes[13..13 + hlen]).unwrap();
        header.n_d = 8;
        header.kl_per_dim.truncate(8);
        let json = serde_json::to_vec(&header).unwrap();
        let mut forged = ENCODER_MAGIC.to_vec();
        forged.extend_from_slice(&(json.len() as u32).to_le_bytes());
        forged.extend_from_slice(&json);
        forged.extend_from_slice(&bytes[13 + hlen..]);
        assert!(matches!(CnnEncoder::from_bytes(&forged), Err(EncoderError::ShapeMismatch(_))));
    }

    #[test]
    fn garbage_header_is_malformed() {
        assert!(matches!(CnnEncoder::from_bytes(b"NOTANENCODER"), Err(EncoderError::MalformedHeader(_))));
        let mut bytes = ENCODER_MAGIC.to_vec();
        bytes.extend_from_slice(&5u32.to_le_bytes());
        bytes.extend_from_slice(b"{oops");
        assert!(matches!(CnnEncoder::from_bytes(&bytes), Err(EncoderError::MalformedHeader(_))));
    }

    #[test]
    fn broken_chain_is_shape_mismatch() {
        let mut layers = reference_layers(10);
        layers[1].shape[1] = 16;
        assert!(matches!(
            CnnEncoder::random(10, layers, vec![0.0; 10], 0),
            Err(EncoderError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn negative_kl_rejected() {
        let mut kl = vec![0.0; 3];
        kl[1] = -0.5;
        assert!(CnnEncoder::random(3, tiny_layers(3), kl, 0).is_err());
    }
}
