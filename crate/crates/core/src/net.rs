//! Inference runtime for learned stage operators.
//!
//! A network is described by a JSON manifest (layer list, architecture name,
//! input contract) plus a binary blob of little-endian f32 weights addressed
//! by per-layer scalar offsets. Weights are widened to f64 at load and all
//! arithmetic runs in f64, so a forward pass is reproducible across machines
//! to the last bit. Three architectures are registered with fixed layer
//! templates: a small residual-free kernel refiner (`net_k`), an encoder or
//! decoder image refiner with skip additions (`net_x`), and a two-layer
//! hyper-parameter predictor (`hypanet`). Manifests claiming a registered
//! name must match its template exactly; `custom` accepts any well-formed
//! layer chain.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// One layer of a sequential network. `offset` indexes scalars in the blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        offset: usize,
    },
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        offset: usize,
    },
    Fc {
        in_features: usize,
        out_features: usize,
        bias: bool,
        offset: usize,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Softplus,
    /// Adds the recorded output of an earlier point in the chain: index 0 is
    /// the network input, index i the output of layer i.
    SkipAdd {
        source: usize,
    },
}

impl LayerSpec {
    /// Number of blob scalars this layer consumes.
    pub fn scalar_count(&self) -> usize {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                bias,
                ..
            }
            | LayerSpec::ConvTranspose {
                in_channels,
                out_channels,
                kernel,
                bias,
                ..
            } => in_channels * out_channels * kernel * kernel + if bias { out_channels } else { 0 },
            LayerSpec::Fc {
                in_features,
                out_features,
                bias,
                ..
            } => in_features * out_features + if bias { out_features } else { 0 },
            _ => 0,
        }
    }

    fn with_offset(mut self, new_offset: usize) -> LayerSpec {
        match &mut self {
            LayerSpec::Conv { offset, .. }
            | LayerSpec::ConvTranspose { offset, .. }
            | LayerSpec::Fc { offset, .. } => *offset = new_offset,
            _ => {}
        }
        self
    }

    fn offset(&self) -> usize {
        match *self {
            LayerSpec::Conv { offset, .. }
            | LayerSpec::ConvTranspose { offset, .. }
            | LayerSpec::Fc { offset, .. } => offset,
            _ => 0,
        }
    }
}

/// On-disk description of a network; `blob` is a path relative to the
/// manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub architecture: String,
    pub input_channels: usize,
    #[serde(default)]
    pub beta_input: bool,
    #[serde(default)]
    pub stages: Option<usize>,
    pub layers: Vec<LayerSpec>,
    pub blob: String,
}

impl Manifest {
    /// Total blob scalars the layer list consumes when packed sequentially.
    pub fn required_scalars(&self) -> usize {
        self.layers.iter().map(LayerSpec::scalar_count).sum()
    }
}

/// Assigns sequential blob offsets in layer order.
pub fn assign_sequential_offsets(layers: Vec<LayerSpec>) -> Vec<LayerSpec> {
    let mut next = 0usize;
    layers
        .into_iter()
        .map(|layer| {
            let count = layer.scalar_count();
            let placed = layer.with_offset(next);
            next += count;
            placed
        })
        .collect()
}

fn conv(cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> LayerSpec {
    LayerSpec::Conv {
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        stride,
        padding: pad,
        bias: true,
        offset: 0,
    }
}

fn conv_t(cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> LayerSpec {
    LayerSpec::ConvTranspose {
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        stride,
        padding: pad,
        bias: true,
        offset: 0,
    }
}

fn push_residual_unit(layers: &mut Vec<LayerSpec>, channels: usize) {
    let source = layers.len();
    layers.push(conv(channels, channels, 3, 1, 1));
    layers.push(LayerSpec::Relu);
    layers.push(conv(channels, channels, 3, 1, 1));
    layers.push(LayerSpec::SkipAdd { source });
}

/// Kernel refiner: three conv pairs at 16 feature channels with leaky-relu
/// gaps, final relu; input is the kernel plane plus a constant beta plane.
pub fn net_k_layers() -> Vec<LayerSpec> {
    let mut layers = vec![
        conv(2, 16, 3, 1, 1),
        LayerSpec::LeakyRelu { slope: 0.01 },
        conv(16, 16, 3, 1, 1),
        conv(16, 16, 3, 1, 1),
        LayerSpec::LeakyRelu { slope: 0.01 },
        conv(16, 16, 3, 1, 1),
        conv(16, 16, 3, 1, 1),
        LayerSpec::LeakyRelu { slope: 0.01 },
        conv(16, 1, 3, 1, 1),
    ];
    layers.push(LayerSpec::Relu);
    assign_sequential_offsets(layers)
}

pub fn net_k_manifest(blob: &str) -> Manifest {
    Manifest {
        architecture: "net_k".into(),
        input_channels: 2,
        beta_input: true,
        stages: None,
        layers: net_k_layers(),
        blob: blob.into(),
    }
}

/// Image refiner: strided 2x halvings to widths 64/128/256/512 and mirrored
/// transposed-conv doublings with additive skips, four residual units per
/// resolution; input is the image plus a constant beta plane.
pub fn net_x_layers(image_channels: usize) -> Vec<LayerSpec> {
    let widths = [64usize, 128, 256, 512];
    let mut layers = vec![conv(image_channels + 1, widths[0], 3, 1, 1)];
    let mut skip_sources = Vec::new();
    for level in 0..3 {
        for _ in 0..4 {
            push_residual_unit(&mut layers, widths[level]);
        }
        skip_sources.push(layers.len());
        layers.push(conv(widths[level], widths[level + 1], 2, 2, 0));
    }
    for _ in 0..4 {
        push_residual_unit(&mut layers, widths[3]);
    }
    for level in (0..3).rev() {
        layers.push(conv_t(widths[level + 1], widths[level], 2, 2, 0));
        layers.push(LayerSpec::SkipAdd {
            source: skip_sources[level],
        });
        for _ in 0..4 {
            push_residual_unit(&mut layers, widths[level]);
        }
    }
    layers.push(conv(widths[0], image_channels, 3, 1, 1));
    assign_sequential_offsets(layers)
}

pub fn net_x_manifest(image_channels: usize, blob: &str) -> Manifest {
    Manifest {
        architecture: "net_x".into(),
        input_channels: image_channels + 1,
        beta_input: true,
        stages: None,
        layers: net_x_layers(image_channels),
        blob: blob.into(),
    }
}

/// Hyper-parameter predictor: (scale, noise) through one hidden layer to a
/// softplus-positive block of four values per stage.
pub fn hypanet_layers(stages: usize) -> Vec<LayerSpec> {
    assign_sequential_offsets(vec![
        LayerSpec::Fc {
            in_features: 2,
            out_features: 64,
            bias: true,
            offset: 0,
        },
        LayerSpec::Relu,
        LayerSpec::Fc {
            in_features: 64,
            out_features: 4 * stages,
            bias: true,
            offset: 0,
        },
        LayerSpec::Softplus,
    ])
}

pub fn hypanet_manifest(stages: usize, blob: &str) -> Manifest {
    Manifest {
        architecture: "hypanet".into(),
        input_channels: 2,
        beta_input: false,
        stages: Some(stages),
        layers: hypanet_layers(stages),
        blob: blob.into(),
    }
}

/// A validated manifest plus widened weights, ready to run.
#[derive(Debug, Clone)]
pub struct Network {
    manifest: Manifest,
    weights: Vec<f64>,
}

impl Network {
    /// Builds a network from a manifest and raw f32 weights, validating layer
    /// chaining, blob bounds, finiteness, and the architecture template.
    pub fn from_parts(manifest: Manifest, weights_f32: &[f32]) -> Result<Network> {
        validate_manifest(&manifest, weights_f32.len())?;
        if let Some(bad) = weights_f32.iter().find(|w| !w.is_finite()) {
            return Err(Error::Manifest(format!("non-finite weight {bad}")));
        }
        Ok(Network {
            manifest,
            weights: weights_f32.iter().map(|&w| w as f64).collect(),
        })
    }

    /// Loads a manifest file and its weight blob (path relative to the
    /// manifest's directory).
    pub fn load(manifest_path: &Path) -> Result<Network> {
        let text = std::fs::read_to_string(manifest_path)?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let blob_path = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&manifest.blob);
        let bytes = std::fs::read(&blob_path)?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Manifest(format!(
                "blob {} has {} bytes, not a multiple of 4",
                blob_path.display(),
                bytes.len()
            )));
        }
        let weights: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Network::from_parts(manifest, &weights)
    }

    /// Writes the manifest JSON and its weight blob next to each other.
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(manifest_path, text)?;
        let blob_path = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&self.manifest.blob);
        let mut bytes = Vec::with_capacity(self.weights.len() * 4);
        for w in &self.weights {
            bytes.extend_from_slice(&(*w as f32).to_le_bytes());
        }
        std::fs::write(blob_path, bytes)?;
        Ok(())
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn architecture(&self) -> &str {
        &self.manifest.architecture
    }

    /// Runs the layer chain on `input`, recording only the intermediate
    /// outputs that later skip additions reference.
    pub fn forward(&self, input: &Image) -> Result<Image> {
        if input.channels() != self.manifest.input_channels {
            return Err(Error::Dimension(format!(
                "network expects {} input channels, got {}",
                self.manifest.input_channels,
                input.channels()
            )));
        }
        let needed: HashSet<usize> = self
            .manifest
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::SkipAdd { source } => Some(*source),
                _ => None,
            })
            .collect();
        let mut saved: HashMap<usize, Image> = HashMap::new();
        if needed.contains(&0) {
            saved.insert(0, input.clone());
        }
        let mut cur = input.clone();
        for (i, layer) in self.manifest.layers.iter().enumerate() {
            cur = self.apply_layer(layer, &cur, &saved)?;
            let idx = i + 1;
            if needed.contains(&idx) {
                saved.insert(idx, cur.clone());
            }
        }
        Ok(cur)
    }

    /// Forward pass with the stage weight appended as a constant channel when
    /// the manifest declares a beta input.
    pub fn forward_with_beta(&self, input: &Image, beta: f64) -> Result<Image> {
        if !self.manifest.beta_input {
            return self.forward(input);
        }
        let (c, h, w) = (input.channels(), input.height(), input.width());
        let mut data = Vec::with_capacity((c + 1) * h * w);
        data.extend_from_slice(input.data());
        data.extend(std::iter::repeat(beta).take(h * w));
        self.forward(&Image::from_vec(c + 1, h, w, data)?)
    }

    fn weight_slice(&self, offset: usize, count: usize) -> &[f64] {
        &self.weights[offset..offset + count]
    }

    fn apply_layer(
        &self,
        layer: &LayerSpec,
        x: &Image,
        saved: &HashMap<usize, Image>,
    ) -> Result<Image> {
        match *layer {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                bias,
                offset,
            } => {
                let wlen = in_channels * out_channels * kernel * kernel;
                conv_forward(
                    x,
                    self.weight_slice(offset, wlen),
                    bias.then(|| self.weight_slice(offset + wlen, out_channels)),
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                )
            }
            LayerSpec::ConvTranspose {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                bias,
                offset,
            } => {
                let wlen = in_channels * out_channels * kernel * kernel;
                conv_transpose_forward(
                    x,
                    self.weight_slice(offset, wlen),
                    bias.then(|| self.weight_slice(offset + wlen, out_channels)),
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                )
            }
            LayerSpec::Fc {
                in_features,
                out_features,
                bias,
                offset,
            } => {
                let wlen = in_features * out_features;
                fc_forward(
                    x,
                    self.weight_slice(offset, wlen),
                    bias.then(|| self.weight_slice(offset + wlen, out_features)),
                    in_features,
                    out_features,
                )
            }
            LayerSpec::Relu => Ok(map_elementwise(x, |v| v.max(0.0))),
            LayerSpec::LeakyRelu { slope } => {
                Ok(map_elementwise(x, |v| if v >= 0.0 { v } else { slope * v }))
            }
            LayerSpec::Softplus => Ok(map_elementwise(x, softplus)),
            LayerSpec::SkipAdd { source } => {
                let skip = saved.get(&source).ok_or_else(|| {
                    Error::Manifest(format!("skip source {source} was not recorded"))
                })?;
                x.require_same_shape(skip)?;
                let mut out = x.clone();
                for (dst, add) in out.data_mut().iter_mut().zip(skip.data()) {
                    *dst += add;
                }
                Ok(out)
            }
        }
    }
}

// numerically stable in both tails: exact x for large x, exact 0 for very
// negative x
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn map_elementwise(x: &Image, f: impl Fn(f64) -> f64) -> Image {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = f(*v));
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &Image,
    w: &[f64],
    bias: Option<&[f64]>,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Image> {
    if x.channels() != cin {
        return Err(Error::Dimension(format!(
            "conv expects {cin} channels, got {}",
            x.channels()
        )));
    }
    let (h, wd) = (x.height(), x.width());
    if h + 2 * pad < k || wd + 2 * pad < k {
        return Err(Error::Dimension(format!(
            "conv kernel {k} exceeds padded input {h}x{wd}+{pad}"
        )));
    }
    if (h + 2 * pad - k) % stride != 0 || (wd + 2 * pad - k) % stride != 0 {
        return Err(Error::Dimension(format!(
            "conv stride {stride} does not tile padded input {h}x{wd}"
        )));
    }
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Image::zeros(cout, oh, ow);
    for co in 0..cout {
        let b = bias.map_or(0.0, |bs| bs[co]);
        let plane = out.plane_mut(co);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b;
                for ci in 0..cin {
                    let src = x.plane(ci);
                    let wbase = ((co * cin + ci) * k) * k;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = iy as usize * wd;
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            acc += w[wbase + ky * k + kx] * src[row + ix as usize];
                        }
                    }
                }
                plane[oy * ow + ox] = acc;
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn conv_transpose_forward(
    x: &Image,
    w: &[f64],
    bias: Option<&[f64]>,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Image> {
    if x.channels() != cin {
        return Err(Error::Dimension(format!(
            "transposed conv expects {cin} channels, got {}",
            x.channels()
        )));
    }
    let (h, wd) = (x.height(), x.width());
    let full_h = (h - 1) * stride + k;
    let full_w = (wd - 1) * stride + k;
    if full_h < 2 * pad + 1 || full_w < 2 * pad + 1 {
        return Err(Error::Dimension(format!(
            "transposed conv padding {pad} leaves no output for {h}x{wd}"
        )));
    }
    let oh = full_h - 2 * pad;
    let ow = full_w - 2 * pad;
    let mut out = Image::zeros(cout, oh, ow);
    for co in 0..cout {
        if let Some(bs) = bias {
            out.plane_mut(co).iter_mut().for_each(|v| *v = bs[co]);
        }
    }
    for ci in 0..cin {
        let src = x.plane(ci);
        for co in 0..cout {
            let wbase = ((ci * cout + co) * k) * k;
            for iy in 0..h {
                for ix in 0..wd {
                    let v = src[iy * wd + ix];
                    for ky in 0..k {
                        let oy = (iy * stride + ky) as isize - pad as isize;
                        if oy < 0 || oy >= oh as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ox = (ix * stride + kx) as isize - pad as isize;
                            if ox < 0 || ox >= ow as isize {
                                continue;
                            }
                            let idx = oy as usize * ow + ox as usize;
                            out.plane_mut(co)[idx] += w[wbase + ky * k + kx] * v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn fc_forward(
    x: &Image,
    w: &[f64],
    bias: Option<&[f64]>,
    in_features: usize,
    out_features: usize,
) -> Result<Image> {
    if x.len() != in_features {
        return Err(Error::Dimension(format!(
            "fc expects {in_features} features, got {}",
            x.len()
        )));
    }
    let mut out = Image::zeros(out_features, 1, 1);
    for o in 0..out_features {
        let mut acc = bias.map_or(0.0, |bs| bs[o]);
        let row = &w[o * in_features..(o + 1) * in_features];
        for (wi, xi) in row.iter().zip(x.data()) {
            acc += wi * xi;
        }
        out.plane_mut(o)[0] = acc;
    }
    Ok(out)
}

fn validate_manifest(manifest: &Manifest, blob_scalars: usize) -> Result<()> {
    if manifest.layers.is_empty() {
        return Err(Error::Manifest("manifest has no layers".into()));
    }
    if manifest.input_channels == 0 {
        return Err(Error::Manifest("input_channels must be positive".into()));
    }
    // per-output-index channel counts for skip checking; spatial sizes are
    // only known at forward time
    let mut channels_at = vec![manifest.input_channels];
    for (i, layer) in manifest.layers.iter().enumerate() {
        let cur = *channels_at.last().expect("nonempty by construction");
        let next = match *layer {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            }
            | LayerSpec::ConvTranspose {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if kernel == 0 || stride == 0 {
                    return Err(Error::Manifest(format!(
                        "layer {i}: kernel and stride must be positive"
                    )));
                }
                if in_channels != cur {
                    return Err(Error::Manifest(format!(
                        "layer {i}: expects {in_channels} channels but receives {cur}"
                    )));
                }
                out_channels
            }
            LayerSpec::Fc { out_features, .. } => out_features,
            LayerSpec::SkipAdd { source } => {
                if source > i {
                    return Err(Error::Manifest(format!(
                        "layer {i}: skip source {source} is not earlier in the chain"
                    )));
                }
                if channels_at[source] != cur {
                    return Err(Error::Manifest(format!(
                        "layer {i}: skip source has {} channels, current {cur}",
                        channels_at[source]
                    )));
                }
                cur
            }
            _ => cur,
        };
        let count = layer.scalar_count();
        let end = layer.offset().checked_add(count).ok_or_else(|| {
            Error::Manifest(format!("layer {i}: weight offset overflows"))
        })?;
        if count > 0 && end > blob_scalars {
            return Err(Error::Manifest(format!(
                "layer {i}: needs scalars [{}, {end}) but blob has {blob_scalars}",
                layer.offset()
            )));
        }
        channels_at.push(next);
    }
    validate_architecture(manifest)
}

fn strip_offsets(layers: &[LayerSpec]) -> Vec<LayerSpec> {
    layers.iter().map(|l| l.clone().with_offset(0)).collect()
}

fn validate_architecture(manifest: &Manifest) -> Result<()> {
    let expected = match manifest.architecture.as_str() {
        "net_k" => {
            let m = net_k_manifest(&manifest.blob);
            if manifest.input_channels != m.input_channels || !manifest.beta_input {
                return Err(Error::Manifest(
                    "net_k takes 2 input channels with a beta plane".into(),
                ));
            }
            m.layers
        }
        "net_x" => {
            if manifest.input_channels < 2 || !manifest.beta_input {
                return Err(Error::Manifest(
                    "net_x takes the image channels plus a beta plane".into(),
                ));
            }
            net_x_layers(manifest.input_channels - 1)
        }
        "hypanet" => {
            let stages = manifest.stages.ok_or_else(|| {
                Error::Manifest("hypanet manifest must declare stages".into())
            })?;
            if stages == 0 {
                return Err(Error::Manifest("hypanet stages must be positive".into()));
            }
            if manifest.input_channels != 2 || manifest.beta_input {
                return Err(Error::Manifest(
                    "hypanet takes 2 scalar inputs and no beta plane".into(),
                ));
            }
            hypanet_layers(stages)
        }
        "custom" => return Ok(()),
        other => {
            return Err(Error::Manifest(format!(
                "unknown architecture '{other}'"
            )))
        }
    };
    if strip_offsets(&manifest.layers) != strip_offsets(&expected) {
        return Err(Error::Manifest(format!(
            "layer list does not match the {} template",
            manifest.architecture
        )));
    }
    Ok(())
}

/// Deterministic random weights for a manifest, scaled by 1/sqrt(fan-in) per
/// layer, for tests and synthetic checkpoints.
pub fn random_weights(manifest: &Manifest, seed: u64) -> Vec<f32> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0f32; manifest.required_scalars()];
    for layer in &manifest.layers {
        let count = layer.scalar_count();
        if count == 0 {
            continue;
        }
        let fan_in = match *layer {
            LayerSpec::Conv {
                in_channels,
                kernel,
                ..
            }
            | LayerSpec::ConvTranspose {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerSpec::Fc { in_features, .. } => in_features,
            _ => 1,
        };
        let a = (1.0 / fan_in as f64).sqrt();
        for slot in &mut weights[layer.offset()..layer.offset() + count] {
            *slot = rng.gen_range(-a..a) as f32;
        }
    }
    weights
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn custom_manifest(input_channels: usize, layers: Vec<LayerSpec>) -> Manifest {
        Manifest {
            architecture: "custom".into(),
            input_channels,
            beta_input: false,
            stages: None,
            layers: assign_sequential_offsets(layers),
            blob: "w.bin".into(),
        }
    }

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Image::from_vec(c, h, w, data).unwrap()
    }

    #[test]
    fn conv_identity_with_bias_matches_hand_result() {
        let m = custom_manifest(
            1,
            vec![LayerSpec::Conv {
                in_channels: 1,
                out_channels: 1,
                kernel: 1,
                stride: 1,
                padding: 0,
                bias: true,
                offset: 0,
            }],
        );
        let net = Network::from_parts(m, &[2.0, -1.0]).unwrap();
        let x = Image::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn conv_zero_padding_shortens_border_sums() {
        // all-ones 3x3 kernel over an all-ones image counts in-bounds taps
        let m = custom_manifest(
            1,
            vec![LayerSpec::Conv {
                in_channels: 1,
                out_channels: 1,
                kernel: 3,
                stride: 1,
                padding: 1,
                bias: false,
                offset: 0,
            }],
        );
        let net = Network::from_parts(m, &[1.0; 9]).unwrap();
        let x = Image::from_vec(1, 3, 3, vec![1.0; 9]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.get(0, 0, 0), 4.0);
        assert_eq!(y.get(0, 0, 1), 6.0);
        assert_eq!(y.get(0, 1, 1), 9.0);
    }

    #[test]
    fn strided_conv_pools_blocks() {
        let m = custom_manifest(
            1,
            vec![LayerSpec::Conv {
                in_channels: 1,
                out_channels: 1,
                kernel: 2,
                stride: 2,
                padding: 0,
                bias: false,
                offset: 0,
            }],
        );
        let net = Network::from_parts(m, &[0.25; 4]).unwrap();
        let x = Image::from_vec(1, 4, 4, (0..16).map(|v| v as f64).collect()).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!((y.height(), y.width()), (2, 2));
        assert_eq!(y.get(0, 0, 0), (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        assert_eq!(y.get(0, 1, 1), (10.0 + 11.0 + 14.0 + 15.0) / 4.0);
    }

    #[test]
    fn conv_transpose_scatters_and_doubles_size() {
        let m = custom_manifest(
            1,
            vec![LayerSpec::ConvTranspose {
                in_channels: 1,
                out_channels: 1,
                kernel: 2,
                stride: 2,
                padding: 0,
                bias: false,
                offset: 0,
            }],
        );
        let net = Network::from_parts(m, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = Image::from_vec(1, 2, 2, vec![1.0, 10.0, 100.0, 1000.0]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!((y.height(), y.width()), (4, 4));
        // each input pixel stamps the 2x2 weight block scaled by its value
        assert_eq!(y.get(0, 0, 0), 1.0);
        assert_eq!(y.get(0, 0, 1), 2.0);
        assert_eq!(y.get(0, 1, 0), 3.0);
        assert_eq!(y.get(0, 1, 1), 4.0);
        assert_eq!(y.get(0, 0, 2), 10.0);
        assert_eq!(y.get(0, 3, 3), 4000.0);
    }

    #[test]
    fn conv_transpose_adjoint_of_strided_conv() {
        // <conv(x), y> == <x, conv_transpose(y)> with shared weights
        let (k, stride) = (2usize, 2usize);
        let w: Vec<f64> = (0..k * k).map(|i| 0.3 * i as f64 - 0.4).collect();
        let x = random_image(1, 6, 6, 1);
        let y = random_image(1, 3, 3, 2);
        let cx = conv_forward(&x, &w, None, 1, 1, k, stride, 0).unwrap();
        let ty = conv_transpose_forward(&y, &w, None, 1, 1, k, stride, 0).unwrap();
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn fc_applies_matrix_and_bias() {
        let m = custom_manifest(
            2,
            vec![LayerSpec::Fc {
                in_features: 2,
                out_features: 2,
                bias: true,
                offset: 0,
            }],
        );
        let net = Network::from_parts(m, &[1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
        let x = Image::from_vec(2, 1, 1, vec![10.0, 20.0]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[10.0 + 40.0 + 0.5, 30.0 + 80.0 - 0.5]);
    }

    #[test]
    fn activations_match_reference_values() {
        let m = custom_manifest(1, vec![LayerSpec::LeakyRelu { slope: 0.01 }]);
        let net = Network::from_parts(m, &[]).unwrap();
        let x = Image::from_vec(1, 1, 2, vec![-3.0, 5.0]).unwrap();
        assert_eq!(net.forward(&x).unwrap().data(), &[-0.03, 5.0]);

        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(0.0) - 2.0f64.ln()).abs() < 1e-15);
        assert!((softplus(1.0) - (1.0 + 1.0f64.exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn skip_add_doubles_through_identity_conv() {
        let m = custom_manifest(
            1,
            vec![
                LayerSpec::Conv {
                    in_channels: 1,
                    out_channels: 1,
                    kernel: 1,
                    stride: 1,
                    padding: 0,
                    bias: false,
                    offset: 0,
                },
                LayerSpec::SkipAdd { source: 0 },
            ],
        );
        let net = Network::from_parts(m, &[1.0]).unwrap();
        let x = random_image(1, 3, 4, 3);
        let y = net.forward(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn manifest_json_and_disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = net_k_manifest("net_k.bin");
        let weights = random_weights(&manifest, 7);
        let net = Network::from_parts(manifest.clone(), &weights).unwrap();
        let path = dir.path().join("net_k.json");
        net.save(&path).unwrap();
        let loaded = Network::load(&path).unwrap();
        assert_eq!(loaded.manifest(), &manifest);
        assert_eq!(loaded.weights, net.weights);

        let round: Manifest =
            serde_json::from_str(&serde_json::to_string(&manifest).unwrap()).unwrap();
        assert_eq!(round, manifest);
    }

    #[test]
    fn validation_rejects_broken_manifests() {
        // truncated blob
        let manifest = net_k_manifest("w.bin");
        let short = vec![0.0f32; manifest.required_scalars() - 1];
        assert!(Network::from_parts(manifest.clone(), &short).is_err());

        // non-finite weight
        let mut weights = random_weights(&manifest, 1);
        weights[10] = f32::NAN;
        assert!(Network::from_parts(manifest.clone(), &weights).is_err());

        // channel chain break
        let bad = custom_manifest(
            1,
            vec![
                LayerSpec::Conv {
                    in_channels: 1,
                    out_channels: 4,
                    kernel: 1,
                    stride: 1,
                    padding: 0,
                    bias: false,
                    offset: 0,
                },
                LayerSpec::Conv {
                    in_channels: 8,
                    out_channels: 1,
                    kernel: 1,
                    stride: 1,
                    padding: 0,
                    bias: false,
                    offset: 4,
                },
            ],
        );
        assert!(Network::from_parts(bad, &[0.0; 12]).is_err());

        // template mismatch under a registered name
        let mut tampered = net_k_manifest("w.bin");
        tampered.layers.pop();
        let n = tampered.required_scalars();
        assert!(Network::from_parts(tampered, &vec![0.0; n]).is_err());

        // unknown architecture
        let mut unknown = net_k_manifest("w.bin");
        unknown.architecture = "net_q".into();
        let n = unknown.required_scalars();
        assert!(Network::from_parts(unknown, &vec![0.0; n]).is_err());

        // skip source with a different channel count
        let bad_skip = custom_manifest(
            1,
            vec![
                LayerSpec::Conv {
                    in_channels: 1,
                    out_channels: 2,
                    kernel: 1,
                    stride: 1,
                    padding: 0,
                    bias: false,
                    offset: 0,
                },
                LayerSpec::SkipAdd { source: 0 },
            ],
        );
        assert!(Network::from_parts(bad_skip, &[0.0; 2]).is_err());
    }

    #[test]
    fn net_k_forward_is_nonnegative_and_shape_preserving() {
        let manifest = net_k_manifest("w.bin");
        let weights = random_weights(&manifest, 11);
        let net = Network::from_parts(manifest, &weights).unwrap();
        let kernel_plane = random_image(1, 11, 11, 4);
        let out = net.forward_with_beta(&kernel_plane, 0.7).unwrap();
        assert_eq!((out.channels(), out.height(), out.width()), (1, 11, 11));
        assert!(out.data().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn hypanet_outputs_four_positive_values_per_stage() {
        let stages = 6;
        let manifest = hypanet_manifest(stages, "w.bin");
        let net =
            Network::from_parts(manifest.clone(), &random_weights(&manifest, 5)).unwrap();
        let input = Image::from_vec(2, 1, 1, vec![2.0, 7.65 / 255.0]).unwrap();
        let out = net.forward(&input).unwrap();
        assert_eq!(out.len(), 4 * stages);
        assert!(out.data().iter().all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn net_x_template_chains_and_counts_weights() {
        let manifest = net_x_manifest(3, "w.bin");
        // validate with a claimed blob of exactly the required size
        validate_manifest(&manifest, manifest.required_scalars()).unwrap();

        // head and tail plus 7 blocks of 4 residual units (4 layers each),
        // 3 downs, 3 ups each followed by a skip
        assert_eq!(manifest.layers.len(), 1 + 7 * 16 + 3 + 6 + 1);

        // independent parameter tally
        let convp = |ci: usize, co: usize, k: usize| ci * co * k * k + co;
        let unit = |c: usize| 2 * convp(c, c, 3);
        let mut total = convp(4, 64, 3) + convp(64, 3, 3);
        for &(lo, hi) in &[(64, 128), (128, 256), (256, 512)] {
            total += convp(lo, hi, 2) + convp(hi, lo, 2);
        }
        total += 8 * unit(64) + 8 * unit(128) + 8 * unit(256) + 4 * unit(512);
        assert_eq!(manifest.required_scalars(), total);
    }

    #[test]
    fn small_net_x_style_chain_runs_end_to_end() {
        // custom chain exercising down, up, and cross-resolution skip wiring
        let layers = vec![
            conv(2, 4, 3, 1, 1),
            LayerSpec::Relu,
            conv(4, 8, 2, 2, 0),
            LayerSpec::Relu,
            conv_t(8, 4, 2, 2, 0),
            LayerSpec::SkipAdd { source: 1 },
            conv(4, 1, 3, 1, 1),
        ];
        let m = custom_manifest(2, layers);
        let net = Network::from_parts(m.clone(), &random_weights(&m, 9)).unwrap();
        let x = random_image(2, 8, 8, 10);
        let y = net.forward(&x).unwrap();
        assert_eq!((y.channels(), y.height(), y.width()), (1, 8, 8));
        assert!(y.data().iter().all(|v| v.is_finite()));
    }
}
