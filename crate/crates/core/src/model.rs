//! CNN architectures as data, plus the per-segment cost model.
//!
//! A network is described layer by layer. The unit of work everywhere else in
//! this crate is the *segment*: one feature map produced by layer `l-1` and
//! consumed by layer `l`. Computing a segment through a convolutional layer
//! costs `S^2 * P * o^2` multiplications (filter side, output maps, output
//! spatial side of the consuming layer); activation and pooling layers cost
//! nothing; a fully connected layer costs `n_prev * n` for its whole input.
//!
//! Presets fold element-wise activations into the layer that produces them,
//! so a preset layer list contains only `Conv`, `MaxPool` and
//! `FullyConnected` entries. The `Activation` kind remains available for
//! hand-built networks and model files.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default memory word length in bits used to size weights and feature maps.
pub const DEFAULT_WORD_BITS: u64 = 4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer {index} is not a convolutional layer")]
    NotConv { index: usize },
    #[error("layer {index} is not a fully connected layer")]
    NotFullyConnected { index: usize },
    #[error("unknown CNN preset {name:?} (available: {available})")]
    UnknownPreset { name: String, available: String },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("failed to parse model file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Activation,
    MaxPool,
    FullyConnected,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Conv => write!(f, "conv"),
            LayerKind::Activation => write!(f, "activation"),
            LayerKind::MaxPool => write!(f, "max_pool"),
            LayerKind::FullyConnected => write!(f, "fully_connected"),
        }
    }
}

/// One layer of a CNN.
///
/// `out_maps` is the number of feature maps the layer produces (always 1 for
/// fully connected layers), `out_spatial` the side length of each output map
/// in pixels, `neurons` the neuron count of a fully connected layer and
/// `weights_per_segment` the stored weight count a device needs in order to
/// compute one segment of this layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(default)]
    pub index: usize,
    pub kind: LayerKind,
    #[serde(default)]
    pub filter_size: u64,
    #[serde(default)]
    pub out_maps: u64,
    #[serde(default)]
    pub out_spatial: u64,
    #[serde(default)]
    pub neurons: u64,
    #[serde(default)]
    pub weights_per_segment: u64,
}

impl LayerSpec {
    pub fn is_fc(&self) -> bool {
        self.kind == LayerKind::FullyConnected
    }
}

/// A full network description bound to the dataset it classifies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub name: String,
    pub dataset: String,
    pub input_channels: u64,
    pub input_spatial: u64,
    pub layers: Vec<LayerSpec>,
}

/// Multiplications needed to push one segment (one feature map of the
/// preceding layer) through the convolutional layer `conv`.
pub fn conv_segment_cost(feeding: &LayerSpec, conv: &LayerSpec) -> Result<u64, ModelError> {
    if conv.kind != LayerKind::Conv {
        return Err(ModelError::NotConv { index: conv.index });
    }
    debug_assert!(
        feeding.index == 0 || conv.index == 0 || feeding.index + 1 == conv.index,
        "segment cost pairs a layer with the layer feeding it"
    );
    Ok(conv.filter_size * conv.filter_size * conv.out_maps * conv.out_spatial * conv.out_spatial)
}

/// Multiplications needed by the fully connected layer `fc` for its whole
/// input. When the previous layer is not fully connected its flattened
/// output size `P * o^2` stands in for the neuron count.
pub fn fc_cost(fc: &LayerSpec, prev: &LayerSpec) -> Result<u64, ModelError> {
    if fc.kind != LayerKind::FullyConnected {
        return Err(ModelError::NotFullyConnected { index: fc.index });
    }
    let n_prev = if prev.is_fc() {
        prev.neurons
    } else {
        prev.out_maps * prev.out_spatial * prev.out_spatial
    };
    Ok(n_prev * fc.neurons)
}

/// Memory demand in bits of one segment of `layer`: stored weights times the
/// word length.
pub fn segment_memory(layer: &LayerSpec, word_bits: u64) -> u64 {
    layer.weights_per_segment * word_bits
}

impl CnnSpec {
    /// Number of layers `L`.
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Layer by 1-based index.
    pub fn layer(&self, l: usize) -> &LayerSpec {
        &self.layers[l - 1]
    }

    /// Feature maps produced by layer `l`; layer 0 is the input image with
    /// `input_channels` maps.
    pub fn width(&self, l: usize) -> u64 {
        if l == 0 {
            self.input_channels
        } else {
            self.layer(l).out_maps
        }
    }

    /// Spatial side of layer `l`'s output; layer 0 is the input image.
    pub fn out_spatial(&self, l: usize) -> u64 {
        if l == 0 {
            self.input_spatial
        } else {
            self.layer(l).out_spatial
        }
    }

    /// Segments to be computed at layer `l`, i.e. the maps of layer `l-1`.
    pub fn segments_at(&self, l: usize) -> u64 {
        self.width(l - 1)
    }

    /// 1-based index of the first fully connected layer, if any.
    pub fn first_fc_index(&self) -> Option<usize> {
        self.layers.iter().position(LayerSpec::is_fc).map(|i| i + 1)
    }

    /// Flattened input size feeding layer `l`.
    pub fn input_size(&self, l: usize) -> u64 {
        if l == 1 {
            return self.input_channels * self.input_spatial * self.input_spatial;
        }
        let prev = self.layer(l - 1);
        if prev.is_fc() {
            prev.neurons
        } else {
            prev.out_maps * prev.out_spatial * prev.out_spatial
        }
    }

    /// Multiplications for one segment of layer `l`. Fully connected layers
    /// are costed as a whole since their input is never split.
    pub fn segment_cost(&self, l: usize) -> u64 {
        let layer = self.layer(l);
        match layer.kind {
            LayerKind::Conv => {
                layer.filter_size
                    * layer.filter_size
                    * layer.out_maps
                    * layer.out_spatial
                    * layer.out_spatial
            }
            LayerKind::Activation | LayerKind::MaxPool => 0,
            LayerKind::FullyConnected => self.input_size(l) * layer.neurons,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Invalid("a CNN needs at least one layer".into()));
        }
        if self.input_channels == 0 || self.input_spatial == 0 {
            return Err(ModelError::Invalid(
                "input channels and spatial size must be positive".into(),
            ));
        }
        if !self.layers.last().unwrap().is_fc() {
            return Err(ModelError::Invalid(
                "the last layer must be fully connected".into(),
            ));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let l = i + 1;
            if layer.index != l {
                return Err(ModelError::Invalid(format!(
                    "layer {} carries index {}",
                    l, layer.index
                )));
            }
            match layer.kind {
                LayerKind::Conv => {
                    if layer.filter_size == 0 || layer.out_spatial == 0 || layer.out_maps == 0 {
                        return Err(ModelError::Invalid(format!(
                            "conv layer {} needs positive filter size, maps and spatial size",
                            l
                        )));
                    }
                }
                LayerKind::Activation | LayerKind::MaxPool => {
                    if layer.out_maps != self.width(l - 1) {
                        return Err(ModelError::Invalid(format!(
                            "layer {} must preserve the map count of its input",
                            l
                        )));
                    }
                    if layer.out_spatial == 0 {
                        return Err(ModelError::Invalid(format!(
                            "layer {} needs a positive spatial size",
                            l
                        )));
                    }
                }
                LayerKind::FullyConnected => {
                    if layer.neurons == 0 {
                        return Err(ModelError::Invalid(format!(
                            "fully connected layer {} needs at least one neuron",
                            l
                        )));
                    }
                    if layer.out_maps != 1 {
                        return Err(ModelError::Invalid(format!(
                            "fully connected layer {} must produce exactly one map",
                            l
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

// --- presets ---------------------------------------------------------------

const PRESET_NAMES: [&str; 4] = ["LeNet", "CifarCnn", "VGG16", "VGG19"];

struct Builder {
    layers: Vec<LayerSpec>,
    ch: u64,
    spatial: u64,
}

impl Builder {
    fn new(ch: u64, spatial: u64) -> Self {
        Builder { layers: Vec::new(), ch, spatial }
    }

    fn prev_width(&self) -> u64 {
        self.layers.last().map_or(self.ch, |l| l.out_maps)
    }

    fn prev_flat(&self) -> u64 {
        match self.layers.last() {
            None => self.ch * self.spatial * self.spatial,
            Some(p) if p.is_fc() => p.neurons,
            Some(p) => p.out_maps * p.out_spatial * p.out_spatial,
        }
    }

    fn conv(mut self, filter: u64, maps: u64, spatial: u64) -> Self {
        let weights = filter * filter * self.prev_width() + 1;
        self.layers.push(LayerSpec {
            index: self.layers.len() + 1,
            kind: LayerKind::Conv,
            filter_size: filter,
            out_maps: maps,
            out_spatial: spatial,
            neurons: 0,
            weights_per_segment: weights,
        });
        self
    }

    fn pool(mut self, spatial: u64) -> Self {
        let maps = self.prev_width();
        self.layers.push(LayerSpec {
            index: self.layers.len() + 1,
            kind: LayerKind::MaxPool,
            filter_size: 0,
            out_maps: maps,
            out_spatial: spatial,
            neurons: 0,
            weights_per_segment: 0,
        });
        self
    }

    fn fc(mut self, neurons: u64) -> Self {
        let weights = self.prev_flat() * neurons + neurons;
        self.layers.push(LayerSpec {
            index: self.layers.len() + 1,
            kind: LayerKind::FullyConnected,
            filter_size: 0,
            out_maps: 1,
            out_spatial: 1,
            neurons,
            weights_per_segment: weights,
        });
        self
    }

    fn build(self, name: &str, dataset: &str) -> CnnSpec {
        let cnn = CnnSpec {
            name: name.into(),
            dataset: dataset.into(),
            input_channels: self.ch,
            input_spatial: self.spatial,
            layers: self.layers,
        };
        debug_assert!(cnn.validate().is_ok());
        cnn
    }
}

/// Built-in architectures. Activations are folded into the producing layer;
/// convolutions use size-preserving padding and pools halve the spatial side.
pub fn load_preset(name: &str) -> Result<CnnSpec, ModelError> {
    match name {
        // 28x28 grayscale digits: two 8-map conv blocks and a 120/84/10 head.
        "LeNet" => Ok(Builder::new(1, 28)
            .conv(5, 8, 28)
            .pool(14)
            .conv(5, 8, 14)
            .pool(7)
            .fc(120)
            .fc(84)
            .fc(10)
            .build("LeNet", "MNIST")),
        // 32x32 RGB, three conv blocks capped at 128 maps, small head.
        "CifarCnn" => Ok(Builder::new(3, 32)
            .conv(3, 64, 32)
            .conv(3, 64, 32)
            .pool(16)
            .conv(3, 128, 16)
            .conv(3, 128, 16)
            .pool(8)
            .conv(3, 128, 8)
            .conv(3, 128, 8)
            .pool(4)
            .fc(256)
            .fc(10)
            .build("CifarCnn", "CIFAR")),
        // 128x128 RGB input, 196 output classes.
        "VGG16" => Ok(Builder::new(3, 128)
            .conv(3, 64, 128)
            .conv(3, 64, 128)
            .pool(64)
            .conv(3, 128, 64)
            .conv(3, 128, 64)
            .pool(32)
            .conv(3, 256, 32)
            .conv(3, 256, 32)
            .conv(3, 256, 32)
            .pool(16)
            .conv(3, 512, 16)
            .conv(3, 512, 16)
            .conv(3, 512, 16)
            .pool(8)
            .conv(3, 512, 8)
            .conv(3, 512, 8)
            .conv(3, 512, 8)
            .pool(4)
            .fc(4096)
            .fc(4096)
            .fc(196)
            .build("VGG16", "CAR")),
        // 128x128 RGB input, identity classification head.
        "VGG19" => Ok(Builder::new(3, 128)
            .conv(3, 64, 128)
            .conv(3, 64, 128)
            .pool(64)
            .conv(3, 128, 64)
            .conv(3, 128, 64)
            .pool(32)
            .conv(3, 256, 32)
            .conv(3, 256, 32)
            .conv(3, 256, 32)
            .conv(3, 256, 32)
            .pool(16)
            .conv(3, 512, 16)
            .conv(3, 512, 16)
            .conv(3, 512, 16)
            .conv(3, 512, 16)
            .pool(8)
            .conv(3, 512, 8)
            .conv(3, 512, 8)
            .conv(3, 512, 8)
            .conv(3, 512, 8)
            .pool(4)
            .fc(4096)
            .fc(4096)
            .fc(10177)
            .build("VGG19", "CELEBA")),
        other => Err(ModelError::UnknownPreset {
            name: other.to_string(),
            available: PRESET_NAMES.join(", "),
        }),
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &PRESET_NAMES
}

// --- file format -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    name: String,
    dataset: String,
    input_channels: u64,
    input_spatial: u64,
    layers: Vec<LayerSpec>,
}

/// Loads a model description from a TOML file. Layer indices are assigned
/// from file order; missing weight counts are filled in with the same
/// derivation the presets use (`S^2 * input maps + 1` per conv segment, full
/// weight matrix plus biases for fully connected layers).
pub fn load_model_file(path: &Path) -> Result<CnnSpec, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = toml::from_str(&text).map_err(|e| ModelError::Parse(e.to_string()))?;
    if file.format_version != 1 {
        return Err(ModelError::Parse(format!(
            "unsupported model format_version {}",
            file.format_version
        )));
    }
    let mut cnn = CnnSpec {
        name: file.name,
        dataset: file.dataset,
        input_channels: file.input_channels,
        input_spatial: file.input_spatial,
        layers: file.layers,
    };
    for i in 0..cnn.layers.len() {
        cnn.layers[i].index = i + 1;
        if cnn.layers[i].kind == LayerKind::FullyConnected {
            if cnn.layers[i].out_maps == 0 {
                cnn.layers[i].out_maps = 1;
            }
            if cnn.layers[i].out_spatial == 0 {
                cnn.layers[i].out_spatial = 1;
            }
        }
        if cnn.layers[i].weights_per_segment == 0 {
            let prev_width = cnn.width(i);
            let flat = cnn.input_size(i + 1);
            let layer = &mut cnn.layers[i];
            layer.weights_per_segment = match layer.kind {
                LayerKind::Conv => layer.filter_size * layer.filter_size * prev_width + 1,
                LayerKind::FullyConnected => flat * layer.neurons + layer.neurons,
                LayerKind::Activation | LayerKind::MaxPool => 0,
            };
        }
    }
    cnn.validate()?;
    Ok(cnn)
}

pub fn save_model_file(cnn: &CnnSpec, path: &Path) -> Result<(), ModelError> {
    let file = ModelFile {
        format_version: 1,
        name: cnn.name.clone(),
        dataset: cnn.dataset.clone(),
        input_channels: cnn.input_channels,
        input_spatial: cnn.input_spatial,
        layers: cnn.layers.clone(),
    };
    let text = toml::to_string_pretty(&file).map_err(|e| ModelError::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}
