use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Conv3d,
    Maxpool2d,
    Maxpool3d,
    Dense,
    Relu,
    Sigmoid,
    Softmax,
    Dropout,
    Upsample3d,
    Flatten,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Conv3d => "conv3d",
            LayerKind::Maxpool2d => "maxpool2d",
            LayerKind::Maxpool3d => "maxpool3d",
            LayerKind::Dense => "dense",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Softmax => "softmax",
            LayerKind::Dropout => "dropout",
            LayerKind::Upsample3d => "upsample3d",
            LayerKind::Flatten => "flatten",
        }
    }

    pub fn has_parameters(self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::Conv3d | LayerKind::Dense)
    }
}

/// One layer of a sequential model.
///
/// `kernel_shape` holds the convolution/pooling window or the upsampling
/// factors. `padding` is one `[before, after]` pair per spatial axis.
/// `kernel_count` is the number of output channels (conv) or units (dense).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernel_shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stride: Vec<usize>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub kernel_count: usize,
    #[serde(default, skip_serializing_if = "is_zero_f64")]
    pub dropout_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub padding: Vec<[usize; 2]>,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

fn is_zero_f64(v: &f64) -> bool {
    *v == 0.0
}

impl LayerSpec {
    fn bare(kind: LayerKind) -> Self {
        Self {
            kind,
            kernel_shape: Vec::new(),
            stride: Vec::new(),
            kernel_count: 0,
            dropout_rate: 0.0,
            padding: Vec::new(),
        }
    }

    pub fn conv2d(kernels: usize, kernel: [usize; 2], stride: [usize; 2], padding: [[usize; 2]; 2]) -> Self {
        Self {
            kernel_shape: kernel.to_vec(),
            stride: stride.to_vec(),
            kernel_count: kernels,
            padding: padding.to_vec(),
            ..Self::bare(LayerKind::Conv2d)
        }
    }

    pub fn conv3d(kernels: usize, kernel: [usize; 3], stride: [usize; 3], padding: [[usize; 2]; 3]) -> Self {
        Self {
            kernel_shape: kernel.to_vec(),
            stride: stride.to_vec(),
            kernel_count: kernels,
            padding: padding.to_vec(),
            ..Self::bare(LayerKind::Conv3d)
        }
    }

    /// Convolution whose zero padding preserves each axis for stride one.
    pub fn conv3d_same(kernels: usize, kernel: [usize; 3]) -> Self {
        let pad = kernel.map(|k| [(k - 1) / 2, k / 2]);
        Self::conv3d(kernels, kernel, [1, 1, 1], pad)
    }

    pub fn conv2d_same(kernels: usize, kernel: [usize; 2]) -> Self {
        let pad = kernel.map(|k| [(k - 1) / 2, k / 2]);
        Self::conv2d(kernels, kernel, [1, 1], pad)
    }

    pub fn maxpool2d(window: [usize; 2]) -> Self {
        Self {
            kernel_shape: window.to_vec(),
            stride: window.to_vec(),
            ..Self::bare(LayerKind::Maxpool2d)
        }
    }

    pub fn maxpool3d(window: [usize; 3]) -> Self {
        Self {
            kernel_shape: window.to_vec(),
            stride: window.to_vec(),
            ..Self::bare(LayerKind::Maxpool3d)
        }
    }

    pub fn dense(units: usize) -> Self {
        Self {
            kernel_count: units,
            ..Self::bare(LayerKind::Dense)
        }
    }

    pub fn dropout(rate: f64) -> Self {
        Self {
            dropout_rate: rate,
            ..Self::bare(LayerKind::Dropout)
        }
    }

    pub fn upsample3d(factors: [usize; 3]) -> Self {
        Self {
            kernel_shape: factors.to_vec(),
            ..Self::bare(LayerKind::Upsample3d)
        }
    }

    pub fn relu() -> Self {
        Self::bare(LayerKind::Relu)
    }

    pub fn sigmoid() -> Self {
        Self::bare(LayerKind::Sigmoid)
    }

    pub fn softmax() -> Self {
        Self::bare(LayerKind::Softmax)
    }

    pub fn flatten() -> Self {
        Self::bare(LayerKind::Flatten)
    }

    /// Output shape (without batch axis) for a given input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let invalid = |reason: String| TensorError::InvalidLayer {
            index,
            kind: self.kind.name().to_string(),
            reason,
        };
        match self.kind {
            LayerKind::Conv2d | LayerKind::Conv3d => {
                let geom = self.window_geometry(index, input, true)?;
                if self.kernel_count == 0 {
                    return Err(invalid("kernel_count must be positive".into()));
                }
                let mut out = geom.out_dims;
                out.push(self.kernel_count);
                Ok(out)
            }
            LayerKind::Maxpool2d | LayerKind::Maxpool3d => {
                let geom = self.window_geometry(index, input, false)?;
                let mut out = geom.out_dims;
                out.push(geom.channels);
                Ok(out)
            }
            LayerKind::Dense => {
                if input.len() != 1 {
                    return Err(invalid(format!("expects a flat input, got {input:?}")));
                }
                if self.kernel_count == 0 {
                    return Err(invalid("kernel_count must be positive".into()));
                }
                Ok(vec![self.kernel_count])
            }
            LayerKind::Dropout => {
                if !(0.0..1.0).contains(&self.dropout_rate) {
                    return Err(invalid(format!("dropout rate {} outside [0,1)", self.dropout_rate)));
                }
                Ok(input.to_vec())
            }
            LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Softmax => Ok(input.to_vec()),
            LayerKind::Upsample3d => {
                if input.len() != 4 || self.kernel_shape.len() != 3 {
                    return Err(invalid(format!(
                        "expects (x, y, f, c) input and 3 factors, got {input:?} / {:?}",
                        self.kernel_shape
                    )));
                }
                if self.kernel_shape.contains(&0) {
                    return Err(invalid("upsampling factors must be positive".into()));
                }
                Ok(vec![
                    input[0] * self.kernel_shape[0],
                    input[1] * self.kernel_shape[1],
                    input[2] * self.kernel_shape[2],
                    input[3],
                ])
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub(crate) fn window_geometry(&self, index: usize, input: &[usize], padded: bool) -> Result<WindowGeometry> {
        let invalid = |reason: String| TensorError::InvalidLayer {
            index,
            kind: self.kind.name().to_string(),
            reason,
        };
        let spatial = match self.kind {
            LayerKind::Conv2d | LayerKind::Maxpool2d => 2,
            _ => 3,
        };
        if input.len() != spatial + 1 {
            return Err(invalid(format!("expects {} input axes, got {input:?}", spatial + 1)));
        }
        if self.kernel_shape.len() != spatial {
            return Err(invalid(format!("kernel_shape needs {spatial} extents")));
        }
        let stride = if self.stride.is_empty() {
            if padded {
                vec![1; spatial]
            } else {
                self.kernel_shape.clone()
            }
        } else {
            self.stride.clone()
        };
        if stride.len() != spatial {
            return Err(invalid(format!("stride needs {spatial} extents")));
        }
        let padding = if self.padding.is_empty() {
            vec![[0, 0]; spatial]
        } else {
            self.padding.clone()
        };
        if padding.len() != spatial {
            return Err(invalid(format!("padding needs {spatial} pairs")));
        }
        if !padded && padding.iter().any(|p| p != &[0, 0]) {
            return Err(invalid("pooling does not take padding".into()));
        }
        if self.kernel_shape.contains(&0) || stride.contains(&0) {
            return Err(invalid("kernel and stride extents must be positive".into()));
        }
        let mut geom = WindowGeometry {
            in_dims: [1; 3],
            kernel: [1; 3],
            stride: [1; 3],
            pad: [[0, 0]; 3],
            out_dims: Vec::with_capacity(spatial),
            channels: input[spatial],
        };
        for a in 0..spatial {
            let span = input[a] + padding[a][0] + padding[a][1];
            if span < self.kernel_shape[a] {
                return Err(invalid(format!(
                    "axis {a}: padded extent {span} smaller than kernel {}",
                    self.kernel_shape[a]
                )));
            }
            let out = (span - self.kernel_shape[a]) / stride[a] + 1;
            geom.in_dims[a] = input[a];
            geom.kernel[a] = self.kernel_shape[a];
            geom.stride[a] = stride[a];
            geom.pad[a] = padding[a];
            geom.out_dims.push(out);
        }
        Ok(geom)
    }
}

/// Spatial geometry of a windowed layer, lifted to three axes.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct WindowGeometry {
    pub in_dims: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [[usize; 2]; 3],
    pub out_dims: Vec<usize>,
    pub channels: usize,
}

impl WindowGeometry {
    pub fn out3(&self) -> [usize; 3] {
        let mut o = [1; 3];
        o[..self.out_dims.len()].copy_from_slice(&self.out_dims);
        o
    }
}

/// Architecture of a sequential model. `input_shape` excludes the batch axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self {
            name: name.into(),
            input_shape,
            layers,
        }
    }

    /// Shapes flowing between layers: entry 0 is the input, entry `i + 1`
    /// the output of layer `i`.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(TensorError::ZeroExtent(self.input_shape.clone()));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(i, shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().expect("input shape present"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.shapes()?;
        Ok(spec)
    }
}
