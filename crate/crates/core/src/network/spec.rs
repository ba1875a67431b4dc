use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, Linear, ResidualBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    /// Plain VGG-style stack (8 conv layers).
    Vgg,
    /// Residual stack (5 plain + 3 downsampling residual blocks).
    Res,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
}

/// How the measurement vector is lifted to an `(n, numz, numr)` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputRepr {
    /// Each measurement is broadcast to a plane and passed through a learnable
    /// per-pixel affine map shared by all chords: `plane_i = x_i·W + B` with
    /// `W, B` of shape `(numz, numr)`.
    #[default]
    PixelAffine,
    /// Broadcast planes followed by a 3×3, n→n convolution.
    Conv3x3,
}

fn default_true() -> bool {
    true
}

/// Architecture description; fully determines the parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backbone: Backbone,
    pub use_pi: bool,
    pub final_activation: Activation,
    pub n: usize,
    pub numz: usize,
    pub numr: usize,
    #[serde(default)]
    pub input_repr: InputRepr,
    #[serde(default = "default_true")]
    pub batch_norm: bool,
}

/// One row of the per-layer parameter table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub stage: String,
    pub description: String,
    pub params: usize,
}

impl ModelSpec {
    pub fn new(
        backbone: Backbone,
        use_pi: bool,
        final_activation: Activation,
        n: usize,
        numz: usize,
        numr: usize,
    ) -> Self {
        ModelSpec {
            backbone,
            use_pi,
            final_activation,
            n,
            numz,
            numr,
            input_repr: InputRepr::PixelAffine,
            batch_norm: true,
        }
    }

    /// Display name in the `VggOnion_PI` style.
    pub fn name(&self) -> String {
        let base = match self.backbone {
            Backbone::Vgg => "VggOnion",
            Backbone::Res => "ResOnion",
        };
        if self.use_pi {
            format!("{base}_PI")
        } else {
            base.to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.numz == 0 || self.numr == 0 {
            return Err(Error::InvalidSpec(format!(
                "dims must be positive, got n={} numz={} numr={}",
                self.n, self.numz, self.numr
            )));
        }
        // two 2x2 pools in the VGG backbone and in the side chain
        let needs_pools = self.backbone == Backbone::Vgg || self.use_pi;
        if needs_pools && (self.numz < 4 || self.numr < 4) {
            return Err(Error::SpatialUnderflow(format!(
                "grid {}x{} cannot pass two 2x2 max-pools",
                self.numz, self.numr
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.numz * self.numr
    }

    /// Channel count of the backbone output and of the physical-information features.
    pub fn feature_channels(&self) -> usize {
        8 * self.n
    }

    /// Spatial size of the backbone output before flattening.
    pub fn backbone_out_hw(&self) -> (usize, usize) {
        match (self.backbone, self.use_pi) {
            (Backbone::Res, false) => {
                let (mut h, mut w) = (self.numz, self.numr);
                for _ in 0..3 {
                    h = h.div_ceil(2);
                    w = w.div_ceil(2);
                }
                (h, w)
            }
            _ => (3, 3),
        }
    }

    pub fn head_inputs(&self) -> usize {
        let (h, w) = self.backbone_out_hw();
        self.feature_channels() * h * w
    }

    pub fn layer_table(&self) -> Vec<LayerCount> {
        let n = self.n;
        let bn = self.batch_norm;
        let mut rows = Vec::new();
        let mut row = |stage: &str, description: String, params: usize| {
            rows.push(LayerCount {
                stage: stage.to_string(),
                description,
                params,
            })
        };
        let conv_bn = |cin: usize, cout: usize| {
            Conv2d::<f32>::parameter_count(cin, cout, 3)
                + if bn { BatchNorm2d::<f32>::parameter_count(cout) } else { 0 }
        };
        let suffix = if bn { " + bn" } else { "" };

        match self.input_repr {
            InputRepr::PixelAffine => row(
                "input",
                format!("pixel affine {}x{}", self.numz, self.numr),
                2 * self.cells(),
            ),
            InputRepr::Conv3x3 => row(
                "input",
                format!("conv 3x3 {n}->{n}"),
                Conv2d::<f32>::parameter_count(n, n, 3),
            ),
        }

        match self.backbone {
            Backbone::Vgg => {
                for (stage, cin, cout) in vgg_convs(n) {
                    row(stage, format!("conv 3x3 {cin}->{cout}{suffix}"), conv_bn(cin, cout));
                }
            }
            Backbone::Res => {
                for (stage, cin, cout, stride) in res_blocks(n) {
                    row(
                        stage,
                        format!("residual {cin}->{cout} stride {stride}{suffix}"),
                        ResidualBlock::<f32>::parameter_count(cin, cout, stride, bn),
                    );
                }
            }
        }

        if self.use_pi {
            for (stage, cin, cout) in side_convs(n) {
                row(stage, format!("conv 3x3 {cin}->{cout}{suffix}"), conv_bn(cin, cout));
            }
        }

        let cells = self.cells();
        row(
            "fc1",
            format!("linear {}->{cells}", self.head_inputs()),
            Linear::<f32>::parameter_count(self.head_inputs(), cells),
        );
        row(
            "fc2",
            format!("linear {cells}->{cells}"),
            Linear::<f32>::parameter_count(cells, cells),
        );
        rows
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_table().iter().map(|r| r.params).sum()
    }

    pub fn spec_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// `(stage, cin, cout)` of the eight VGG backbone convolutions.
pub(crate) fn vgg_convs(n: usize) -> Vec<(&'static str, usize, usize)> {
    vec![
        ("conv1", n, 2 * n),
        ("conv1", 2 * n, 2 * n),
        ("conv2", 2 * n, 4 * n),
        ("conv2", 4 * n, 4 * n),
        ("conv2", 4 * n, 4 * n),
        ("conv3", 4 * n, 8 * n),
        ("conv3", 8 * n, 8 * n),
        ("conv3", 8 * n, 8 * n),
    ]
}

/// `(stage, cin, cout, stride)` of the residual backbone blocks.
pub(crate) fn res_blocks(n: usize) -> Vec<(&'static str, usize, usize, usize)> {
    vec![
        ("res1", n, n, 1),
        ("res1", n, n, 1),
        ("res2_scale", n, 2 * n, 2),
        ("res2", 2 * n, 2 * n, 1),
        ("res3_scale", 2 * n, 4 * n, 2),
        ("res3", 4 * n, 4 * n, 1),
        ("res4_scale", 4 * n, 8 * n, 2),
        ("res4", 8 * n, 8 * n, 1),
    ]
}

/// `(stage, cin, cout)` of the six side-chain convolutions.
pub(crate) fn side_convs(n: usize) -> Vec<(&'static str, usize, usize)> {
    vec![
        ("side_conv1", n, 2 * n),
        ("side_conv1", 2 * n, 2 * n),
        ("side_conv2", 2 * n, 4 * n),
        ("side_conv2", 4 * n, 4 * n),
        ("side_conv3", 4 * n, 8 * n),
        ("side_conv3", 8 * n, 8 * n),
    ]
}
