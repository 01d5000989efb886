use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::network::NetworkSpec;
use crate::error::Error;

/// The small classifiers used for the MNIST-scale experiments.
///
/// * `Mlp`: three fully connected layers with ReLU, dropout 0.2 after the
///   two hidden layers.
/// * `CnnMp`: three 3x3 convolutions each followed by ReLU and 2x2 max
///   pooling, then two fully connected layers.
/// * `CnnNone`: `CnnMp` without the pooling layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Mlp,
    CnnMp,
    CnnNone,
}

const MLP_HIDDEN: [usize; 2] = [512, 256];
const CNN_CHANNELS: [usize; 3] = [8, 16, 16];
const CNN_HIDDEN: usize = 128;

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Mlp, Arch::CnnMp, Arch::CnnNone];

    pub fn spec(self, input: &[usize], classes: usize) -> NetworkSpec {
        let mut layers = Vec::new();
        match self {
            Arch::Mlp => {
                layers.push(LayerSpec::Flatten);
                for h in MLP_HIDDEN {
                    layers.push(LayerSpec::dense(h));
                    layers.push(LayerSpec::Relu);
                    layers.push(LayerSpec::Dropout { p: 0.2 });
                }
            }
            Arch::CnnMp | Arch::CnnNone => {
                for c in CNN_CHANNELS {
                    layers.push(LayerSpec::conv(c));
                    layers.push(LayerSpec::Relu);
                    if self == Arch::CnnMp {
                        layers.push(LayerSpec::max_pool());
                    }
                }
                layers.push(LayerSpec::Flatten);
                layers.push(LayerSpec::dense(CNN_HIDDEN));
                layers.push(LayerSpec::Relu);
            }
        }
        layers.push(LayerSpec::dense(classes));
        NetworkSpec { input: input.to_vec(), layers }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Mlp => "mlp",
            Arch::CnnMp => "cnn-mp",
            Arch::CnnNone => "cnn-none",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(Arch::Mlp),
            "cnn-mp" | "cnn_mp" => Ok(Arch::CnnMp),
            "cnn-none" | "cnn_none" => Ok(Arch::CnnNone),
            other => Err(Error::InvalidArgument(format!(
                "unknown architecture '{other}' (expected mlp, cnn-mp or cnn-none)"
            ))),
        }
    }
}
