use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Valid (unpadded) convolution over `[channels, height, width]`.
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    Flatten,
}

impl Layer {
    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    /// Output shape (without batch dimension) for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::ShapeMismatch {
            expected: self.expected_input(),
            got: input.to_vec(),
        };
        match *self {
            Layer::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(bad());
                }
                Ok(vec![outputs])
            }
            Layer::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
            } => {
                if input.len() != 3 || input[0] != in_ch || input[1] < kernel || input[2] < kernel {
                    return Err(bad());
                }
                Ok(vec![
                    out_ch,
                    (input[1] - kernel) / stride + 1,
                    (input[2] - kernel) / stride + 1,
                ])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn expected_input(&self) -> Vec<usize> {
        match *self {
            Layer::Dense { inputs, .. } => vec![inputs],
            Layer::Conv2d { in_ch, kernel, .. } => vec![in_ch, kernel, kernel],
            _ => vec![],
        }
    }

    /// Weight and bias shapes.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            Layer::Dense { inputs, outputs } => Some((vec![outputs, inputs], vec![outputs])),
            Layer::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((vec![out_ch, in_ch, kernel, kernel], vec![out_ch])),
            _ => None,
        }
    }

    /// (fan_in, fan_out) for initialization.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            Layer::Dense { inputs, outputs } => Some((inputs, outputs)),
            Layer::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((in_ch * kernel * kernel, out_ch * kernel * kernel)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, seed: u64) -> Result<Self> {
        let spec = Self {
            input_shape,
            layers,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidParams("network needs at least one layer".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidParams("input shape must be non-empty and positive".into()));
        }
        for l in &self.layers {
            let ok = match *l {
                Layer::Dense { inputs, outputs } => inputs > 0 && outputs > 0,
                Layer::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                } => in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0,
                _ => true,
            };
            if !ok {
                return Err(Error::InvalidParams(format!("degenerate layer {l:?}")));
            }
        }
        self.shapes().map(|_| ())
    }

    /// Per-sample shapes: input of layer 0, then the output of every layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut out = vec![self.input_shape.clone()];
        for l in &self.layers {
            let next = l.output_shape(out.last().unwrap())?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().unwrap())
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().map(|s| s.iter().product()).unwrap_or(0)
    }

    /// Parameterized layer indices with their parameter names.
    pub fn param_names(&self) -> Vec<(usize, String, String)> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.has_params())
            .map(|(i, _)| (i, format!("{i}.weight"), format!("{i}.bias")))
            .collect()
    }

    /// Pixel-mode torso plus a dense head with `outputs` units.
    pub fn pixel_torso(outputs: usize, seed: u64) -> Self {
        Self::new(
            vec![4, 84, 84],
            vec![
                Layer::Conv2d {
                    in_ch: 4,
                    out_ch: 16,
                    kernel: 8,
                    stride: 4,
                },
                Layer::Relu,
                Layer::Conv2d {
                    in_ch: 16,
                    out_ch: 32,
                    kernel: 4,
                    stride: 2,
                },
                Layer::Relu,
                Layer::Flatten,
                Layer::Dense {
                    inputs: 32 * 9 * 9,
                    outputs: 256,
                },
                Layer::Relu,
                Layer::Dense {
                    inputs: 256,
                    outputs,
                },
            ],
            seed,
        )
        .expect("pixel torso is well formed")
    }

    /// Feature-mode torso (two hidden layers of `hidden`) plus a dense head.
    pub fn feature_torso(inputs: usize, hidden: usize, outputs: usize, seed: u64) -> Self {
        Self::new(
            vec![inputs],
            vec![
                Layer::Dense {
                    inputs,
                    outputs: hidden,
                },
                Layer::Relu,
                Layer::Dense {
                    inputs: hidden,
                    outputs: hidden,
                },
                Layer::Relu,
                Layer::Dense {
                    inputs: hidden,
                    outputs,
                },
            ],
            seed,
        )
        .expect("feature torso is well formed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_torso_shapes() {
        let s = NetworkSpec::pixel_torso(5, 0);
        let shapes = s.shapes().unwrap();
        assert_eq!(shapes[1], vec![16, 20, 20]);
        assert_eq!(shapes[3], vec![32, 9, 9]);
        assert_eq!(s.output_shape().unwrap(), vec![5]);
    }

    #[test]
    fn incompatible_layers_rejected() {
        let err = NetworkSpec::new(
            vec![3],
            vec![Layer::Dense { inputs: 4, outputs: 2 }],
            0,
        );
        assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
        assert!(NetworkSpec::new(vec![3], vec![], 0).is_err());
    }
}
