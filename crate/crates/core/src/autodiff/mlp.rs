use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::map::DiffMap;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// `x · weight + bias`, with `weight: [in, out]` and `bias: [1, out]`.
    Linear { weight: Tensor, bias: Tensor },
    Act(Activation),
}

/// Fully connected network of alternating linear layers and activations.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let mut width: Option<usize> = None;
        let mut any_linear = false;
        for l in &layers {
            if let Layer::Linear { weight, bias } = l {
                let (i, o) = weight.dims2();
                if bias.dims2() != (1, o) {
                    return Err(Error::dim("mlp", format!("bias {:?} for weight [{i}, {o}]", bias.shape())));
                }
                if let Some(w) = width {
                    if w != i {
                        return Err(Error::dim("mlp", format!("layer expects {i} inputs, previous emits {w}")));
                    }
                }
                width = Some(o);
                any_linear = true;
            }
        }
        if !any_linear {
            return Err(Error::invalid("mlp needs at least one linear layer"));
        }
        Ok(Mlp { layers })
    }

    /// Linear layers with the given widths, `act` between them and none after
    /// the last. Weights are `N(0, gain² / fan_in)`, biases zero.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], act: Activation, gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output width");
        let mut layers = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = gain / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            layers.push(Layer::Linear {
                weight: Tensor::matrix(fan_in, fan_out, data).expect("sized"),
                bias: Tensor::zeros(&[1, fan_out]),
            });
            if i + 2 < sizes.len() {
                layers.push(Layer::Act(act));
            }
        }
        Mlp { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Linear { weight, bias } => vec![weight, bias],
                Layer::Act(_) => vec![],
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Linear { weight, bias } => vec![weight, bias],
                Layer::Act(_) => vec![],
            })
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if let Layer::Linear { .. } = l {
                names.push(format!("l{i}.weight"));
                names.push(format!("l{i}.bias"));
            }
        }
        names
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Puts every parameter on the tape as a leaf, in `params()` order.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Forward pass using parameter nodes from [`Mlp::leaves`].
    pub fn record_with(&self, tape: &mut Tape, x: Var, params: &[Var]) -> Result<Var> {
        self.record_prefix(tape, x, params, self.layers.len())
    }

    fn record_prefix(&self, tape: &mut Tape, x: Var, params: &[Var], upto: usize) -> Result<Var> {
        let mut h = x;
        let mut p = params.iter();
        for l in &self.layers[..upto] {
            h = match l {
                Layer::Linear { .. } => {
                    let w = *p.next().expect("weight leaf");
                    let b = *p.next().expect("bias leaf");
                    let hw = tape.matmul(h, w)?;
                    tape.add_row(hw, b)?
                }
                Layer::Act(Activation::Tanh) => tape.tanh(h)?,
                Layer::Act(Activation::Relu) => tape.relu(h)?,
            };
        }
        Ok(h)
    }

    fn last_linear(&self) -> usize {
        self.layers
            .iter()
            .rposition(|l| matches!(l, Layer::Linear { .. }))
            .expect("validated")
    }

    /// Output of the penultimate layer (everything before the last linear map).
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let params = self.leaves(&mut tape);
        let h = self.record_prefix(&mut tape, xv, &params, self.last_linear())?;
        let out = tape.value(h).clone();
        if x.shape().len() == 1 {
            let n = out.len();
            out.reshape(vec![n])
        } else {
            Ok(out)
        }
    }

    pub fn feature_dim(&self) -> usize {
        match &self.layers[self.last_linear()] {
            Layer::Linear { weight, .. } => weight.rows(),
            Layer::Act(_) => unreachable!(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut arch = Vec::new();
        let mut params = BTreeMap::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Linear { weight, bias } => {
                    let (inp, out) = weight.dims2();
                    arch.push(LayerSpec::Linear { inputs: inp, outputs: out });
                    params.insert(format!("l{i}.weight"), ParamBlob::from(weight));
                    params.insert(format!("l{i}.bias"), ParamBlob::from(bias));
                }
                Layer::Act(a) => arch.push(LayerSpec::Activation { function: *a }),
            }
        }
        Checkpoint { arch, params }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut layers = Vec::with_capacity(ck.arch.len());
        for (i, spec) in ck.arch.iter().enumerate() {
            match *spec {
                LayerSpec::Linear { inputs, outputs } => {
                    let get = |name: String, shape: [usize; 2]| -> Result<Tensor> {
                        let blob = ck.params.get(&name).ok_or_else(|| Error::MissingField(name.clone()))?;
                        if blob.shape != shape {
                            return Err(Error::dim("checkpoint", format!("{name}: {:?} vs {shape:?}", blob.shape)));
                        }
                        Tensor::new(blob.shape.clone(), blob.data.clone())
                    };
                    layers.push(Layer::Linear {
                        weight: get(format!("l{i}.weight"), [inputs, outputs])?,
                        bias: get(format!("l{i}.bias"), [1, outputs])?,
                    });
                }
                LayerSpec::Activation { function } => layers.push(Layer::Act(function)),
            }
        }
        Self::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)?;
        Self::from_checkpoint(&ck)
    }
}

impl DiffMap for Mlp {
    fn input_dim(&self) -> usize {
        match self.layers.iter().find(|l| matches!(l, Layer::Linear { .. })) {
            Some(Layer::Linear { weight, .. }) => weight.rows(),
            _ => unreachable!("validated"),
        }
    }

    fn output_dim(&self) -> usize {
        match &self.layers[self.last_linear()] {
            Layer::Linear { weight, .. } => weight.cols(),
            Layer::Act(_) => unreachable!(),
        }
    }

    fn record(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let params = self.leaves(tape);
        self.record_with(tape, input, &params)
    }
}

/// JSON checkpoint: `{"arch": [...], "params": {name: {shape, data}}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: Vec<LayerSpec>,
    pub params: BTreeMap<String, ParamBlob>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear { inputs: usize, outputs: usize },
    Activation { function: Activation },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlob {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl From<&Tensor> for ParamBlob {
    fn from(t: &Tensor) -> Self {
        ParamBlob {
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }
}
