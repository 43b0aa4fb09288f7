use rand::Rng;

use super::loss::{softmax, LossKind};
use crate::autodiff::{jacobian, Activation, DiffMap, Mlp, Tape, Tensor, Trace, Var};
use crate::error::{Error, Result};

/// A network producing `C` logits from an ambient vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    net: Mlp,
}

/// Loss gradient split into per-logit weights and their weighted sum of
/// input gradients.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub weights: Vec<f64>,
    pub reconstructed: Vec<f64>,
}

impl Classifier {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.output_dim() < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        Ok(Classifier { net })
    }

    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        classes: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        let gain = match act {
            Activation::Relu => std::f64::consts::SQRT_2,
            Activation::Tanh => 1.0,
        };
        Classifier {
            net: Mlp::random(&sizes, act, gain, rng),
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.classes() {
            return Err(Error::invalid(format!("label {y} outside 0..{}", self.classes())));
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(crate::autodiff::evaluate(&self.net, &Tensor::vector(x.to_vec()))?.into_data())
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    pub fn class_loss(&self, x: &[f64], y: usize, kind: LossKind) -> Result<f64> {
        self.check_label(y)?;
        Ok(kind.value(&self.logits(x)?, y))
    }

    /// Loss value and its gradient with respect to `x`.
    pub fn loss_gradient(&self, x: &[f64], y: usize, kind: LossKind) -> Result<(f64, Vec<f64>)> {
        self.check_label(y)?;
        let map = ClassLoss::new(self, y, kind)?;
        let mut tr = Trace::new(&map, &Tensor::vector(x.to_vec()))?;
        let value = tr.output().data()[0];
        let g = tr.vjp(&Tensor::vector(vec![1.0]))?;
        Ok((value, g.into_data()))
    }

    /// `C x d` matrix whose row `i` is `∇x f_i`.
    pub fn input_gradients(&self, x: &[f64]) -> Result<Tensor> {
        jacobian(&self.net, &Tensor::vector(x.to_vec()))
    }

    /// `∇x L = Σ_i (∂L/∂f_i) ∇x f_i`.
    pub fn decompose_loss_gradient(&self, x: &[f64], y: usize, kind: LossKind) -> Result<Decomposition> {
        self.check_label(y)?;
        let logits = self.logits(x)?;
        let weights = kind.logit_weights(&logits, y);
        let reconstructed = self.input_gradients(x)?.matvec_t(&weights);
        Ok(Decomposition {
            weights,
            reconstructed,
        })
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net.features(&Tensor::vector(x.to_vec()))?.into_data())
    }

    /// Fraction of `(x, y)` pairs classified correctly.
    pub fn accuracy<'a>(&self, samples: impl IntoIterator<Item = (&'a [f64], usize)>) -> Result<f64> {
        let (mut hit, mut n) = (0usize, 0usize);
        for (x, y) in samples {
            n += 1;
            if self.predict(x)? == y {
                hit += 1;
            }
        }
        if n == 0 {
            return Err(Error::invalid("accuracy of an empty set"));
        }
        Ok(hit as f64 / n as f64)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `x ↦ L(f(x), y)` as a scalar-valued map.
pub struct ClassLoss<'a> {
    classifier: &'a Classifier,
    y: usize,
    kind: LossKind,
}

impl<'a> ClassLoss<'a> {
    pub fn new(classifier: &'a Classifier, y: usize, kind: LossKind) -> Result<Self> {
        classifier.check_label(y)?;
        Ok(ClassLoss { classifier, y, kind })
    }
}

impl DiffMap for ClassLoss<'_> {
    fn input_dim(&self) -> usize {
        self.classifier.input_dim()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn record(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        if tape.shape(input).0 != 1 {
            return Err(Error::dim("class_loss", "expects a single input row"));
        }
        let logits = self.classifier.net.record(tape, input)?;
        self.kind.record(tape, logits, self.y)
    }
}
