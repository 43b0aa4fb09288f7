use std::fmt;

use super::tape::{Tape, Var};
use super::tensor::{norm, Tensor};
use crate::error::{Error, Result};

/// Default ceiling on dense jacobian entries.
pub const JACOBIAN_LIMIT: usize = 10_000_000;

/// A differentiable map from `R^input_dim` to `R^output_dim`.
///
/// `record` receives an `[n, input_dim]` batch already on the tape and must
/// return the `[n, output_dim]` result.
pub trait DiffMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn record(&self, tape: &mut Tape, input: Var) -> Result<Var>;
}

impl<T: DiffMap + ?Sized> DiffMap for &T {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn record(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        (**self).record(tape, input)
    }
}

/// Wraps a closure that records a graph. Handy for ad-hoc maps and tests.
pub struct FnMap<F> {
    input_dim: usize,
    output_dim: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&mut Tape, Var) -> Result<Var> + Send + Sync,
{
    pub fn new(input_dim: usize, output_dim: usize, f: F) -> Self {
        FnMap {
            input_dim,
            output_dim,
            f,
        }
    }
}

impl<F> DiffMap for FnMap<F>
where
    F: Fn(&mut Tape, Var) -> Result<Var> + Send + Sync,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn record(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        (self.f)(tape, input)
    }
}

impl<F> fmt::Debug for FnMap<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnMap({} -> {})", self.input_dim, self.output_dim)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl DiffMap for Identity {
    fn input_dim(&self) -> usize {
        self.0
    }
    fn output_dim(&self) -> usize {
        self.0
    }
    fn record(&self, _tape: &mut Tape, input: Var) -> Result<Var> {
        Ok(input)
    }
}

/// A forward pass kept on its tape for repeated backward passes.
pub struct Trace {
    tape: Tape,
    input: Var,
    output: Var,
    vector_io: bool,
}

impl Trace {
    pub fn new<M: DiffMap + ?Sized>(map: &M, input: &Tensor) -> Result<Self> {
        let vector_io = input.shape().len() == 1;
        let (_, cols) = input.dims2();
        if cols != map.input_dim() || input.shape().len() > 2 {
            return Err(Error::Dimension {
                op: "evaluate",
                node: Some(0),
                detail: format!("input {:?}, map expects {} columns", input.shape(), map.input_dim()),
            });
        }
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let out = map.record(&mut tape, x)?;
        let (r, c) = tape.shape(out);
        if c != map.output_dim() || r != input.rows() {
            return Err(Error::Dimension {
                op: "evaluate",
                node: Some(out.index()),
                detail: format!("output [{r}, {c}], map declares {}", map.output_dim()),
            });
        }
        tape.check_finite(0)?;
        Ok(Trace {
            tape,
            input: x,
            output: out,
            vector_io,
        })
    }

    pub fn output(&self) -> Tensor {
        let v = self.tape.value(self.output).clone();
        if self.vector_io {
            let n = v.len();
            v.reshape(vec![n]).expect("same size")
        } else {
            v
        }
    }

    /// `seedᵀ · J` at the traced input, shaped like the input.
    pub fn vjp(&mut self, seed: &Tensor) -> Result<Tensor> {
        let out_shape = self.tape.shape(self.output);
        if seed.dims2() != out_shape || seed.len() != out_shape.0 * out_shape.1 {
            return Err(Error::Dimension {
                op: "gradient",
                node: Some(self.output.index()),
                detail: format!("seed {:?} vs output {:?}", seed.shape(), out_shape),
            });
        }
        let g = self
            .tape
            .grad_values(self.output, seed, &[self.input])?
            .pop()
            .expect("one gradient");
        if self.vector_io {
            let n = g.len();
            g.reshape(vec![n])
        } else {
            Ok(g)
        }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }
}

pub fn evaluate<M: DiffMap + ?Sized>(map: &M, input: &Tensor) -> Result<Tensor> {
    Ok(Trace::new(map, input)?.output())
}

/// Vector-Jacobian product `seedᵀ J_map(input)`.
pub fn gradient<M: DiffMap + ?Sized>(map: &M, input: &Tensor, seed: &Tensor) -> Result<Tensor> {
    Trace::new(map, input)?.vjp(seed)
}

pub fn jacobian<M: DiffMap + ?Sized>(map: &M, input: &Tensor) -> Result<Tensor> {
    jacobian_with_limit(map, input, JACOBIAN_LIMIT)
}

/// Dense `output_dim x input_dim` jacobian, one reverse pass per row.
pub fn jacobian_with_limit<M: DiffMap + ?Sized>(
    map: &M,
    input: &Tensor,
    limit: usize,
) -> Result<Tensor> {
    let (d_in, d_out) = (map.input_dim(), map.output_dim());
    let required = d_in.saturating_mul(d_out);
    if required > limit {
        return Err(Error::Capacity {
            required,
            allowed: limit,
        });
    }
    if input.len() != d_in {
        return Err(Error::dim("jacobian", format!("single input of length {d_in} required")));
    }
    let x = input.clone().reshape(vec![d_in])?;
    let mut trace = Trace::new(map, &x)?;
    let mut data = Vec::with_capacity(required);
    let mut seed = vec![0.0; d_out];
    for i in 0..d_out {
        seed[i] = 1.0;
        let row = trace.vjp(&Tensor::vector(seed.clone()))?;
        data.extend_from_slice(row.data());
        seed[i] = 0.0;
    }
    Tensor::matrix(d_out, d_in, data)
}

/// Central-difference jacobian, used as an independent check on reverse mode.
pub fn finite_difference_jacobian<M: DiffMap + ?Sized>(
    map: &M,
    input: &Tensor,
    step: f64,
) -> Result<Tensor> {
    let (d_in, d_out) = (map.input_dim(), map.output_dim());
    let x = input.clone().reshape(vec![d_in])?;
    let mut jac = Tensor::zeros(&[d_out, d_in]);
    let mut xp = x.clone();
    for j in 0..d_in {
        let x0 = x.data()[j];
        xp.data_mut()[j] = x0 + step;
        let fp = evaluate(map, &xp)?;
        xp.data_mut()[j] = x0 - step;
        let fm = evaluate(map, &xp)?;
        xp.data_mut()[j] = x0;
        for i in 0..d_out {
            jac.set(i, j, (fp.data()[i] - fm.data()[i]) / (2.0 * step));
        }
    }
    Ok(jac)
}

/// Worst relative error, over output rows, between the reverse-mode jacobian
/// and central differences with the given step. Rows whose norms are both
/// below `1e-12` count as exact.
pub fn grad_check<M: DiffMap + ?Sized>(map: &M, input: &Tensor, step: f64) -> Result<f64> {
    if step <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let j = jacobian(map, input)?;
    let fd = finite_difference_jacobian(map, input, step)?;
    let mut worst = 0.0_f64;
    for i in 0..j.rows() {
        let a = j.row_slice(i);
        let b = fd.row_slice(i);
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let scale = norm(a).max(norm(b));
        let err = if scale < 1e-12 { norm(&diff) } else { norm(&diff) / scale };
        worst = worst.max(err);
    }
    Ok(worst)
}
