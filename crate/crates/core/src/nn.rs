//! Layers built from tape primitives: dense stacks and the layer-norm LSTM.

use rand::Rng;

use crate::autodiff::{glorot_init, LstmInput, LstmVars, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Epsilon inside every layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dense {
    pub weight: String,
    pub bias: String,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

/// Multilayer perceptron: rectifier on every layer except the last,
/// which is linear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub name: String,
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes` lists the output width of each layer in order.
    pub fn new(name: &str, input: usize, sizes: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(sizes.len());
        let mut width = input;
        for (k, &out) in sizes.iter().enumerate() {
            let activation = if k + 1 == sizes.len() {
                Activation::Linear
            } else {
                Activation::Relu
            };
            layers.push(Dense {
                weight: format!("{name}.{k}.weight"),
                bias: format!("{name}.{k}.bias"),
                input: width,
                output: out,
                activation,
            });
            width = out;
        }
        Mlp {
            name: name.to_string(),
            layers,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    /// Glorot kernels and zero biases.
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        for l in &self.layers {
            store.insert(l.weight.clone(), glorot_init([l.input, l.output], rng));
            store.insert(l.bias.clone(), Tensor::zeros(&[l.output]));
        }
    }

    /// Applies the stack row-wise to a `batch×input` matrix.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        if tape.value(x).cols() != self.input_width() {
            return Err(Error::shape(
                "mlp_forward",
                format!(
                    "{} expects width {}, got {:?}",
                    self.name,
                    self.input_width(),
                    tape.value(x).shape()
                ),
            ));
        }
        let mut h = x;
        for l in &self.layers {
            let w = tape.param(store, &l.weight)?;
            let b = tape.param(store, &l.bias)?;
            h = tape.linear(h, w, b, l.activation == Activation::Relu)?;
        }
        Ok(h)
    }
}

/// Gate order inside the fused kernel: input, candidate, forget, output.
pub const LSTM_GATES: [&str; 4] = ["input", "candidate", "forget", "output"];

/// LSTM cell with layer normalization on each gate pre-activation and the
/// rectifier as candidate and output activation.
///
/// Parameters: `kernel` maps `[input ‖ h]` to the four stacked gate
/// pre-activations, `bias` is added before normalization, and each gate has
/// its own normalization gain and shift. The forget gate's shift starts at
/// one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmCell {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(name: &str, input: usize, hidden: usize) -> Self {
        LstmCell {
            name: name.to_string(),
            input,
            hidden,
        }
    }

    pub fn kernel_name(&self) -> String {
        format!("{}.kernel", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn gain_name(&self, gate: &str) -> String {
        format!("{}.norm_{gate}.gain", self.name)
    }

    pub fn shift_name(&self, gate: &str) -> String {
        format!("{}.norm_{gate}.shift", self.name)
    }

    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        let h = self.hidden;
        store.insert(self.kernel_name(), glorot_init([self.input + h, 4 * h], rng));
        store.insert(self.bias_name(), Tensor::zeros(&[4 * h]));
        for gate in LSTM_GATES {
            store.insert(self.gain_name(gate), Tensor::ones(&[h]));
            let shift = if gate == "forget" { T::one() } else { T::zero() };
            store.insert(self.shift_name(gate), Tensor::full(&[h], shift));
        }
    }

    /// Rows of the kernel acting on the input, as a tape variable.
    pub fn input_kernel<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Result<Var> {
        let kernel = tape.param(store, &self.kernel_name())?;
        tape.slice_rows(kernel, 0, self.input)
    }

    /// One recurrent step; returns the new `(hidden, cell)` pair.
    pub fn step<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        input: Var,
        hidden: Var,
        cell: Var,
    ) -> Result<(Var, Var)> {
        if tape.value(input).cols() != self.input {
            return Err(Error::shape(
                "lstm_cell",
                format!("{}: input {:?}, expected width {}", self.name, tape.value(input).shape(), self.input),
            ));
        }
        let k_in = self.input_kernel(tape, store)?;
        let projected = tape.matmul(input, k_in)?;
        self.step_projected(tape, store, LstmInput::Rows(projected), hidden, cell)
    }

    /// Like [`LstmCell::step`] with the input already multiplied by
    /// [`LstmCell::input_kernel`]. Lets callers project before an
    /// aggregation that commutes with the product.
    pub fn step_projected<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        projected: LstmInput,
        hidden: Var,
        cell: Var,
    ) -> Result<(Var, Var)> {
        let kernel = tape.param(store, &self.kernel_name())?;
        let recurrent = tape.slice_rows(kernel, self.input, self.hidden)?;
        let bias = tape.param(store, &self.bias_name())?;
        let mut gains = [bias; 4];
        let mut shifts = [bias; 4];
        for (k, gate) in LSTM_GATES.iter().enumerate() {
            gains[k] = tape.param(store, &self.gain_name(gate))?;
            shifts[k] = tape.param(store, &self.shift_name(gate))?;
        }
        let vars = LstmVars {
            recurrent,
            bias,
            gains,
            shifts,
        };
        let eps = T::from_f64_lossy(LAYER_NORM_EPS);
        tape.lstm_cell(projected, hidden, cell, vars, eps)
            .map_err(|e| match e {
                Error::Shape { detail, .. } => Error::shape("lstm_cell", format!("{}: {detail}", self.name)),
                other => other,
            })
    }

    /// The same step composed from elementary tape operations.
    pub fn step_reference<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        input: Var,
        hidden: Var,
        cell: Var,
    ) -> Result<(Var, Var)> {
        let h = self.hidden;
        let kernel = tape.param(store, &self.kernel_name())?;
        let bias = tape.param(store, &self.bias_name())?;
        let joined = tape.concat_cols(input, hidden)?;
        let projected = tape.matmul(joined, kernel)?;
        let pre = tape.add_row(projected, bias)?;

        let eps = T::from_f64_lossy(LAYER_NORM_EPS);
        let mut gates = [pre; 4];
        for (k, gate) in LSTM_GATES.iter().enumerate() {
            let slice = tape.slice_cols(pre, k * h, h)?;
            let gain = tape.param(store, &self.gain_name(gate))?;
            let shift = tape.param(store, &self.shift_name(gate))?;
            gates[k] = tape.layer_norm(slice, gain, shift, eps)?;
        }
        let i = tape.sigmoid(gates[0]);
        let j = tape.relu(gates[1]);
        let f = tape.sigmoid(gates[2]);
        let o = tape.sigmoid(gates[3]);

        let kept = tape.mul(cell, f)?;
        let written = tape.mul(i, j)?;
        let new_cell = tape.add(kept, written)?;
        let act = tape.relu(new_cell);
        let new_hidden = tape.mul(act, o)?;
        Ok((new_hidden, new_cell))
    }
}
