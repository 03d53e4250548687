//! The shared classifier: a ReLU multilayer perceptron ending in softmax.

use std::fmt::Write as _;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{relu_values, Shape, Tape, Var};
use crate::error::{dim_err, Error, Result};
use crate::prob::ProbVector;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &str = "IMBASSL-CKPT-1";

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `[outputs x inputs]`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    dims: Vec<usize>,
    layers: Vec<DenseLayer<T>>,
}

/// Parameter leaves of one model registered on a tape, in `[W0, b0, W1, b1, ..]` order.
pub struct ModelVars<'t, T> {
    pub layers: Vec<(Var<'t, T>, Var<'t, T>)>,
}

impl<'t, T: Scalar> ModelVars<'t, T> {
    /// Gradients per parameter array, in the same order as [`Mlp::param_arrays`].
    pub fn grads(&self) -> Vec<Vec<T>> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.grad(), b.grad()])
            .collect()
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "model needs at least input and output dims, got {dims:?}"
        )));
    }
    if dims.iter().any(|d| *d == 0) {
        return Err(Error::Config(format!("zero-width layer in {dims:?}")));
    }
    Ok(())
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights, zero biases. Deterministic in `(dims, seed)`.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                DenseLayer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out)
                        .map(|_| T::of(dist.sample(&mut rng)))
                        .collect(),
                    bias: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
        })
    }

    /// All parameters zero; predicts the uniform distribution everywhere.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|p| DenseLayer {
                inputs: p[0],
                outputs: p[1],
                weights: vec![T::zero(); p[0] * p[1]],
                bias: vec![T::zero(); p[1]],
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.dims.last().expect("validated dims")
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn param_arrays(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_arrays_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn params_flat(&self) -> Vec<T> {
        self.param_arrays().concat()
    }

    pub fn set_params_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return dim_err(format!(
                "{} parameters supplied for a model with {}",
                flat.len(),
                self.param_count()
            ));
        }
        let mut offset = 0;
        for arr in self.param_arrays_mut() {
            let n = arr.len();
            arr.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn register<'t>(&self, tape: &'t Tape<T>) -> ModelVars<'t, T> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = tape
                    .leaf(l.weights.clone(), Shape::Matrix(l.outputs, l.inputs))
                    .expect("layer shapes are consistent");
                let b = tape.vector(l.bias.clone());
                (w, b)
            })
            .collect();
        ModelVars { layers }
    }

    /// Logits for one input, recorded on `tape`.
    pub fn logits_on<'t>(
        &self,
        tape: &'t Tape<T>,
        vars: &ModelVars<'t, T>,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let mut h = x;
        let last = vars.layers.len() - 1;
        for (i, (w, b)) in vars.layers.iter().enumerate() {
            h = tape.linear(*w, *b, h)?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    pub fn proba_on<'t>(
        &self,
        tape: &'t Tape<T>,
        vars: &ModelVars<'t, T>,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let logits = self.logits_on(tape, vars, x)?;
        tape.softmax(logits)
    }

    /// Tape-free forward pass.
    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return dim_err(format!(
                "input of length {} for a model expecting {}",
                x.len(),
                self.input_dim()
            ));
        }
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = l.bias.clone();
            for (r, o) in out.iter_mut().enumerate() {
                let row = &l.weights[r * l.inputs..(r + 1) * l.inputs];
                let mut acc = T::zero();
                for (w, v) in row.iter().zip(&h) {
                    acc += *w * *v;
                }
                *o += acc;
            }
            h = if i < last { relu_values(&out) } else { out };
        }
        Ok(h)
    }

    pub fn predict_proba(&self, x: &[T]) -> Result<ProbVector<T>> {
        ProbVector::from_logits(&self.logits(x)?)
    }

    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "dims {}", dims.join(",")).unwrap();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, values) in [("W", &l.weights), ("b", &l.bias)] {
                writeln!(out, "{name}{i} {}", values.len()).unwrap();
                let line: Vec<String> = values.iter().map(|v| v.as_f64().to_string()).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        let parse_err = |line: usize, message: String| Error::Parse { line, message };

        match lines.next() {
            Some((_, CHECKPOINT_MAGIC)) => {}
            Some((n, other)) => {
                return Err(parse_err(n, format!("expected {CHECKPOINT_MAGIC}, found {other:?}")))
            }
            None => return Err(parse_err(1, "empty checkpoint".into())),
        }
        let (n, dims_line) = lines.next().ok_or_else(|| parse_err(2, "missing dims".into()))?;
        let dims: Vec<usize> = dims_line
            .strip_prefix("dims ")
            .ok_or_else(|| parse_err(n, "expected `dims a,b,..`".into()))?
            .split(',')
            .map(|d| d.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(n, format!("bad dims: {e}")))?;
        let mut model = Self::zeros(&dims)?;

        for (i, layer) in model.layers.iter_mut().enumerate() {
            for (name, target) in [("W", &mut layer.weights), ("b", &mut layer.bias)] {
                let (hn, header) = lines
                    .next()
                    .ok_or_else(|| parse_err(0, format!("missing {name}{i}")))?;
                let expected_header = format!("{name}{i} {}", target.len());
                if header != expected_header {
                    return Err(parse_err(
                        hn,
                        format!("expected {expected_header:?}, found {header:?}"),
                    ));
                }
                let (vn, values) = lines
                    .next()
                    .ok_or_else(|| parse_err(hn + 1, format!("missing values for {name}{i}")))?;
                let parsed: Vec<f64> = values
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(vn, format!("bad value: {e}")))?;
                if parsed.len() != target.len() {
                    return Err(parse_err(
                        vn,
                        format!("{} values, expected {}", parsed.len(), target.len()),
                    ));
                }
                for (t, v) in target.iter_mut().zip(parsed) {
                    *t = T::of(v);
                }
            }
        }
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}
