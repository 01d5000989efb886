//! Feed-forward networks: inference, feature extraction and gradients.
//!
//! The training loss is softmax cross-entropy averaged over the batch (mean
//! reduction), so parameter gradients of a batch of two identical samples
//! equal the single-sample gradients.

use serde::{Deserialize, Serialize};

use super::layer::{self, Aux, ConvGeom, LayerSpec};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Per-sample input shape, e.g. `[1, 28, 28]`.
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

/// Parameter gradients, one entry per layer mirroring [`Network::params`].
pub type Gradients = Vec<Vec<Tensor>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    /// `shapes[0]` is the input shape, `shapes[i + 1]` the output of layer `i`.
    shapes: Vec<Vec<usize>>,
    params: Vec<Vec<Tensor>>,
    seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Mode {
    Eval,
    Train { step_seed: u64 },
}

pub(crate) struct Trace {
    inputs: Vec<Tensor>,
    aux: Vec<Aux>,
}

fn infer_shapes(spec: &NetworkSpec) -> Result<Vec<Vec<usize>>> {
    if spec.layers.is_empty() {
        return Err(Error::Config("network has no layers".into()));
    }
    if spec.input.is_empty() || spec.input.contains(&0) {
        return Err(Error::Config(format!("invalid input shape {:?}", spec.input)));
    }
    let mut shapes = vec![spec.input.clone()];
    for (i, l) in spec.layers.iter().enumerate() {
        let next = l.output_shape(i, shapes.last().expect("non-empty"))?;
        shapes.push(next);
    }
    Ok(shapes)
}

impl Network {
    /// Build a network with freshly initialized parameters.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = infer_shapes(&spec)?;
        let params = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| l.init_params(&shapes[i], &mut seed::rng(seed, seed::INIT, i as u64)))
            .collect();
        Ok(Self { spec, shapes, params, seed })
    }

    /// Build a network from explicit parameters.
    pub fn from_params(spec: NetworkSpec, params: Vec<Vec<Tensor>>, seed: u64) -> Result<Self> {
        let shapes = infer_shapes(&spec)?;
        if params.len() != spec.layers.len() {
            return Err(Error::Config(format!(
                "{} parameter groups for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        for (i, (l, p)) in spec.layers.iter().zip(&params).enumerate() {
            let want = l.param_shapes(&shapes[i]);
            let got: Vec<Vec<usize>> = p.iter().map(|t| t.shape().to_vec()).collect();
            if want != got {
                return Err(Error::LayerShape {
                    layer: i,
                    message: format!("parameter shapes {got:?}, expected {want:?}"),
                });
            }
            if p.iter().any(|t| !t.all_finite()) {
                return Err(Error::NonFinite(format!("parameters of layer {i}")));
            }
        }
        Ok(Self { spec, shapes, params, seed })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Vec<Tensor>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Vec<Tensor>] {
        &mut self.params
    }

    pub fn depth(&self) -> usize {
        self.spec.layers.len()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input
    }

    /// Per-sample output shape of layer `layer`.
    pub fn layer_output_shape(&self, layer: usize) -> &[usize] {
        &self.shapes[layer + 1]
    }

    /// Index of the layer feeding the final layer (the "second-to-last"
    /// representation used for feature analysis and inversion).
    pub fn penultimate_layer(&self) -> usize {
        self.depth().saturating_sub(2)
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().expect("non-empty").iter().product()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.shape().len() != self.spec.input.len() + 1 || batch.shape()[1..] != self.spec.input[..] {
            return Err(Error::LayerShape {
                layer: 0,
                message: format!(
                    "batch shape {:?} does not match network input [N, {:?}]",
                    batch.shape(),
                    self.spec.input
                ),
            });
        }
        Ok(())
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.depth() {
            return Err(Error::InvalidArgument(format!(
                "layer index {layer} out of range for depth {}",
                self.depth()
            )));
        }
        Ok(())
    }

    fn apply(&self, i: usize, x: &Tensor, mode: Mode) -> (Tensor, Aux) {
        let params = &self.params[i];
        match self.spec.layers[i] {
            LayerSpec::Dense { out, .. } => (layer::dense_forward(x, params, out), Aux::None),
            LayerSpec::Conv { out_channels, kernel, stride, padding, .. } => {
                let g = ConvGeom::new(&self.shapes[i], kernel, stride, padding);
                (layer::conv_forward(x, params, g, out_channels), Aux::None)
            }
            LayerSpec::MaxPool { size } => {
                let (y, arg) = layer::maxpool_forward(x, size);
                (y, Aux::Argmax(arg))
            }
            LayerSpec::Relu => (layer::relu_forward(x), Aux::None),
            LayerSpec::Dropout { p } => match mode {
                Mode::Eval => (x.clone(), Aux::None),
                Mode::Train { step_seed } => {
                    let mut rng = seed::rng(step_seed, seed::DROPOUT, i as u64);
                    let mask = layer::dropout_mask(x.len(), p, &mut rng);
                    (layer::mul_mask(x, &mask), Aux::Mask(mask))
                }
            },
            LayerSpec::Flatten => {
                let n = x.batch();
                let f = x.item_len();
                (x.clone().reshape(vec![n, f]).expect("flatten"), Aux::None)
            }
            LayerSpec::Softmax => {
                let y = layer::softmax_rows(x);
                (y.clone(), Aux::Output(y))
            }
        }
    }

    /// One layer in inference mode.
    pub(crate) fn apply_eval(&self, i: usize, x: &Tensor) -> Tensor {
        self.apply(i, x, Mode::Eval).0
    }

    /// Inference through layers `0..=upto` (dropout disabled).
    pub fn forward_to(&self, batch: &Tensor, upto: usize) -> Result<Tensor> {
        self.check_batch(batch)?;
        self.check_layer(upto)?;
        let mut x = self.apply(0, batch, Mode::Eval).0;
        for i in 1..=upto {
            x = self.apply(i, &x, Mode::Eval).0;
        }
        if !x.all_finite() {
            return Err(Error::NonFinite(format!("activation of layer {upto}")));
        }
        Ok(x)
    }

    /// Logits for a batch `[N, ..input]`, shape `[N, classes]`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let y = self.forward_to(batch, self.depth() - 1)?;
        let n = y.batch();
        let c = y.item_len();
        y.reshape(vec![n, c])
    }

    /// Flattened activations after `layer` for each sample, shape `[N, F]`.
    pub fn features(&self, batch: &Tensor, layer: usize) -> Result<Tensor> {
        let y = self.forward_to(batch, layer)?;
        let n = y.batch();
        let f = y.item_len();
        y.reshape(vec![n, f])
    }

    /// Flattened activation after `layer` for a single image (no batch axis).
    pub fn feature_at(&self, image: &Tensor, layer: usize) -> Result<Tensor> {
        let mut shape = vec![1];
        shape.extend_from_slice(image.shape());
        let batch = image.clone().reshape(shape)?;
        Ok(Tensor::from_vec(self.features(&batch, layer)?.into_data()))
    }

    pub(crate) fn forward_trace(&self, batch: &Tensor, upto: usize, mode: Mode) -> Result<(Tensor, Trace)> {
        self.check_batch(batch)?;
        self.check_layer(upto)?;
        let mut inputs = Vec::with_capacity(upto + 1);
        let mut aux = Vec::with_capacity(upto + 1);
        let mut x = batch.clone();
        for i in 0..=upto {
            let (y, a) = self.apply(i, &x, mode);
            inputs.push(x);
            aux.push(a);
            x = y;
        }
        if !x.all_finite() {
            return Err(Error::NonFinite(format!("activation of layer {upto}")));
        }
        Ok((x, Trace { inputs, aux }))
    }

    /// Backpropagate `grad_out` (gradient wrt the output of the last traced
    /// layer). Returns the input gradient when requested and parameter
    /// gradients when requested.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        grad_out: Tensor,
        want_input: bool,
        want_params: bool,
    ) -> (Option<Tensor>, Option<Gradients>) {
        let upto = trace.inputs.len() - 1;
        let mut grads: Gradients = vec![Vec::new(); self.depth()];
        let mut g = grad_out;
        for i in (0..=upto).rev() {
            let x = &trace.inputs[i];
            let need_input = i > 0 || want_input;
            let params = &self.params[i];
            let dx = match (&self.spec.layers[i], &trace.aux[i]) {
                (LayerSpec::Dense { out, .. }, _) => {
                    let g2 = g.reshape(vec![x.batch(), *out]).expect("dense grad shape");
                    let (dx, pg) = layer::dense_backward(x, &g2, params, *out, need_input);
                    if want_params {
                        grads[i] = pg;
                    }
                    dx
                }
                (LayerSpec::Conv { out_channels, kernel, stride, padding, .. }, _) => {
                    let geom = ConvGeom::new(&self.shapes[i], *kernel, *stride, *padding);
                    let (dx, pg) = if want_params || need_input {
                        layer::conv_backward(x, &g, params, geom, *out_channels, need_input)
                    } else {
                        (None, Vec::new())
                    };
                    if want_params {
                        grads[i] = pg;
                    }
                    dx
                }
                (LayerSpec::MaxPool { .. }, Aux::Argmax(arg)) => {
                    Some(layer::maxpool_backward(x.shape(), &g, arg))
                }
                (LayerSpec::Relu, _) => Some(layer::relu_backward(x, &g)),
                (LayerSpec::Dropout { .. }, Aux::Mask(mask)) => Some(layer::mul_mask(&g, mask)),
                (LayerSpec::Dropout { .. }, _) => Some(g.clone()),
                (LayerSpec::Flatten, _) => {
                    Some(g.clone().reshape(x.shape().to_vec()).expect("flatten grad shape"))
                }
                (LayerSpec::Softmax, Aux::Output(y)) => Some(layer::softmax_backward(y, &g)),
                (spec, _) => unreachable!("missing trace data for {spec:?}"),
            };
            match dx {
                Some(dx) => g = dx,
                None => {
                    debug_assert_eq!(i, 0);
                    return (None, want_params.then_some(grads));
                }
            }
        }
        (want_input.then_some(g), want_params.then_some(grads))
    }

    /// Mean softmax cross-entropy over the batch and its parameter gradients,
    /// with dropout disabled.
    pub fn param_gradients(&self, batch: &Tensor, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.loss_and_gradients(batch, labels, Mode::Eval)
    }

    pub(crate) fn loss_and_gradients(
        &self,
        batch: &Tensor,
        labels: &[usize],
        mode: Mode,
    ) -> Result<(f64, Gradients)> {
        if labels.len() != batch.batch() {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                batch.batch()
            )));
        }
        let classes = self.num_classes();
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let (logits, trace) = self.forward_trace(batch, self.depth() - 1, mode)?;
        let (loss, grad) = cross_entropy(&logits, labels);
        let (_, grads) = self.backward(&trace, grad, false, true);
        Ok((loss, grads.expect("parameter gradients requested")))
    }

    /// Gradient of a scalar objective of the activations after `layer`
    /// with respect to a batch of inputs.
    ///
    /// The objective receives the activation tensor and returns its value
    /// and the gradient with respect to that activation.
    pub fn input_gradient<F>(&self, batch: &Tensor, layer: usize, objective: F) -> Result<(f64, Tensor)>
    where
        F: FnOnce(&Tensor) -> (f64, Tensor),
    {
        let (out, trace) = self.forward_trace(batch, layer, Mode::Eval)?;
        let (value, grad) = objective(&out);
        if value.is_nan() {
            return Err(Error::NonFinite("objective evaluated to NaN".into()));
        }
        if grad.len() != out.len() {
            return Err(Error::Shape(format!(
                "objective gradient has {} entries, activation has {}",
                grad.len(),
                out.len()
            )));
        }
        let grad = grad.reshape(out.shape().to_vec())?;
        let (dx, _) = self.backward(&trace, grad, true, false);
        Ok((value, dx.expect("input gradient requested")))
    }

    /// Replace the last dense layer by one with `extra` more outputs, keeping
    /// the existing rows and initializing the new ones from `seed`.
    pub fn widen_output(&self, extra: usize, seed: u64) -> Result<Network> {
        let last = self.depth() - 1;
        let LayerSpec::Dense { out, bias } = self.spec.layers[last] else {
            return Err(Error::Config("output widening needs a final dense layer".into()));
        };
        let mut spec = self.spec.clone();
        spec.layers[last] = LayerSpec::Dense { out: out + extra, bias };
        let fresh = spec.layers[last].init_params(&self.shapes[last], &mut seed::rng(seed, seed::INIT, last as u64));
        let old = &self.params[last];
        let fan_in = self.shapes[last][0];
        let mut w = old[0].data().to_vec();
        w.extend_from_slice(&fresh[0].data()[out * fan_in..]);
        let mut new_params = vec![Tensor::new(vec![out + extra, fan_in], w)?];
        if bias {
            let mut b = old[1].data().to_vec();
            b.extend(std::iter::repeat(0.0).take(extra));
            new_params.push(Tensor::from_vec(b));
        }
        let mut params = self.params.clone();
        params[last] = new_params;
        Network::from_params(spec, params, self.seed)
    }
}

/// Mean softmax cross-entropy and its gradient wrt the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let n = logits.batch();
    let c = logits.item_len();
    let mut probs = layer::softmax_rows(&logits.clone().reshape(vec![n, c]).expect("logit shape"));
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = probs.item_mut(i);
        loss -= row[label].max(f64::MIN_POSITIVE).ln();
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v /= n as f64;
        }
    }
    (loss / n as f64, probs.reshape(logits.shape().to_vec()).expect("grad shape"))
}

/// Softmax probability of `class` for a single logit vector.
pub fn softmax_confidence(logits: &[f64], class: usize) -> Result<f64> {
    if class >= logits.len() {
        return Err(Error::LabelOutOfRange { label: class, classes: logits.len() });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let mut row = logits.to_vec();
    layer::softmax_in_place(&mut row);
    Ok(row[class])
}

/// Per-sample softmax probabilities, shape `[N, classes]`.
pub fn softmax(logits: &Tensor) -> Tensor {
    layer::softmax_rows(logits)
}
