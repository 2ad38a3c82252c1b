//! Predictor families and their losses.
//!
//! Four kinds are supported: least-squares linear regression, L2-regularized
//! binary logistic regression with intercept, a softplus MLP trained with
//! softmax cross-entropy, and the simplex toy where agent `i` has utility
//! equal to coordinate `i` of the predictor.
//!
//! All losses are means over the dataset. Gradients are returned in the flat
//! layout of [`Predictor::to_flat`]: the weight vector followed by the
//! intercept when the kind has one.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    LinReg,
    LogReg {
        alpha: f64,
    },
    /// `layer_dims` lists the hidden widths followed by the number of classes.
    SmoothMlp {
        layer_dims: Vec<usize>,
    },
    SimplexToy {
        n: usize,
    },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::LinReg => "linreg",
            ModelKind::LogReg { .. } => "logreg",
            ModelKind::SmoothMlp { .. } => "smooth_mlp",
            ModelKind::SimplexToy { .. } => "simplex_toy",
        }
    }

    /// True when the loss is convex in the parameters.
    pub fn is_convex(&self) -> bool {
        !matches!(self, ModelKind::SmoothMlp { .. })
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
}

impl ModelSpec {
    pub fn linreg(input_dim: usize) -> Self {
        ModelSpec { kind: ModelKind::LinReg, input_dim }
    }

    pub fn logreg(input_dim: usize, alpha: f64) -> Self {
        ModelSpec { kind: ModelKind::LogReg { alpha }, input_dim }
    }

    pub fn smooth_mlp(input_dim: usize, layer_dims: Vec<usize>) -> Self {
        ModelSpec { kind: ModelKind::SmoothMlp { layer_dims }, input_dim }
    }

    /// The simplex toy takes no features; `input_dim` is 0.
    pub fn simplex_toy(n: usize) -> Self {
        ModelSpec { kind: ModelKind::SimplexToy { n }, input_dim: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ModelKind::LinReg if self.input_dim == 0 => {
                Err(Error::InvalidParams("linear regression needs input_dim >= 1".into()))
            }
            ModelKind::LogReg { alpha } => {
                if self.input_dim == 0 {
                    Err(Error::InvalidParams("logistic regression needs input_dim >= 1".into()))
                } else if !(alpha.is_finite() && *alpha >= 0.0) {
                    Err(Error::InvalidParams(format!("logistic alpha must be >= 0, got {alpha}")))
                } else {
                    Ok(())
                }
            }
            ModelKind::SmoothMlp { layer_dims } => {
                if self.input_dim == 0 {
                    return Err(Error::InvalidParams("mlp needs input_dim >= 1".into()));
                }
                if layer_dims.len() < 2 {
                    return Err(Error::InvalidParams(
                        "mlp needs at least one hidden layer plus an output layer".into(),
                    ));
                }
                if layer_dims.contains(&0) {
                    return Err(Error::InvalidParams("mlp layer widths must be positive".into()));
                }
                if *layer_dims.last().unwrap() < 2 {
                    return Err(Error::InvalidParams("mlp output needs at least 2 classes".into()));
                }
                Ok(())
            }
            ModelKind::SimplexToy { n } if *n == 0 => Err(Error::InvalidParams("simplex toy needs n >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Length of the weight vector (excluding intercept).
    pub fn param_len(&self) -> usize {
        match &self.kind {
            ModelKind::LinReg | ModelKind::LogReg { .. } => self.input_dim,
            ModelKind::SmoothMlp { layer_dims } => {
                mlp_layers(self.input_dim, layer_dims).iter().map(|l| l.n_out * (l.n_in + 1)).sum()
            }
            ModelKind::SimplexToy { n } => *n,
        }
    }

    pub fn has_intercept(&self) -> bool {
        matches!(self.kind, ModelKind::LogReg { .. })
    }

    /// Length of the flat parameter vector used by gradients and the solver.
    pub fn flat_len(&self) -> usize {
        self.param_len() + usize::from(self.has_intercept())
    }

    pub fn zero_predictor(&self) -> Predictor {
        Predictor { params: Array1::zeros(self.param_len()), intercept: self.has_intercept().then_some(0.0) }
    }

    pub fn check_predictor(&self, theta: &Predictor) -> Result<()> {
        if theta.params.len() != self.param_len() {
            return Err(Error::DimensionMismatch { expected: self.param_len(), found: theta.params.len() });
        }
        if theta.intercept.is_some() != self.has_intercept() {
            return Err(Error::InvalidParams(format!("intercept presence does not match model kind {}", self.kind)));
        }
        if !theta.is_finite() {
            return Err(Error::NumericOverflow("predictor parameters"));
        }
        Ok(())
    }

    fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.input_dim() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: data.input_dim() });
        }
        match &self.kind {
            ModelKind::LogReg { .. } => {
                if data.targets.iter().any(|&y| y != 1.0 && y != -1.0) {
                    return Err(Error::NotLabeled("logistic regression needs labels in {-1, +1}".into()));
                }
            }
            ModelKind::SmoothMlp { layer_dims } => {
                let k = *layer_dims.last().unwrap();
                if data.targets.iter().any(|&y| y < 0.0 || y.fract() != 0.0 || y as usize >= k) {
                    return Err(Error::NotLabeled(format!("mlp needs class labels in 0..{k}")));
                }
            }
            ModelKind::SimplexToy { n } => {
                if data.targets.iter().any(|&y| y < 0.0 || y.fract() != 0.0 || y as usize >= *n) {
                    return Err(Error::NotLabeled(format!("simplex toy targets must be agent indices in 0..{n}")));
                }
            }
            ModelKind::LinReg => {}
        }
        Ok(())
    }
}

/// Model weights `θ` plus the optional logistic intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub params: Array1<f64>,
    pub intercept: Option<f64>,
}

impl Predictor {
    pub fn new(params: Array1<f64>, intercept: Option<f64>) -> Self {
        Predictor { params, intercept }
    }

    pub fn from_vec(params: Vec<f64>) -> Self {
        Predictor { params: Array1::from(params), intercept: None }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite()) && self.intercept.is_none_or(f64::is_finite)
    }

    pub fn flat_len(&self) -> usize {
        self.params.len() + usize::from(self.intercept.is_some())
    }

    pub fn to_flat(&self) -> Array1<f64> {
        let mut flat = Array1::zeros(self.flat_len());
        flat.slice_mut(s![..self.params.len()]).assign(&self.params);
        if let Some(c) = self.intercept {
            flat[self.params.len()] = c;
        }
        flat
    }

    /// `self + step` where `step` is in the flat layout of `self`.
    pub fn add_flat(&self, step: &Array1<f64>) -> Result<Self> {
        if step.len() != self.flat_len() {
            return Err(Error::DimensionMismatch { expected: self.flat_len(), found: step.len() });
        }
        let p = self.params.len();
        Ok(Predictor { params: &self.params + &step.slice(s![..p]), intercept: self.intercept.map(|c| c + step[p]) })
    }

    pub fn from_flat(spec: &ModelSpec, flat: &Array1<f64>) -> Result<Self> {
        if flat.len() != spec.flat_len() {
            return Err(Error::DimensionMismatch { expected: spec.flat_len(), found: flat.len() });
        }
        let p = spec.param_len();
        Ok(Predictor { params: flat.slice(s![..p]).to_owned(), intercept: spec.has_intercept().then(|| flat[p]) })
    }
}

/// Features (rows are samples) with one target per row.
///
/// Target conventions depend on the model: real values for regression,
/// `{-1, +1}` for logistic regression, class indices `0..K` (stored as
/// floats) for the MLP, and agent indices for the simplex toy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::InvalidShape(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape("dataset contains non-finite values".into()));
        }
        Ok(LabeledDataset { features, targets })
    }

    /// Builds a dataset from row vectors. Panics on ragged rows; intended for
    /// fixtures.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut features = Array2::zeros((rows.len(), dim));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidShape(format!("row {i} has {} columns, expected {dim}", row.len())));
            }
            features.row_mut(i).assign(&ArrayView1::from(row));
        }
        LabeledDataset::new(features, Array1::from(targets.to_vec()))
    }

    /// The one-row dataset that makes agent `i` of a simplex toy.
    pub fn simplex_agent(i: usize) -> Self {
        LabeledDataset { features: Array2::zeros((1, 0)), targets: Array1::from(vec![i as f64]) }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset { features: self.features.select(Axis(0), rows), targets: self.targets.select(Axis(0), rows) }
    }

    /// Stacks datasets row-wise, in order.
    pub fn concat(parts: &[LabeledDataset]) -> Result<LabeledDataset> {
        if parts.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let features: Vec<_> = parts.iter().map(|d| d.features.view()).collect();
        let targets: Vec<_> = parts.iter().map(|d| d.targets.view()).collect();
        LabeledDataset::new(
            ndarray::concatenate(Axis(0), &features).map_err(|e| Error::InvalidShape(e.to_string()))?,
            ndarray::concatenate(Axis(0), &targets).map_err(|e| Error::InvalidShape(e.to_string()))?,
        )
    }

    /// Converts `{0, 1}` labels to `{-1, +1}`; other values are left alone.
    pub fn to_signed_binary(&self) -> LabeledDataset {
        LabeledDataset {
            features: self.features.clone(),
            targets: self.targets.mapv(|y| if y == 0.0 { -1.0 } else { y }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Scalar(f64),
    /// Softmax class probabilities.
    Scores(Array1<f64>),
}

pub fn predict(spec: &ModelSpec, theta: &Predictor, x: ArrayView1<f64>) -> Result<Prediction> {
    spec.check_predictor(theta)?;
    if let ModelKind::SimplexToy { .. } = spec.kind {
        return Err(Error::UnsupportedForKind { op: "predict", kind: spec.kind.to_string() });
    }
    if x.len() != spec.input_dim {
        return Err(Error::DimensionMismatch { expected: spec.input_dim, found: x.len() });
    }
    match &spec.kind {
        ModelKind::LinReg => Ok(Prediction::Scalar(theta.params.dot(&x))),
        ModelKind::LogReg { .. } => {
            Ok(Prediction::Scalar(sigmoid(theta.params.dot(&x) + theta.intercept.unwrap_or(0.0))))
        }
        ModelKind::SmoothMlp { layer_dims } => {
            let layers = mlp_layers(spec.input_dim, layer_dims);
            let x2 = x.to_owned().insert_axis(Axis(0));
            let fwd = mlp_forward(&layers, &theta.params, x2.view());
            let logits = fwd.logits.row(0);
            let lse = log_sum_exp(logits);
            Ok(Prediction::Scores(logits.mapv(|z| (z - lse).exp())))
        }
        ModelKind::SimplexToy { .. } => unreachable!(),
    }
}

pub fn loss(spec: &ModelSpec, theta: &Predictor, data: &LabeledDataset) -> Result<f64> {
    spec.check_predictor(theta)?;
    spec.check_data(data)?;
    let value = match &spec.kind {
        ModelKind::LinReg => {
            let resid = data.features.dot(&theta.params) - &data.targets;
            resid.dot(&resid) / data.len() as f64
        }
        ModelKind::LogReg { alpha } => {
            let c = theta.intercept.unwrap_or(0.0);
            let margins = (data.features.dot(&theta.params) + c) * &data.targets;
            let data_term = margins.iter().map(|&m| softplus(-m)).sum::<f64>() / data.len() as f64;
            0.5 * theta.params.dot(&theta.params) + alpha * data_term
        }
        ModelKind::SmoothMlp { layer_dims } => {
            let layers = mlp_layers(spec.input_dim, layer_dims);
            let fwd = mlp_forward(&layers, &theta.params, data.features.view());
            let total: f64 =
                fwd.logits.outer_iter().zip(data.targets.iter()).map(|(z, &y)| log_sum_exp(z) - z[y as usize]).sum();
            total / data.len() as f64
        }
        ModelKind::SimplexToy { .. } => {
            let total: f64 = data.targets.iter().map(|&i| 1.0 - theta.params[i as usize]).sum();
            total / data.len() as f64
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NumericOverflow("loss"))
    }
}

/// Analytic gradient of [`loss`] in the flat parameter layout.
pub fn loss_gradient(spec: &ModelSpec, theta: &Predictor, data: &LabeledDataset) -> Result<Array1<f64>> {
    spec.check_predictor(theta)?;
    spec.check_data(data)?;
    let n = data.len() as f64;
    let grad = match &spec.kind {
        ModelKind::LinReg => {
            let resid = data.features.dot(&theta.params) - &data.targets;
            data.features.t().dot(&resid) * (2.0 / n)
        }
        ModelKind::LogReg { alpha } => {
            let c = theta.intercept.unwrap_or(0.0);
            let margins = (data.features.dot(&theta.params) + c) * &data.targets;
            // d/dm softplus(-m) = -sigmoid(-m); chain through m = y (θᵀx + c)
            let coef: Array1<f64> =
                margins.iter().zip(data.targets.iter()).map(|(&m, &y)| -y * sigmoid(-m) * alpha / n).collect();
            let mut g = Array1::zeros(spec.flat_len());
            let p = spec.param_len();
            let mut gw = g.slice_mut(s![..p]);
            gw.assign(&(&theta.params + &data.features.t().dot(&coef)));
            g[p] = coef.sum();
            g
        }
        ModelKind::SmoothMlp { layer_dims } => {
            let layers = mlp_layers(spec.input_dim, layer_dims);
            mlp_gradient(&layers, &theta.params, data)
        }
        ModelKind::SimplexToy { n: dim } => {
            let mut g = Array1::zeros(*dim);
            for &i in data.targets.iter() {
                g[i as usize] -= 1.0 / n;
            }
            g
        }
    };
    if grad.iter().all(|v| v.is_finite()) {
        Ok(grad)
    } else {
        Err(Error::NumericOverflow("loss gradient"))
    }
}

/// Hessian-vector product of the loss by central differences of the analytic
/// gradient, with the step scaled to `max(1, ||θ||) / ||v||`.
pub fn hvp_estimate(
    spec: &ModelSpec,
    theta: &Predictor,
    data: &LabeledDataset,
    v: &Array1<f64>,
) -> Result<Array1<f64>> {
    if v.len() != spec.flat_len() {
        return Err(Error::DimensionMismatch { expected: spec.flat_len(), found: v.len() });
    }
    let v_norm = v.dot(v).sqrt();
    if !(v_norm > 0.0) {
        return Err(Error::DegenerateDirection);
    }
    let base = theta.to_flat();
    let h = 1e-5 * base.dot(&base).sqrt().max(1.0) / v_norm;
    let plus = Predictor::from_flat(spec, &(&base + &(v * h)))?;
    let minus = Predictor::from_flat(spec, &(&base - &(v * h)))?;
    let g_plus = loss_gradient(spec, &plus, data)?;
    let g_minus = loss_gradient(spec, &minus, data)?;
    Ok((g_plus - g_minus) / (2.0 * h))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn log_sum_exp(z: ArrayView1<f64>) -> f64 {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    n_in: usize,
    n_out: usize,
    /// Offset of the row-major weight block; the bias follows it.
    offset: usize,
}

fn mlp_layers(input_dim: usize, layer_dims: &[usize]) -> Vec<Layer> {
    let mut layers = Vec::with_capacity(layer_dims.len());
    let mut n_in = input_dim;
    let mut offset = 0;
    for &n_out in layer_dims {
        layers.push(Layer { n_in, n_out, offset });
        offset += n_out * (n_in + 1);
        n_in = n_out;
    }
    layers
}

fn layer_weights<'a>(layer: &Layer, params: &'a Array1<f64>) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
    let w_end = layer.offset + layer.n_out * layer.n_in;
    let w = params
        .slice(s![layer.offset..w_end])
        .into_shape_with_order((layer.n_out, layer.n_in))
        .expect("contiguous layer block");
    let b = params.slice(s![w_end..w_end + layer.n_out]);
    (w, b)
}

struct Forward {
    /// Pre-activations of every hidden layer.
    hidden_pre: Vec<Array2<f64>>,
    /// Inputs to every layer (the features, then each hidden activation).
    inputs: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

fn mlp_forward(layers: &[Layer], params: &Array1<f64>, x: ArrayView2<f64>) -> Forward {
    let mut inputs = vec![x.to_owned()];
    let mut hidden_pre = Vec::with_capacity(layers.len() - 1);
    let (last, hidden) = layers.split_last().expect("validated: at least two layers");
    for layer in hidden {
        let (w, b) = layer_weights(layer, params);
        let z = inputs.last().unwrap().dot(&w.t()) + b;
        inputs.push(z.mapv(softplus));
        hidden_pre.push(z);
    }
    let (w, b) = layer_weights(last, params);
    let logits = inputs.last().unwrap().dot(&w.t()) + b;
    Forward { hidden_pre, inputs, logits }
}

fn mlp_gradient(layers: &[Layer], params: &Array1<f64>, data: &LabeledDataset) -> Array1<f64> {
    let n = data.len() as f64;
    let fwd = mlp_forward(layers, params, data.features.view());
    // δ at the logits: softmax − one-hot, averaged over samples
    let mut delta = fwd.logits.clone();
    for (mut row, &y) in delta.outer_iter_mut().zip(data.targets.iter()) {
        let lse = log_sum_exp(row.view());
        row.mapv_inplace(|z| (z - lse).exp());
        row[y as usize] -= 1.0;
    }
    delta /= n;

    let mut grad = Array1::zeros(params.len());
    for (idx, layer) in layers.iter().enumerate().rev() {
        let input = &fwd.inputs[idx];
        let gw = delta.t().dot(input);
        let gb = delta.sum_axis(Axis(0));
        let w_end = layer.offset + layer.n_out * layer.n_in;
        grad.slice_mut(s![layer.offset..w_end]).assign(&Array1::from_iter(gw.iter().copied()));
        grad.slice_mut(s![w_end..w_end + layer.n_out]).assign(&gb);
        if idx > 0 {
            let (w, _) = layer_weights(layer, params);
            let back = delta.dot(&w);
            // softplus'(z) = sigmoid(z)
            delta = back * &fwd.hidden_pre[idx - 1].mapv(sigmoid);
        }
    }
    grad
}
