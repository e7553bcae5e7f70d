use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::VariationalDenseLayer;
use crate::error::{Error, Result};
use crate::vb::{regularization_term_layers, GaussianPosterior, MixtureGrad, MixturePrior, ObjectiveConfig};

/// Keeps the pre-activation standard deviation differentiable when every
/// input to a unit is zero.
const VAR_EPS: f64 = 1e-20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Stack of variational dense layers; the activation is applied between
/// layers and the last layer emits logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub layers: Vec<VariationalDenseLayer>,
    pub activation: Activation,
}

/// Minibatch of row-major inputs with their class labels.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub labels: &'a [u8],
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub theta: Vec<f64>,
    pub log_sigma2: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
    pub mixture: Option<MixtureGrad>,
}

/// Minimization target split into its parts; `total = likelihood + regularization`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Loss {
    pub total: f64,
    pub likelihood: f64,
    pub regularization: f64,
}

struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    stochastic: Option<StochasticCache>,
}

struct StochasticCache {
    input_sq: Array2<f64>,
    sigma2: Array2<f64>,
    std: Array2<f64>,
}

impl Network {
    pub fn new(layers: Vec<VariationalDenseLayer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} features but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    /// He-normal initialized network with the given layer widths
    /// (`dims[0]` inputs, `dims.last()` classes).
    pub fn random<R: Rng + ?Sized>(dims: &[usize], log_sigma2: f64, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape("need at least input and output widths".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::Shape("layer widths must be positive".into()));
            }
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            let theta: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
            let post = GaussianPosterior::from_means(theta, log_sigma2)?;
            layers.push(VariationalDenseLayer::new(fan_in, fan_out, post, vec![0.0; fan_out])?);
        }
        Self::new(layers, Activation::Relu)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim()))
            .collect()
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.posterior.len()).sum()
    }

    pub fn num_biases(&self) -> usize {
        self.layers.iter().map(|l| l.bias.len()).sum()
    }

    pub fn posteriors(&self) -> Vec<&GaussianPosterior> {
        self.layers.iter().map(|l| &l.posterior).collect()
    }

    /// All weight means, layer after layer.
    pub fn flat_theta(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.posterior.theta.iter().copied())
            .collect()
    }

    fn check_input(&self, inputs: &ArrayView2<'_, f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Logits with every weight set to its posterior mean.
    pub fn forward_deterministic(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&inputs)?;
        let (_, logits) = self.forward_cached(inputs, None)?;
        Ok(logits)
    }

    /// Single-sample stochastic logits using fresh noise from `rng`.
    pub fn forward_stochastic<R: Rng + ?Sized>(&self, inputs: ArrayView2<'_, f64>, rng: &mut R) -> Result<Array2<f64>> {
        let noise = draw_noise(self, inputs.nrows(), rng);
        self.forward_with_noise(inputs, &noise)
    }

    /// Stochastic logits with caller-supplied pre-activation noise, one
    /// `batch x out_dim` matrix per layer.
    pub fn forward_with_noise(&self, inputs: ArrayView2<'_, f64>, noise: &[Array2<f64>]) -> Result<Array2<f64>> {
        self.check_input(&inputs)?;
        self.check_noise(inputs.nrows(), noise)?;
        let (_, logits) = self.forward_cached(inputs, Some(noise))?;
        Ok(logits)
    }

    fn check_noise(&self, rows: usize, noise: &[Array2<f64>]) -> Result<()> {
        if noise.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "got noise for {} layers, network has {}",
                noise.len(),
                self.layers.len()
            )));
        }
        for (l, (layer, n)) in self.layers.iter().zip(noise).enumerate() {
            if n.dim() != (rows, layer.out_dim()) {
                return Err(Error::Shape(format!(
                    "noise for layer {l} is {:?}, expected {:?}",
                    n.dim(),
                    (rows, layer.out_dim())
                )));
            }
        }
        Ok(())
    }

    /// Local reparametrization: pre-activations are `x theta^T + b + sqrt(x^2 sigma2^T) * noise`.
    fn forward_cached(
        &self,
        inputs: ArrayView2<'_, f64>,
        noise: Option<&[Array2<f64>]>,
    ) -> Result<(Vec<LayerCache>, Array2<f64>)> {
        let last = self.layers.len() - 1;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = inputs.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = current.dot(&layer.theta().t());
            pre += &layer.bias();
            let stochastic = match noise {
                Some(noise) => {
                    let sigma2 = layer.log_sigma2().mapv(f64::exp);
                    let input_sq = current.mapv(|v| v * v);
                    let mut std = input_sq.dot(&sigma2.t());
                    std.mapv_inplace(|v| (v + VAR_EPS).sqrt());
                    Zip::from(&mut pre)
                        .and(&std)
                        .and(&noise[l])
                        .for_each(|p, &s, &e| *p += s * e);
                    Some(StochasticCache { input_sq, sigma2, std })
                }
                None => None,
            };
            let out = if l < last {
                let act = self.activation;
                pre.mapv(|v| act.apply(v))
            } else {
                pre.clone()
            };
            caches.push(LayerCache {
                input: std::mem::replace(&mut current, out),
                pre,
                stochastic,
            });
        }
        Ok((caches, current))
    }

    /// Backpropagates `grad_logits` through the cached forward pass.
    fn backward(
        &self,
        caches: &[LayerCache],
        noise: Option<&[Array2<f64>]>,
        grad_logits: Array2<f64>,
    ) -> Vec<LayerGrads> {
        let last = self.layers.len() - 1;
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        let mut g = grad_logits;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let cache = &caches[l];
            if l < last {
                let act = self.activation;
                Zip::from(&mut g)
                    .and(&cache.pre)
                    .for_each(|g, &p| *g *= act.derivative(p));
            }
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
            let bias = g.sum_axis(Axis(0)).to_vec();
            let mut theta = vec![0.0; out_dim * in_dim];
            general_mat_mul(
                1.0,
                &g.t(),
                &cache.input,
                0.0,
                &mut ArrayViewMut2::from_shape((out_dim, in_dim), &mut theta).unwrap(),
            );
            let mut log_sigma2 = vec![0.0; out_dim * in_dim];
            let mut g_var = None;
            if let (Some(st), Some(noise)) = (&cache.stochastic, noise) {
                let mut gv = g.clone();
                Zip::from(&mut gv)
                    .and(&noise[l])
                    .and(&st.std)
                    .for_each(|gv, &e, &s| *gv = *gv * e / (2.0 * s));
                let mut ls2 = ArrayViewMut2::from_shape((out_dim, in_dim), &mut log_sigma2).unwrap();
                general_mat_mul(1.0, &gv.t(), &st.input_sq, 0.0, &mut ls2);
                ls2 *= &st.sigma2;
                g_var = Some(gv);
            }
            if l > 0 {
                let mut g_in = g.dot(&layer.theta());
                if let (Some(st), Some(gv)) = (&cache.stochastic, &g_var) {
                    let through_var = gv.dot(&st.sigma2);
                    Zip::from(&mut g_in)
                        .and(&through_var)
                        .and(&cache.input)
                        .for_each(|gi, &tv, &x| *gi += 2.0 * x * tv);
                }
                g = g_in;
            }
            grads.push(LayerGrads {
                theta,
                log_sigma2,
                bias,
            });
        }
        grads.reverse();
        grads
    }
}

/// Standard-normal pre-activation noise for every layer of `net`.
pub fn draw_noise<R: Rng + ?Sized>(net: &Network, rows: usize, rng: &mut R) -> Vec<Array2<f64>> {
    net.layers
        .iter()
        .map(|l| Array2::from_shape_simple_fn((rows, l.out_dim()), || StandardNormal.sample(rng)))
        .collect()
}

/// Summed softmax cross-entropy and its gradient with respect to the logits.
fn cross_entropy(logits: &Array2<f64>, labels: &[u8]) -> Result<(f64, Array2<f64>)> {
    let classes = logits.ncols();
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (i, (mut row, &label)) in grad.rows_mut().into_iter().zip(labels).enumerate() {
        let label = label as usize;
        if label >= classes {
            return Err(Error::InvalidLabel { label, classes });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum += e;
            e
        });
        total += max + sum.ln() - logits[[i, label]];
        row.mapv_inplace(|e| e / sum);
        row[label] -= 1.0;
    }
    Ok((total, grad))
}

fn check_batch(net: &Network, batch: &Batch<'_>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("batch has no rows".into()));
    }
    if batch.inputs.nrows() != batch.len() {
        return Err(Error::Shape(format!(
            "{} input rows but {} labels",
            batch.inputs.nrows(),
            batch.len()
        )));
    }
    net.check_input(&batch.inputs)
}

/// Negated single-sample ELBO and its gradients.
///
/// The batch likelihood is scaled by `N / B` so that it estimates the
/// full-dataset sum; the regularizer enters once at full strength.
pub fn loss_and_grads(
    net: &Network,
    batch: Batch<'_>,
    prior: Option<&MixturePrior>,
    cfg: &ObjectiveConfig,
    noise: &[Array2<f64>],
) -> Result<(Loss, NetworkGrads)> {
    cfg.validate()?;
    check_batch(net, &batch)?;
    net.check_noise(batch.len(), noise)?;
    let scale = cfg.dataset_size as f64 / batch.len() as f64;

    let (caches, logits) = net.forward_cached(batch.inputs, Some(noise))?;
    let (ce, mut g_logits) = cross_entropy(&logits, batch.labels)?;
    g_logits *= scale;
    let mut layers = net.backward(&caches, Some(noise), g_logits);

    let (reg, rg) = regularization_term_layers(&net.posteriors(), prior, cfg)?;
    for (lg, (gt, gl)) in layers.iter_mut().zip(rg.theta.iter().zip(&rg.log_sigma2)) {
        lg.theta.iter_mut().zip(gt).for_each(|(a, b)| *a += b);
        lg.log_sigma2.iter_mut().zip(gl).for_each(|(a, b)| *a += b);
    }
    let likelihood = scale * ce;
    Ok((
        Loss {
            total: likelihood + reg,
            likelihood,
            regularization: reg,
        },
        NetworkGrads {
            layers,
            mixture: rg.mixture,
        },
    ))
}

/// Mean cross-entropy plus `weight_decay * |theta|^2` on the deterministic
/// network. Log-variance gradients are zero.
pub fn l2_loss_and_grads(net: &Network, batch: Batch<'_>, weight_decay: f64) -> Result<(Loss, NetworkGrads)> {
    check_batch(net, &batch)?;
    if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
        return Err(Error::Domain(format!("weight decay must be >= 0, got {weight_decay}")));
    }
    let scale = 1.0 / batch.len() as f64;
    let (caches, logits) = net.forward_cached(batch.inputs, None)?;
    let (ce, mut g_logits) = cross_entropy(&logits, batch.labels)?;
    g_logits *= scale;
    let mut layers = net.backward(&caches, None, g_logits);
    let mut reg = 0.0;
    for (lg, layer) in layers.iter_mut().zip(&net.layers) {
        for (g, &t) in lg.theta.iter_mut().zip(&layer.posterior.theta) {
            reg += weight_decay * t * t;
            *g += 2.0 * weight_decay * t;
        }
    }
    let likelihood = scale * ce;
    Ok((
        Loss {
            total: likelihood + reg,
            likelihood,
            regularization: reg,
        },
        NetworkGrads { layers, mixture: None },
    ))
}
