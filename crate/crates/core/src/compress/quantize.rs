use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};

use super::csr::SymbolMatrix;
use super::{Symbol, ZERO_SYMBOL};
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::net::{Activation, Network, VariationalDenseLayer};
use crate::trainer::Classifier;
use crate::vb::{GaussianPosterior, MixturePrior};

/// A dense layer whose weights are indices into its own codebook.
///
/// `codebook[0]` is always 0.0. Every stored real is exactly representable
/// as an `f32`, so the layer survives a round trip through the container.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLayer {
    pub codebook: Vec<f64>,
    /// `out_dim x in_dim`, row-major.
    pub weights: SymbolMatrix,
    pub bias: Vec<f64>,
}

impl QuantizedLayer {
    pub fn new(codebook: Vec<f64>, weights: SymbolMatrix, bias: Vec<f64>) -> Result<Self> {
        if codebook.first() != Some(&0.0) {
            return Err(Error::Domain("codebook entry 0 must be 0.0".into()));
        }
        if codebook.len() > Symbol::MAX as usize + 1 {
            return Err(Error::Domain(format!("codebook of {} entries is too large", codebook.len())));
        }
        if codebook.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Domain("codebook and bias must be finite".into()));
        }
        if let Some(&s) = weights.data.iter().find(|&&s| s as usize >= codebook.len()) {
            return Err(Error::UnknownSymbol(s as u32));
        }
        if bias.len() != weights.rows {
            return Err(Error::Shape(format!(
                "bias has {} entries for {} rows",
                bias.len(),
                weights.rows
            )));
        }
        if weights.rows == 0 || weights.cols == 0 {
            return Err(Error::Degenerate("quantized layer has an empty dimension".into()));
        }
        Ok(Self { codebook, weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows
    }

    #[inline]
    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.codebook[self.weights.get(r, c) as usize]
    }

    /// Real-valued weight matrix.
    pub fn dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.out_dim(), self.in_dim()), |(r, c)| self.value(r, c))
    }

    /// Number of weights with a nonzero value.
    pub fn nonzeros(&self) -> usize {
        self.weights.data.iter().filter(|&&s| self.codebook[s as usize] != 0.0).count()
    }

    fn row_entries(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.out_dim())
            .map(|r| {
                (0..self.in_dim())
                    .map(|c| (c, self.value(r, c)))
                    .filter(|&(_, v)| v != 0.0)
                    .collect()
            })
            .collect()
    }
}

/// Network of quantized dense layers with ReLU between them.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedNetwork {
    pub layers: Vec<QuantizedLayer>,
}

impl QuantizedNetwork {
    pub fn new(layers: Vec<QuantizedLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("quantized network has no layers".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} features, layer {} expects {}",
                    w[0].out_dim(),
                    i + 1,
                    w[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Stores every weight and bias as its nearest `f32`, one codebook entry
    /// per distinct value. Nothing is merged beyond that rounding.
    pub fn exact(net: &Network) -> Result<Self> {
        let layers = net
            .layers
            .iter()
            .map(|l| {
                let mut values: BTreeSet<u32> = BTreeSet::new();
                for &t in &l.posterior.theta {
                    let v = t as f32;
                    if v != 0.0 {
                        values.insert(v.to_bits());
                    }
                }
                let mut codebook = vec![0.0];
                codebook.extend(values.iter().map(|&b| f32::from_bits(b) as f64));
                let lookup: std::collections::HashMap<u32, Symbol> = values
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| (b, (i + 1) as Symbol))
                    .collect();
                let data = l
                    .posterior
                    .theta
                    .iter()
                    .map(|&t| {
                        let v = t as f32;
                        if v == 0.0 {
                            ZERO_SYMBOL
                        } else {
                            lookup[&v.to_bits()]
                        }
                    })
                    .collect();
                QuantizedLayer::new(
                    codebook,
                    SymbolMatrix::new(l.out_dim(), l.in_dim(), data)?,
                    round_f32(&l.bias),
                )
            })
            .collect::<Result<_>>()?;
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.out_dim()));
        d
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data.len()).sum()
    }

    pub fn num_biases(&self) -> usize {
        self.layers.iter().map(|l| l.bias.len()).sum()
    }

    pub fn nonzeros(&self) -> usize {
        self.layers.iter().map(|l| l.nonzeros()).sum()
    }

    /// Distinct nonzero weight values across all layers.
    pub fn distinct_nonzero_values(&self) -> Vec<f64> {
        let set: BTreeSet<u64> = self
            .layers
            .iter()
            .flat_map(|l| {
                l.weights
                    .data
                    .iter()
                    .map(|&s| l.codebook[s as usize])
                    .filter(|&v| v != 0.0)
                    .map(f64::to_bits)
            })
            .collect();
        let mut v: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Deterministic network carrying the quantized values as posterior means.
    pub fn to_network(&self, log_sigma2: f64) -> Result<Network> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let theta = l.dense().into_raw_vec_and_offset().0;
                VariationalDenseLayer::new(
                    l.in_dim(),
                    l.out_dim(),
                    GaussianPosterior::from_means(theta, log_sigma2)?,
                    l.bias.clone(),
                )
            })
            .collect::<Result<_>>()?;
        Network::new(layers, Activation::Relu)
    }

    /// Logits computed with sparse row sums. Every row starts at its bias
    /// and adds `w * x` over nonzero weights in column order, skipping zero
    /// inputs, so removing dead units never changes a single bit.
    pub fn forward(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        let entries: Vec<Vec<Vec<(usize, f64)>>> = self.layers.iter().map(|l| l.row_entries()).collect();
        let last = self.layers.len() - 1;
        let mut out = Array2::zeros((inputs.nrows(), self.output_dim()));
        let mut cur: Vec<f64> = Vec::new();
        let mut next: Vec<f64> = Vec::new();
        for (n, x) in inputs.rows().into_iter().enumerate() {
            cur.clear();
            cur.extend(x.iter().copied());
            for (i, (layer, rows)) in self.layers.iter().zip(&entries).enumerate() {
                next.clear();
                for (r, row) in rows.iter().enumerate() {
                    let mut s = layer.bias[r];
                    for &(c, w) in row {
                        let xc = cur[c];
                        if xc != 0.0 {
                            s += w * xc;
                        }
                    }
                    next.push(if i < last { s.max(0.0) } else { s });
                }
                std::mem::swap(&mut cur, &mut next);
            }
            out.row_mut(n).assign(&ndarray::ArrayView1::from(&cur[..]));
        }
        Ok(out)
    }
}

impl Classifier for QuantizedNetwork {
    fn logits(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward(inputs)
    }
}

pub(crate) fn round_f32(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

/// Codebook built from per-component centres: entry 0 is 0.0, then each
/// distinct nonzero `f32` centre in component order. Returns the codebook and
/// the symbol of every component.
pub(crate) fn codebook_from_centres(centres: &[f64], zero_component: Option<usize>) -> (Vec<f64>, Vec<Symbol>) {
    let mut codebook = vec![0.0];
    let mut symbols = Vec::with_capacity(centres.len());
    for (k, &m) in centres.iter().enumerate() {
        let v = m as f32 as f64;
        if Some(k) == zero_component || v == 0.0 {
            symbols.push(ZERO_SYMBOL);
            continue;
        }
        let sym = match codebook.iter().position(|&c| c == v) {
            Some(p) => p,
            None => {
                codebook.push(v);
                codebook.len() - 1
            }
        };
        symbols.push(sym as Symbol);
    }
    (codebook, symbols)
}

/// Collapses every weight mean onto the centre of its most responsible
/// mixture component. The zero-spike component maps to exactly 0.
pub fn quantize_gm(net: &Network, prior: &MixturePrior) -> Result<QuantizedNetwork> {
    let (codebook, comp_symbol) = codebook_from_centres(&prior.mu, prior.zero_index);
    let table = prior.table();
    let mut terms = vec![0.0; table.k()];
    let layers = net
        .layers
        .iter()
        .map(|l| {
            let data = l
                .posterior
                .theta
                .iter()
                .map(|&t| {
                    table.log_terms(t, &mut terms);
                    comp_symbol[argmax(&terms)]
                })
                .collect();
            QuantizedLayer::new(
                codebook.clone(),
                SymbolMatrix::new(l.out_dim(), l.in_dim(), data)?,
                round_f32(&l.bias),
            )
        })
        .collect::<Result<_>>()?;
    QuantizedNetwork::new(layers)
}
