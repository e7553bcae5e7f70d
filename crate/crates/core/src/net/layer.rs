use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::vb::GaussianPosterior;

/// Dense layer with a Gaussian posterior over its `out_dim x in_dim` weights
/// (row-major) and a deterministic bias.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalDenseLayer {
    in_dim: usize,
    out_dim: usize,
    pub posterior: GaussianPosterior,
    pub bias: Vec<f64>,
}

impl VariationalDenseLayer {
    pub fn new(in_dim: usize, out_dim: usize, posterior: GaussianPosterior, bias: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Shape("layer dimensions must be positive".into()));
        }
        if posterior.len() != in_dim * out_dim {
            return Err(Error::Shape(format!(
                "posterior has {} weights, layer {out_dim}x{in_dim} needs {}",
                posterior.len(),
                in_dim * out_dim
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Shape(format!("bias has {} entries, expected {out_dim}", bias.len())));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("bias must be finite".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            posterior,
            bias,
        })
    }

    /// Layer with all-zero means and bias.
    pub fn zeros(in_dim: usize, out_dim: usize, log_sigma2: f64) -> Result<Self> {
        let post = GaussianPosterior::from_means(vec![0.0; in_dim * out_dim], log_sigma2)?;
        Self::new(in_dim, out_dim, post, vec![0.0; out_dim])
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn theta(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.out_dim, self.in_dim), &self.posterior.theta).unwrap()
    }

    pub fn log_sigma2(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.out_dim, self.in_dim), &self.posterior.log_sigma2).unwrap()
    }

    pub fn bias(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.bias[..])
    }
}
