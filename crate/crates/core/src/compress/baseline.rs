//! Variational-dropout baseline: threshold by dropout rate, then cluster the
//! survivors with a mixture fitted by EM.

use super::csr::SymbolMatrix;
use super::quantize::{codebook_from_centres, round_f32, QuantizedLayer, QuantizedNetwork};
use super::{Symbol, ZERO_SYMBOL};
use crate::error::{Error, Result};
use crate::math::{argmax, LN_2PI};
use crate::net::Network;
use crate::vb::GaussianPosterior;

/// Slack on the dropout-rate comparison so that rates equal to `t` on paper
/// but off by rounding still count as dropped.
const THRESHOLD_SLACK: f64 = 1e-12;
const EM_MAX_ITERS: usize = 300;
const EM_TOL: f64 = 1e-10;

/// Zeroes every mean whose binary dropout rate reaches `t`.
pub fn vd_threshold(post: &GaussianPosterior, t: f64) -> Result<GaussianPosterior> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("threshold must be in (0, 1), got {t}")));
    }
    let mut out = post.clone();
    for i in 0..out.len() {
        if post.binary_dropout_rate(i) >= t - THRESHOLD_SLACK {
            out.theta[i] = 0.0;
        }
    }
    Ok(out)
}

/// Univariate Gaussian mixture over nonzero values; zero is symbol 0 and is
/// never modelled.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedQuantizer {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl FixedQuantizer {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    fn log_terms(&self, x: f64, terms: &mut [f64]) {
        for k in 0..self.k() {
            let d = x - self.means[k];
            terms[k] = self.weights[k].ln() - 0.5 * (LN_2PI + self.variances[k].ln()) - 0.5 * d * d / self.variances[k];
        }
    }

    /// Most responsible component for a nonzero `x`.
    pub fn component(&self, x: f64) -> usize {
        let mut terms = vec![0.0; self.k()];
        self.log_terms(x, &mut terms);
        argmax(&terms)
    }

    /// Codebook (entry 0 is zero) and the symbol of every component.
    pub fn codebook(&self) -> (Vec<f64>, Vec<Symbol>) {
        codebook_from_centres(&self.means, None)
    }
}

/// Fits a `k`-component mixture to the nonzero entries of `theta` by EM.
///
/// Means start at evenly spaced picks from the sorted distinct values, so
/// data with exactly `k` distinct values is reproduced exactly. With fewer
/// distinct values than `k` the mixture shrinks to that count.
pub fn fit_fixed_quantizer(theta: &[f64], k: usize) -> Result<FixedQuantizer> {
    if k == 0 {
        return Err(Error::Domain("quantizer needs at least one component".into()));
    }
    let xs: Vec<f64> = theta.iter().copied().filter(|&x| x != 0.0).collect();
    if xs.is_empty() {
        return Err(Error::Empty("no nonzero values to quantize".into()));
    }
    if let Some(bad) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {bad}")));
    }
    let mut distinct = xs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = k.min(distinct.len());
    let n = xs.len() as f64;

    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let floor = (var * 1e-10).max(1e-300);

    let mut means: Vec<f64> = if k == 1 {
        vec![mean]
    } else {
        (0..k)
            .map(|j| distinct[(j * (distinct.len() - 1) + (k - 1) / 2) / (k - 1)])
            .collect()
    };
    let spacing = if k > 1 {
        (distinct[distinct.len() - 1] - distinct[0]) / k as f64
    } else {
        var.sqrt()
    };
    let init_var = (spacing * spacing).max(floor);
    let mut q = FixedQuantizer {
        weights: vec![1.0 / k as f64; k],
        means: means.clone(),
        variances: vec![init_var; k],
    };

    let mut terms = vec![0.0; k];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        let mut nk = vec![0.0; k];
        let mut sx = vec![0.0; k];
        let mut sxx = vec![0.0; k];
        let mut ll = 0.0;
        for &x in &xs {
            q.log_terms(x, &mut terms);
            let lse = crate::math::logsumexp(&terms);
            ll += lse;
            for j in 0..k {
                let r = (terms[j] - lse).exp();
                nk[j] += r;
                sx[j] += r * x;
                sxx[j] += r * x * x;
            }
        }
        for j in 0..k {
            if nk[j] <= f64::MIN_POSITIVE {
                // starved component: keep its mean, give it a sliver of mass
                q.weights[j] = 1e-300;
                continue;
            }
            let m = sx[j] / nk[j];
            means[j] = m;
            q.weights[j] = nk[j] / n;
            q.variances[j] = (sxx[j] / nk[j] - m * m).max(floor);
        }
        q.means.clone_from(&means);
        if (ll - prev_ll).abs() <= EM_TOL * ll.abs().max(1.0) {
            break;
        }
        prev_ll = ll;
    }
    snap_pure_components(&mut q, &xs);
    Ok(q)
}

/// A component whose members all share one value takes that value exactly,
/// undoing the rounding of the weighted mean.
fn snap_pure_components(q: &mut FixedQuantizer, xs: &[f64]) {
    let mut member: Vec<Option<Option<f64>>> = vec![None; q.k()];
    for &x in xs {
        let j = q.component(x);
        member[j] = match member[j] {
            None => Some(Some(x)),
            Some(Some(v)) if v == x => Some(Some(v)),
            _ => Some(None),
        };
    }
    for (j, m) in member.into_iter().enumerate() {
        if let Some(Some(v)) = m {
            q.means[j] = v;
        }
    }
}

/// Applies the threshold to every layer, fits one `k`-component quantizer
/// to all surviving means and collapses them onto its centres.
pub fn quantize_vd_baseline(net: &Network, threshold: f64, k: usize) -> Result<QuantizedNetwork> {
    let thresholded: Vec<GaussianPosterior> = net
        .layers
        .iter()
        .map(|l| vd_threshold(&l.posterior, threshold))
        .collect::<Result<_>>()?;
    let all: Vec<f64> = thresholded.iter().flat_map(|p| p.theta.iter().copied()).collect();
    let q = fit_fixed_quantizer(&all, k)?;
    let (codebook, comp_symbol) = q.codebook();
    let mut terms = vec![0.0; q.k()];
    let layers = net
        .layers
        .iter()
        .zip(&thresholded)
        .map(|(l, p)| {
            let data = p
                .theta
                .iter()
                .map(|&t| {
                    if t == 0.0 {
                        ZERO_SYMBOL
                    } else {
                        q.log_terms(t, &mut terms);
                        comp_symbol[argmax(&terms)]
                    }
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn boundary_is_inclusive() {
        let p = GaussianPosterior::new(vec![1.0, 2.0, 0.0], vec![19f64.ln(), 0.04f64.ln(), 0.0]).unwrap();
        let t = vd_threshold(&p, 0.95).unwrap();
        assert_eq!(t.theta, vec![0.0, 2.0, 0.0]);
        assert_eq!(t.log_sigma2, p.log_sigma2);
        assert!(vd_threshold(&p, 1.0).is_err());
        assert!(vd_threshold(&p, 0.0).is_err());
    }

    #[test]
    fn exact_distinct_values() {
        let data = [0.3, -0.1, 0.3, 0.7, -0.1, 0.0, 0.7, 0.7];
        let q = fit_fixed_quantizer(&data, 3).unwrap();
        let mut m = q.means.clone();
        m.sort_by(f64::total_cmp);
        assert_eq!(m, vec![-0.1, 0.3, 0.7]);
        for &x in data.iter().filter(|&&x| x != 0.0) {
            assert_eq!(q.means[q.component(x)], x);
        }
    }

    #[test]
    fn shrinks_to_distinct_count() {
        let q = fit_fixed_quantizer(&[1.0, 2.0, 1.0, 2.0], 64).unwrap();
        assert_eq!(q.k(), 2);
    }

    #[test]
    fn two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Normal::new(-1.0, 0.05).unwrap();
        let b = Normal::new(2.0, 0.1).unwrap();
        let xa: Vec<f64> = (0..500).map(|_| a.sample(&mut rng)).collect();
        let xb: Vec<f64> = (0..500).map(|_| b.sample(&mut rng)).collect();
        let data: Vec<f64> = xa.iter().chain(&xb).copied().collect();
        let q = fit_fixed_quantizer(&data, 2).unwrap();
        let mut m = q.means.clone();
        m.sort_by(f64::total_cmp);
        let ma = xa.iter().sum::<f64>() / 500.0;
        let mb = xb.iter().sum::<f64>() / 500.0;
        assert!((m[0] - ma).abs() < 0.01 && (m[1] - mb).abs() < 0.01, "{m:?}");
    }

    #[test]
    fn one_component_is_the_mean() {
        let q = fit_fixed_quantizer(&[1.0, 2.0, 6.0, 0.0], 1).unwrap();
        assert!((q.means[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_is_an_error() {
        assert!(matches!(fit_fixed_quantizer(&[0.0, 0.0], 4), Err(Error::Empty(_))));
        assert!(fit_fixed_quantizer(&[1.0], 0).is_err());
    }
}
