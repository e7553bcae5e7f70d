use super::csr::SymbolMatrix;
use super::quantize::{QuantizedLayer, QuantizedNetwork};
use crate::error::{Error, Result};

/// Removes dead hidden units until nothing changes.
///
/// Hidden unit `j` between layers `i` and `i + 1` is dead when its incoming
/// row is all zero with a zero bias (it always emits 0), or when its outgoing
/// column is all zero (nobody reads it). Either way the row, bias and column
/// are dropped together. Network inputs and outputs are never touched.
pub fn prune_structure(net: &QuantizedNetwork) -> Result<QuantizedNetwork> {
    let mut layers = net.layers.clone();
    loop {
        let mut changed = false;
        for i in 0..layers.len().saturating_sub(1) {
            let (up, down) = (&layers[i], &layers[i + 1]);
            let keep: Vec<usize> = (0..up.out_dim())
                .filter(|&j| {
                    let silent = up.bias[j] == 0.0 && (0..up.in_dim()).all(|c| up.value(j, c) == 0.0);
                    let unread = (0..down.out_dim()).all(|r| down.value(r, j) == 0.0);
                    !(silent || unread)
                })
                .collect();
            if keep.len() == up.out_dim() {
                continue;
            }
            if keep.is_empty() {
                return Err(Error::Degenerate(format!(
                    "pruning would remove every unit after layer {i}"
                )));
            }
            layers[i] = keep_rows(&layers[i], &keep);
            layers[i + 1] = keep_cols(&layers[i + 1], &keep);
            changed = true;
        }
        if !changed {
            break;
        }
    }
    QuantizedNetwork::new(layers)
}

fn keep_rows(l: &QuantizedLayer, rows: &[usize]) -> QuantizedLayer {
    let data = rows.iter().flat_map(|&r| l.weights.row(r).iter().copied()).collect();
    QuantizedLayer {
        codebook: l.codebook.clone(),
        weights: SymbolMatrix { rows: rows.len(), cols: l.in_dim(), data },
        bias: rows.iter().map(|&r| l.bias[r]).collect(),
    }
}

fn keep_cols(l: &QuantizedLayer, cols: &[usize]) -> QuantizedLayer {
    let data = (0..l.out_dim())
        .flat_map(|r| cols.iter().map(move |&c| l.weights.get(r, c)))
        .collect();
    QuantizedLayer {
        codebook: l.codebook.clone(),
        weights: SymbolMatrix { rows: l.out_dim(), cols: cols.len(), data },
        bias: l.bias.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer(rows: usize, cols: usize, data: Vec<u16>, bias: Vec<f64>) -> QuantizedLayer {
        QuantizedLayer::new(vec![0.0, 0.5, -1.0], SymbolMatrix::new(rows, cols, data).unwrap(), bias).unwrap()
    }

    fn inputs(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn silent_row_is_removed() {
        let l1 = layer(3, 2, vec![1, 2, 2, 1, 0, 0], vec![0.1, 0.0, 0.0]);
        let l2 = layer(2, 3, vec![1, 1, 2, 2, 1, 1], vec![0.0, 0.0]);
        let net = QuantizedNetwork::new(vec![l1, l2]).unwrap();
        let p = prune_structure(&net).unwrap();
        assert_eq!(p.dims(), vec![2, 2, 2]);
        let x = inputs(100, 2, 1);
        assert_eq!(net.forward(x.view()).unwrap(), p.forward(x.view()).unwrap());
    }

    #[test]
    fn nothing_to_remove() {
        let l1 = layer(2, 2, vec![1, 2, 2, 1], vec![0.0, 0.0]);
        let l2 = layer(1, 2, vec![1, 2], vec![0.3]);
        let net = QuantizedNetwork::new(vec![l1, l2]).unwrap();
        assert_eq!(prune_structure(&net).unwrap(), net);
    }

    #[test]
    fn cascade_through_three_layers() {
        // Unit 1 of the second hidden layer is never read; once it goes, its
        // incoming column from hidden unit 0 of the first layer is empty too.
        let l1 = layer(2, 3, vec![1, 1, 1, 2, 0, 1], vec![0.2, 0.0]);
        let l2 = layer(2, 2, vec![0, 1, 1, 2], vec![0.0, 0.4]);
        let l3 = layer(1, 2, vec![1, 0], vec![0.1]);
        let net = QuantizedNetwork::new(vec![l1, l2, l3]).unwrap();
        let p = prune_structure(&net).unwrap();
        assert_eq!(p.dims(), vec![3, 1, 1, 1]);
        let x = inputs(100, 3, 2);
        assert_eq!(net.forward(x.view()).unwrap(), p.forward(x.view()).unwrap());
    }

    #[test]
    fn emptied_layer_is_an_error() {
        let l1 = layer(2, 2, vec![0, 0, 0, 0], vec![0.0, 0.0]);
        let l2 = layer(1, 2, vec![1, 2], vec![0.0]);
        let net = QuantizedNetwork::new(vec![l1, l2]).unwrap();
        assert!(matches!(prune_structure(&net), Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_layer_untouched() {
        let net = QuantizedNetwork::new(vec![layer(2, 2, vec![0, 0, 0, 0], vec![0.0, 0.0])]).unwrap();
        assert_eq!(prune_structure(&net).unwrap(), net);
    }
}
