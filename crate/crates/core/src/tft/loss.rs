//! Quantile (pinball) loss over multi-target, multi-quantile predictions.

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};

/// Mean pinball loss over batch, horizon, targets, and quantiles.
///
/// `predictions` is [rows, targets*quantiles] with quantiles fastest;
/// `targets` is [rows, targets] in the same (normalized) space.
pub fn quantile_loss(predictions: &Var, targets: &Tensor, quantiles: &[f64]) -> Result<Var> {
    if quantiles.is_empty() {
        return Err(Error::invalid_argument("no quantiles supplied"));
    }
    if let Some(&q) = quantiles.iter().find(|q| !(0.0 < **q && **q < 1.0)) {
        return Err(Error::invalid_argument(format!(
            "quantile {q} outside (0, 1)"
        )));
    }
    let [rows, tq] = *predictions.value().shape() else {
        return Err(Error::Shape {
            op: "quantile_loss".into(),
            lhs: predictions.value().shape().to_vec(),
            rhs: targets.shape().to_vec(),
        });
    };
    let nq = quantiles.len();
    let nt = tq / nq;
    if nt * nq != tq || targets.shape() != [rows, nt] {
        return Err(Error::Shape {
            op: "quantile_loss".into(),
            lhs: predictions.value().shape().to_vec(),
            rhs: targets.shape().to_vec(),
        });
    }

    let graph = predictions.graph().clone();
    let y = graph.constant(targets.clone());
    let mut total: Option<Var> = None;
    for t in 0..nt {
        let yt = y.col(t)?;
        for (k, &q) in quantiles.iter().enumerate() {
            let p = predictions.col(t * nq + k)?;
            let diff = yt.sub(&p)?;
            let term = diff
                .relu()
                .scale(q)
                .add(&diff.neg().relu().scale(1.0 - q))?
                .sum_all()?;
            total = Some(match total {
                Some(acc) => acc.add(&term)?,
                None => term,
            });
        }
    }
    let count = (rows * nt * nq) as f64;
    Ok(total.expect("at least one quantile").scale(1.0 / count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    fn loss_of(pred: f64, target: f64, q: f64) -> f64 {
        let graph = Graph::new();
        let p = graph.constant(Tensor::new(vec![1, 1], vec![pred]).unwrap());
        let y = Tensor::new(vec![1, 1], vec![target]).unwrap();
        quantile_loss(&p, &y, &[q]).unwrap().value().item()
    }

    #[test]
    fn median_pinball_is_half_absolute_error() {
        assert_eq!(loss_of(0.0, 1.0, 0.5), 0.5);
    }

    #[test]
    fn asymmetric_quantiles_weight_the_sides() {
        assert!((loss_of(0.0, 1.0, 0.9) - 0.9).abs() < 1e-15);
        assert!((loss_of(1.0, 0.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let graph = Graph::new();
        let p = graph.constant(Tensor::from_fn(&[4, 6], |i| i as f64));
        // targets equal to the median column of each target block
        let mut y = Tensor::zeros(&[4, 2]);
        for r in 0..4 {
            y.data_mut()[r * 2] = (r * 6 + 1) as f64;
            y.data_mut()[r * 2 + 1] = (r * 6 + 4) as f64;
        }
        let l = quantile_loss(&p, &y, &[0.1, 0.5, 0.9]).unwrap();
        // only the non-median quantiles contribute
        assert!(l.value().item() > 0.0);
        let exact = {
            let graph = Graph::new();
            let p = graph.constant(Tensor::new(vec![1, 1], vec![3.0]).unwrap());
            let y = Tensor::new(vec![1, 1], vec![3.0]).unwrap();
            quantile_loss(&p, &y, &[0.5]).unwrap().value().item()
        };
        assert_eq!(exact, 0.0);
    }

    #[test]
    fn rejects_quantiles_outside_unit_interval() {
        let graph = Graph::new();
        let p = graph.constant(Tensor::zeros(&[1, 1]));
        let y = Tensor::zeros(&[1, 1]);
        assert!(quantile_loss(&p, &y, &[1.0]).is_err());
        assert!(quantile_loss(&p, &y, &[0.0]).is_err());
    }

    #[test]
    fn gradients_flow_through_the_loss() {
        let graph = Graph::new();
        let p = graph.leaf(Tensor::new(vec![2, 2], vec![0.0, 0.5, 1.0, -1.0]).unwrap(), true);
        let y = Tensor::new(vec![2, 1], vec![1.0, 0.0]).unwrap();
        let l = quantile_loss(&p, &y, &[0.25, 0.75]).unwrap();
        l.backward().unwrap();
        let g = p.grad().unwrap();
        assert!(g.data().iter().any(|&v| v != 0.0));
    }
}
