//! Central-difference verification of reverse-mode gradients.

use crate::autodiff::graph::{Graph, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares backward-pass gradients of a scalar-valued graph builder against
/// central finite differences at `points`.
///
/// Returns the maximum over all coordinates of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
/// The builder must be deterministic and smooth at the point (dropout off).
pub fn grad_check<F>(builder: F, points: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&Graph, &[Var]) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::invalid_argument("grad_check step must be positive"));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("grad_check needs at least one input".into()));
    }

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let graph = Graph::new();
        let vars: Vec<Var> = inputs
            .iter()
            .map(|t| graph.leaf(t.clone(), false))
            .collect();
        let out = builder(&graph, &vars)?;
        if out.value().len() != 1 {
            return Err(Error::invalid_argument(format!(
                "grad_check function must be scalar-valued, got shape {:?}",
                out.value().shape()
            )));
        }
        Ok(out.value().item())
    };

    // analytic gradients
    let graph = Graph::new();
    let vars: Vec<Var> = points
        .iter()
        .map(|t| graph.leaf(t.clone(), true))
        .collect();
    let loss = builder(&graph, &vars)?;
    if loss.value().len() != 1 {
        return Err(Error::invalid_argument(format!(
            "grad_check function must be scalar-valued, got shape {:?}",
            loss.value().shape()
        )));
    }
    loss.backward()?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .enumerate()
        .map(|(k, v)| {
            v.grad()
                .unwrap_or_else(|| Tensor::zeros(points[k].shape()))
        })
        .collect();

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = points.to_vec();
    for (k, point) in points.iter().enumerate() {
        for i in 0..point.len() {
            let orig = point.data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - step;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[k].data()[i];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "non-finite gradient at input {k} coordinate {i}: analytic {a}, numeric {numeric}"
                )));
            }
            let denom = 1.0_f64.max(a.abs()).max(numeric.abs());
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
