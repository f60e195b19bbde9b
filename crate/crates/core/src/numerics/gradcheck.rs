//! Central-difference gradient verification.

use super::params::{Grads, ParamId, ParamStore, Params};
use crate::error::{Error, Result};

/// Per-parameter outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: Option<String>,
    /// Analytic and numeric values of the worst component.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub components_checked: usize,
}

/// Compare the analytic gradient of `loss_fn` against central differences
/// over every component of every parameter; returns the max relative error
/// `|a − n| / max(|a|, |n|, 1e-8)`.
///
/// `loss_fn` must return the loss and accumulate its gradient into the
/// supplied buffer (which arrives zeroed).
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, loss_fn: F) -> Result<f64>
where
    F: FnMut(&Params, &mut Grads) -> f64,
{
    let ids: Vec<ParamId> = store.ids().collect();
    grad_check_ids(store, &ids, eps, loss_fn).map(|r| r.max_relative_error)
}

/// [`grad_check`] restricted to `ids`.
pub fn grad_check_ids<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    eps: f64,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&Params, &mut Grads) -> f64,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::Range(format!("gradient-check eps {eps} outside [1e-6, 1e-4]")));
    }
    let mut analytic = Grads::zeros_like(store.params());
    let base = loss_fn(store.params(), &mut analytic);
    let mut scratch = Grads::zeros_like(store.params());
    let again = loss_fn(store.params(), &mut scratch);
    if base.to_bits() != again.to_bits() {
        return Err(Error::Determinism {
            first: base,
            second: again,
        });
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        components_checked: 0,
    };
    for &id in ids {
        let n = store.value(id).len();
        for k in 0..n {
            let orig = store.value(id).values()[k];
            store.params_mut().get_mut(id).values_mut()[k] = orig + eps;
            scratch.zero();
            let plus = loss_fn(store.params(), &mut scratch);
            store.params_mut().get_mut(id).values_mut()[k] = orig - eps;
            scratch.zero();
            let minus = loss_fn(store.params(), &mut scratch);
            store.params_mut().get_mut(id).values_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id).values()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if !rel.is_finite() {
                return Err(Error::Numeric {
                    name: store.name(id).to_string(),
                    detail: format!("non-finite gradient comparison at component {k}"),
                });
            }
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_param = Some(format!("{}[{k}]", store.name(id)));
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
            report.components_checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    #[test]
    fn quadratic() {
        let mut store = ParamStore::new(0);
        let id = store.register("theta", Tensor::vector(vec![1.0])).unwrap();
        let err = grad_check(&mut store, 1e-5, |p, g| {
            let t = p.get(id).values()[0];
            g.get_mut(id).values_mut()[0] += 2.0 * t;
            t * t
        })
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_has_zero_error() {
        let mut store = ParamStore::new(0);
        store.register("theta", Tensor::vector(vec![0.3, 0.4])).unwrap();
        let err = grad_check(&mut store, 1e-5, |_, _| 3.0).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut store = ParamStore::new(0);
        let id = store.register("theta", Tensor::vector(vec![1.0])).unwrap();
        let err = grad_check(&mut store, 1e-5, |p, g| {
            let t = p.get(id).values()[0];
            g.get_mut(id).values_mut()[0] += 3.0 * t;
            t * t
        })
        .unwrap();
        assert!(err > 0.3);
    }

    #[test]
    fn nondeterministic_loss_is_rejected() {
        let mut store = ParamStore::new(0);
        store.register("theta", Tensor::vector(vec![1.0])).unwrap();
        let mut calls = 0.0;
        let res = grad_check(&mut store, 1e-5, |_, _| {
            calls += 1.0;
            calls
        });
        assert!(matches!(res, Err(Error::Determinism { .. })));
    }

    #[test]
    fn eps_range_enforced() {
        let mut store = ParamStore::new(0);
        store.register("theta", Tensor::vector(vec![1.0])).unwrap();
        assert!(grad_check(&mut store, 1e-3, |_, _| 0.0).is_err());
    }
}
