//! Central-difference gradient verification against analytic gradients.

use crate::error::{Error, Result};
use crate::nn::params::ParamStore;

/// Compare the analytic gradients already accumulated in `params` against
/// central differences of `f`, coordinate by coordinate, and return the
/// maximum relative error. `f` must be a pure function of the parameter
/// values (no RNG consumption, no internal state).
///
/// Relative error per coordinate: |a - n| / max(|a|, |n|, 1e-8).
pub fn grad_check<F>(params: &mut ParamStore, mut f: F, eps: f64) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Argument("grad_check: eps must be positive".into()));
    }
    let base = f(params)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("grad_check: f is not finite ({})", base)));
    }

    let names: Vec<String> = params.names().map(|s| s.to_string()).collect();
    let mut max_rel = 0.0f64;
    for name in &names {
        let len = params.get(name)?.len();
        for i in 0..len {
            let original = params.get(name)?.data[i];
            params.get_mut(name)?.data[i] = original + eps;
            let f_plus = f(params)?;
            params.get_mut(name)?.data[i] = original - eps;
            let f_minus = f(params)?;
            params.get_mut(name)?.data[i] = original;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "grad_check: non-finite f while perturbing {}[{}]",
                    name, i
                )));
            }
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let analytic = params.get(name)?.grad[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
