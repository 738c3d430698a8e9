use crate::autodiff::{NodeId, ParamId, ParamStore, Tape};
use crate::error::{Error, Result};

/// Compare taped gradients against central differences.
///
/// For every coordinate of every parameter in `params`, the finite
/// difference `(f(θ+εe) - f(θ-εe)) / 2ε` is compared with the taped
/// gradient. Returns the maximum over coordinates of
/// `|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`. The store is restored before
/// returning.
pub fn grad_check<F>(store: &mut ParamStore, params: &[ParamId], eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape) -> Result<NodeId>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in [1e-7, 1e-3], got {eps}"
        )));
    }
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        let v = tape.scalar(loss)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("objective evaluated to {v}")));
        }
        Ok(v)
    };

    let grads = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };

    let mut worst: f64 = 0.0;
    for &pid in params {
        let shape = store.value(pid).shape().to_vec();
        let analytic = grads.get(pid, &shape);
        for i in 0..analytic.len() {
            let orig = store.value(pid).data()[i];
            store.get_mut(pid).value.data_mut()[i] = orig + eps;
            let plus = eval(store);
            store.get_mut(pid).value.data_mut()[i] = orig - eps;
            let minus = eval(store);
            store.get_mut(pid).value.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let g = analytic.data()[i];
            let denom = 1.0_f64.max(g.abs()).max(numeric.abs());
            worst = worst.max((g - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
