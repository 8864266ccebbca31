use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::{Matrix, NetworkSpec, ParamVector};
use crate::{Error, Result};

fn layer_views<'a>(
    params: &'a ParamVector,
    w_start: usize,
    b_start: usize,
    n: usize,
    m: usize,
) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
    let values = params.values();
    let weights = ArrayView2::from_shape((n, m), &values[w_start..b_start]).expect("layout");
    let bias = ArrayView1::from(&values[b_start..b_start + m]);
    (weights, bias)
}

fn check_inputs(spec: &NetworkSpec, params: &ParamVector, inputs: ArrayView2<f64>) -> Result<()> {
    spec.check_params(params)?;
    if inputs.ncols() != spec.input_dim() {
        return Err(Error::dim("input_dim", spec.input_dim(), inputs.ncols()));
    }
    if inputs.nrows() == 0 {
        return Err(Error::dim("n_samples", 1, 0));
    }
    Ok(())
}

/// Runs the network on every row of `inputs` and returns the logits.
pub fn forward(params: &ParamVector, spec: &NetworkSpec, inputs: ArrayView2<f64>) -> Result<Matrix> {
    check_inputs(spec, params, inputs)?;
    let layout = spec.layout();
    let last = layout.len() - 1;
    let mut act: Array2<f64> = inputs.to_owned();
    for (l, &(w_start, b_start, n, m)) in layout.iter().enumerate() {
        let (w, b) = layer_views(params, w_start, b_start, n, m);
        let mut z = act.dot(&w);
        z += &b;
        if l < last {
            let activation = spec.activation();
            z.mapv_inplace(|v| activation.apply(v));
        }
        act = z;
    }
    Ok(act)
}

/// Reverse-mode gradient of `loss_fn(forward(params))` with respect to `params`.
///
/// `loss_fn` receives the logits and returns the scalar loss together with
/// its gradient with respect to those logits. Returns `(loss, gradient)`.
pub fn gradient<F>(
    params: &ParamVector,
    spec: &NetworkSpec,
    inputs: ArrayView2<f64>,
    loss_fn: F,
) -> Result<(f64, ParamVector)>
where
    F: FnOnce(&Matrix) -> Result<(f64, Matrix)>,
{
    check_inputs(spec, params, inputs)?;
    let layout = spec.layout();
    let last = layout.len() - 1;
    let activation = spec.activation();

    // pre_acts[l] is layer l's affine output; acts[l] is layer l's input.
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(layout.len() + 1);
    let mut pre_acts: Vec<Array2<f64>> = Vec::with_capacity(layout.len());
    acts.push(inputs.to_owned());
    for (l, &(w_start, b_start, n, m)) in layout.iter().enumerate() {
        let (w, b) = layer_views(params, w_start, b_start, n, m);
        let mut z = acts[l].dot(&w);
        z += &b;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: l });
        }
        let a = if l < last {
            z.mapv(|v| activation.apply(v))
        } else {
            z.clone()
        };
        pre_acts.push(z);
        acts.push(a);
    }

    let logits = &acts[layout.len()];
    let (loss, dlogits) = loss_fn(logits)?;
    if dlogits.dim() != logits.dim() {
        return Err(Error::dim("loss_gradient", logits.len(), dlogits.len()));
    }
    if !loss.is_finite() || dlogits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { layer: layout.len() });
    }

    let mut grad = params.zeros_like();
    let mut delta = dlogits;
    for l in (0..layout.len()).rev() {
        let (w_start, b_start, n, m) = layout[l];
        let grad_w = acts[l].t().dot(&delta);
        let grad_b = delta.sum_axis(Axis(0));
        {
            let g = grad.values_mut();
            g[w_start..b_start].copy_from_slice(grad_w.as_standard_layout().as_slice().expect("contiguous"));
            g[b_start..b_start + m].copy_from_slice(grad_b.as_slice().expect("contiguous"));
        }
        if l > 0 {
            let (w, _) = layer_views(params, w_start, b_start, n, m);
            let mut upstream = delta.dot(&w.t());
            upstream.zip_mut_with(&pre_acts[l - 1], |d, &z| *d *= activation.derivative(z));
            if upstream.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: l - 1 });
            }
            delta = upstream;
        }
    }
    Ok((loss, grad))
}
