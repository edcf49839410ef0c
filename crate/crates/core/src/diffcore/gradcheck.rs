use super::{DiffError, Tape, Tensor, Var};

/// Largest `|analytic - numeric| / max(1, |numeric|)` over every coordinate of
/// every input, using central differences with step `eps`.
///
/// `f` builds a scalar on a fresh tape from leaves holding `inputs`; it is
/// re-run for each perturbed coordinate, so any randomness inside must be
/// reseeded identically on every call.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64, DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let eval = |xs: &[Tensor]| -> Result<f64, DiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let y = f(&mut tape, &vars)?;
        let v = tape.value(y).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DiffError::NonFinite { op: tape.kind(y) })
        }
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let y = f(&mut tape, &vars)?;
    let grads = tape.backward(y)?;

    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (slot, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        for i in 0..work[slot].len() {
            let orig = work[slot].data()[i];
            work[slot].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[slot].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[slot].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, DiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, DiffError>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)
}
