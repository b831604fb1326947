use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Compares the tape gradient of a scalar function against central
/// differences with step `eps`, returning
/// `max_i |autodiff_i - fd_i| / max(1, |fd_i|)`.
///
/// `f` receives a fresh tape and the point registered as a parameter, and
/// must return a scalar node.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(point), eps)
}

/// [`grad_check`] over several inputs at once; every coordinate of every
/// input is perturbed.
pub fn grad_check_many<F>(f: F, points: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |pts: &[Tensor]| -> Result<(Tape, Vec<Var>, Var, f64)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = pts.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("grad_check objective returned {v}")));
        }
        Ok((tape, vars, out, v))
    };

    let (tape, vars, out, _) = eval(points)?;
    let grads = tape.gradients(out, &vars)?;

    let mut work = points.to_vec();
    let mut worst: f64 = 0.0;
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("requested gradient");
        for (i, &orig) in points[pi].data().iter().enumerate() {
            work[pi].data_mut()[i] = orig + eps;
            let plus = eval(&work)?.3;
            work[pi].data_mut()[i] = orig - eps;
            let minus = eval(&work)?.3;
            work[pi].data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1.0));
        }
    }
    Ok(worst)
}
