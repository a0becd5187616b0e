use crate::error::Result;

use super::tape::{Bound, Tape, Var};
use super::tensor::ParameterSet;

/// Central differences `(f(p+h) − f(p−h)) / 2h` for every parameter value.
pub fn finite_difference_grads<F>(params: &ParameterSet, h: f64, f: F) -> Result<Vec<Vec<f64>>>
where
    F: for<'a> Fn(&mut Tape<'a>, &Bound<'a>) -> Result<Var>,
{
    let eval = |set: &ParameterSet| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = tape.bind_frozen(set);
        let out = f(&mut tape, &bound)?;
        Ok(tape.scalar(out))
    };
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let n = probe.tensor_at(i).len();
        let mut g = Vec::with_capacity(n);
        for j in 0..n {
            let orig = probe.tensor_at(i).values()[j];
            probe.tensor_at_mut(i).values_mut()[j] = orig + h;
            let plus = eval(&probe)?;
            probe.tensor_at_mut(i).values_mut()[j] = orig - h;
            let minus = eval(&probe)?;
            probe.tensor_at_mut(i).values_mut()[j] = orig;
            g.push((plus - minus) / (2.0 * h));
        }
        out.push(g);
    }
    Ok(out)
}

/// Max over all parameter values of `|analytic − numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(params: &ParameterSet, h: f64, f: F) -> Result<f64>
where
    F: for<'a> Fn(&mut Tape<'a>, &Bound<'a>) -> Result<Var>,
{
    let analytic: Vec<Vec<f64>> = {
        let mut tape = Tape::new();
        let bound = tape.bind(params);
        let out = f(&mut tape, &bound)?;
        let grads = tape.backward(out)?;
        bound
            .vars()
            .iter()
            .zip(params.iter())
            .map(|(v, (_, t))| grads.wrt(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect()
    };
    let numeric = finite_difference_grads(params, h, &f)?;
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        for (x, y) in a.iter().zip(n) {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    Ok(worst)
}
