use rand::Rng;

use crate::error::{config, Error, Result};

use super::tape::{softmax_in_place, Bound, Tape, Var};
use super::tensor::{ParameterSet, Tensor};

/// Fully connected layer stored as `<prefix>.w` (`[out, in]`) and `<prefix>.b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: String,
    pub b: String,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn init<R: Rng>(
        set: &mut ParameterSet,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let layer = Linear {
            w: format!("{prefix}.w"),
            b: format!("{prefix}.b"),
            input,
            output,
        };
        set.init_weight(&layer.w, output, input, rng)?;
        set.init_bias(&layer.b, output)?;
        Ok(layer)
    }

    pub fn forward(&self, tape: &mut Tape<'_>, params: &Bound<'_>, x: Var) -> Result<Var> {
        let w = params.get(&self.w)?;
        let b = params.get(&self.b)?;
        tape.linear(x, w, b)
    }
}

/// `y = W x + b` on plain tensors.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.tensor(x);
    let wv = tape.tensor(w);
    let bv = tape.tensor(b);
    let y = tape.linear(xv, wv, bv)?;
    Ok(Tensor::vector(tape.value(y).to_vec()))
}

/// Gated recurrent cell:
///
/// ```text
/// r  = σ(W_r x + U_r h + b_r)
/// z  = σ(W_z x + U_z h + b_z)
/// ĥ  = tanh(W_h x + U_h (r ∘ h) + b_h)
/// h' = (1 − z) ∘ h + z ∘ ĥ
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruCell {
    prefix: String,
    pub input: usize,
    pub hidden: usize,
}

const GATES: [&str; 3] = ["r", "z", "h"];

impl GruCell {
    pub fn init<R: Rng>(
        set: &mut ParameterSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        for g in GATES {
            set.init_weight(format!("{prefix}.w_{g}"), hidden, input, rng)?;
            set.init_weight(format!("{prefix}.u_{g}"), hidden, hidden, rng)?;
            set.init_bias(format!("{prefix}.b_{g}"), hidden)?;
        }
        Ok(GruCell {
            prefix: prefix.to_string(),
            input,
            hidden,
        })
    }

    fn name(&self, kind: &str, gate: &str) -> String {
        format!("{}.{kind}_{gate}", self.prefix)
    }

    fn gate_pre(
        &self,
        tape: &mut Tape<'_>,
        params: &Bound<'_>,
        gate: &str,
        x: Var,
        h: Var,
    ) -> Result<Var> {
        let wx = tape.matmul_t(x, params.get(&self.name("w", gate))?)?;
        let uh = tape.matmul_t(h, params.get(&self.name("u", gate))?)?;
        let s = tape.add(wx, uh)?;
        tape.add_row(s, params.get(&self.name("b", gate))?)
    }

    /// Batched step: `x: R×input`, `h: R×hidden`.
    pub fn forward(&self, tape: &mut Tape<'_>, params: &Bound<'_>, x: Var, h: Var) -> Result<Var> {
        let (rx, cx) = tape.shape(x);
        let (rh, ch) = tape.shape(h);
        if cx != self.input || ch != self.hidden || rx != rh {
            return config(format!(
                "gru expects {}/{} columns, got x {rx}x{cx}, h {rh}x{ch}",
                self.input, self.hidden
            ));
        }
        let r_pre = self.gate_pre(tape, params, "r", x, h)?;
        let r = tape.sigmoid(r_pre);
        let z_pre = self.gate_pre(tape, params, "z", x, h)?;
        let z = tape.sigmoid(z_pre);
        let rh = tape.mul(r, h)?;
        let cand = self.gate_pre(tape, params, "h", x, rh)?;
        let cand = tape.tanh(cand);
        // h' = h + z ∘ (ĥ − h)
        let diff = tape.sub(cand, h)?;
        let step = tape.mul(z, diff)?;
        tape.add(h, step)
    }
}

/// Single-vector convenience wrapper around [`GruCell::forward`].
pub fn gru_cell(cell: &GruCell, x: &[f64], h_prev: &[f64], params: &ParameterSet) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = tape.bind_frozen(params);
    let xv = tape.constant(1, x.len(), x.to_vec())?;
    let hv = tape.constant(1, h_prev.len(), h_prev.to_vec())?;
    let out = cell.forward(&mut tape, &bound, xv, hv)?;
    Ok(tape.value(out).to_vec())
}

pub fn softmax_row(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return config("softmax of an empty row");
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("softmax of non-finite scores {scores:?}")));
    }
    let mut out = scores.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, rng_from_seed};

    #[test]
    fn linear_examples() {
        let y = linear_forward(
            &Tensor::vector(vec![1.0, 2.0]),
            &Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            &Tensor::vector(vec![1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(y.values(), &[2.0, 3.0]);

        let y = linear_forward(
            &Tensor::vector(vec![0.0, 0.0]),
            &Tensor::matrix(2, 2, vec![7.0, -2.0, 0.1, 4.0]).unwrap(),
            &Tensor::vector(vec![3.0, -1.0]),
        )
        .unwrap();
        assert_eq!(y.values(), &[3.0, -1.0]);

        let y = linear_forward(
            &Tensor::vector(vec![1.0, 1.0]),
            &Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            &Tensor::vector(vec![0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(y.values(), &[3.0, 7.0]);
    }

    #[test]
    fn linear_dimension_mismatch() {
        let r = linear_forward(
            &Tensor::vector(vec![1.0, 2.0, 3.0]),
            &Tensor::matrix(2, 2, vec![1.0; 4]).unwrap(),
            &Tensor::vector(vec![0.0, 0.0]),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn linear_backward_reaches_x_w_b() {
        let mut tape = Tape::new();
        let x = tape.variable(1, 2, vec![1.0, 2.0]).unwrap();
        let w = tape.variable(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = tape.variable(1, 2, vec![0.5, 0.5]).unwrap();
        let y = tape.linear(x, w, b).unwrap();
        let coeff = tape.constant(1, 2, vec![1.0, -1.0]).unwrap();
        let yc = tape.mul(y, coeff).unwrap();
        let loss = tape.sum(yc);
        let g = tape.backward(loss).unwrap();
        // loss = (W x)_0 - (W x)_1
        assert_eq!(g.wrt(x).unwrap(), &[1.0 - 3.0, 2.0 - 4.0]);
        assert_eq!(g.wrt(w).unwrap(), &[1.0, 2.0, -1.0, -2.0]);
        assert_eq!(g.wrt(b).unwrap(), &[1.0, -1.0]);
    }

    fn zero_cell(input: usize, hidden: usize) -> (GruCell, ParameterSet) {
        let mut set = ParameterSet::new();
        let mut rng = rng_from_seed(0);
        let cell = GruCell::init(&mut set, "gru", input, hidden, &mut rng).unwrap();
        for (_, t) in set.iter_mut() {
            t.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        (cell, set)
    }

    #[test]
    fn gru_zero_parameters_halves_state() {
        let (cell, set) = zero_cell(3, 2);
        let h = gru_cell(&cell, &[0.3, -1.0, 2.0], &[0.4, -0.2], &set).unwrap();
        assert!((h[0] - 0.2).abs() < 1e-15 && (h[1] + 0.1).abs() < 1e-15);
        let h = gru_cell(&cell, &[0.3, -1.0, 2.0], &[0.0, 0.0], &set).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn gru_rejects_wrong_sizes() {
        let (cell, set) = zero_cell(3, 2);
        assert!(gru_cell(&cell, &[0.0; 2], &[0.0; 2], &set).is_err());
        assert!(gru_cell(&cell, &[0.0; 3], &[0.0; 3], &set).is_err());
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(11);
        let mut set = ParameterSet::new();
        let cell = GruCell::init(&mut set, "gru", 3, 4, &mut rng).unwrap();
        for (_, t) in set.iter_mut() {
            t.values_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = grad_check(&set, 1e-6, |tape, p| {
            let xv = tape.constant(2, 3, x.clone())?;
            let hv = tape.constant(2, 4, h0.clone())?;
            let h1 = cell.forward(tape, p, xv, hv)?;
            let h2 = cell.forward(tape, p, xv, h1)?;
            let sq = tape.mul(h2, h2)?;
            Ok(tape.sum(sq))
        })
        .unwrap();
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_row(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax_row(&[1f64.ln(), 2f64.ln(), 3f64.ln()]).unwrap();
        for (a, b) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let big = softmax_row(&[1000.0, 1001.0]).unwrap();
        let small = softmax_row(&[0.0, 1.0]).unwrap();
        for (a, b) in big.iter().zip(&small) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(softmax_row(&[0.0, f64::NAN]), Err(Error::Numeric(_))));
        assert!(matches!(softmax_row(&[f64::INFINITY]), Err(Error::Numeric(_))));
    }
}
