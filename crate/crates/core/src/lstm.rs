//! Standard (non-peephole) LSTM cell on the tape.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Parameters of one LSTM direction: a stacked `[4H, d + H]` weight over the
/// concatenated `[x; h]` and a `[4H]` bias, gate order input, forget,
/// candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn shapes(input: usize, hidden: usize) -> [Vec<usize>; 2] {
        [vec![4 * hidden, input + hidden], vec![4 * hidden]]
    }

    pub fn register<R: rand::Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let weight = store.insert(format!("{prefix}.w"), Tensor::glorot(4 * hidden, input + hidden, rng));
        let bias = store.insert(format!("{prefix}.b"), Tensor::zeros(&[4 * hidden]));
        LstmParams { weight, bias, input, hidden }
    }
}

/// One step; returns `(h, c)`.
pub fn lstm_cell(tape: &mut Tape, store: &ParamStore, p: &LstmParams, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    let w = tape.param(store, p.weight);
    let b = tape.param(store, p.bias);
    let xh = tape.concat(&[x, h_prev])?;
    let z = tape.matvec(w, xh)?;
    let z = tape.add(z, b)?;
    let hd = p.hidden;
    let i = tape.slice(z, 0, hd)?;
    let f = tape.slice(z, hd, hd)?;
    let g = tape.slice(z, 2 * hd, hd)?;
    let o = tape.slice(z, 3 * hd, hd)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Runs the cell over `xs` from a zero state, returning every hidden state
/// in input order. With `reverse` the sequence is consumed back to front.
pub fn lstm_sequence(tape: &mut Tape, store: &ParamStore, p: &LstmParams, xs: &[Var], reverse: bool) -> Result<Vec<Var>> {
    let mut h = tape.input_vec(vec![0.0; p.hidden]);
    let mut c = h;
    let mut out = vec![h; xs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..xs.len()).rev())
    } else {
        Box::new(0..xs.len())
    };
    for t in order {
        let (nh, nc) = lstm_cell(tape, store, p, xs[t], h, c)?;
        out[t] = nh;
        h = nh;
        c = nc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_check, GradCheckConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_zero_hidden() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::register(&mut store, "l", 3, 2, &mut rng);
        store.get_mut(p.weight).value = Tensor::zeros(&[8, 5]);
        let mut tape = Tape::new();
        let x = tape.input_vec(vec![0.7, -1.2, 3.0]);
        let z = tape.input_vec(vec![0.0; 2]);
        let (h, _) = lstm_cell(&mut tape, &store, &p, x, z, z).unwrap();
        assert_eq!(tape.value(h), &[0.0, 0.0]);
    }

    fn check(steps: usize) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::register(&mut store, "l", 3, 2, &mut rng);
        // nonzero biases so their gradients are exercised away from zero
        for (i, b) in store.get_mut(p.bias).value.data_mut().iter_mut().enumerate() {
            *b = 0.1 * i as f64 - 0.3;
        }
        let xs: Vec<Vec<f64>> = (0..steps).map(|t| vec![0.5 - t as f64, 0.2, -0.8 + 0.3 * t as f64]).collect();
        let report = finite_diff_check(
            &store,
            |s, tape| {
                let xv: Vec<Var> = xs.iter().map(|x| tape.input_vec(x.clone())).collect();
                let hs = lstm_sequence(tape, s, &p, &xv, false)?;
                let sums: Vec<Var> = hs.iter().map(|&h| tape.sum(h)).collect();
                Ok(tape.sum_scalars(&sums))
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn single_step_gradient() {
        check(1);
    }

    #[test]
    fn two_step_gradient() {
        check(2);
    }
}
