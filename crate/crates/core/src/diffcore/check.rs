//! Central finite-difference checking of tape gradients.

use super::{Tape, Tensor, Var};

/// Gradients below this magnitude are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Largest relative error between the tape gradient of `f` and central
/// differences with `step`, over every element of every input.
///
/// `f` builds a scalar from leaves created for `inputs`, in order. Outputs
/// of `stop_gradient` are held at their values at `inputs` while probing,
/// which is the function the reverse sweep differentiates.
pub fn max_gradient_error<F>(inputs: &[Tensor], step: f64, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).expect("backward failed");
    let stops = tape.stop_values();
    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::with_frozen_stops(stops.clone());
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).item()
    };

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let g = grads.wrt(*v);
        for e in 0..inputs[k].len() {
            let orig = inputs[k].data()[e];
            probe[k].data_mut()[e] = orig + step;
            let up = eval(&probe);
            probe[k].data_mut()[e] = orig - step;
            let down = eval(&probe);
            probe[k].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(g.data()[e], numeric));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use std::rc::Rc;

    use proptest::prelude::*;

    use super::*;
    use crate::seed::rng_from_seed;

    const STEP: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    /// Uniform entries kept at least 0.05 away from zero so kinks of relu
    /// and abs are never straddled by a finite-difference probe.
    fn away_from_zero(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        Tensor::uniform(rows, cols, 1.0, &mut rng).map(|x| if x.abs() < 0.05 { x + 0.1f64.copysign(x) } else { x })
    }

    fn rand(rows: usize, cols: usize, seed: u64) -> Tensor {
        Tensor::uniform(rows, cols, 1.0, &mut rng_from_seed(seed))
    }

    #[test]
    fn stop_gradient_is_exactly_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        let s = tape.stop_gradient(x);
        let l = tape.sum(s);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 0.0]);
        assert!(!g.is_connected(x));
    }

    #[test]
    fn mse_matches_hand_derivation() {
        let w = Tensor::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.5]);
        let x = Tensor::from_vec(2, 1, vec![0.3, -0.7]);
        let y = Tensor::from_vec(2, 1, vec![1.0, 0.0]);
        let mut tape = Tape::new();
        let wv = tape.leaf(w.clone());
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let wx = tape.matmul(wv, xv);
        // Column vector: sum of squares over both rows.
        let l = tape.mse(wx, yv);
        let g = tape.backward(l).unwrap().wrt(wv);
        let r = w.matmul(&x).zip_map(&y, |a, b| a - b);
        // mse divides by the row count (2).
        let expected = r.matmul_t(&x).map(|v| v * 2.0 / 2.0);
        for (a, b) in g.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn segment_mean_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 3.0]]));
        let s = tape.segment_mean(x, Rc::from(vec![0, 1, 1]), 3);
        assert_eq!(tape.value(s).data(), &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let l = tape.sum(s);
        let g = tape.backward(l).unwrap().wrt(x);
        assert_eq!(g.data(), &[1.0, 1.0, 0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn nan_trips_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(-1.0));
        let s = tape.sqrt(x);
        assert!(tape.check_finite().is_err());
        assert!(tape.backward(s).is_err());
    }

    #[test]
    fn disconnected_leaf_gets_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let y = tape.leaf(Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
        let l = tape.sum(x);
        assert_eq!(tape.backward(l).unwrap().wrt(y).data(), &[0.0; 3]);
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let a = tape.leaf(rand(5, 4, 9));
            let b = tape.leaf(rand(4, 3, 10));
            let m = tape.matmul(a, b);
            let r = tape.relu(m);
            let l = tape.mean(r);
            tape.value(l).item()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn primitives_match_finite_differences(seed in any::<u64>()) {
            let s = |k: u64| crate::seed::derive_seed(seed, &k.to_string());
            let a = rand(3, 4, s(0));
            let b = rand(4, 2, s(1));
            let c = rand(3, 4, s(2));
            let bias = rand(1, 4, s(3));
            let nz = away_from_zero(3, 4, s(4));
            let pos = rand(3, 4, s(5)).map(|x| x.abs() + 0.5);
            let idx: Rc<[usize]> = Rc::from(vec![2, 0, 2, 1, 0]);
            let seg: Rc<[usize]> = Rc::from(vec![1, 0, 1]);
            let w: Rc<[f64]> = Rc::from(vec![0.5, -2.0, 1.5]);
            let targets: Rc<[f64]> = Rc::from(vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
            type Case<'a> = (&'a str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Var + 'a>);
            let cases: Vec<Case> = vec![
                ("matmul", vec![a.clone(), b.clone()], Box::new(|t, v| { let m = t.matmul(v[0], v[1]); t.sum(m) })),
                ("add", vec![a.clone(), c.clone()], Box::new(|t, v| { let m = t.add(v[0], v[1]); let q = t.mul(m, m); t.sum(q) })),
                ("sub", vec![a.clone(), c.clone()], Box::new(|t, v| { let m = t.sub(v[0], v[1]); let q = t.mul(m, m); t.sum(q) })),
                ("mul", vec![a.clone(), c.clone()], Box::new(|t, v| { let m = t.mul(v[0], v[1]); t.sum(m) })),
                ("scale", vec![a.clone()], Box::new(|t, v| { let m = t.scale(v[0], -1.7); let q = t.mul(m, m); t.sum(q) })),
                ("add_scalar", vec![a.clone()], Box::new(|t, v| { let m = t.add_scalar(v[0], 0.3); let q = t.mul(m, m); t.sum(q) })),
                ("add_row", vec![a.clone(), bias.clone()], Box::new(|t, v| { let m = t.add_row(v[0], v[1]); let q = t.mul(m, m); t.sum(q) })),
                ("relu", vec![nz.clone()], Box::new(|t, v| { let m = t.relu(v[0]); let q = t.mul(m, m); t.sum(q) })),
                ("gather_rows", vec![a.clone()], Box::new(|t, v| { let m = t.gather_rows(v[0], idx.clone()); let q = t.mul(m, m); t.sum(q) })),
                ("segment_sum", vec![a.clone()], Box::new(|t, v| { let m = t.segment_sum(v[0], seg.clone(), 3); let q = t.mul(m, m); t.sum(q) })),
                ("segment_mean", vec![a.clone()], Box::new(|t, v| { let m = t.segment_mean(v[0], seg.clone(), 2); let q = t.mul(m, m); t.sum(q) })),
                ("scale_rows", vec![a.clone()], Box::new(|t, v| { let m = t.scale_rows(v[0], w.clone()); let q = t.mul(m, m); t.sum(q) })),
                ("concat", vec![a.clone(), rand(3, 2, s(6))], Box::new(|t, v| {
                    let m = t.concat(v[0], v[1]); let q = t.mul(m, m); t.sum(q)
                })),
                ("mse", vec![a.clone(), c.clone()], Box::new(|t, v| t.mse(v[0], v[1]))),
                ("mean", vec![a.clone()], Box::new(|t, v| { let q = t.mul(v[0], v[0]); t.mean(q) })),
                ("row_sum", vec![a.clone()], Box::new(|t, v| { let r = t.row_sum(v[0]); let q = t.mul(r, r); t.sum(q) })),
                ("bce_with_logits", vec![a.clone().map(|x| 3.0 * x)], Box::new(|t, v| t.bce_with_logits(v[0], targets.clone()))),
                ("softplus", vec![a.clone().map(|x| 4.0 * x)], Box::new(|t, v| { let m = t.softplus(v[0]); t.sum(m) })),
                ("abs", vec![nz.clone()], Box::new(|t, v| { let m = t.abs(v[0]); let q = t.mul(m, v[0]); t.sum(q) })),
                ("sqrt", vec![pos.clone()], Box::new(|t, v| { let m = t.sqrt(v[0]); t.sum(m) })),
                ("stop_gradient", vec![a.clone()], Box::new(|t, v| { let s = t.stop_gradient(v[0]); let q = t.mul(s, v[0]); t.sum(q) })),
            ];
            for (name, inputs, f) in &cases {
                let err = max_gradient_error(inputs, STEP, f);
                prop_assert!(err < TOL, "{name}: {err}");
            }
        }

        #[test]
        fn three_layer_composition(seed in any::<u64>()) {
            let s = |k: u64| crate::seed::derive_seed(seed, &k.to_string());
            let x = rand(5, 3, s(0));
            let params = vec![rand(3, 6, s(1)), rand(1, 6, s(2)), rand(6, 4, s(3)), rand(4, 1, s(4))];
            let y = rand(5, 1, s(5));
            let f = |t: &mut Tape, v: &[Var]| {
                let xv = t.constant(x.clone());
                let yv = t.constant(y.clone());
                let h = t.matmul(xv, v[0]);
                let h = t.add_row(h, v[1]);
                let h = t.softplus(h);
                let h = t.matmul(h, v[2]);
                let h = t.softplus(h);
                let o = t.matmul(h, v[3]);
                t.mse(o, yv)
            };
            let err = max_gradient_error(&params, STEP, f);
            prop_assert!(err < TOL, "{err}");
        }
    }
}
