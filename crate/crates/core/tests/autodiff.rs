mod oracles;

use icudg_core::autodiff::{Matrix, Tape, Var};
use oracles::grad::{central_diff, rel_error};
use proptest::prelude::*;

const N: usize = 3;

/// Applies instruction `code` to nodes `a` and `b`; every result is `N x N`.
fn apply(t: &mut Tape, code: u8, a: Var, b: Var) -> Var {
    match code % 17 {
        0 => t.add(a, b).unwrap(),
        1 => t.sub(a, b).unwrap(),
        2 => t.mul(a, b).unwrap(),
        3 => {
            let m = t.matmul(a, b).unwrap();
            t.scale(m, 0.5)
        }
        4 => t.sigmoid(a),
        5 => t.tanh(a),
        6 => {
            let s = t.square(a);
            t.scale(s, 0.3)
        }
        7 => {
            let s = t.scale(a, 0.2);
            t.exp(s)
        }
        8 => {
            let s = t.square(a);
            let s = t.add_scalar(s, 1.0);
            t.log(s)
        }
        9 => {
            let s = t.square(a);
            let s = t.add_scalar(s, 1.0);
            t.sqrt(s)
        }
        10 => t.transpose(a),
        11 => t.one_minus(a),
        12 => {
            let m = t.mean_rows(b);
            t.add(a, m).unwrap()
        }
        13 => {
            let s = t.sum_cols(b);
            t.mul(a, s).unwrap()
        }
        14 => t.covariance(a).unwrap(),
        15 => {
            let top = t.slice(a, 0, 1, 0, N).unwrap();
            let rest = t.slice(b, 1, N - 1, 0, N).unwrap();
            t.concat_rows(&[top, rest]).unwrap()
        }
        _ => {
            let left = t.slice(a, 0, N, 0, 1).unwrap();
            let right = t.slice(b, 0, N, 1, N - 1).unwrap();
            let m = t.concat_cols(&[left, right]).unwrap();
            t.select_rows(m, &[2, 0, 0]).unwrap()
        }
    }
}

/// Builds the graph and returns its scalar output and the leaf gradients.
fn run(leaves: &[f64], program: &[(u8, usize, usize)], finish: u8) -> (f64, Vec<f64>) {
    let mut t = Tape::new();
    let vars: Vec<Var> = leaves.chunks(N * N).map(|c| t.param(Matrix::from_vec(N, N, c.to_vec()).unwrap())).collect();
    let mut nodes = vars.clone();
    for &(code, a, b) in program {
        let v = apply(&mut t, code, nodes[a % nodes.len()], nodes[b % nodes.len()]);
        nodes.push(v);
    }
    let last = *nodes.last().unwrap();
    let out = match finish % 4 {
        0 => t.sum(last),
        1 => t.mean(last),
        2 => {
            let v = t.var_rows(last, true).unwrap();
            t.sum(v)
        }
        _ => {
            let col = t.slice(last, 0, N, 0, 1).unwrap();
            t.bce_with_logits(col, &[1.0, 0.0, 1.0], &[0.2, 0.3, 0.5]).unwrap()
        }
    };
    let g = t.backward(out).unwrap();
    let flat = vars.iter().flat_map(|&v| g.get(v).as_slice().to_vec()).collect();
    (t.value(out).item(), flat)
}

fn program() -> impl Strategy<Value = Vec<(u8, usize, usize)>> {
    prop::collection::vec((any::<u8>(), 0usize..64, 0usize..64), 1..12)
}

proptest! {
    #![proptest_config(oracles::config(256))]

    #[test]
    fn reverse_mode_matches_finite_differences(
        leaves in prop::collection::vec(-1.0f64..1.0, 3 * N * N),
        program in program(),
        finish in any::<u8>(),
    ) {
        let (_, analytic) = run(&leaves, &program, finish);
        let numeric = central_diff(&leaves, |x| run(x, &program, finish).0);
        let err = rel_error(&analytic, &numeric);
        prop_assert!(err < 1e-4, "relative error {err:e}");
    }

    #[test]
    fn backward_is_bitwise_deterministic(
        leaves in prop::collection::vec(-1.0f64..1.0, 3 * N * N),
        program in program(),
        finish in any::<u8>(),
    ) {
        let (_, a) = run(&leaves, &program, finish);
        let (_, b) = run(&leaves, &program, finish);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
