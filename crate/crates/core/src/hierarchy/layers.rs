use crate::error::{shape_err, Result};
use crate::tensor::{Matrix, Tape, Var};

use super::gat::{gat_layer, GatParams, Neighborhoods};

/// Two-layer feed-forward weights `x ↦ relu(x·W₁ + b₁)·W₂ + b₂`.
#[derive(Clone, Copy, Debug)]
pub struct Ffn {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

pub fn ffn(tape: &mut Tape, x: Var, p: &Ffn) -> Result<Var> {
    let h = tape.matmul(x, p.w1)?;
    let h = tape.add_row(h, p.b1)?;
    let h = tape.relu(h);
    let y = tape.matmul(h, p.w2)?;
    tape.add_row(y, p.b2)
}

/// `H_S` from the contextual embedding.
pub fn initial_features(tape: &mut Tape, v_s: Var, p: &Ffn) -> Result<Var> {
    let (d_in, w_in) = (tape.value(v_s).cols(), tape.value(p.w1).rows());
    if d_in != w_in {
        return Err(shape_err("initial_features", format!("V_S has {d_in} columns, FFN expects {w_in}")));
    }
    ffn(tape, v_s, p)
}

/// Cross-attention assignment `softmax((H_c·W_c)(H_p·W_p)ᵀ/√d)`.
pub fn soft_assignment(tape: &mut Tape, h_child: Var, h_parent_init: Var, w_c: Var, w_p: Var) -> Result<Var> {
    let q = tape.matmul(h_child, w_c)?;
    let k = tape.matmul(h_parent_init, w_p)?;
    let d = tape.value(q).cols();
    if tape.value(k).cols() != d {
        return Err(shape_err(
            "soft_assignment",
            format!("child projection width {d}, parent projection width {}", tape.value(k).cols()),
        ));
    }
    let kt = tape.transpose(k);
    let logits = tape.matmul(q, kt)?;
    let logits = tape.scale(logits, 1.0 / (d as f64).sqrt());
    Ok(tape.softmax_rows(logits))
}

/// `Aᵀ·H_child + H_parent_init`.
pub fn aggregate_parent(tape: &mut Tape, a: Var, h_child: Var, h_parent_init: Var) -> Result<Var> {
    let at = tape.transpose(a);
    let pooled = tape.matmul(at, h_child)?;
    tape.add(pooled, h_parent_init)
}

/// `Aᵀ·A_child·A`.
pub fn coarsen_adjacency(a_assign: &Matrix, a_child: &Matrix) -> Result<Matrix> {
    if !a_child.is_square() || a_child.rows() != a_assign.rows() {
        return Err(shape_err(
            "coarsen_adjacency",
            format!(
                "assignment is {}x{}, child adjacency is {}x{}",
                a_assign.rows(),
                a_assign.cols(),
                a_child.rows(),
                a_child.cols()
            ),
        ));
    }
    a_assign.t_matmul(&a_child.matmul(a_assign)?)
}

/// Entrywise double sum `Σ_{m,n} A[m,i]·A[n,j]·A_child[m,n]`.
pub fn coarsen_adjacency_oracle(a_assign: &Matrix, a_child: &Matrix) -> Matrix {
    let (n_c, n_p) = a_assign.shape();
    Matrix::from_fn(n_p, n_p, |i, j| {
        let mut s = 0.0;
        for m in 0..n_c {
            for n in 0..n_c {
                s += a_assign.get(m, i) * a_assign.get(n, j) * a_child.get(m, n);
            }
        }
        s
    })
}

/// Inputs of the region → locality → segment pass.
#[derive(Clone, Copy, Debug)]
pub struct LowPassInputs<'a> {
    pub h_r: Var,
    pub a_lr: Var,
    pub a_sl: Var,
    pub nb_r: &'a Neighborhoods,
    pub nb_l: &'a Neighborhoods,
    pub nb_s: &'a Neighborhoods,
}

/// `H̃_R = GAT(H_R)`, `H_L^l = GAT(A_LR·H̃_R)`, `H_S^l = GAT(A_SL·H_L^l)`.
pub fn propagate_low_frequency(
    tape: &mut Tape,
    x: &LowPassInputs<'_>,
    gat_r: &GatParams,
    gat_l: &GatParams,
    gat_s: &GatParams,
) -> Result<Var> {
    let h_r = gat_layer(tape, x.h_r, x.nb_r, gat_r)?;
    let h_l = tape.matmul(x.a_lr, h_r)?;
    let h_l = gat_layer(tape, h_l, x.nb_l, gat_l)?;
    let h_s = tape.matmul(x.a_sl, h_l)?;
    gat_layer(tape, h_s, x.nb_s, gat_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.max_abs_diff(b).unwrap() < tol
    }

    #[test]
    fn ffn_zero_and_identity() {
        let mut tape = Tape::new();
        let v = tape.constant(Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 3.0]]));
        let z = Ffn {
            w1: tape.leaf(Matrix::zeros(2, 2)),
            b1: tape.leaf(Matrix::zeros(1, 2)),
            w2: tape.leaf(Matrix::zeros(2, 2)),
            b2: tape.leaf(Matrix::zeros(1, 2)),
        };
        let h = initial_features(&mut tape, v, &z).unwrap();
        assert_eq!(tape.value(h), &Matrix::zeros(2, 2));
        let id = Ffn {
            w1: tape.leaf(Matrix::identity(2)),
            b1: tape.leaf(Matrix::zeros(1, 2)),
            w2: tape.leaf(Matrix::identity(2)),
            b2: tape.leaf(Matrix::zeros(1, 2)),
        };
        let h = initial_features(&mut tape, v, &id).unwrap();
        assert_eq!(tape.value(h), tape.value(v));
    }

    #[test]
    fn ffn_hand_case() {
        // x = (1, −2); W₁ = [[1, 2], [3, −1]], b₁ = (0.5, 0) → pre (−4.5, 4) → relu (0, 4)
        // W₂ = [[2], [0.25]], b₂ = 1 → 0 + 1 + 1 = 2
        let mut tape = Tape::new();
        let v = tape.constant(Matrix::from_rows(&[vec![1.0, -2.0]]));
        let p = Ffn {
            w1: tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]])),
            b1: tape.leaf(Matrix::from_rows(&[vec![0.5, 0.0]])),
            w2: tape.leaf(Matrix::column(&[2.0, 0.25])),
            b2: tape.leaf(Matrix::scalar(1.0)),
        };
        let h = initial_features(&mut tape, v, &p).unwrap();
        assert!((tape.value(h).item() - 2.0).abs() < 1e-12);
        let bad = tape.constant(Matrix::zeros(1, 3));
        assert!(initial_features(&mut tape, bad, &p).is_err());
    }

    #[test]
    fn assignment_zero_weights_uniform() {
        let mut tape = Tape::new();
        let hc = tape.constant(Matrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64));
        let hp = tape.constant(Matrix::from_fn(3, 3, |i, j| (i * j) as f64));
        let w = tape.leaf(Matrix::zeros(3, 3));
        let a = soft_assignment(&mut tape, hc, hp, w, w).unwrap();
        assert!(approx(tape.value(a), &Matrix::filled(4, 3, 1.0 / 3.0), 1e-15));
        let hp1 = tape.constant(Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]));
        let w1 = tape.leaf(Matrix::identity(3));
        let a = soft_assignment(&mut tape, hc, hp1, w1, w1).unwrap();
        assert_eq!(tape.value(a), &Matrix::filled(4, 1, 1.0));
    }

    #[test]
    fn assignment_hand_case() {
        let mut tape = Tape::new();
        let hc = tape.constant(Matrix::column(&[1.0, -1.0]));
        let hp = tape.constant(Matrix::column(&[2.0, 0.5]));
        let w = tape.leaf(Matrix::identity(1));
        let a = soft_assignment(&mut tape, hc, hp, w, w).unwrap();
        for (i, x) in [1.0f64, -1.0].iter().enumerate() {
            let (e0, e1) = ((2.0 * x).exp(), (0.5 * x).exp());
            assert!((tape.value(a).get(i, 0) - e0 / (e0 + e1)).abs() < 1e-15);
            assert!((tape.value(a).get(i, 1) - e1 / (e0 + e1)).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_examples() {
        let mut tape = Tape::new();
        let hc = tape.constant(Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]));
        let init = tape.constant(Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]));
        let id = tape.constant(Matrix::identity(2));
        let zero = tape.constant(Matrix::zeros(2, 2));
        let out = aggregate_parent(&mut tape, id, hc, zero).unwrap();
        assert_eq!(tape.value(out), tape.value(hc));
        let hz = tape.constant(Matrix::zeros(2, 2));
        let out = aggregate_parent(&mut tape, id, hz, init).unwrap();
        assert_eq!(tape.value(out), tape.value(init));
        let uniform = tape.constant(Matrix::filled(2, 2, 0.5));
        let out = aggregate_parent(&mut tape, uniform, hc, init).unwrap();
        let expect = Matrix::from_rows(&[vec![1.1, 1.2], vec![1.3, 1.4]]);
        assert!(approx(tape.value(out), &expect, 1e-15));
    }

    #[test]
    fn coarsen_examples() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        let perm = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        let expect = perm.transpose().matmul(&a).unwrap().matmul(&perm).unwrap();
        assert_eq!(coarsen_adjacency(&perm, &a).unwrap(), expect);
        let u = Matrix::filled(3, 2, 0.5);
        assert!(approx(&coarsen_adjacency(&u, &a).unwrap(), &Matrix::filled(2, 2, 3.0 / 4.0), 1e-15));
        assert_eq!(coarsen_adjacency(&u, &Matrix::zeros(3, 3)).unwrap(), Matrix::zeros(2, 2));
        assert!(coarsen_adjacency(&u, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn oracle_matches_matrix_form() {
        let s = Matrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0);
        let a = Matrix::from_fn(5, 5, |i, j| ((i + 2 * j) % 3 == 0) as u8 as f64);
        let m = coarsen_adjacency(&s, &a).unwrap();
        assert!(approx(&m, &coarsen_adjacency_oracle(&s, &a), 1e-12));
    }

    #[test]
    fn zero_gats_give_zero_low_pass() {
        let mut tape = Tape::new();
        let d = 4;
        let h_r = tape.constant(Matrix::from_fn(2, d, |i, j| (i + j) as f64));
        let a_lr = tape.constant(Matrix::filled(5, 2, 0.5));
        let a_sl = tape.constant(Matrix::filled(20, 5, 0.2));
        let gat =
            GatParams { w: tape.leaf(Matrix::zeros(d, d)), attn: tape.leaf(Matrix::zeros(2 * d, 1)), leaky_slope: 0.2 };
        let nb = |n: usize| Neighborhoods::from_lists(&vec![vec![]; n]).unwrap();
        let (nb_r, nb_l, nb_s) = (nb(2), nb(5), nb(20));
        let x = LowPassInputs { h_r, a_lr, a_sl, nb_r: &nb_r, nb_l: &nb_l, nb_s: &nb_s };
        let out = propagate_low_frequency(&mut tape, &x, &gat, &gat, &gat).unwrap();
        assert_eq!(tape.value(out), &Matrix::zeros(20, d));
    }

    #[test]
    fn degenerate_hierarchy_is_gat_chain() {
        let mut tape = Tape::new();
        let h = Matrix::from_rows(&[vec![0.5, -0.25], vec![1.0, 2.0]]);
        let h_r = tape.constant(h.clone());
        let id = tape.constant(Matrix::identity(2));
        let gat =
            GatParams { w: tape.leaf(Matrix::identity(2)), attn: tape.leaf(Matrix::zeros(4, 1)), leaky_slope: 0.2 };
        let nb = Neighborhoods::from_lists(&[vec![], vec![]]).unwrap();
        let x = LowPassInputs { h_r, a_lr: id, a_sl: id, nb_r: &nb, nb_l: &nb, nb_s: &nb };
        let out = propagate_low_frequency(&mut tape, &x, &gat, &gat, &gat).unwrap();
        let elu = |v: f64| if v > 0.0 { v } else { v.exp() - 1.0 };
        let expect = h.map(|v| elu(elu(elu(v))));
        assert!(approx(tape.value(out), &expect, 1e-15));
    }
}
