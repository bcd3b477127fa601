use crate::config::{LossWeights, SemanticGram};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Matrix, Tape, Var};

/// Cosine guard for zero-norm rows.
pub const COSINE_EPS: f64 = 1e-12;

/// InfoNCE of children against all parents, with the positive parent taken
/// as the argmax of each assignment row (not differentiated).
pub fn infonce(tape: &mut Tape, child: Var, parent: Var, assign: Var, tau: f64) -> Result<Var> {
    let (n_c, n_p) = tape.value(assign).shape();
    if tape.value(child).rows() != n_c || tape.value(parent).rows() != n_p {
        return Err(shape_err(
            "alignment_loss",
            format!(
                "assignment is {n_c}x{n_p}, children {} rows, parents {} rows",
                tape.value(child).rows(),
                tape.value(parent).rows()
            ),
        ));
    }
    let positives: Vec<(usize, usize)> = tape.value(assign).argmax_rows().into_iter().enumerate().collect();
    let c = tape.l2_normalize_rows(child, COSINE_EPS);
    let p = tape.l2_normalize_rows(parent, COSINE_EPS);
    let pt = tape.transpose(p);
    let sim = tape.matmul(c, pt)?;
    let sim = tape.scale(sim, 1.0 / tau);
    let logp = tape.log_softmax_rows(sim);
    let picked = tape.pick(logp, positives)?;
    let m = tape.mean(picked);
    Ok(tape.scale(m, -1.0))
}

/// `(L^{SL} + L^{LR}) / 2`.
pub fn alignment_loss(tape: &mut Tape, h_s: Var, h_l: Var, a_sl: Var, h_r: Var, a_lr: Var, tau: f64) -> Result<Var> {
    let sl = infonce(tape, h_s, h_l, a_sl, tau)?;
    let lr = infonce(tape, h_l, h_r, a_lr, tau)?;
    let s = tape.add(sl, lr)?;
    Ok(tape.scale(s, 0.5))
}

/// Mean squared row distance.
pub fn reconstruction_loss(tape: &mut Tape, h_hat: Var, h_s: Var) -> Result<Var> {
    let n = tape.value(h_s).rows().max(1) as f64;
    let diff = tape.sub(h_hat, h_s)?;
    let s = tape.sum_squares(diff);
    Ok(tape.scale(s, 1.0 / n))
}

/// `λ·A_S + (1−λ)·O_S`.
pub fn semantic_target(a_s: &Matrix, o_s: &Matrix, lambda: f64) -> Result<Matrix> {
    a_s.zip_map(o_s, "semantic_target", |a, o| lambda * a + (1.0 - lambda) * o)
}

/// `‖H̄H̄ᵀ − target‖_F² / N²`.
pub fn semantic_loss(tape: &mut Tape, h_hat: Var, target: &Matrix, gram: SemanticGram) -> Result<Var> {
    let n = tape.value(h_hat).rows();
    if target.shape() != (n, n) {
        return Err(shape_err(
            "semantic_loss",
            format!("target is {}x{}, embeddings have {n} rows", target.rows(), target.cols()),
        ));
    }
    let h = match gram {
        SemanticGram::Normalized => tape.l2_normalize_rows(h_hat, COSINE_EPS),
        SemanticGram::Raw => h_hat,
    };
    let ht = tape.transpose(h);
    let g = tape.matmul(h, ht)?;
    let t = tape.constant(target.clone());
    let diff = tape.sub(g, t)?;
    let s = tape.sum_squares(diff);
    Ok(tape.scale(s, 1.0 / (n.max(1) * n.max(1)) as f64))
}

fn mean_row_entropy(tape: &mut Tape, a: Var) -> Var {
    let rows = tape.value(a).rows().max(1) as f64;
    let plogp = tape.xlogx(a);
    let s = tape.sum(plogp);
    tape.scale(s, -1.0 / rows)
}

/// `(H(A_SL) + H(A_LR)) / 2` with mean row entropies.
pub fn entropy_loss(tape: &mut Tape, a_sl: Var, a_lr: Var) -> Var {
    let sl = mean_row_entropy(tape, a_sl);
    let lr = mean_row_entropy(tape, a_lr);
    let s = tape.add(sl, lr).expect("scalars");
    tape.scale(s, 0.5)
}

/// The four loss nodes of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub align: Var,
    pub rec: Var,
    pub sem: Var,
    pub ent: Var,
}

/// `γ₁L_align + γ₂L_rec + γ₃L_sem + γ₄L_ent`.
pub fn total_loss(tape: &mut Tape, c: &LossVars, w: &LossWeights) -> Result<Var> {
    for (i, g) in [w.gamma1, w.gamma2, w.gamma3, w.gamma4].into_iter().enumerate() {
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also catches NaN
        if !(g >= 0.0) {
            return Err(Error::Config(format!("gamma{} must be >= 0, got {g}", i + 1)));
        }
    }
    let terms = [(c.align, w.gamma1), (c.rec, w.gamma2), (c.sem, w.gamma3), (c.ent, w.gamma4)];
    let mut acc = tape.scale(terms[0].0, terms[0].1);
    for &(v, g) in &terms[1..] {
        let t = tape.scale(v, g);
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn val(tape: &Tape, v: Var) -> f64 {
        tape.value(v).item()
    }

    #[test]
    fn infonce_single_parent_is_zero() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]));
        let p = t.constant(Matrix::from_rows(&[vec![0.3, 0.3]]));
        let a = t.constant(Matrix::filled(2, 1, 1.0));
        let l = infonce(&mut t, c, p, a, 0.2).unwrap();
        assert!(val(&t, l).abs() < 1e-15);
    }

    #[test]
    fn infonce_equal_similarities_is_log_n() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::from_rows(&[vec![1.0, 0.0]]));
        let p = t.constant(Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, -1.0]]));
        let a = t.constant(Matrix::from_rows(&[vec![0.4, 0.6]]));
        let l = infonce(&mut t, c, p, a, 0.2).unwrap();
        assert!((val(&t, l) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn infonce_matching_parent_near_zero() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]));
        let p = t.constant(Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]));
        let a = t.constant(Matrix::from_rows(&[vec![0.1, 0.8, 0.1]]));
        let l = infonce(&mut t, c, p, a, 0.05).unwrap();
        // −log(e^20 / (e^20 + 2))
        let expect = (1.0 + 2.0 * (-20f64).exp()).ln();
        assert!(val(&t, l) < 1e-8);
        assert!((val(&t, l) - expect).abs() < 1e-13);
    }

    #[test]
    fn reconstruction_examples() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0]]));
        let b = t.constant(Matrix::from_rows(&[vec![2.0, 3.0, 4.0], vec![1.0, 1.0, 1.0]]));
        let l = reconstruction_loss(&mut t, b, a).unwrap();
        assert_eq!(val(&t, l), 3.0);
        let l = reconstruction_loss(&mut t, a, a).unwrap();
        assert_eq!(val(&t, l), 0.0);
    }

    #[test]
    fn semantic_examples() {
        let mut t = Tape::new();
        let a_s = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        let o = Matrix::zeros(3, 3);
        let h = t.constant(Matrix::zeros(3, 2));
        let target = semantic_target(&a_s, &o, 1.0).unwrap();
        let l = semantic_loss(&mut t, h, &target, SemanticGram::Normalized).unwrap();
        assert!((val(&t, l) - 3.0 / 9.0).abs() < 1e-15);

        // Gram of orthonormal rows is the identity.
        let h = t.constant(Matrix::identity(3));
        let l = semantic_loss(&mut t, h, &Matrix::identity(3), SemanticGram::Normalized).unwrap();
        assert!(val(&t, l) < 1e-20);

        // 2-segment case: rows (3,4), (1,0); normalised (0.6,0.8), (1,0)
        let h = t.constant(Matrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 0.0]]));
        let target = Matrix::from_rows(&[vec![0.5, 1.0], vec![0.0, 0.25]]);
        let l = semantic_loss(&mut t, h, &target, SemanticGram::Normalized).unwrap();
        let expect = ((1.0f64 - 0.5).powi(2) + (0.6f64 - 1.0).powi(2) + 0.6f64.powi(2) + (1.0f64 - 0.25).powi(2)) / 4.0;
        assert!((val(&t, l) - expect).abs() < 1e-12);
        let l = semantic_loss(&mut t, h, &target, SemanticGram::Raw).unwrap();
        // raw Gram [[25, 3], [3, 1]] vs target: (24.5², 2², 3², 0.75²)
        let expect = (24.5f64.powi(2) + 4.0 + 9.0 + 0.75f64.powi(2)) / 4.0;
        assert!((val(&t, l) - expect).abs() < 1e-12);
        assert!(semantic_loss(&mut t, h, &Matrix::zeros(3, 3), SemanticGram::Raw).is_err());
    }

    #[test]
    fn entropy_examples() {
        let mut t = Tape::new();
        let one_hot = t.constant(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let l = entropy_loss(&mut t, one_hot, one_hot);
        assert_eq!(val(&t, l), 0.0);
        let half = t.constant(Matrix::filled(3, 2, 0.5));
        let l = entropy_loss(&mut t, half, half);
        assert!((val(&t, l) - 2f64.ln()).abs() < 1e-15);
        let u = t.constant(Matrix::filled(4, 5, 0.2));
        let l = entropy_loss(&mut t, u, one_hot);
        assert!((val(&t, l) - 5f64.ln() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn total_examples() {
        let mut t = Tape::new();
        let c = LossVars {
            align: t.constant(Matrix::scalar(0.7)),
            rec: t.constant(Matrix::scalar(2.5)),
            sem: t.constant(Matrix::scalar(0.125)),
            ent: t.constant(Matrix::scalar(1.1)),
        };
        let zero = LossWeights { gamma1: 0.0, gamma2: 0.0, gamma3: 0.0, gamma4: 0.0, ..LossWeights::default() };
        let l = total_loss(&mut t, &c, &zero).unwrap();
        assert_eq!(val(&t, l), 0.0);
        let sel = LossWeights { gamma1: 1.0, ..zero };
        let l = total_loss(&mut t, &c, &sel).unwrap();
        assert_eq!(val(&t, l), 0.7);
        let l = total_loss(&mut t, &c, &LossWeights::default()).unwrap();
        assert!((val(&t, l) - (0.7 + 2.5 + 0.125 + 1.1)).abs() < 1e-12);
        let neg = LossWeights { gamma3: -0.1, ..LossWeights::default() };
        assert!(matches!(total_loss(&mut t, &c, &neg), Err(Error::Config(_))));
    }
}
