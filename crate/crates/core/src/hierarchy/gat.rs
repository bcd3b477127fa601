use crate::error::{contract_err, shape_err, Result};
use crate::roadnet::RoadNetwork;
use crate::tensor::{Matrix, Tape, Var};

/// Dense attention support: `mask[i·n + j]` means node `i` attends to `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhoods {
    n: usize,
    mask: Vec<bool>,
}

impl Neighborhoods {
    /// Explicit lists; every node also attends to itself.
    pub fn from_lists(lists: &[Vec<usize>]) -> Result<Self> {
        let n = lists.len();
        let mut mask = vec![false; n * n];
        for (i, list) in lists.iter().enumerate() {
            mask[i * n + i] = true;
            for &j in list {
                if j >= n {
                    return Err(shape_err("neighborhoods", format!("node {i} lists neighbour {j} of {n}")));
                }
                mask[i * n + j] = true;
            }
        }
        Ok(Self { n, mask })
    }

    /// In-neighbours of the directed road graph, plus self.
    pub fn in_neighbors(net: &RoadNetwork) -> Self {
        let lists: Vec<Vec<usize>> = (0..net.n_segments()).map(|i| net.in_neighbors(i).to_vec()).collect();
        Self::from_lists(&lists).expect("network indices are in range")
    }

    /// The `k` largest off-diagonal entries of each row (ties to the lower
    /// index), plus self.
    pub fn top_k(a: &Matrix, k: usize) -> Result<Self> {
        if !a.is_square() {
            return Err(shape_err("top_k neighbourhoods", format!("matrix is {}x{}", a.rows(), a.cols())));
        }
        let lists: Vec<Vec<usize>> = (0..a.rows())
            .map(|i| {
                let mut cand: Vec<usize> = (0..a.cols()).filter(|&j| j != i).collect();
                cand.sort_by(|&x, &y| a.get(i, y).total_cmp(&a.get(i, x)).then(x.cmp(&y)));
                cand.truncate(k);
                cand
            })
            .collect();
        Self::from_lists(&lists)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn degree(&self, i: usize) -> usize {
        self.mask[i * self.n..(i + 1) * self.n].iter().filter(|&&m| m).count()
    }
}

/// Single-head GAT weights: `w` is d×d, `attn` is 2d×1.
#[derive(Clone, Copy, Debug)]
pub struct GatParams {
    pub w: Var,
    pub attn: Var,
    pub leaky_slope: f64,
}

/// `h'_i = elu(Σ_j α_ij W h_j)` with
/// `α_i· = softmax_{j∈N(i)} leaky_relu(a₁ᵀ W h_i + a₂ᵀ W h_j)`.
pub fn gat_layer(tape: &mut Tape, h: Var, nb: &Neighborhoods, p: &GatParams) -> Result<Var> {
    let n = tape.value(h).rows();
    if nb.n() != n {
        return Err(shape_err("gat_layer", format!("{} neighbourhoods for {n} nodes", nb.n())));
    }
    if let Some(i) = (0..n).find(|&i| !nb.contains(i, i)) {
        return Err(contract_err("gat_layer", format!("node {i} is missing its self loop")));
    }
    let d = tape.value(p.w).cols();
    if tape.value(p.attn).shape() != (2 * d, 1) {
        let (r, c) = tape.value(p.attn).shape();
        return Err(shape_err("gat_layer", format!("attention vector is {r}x{c}, expected {}x1", 2 * d)));
    }
    let wh = tape.matmul(h, p.w)?;
    let a_src = tape.slice_rows(p.attn, 0, d)?;
    let a_dst = tape.slice_rows(p.attn, d, d)?;
    let s_src = tape.matmul(wh, a_src)?;
    let s_dst = tape.matmul(wh, a_dst)?;
    let e = tape.outer_add(s_src, s_dst)?;
    let e = tape.leaky_relu(e, p.leaky_slope);
    let alpha = tape.masked_softmax_rows(e, nb.mask())?;
    let agg = tape.matmul(alpha, wh)?;
    Ok(tape.elu(agg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn elu(x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            x.exp() - 1.0
        }
    }

    fn params(tape: &mut Tape, w: Matrix, attn: Matrix) -> GatParams {
        GatParams { w: tape.leaf(w), attn: tape.leaf(attn), leaky_slope: 0.2 }
    }

    #[test]
    fn isolated_node_is_elu_of_projection() {
        let mut tape = Tape::new();
        let h = tape.constant(Matrix::from_rows(&[vec![1.0, -2.0]]));
        let w = Matrix::from_rows(&[vec![0.5, 1.0], vec![1.0, 0.25]]);
        let p = params(&mut tape, w, Matrix::filled(4, 1, 0.3));
        let nb = Neighborhoods::from_lists(&[vec![]]).unwrap();
        let out = gat_layer(&mut tape, h, &nb, &p).unwrap();
        // W h = (1·0.5 − 2·1, 1·1 − 2·0.25) = (−1.5, 0.5)
        let got = tape.value(out);
        assert!((got.get(0, 0) - elu(-1.5)).abs() < 1e-15);
        assert!((got.get(0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_attention_on_a_line() {
        let mut tape = Tape::new();
        let x = Matrix::from_rows(&[vec![1.0], vec![-3.0], vec![2.0]]);
        let h = tape.constant(x.clone());
        let p = params(&mut tape, Matrix::identity(1), Matrix::zeros(2, 1));
        let nb = Neighborhoods::from_lists(&[vec![1], vec![0, 2], vec![1]]).unwrap();
        let out = gat_layer(&mut tape, h, &nb, &p).unwrap();
        let expect = [elu((1.0 - 3.0) / 2.0), elu((1.0 - 3.0 + 2.0) / 3.0), elu((-3.0 + 2.0) / 2.0)];
        for (i, e) in expect.iter().enumerate() {
            assert!((tape.value(out).get(i, 0) - e).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_nodes_get_identical_outputs() {
        let mut tape = Tape::new();
        let h = tape.constant(Matrix::from_rows(&[vec![0.3, 0.7], vec![0.3, 0.7]]));
        let w = Matrix::from_rows(&[vec![0.2, -0.4], vec![0.9, 0.1]]);
        let p = params(&mut tape, w, Matrix::column(&[0.1, -0.2, 0.5, 0.3]));
        let nb = Neighborhoods::from_lists(&[vec![1], vec![0]]).unwrap();
        let out = gat_layer(&mut tape, h, &nb, &p).unwrap();
        assert_eq!(tape.value(out).row(0), tape.value(out).row(1));
    }

    #[test]
    fn top_k_prefers_large_entries_and_low_index() {
        let a = Matrix::from_rows(&[vec![9.0, 1.0, 1.0, 0.5], vec![2.0, 0.0, 2.0, 3.0], vec![0.0; 4], vec![1.0; 4]]);
        let nb = Neighborhoods::top_k(&a, 2).unwrap();
        let rows: Vec<Vec<usize>> = (0..4).map(|i| (0..4).filter(|&j| nb.contains(i, j)).collect()).collect();
        assert_eq!(rows, vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 1, 2], vec![0, 1, 3]]);
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::new();
        let h = tape.constant(Matrix::zeros(2, 2));
        let p = params(&mut tape, Matrix::identity(2), Matrix::zeros(3, 1));
        let nb = Neighborhoods::from_lists(&[vec![], vec![]]).unwrap();
        assert!(gat_layer(&mut tape, h, &nb, &p).is_err());
        let p = params(&mut tape, Matrix::identity(2), Matrix::zeros(4, 1));
        let nb3 = Neighborhoods::from_lists(&[vec![], vec![], vec![]]).unwrap();
        assert!(gat_layer(&mut tape, h, &nb3, &p).is_err());
        assert!(Neighborhoods::from_lists(&[vec![5]]).is_err());
    }
}
