use serde::{Deserialize, Serialize};

use crate::error::{contract_err, shape_err, Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub lr: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { lr: 0.1, iterations: 500, l2: 1e-4 }
    }
}

/// One-vs-rest logistic head on standardised features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// d×C
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    fn standardise(&self, emb: &Matrix, rows: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), emb.cols(), |i, j| (emb.get(rows[i], j) - self.mean[j]) / self.scale[j])
    }

    /// Per-class sigmoid scores for the selected rows.
    pub fn scores(&self, emb: &Matrix, rows: &[usize]) -> Result<Matrix> {
        if emb.cols() != self.mean.len() {
            return Err(shape_err(
                "logistic scores",
                format!("{} features, model has {}", emb.cols(), self.mean.len()),
            ));
        }
        let x = self.standardise(emb, rows);
        let mut z = x.matmul(&self.weights)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v = sigmoid(*v + b);
            }
        }
        Ok(z)
    }

    pub fn predict(&self, emb: &Matrix, rows: &[usize]) -> Result<Vec<usize>> {
        Ok(self.scores(emb, rows)?.argmax_rows())
    }
}

/// Full-batch gradient descent on the mean binary cross-entropy of each
/// class plus `l2/2·‖w‖²`. Deterministic: weights start at zero.
pub fn fit_logistic(emb: &Matrix, labels: &[usize], train: &[usize], hp: &LogisticConfig) -> Result<LogisticModel> {
    if labels.len() != emb.rows() {
        return Err(shape_err("fit_logistic", format!("{} labels for {} rows", labels.len(), emb.rows())));
    }
    if train.is_empty() {
        return Err(contract_err("fit_logistic", "empty training split"));
    }
    let c = labels.iter().max().map_or(0, |m| m + 1);
    if c < 2 {
        return Err(Error::Data("classification needs at least two classes".into()));
    }
    let mut seen = vec![false; c];
    train.iter().for_each(|&i| seen[labels[i]] = true);
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Data(format!("class {missing} has no example in the training split")));
    }

    let d = emb.cols();
    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    let mut scale = vec![0.0; d];
    for &i in train {
        emb.row(i).iter().zip(&mut mean).for_each(|(v, m)| *m += v / n);
    }
    for &i in train {
        emb.row(i).iter().zip(&mean).zip(&mut scale).for_each(|((v, m), s)| *s += (v - m) * (v - m) / n);
    }
    scale.iter_mut().for_each(|s| *s = if *s > 1e-24 { s.sqrt() } else { 1.0 });

    let mut model = LogisticModel { mean, scale, weights: Matrix::zeros(d, c), bias: vec![0.0; c] };
    let x = model.standardise(emb, train);
    let y = Matrix::from_fn(train.len(), c, |i, k| (labels[train[i]] == k) as u8 as f64);
    for _ in 0..hp.iterations {
        let mut g = x.matmul(&model.weights)?;
        for r in 0..g.rows() {
            for (k, v) in g.row_mut(r).iter_mut().enumerate() {
                *v = sigmoid(*v + model.bias[k]) - y.get(r, k);
            }
        }
        let mut gw = x.t_matmul(&g)?.scale(1.0 / n);
        gw.axpy(hp.l2, &model.weights)?;
        let gb: Vec<f64> = (0..c).map(|k| (0..g.rows()).map(|r| g.get(r, k)).sum::<f64>() / n).collect();
        model.weights.axpy(-hp.lr, &gw)?;
        model.bias.iter_mut().zip(&gb).for_each(|(b, g)| *b -= hp.lr * g);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_one_dimensional() {
        let emb = Matrix::column(&[-1.0, -1.0, 1.0, 1.0, -1.0, 1.0]);
        let labels = [0, 0, 1, 1, 0, 1];
        let all: Vec<usize> = (0..6).collect();
        let m = fit_logistic(&emb, &labels, &all, &LogisticConfig::default()).unwrap();
        assert_eq!(m.predict(&emb, &all).unwrap(), labels.to_vec());
        assert_eq!(m, fit_logistic(&emb, &labels, &all, &LogisticConfig::default()).unwrap());
    }

    #[test]
    fn uninformative_features_give_prior() {
        let emb = Matrix::filled(10, 3, 0.7);
        let labels = [0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let all: Vec<usize> = (0..10).collect();
        let hp = LogisticConfig { iterations: 5000, ..LogisticConfig::default() };
        let m = fit_logistic(&emb, &labels, &all, &hp).unwrap();
        let s = m.scores(&emb, &[0]).unwrap();
        let total = s.get(0, 0) + s.get(0, 1);
        assert!((s.get(0, 0) / total - 0.3).abs() < 0.02);
        assert!((s.get(0, 1) / total - 0.7).abs() < 0.02);
    }

    #[test]
    fn missing_class_rejected() {
        let emb = Matrix::zeros(4, 1);
        assert!(fit_logistic(&emb, &[0, 1, 2, 0], &[0, 1], &LogisticConfig::default()).is_err());
        assert!(fit_logistic(&emb, &[0, 0, 0, 0], &[0, 1], &LogisticConfig::default()).is_err());
    }
}
