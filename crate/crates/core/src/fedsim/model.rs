//! Softmax regression and the server-side arithmetic: local gradients,
//! aggregation, SGD steps and the signSGD baseline.

use rand::seq::index;

use super::data::Dataset;
use crate::error::{invalid, Result};
use crate::rng::SeededRng;
use crate::vector::dot;

/// Softmax regression weights, `C x d` row-major (class by feature), no bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    theta: Vec<f64>,
    dim: usize,
    classes: usize,
}

impl Model {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            theta: vec![0.0; dim * classes],
            dim,
            classes,
        }
    }

    pub fn from_theta(dim: usize, classes: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != dim * classes {
            return invalid(format!("theta has {} entries, expected {}", theta.len(), dim * classes));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return invalid("theta has non-finite entries");
        }
        Ok(Self { theta, dim, classes })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Number of parameters, `d * C`.
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(&self.theta[c * self.dim..(c + 1) * self.dim], x);
        }
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        if ds.dim() != self.dim || ds.classes() != self.classes {
            return invalid(format!(
                "model is {} features x {} classes, data is {} x {}",
                self.dim,
                self.classes,
                ds.dim(),
                ds.classes()
            ));
        }
        Ok(())
    }
}

/// Turns logits into probabilities in place and returns `ln sum exp`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
    max + sum.ln()
}

/// Mean cross-entropy over the examples at `indices` and its gradient.
pub fn loss_and_gradient(model: &Model, ds: &Dataset, indices: &[usize]) -> Result<(f64, Vec<f64>)> {
    model.check(ds)?;
    if indices.is_empty() {
        return invalid("empty batch");
    }
    let (d, c) = (model.dim, model.classes);
    let mut grad = vec![0.0; d * c];
    let mut z = vec![0.0; c];
    let mut loss = 0.0;
    for &i in indices {
        let x = ds.features(i);
        let y = ds.label(i);
        model.logits(x, &mut z);
        let zy = z[y];
        loss += softmax_in_place(&mut z) - zy;
        z[y] -= 1.0;
        for (k, &r) in z.iter().enumerate() {
            grad[k * d..(k + 1) * d]
                .iter_mut()
                .zip(x)
                .for_each(|(g, xv)| *g += r * xv);
        }
    }
    let n = indices.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Mean loss and gradient over a whole dataset.
pub fn full_gradient(model: &Model, ds: &Dataset) -> Result<(f64, Vec<f64>)> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    loss_and_gradient(model, ds, &idx)
}

/// Gradient on a mini-batch drawn uniformly without replacement from `shard`.
/// Returns the batch loss as well.
pub fn local_gradient(
    model: &Model,
    shard: &Dataset,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<(f64, Vec<f64>)> {
    if batch_size == 0 || batch_size > shard.len() {
        return invalid(format!("batch size {batch_size} not in 1..={}", shard.len()));
    }
    if batch_size == shard.len() {
        return full_gradient(model, shard);
    }
    let batch = index::sample(rng, shard.len(), batch_size).into_vec();
    loss_and_gradient(model, shard, &batch)
}

/// Accuracy (argmax, lowest class on ties) and mean cross-entropy.
pub fn evaluate(model: &Model, test: &Dataset) -> Result<(f64, f64)> {
    model.check(test)?;
    let mut z = vec![0.0; model.classes];
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..test.len() {
        model.logits(test.features(i), &mut z);
        let y = test.label(i);
        let pred = z
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (k, &v)| if v > best.1 { (k, v) } else { best },
            )
            .0;
        correct += usize::from(pred == y);
        let zy = z[y];
        loss += softmax_in_place(&mut z) - zy;
    }
    let n = test.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Arithmetic mean, accumulated in the order given.
pub fn aggregate<V: AsRef<[f64]>>(gradients: &[V]) -> Result<Vec<f64>> {
    let Some(first) = gradients.first() else {
        return invalid("nothing to aggregate");
    };
    let dim = first.as_ref().len();
    let mut out = vec![0.0; dim];
    for g in gradients {
        let g = g.as_ref();
        if g.len() != dim {
            return invalid("gradients have different dimensions");
        }
        out.iter_mut().zip(g).for_each(|(o, v)| *o += v);
    }
    let k = gradients.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

/// `theta <- theta - eta * g`.
pub fn sgd_step(theta: &mut [f64], g: &[f64], eta: f64) -> Result<()> {
    if theta.len() != g.len() {
        return invalid("parameter and gradient dimensions differ");
    }
    theta.iter_mut().zip(g).for_each(|(t, v)| *t -= eta * v);
    Ok(())
}

/// Entrywise sign, with `0` mapped to `+1`.
pub fn sign_compress(g: &[f64]) -> Vec<i8> {
    g.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect()
}

/// Mean of the sign vectors, or with `majority_vote` the sign of their sum
/// (ties to `+1`).
pub fn sign_aggregate<V: AsRef<[i8]>>(signs: &[V], majority_vote: bool) -> Result<Vec<f64>> {
    let Some(first) = signs.first() else {
        return invalid("nothing to aggregate");
    };
    let dim = first.as_ref().len();
    let mut sum = vec![0i64; dim];
    for s in signs {
        let s = s.as_ref();
        if s.len() != dim {
            return invalid("sign vectors have different dimensions");
        }
        sum.iter_mut().zip(s).for_each(|(a, &b)| *a += b as i64);
    }
    let k = signs.len() as f64;
    Ok(sum
        .into_iter()
        .map(|v| {
            if majority_vote {
                if v >= 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                v as f64 / k
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedsim::data::{make_synthetic, Split};

    fn tiny() -> Dataset {
        Dataset::new(vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0], vec![0, 1, 2], 2, 3, Split::Test).unwrap()
    }

    #[test]
    fn hand_computed_evaluation() {
        // logits: class0 = x0, class1 = x1, class2 = 0
        let m = Model::from_theta(2, 3, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let (acc, loss) = evaluate(&m, &tiny()).unwrap();
        // predictions: [1,0]->0 ok, [0,1]->1 ok, [1,1]->0 (tie 0/1, lowest) vs label 2
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);
        let e = std::f64::consts::E;
        let l0 = -(e / (e + 2.0)).ln();
        let l2 = -(1.0 / (2.0 * e + 1.0)).ln();
        assert!((loss - (2.0 * l0 + l2) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_class_zero_predictor() {
        let (_, test) = make_synthetic(4, 6, 10, 400, 1.0, &mut SeededRng::new(2)).unwrap();
        let m = Model::zeros(6, 4);
        let (acc, loss) = evaluate(&m, &test).unwrap();
        assert!((acc - 0.25).abs() <= 1.0 / 400.0);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_model_has_vanishing_gradient() {
        let ds = Dataset::new(vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0], vec![0, 1, 2], 2, 3, Split::Train).unwrap();
        let theta: Vec<f64> = [1.0, 0.0, 0.0, 1.0, -1.0, -1.0].iter().map(|t| 40.0 * t).collect();
        let m = Model::from_theta(2, 3, theta).unwrap();
        assert_eq!(evaluate(&m, &ds).unwrap().0, 1.0);
        let (_, g) = full_gradient(&m, &ds).unwrap();
        assert!(dot(&g, &g).sqrt() < 1e-12);
    }

    #[test]
    fn full_batch_local_gradient_is_full_gradient() {
        let (train, _) = make_synthetic(3, 4, 12, 3, 2.0, &mut SeededRng::new(7)).unwrap();
        let m = Model::from_theta(4, 3, (0..12).map(|i| 0.1 * i as f64 - 0.5).collect()).unwrap();
        let (_, a) = local_gradient(&m, &train, 12, &mut SeededRng::new(1)).unwrap();
        let (_, b) = full_gradient(&m, &train).unwrap();
        assert_eq!(a, b);
        assert!(local_gradient(&m, &train, 13, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn aggregation_and_steps() {
        assert_eq!(aggregate(&[vec![1.0, 2.0]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(aggregate(&[vec![1.0, -2.0], vec![-1.0, 2.0]]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            aggregate(&[vec![1.0, 0.0], vec![2.0, 3.0], vec![0.0, 6.0]]).unwrap(),
            vec![1.0, 3.0]
        );
        assert!(aggregate(&[vec![1.0], vec![1.0, 2.0]]).is_err());

        let mut t = vec![1.0, 1.0];
        sgd_step(&mut t, &[1.0, -1.0], 0.5).unwrap();
        assert_eq!(t, vec![0.5, 1.5]);
        sgd_step(&mut t, &[3.0, 4.0], 0.0).unwrap();
        assert_eq!(t, vec![0.5, 1.5]);
        sgd_step(&mut t, &[0.0, 0.0], 0.7).unwrap();
        assert_eq!(t, vec![0.5, 1.5]);
    }

    #[test]
    fn sign_rules() {
        assert_eq!(sign_compress(&[2.0, -3.0, 0.0]), vec![1, -1, 1]);
        assert_eq!(
            sign_aggregate(&[vec![1i8, -1], vec![1, -1]], false).unwrap(),
            vec![1.0, -1.0]
        );
        assert_eq!(sign_aggregate(&[vec![1i8], vec![-1]], false).unwrap(), vec![0.0]);
        assert_eq!(sign_aggregate(&[vec![1i8], vec![-1]], true).unwrap(), vec![1.0]);
        assert_eq!(
            sign_aggregate(&[vec![1i8], vec![-1], vec![-1]], true).unwrap(),
            vec![-1.0]
        );
    }
}
