use rand::Rng;

use super::{Param, ParamKind};
use crate::error::{shape_err, Result};

/// Fully connected classifier head. `weight` is `[in_dim, n_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new<R: Rng>(prefix: &str, in_dim: usize, n_out: usize, rng: &mut R) -> Self {
        Dense {
            weight: Param::xavier(format!("{prefix}.weight"), vec![in_dim, n_out], in_dim, n_out, rng),
            bias: Param::zeros(format!("{prefix}.bias"), vec![n_out], ParamKind::Bias),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape[0]
    }
    pub fn out_dim(&self) -> usize {
        self.weight.shape[1]
    }

    /// `Wᵀ x + b`
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return shape_err(format!("dense layer expects {} inputs, got {}", self.in_dim(), x.len()));
        }
        let n = self.out_dim();
        let mut out = self.bias.data.clone();
        for (i, &xv) in x.iter().enumerate() {
            crate::tensor::axpy(xv, &self.weight.data[i * n..(i + 1) * n], &mut out);
        }
        Ok(out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.logits(x)?;
        let p = softmax(&z);
        Ok((z, p))
    }

    /// Returns `(dx, [dweight, dbias])` for a gradient on the logits.
    pub fn backward(&self, x: &[f64], dz: &[f64]) -> (Vec<f64>, [Vec<f64>; 2]) {
        let n = self.out_dim();
        let w = &self.weight.data;
        let mut dw = vec![0.0; w.len()];
        let dx = x
            .iter()
            .enumerate()
            .map(|(i, &xv)| {
                crate::tensor::axpy(xv, dz, &mut dw[i * n..(i + 1) * n]);
                crate::tensor::dot(&w[i * n..(i + 1) * n], dz)
            })
            .collect();
        (dx, [dw, dz.to_vec()])
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_head_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dense::new("cls", 5, 2, &mut rng);
        d.weight.data.fill(0.0);
        let (_, p) = d.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn analytic_softmax() {
        let p = softmax(&[1f64.ln(), 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let q = softmax(&[1f64.ln() + 100.0, 3f64.ln() + 100.0]);
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn softmax_is_on_the_simplex(z in proptest::collection::vec(-500f64..500.0, 2..8)) {
            let p = softmax(&z);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
