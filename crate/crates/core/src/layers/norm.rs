//! Batch normalisation over `(batch, channel, time)` per feature map.

use super::{Param, ParamKind};
use crate::error::{shape_err, MsnnError, Result};
use crate::par;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalise with the statistics of the current batch.
    Train,
    /// Normalise with the frozen running statistics.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub eps: f64,
    pub momentum: f64,
    /// Set by the first running-statistics update.
    pub calibrated: bool,
}

/// Values kept from a batch forward for the backward pass.
#[derive(Debug, Clone)]
pub struct BnBatchCache {
    pub mode: BnMode,
    pub xhat: Vec<Tensor>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(prefix: &str, maps: usize, eps: f64, momentum: f64) -> Self {
        BatchNorm {
            gamma: Param::filled(format!("{prefix}.gamma"), vec![maps], ParamKind::BnScale, 1.0),
            beta: Param::zeros(format!("{prefix}.beta"), vec![maps], ParamKind::BnShift),
            running_mean: Param::zeros(
                format!("{prefix}.running_mean"),
                vec![maps],
                ParamKind::BnRunningMean,
            ),
            running_var: Param::filled(
                format!("{prefix}.running_var"),
                vec![maps],
                ParamKind::BnRunningVar,
                1.0,
            ),
            eps,
            momentum,
            calibrated: false,
        }
    }

    pub fn maps(&self) -> usize {
        self.gamma.len()
    }

    /// Per-map `(scale, shift)` of the eval-mode affine map.
    pub fn eval_affine(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.calibrated {
            return Err(MsnnError::BatchNormUninitialized);
        }
        let scale: Vec<f64> = (0..self.maps())
            .map(|f| self.gamma.data[f] / (self.running_var.data[f] + self.eps).sqrt())
            .collect();
        let shift = (0..self.maps())
            .map(|f| self.beta.data[f] - scale[f] * self.running_mean.data[f])
            .collect();
        Ok((scale, shift))
    }

    /// Batch statistics (mean, biased variance) per map.
    pub fn batch_stats(&self, xs: &[Tensor]) -> (Vec<f64>, Vec<f64>) {
        let f = self.maps();
        let sums = par::map(xs, |x| per_map_sum(x, f, None));
        let count: usize = xs.iter().map(|x| x.len() / f).sum();
        let mut mean = vec![0.0; f];
        for s in &sums {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let sq = par::map(xs, |x| per_map_sum(x, f, Some(&mean)));
        let mut var = vec![0.0; f];
        for s in &sq {
            for (v, a) in var.iter_mut().zip(s) {
                *v += a;
            }
        }
        var.iter_mut().for_each(|v| *v /= count as f64);
        (mean, var)
    }

    pub fn forward_batch(&self, xs: &[Tensor], mode: BnMode) -> Result<(Vec<Tensor>, BnBatchCache)> {
        self.forward_owned(xs.to_vec(), mode)
    }

    /// [`forward_batch`](Self::forward_batch) that reuses the input buffers
    /// for the cached normalised values.
    pub fn forward_owned(&self, mut xs: Vec<Tensor>, mode: BnMode) -> Result<(Vec<Tensor>, BnBatchCache)> {
        let f = self.maps();
        if xs.is_empty() {
            return shape_err("batch norm needs a non-empty batch");
        }
        if let Some(x) = xs.iter().find(|x| x.maps() != f) {
            return shape_err(format!("batch norm expects {f} maps, got {}", x.maps()));
        }
        let (mean, var) = match mode {
            BnMode::Train => self.batch_stats(&xs),
            BnMode::Eval => {
                if !self.calibrated {
                    return Err(MsnnError::BatchNormUninitialized);
                }
                (self.running_mean.data.clone(), self.running_var.data.clone())
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (g, b) = (&self.gamma.data, &self.beta.data);
        let ys = par::map_mut(&mut xs, |x| {
            let mut y = Tensor::zeros(x.channels(), x.time(), f);
            for (h, out) in x.data_mut().chunks_exact_mut(f).zip(y.data_mut().chunks_exact_mut(f)) {
                for ((((h, o), &m), &s), (&gj, &bj)) in
                    h.iter_mut().zip(out).zip(&mean).zip(&inv_std).zip(g.iter().zip(b))
                {
                    *h = (*h - m) * s;
                    *o = gj * *h + bj;
                }
            }
            y
        });
        Ok((ys, BnBatchCache { mode, xhat: xs, mean, var, inv_std }))
    }

    /// Returns `(dx, [dgamma, dbeta])`.
    pub fn backward_batch(&self, dys: &[Tensor], cache: &BnBatchCache) -> (Vec<Tensor>, [Vec<f64>; 2]) {
        self.backward_owned(dys.to_vec(), cache)
    }

    /// [`backward_batch`](Self::backward_batch) writing `dx` over `dys`.
    pub fn backward_owned(&self, mut dys: Vec<Tensor>, cache: &BnBatchCache) -> (Vec<Tensor>, [Vec<f64>; 2]) {
        let f = self.maps();
        let partial = par::map_zip(&dys, &cache.xhat, |dy, xh| {
            let mut sd = vec![0.0; f];
            let mut sdx = vec![0.0; f];
            for (g, h) in dy.data().chunks_exact(f).zip(xh.data().chunks_exact(f)) {
                for (((a, b), &gj), &hj) in sd.iter_mut().zip(sdx.iter_mut()).zip(g).zip(h) {
                    *a += gj;
                    *b += gj * hj;
                }
            }
            (sd, sdx)
        });
        let mut dbeta = vec![0.0; f];
        let mut dgamma = vec![0.0; f];
        for (sd, sdx) in &partial {
            for j in 0..f {
                dbeta[j] += sd[j];
                dgamma[j] += sdx[j];
            }
        }
        let g = &self.gamma.data;
        let inv = &cache.inv_std;
        match cache.mode {
            BnMode::Eval => {
                let scale: Vec<f64> = g.iter().zip(inv).map(|(a, b)| a * b).collect();
                par::map_mut(&mut dys, |dx| {
                    for row in dx.data_mut().chunks_exact_mut(f) {
                        for (v, s) in row.iter_mut().zip(&scale) {
                            *v *= s;
                        }
                    }
                });
            }
            BnMode::Train => {
                let n: usize = dys.iter().map(|d| d.len() / f).sum();
                let n = n as f64;
                // mean of dxhat and of dxhat * xhat per map
                let m1: Vec<f64> = (0..f).map(|j| g[j] * dbeta[j] / n).collect();
                let m2: Vec<f64> = (0..f).map(|j| g[j] * dgamma[j] / n).collect();
                par::zip_mut(&mut dys, &cache.xhat, |dx, xh| {
                    for (row, h) in dx.data_mut().chunks_exact_mut(f).zip(xh.data().chunks_exact(f)) {
                        for ((((v, &hj), &ij), &gj), (&a, &b)) in
                            row.iter_mut().zip(h).zip(inv).zip(g).zip(m1.iter().zip(&m2))
                        {
                            *v = ij * (gj * *v - a - hj * b);
                        }
                    }
                });
            }
        }
        (dys, [dgamma, dbeta])
    }

    /// Exponential moving average of the running statistics. The first update
    /// copies the batch statistics.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        if !self.calibrated {
            self.running_mean.data.copy_from_slice(mean);
            self.running_var.data.copy_from_slice(var);
            self.calibrated = true;
            return;
        }
        let m = self.momentum;
        for (r, b) in self.running_mean.data.iter_mut().zip(mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, b) in self.running_var.data.iter_mut().zip(var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

fn per_map_sum(x: &Tensor, f: usize, centre: Option<&[f64]>) -> Vec<f64> {
    let mut s = vec![0.0; f];
    match centre {
        None => {
            for row in x.data().chunks_exact(f) {
                for (a, v) in s.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        Some(m) => {
            for row in x.data().chunks_exact(f) {
                for ((a, v), c) in s.iter_mut().zip(row).zip(m) {
                    let d = v - c;
                    *a += d * d;
                }
            }
        }
    }
    s
}
