//! Temporal, depthwise-separable and spatial convolutions.
//!
//! All three are cross-correlations (no kernel flip). Weight layouts put the
//! output-map index last so the inner loops run over contiguous memory.

use rand::Rng;

use super::{Param, ParamKind};
use crate::error::{shape_err, Result};
use crate::tensor::{axpy, dot, gemm, transpose_into, Strides, Tensor};

/// A layer that is affine in its input; used by relevance propagation, which
/// needs the forward map and its transpose.
pub trait LinearMap {
    /// Affine forward, bias included.
    fn apply(&self, x: &Tensor) -> Result<Tensor>;
    /// Transpose of the linear part applied to an output-shaped tensor.
    fn apply_transpose(&self, dy: &Tensor, input_shape: [usize; 3]) -> Tensor;
    fn bias(&self) -> &[f64];
    /// Same geometry with every weight set to one and zero bias.
    fn ones_like(&self) -> Self
    where
        Self: Sized;
    /// Multiplies output map `o` by `scale[o]` and then adds `shift[o]`.
    fn fold_affine(&self, scale: &[f64], shift: &[f64]) -> Self
    where
        Self: Sized;
}

/// Channel-wise valid temporal convolution from one input map to `out_maps`.
///
/// `weight` is `[kernel_len, out_maps]`, `bias` is `[out_maps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConv {
    pub weight: Param,
    pub bias: Param,
}

impl TemporalConv {
    pub fn new<R: Rng>(prefix: &str, kernel_len: usize, out_maps: usize, rng: &mut R) -> Self {
        TemporalConv {
            weight: Param::xavier(
                format!("{prefix}.weight"),
                vec![kernel_len, out_maps],
                kernel_len,
                kernel_len * out_maps,
                rng,
            ),
            bias: Param::zeros(format!("{prefix}.bias"), vec![out_maps], ParamKind::Bias),
        }
    }

    pub fn kernel_len(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn out_maps(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn output_len(&self, n_t: usize) -> Option<usize> {
        (n_t >= self.kernel_len()).then(|| n_t - self.kernel_len() + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let [c, t, f] = x.shape();
        if f != 1 {
            return shape_err(format!("temporal convolution expects 1 input map, got {f}"));
        }
        let k = self.kernel_len();
        let fo = self.out_maps();
        let Some(t_out) = self.output_len(t) else {
            return shape_err(format!("kernel length {k} exceeds input length {t}"));
        };
        let xd = x.data();
        let mut y = Tensor::zeros(c, t_out, fo);
        let yd = y.data_mut();
        for row in yd.chunks_exact_mut(fo) {
            row.copy_from_slice(&self.bias.data);
        }
        for ci in 0..c {
            // rows of the Toeplitz view are the sliding windows of channel ci
            gemm(
                t_out,
                k,
                fo,
                &xd[ci * t..(ci + 1) * t],
                Strides(1, 1),
                &self.weight.data,
                Strides::row_major(fo),
                1.0,
                &mut yd[ci * t_out * fo..(ci + 1) * t_out * fo],
                Strides::row_major(fo),
            );
        }
        Ok(y)
    }

    /// Returns `(dx, [dweight, dbias])`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> (Tensor, [Vec<f64>; 2]) {
        let [c, t, _] = x.shape();
        let k = self.kernel_len();
        let fo = self.out_maps();
        let t_out = dy.time();
        let w = &self.weight.data;
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; fo];
        let mut dx = Tensor::zeros(c, t, 1);
        let (xd, dyd) = (x.data(), dy.data());
        for g in dyd.chunks_exact(fo) {
            axpy(1.0, g, &mut db);
        }
        let mut cols = vec![0.0; t_out * k];
        let dxd = dx.data_mut();
        for ci in 0..c {
            let g = &dyd[ci * t_out * fo..(ci + 1) * t_out * fo];
            let xc = &xd[ci * t..(ci + 1) * t];
            gemm(k, t_out, fo, xc, Strides(1, 1), g, Strides::row_major(fo), 1.0, &mut dw, Strides::row_major(fo));
            gemm(
                t_out,
                fo,
                k,
                g,
                Strides::row_major(fo),
                w,
                Strides::row_major(fo).transposed(),
                0.0,
                &mut cols,
                Strides::row_major(k),
            );
            let dxc = &mut dxd[ci * t..(ci + 1) * t];
            for ti in 0..t_out {
                axpy(1.0, &cols[ti * k..(ti + 1) * k], &mut dxc[ti..ti + k]);
            }
        }
        (dx, [dw, db])
    }
}

impl LinearMap for TemporalConv {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }

    fn apply_transpose(&self, dy: &Tensor, input_shape: [usize; 3]) -> Tensor {
        let x = Tensor::zeros(input_shape[0], input_shape[1], input_shape[2]);
        self.backward(&x, dy).0
    }

    fn bias(&self) -> &[f64] {
        &self.bias.data
    }

    fn ones_like(&self) -> Self {
        let mut l = self.clone();
        l.weight.data.fill(1.0);
        l.bias.data.fill(0.0);
        l
    }

    fn fold_affine(&self, scale: &[f64], shift: &[f64]) -> Self {
        let mut l = self.clone();
        let fo = self.out_maps();
        for (i, w) in l.weight.data.iter_mut().enumerate() {
            *w *= scale[i % fo];
        }
        for (o, b) in l.bias.data.iter_mut().enumerate() {
            *b = *b * scale[o] + shift[o];
        }
        l
    }
}

/// Depthwise (one kernel per input map, multiplier 1) temporal convolution
/// with "same" zero padding, followed by a pointwise 1×1 map mixing.
///
/// `depthwise` is `[kernel_len, in_maps]`, `pointwise` is
/// `[in_maps, out_maps]`, `bias` is `[out_maps]`. For a kernel of length
/// `T` the input is padded with `(T - 1) / 2` zeros on the left and the rest
/// on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableConv {
    pub depthwise: Param,
    pub pointwise: Param,
    pub bias: Param,
}

impl SeparableConv {
    pub fn new<R: Rng>(
        prefix: &str,
        kernel_len: usize,
        in_maps: usize,
        out_maps: usize,
        rng: &mut R,
    ) -> Self {
        SeparableConv {
            depthwise: Param::xavier(
                format!("{prefix}.depthwise"),
                vec![kernel_len, in_maps],
                kernel_len * in_maps,
                kernel_len,
                rng,
            ),
            pointwise: Param::xavier(
                format!("{prefix}.pointwise"),
                vec![in_maps, out_maps],
                in_maps,
                out_maps,
                rng,
            ),
            bias: Param::zeros(format!("{prefix}.bias"), vec![out_maps], ParamKind::Bias),
        }
    }

    pub fn kernel_len(&self) -> usize {
        self.depthwise.shape[0]
    }
    pub fn in_maps(&self) -> usize {
        self.depthwise.shape[1]
    }
    pub fn out_maps(&self) -> usize {
        self.pointwise.shape[1]
    }
    pub fn pad_left(&self) -> usize {
        (self.kernel_len() - 1) / 2
    }

    /// Per-map depthwise weights plus pointwise weights.
    pub fn weight_count(&self) -> usize {
        self.depthwise.len() + self.pointwise.len()
    }

    /// Depthwise stage alone.
    pub fn depthwise_forward(&self, x: &Tensor) -> Result<Tensor> {
        let [c, t, fi] = x.shape();
        if fi != self.in_maps() {
            return shape_err(format!(
                "separable convolution expects {} input maps, got {fi}",
                self.in_maps()
            ));
        }
        let k = self.kernel_len();
        let pl = self.pad_left();
        let padded = t + k - 1;
        let d = &self.depthwise.data;
        let xd = x.data();
        let mut z = Tensor::zeros(c, t, fi);
        let zd = z.data_mut();
        // per-map rows with time contiguous and zero padding on both ends
        let mut xt = vec![0.0; fi * padded];
        let mut zt = vec![0.0; fi * t];
        for ci in 0..c {
            transpose_into(&xd[ci * t * fi..(ci + 1) * t * fi], t, fi, &mut xt, padded, pl);
            zt.fill(0.0);
            for f in 0..fi {
                let src = &xt[f * padded..(f + 1) * padded];
                let out = &mut zt[f * t..(f + 1) * t];
                for tau in 0..k {
                    axpy(d[tau * fi + f], &src[tau..tau + t], out);
                }
            }
            transpose_into(&zt, fi, t, &mut zd[ci * t * fi..(ci + 1) * t * fi], fi, 0);
        }
        Ok(z)
    }

    /// Pointwise stage (with bias) applied to a depthwise output.
    pub fn pointwise_forward(&self, z: &Tensor) -> Tensor {
        let [c, t, fi] = z.shape();
        let fo = self.out_maps();
        let mut y = Tensor::zeros(c, t, fo);
        let (zd, yd) = (z.data(), y.data_mut());
        for row in yd.chunks_exact_mut(fo) {
            row.copy_from_slice(&self.bias.data);
        }
        gemm(
            c * t,
            fi,
            fo,
            zd,
            Strides::row_major(fi),
            &self.pointwise.data,
            Strides::row_major(fo),
            1.0,
            yd,
            Strides::row_major(fo),
        );
        y
    }

    /// Returns the output and the depthwise intermediate needed by `backward`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let z = self.depthwise_forward(x)?;
        let y = self.pointwise_forward(&z);
        Ok((y, z))
    }

    /// Returns `(dx, [ddepthwise, dpointwise, dbias])`.
    pub fn backward(&self, x: &Tensor, z: &Tensor, dy: &Tensor) -> (Tensor, [Vec<f64>; 3]) {
        let [c, t, fi] = x.shape();
        let fo = self.out_maps();
        let k = self.kernel_len();
        let pl = self.pad_left();
        let padded = t + k - 1;
        let (p, d) = (&self.pointwise.data, &self.depthwise.data);
        let mut dp = vec![0.0; p.len()];
        let mut dd = vec![0.0; d.len()];
        let mut db = vec![0.0; fo];
        let mut dz = vec![0.0; c * t * fi];
        let dyd = dy.data();
        for g in dyd.chunks_exact(fo) {
            axpy(1.0, g, &mut db);
        }
        let rm_in = Strides::row_major(fi);
        let rm_out = Strides::row_major(fo);
        gemm(fi, c * t, fo, z.data(), rm_in.transposed(), dyd, rm_out, 1.0, &mut dp, rm_out);
        gemm(c * t, fo, fi, dyd, rm_out, p, rm_out.transposed(), 0.0, &mut dz, rm_in);

        let mut dx = Tensor::zeros(c, t, fi);
        let (xd, dxd) = (x.data(), dx.data_mut());
        let mut xt = vec![0.0; fi * padded];
        let mut gt = vec![0.0; fi * t];
        let mut dxt = vec![0.0; fi * padded];
        for ci in 0..c {
            let span = ci * t * fi..(ci + 1) * t * fi;
            transpose_into(&xd[span.clone()], t, fi, &mut xt, padded, pl);
            transpose_into(&dz[span.clone()], t, fi, &mut gt, t, 0);
            dxt.fill(0.0);
            for f in 0..fi {
                let src = &xt[f * padded..(f + 1) * padded];
                let g = &gt[f * t..(f + 1) * t];
                let dst = &mut dxt[f * padded..(f + 1) * padded];
                for tau in 0..k {
                    dd[tau * fi + f] += dot(g, &src[tau..tau + t]);
                    axpy(d[tau * fi + f], g, &mut dst[tau..tau + t]);
                }
            }
            let out = &mut dxd[span];
            for f in 0..fi {
                for ti in 0..t {
                    out[ti * fi + f] = dxt[f * padded + pl + ti];
                }
            }
        }
        (dx, [dd, dp, db])
    }
}

impl LinearMap for SeparableConv {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.0)
    }

    fn apply_transpose(&self, dy: &Tensor, input_shape: [usize; 3]) -> Tensor {
        let x = Tensor::zeros(input_shape[0], input_shape[1], input_shape[2]);
        let z = x.clone();
        self.backward(&x, &z, dy).0
    }

    fn bias(&self) -> &[f64] {
        &self.bias.data
    }

    fn ones_like(&self) -> Self {
        let mut l = self.clone();
        l.depthwise.data.fill(1.0);
        l.pointwise.data.fill(1.0);
        l.bias.data.fill(0.0);
        l
    }

    fn fold_affine(&self, scale: &[f64], shift: &[f64]) -> Self {
        let mut l = self.clone();
        let fo = self.out_maps();
        for (i, w) in l.pointwise.data.iter_mut().enumerate() {
            *w *= scale[i % fo];
        }
        for (o, b) in l.bias.data.iter_mut().enumerate() {
            *b = *b * scale[o] + shift[o];
        }
        l
    }
}

/// Valid `(n_c × 1)` convolution collapsing the channel axis.
///
/// `weight` is `[n_c, in_maps, out_maps]`, `bias` is `[out_maps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialConv {
    pub weight: Param,
    pub bias: Param,
}

impl SpatialConv {
    pub fn new<R: Rng>(
        prefix: &str,
        n_channels: usize,
        in_maps: usize,
        out_maps: usize,
        rng: &mut R,
    ) -> Self {
        SpatialConv {
            weight: Param::xavier(
                format!("{prefix}.weight"),
                vec![n_channels, in_maps, out_maps],
                n_channels * in_maps,
                n_channels * out_maps,
                rng,
            ),
            bias: Param::zeros(format!("{prefix}.bias"), vec![out_maps], ParamKind::Bias),
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.shape[0]
    }
    pub fn in_maps(&self) -> usize {
        self.weight.shape[1]
    }
    pub fn out_maps(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let [c, t, fi] = x.shape();
        if c != self.channels() || fi != self.in_maps() {
            return shape_err(format!(
                "spatial convolution expects [{}, *, {}], got {:?}",
                self.channels(),
                self.in_maps(),
                x.shape()
            ));
        }
        let fo = self.out_maps();
        let w = &self.weight.data;
        let mut y = Tensor::zeros(1, t, fo);
        let (xd, yd) = (x.data(), y.data_mut());
        for row in yd.chunks_exact_mut(fo) {
            row.copy_from_slice(&self.bias.data);
        }
        for ci in 0..c {
            gemm(
                t,
                fi,
                fo,
                &xd[ci * t * fi..(ci + 1) * t * fi],
                Strides::row_major(fi),
                &w[ci * fi * fo..(ci + 1) * fi * fo],
                Strides::row_major(fo),
                1.0,
                yd,
                Strides::row_major(fo),
            );
        }
        Ok(y)
    }

    /// Returns `(dx, [dweight, dbias])`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> (Tensor, [Vec<f64>; 2]) {
        let [c, t, fi] = x.shape();
        let fo = self.out_maps();
        let w = &self.weight.data;
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; fo];
        let mut dx = Tensor::zeros(c, t, fi);
        let (xd, dyd) = (x.data(), dy.data());
        for g in dyd.chunks_exact(fo) {
            axpy(1.0, g, &mut db);
        }
        let rm_in = Strides::row_major(fi);
        let rm_out = Strides::row_major(fo);
        let dxd = dx.data_mut();
        for ci in 0..c {
            let xs = ci * t * fi..(ci + 1) * t * fi;
            let ws = ci * fi * fo..(ci + 1) * fi * fo;
            gemm(fi, t, fo, &xd[xs.clone()], rm_in.transposed(), dyd, rm_out, 1.0, &mut dw[ws.clone()], rm_out);
            gemm(t, fo, fi, dyd, rm_out, &w[ws], rm_out.transposed(), 0.0, &mut dxd[xs], rm_in);
        }
        (dx, [dw, db])
    }
}

impl LinearMap for SpatialConv {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }

    fn apply_transpose(&self, dy: &Tensor, input_shape: [usize; 3]) -> Tensor {
        let x = Tensor::zeros(input_shape[0], input_shape[1], input_shape[2]);
        self.backward(&x, dy).0
    }

    fn bias(&self) -> &[f64] {
        &self.bias.data
    }

    fn ones_like(&self) -> Self {
        let mut l = self.clone();
        l.weight.data.fill(1.0);
        l.bias.data.fill(0.0);
        l
    }

    fn fold_affine(&self, scale: &[f64], shift: &[f64]) -> Self {
        let mut l = self.clone();
        let fo = self.out_maps();
        for (i, w) in l.weight.data.iter_mut().enumerate() {
            *w *= scale[i % fo];
        }
        for (o, b) in l.bias.data.iter_mut().enumerate() {
            *b = *b * scale[o] + shift[o];
        }
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    fn randomize(p: &mut Param, rng: &mut ChaCha8Rng) {
        for v in &mut p.data {
            *v = StandardNormal.sample(rng);
        }
    }

    #[test]
    fn temporal_output_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = TemporalConv::new("stem", 256, 4, &mut rng);
        assert_eq!(conv.output_len(1024), Some(769));
        assert_eq!(conv.output_len(255), None);
        let x = Tensor::zeros(1, 100, 1);
        assert!(conv.forward(&x).is_err());
    }

    #[test]
    fn temporal_impulse_is_identity_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = TemporalConv::new("stem", 5, 1, &mut rng);
        conv.weight.data = vec![1.0, 0.0, 0.0, 0.0, 0.0];
        let x = random_tensor(&mut rng, [3, 20, 1]);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), [3, 16, 1]);
        for c in 0..3 {
            for t in 0..16 {
                assert_eq!(y.get(c, t, 0), x.get(c, t, 0));
            }
        }
    }

    #[test]
    fn temporal_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = TemporalConv::new("stem", 4, 2, &mut rng);
        randomize(&mut conv.bias, &mut rng);
        let x = random_tensor(&mut rng, [2, 16, 1]);
        let y = conv.forward(&x).unwrap();
        for c in 0..2 {
            for t in 0..13 {
                for f in 0..2 {
                    let mut acc = conv.bias.data[f];
                    for tau in 0..4 {
                        acc += x.get(c, t + tau, 0) * conv.weight.data[tau * 2 + f];
                    }
                    assert!((y.get(c, t, f) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn separable_identity_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [1usize, 4, 5] {
            let mut conv = SeparableConv::new("sep", k, 3, 3, &mut rng);
            conv.depthwise.data.fill(0.0);
            let centre = conv.pad_left();
            for i in 0..3 {
                conv.depthwise.data[centre * 3 + i] = 1.0;
            }
            conv.pointwise.data = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
            let x = random_tensor(&mut rng, [2, 9, 3]);
            let (y, _) = conv.forward(&x).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn even_kernel_pads_extra_zero_on_the_right() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let conv = SeparableConv::new("sep", 4, 1, 1, &mut rng);
        assert_eq!(conv.pad_left(), 1);
        let conv = SeparableConv::new("sep", 5, 1, 1, &mut rng);
        assert_eq!(conv.pad_left(), 2);
    }

    #[test]
    fn separable_rejects_map_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let conv = SeparableConv::new("sep", 3, 4, 8, &mut rng);
        assert!(conv.forward(&Tensor::zeros(2, 10, 3)).is_err());
    }

    #[test]
    fn spatial_channel_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut conv = SpatialConv::new("sp", 4, 2, 2, &mut rng);
        conv.weight.data.fill(0.0);
        for c in 0..4 {
            // map 1 -> output 0
            conv.weight.data[(c * 2 + 1) * 2] = 0.25;
        }
        let x = random_tensor(&mut rng, [4, 7, 2]);
        let y = conv.forward(&x).unwrap();
        for t in 0..7 {
            let mean = (0..4).map(|c| x.get(c, t, 1)).sum::<f64>() / 4.0;
            assert!((y.get(0, t, 0) - mean).abs() < 1e-14);
            assert_eq!(y.get(0, t, 1), 0.0);
        }
    }

    #[test]
    fn spatial_shape_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let conv = SpatialConv::new("sp", 8, 16, 16, &mut rng);
        let y = conv.forward(&Tensor::zeros(8, 100, 16)).unwrap();
        assert_eq!(y.shape(), [1, 100, 16]);
        assert!(conv.forward(&Tensor::zeros(7, 100, 16)).is_err());
    }

    #[test]
    fn spatial_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut conv = SpatialConv::new("sp", 4, 3, 3, &mut rng);
        randomize(&mut conv.bias, &mut rng);
        let x = random_tensor(&mut rng, [4, 10, 3]);
        let y = conv.forward(&x).unwrap();
        for t in 0..10 {
            for o in 0..3 {
                let mut acc = conv.bias.data[o];
                for c in 0..4 {
                    for i in 0..3 {
                        acc += x.get(c, t, i) * conv.weight.data[(c * 3 + i) * 3 + o];
                    }
                }
                assert!((y.get(0, t, o) - acc).abs() < 1e-12);
            }
        }
    }

    /// Central differences for a scalar functional `<dy, layer(x)>`.
    fn check_grads<F>(x: &Tensor, params: &mut [&mut Param], dy: &Tensor, f: F, analytic: &[Vec<f64>], dx: &Tensor)
    where
        F: Fn(&Tensor, &[Vec<f64>]) -> Tensor,
    {
        let h = 1e-6;
        let snapshot: Vec<Vec<f64>> = params.iter().map(|p| p.data.clone()).collect();
        let loss = |x: &Tensor, ps: &[Vec<f64>]| -> f64 {
            f(x, ps).data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
        };
        for (pi, grad) in analytic.iter().enumerate() {
            for j in 0..grad.len() {
                let mut plus = snapshot.clone();
                plus[pi][j] += h;
                let mut minus = snapshot.clone();
                minus[pi][j] -= h;
                let fd = (loss(x, &plus) - loss(x, &minus)) / (2.0 * h);
                assert!((fd - grad[j]).abs() < 1e-6 * (1.0 + fd.abs()), "param {pi}[{j}]: {fd} vs {}", grad[j]);
            }
        }
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[j] += h;
            let mut xm = x.clone();
            xm.data_mut()[j] -= h;
            let fd = (loss(&xp, &snapshot) - loss(&xm, &snapshot)) / (2.0 * h);
            assert!((fd - dx.data()[j]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn temporal_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut conv = TemporalConv::new("stem", 3, 2, &mut rng);
        let x = random_tensor(&mut rng, [2, 8, 1]);
        let dy = random_tensor(&mut rng, [2, 6, 2]);
        let (dx, grads) = conv.backward(&x, &dy);
        let base = conv.clone();
        let f = move |x: &Tensor, ps: &[Vec<f64>]| {
            let mut l = base.clone();
            l.weight.data = ps[0].clone();
            l.bias.data = ps[1].clone();
            l.forward(x).unwrap()
        };
        let TemporalConv { weight, bias } = &mut conv;
        check_grads(&x, &mut [weight, bias], &dy, f, &grads, &dx);
    }

    #[test]
    fn separable_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut conv = SeparableConv::new("sep", 4, 2, 3, &mut rng);
        let x = random_tensor(&mut rng, [2, 7, 2]);
        let dy = random_tensor(&mut rng, [2, 7, 3]);
        let (_, z) = conv.forward(&x).unwrap();
        let (dx, grads) = conv.backward(&x, &z, &dy);
        let base = conv.clone();
        let f = move |x: &Tensor, ps: &[Vec<f64>]| {
            let mut l = base.clone();
            l.depthwise.data = ps[0].clone();
            l.pointwise.data = ps[1].clone();
            l.bias.data = ps[2].clone();
            l.forward(x).unwrap().0
        };
        let SeparableConv { depthwise, pointwise, bias } = &mut conv;
        check_grads(&x, &mut [depthwise, pointwise, bias], &dy, f, &grads, &dx);
    }

    #[test]
    fn spatial_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut conv = SpatialConv::new("sp", 3, 2, 2, &mut rng);
        let x = random_tensor(&mut rng, [3, 5, 2]);
        let dy = random_tensor(&mut rng, [1, 5, 2]);
        let (dx, grads) = conv.backward(&x, &dy);
        let base = conv.clone();
        let f = move |x: &Tensor, ps: &[Vec<f64>]| {
            let mut l = base.clone();
            l.weight.data = ps[0].clone();
            l.bias.data = ps[1].clone();
            l.forward(x).unwrap()
        };
        let SpatialConv { weight, bias } = &mut conv;
        check_grads(&x, &mut [weight, bias], &dy, f, &grads, &dx);
    }

    #[test]
    fn transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let conv = SeparableConv::new("sep", 5, 3, 4, &mut rng);
        let mut nobias = conv.clone();
        nobias.bias.data.fill(0.0);
        let x = random_tensor(&mut rng, [2, 9, 3]);
        let dy = random_tensor(&mut rng, [2, 9, 4]);
        let lhs: f64 = nobias.apply(&x).unwrap().data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(nobias.apply_transpose(&dy, x.shape()).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
