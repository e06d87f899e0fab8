use crate::error::{shape_err, MsnnError, Result};

/// Dense rank-3 array laid out as `[channels, time, maps]`, row-major
/// (the map index varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, t: usize, f: usize) -> Self {
        Tensor { shape: [c, t, f], data: vec![0.0; c * t * f] }
    }

    pub fn filled(c: usize, t: usize, f: usize, value: f64) -> Self {
        Tensor { shape: [c, t, f], data: vec![value; c * t * f] }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return shape_err(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a single-map tensor `[n_c, n_T, 1]` from channel rows.
    pub fn from_channels(rows: &[Vec<f64>]) -> Result<Self> {
        let c = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return shape_err("channel rows have unequal lengths");
        }
        let mut data = Vec::with_capacity(c * t);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(Tensor { shape: [c, t, 1], data })
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn time(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn maps(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, t: usize, f: usize) -> usize {
        (c * self.shape[1] + t) * self.shape[2] + f
    }
    #[inline]
    pub fn get(&self, c: usize, t: usize, f: usize) -> f64 {
        self.data[self.index(c, t, f)]
    }
    #[inline]
    pub fn set(&mut self, c: usize, t: usize, f: usize, v: f64) {
        let i = self.index(c, t, f);
        self.data[i] = v;
    }

    /// The `maps`-long row at `(c, t)`.
    #[inline]
    pub fn row(&self, c: usize, t: usize) -> &[f64] {
        let i = self.index(c, t, 0);
        &self.data[i..i + self.shape[2]]
    }

    /// Time course of one channel of a single-map tensor.
    pub fn channel_series(&self, c: usize, f: usize) -> Vec<f64> {
        (0..self.time()).map(|t| self.get(c, t, f)).collect()
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(MsnnError::NonFinite(what.to_string()))
        }
    }

    /// Copies a contiguous block of maps `[start, start + width)`.
    pub fn slice_maps(&self, start: usize, width: usize) -> Result<Tensor> {
        if start + width > self.maps() {
            return shape_err(format!(
                "map slice {}..{} exceeds {} maps",
                start,
                start + width,
                self.maps()
            ));
        }
        let [c, t, f] = self.shape;
        let mut out = Tensor::zeros(c, t, width);
        for ci in 0..c {
            for ti in 0..t {
                let src = (ci * t + ti) * f + start;
                let dst = (ci * t + ti) * width;
                out.data[dst..dst + width].copy_from_slice(&self.data[src..src + width]);
            }
        }
        Ok(out)
    }

    /// Copies a time window `[start, start + len)` of every channel and map.
    pub fn slice_time(&self, start: usize, len: usize) -> Result<Tensor> {
        if start + len > self.time() {
            return shape_err(format!(
                "time slice {}..{} exceeds {} samples",
                start,
                start + len,
                self.time()
            ));
        }
        let [c, t, f] = self.shape;
        let mut out = Tensor::zeros(c, len, f);
        for ci in 0..c {
            let src = (ci * t + start) * f;
            let dst = ci * len * f;
            out.data[dst..dst + len * f].copy_from_slice(&self.data[src..src + len * f]);
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Compiles `$body` twice, once with AVX2 enabled, and picks at run time.
/// The arithmetic is the same in both, so results are bit-identical.
macro_rules! dispatch_avx2 {
    ($name:ident, $wide:ident, ($($arg:ident: $ty:ty),*) -> $ret:ty, $body:block) => {
        #[inline(always)]
        fn $name($($arg: $ty),*) -> $ret $body

        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2")]
        unsafe fn $wide($($arg: $ty),*) -> $ret {
            $name($($arg),*)
        }
    };
}

dispatch_avx2!(axpy_generic, axpy_avx2, (a: f64, x: &[f64], y: &mut [f64]) -> (), {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
});

dispatch_avx2!(dot_generic, dot_avx2, (a: &[f64], b: &[f64]) -> f64, {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
});

#[inline]
fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { axpy_avx2(a, x, y) };
    }
    axpy_generic(a, x, y)
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { dot_avx2(a, b) };
    }
    dot_generic(a, b)
}

/// Row and column strides of a matrix view into a flat slice.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Strides(pub usize, pub usize);

impl Strides {
    pub const fn row_major(cols: usize) -> Self {
        Strides(cols, 1)
    }
    pub const fn transposed(self) -> Self {
        Strides(self.1, self.0)
    }
    fn extent(self, rows: usize, cols: usize) -> usize {
        (rows - 1) * self.0 + (cols - 1) * self.1 + 1
    }
}

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n`, `c: m×n` given as strided
/// views. `a` and `b` may alias themselves (Toeplitz views are fine).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: Strides,
    b: &[f64],
    sb: Strides,
    beta: f64,
    c: &mut [f64],
    sc: Strides,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(sc.extent(m, n) <= c.len(), "gemm output view out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * sc.0 + j * sc.1] *= beta;
            }
        }
        return;
    }
    assert!(sa.extent(m, k) <= a.len(), "gemm lhs view out of bounds");
    assert!(sb.extent(k, n) <= b.len(), "gemm rhs view out of bounds");
    // SAFETY: every view was bounds-checked above and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            sc.0 as isize,
            sc.1 as isize,
        );
    }
}

/// Writes the `rows × cols` row-major block `src` transposed into `dst`,
/// each output row starting at `offset` within a row stride of `stride`.
pub(crate) fn transpose_into(src: &[f64], rows: usize, cols: usize, dst: &mut [f64], stride: usize, offset: usize) {
    for r in 0..rows {
        for (j, &v) in src[r * cols..(r + 1) * cols].iter().enumerate() {
            dst[j * stride + offset + r] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|i| 0.5 * i as f64).collect(); // 3x4
        let mut c = vec![1.0; 8];
        gemm(2, 3, 4, &a, Strides::row_major(3), &b, Strides::row_major(4), 1.0, &mut c, Strides::row_major(4));
        for i in 0..2 {
            for j in 0..4 {
                let naive: f64 = 1.0 + (0..3).map(|l| a[i * 3 + l] * b[l * 4 + j]).sum::<f64>();
                assert!((c[i * 4 + j] - naive).abs() < 1e-12);
            }
        }
        // aᵀ·a as 3x3 through a transposed view
        let mut g = vec![0.0; 9];
        let sa = Strides::row_major(3);
        gemm(3, 2, 3, &a, sa.transposed(), &a, sa, 0.0, &mut g, Strides::row_major(3));
        assert_eq!(g[0], a[0] * a[0] + a[3] * a[3]);
        assert_eq!(g[5], a[1] * a[2] + a[4] * a[5]);
    }

    #[test]
    fn toeplitz_view() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let w = [1.0, -1.0];
        let mut y = vec![0.0; 4];
        gemm(4, 2, 1, &x, Strides(1, 1), &w, Strides(1, 1), 0.0, &mut y, Strides(1, 1));
        assert_eq!(y, vec![-1.0; 4]);
    }

    #[test]
    fn layout_is_map_fastest() {
        let t = Tensor::from_vec([2, 3, 2], (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(t.get(0, 0, 1), 1.0);
        assert_eq!(t.get(0, 1, 0), 2.0);
        assert_eq!(t.get(1, 0, 0), 6.0);
        assert_eq!(t.row(1, 2), &[10.0, 11.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec([2, 2, 2], vec![0.0; 7]).is_err());
    }

    #[test]
    fn slices() {
        let t = Tensor::from_vec([1, 3, 3], (0..9).map(f64::from).collect()).unwrap();
        let s = t.slice_maps(1, 2).unwrap();
        assert_eq!(s.data(), &[1.0, 2.0, 4.0, 5.0, 7.0, 8.0]);
        let w = t.slice_time(1, 2).unwrap();
        assert_eq!(w.data(), &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert!(t.slice_maps(2, 2).is_err());
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
