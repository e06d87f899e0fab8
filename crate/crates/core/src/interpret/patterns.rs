//! Forward-model (activation pattern) transform of the spatial filters.

use nalgebra::{DMatrix, DVector};

use crate::data::EpochSet;
use crate::error::{invalid, shape_err, MsnnError, Result};
use crate::model::MsnnModel;
use crate::par;
use crate::tensor::Tensor;

/// How the filter-output covariance is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PatternMode {
    /// Each filter on its own: `a_j = Σ_X w_j / (w_jᵀ Σ_X w_j)`.
    #[default]
    PerFilter,
    /// Whole bank at once: `A = Σ_X W (WᵀΣ_X W + λI)⁻¹`, `λ = 1e-8·tr/n`.
    Joint,
}

impl std::str::FromStr for PatternMode {
    type Err = MsnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-filter" | "per_filter" | "diag" => Ok(PatternMode::PerFilter),
            "joint" | "full" => Ok(PatternMode::Joint),
            _ => invalid(format!("unknown pattern mode {s:?} (expected per-filter or joint)")),
        }
    }
}

/// Channel pattern of one spatial filter `W[:, in_map, out_map]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationPattern {
    /// 1-based branch index.
    pub branch: usize,
    pub in_map: usize,
    pub out_map: usize,
    pub raw: Vec<f64>,
    /// `raw` min-max scaled to `[0, 1]`.
    pub normalized: Vec<f64>,
}

/// Min-max scaling to `[0, 1]`. A constant vector maps to all zeros.
pub fn normalize_unit_range(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| if *x == hi { 1.0 } else { (x - lo) / span }).collect()
}

/// Running channel covariance over columns of a `[n_c, *, *]` feature stack.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    n_c: usize,
    count: usize,
    sum: Vec<f64>,
    cross: DMatrix<f64>,
}

impl CovarianceAccumulator {
    pub fn new(n_c: usize) -> Self {
        CovarianceAccumulator { n_c, count: 0, sum: vec![0.0; n_c], cross: DMatrix::zeros(n_c, n_c) }
    }

    /// Adds every `(time, map)` column of `x` as one observation.
    pub fn push(&mut self, x: &Tensor) -> Result<()> {
        let [c, t, f] = x.shape();
        if c != self.n_c {
            return shape_err(format!("expected {} channels, got {c}", self.n_c));
        }
        // rows are channels, columns are (time, map) observations
        let m = DMatrix::from_row_slice(c, t * f, x.data());
        self.cross += &m * m.transpose();
        for (ci, s) in self.sum.iter_mut().enumerate() {
            *s += m.row(ci).sum();
        }
        self.count += t * f;
        Ok(())
    }

    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        self.count += other.count;
        self.cross += &other.cross;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
    }

    /// Unbiased covariance, row-major `n_c × n_c`.
    pub fn covariance(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            return invalid("covariance needs at least two observations");
        }
        let n = self.count as f64;
        let mean = DVector::from_column_slice(&self.sum) / n;
        let cov = (&self.cross - &mean * mean.transpose() * n) / (n - 1.0);
        Ok(cov.transpose().as_slice().to_vec())
    }
}

/// Raw activation patterns for the filters (each of length `n_c`) given
/// the channel covariance (row-major `n_c × n_c`).
pub fn haufe_patterns(cov: &[f64], n_c: usize, filters: &[Vec<f64>], mode: PatternMode) -> Result<Vec<Vec<f64>>> {
    if cov.len() != n_c * n_c {
        return shape_err(format!("covariance has {} entries, expected {}", cov.len(), n_c * n_c));
    }
    if filters.iter().any(|w| w.len() != n_c) {
        return shape_err(format!("every filter needs {n_c} channel weights"));
    }
    if filters.is_empty() {
        return Ok(Vec::new());
    }
    let sigma = DMatrix::from_row_slice(n_c, n_c, cov);
    let cols: Vec<DVector<f64>> = filters.iter().map(|w| DVector::from_column_slice(w)).collect();
    let w = DMatrix::from_columns(&cols);
    let sw = &sigma * &w;
    match mode {
        PatternMode::PerFilter => (0..filters.len())
            .map(|j| {
                let var = w.column(j).dot(&sw.column(j));
                if !(var > 0.0) || !var.is_finite() {
                    return Err(MsnnError::Singular(format!("filter {j} has zero output variance")));
                }
                Ok(sw.column(j).iter().map(|v| v / var).collect())
            })
            .collect(),
        PatternMode::Joint => {
            let m = filters.len();
            let mut s_hat = w.transpose() * &sw;
            let lambda = 1e-8 * s_hat.trace() / m as f64;
            for i in 0..m {
                s_hat[(i, i)] += lambda;
            }
            let chol = s_hat
                .cholesky()
                .ok_or_else(|| MsnnError::Singular("filter output covariance after regularisation".into()))?;
            // A = Σ_X W Σ_ŝ⁻¹  ⇔  Σ_ŝ Aᵀ = (Σ_X W)ᵀ
            let at = chol.solve(&sw.transpose());
            if at.iter().any(|v| !v.is_finite()) {
                return Err(MsnnError::Singular("filter output covariance after regularisation".into()));
            }
            Ok((0..m).map(|j| at.row(j).iter().copied().collect()).collect())
        }
    }
}

/// A spatial filter keyed by its `(in_map, out_map)` pair.
pub type SpatialFilter = ((usize, usize), Vec<f64>);

/// Spatial filters of branch `branch` (1-based), ordered `(in_map, out_map)`.
pub fn spatial_filters(model: &MsnnModel, branch: usize) -> Result<Vec<SpatialFilter>> {
    let n = model.spatial.len();
    if branch == 0 || branch > n {
        return invalid(format!("branch {branch} out of range 1..={n}"));
    }
    let conv = &model.spatial[branch - 1].conv;
    let (c, fi, fo) = (conv.channels(), conv.in_maps(), conv.out_maps());
    let w = &conv.weight.data;
    let mut out = Vec::with_capacity(fi * fo);
    for i in 0..fi {
        for o in 0..fo {
            out.push(((i, o), (0..c).map(|ch| w[(ch * fi + i) * fo + o]).collect()));
        }
    }
    Ok(out)
}

/// Channel covariance of the branch input `f_k^ST` over time, maps and
/// samples (eval mode).
pub fn branch_covariance(model: &MsnnModel, data: &EpochSet, branch: usize) -> Result<Vec<f64>> {
    let n = model.separable.len();
    if branch == 0 || branch > n {
        return invalid(format!("branch {branch} out of range 1..={n}"));
    }
    if data.is_empty() {
        return invalid("no epochs to estimate the covariance from");
    }
    let n_c = model.config.n_channels;
    let parts = par::map(&data.epochs, |x| -> Result<CovarianceAccumulator> {
        let inter = model.forward_one(x)?;
        let mut acc = CovarianceAccumulator::new(n_c);
        acc.push(&inter.st[branch - 1])?;
        Ok(acc)
    });
    let mut total = CovarianceAccumulator::new(n_c);
    for p in parts {
        total.merge(&p?);
    }
    total.covariance()
}

/// Activation patterns of every spatial filter in `branch` (1-based).
pub fn activation_patterns(
    model: &MsnnModel,
    data: &EpochSet,
    branch: usize,
    mode: PatternMode,
) -> Result<Vec<ActivationPattern>> {
    let filters = spatial_filters(model, branch)?;
    let cov = branch_covariance(model, data, branch)?;
    let weights: Vec<Vec<f64>> = filters.iter().map(|(_, w)| w.clone()).collect();
    let raw = haufe_patterns(&cov, model.config.n_channels, &weights, mode)?;
    Ok(filters
        .into_iter()
        .zip(raw)
        .map(|(((in_map, out_map), _), raw)| ActivationPattern {
            branch,
            in_map,
            out_map,
            normalized: normalize_unit_range(&raw),
            raw,
        })
        .collect())
}

/// Pearson correlation of two equally long vectors.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Cosine similarity.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn identity(n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    }

    #[test]
    fn identity_covariance_returns_the_filter() {
        let w = vec![0.3, -1.2, 0.8, 2.0, -0.1];
        for mode in [PatternMode::PerFilter, PatternMode::Joint] {
            let a = haufe_patterns(&identity(5), 5, std::slice::from_ref(&w), mode).unwrap();
            let c = cosine(&normalize_unit_range(&a[0]), &normalize_unit_range(&w));
            assert!(c > 0.999999, "{mode:?}: {c}");
        }
    }

    #[test]
    fn normalization_hits_both_ends() {
        let v = normalize_unit_range(&[3.0, -1.0, 0.5, 7.0]);
        assert_eq!(v.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(v.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        assert_eq!(normalize_unit_range(&[2.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn covariance_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Tensor> = (0..3)
            .map(|_| Tensor::from_vec([3, 5, 2], (0..30).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap())
            .collect();
        let mut acc = CovarianceAccumulator::new(3);
        for x in &xs {
            acc.push(x).unwrap();
        }
        let cov = acc.covariance().unwrap();
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|c| xs.iter().flat_map(|x| (0..5).flat_map(move |t| (0..2).map(move |f| x.get(c, t, f)))).collect())
            .collect();
        let n = cols[0].len() as f64;
        for a in 0..3 {
            for b in 0..3 {
                let ma = cols[a].iter().sum::<f64>() / n;
                let mb = cols[b].iter().sum::<f64>() / n;
                let c: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
                assert!((cov[a * 3 + b] - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn planted_mixing_vector_is_recovered() {
        // x = a·s + correlated noise; least-squares backward filter for s
        let n_c = 6;
        let a = [1.0, 0.8, 0.1, -0.5, 0.0, 0.3];
        let b = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4000;
        let mut x = Tensor::zeros(n_c, n, 1);
        let mut s = vec![0.0; n];
        for t in 0..n {
            s[t] = StandardNormal.sample(&mut rng);
            let common: f64 = StandardNormal.sample(&mut rng);
            for c in 0..n_c {
                let e: f64 = StandardNormal.sample(&mut rng);
                x.set(c, t, 0, a[c] * s[t] + b[c] * common + 0.3 * e);
            }
        }
        let mut acc = CovarianceAccumulator::new(n_c);
        acc.push(&x).unwrap();
        let cov = acc.covariance().unwrap();
        let sigma = DMatrix::from_row_slice(n_c, n_c, &cov);
        let xs = DVector::from_iterator(n_c, (0..n_c).map(|c| (0..n).map(|t| x.get(c, t, 0) * s[t]).sum::<f64>() / n as f64));
        let w = sigma.clone().lu().solve(&xs).unwrap();
        let w: Vec<f64> = w.iter().copied().collect();
        assert!(correlation(&w, &a) < 0.9, "filter alone should not look like the pattern");
        let p = haufe_patterns(&cov, n_c, &[w], PatternMode::PerFilter).unwrap();
        assert!(correlation(&normalize_unit_range(&p[0]), &a) > 0.9);
    }

    #[test]
    fn joint_mode_reports_singular_bank() {
        let cov = vec![0.0; 4];
        let err = haufe_patterns(&cov, 2, &[vec![1.0, 0.0]], PatternMode::Joint).unwrap_err();
        assert!(matches!(err, MsnnError::Singular(_)));
        assert!(haufe_patterns(&cov, 2, &[vec![1.0, 0.0]], PatternMode::PerFilter).is_err());
    }

    proptest! {
        #[test]
        fn rescaling_a_filter_leaves_pattern(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_c = 4;
            let m: Vec<f64> = (0..16).map(|_| StandardNormal.sample(&mut rng)).collect();
            // Σ = MᵀM + I is symmetric positive definite
            let mm = DMatrix::from_row_slice(4, 4, &m);
            let sigma = mm.transpose() * &mm + DMatrix::identity(4, 4);
            let cov: Vec<f64> = sigma.transpose().as_slice().to_vec();
            let w: Vec<f64> = (0..n_c).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
            for mode in [PatternMode::PerFilter, PatternMode::Joint] {
                let a = normalize_unit_range(&haufe_patterns(&cov, n_c, std::slice::from_ref(&w), mode).unwrap()[0]);
                let b = normalize_unit_range(&haufe_patterns(&cov, n_c, std::slice::from_ref(&ws), mode).unwrap()[0]);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}
