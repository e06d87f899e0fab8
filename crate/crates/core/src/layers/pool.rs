use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Global average pooling over time of a `[1, T, F]` tensor.
pub fn gap_forward(x: &Tensor) -> Result<Vec<f64>> {
    let [c, t, f] = x.shape();
    if c != 1 {
        return shape_err(format!("global average pooling expects 1 channel, got {c}"));
    }
    if t == 0 {
        return shape_err("global average pooling over an empty time axis");
    }
    let mut out = vec![0.0; f];
    for row in x.data().chunks_exact(f) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= t as f64);
    Ok(out)
}

pub fn gap_backward(dy: &[f64], time: usize) -> Tensor {
    let f = dy.len();
    let mut dx = Tensor::zeros(1, time, f);
    for row in dx.data_mut().chunks_exact_mut(f) {
        for (r, g) in row.iter_mut().zip(dy) {
            *r = g / time as f64;
        }
    }
    dx
}

/// Stacks tensors along the map axis in the given order.
pub fn concat_featuremaps(xs: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = xs.first() else {
        return shape_err("nothing to concatenate");
    };
    let (c, t) = (first.channels(), first.time());
    if let Some(bad) = xs.iter().find(|x| x.channels() != c || x.time() != t) {
        return shape_err(format!(
            "cannot concatenate {:?} with [{c}, {t}, *]",
            bad.shape()
        ));
    }
    let total: usize = xs.iter().map(|x| x.maps()).sum();
    let mut out = Tensor::zeros(c, t, total);
    let od = out.data_mut();
    for row in 0..c * t {
        let mut off = row * total;
        for x in xs {
            let f = x.maps();
            od[off..off + f].copy_from_slice(&x.data()[row * f..(row + 1) * f]);
            off += f;
        }
    }
    Ok(out)
}

/// Inverse of [`concat_featuremaps`] for the given widths.
pub fn split_featuremaps(x: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    if widths.iter().sum::<usize>() != x.maps() {
        return shape_err("split widths do not add up to the map count");
    }
    let mut start = 0;
    widths
        .iter()
        .map(|&w| {
            let s = x.slice_maps(start, w);
            start += w;
            s
        })
        .collect()
}
