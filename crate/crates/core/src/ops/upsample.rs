use super::{nchw, record};
use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Interpolation taps along one axis: for each output index, the two source
/// indices and the weight of the second one.
fn axis_taps(src_len: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..src_len * factor)
        .map(|o| {
            // half-pixel centers, clamped at the low border
            let pos = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src_len - 1);
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Bilinear upsampling by an integer factor (the network uses 2) with
/// half-pixel sample centers.
pub fn upsample_bilinear<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("upsample_bilinear", x)?;
    if factor == 0 || h == 0 || w == 0 {
        return Err(dim_err(
            "upsample_bilinear",
            format!("factor {factor} on shape {:?}", x.shape()),
        ));
    }
    let (oh, ow) = (h * factor, w * factor);
    let ys = axis_taps(h, factor);
    let xs = axis_taps(w, factor);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    {
        let xd = x.data();
        for plane in xd.chunks(h * w) {
            for &(y0, y1, ly) in &ys {
                let (ly, hy) = (T::of(ly), T::of(1.0 - ly));
                for &(x0, x1, lx) in &xs {
                    let (lx, hx) = (T::of(lx), T::of(1.0 - lx));
                    let v = hy * (hx * plane[y0 * w + x0] + lx * plane[y0 * w + x1])
                        + ly * (hx * plane[y1 * w + x0] + lx * plane[y1 * w + x1]);
                    out.push(v);
                }
            }
        }
    }
    Ok(record("upsample_bilinear", vec![n, c, oh, ow], out, vec![x.clone()], move |_, g| {
        let mut dx = vec![T::zero(); n * c * h * w];
        for (dplane, gplane) in dx.chunks_mut(h * w).zip(g.chunks(oh * ow)) {
            for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
                let (ly, hy) = (T::of(ly), T::of(1.0 - ly));
                for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                    let (lx, hx) = (T::of(lx), T::of(1.0 - lx));
                    let gv = gplane[oy * ow + ox];
                    dplane[y0 * w + x0] += hy * hx * gv;
                    dplane[y0 * w + x1] += hy * lx * gv;
                    dplane[y1 * w + x0] += ly * hx * gv;
                    dplane[y1 * w + x1] += ly * lx * gv;
                }
            }
        }
        vec![Some(dx)]
    }))
}
