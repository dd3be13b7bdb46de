use super::{nchw, record};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Output extent of a convolution window sweep (floor convention for
/// strides above one). `None` when the kernel does not fit the padded input.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let span = (input + 2 * padding).checked_sub(kernel)?;
    (stride > 0).then(|| span / stride + 1)
}

#[derive(Clone, Copy)]
struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Unfolds one image `[C_in,H,W]` into `[C_in·k·k, OH·OW]`.
    fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        let p = self.col_cols();
        for ci in 0..self.c_in {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, d) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatters columns back, summing overlaps.
    fn col2im<T: Scalar>(&self, col: &[T], x: &mut [T]) {
        let p = self.col_cols();
        for ci in 0..self.c_in {
            let plane = &mut x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let base = iy as usize * self.w;
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                plane[base + ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation with zero padding.
///
/// `x` is `[N,C_in,H,W]`, `w` is `[C_out,C_in,k,k]`, `b` is `[C_out]`.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let [n, c_in, h, wd] = nchw("conv2d", x)?;
    let [c_out, wc_in, k, k2] = nchw("conv2d", w)?;
    if wc_in != c_in || k != k2 {
        return Err(dim_err(
            "conv2d",
            format!("input {:?} does not match kernel {:?}", x.shape(), w.shape()),
        ));
    }
    if let Some(b) = b {
        if b.shape() != [c_out] {
            return Err(dim_err(
                "conv2d",
                format!("bias {:?} does not match kernel {:?}", b.shape(), w.shape()),
            ));
        }
    }
    let extent = |len: usize| -> Result<usize> {
        conv_output_extent(len, k, stride, padding).ok_or_else(|| {
            Error::Config(format!(
                "conv2d: extent {len} with kernel {k}, stride {stride}, padding {padding} has no valid output size"
            ))
        })
    };
    let (oh, ow) = (extent(h)?, extent(wd)?);
    let geo = Geometry {
        c_in,
        h,
        w: wd,
        k,
        stride,
        pad: padding,
        oh,
        ow,
    };
    let (rows, p) = (geo.col_rows(), geo.col_cols());
    let in_len = c_in * h * wd;
    let mut out = vec![T::zero(); n * c_out * p];
    {
        let xd = x.data();
        let wd_ = w.data();
        let mut col = vec![T::zero(); if geo.is_pointwise() { 0 } else { rows * p }];
        for i in 0..n {
            let img = &xd[i * in_len..(i + 1) * in_len];
            let colv: &[T] = if geo.is_pointwise() {
                img
            } else {
                geo.im2col(img, &mut col);
                &col
            };
            let dst = &mut out[i * c_out * p..(i + 1) * c_out * p];
            if let Some(b) = b {
                for (plane, &bv) in dst.chunks_mut(p).zip(b.data().iter()) {
                    plane.fill(bv);
                }
            }
            T::gemm(c_out, rows, p, &wd_, rows as isize, 1, colv, p as isize, 1, T::one(), dst, p as isize, 1);
        }
    }
    let mut inputs = vec![x.clone(), w.clone()];
    if let Some(b) = b {
        inputs.push(b.clone());
    }
    let (sx, sw, sb) = (x.clone(), w.clone(), b.cloned());
    Ok(record("conv2d", vec![n, c_out, oh, ow], out, inputs, move |_, g| {
        let xd = sx.data();
        let wdat = sw.data();
        let mut dx = sx.requires_grad().then(|| vec![T::zero(); n * in_len]);
        let mut dw = sw.requires_grad().then(|| vec![T::zero(); c_out * rows]);
        let mut col = vec![T::zero(); if geo.is_pointwise() { 0 } else { rows * p }];
        let mut dcol = vec![T::zero(); rows * p];
        for i in 0..n {
            let gi = &g[i * c_out * p..(i + 1) * c_out * p];
            if let Some(dw) = dw.as_mut() {
                let img = &xd[i * in_len..(i + 1) * in_len];
                let colv: &[T] = if geo.is_pointwise() {
                    img
                } else {
                    geo.im2col(img, &mut col);
                    &col
                };
                // dW += G_i · colᵀ
                T::gemm(c_out, p, rows, gi, p as isize, 1, colv, 1, p as isize, T::one(), dw, rows as isize, 1);
            }
            if let Some(dx) = dx.as_mut() {
                let dst = &mut dx[i * in_len..(i + 1) * in_len];
                if geo.is_pointwise() {
                    // dX_i = Wᵀ · G_i directly
                    T::gemm(rows, c_out, p, &wdat, 1, rows as isize, gi, p as isize, 1, T::zero(), dst, p as isize, 1);
                } else {
                    T::gemm(rows, c_out, p, &wdat, 1, rows as isize, gi, p as isize, 1, T::zero(), &mut dcol, p as isize, 1);
                    geo.col2im(&dcol, dst);
                }
            }
        }
        let mut grads = vec![dx, dw];
        if let Some(b) = &sb {
            grads.push(b.requires_grad().then(|| {
                let mut db = vec![T::zero(); c_out];
                for (idx, plane) in g.chunks(p).enumerate() {
                    db[idx % c_out] += plane.iter().copied().sum();
                }
                db
            }));
        }
        grads
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct six-loop cross-correlation used as the reference.
    fn naive_conv(
        x: &[f64],
        [n, c_in, h, w]: [usize; 4],
        wt: &[f64],
        [c_out, _, k, _]: [usize; 4],
        bias: &[f64],
        stride: usize,
        pad: usize,
    ) -> Vec<f64> {
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; n * c_out * oh * ow];
        for b in 0..n {
            for co in 0..c_out {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[co];
                        for ci in 0..c_in {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += x[((b * c_in + ci) * h + iy as usize) * w + ix as usize]
                                            * wt[((co * c_in + ci) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        out[((b * c_out + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn ones_center_is_nine() {
        let x = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let w = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, None, 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.to_vec()[4], 9.0);
        assert_eq!(y.to_vec()[0], 4.0);
    }

    #[test]
    fn dirac_kernel_is_identity() {
        let vals: Vec<f64> = (0..25).map(|v| f64::from(v) * 0.1 - 1.0).collect();
        let x = Tensor::from_vec(&[1, 1, 5, 5], vals.clone()).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = Tensor::from_vec(&[1, 1, 3, 3], k).unwrap();
        assert_eq!(conv2d(&x, &w, None, 1, 1).unwrap().to_vec(), vals);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (1, 0, 1), (1, 0, 3)] {
            let xs = [1, 2, 5, 5];
            let ws = [3, 2, k, k];
            let x: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..3 * 2 * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let want = naive_conv(&x, xs, &w, ws, &b, stride, pad);
            let got = conv2d(
                &Tensor::from_vec(&xs, x).unwrap(),
                &Tensor::from_vec(&ws, w).unwrap(),
                Some(&Tensor::from_vec(&[3], b).unwrap()),
                stride,
                pad,
            )
            .unwrap();
            for (a, b) in got.to_vec().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "stride {stride} pad {pad}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn kernel_wider_than_input_is_config_error() {
        let x = Tensor::<f64>::zeros(&[1, 1, 2, 2]);
        let w = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        assert!(matches!(conv2d(&x, &w, None, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &w, None, 1, 1), Err(Error::Dimension { .. })));
    }
}
