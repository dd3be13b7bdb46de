use super::{nchw, record};
use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

/// 2×2 max pooling with stride 2.
///
/// Ties go to the first element of the window in row-major order, and the
/// backward pass routes the whole gradient there.
pub fn maxpool2d<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("maxpool2d", x)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(dim_err(
            "maxpool2d",
            format!("spatial extents must be even, got {:?}", x.shape()),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    {
        let xd = x.data();
        for plane_idx in 0..n * c {
            let base = plane_idx * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
    }
    let len = x.numel();
    Ok(record("maxpool2d", vec![n, c, oh, ow], out, vec![x.clone()], move |_, g| {
        let mut dx = vec![T::zero(); len];
        for (&idx, &gv) in argmax.iter().zip(g) {
            dx[idx] += gv;
        }
        vec![Some(dx)]
    }))
}

/// Spatial mean per channel: `[N,C,H,W] -> [N,C]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("global_avg_pool", x)?;
    let hw = h * w;
    if hw == 0 {
        return Err(dim_err("global_avg_pool", "empty spatial extent"));
    }
    let inv = T::one() / T::of(hw as f64);
    let out = x
        .data()
        .chunks(hw)
        .map(|plane| plane.iter().copied().sum::<T>() * inv)
        .collect();
    Ok(record("global_avg_pool", vec![n, c], out, vec![x.clone()], move |_, g| {
        vec![Some(
            g.iter()
                .flat_map(|&gv| std::iter::repeat_n(gv * inv, hw))
                .collect(),
        )]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn window_max() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(maxpool2d(&x).unwrap().to_vec(), vec![4.0]);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::<f64>::full(&[2, 3, 4, 6], 1.5);
        let y = maxpool2d(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 3]);
        assert!(y.to_vec().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn ties_route_to_first_index() {
        let x = Tensor::<f64>::leaf(&[1, 1, 2, 2], vec![1.0; 4]).unwrap();
        crate::ops::sum(&maxpool2d(&x).unwrap()).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn odd_extent_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 1, 3, 4]);
        assert!(maxpool2d(&x).is_err());
    }

    #[test]
    fn matches_window_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = maxpool2d(&Tensor::from_vec(&[1, 1, 8, 8], vals.clone()).unwrap()).unwrap();
        let got = y.to_vec();
        for oy in 0..4 {
            for ox in 0..4 {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(vals[(2 * oy + dy) * 8 + 2 * ox + dx]);
                    }
                }
                assert_eq!(got[oy * 4 + ox], m);
            }
        }
    }

    #[test]
    fn gap_mean() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().to_vec(), vec![2.5]);
        let c = Tensor::<f64>::full(&[1, 2, 3, 5], -0.75);
        assert!(global_avg_pool(&c).unwrap().to_vec().iter().all(|&v| (v + 0.75).abs() < 1e-15));
    }

    #[test]
    fn gap_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..2 * 4 * 36).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let z = global_avg_pool(&Tensor::from_vec(&[2, 4, 6, 6], vals.clone()).unwrap()).unwrap();
        for (nc, &got) in z.to_vec().iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    acc += vals[nc * 36 + i * 6 + j];
                }
            }
            assert!((got - acc / 36.0).abs() < 1e-14);
        }
    }
}
