use super::{ExcitationParams, GradMode};
use crate::error::{dim_err, Error, Result};
use crate::ops::{nchw, record};
use crate::tensor::{Scalar, Tensor};

/// Fastidious excitation of `x: [N,C,H,W]`.
///
/// Forward: `x'_c(i,j) = s_c·x_c(i,j)` if `x_c(i,j) > g_c` (strict), else
/// `x_c(i,j)`. Identical in both gradient modes.
///
/// Backward in [`GradMode::Hard`] treats the mask as constant: `∂/∂x` is
/// `s_c` on masked pixels and 1 elsewhere, `∂/∂s_c` is the sum of the masked
/// inputs, and `∂/∂g_c` is zero. In [`GradMode::Surrogate`] the mask is
/// replaced by `m = σ((x - g_c)/τ)` and the rules are those of the relaxed
/// map `x + (s_c - 1)·m·x`, which gives the thresholds a gradient.
pub fn fastidious_excite<T: Scalar>(
    x: &Tensor<T>,
    params: &ExcitationParams<T>,
    mode: GradMode,
    tau: f64,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("fastidious_excite", x)?;
    if params.s.shape() != [n, c] {
        return Err(dim_err(
            "fastidious_excite",
            format!(
                "params {:?} do not match feature map {:?}",
                params.s.shape(),
                x.shape()
            ),
        ));
    }
    if mode == GradMode::Surrogate && (tau.is_nan() || tau <= 0.0) {
        return Err(Error::Config(format!("surrogate temperature must be positive, got {tau}")));
    }
    let hw = h * w;
    let out = {
        let (xd, sd, gd) = (x.data(), params.s.data(), params.g.data());
        let mut out = Vec::with_capacity(xd.len());
        for (plane, (&s, &g)) in xd.chunks(hw).zip(sd.iter().zip(gd.iter())) {
            out.extend(plane.iter().map(|&v| if v > g { s * v } else { v }));
        }
        out
    };
    let (sx, ss, sg) = (x.clone(), params.s.clone(), params.g.clone());
    let inv_tau = T::of(1.0 / tau);
    Ok(record(
        "fastidious_excite",
        x.shape().to_vec(),
        out,
        vec![x.clone(), params.s.clone(), params.g.clone()],
        move |_, grad| {
            let (xd, sd, gd) = (sx.data(), ss.data(), sg.data());
            let mut dx = vec![T::zero(); xd.len()];
            let mut ds = vec![T::zero(); sd.len()];
            let mut dg = vec![T::zero(); gd.len()];
            for (nc, ((xp, gp), dxp)) in xd
                .chunks(hw)
                .zip(grad.chunks(hw))
                .zip(dx.chunks_mut(hw))
                .enumerate()
            {
                let (s, g) = (sd[nc], gd[nc]);
                match mode {
                    GradMode::Hard => {
                        for ((&v, &go), d) in xp.iter().zip(gp).zip(dxp.iter_mut()) {
                            if v > g {
                                *d = go * s;
                                ds[nc] += go * v;
                            } else {
                                *d = go;
                            }
                        }
                    }
                    GradMode::Surrogate => {
                        let one = T::one();
                        for ((&v, &go), d) in xp.iter().zip(gp).zip(dxp.iter_mut()) {
                            let m = one / (one + (-(v - g) * inv_tau).exp());
                            let dm = m * (one - m) * inv_tau;
                            *d = go * (one + (s - one) * (m + v * dm));
                            ds[nc] += go * m * v;
                            dg[nc] -= go * (s - one) * v * dm;
                        }
                    }
                }
            }
            vec![Some(dx), Some(ds), Some(dg)]
        },
    ))
}
