use super::{nchw, record};
use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(
            op,
            format!("shapes {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    let (a, b) = (a.data(), b.data());
    a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect()
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("add", a, b)?;
    let out = zip_map(a, b, |x, y| x + y);
    Ok(record(
        "add",
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        |_, g| vec![Some(g.to_vec()), Some(g.to_vec())],
    ))
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("sub", a, b)?;
    let out = zip_map(a, b, |x, y| x - y);
    Ok(record(
        "sub",
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        |_, g| vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())],
    ))
}

/// Elementwise (Hadamard) product.
pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("mul", a, b)?;
    let out = zip_map(a, b, |x, y| x * y);
    let (sa, sb) = (a.clone(), b.clone());
    Ok(record(
        "mul",
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        move |_, g| {
            let ga = sa
                .requires_grad()
                .then(|| g.iter().zip(sb.data().iter()).map(|(&g, &v)| g * v).collect());
            let gb = sb
                .requires_grad()
                .then(|| g.iter().zip(sa.data().iter()).map(|(&g, &v)| g * v).collect());
            vec![ga, gb]
        },
    ))
}

/// Multiplies every element by the constant `c`.
pub fn scale<T: Scalar>(x: &Tensor<T>, c: T) -> Tensor<T> {
    let out = x.data().iter().map(|&v| v * c).collect();
    record("scale", x.shape().to_vec(), out, vec![x.clone()], move |_, g| {
        vec![Some(g.iter().map(|&v| v * c).collect())]
    })
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let out = x.data().iter().map(|&v| v.max(T::zero())).collect();
    record("relu", x.shape().to_vec(), out, vec![x.clone()], |out, g| {
        let y = out.data();
        vec![Some(
            g.iter()
                .zip(y.iter())
                .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
                .collect(),
        )]
    })
}

pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let out = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    record("sigmoid", x.shape().to_vec(), out, vec![x.clone()], |out, g| {
        let y = out.data();
        vec![Some(
            g.iter()
                .zip(y.iter())
                .map(|(&g, &y)| g * y * (T::one() - y))
                .collect(),
        )]
    })
}

/// Sum of all elements as a scalar tensor.
pub fn sum<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let total = x.data().iter().copied().sum();
    let n = x.numel();
    record("sum", Vec::new(), vec![total], vec![x.clone()], move |_, g| {
        vec![Some(vec![g[0]; n])]
    })
}

pub fn mean<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let n = x.numel().max(1);
    scale(&sum(x), T::one() / T::of(n as f64))
}

/// Multiplies each (n, c) feature plane of `x` by `s[n, c]`.
pub fn scale_channels<T: Scalar>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("scale_channels", x)?;
    if s.shape() != [n, c] {
        return Err(dim_err(
            "scale_channels",
            format!("scale shape {:?} does not match {:?}", s.shape(), x.shape()),
        ));
    }
    let hw = h * w;
    let out = {
        let (xd, sd) = (x.data(), s.data());
        xd.chunks(hw)
            .zip(sd.iter())
            .flat_map(|(plane, &f)| plane.iter().map(move |&v| v * f))
            .collect()
    };
    let (sx, ss) = (x.clone(), s.clone());
    Ok(record(
        "scale_channels",
        x.shape().to_vec(),
        out,
        vec![x.clone(), s.clone()],
        move |_, g| {
            let gx = sx.requires_grad().then(|| {
                let sd = ss.data();
                g.chunks(hw)
                    .zip(sd.iter())
                    .flat_map(|(plane, &f)| plane.iter().map(move |&v| v * f))
                    .collect()
            });
            let gs = ss.requires_grad().then(|| {
                let xd = sx.data();
                g.chunks(hw)
                    .zip(xd.chunks(hw))
                    .map(|(gp, xp)| gp.iter().zip(xp).map(|(&a, &b)| a * b).sum())
                    .collect()
            });
            vec![gx, gs]
        },
    ))
}

/// Concatenates along the channel axis; `a`'s channels come first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [na, ca, ha, wa] = nchw("concat_channels", a)?;
    let [nb, cb, hb, wb] = nchw("concat_channels", b)?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(dim_err(
            "concat_channels",
            format!("shapes {:?} and {:?} are not concatenable", a.shape(), b.shape()),
        ));
    }
    let (la, lb) = (ca * ha * wa, cb * hb * wb);
    let mut out = Vec::with_capacity(na * (la + lb));
    {
        let (ad, bd) = (a.data(), b.data());
        for i in 0..na {
            out.extend_from_slice(&ad[i * la..(i + 1) * la]);
            out.extend_from_slice(&bd[i * lb..(i + 1) * lb]);
        }
    }
    Ok(record(
        "concat_channels",
        vec![na, ca + cb, ha, wa],
        out,
        vec![a.clone(), b.clone()],
        move |_, g| {
            let mut ga = Vec::with_capacity(na * la);
            let mut gb = Vec::with_capacity(na * lb);
            for chunk in g.chunks(la + lb) {
                ga.extend_from_slice(&chunk[..la]);
                gb.extend_from_slice(&chunk[la..]);
            }
            vec![Some(ga), Some(gb)]
        },
    ))
}
