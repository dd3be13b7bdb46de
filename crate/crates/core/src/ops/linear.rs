use super::{expect_rank, record};
use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

/// `a[m,k] · b[k,n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank("matmul", a, 2)?;
    expect_rank("matmul", b, 2)?;
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(dim_err(
            "matmul",
            format!("inner extents differ: {:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, &a.data(), k as isize, 1, &b.data(), n as isize, 1, T::zero(), &mut out, n as isize, 1);
    let (sa, sb) = (a.clone(), b.clone());
    Ok(record("matmul", vec![m, n], out, vec![a.clone(), b.clone()], move |_, g| {
        // dA = G · Bᵀ, dB = Aᵀ · G
        let ga = sa.requires_grad().then(|| {
            let mut da = vec![T::zero(); m * k];
            T::gemm(m, n, k, g, n as isize, 1, &sb.data(), 1, n as isize, T::zero(), &mut da, k as isize, 1);
            da
        });
        let gb = sb.requires_grad().then(|| {
            let mut db = vec![T::zero(); k * n];
            T::gemm(k, m, n, &sa.data(), 1, k as isize, g, n as isize, 1, T::zero(), &mut db, n as isize, 1);
            db
        });
        vec![ga, gb]
    }))
}

/// `a[m,k] · v[k]`.
pub fn matvec<T: Scalar>(a: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank("matvec", v, 1)?;
    let k = v.shape()[0];
    let col = v.reshape(&[k, 1])?;
    let out = matmul(a, &col).map_err(|_| {
        dim_err("matvec", format!("{:?} x {:?}", a.shape(), v.shape()))
    })?;
    out.reshape(&[a.shape()[0]])
}

/// Fully connected layer on a batch of vectors: `x[N,in] · w[out,in]ᵀ (+ bias)`.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    expect_rank("linear", x, 2)?;
    expect_rank("linear", w, 2)?;
    let (n, fan_in) = (x.shape()[0], x.shape()[1]);
    let fan_out = w.shape()[0];
    if w.shape()[1] != fan_in {
        return Err(dim_err(
            "linear",
            format!("input {:?} does not match weight {:?}", x.shape(), w.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [fan_out] {
            return Err(dim_err(
                "linear",
                format!("bias {:?} does not match weight {:?}", b.shape(), w.shape()),
            ));
        }
    }
    let mut out = vec![T::zero(); n * fan_out];
    if let Some(b) = bias {
        let bd = b.data();
        for row in out.chunks_mut(fan_out) {
            row.copy_from_slice(&bd);
        }
    }
    T::gemm(
        n, fan_in, fan_out,
        &x.data(), fan_in as isize, 1,
        &w.data(), 1, fan_in as isize,
        T::one(), &mut out, fan_out as isize, 1,
    );
    let mut inputs = vec![x.clone(), w.clone()];
    if let Some(b) = bias {
        inputs.push(b.clone());
    }
    let (sx, sw, sb) = (x.clone(), w.clone(), bias.cloned());
    Ok(record("linear", vec![n, fan_out], out, inputs, move |_, g| {
        // dX = G · W, dW = Gᵀ · X, db = Σ_rows G
        let gx = sx.requires_grad().then(|| {
            let mut dx = vec![T::zero(); n * fan_in];
            T::gemm(n, fan_out, fan_in, g, fan_out as isize, 1, &sw.data(), fan_in as isize, 1, T::zero(), &mut dx, fan_in as isize, 1);
            dx
        });
        let gw = sw.requires_grad().then(|| {
            let mut dw = vec![T::zero(); fan_out * fan_in];
            T::gemm(fan_out, n, fan_in, g, 1, fan_out as isize, &sx.data(), fan_in as isize, 1, T::zero(), &mut dw, fan_in as isize, 1);
            dw
        });
        let mut grads = vec![gx, gw];
        if let Some(b) = &sb {
            grads.push(b.requires_grad().then(|| {
                let mut db = vec![T::zero(); fan_out];
                for row in g.chunks(fan_out) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                db
            }));
        }
        grads
    }))
}
