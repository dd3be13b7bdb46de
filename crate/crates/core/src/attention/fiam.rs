use super::ExcitationParams;
use crate::error::{dim_err, Result};
use crate::init;
use crate::ops;
use crate::tensor::{Parameter, Scalar, Tensor};

/// Shape of a fastidious inter-attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct FiamConfig {
    /// Channels of the bottleneck feature map fed to the head.
    pub in_channels: usize,
    /// Channel multiplier of the strided conv.
    pub factor: f64,
    /// Channel count of each excited decoder feature, deepest first.
    pub level_dims: Vec<usize>,
    pub bias: bool,
}

impl FiamConfig {
    /// `⌊factor · C₀⌋`, the width of `Z₀`.
    pub fn conv_channels(&self) -> usize {
        ((self.factor * self.in_channels as f64) + 1e-9).floor().max(1.0) as usize
    }

    /// `[d₀, d₁, …, d_L]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.conv_channels()];
        d.extend(&self.level_dims);
        d
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FiamLevel<T: Scalar> {
    pub ws: Parameter<T>,
    pub bs: Option<Parameter<T>>,
    pub wg: Parameter<T>,
    pub bg: Option<Parameter<T>>,
}

/// Fastidious inter-attention: one `(S_n, G_n)` pair per decoder level, all
/// derived from the deepest encoder feature.
///
/// `X'₀ = δ(conv3×3/2(X₀))`, `Z₀ = GAP(X'₀)`, then for each level the same
/// pre-activation `W_n Z_{n-1}` yields both `S_n = σ(·)` and the next
/// `Z_n = δ(·)`; the threshold chain runs in parallel with its own weights.
/// The conv is followed by a ReLU and no normalization.
#[derive(Clone, Debug)]
pub struct Fiam<T: Scalar> {
    pub config: FiamConfig,
    pub(crate) conv_w: Parameter<T>,
    pub(crate) conv_b: Parameter<T>,
    pub(crate) levels: Vec<FiamLevel<T>>,
}

impl<T: Scalar> Fiam<T> {
    pub fn new(seed: u64, prefix: &str, config: FiamConfig) -> Result<Self> {
        let c0 = config.in_channels;
        let c1 = config.conv_channels();
        let conv_w = init::kaiming_uniform(seed, &format!("{prefix}.conv.w"), &[c1, c0, 3, 3], c0 * 9)?;
        let conv_b = init::constant(&format!("{prefix}.conv.b"), &[c1], 0.0)?;
        let dims = config.dims();
        let mut levels = Vec::with_capacity(config.level_dims.len());
        for (n, pair) in dims.windows(2).enumerate() {
            let (d_in, d_out) = (pair[0], pair[1]);
            let name = |w: &str| format!("{prefix}.level{}.{w}", n + 1);
            let bias = |w: &str| -> Result<Option<Parameter<T>>> {
                config
                    .bias
                    .then(|| init::constant(&name(w), &[d_out], 0.0))
                    .transpose()
            };
            levels.push(FiamLevel {
                ws: init::kaiming_uniform(seed, &name("ws"), &[d_out, d_in], d_in)?,
                bs: bias("bs")?,
                wg: init::kaiming_uniform(seed, &name("wg"), &[d_out, d_in], d_in)?,
                bg: bias("bg")?,
            });
        }
        Ok(Fiam {
            config,
            conv_w,
            conv_b,
            levels,
        })
    }

    /// `Z₀` for a bottleneck feature map `[N,C₀,H,W]`.
    pub fn squeeze(&self, x0: &Tensor<T>) -> Result<Tensor<T>> {
        if x0.shape().len() != 4 || x0.shape()[1] != self.config.in_channels {
            return Err(dim_err(
                "fiam_forward",
                format!(
                    "expected {} input channels, got shape {:?}",
                    self.config.in_channels,
                    x0.shape()
                ),
            ));
        }
        let conv = ops::conv2d(x0, &self.conv_w.tensor, Some(&self.conv_b.tensor), 2, 1)?;
        ops::global_avg_pool(&ops::relu(&conv))
    }

    /// `[(S₁,G₁), …, (S_L,G_L)]`, deepest decoder level first.
    pub fn forward(&self, x0: &Tensor<T>) -> Result<Vec<ExcitationParams<T>>> {
        let z0 = self.squeeze(x0)?;
        let (mut zs, mut zg) = (z0.clone(), z0);
        let mut out = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let pre_s = ops::linear(&zs, &level.ws.tensor, level.bs.as_ref().map(|p| &p.tensor))?;
            let pre_g = ops::linear(&zg, &level.wg.tensor, level.bg.as_ref().map(|p| &p.tensor))?;
            out.push(ExcitationParams::new(ops::sigmoid(&pre_s), ops::sigmoid(&pre_g))?);
            zs = ops::relu(&pre_s);
            zg = ops::relu(&pre_g);
        }
        Ok(out)
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        let mut out = vec![self.conv_w.clone(), self.conv_b.clone()];
        for l in &self.levels {
            out.push(l.ws.clone());
            out.extend(l.bs.clone());
            out.push(l.wg.clone());
            out.extend(l.bg.clone());
        }
        out
    }

    pub fn threshold_parameters(&self) -> Vec<Parameter<T>> {
        self.levels
            .iter()
            .flat_map(|l| std::iter::once(l.wg.clone()).chain(l.bg.clone()))
            .collect()
    }

    /// Checks that level `n` (1-based, deepest first) excites `channels`.
    pub fn check_level(&self, n: usize, channels: usize) -> Result<()> {
        match self.config.level_dims.get(n.wrapping_sub(1)) {
            Some(&d) if d == channels => Ok(()),
            other => Err(dim_err(
                "fiam_forward",
                format!("level {n} has width {other:?}, decoder feature has {channels} channels"),
            )),
        }
    }
}
