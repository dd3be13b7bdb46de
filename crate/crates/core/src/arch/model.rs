use std::cell::RefCell;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::spec::ArchitectureSpec;
use crate::attention::{fastidious_excite, ExcitationParams, Fiam, FiamConfig, Fsam, FsamConfig, SeBlock};
use crate::blocks::{skip_concat, Buffer, DoubleConv, DownConv, OutConv, UpConv};
use crate::error::{dim_err, Error, Result};
use crate::ops::Mode;
use crate::tensor::{Parameter, Scalar, Tensor};

/// Which head produced an excitation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteKind {
    Fiam,
    Fsam,
}

/// Identifies one excitation site: `Merge-Conv{n}_{C}` for FIAM levels and
/// `FSAM{n}_{C}` for self-attention heads, `n` counted from the deepest
/// decoder level.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteId {
    pub kind: SiteKind,
    pub level: usize,
    pub channels: usize,
}

impl SiteId {
    pub fn label(&self) -> String {
        match self.kind {
            SiteKind::Fiam => format!("Merge-Conv{}_{}", self.level, self.channels),
            SiteKind::Fsam => format!("FSAM{}_{}", self.level, self.channels),
        }
    }

    /// Accepts the label itself or the short forms `fiam3` / `fsam3`.
    pub fn matches(&self, query: &str) -> bool {
        let q = query.to_ascii_lowercase();
        let short = match self.kind {
            SiteKind::Fiam => format!("fiam{}", self.level),
            SiteKind::Fsam => format!("fsam{}", self.level),
        };
        q == self.label().to_ascii_lowercase() || q == short
    }
}

/// Input, output and parameters seen at one excitation site during a pass.
#[derive(Clone, Debug)]
pub struct SiteRecord<T: Scalar> {
    pub site: SiteId,
    pub input: Tensor<T>,
    pub output: Tensor<T>,
    pub params: ExcitationParams<T>,
}

/// An assembled network with its parameter registry.
///
/// Not `Clone`: blocks hold shared tensor handles. Use
/// [`Model::duplicate`] for an independent copy.
#[derive(Debug)]
pub struct Model<T: Scalar> {
    pub spec: ArchitectureSpec,
    inc: DoubleConv<T>,
    downs: Vec<DownConv<T>>,
    ups: Vec<UpConv<T>>,
    merges: Vec<DoubleConv<T>>,
    outc: OutConv<T>,
    fsams: Vec<Fsam<T>>,
    ses: Vec<SeBlock<T>>,
    fiam: Option<Fiam<T>>,
    excitation_enabled: bool,
}

impl<T: Scalar> Model<T> {
    /// Builds the network described by `spec`. Parameters are initialized
    /// from per-name streams of `seed`, so shared backbone tensors are
    /// identical across variants.
    pub fn build(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let enc = spec.encoder_widths();
        let depth = spec.depth;
        let inc = DoubleConv::new(seed, "inc", 3, enc[0])?;
        let downs = (1..=depth)
            .map(|i| DownConv::new(seed, &format!("down{i}"), enc[i - 1], enc[i]))
            .collect::<Result<Vec<_>>>()?;
        let mut ups = Vec::with_capacity(depth);
        let mut merges = Vec::with_capacity(depth);
        for n in 1..=depth {
            let (wide, narrow) = (enc[depth - n + 1], enc[depth - n]);
            ups.push(UpConv::new(seed, &format!("up{n}"), wide, narrow)?);
            merges.push(DoubleConv::new(seed, &format!("merge{n}"), 2 * narrow, narrow)?);
        }
        let outc = OutConv::new(seed, "outc", enc[0], spec.num_classes)?;
        let decoder = spec.decoder_widths();
        let fsams = if spec.variant.has_fsam() {
            decoder
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    Fsam::new(
                        seed,
                        &format!("fsam{}", i + 1),
                        FsamConfig {
                            channels: c,
                            reduction: spec.fsam_r,
                            bias: spec.fc_bias,
                        },
                    )
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let ses = if spec.variant.has_se() {
            decoder
                .iter()
                .enumerate()
                .map(|(i, &c)| SeBlock::new(seed, &format!("se{}", i + 1), c, spec.fsam_r, spec.fc_bias))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let fiam = if spec.variant.has_fiam() {
            let fiam = Fiam::new(
                seed,
                "fiam",
                FiamConfig {
                    in_channels: spec.bottleneck_width(),
                    factor: spec.fiam_factor,
                    level_dims: decoder.clone(),
                    bias: spec.fc_bias,
                },
            )?;
            for (n, merge) in merges.iter().enumerate() {
                fiam.check_level(n + 1, merge.stage1.out_channels())?;
            }
            Some(fiam)
        } else {
            None
        };
        let model = Model {
            spec: spec.clone(),
            inc,
            downs,
            ups,
            merges,
            outc,
            fsams,
            ses,
            fiam,
            excitation_enabled: true,
        };
        let mut seen = HashSet::new();
        for name in model
            .parameters()
            .into_iter()
            .map(|p| p.name)
            .chain(model.buffers().into_iter().map(|b| b.0))
        {
            if !seen.insert(name.clone()) {
                return Err(Error::Config(format!("duplicate parameter name {name}")));
            }
        }
        Ok(model)
    }

    /// Every trainable tensor in registration order.
    pub fn parameters(&self) -> Vec<Parameter<T>> {
        let mut p = self.inc.parameters();
        for d in &self.downs {
            p.extend(d.parameters());
        }
        for (u, m) in self.ups.iter().zip(&self.merges) {
            p.extend(u.parameters());
            p.extend(m.parameters());
        }
        p.extend(self.outc.parameters());
        if let Some(f) = &self.fiam {
            p.extend(f.parameters());
        }
        for f in &self.fsams {
            p.extend(f.parameters());
        }
        for s in &self.ses {
            p.extend(s.parameters());
        }
        p
    }

    /// Batch-norm running statistics in registration order.
    pub fn buffers(&self) -> Vec<Buffer<T>> {
        let mut b = self.inc.buffers();
        for d in &self.downs {
            b.extend(d.buffers());
        }
        for (u, m) in self.ups.iter().zip(&self.merges) {
            b.extend(u.buffers());
            b.extend(m.buffers());
        }
        b
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn parameter(&self, name: &str) -> Option<Parameter<T>> {
        self.parameters().into_iter().find(|p| p.name == name)
    }

    /// Weights of the threshold branches (FSAM `W1g`/`W2g`, FIAM `Wₙᵍ`).
    pub fn threshold_parameters(&self) -> Vec<Parameter<T>> {
        let mut p: Vec<_> = self.fsams.iter().flat_map(Fsam::threshold_parameters).collect();
        if let Some(f) = &self.fiam {
            p.extend(f.threshold_parameters());
        }
        p
    }

    pub fn fiam(&self) -> Option<&Fiam<T>> {
        self.fiam.as_ref()
    }

    pub fn fsams(&self) -> &[Fsam<T>] {
        &self.fsams
    }

    pub fn zero_grad(&self) {
        for p in self.parameters() {
            p.tensor.zero_grad();
        }
    }

    /// With excitation disabled, every attention site is skipped and the
    /// network computes the plain backbone.
    pub fn set_excitation_enabled(&mut self, enabled: bool) {
        self.excitation_enabled = enabled;
    }

    /// Excitation sites in forward order.
    pub fn sites(&self) -> Vec<SiteId> {
        let mut out = Vec::new();
        for (n, c) in self.spec.decoder_widths().into_iter().enumerate() {
            if self.fiam.is_some() {
                out.push(SiteId { kind: SiteKind::Fiam, level: n + 1, channels: c });
            }
            if !self.fsams.is_empty() {
                out.push(SiteId { kind: SiteKind::Fsam, level: n + 1, channels: c });
            }
        }
        out
    }

    pub fn forward(&self, images: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.run(images, mode, None)
    }

    /// Forward pass that also returns what every excitation site saw.
    pub fn forward_traced(&self, images: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Vec<SiteRecord<T>>)> {
        let trace = RefCell::new(Vec::new());
        let logits = self.run(images, mode, Some(&trace))?;
        Ok((logits, trace.into_inner()))
    }

    fn run(
        &self,
        images: &Tensor<T>,
        mode: Mode,
        trace: Option<&RefCell<Vec<SiteRecord<T>>>>,
    ) -> Result<Tensor<T>> {
        let s = self.spec.input_size;
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != 3 || shape[2] != s || shape[3] != s {
            return Err(dim_err(
                "forward",
                format!("expected images [N,3,{s},{s}], got {shape:?}"),
            ));
        }
        let cfg = (self.spec.grad_mode, self.spec.tau);
        let mut skips = vec![self.inc.forward(images, mode)?];
        for down in &self.downs {
            let x = down.forward(skips.last().expect("non-empty"), mode)?;
            skips.push(x);
        }
        let mut x = skips.pop().expect("bottleneck");
        let fiam_params = match (&self.fiam, self.excitation_enabled) {
            (Some(f), true) => Some(f.forward(&x)?),
            _ => None,
        };
        let excite = |x: Tensor<T>, params: ExcitationParams<T>, site: SiteId| -> Result<Tensor<T>> {
            let y = fastidious_excite(&x, &params, cfg.0, cfg.1)?;
            if let Some(t) = trace {
                t.borrow_mut().push(SiteRecord { site, input: x, output: y.clone(), params });
            }
            Ok(y)
        };
        for (i, (up, merge)) in self.ups.iter().zip(&self.merges).enumerate() {
            let level = i + 1;
            let enc = skips.pop().expect("one skip per level");
            let joined = skip_concat(&up.forward(&x, mode)?, &enc)?;
            let channels = merge.out_channels();
            x = merge.forward_attached(
                &joined,
                mode,
                |mid| match &fiam_params {
                    Some(p) => excite(mid, p[i].clone(), SiteId { kind: SiteKind::Fiam, level, channels }),
                    None => Ok(mid),
                },
                |out| {
                    if !self.excitation_enabled {
                        return Ok(out);
                    }
                    if let Some(fsam) = self.fsams.get(i) {
                        let p = fsam.forward(&out)?;
                        excite(out, p, SiteId { kind: SiteKind::Fsam, level, channels })
                    } else if let Some(se) = self.ses.get(i) {
                        se.forward(&out)
                    } else {
                        Ok(out)
                    }
                },
            )?;
        }
        self.outc.forward(&x)
    }

    /// Per-pixel argmax of the logits, `[N·H·W]` class ids.
    pub fn predict(&self, images: &Tensor<T>) -> Result<Vec<u8>> {
        let logits = crate::tensor::no_grad(|| self.forward(images, Mode::Eval))?;
        Ok(argmax_classes(&logits))
    }

    /// Independent copy with the same spec, parameters and buffers.
    pub fn duplicate(&self) -> Result<Self> {
        let mut copy = Model::build(&self.spec, 0)?;
        copy.copy_matching_from(self);
        copy.excitation_enabled = self.excitation_enabled;
        Ok(copy)
    }

    /// Copies every same-named, same-shaped parameter and buffer from
    /// `other`. Returns the number of tensors copied.
    pub fn copy_matching_from<U: Scalar>(&mut self, other: &Model<U>) -> usize {
        let theirs: Vec<(String, Tensor<U>)> = other
            .parameters()
            .into_iter()
            .map(|p| (p.name, p.tensor))
            .chain(other.buffers())
            .collect();
        let mut copied = 0;
        for (name, mine) in self
            .parameters()
            .into_iter()
            .map(|p| (p.name, p.tensor))
            .chain(self.buffers())
        {
            if let Some((_, t)) = theirs.iter().find(|(n, _)| *n == name) {
                if t.shape() == mine.shape() {
                    let vals: Vec<T> = t.data().iter().map(|v| T::of(v.as_f64())).collect();
                    *mine.data_mut() = vals;
                    copied += 1;
                }
            }
        }
        copied
    }
}

pub fn argmax_classes<T: Scalar>(logits: &Tensor<T>) -> Vec<u8> {
    let s = logits.shape();
    let (n, k, hw) = (s[0], s[1], s[2] * s[3]);
    let d = logits.data();
    let mut out = Vec::with_capacity(n * hw);
    for b in 0..n {
        for p in 0..hw {
            let mut best = 0;
            for c in 1..k {
                if d[(b * k + c) * hw + p] > d[(b * k + best) * hw + p] {
                    best = c;
                }
            }
            out.push(best as u8);
        }
    }
    out
}
