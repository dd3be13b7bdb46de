use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::ArchitectureSpec;
use crate::data::{load_voc_dir, synth_orange, AugmentConfig, Palette, SegmentationSample};
use crate::error::{Error, Result};
use crate::train::TrainConfig;

/// A dataset: generated on the fly or read from a VOC-style layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic { count: usize, size: usize, seed: u64 },
    Voc { images: PathBuf, masks: PathBuf },
}

impl DatasetSpec {
    /// Relative VOC paths resolve against `base`.
    pub fn load(&self, palette: &Palette, base: &Path) -> Result<Vec<SegmentationSample>> {
        match self {
            DatasetSpec::Synthetic { count, size, seed } => synth_orange(*seed, *count, *size),
            DatasetSpec::Voc { images, masks } => load_voc_dir(&base.join(images), &base.join(masks), palette),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: DatasetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<DatasetSpec>,
    #[serde(default)]
    pub palette: Palette,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/fanet")
}

/// Everything one run needs. The resolved copy archived next to the run's
/// outputs reproduces it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds parameter initialization, shuffling and augmentation.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub architecture: ArchitectureSpec,
    #[serde(default = "TrainConfig::desk")]
    pub train: TrainConfig,
    /// Online augmentation; disabled when the table is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentConfig>,
    pub data: DataConfig,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    Error::Config(format!("{origin}:{line}:{col}: {msg}"))
                }
                None => Error::Config(format!("{origin}: {msg}")),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.train.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
            let padded = self.architecture.input_size + 2 * a.crop_padding;
            if a.crop_size > padded {
                return Err(Error::Config(format!(
                    "augment.crop_size {} exceeds the padded input extent {padded}",
                    a.crop_size
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// Writes the resolved config to `<output_dir>/config.toml`.
    pub fn archive(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir)?;
        let p = self.output_dir.join("config.toml");
        fs::write(&p, self.to_toml())?;
        Ok(p)
    }
}
