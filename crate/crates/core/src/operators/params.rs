//! Attention weight sets and their checkpoint format.
//!
//! Weights are stored as `f64` matrices whose entries are always exactly
//! representable as `f32`; the checkpoint writes each entry as the shortest
//! decimal string that parses back to the same `f32`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::attention::Matrix;
use crate::error::{Error, Result};
use crate::features::{FITNESS_DIM, SIGMA_DIM};

pub const CHECKPOINT_FORMAT: &str = "lga-params";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Per-dimension diversity features fed to the cross-over operator.
pub const CROSSOVER_FEATURE_DIM: usize = 2;

/// Shape metadata for a weight set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LgaConfig {
    pub d_k: usize,
    pub heads: usize,
    pub d_f: usize,
    pub d_sigma: usize,
    pub d_e: usize,
    pub sampling: bool,
    pub crossover: bool,
}

impl Default for LgaConfig {
    fn default() -> Self {
        Self {
            d_k: 16,
            heads: 1,
            d_f: FITNESS_DIM,
            d_sigma: SIGMA_DIM,
            d_e: CROSSOVER_FEATURE_DIM,
            sampling: false,
            crossover: false,
        }
    }
}

impl LgaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads < 1 {
            return Err(Error::InvalidConfig("attention needs at least one head".into()));
        }
        if self.d_k < 1 {
            return Err(Error::InvalidConfig("d_k must be positive".into()));
        }
        if self.d_f != FITNESS_DIM || self.d_sigma != SIGMA_DIM || self.d_e != CROSSOVER_FEATURE_DIM {
            return Err(Error::InvalidConfig(format!(
                "feature widths are fixed at d_f={FITNESS_DIM}, d_sigma={SIGMA_DIM}, d_e={CROSSOVER_FEATURE_DIM}"
            )));
        }
        Ok(())
    }

    /// Names and shapes of every weight matrix, in canonical order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let (dk, h) = (self.d_k, self.heads);
        let head_name = |base: &str, i: usize| {
            if h == 1 {
                base.to_string()
            } else {
                format!("{base}[{i}]")
            }
        };
        let mut out = Vec::new();
        for i in 0..h {
            out.push((head_name("W_QP", i), self.d_f, dk));
            out.push((head_name("W_KC", i), self.d_f, dk));
            out.push((head_name("W_VC", i), self.d_f, dk));
        }
        if h > 1 {
            out.push(("W_OS".into(), h * dk, dk));
        }
        out.push(("W_QS".into(), dk, dk));
        out.push(("W_KS".into(), self.d_f, dk));
        let dm = self.d_f + self.d_sigma;
        for i in 0..h {
            out.push((head_name("W_QM", i), dm, dk));
            out.push((head_name("W_KM", i), dm, dk));
            out.push((head_name("W_VM", i), dm, dk));
        }
        if h > 1 {
            out.push(("W_OM".into(), h * dk, dk));
        }
        out.push(("W_sigma".into(), dk, 1));
        if self.sampling {
            out.push(("W_Qtilde".into(), self.d_f + 1, dk));
            out.push(("W_Ktilde".into(), self.d_f + 1, dk));
            out.push(("W_Vtilde".into(), self.d_f + 1, 1));
        }
        if self.crossover {
            let dc = self.d_f + self.d_e;
            out.push(("W_QC".into(), dc, dk));
            out.push(("W_KC2".into(), dc, dk));
            out.push(("W_VC2".into(), dc, dk));
            out.push(("W_dX".into(), dk, 1));
        }
        out
    }

    /// Total number of trainable scalars.
    pub fn num_params(&self) -> usize {
        self.layout().iter().map(|(_, r, c)| r * c).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
}

/// Cross-attention selection weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionWeights {
    pub heads: Vec<HeadWeights>,
    /// Head-output projection, present only with more than one head.
    pub out: Option<Matrix>,
    pub query: Matrix,
    pub key: Matrix,
}

/// Self-attention mutation-rate adaptation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MraWeights {
    pub heads: Vec<HeadWeights>,
    pub out: Option<Matrix>,
    pub sigma: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingWeights {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverWeights {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
    pub delta: Matrix,
}

/// The complete set of learned-operator weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LgaParams {
    config: LgaConfig,
    pub selection: SelectionWeights,
    pub mra: MraWeights,
    pub sampling: Option<SamplingWeights>,
    pub crossover: Option<CrossoverWeights>,
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl LgaParams {
    pub fn zeros(config: LgaConfig) -> Result<Self> {
        let n = config.num_params();
        Self::from_flat(config, &vec![0.0; n])
    }

    /// Builds a weight set from a flat vector laid out as in [`LgaConfig::layout`].
    /// Entries are rounded to `f32` precision.
    pub fn from_flat(config: LgaConfig, flat: &[f64]) -> Result<Self> {
        config.validate()?;
        let expected = config.num_params();
        if flat.len() != expected {
            return Err(Error::shape(
                "LgaParams::from_flat",
                format!("expected {expected} values, got {}", flat.len()),
            ));
        }
        let mut offset = 0;
        let mut mats = Vec::new();
        for (_, r, c) in config.layout() {
            let values = flat[offset..offset + r * c].iter().map(|&v| round_f32(v)).collect();
            mats.push(Matrix::from_vec(r, c, values)?);
            offset += r * c;
        }
        Ok(Self::assemble(config, mats))
    }

    fn assemble(config: LgaConfig, mats: Vec<Matrix>) -> Self {
        let h = config.heads;
        let mut it = mats.into_iter();
        let mut next = || it.next().expect("layout length checked by caller");
        let mut heads = Vec::with_capacity(h);
        for _ in 0..h {
            heads.push(HeadWeights { query: next(), key: next(), value: next() });
        }
        let out = (h > 1).then(&mut next);
        let selection = SelectionWeights { heads, out, query: next(), key: next() };
        let mut heads = Vec::with_capacity(h);
        for _ in 0..h {
            heads.push(HeadWeights { query: next(), key: next(), value: next() });
        }
        let out = (h > 1).then(&mut next);
        let mra = MraWeights { heads, out, sigma: next() };
        let sampling = config.sampling.then(|| SamplingWeights { query: next(), key: next(), value: next() });
        let crossover =
            config.crossover.then(|| CrossoverWeights { query: next(), key: next(), value: next(), delta: next() });
        Self { config, selection, mra, sampling, crossover }
    }

    pub fn config(&self) -> &LgaConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.config.num_params()
    }

    /// Every matrix paired with its checkpoint name, in canonical order.
    pub fn named_matrices(&self) -> Vec<(String, &Matrix)> {
        let mut mats: Vec<&Matrix> = Vec::new();
        for hw in &self.selection.heads {
            mats.extend([&hw.query, &hw.key, &hw.value]);
        }
        mats.extend(self.selection.out.iter());
        mats.extend([&self.selection.query, &self.selection.key]);
        for hw in &self.mra.heads {
            mats.extend([&hw.query, &hw.key, &hw.value]);
        }
        mats.extend(self.mra.out.iter());
        mats.push(&self.mra.sigma);
        if let Some(s) = &self.sampling {
            mats.extend([&s.query, &s.key, &s.value]);
        }
        if let Some(c) = &self.crossover {
            mats.extend([&c.query, &c.key, &c.value, &c.delta]);
        }
        self.config.layout().into_iter().map(|(name, _, _)| name).zip(mats).collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.named_matrices().into_iter().flat_map(|(_, m)| m.as_slice().to_vec()).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            format_version: CHECKPOINT_VERSION,
            config: self.config,
            matrices: self
                .named_matrices()
                .into_iter()
                .map(|(name, m)| NamedMatrix {
                    name,
                    rows: m.rows(),
                    cols: m.cols(),
                    values: m.as_slice().iter().map(|&v| (v as f32).to_string()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format `{}`", ckpt.format)));
        }
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        ckpt.config.validate()?;
        let layout = ckpt.config.layout();
        if layout.len() != ckpt.matrices.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} matrices, found {}",
                layout.len(),
                ckpt.matrices.len()
            )));
        }
        let mut mats = Vec::with_capacity(layout.len());
        for ((name, rows, cols), m) in layout.iter().zip(&ckpt.matrices) {
            if &m.name != name || m.rows != *rows || m.cols != *cols {
                return Err(Error::Checkpoint(format!(
                    "expected {name} ({rows}x{cols}), found {} ({}x{})",
                    m.name, m.rows, m.cols
                )));
            }
            let values = m
                .values
                .iter()
                .map(|s| {
                    s.parse::<f32>()
                        .map(f64::from)
                        .map_err(|e| Error::Checkpoint(format!("{name}: bad value `{s}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            mats.push(Matrix::from_vec(*rows, *cols, values).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?);
        }
        Ok(Self::assemble(ckpt.config, mats))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Serialized form of [`LgaParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub config: LgaConfig,
    pub matrices: Vec<NamedMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries as decimal strings.
    pub values: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_parameter_count() {
        // selection: 3 * (3x16) + 16x16 + 3x16; mra: 3 * (5x16) + 16x1
        assert_eq!(LgaConfig::default().num_params(), 704);
        let full = LgaConfig { sampling: true, crossover: true, ..Default::default() };
        assert_eq!(full.num_params(), 704 + (2 * 4 * 16 + 4) + (3 * 5 * 16 + 16));
        let two_heads = LgaConfig { heads: 2, ..Default::default() };
        assert_eq!(two_heads.num_params(), 704 + 144 + 512 + 240 + 512);
    }

    #[test]
    fn layout_and_named_matrices_agree() {
        for cfg in [LgaConfig::default(), LgaConfig { heads: 2, sampling: true, crossover: true, ..Default::default() }]
        {
            let p = LgaParams::zeros(cfg).unwrap();
            let named = p.named_matrices();
            let layout = cfg.layout();
            assert_eq!(named.len(), layout.len());
            for ((n, m), (ln, r, c)) in named.iter().zip(&layout) {
                assert_eq!(n, ln);
                assert_eq!(m.shape(), (*r, *c));
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(LgaParams::from_flat(LgaConfig::default(), &[0.0; 3]).is_err());
        assert!(LgaConfig { heads: 0, ..Default::default() }.validate().is_err());
        let mut ckpt = LgaParams::zeros(LgaConfig::default()).unwrap().to_checkpoint();
        ckpt.format_version = 99;
        assert!(LgaParams::from_checkpoint(&ckpt).is_err());
        let mut ckpt = LgaParams::zeros(LgaConfig::default()).unwrap().to_checkpoint();
        ckpt.matrices[0].values[0] = "nope".into();
        assert!(LgaParams::from_checkpoint(&ckpt).is_err());
        let mut ckpt = LgaParams::zeros(LgaConfig::default()).unwrap().to_checkpoint();
        ckpt.matrices.swap(0, 1);
        assert!(LgaParams::from_checkpoint(&ckpt).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn checkpoint_round_trip_is_bit_exact(
            bits in prop::collection::vec(any::<u32>(), 704),
        ) {
            let values: Vec<f64> = bits
                .into_iter()
                .map(f32::from_bits)
                .map(|v| if v.is_finite() { v as f64 } else { 0.0 })
                .collect();
            let p = LgaParams::from_flat(LgaConfig::default(), &values).unwrap();
            let back = LgaParams::from_json(&p.to_json().unwrap()).unwrap();
            let a: Vec<u32> = p.to_flat().iter().map(|&v| (v as f32).to_bits()).collect();
            let b: Vec<u32> = back.to_flat().iter().map(|&v| (v as f32).to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(p, back);
        }
    }
}
