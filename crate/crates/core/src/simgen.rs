//! Synthetic family genotype/phenotype generator and selection scoring.
//!
//! Haplotypes are built block by block. Within a block every SNP copies a
//! shared Bernoulli(maf) draw with probability `√ρ` and otherwise takes a
//! fresh Bernoulli(maf), which gives pairwise correlation exactly `ρ`
//! between SNPs of the block. Blocks are independent. Genotypes are sums
//! of two haplotypes; each child inherits one uniformly chosen haplotype
//! from each parent, MZ co-twins sharing the same pair.

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Family};
use crate::error::{Error, Result};
use crate::pedigree::{ace_covariance, build_kinship, AceVarianceComponents, ChildType, PedigreeSpec};
use crate::rng::{substream, tag};

/// Correlated SNP blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockSpec {
    pub sizes: Vec<usize>,
    pub mafs: Vec<f64>,
    pub within_corr: f64,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self { sizes: vec![6, 4, 6, 4, 30], mafs: vec![0.2, 0.4, 0.4, 0.25, 0.25], within_corr: 0.7 }
    }
}

impl BlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.len() != self.mafs.len() {
            return Err(Error::InvalidConfig("block sizes and MAFs must be nonempty and equally long".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidConfig("block sizes must be positive".into()));
        }
        if self.mafs.iter().any(|&f| !(f > 0.0 && f <= 0.5)) {
            return Err(Error::InvalidConfig("block MAFs must lie in (0, 0.5]".into()));
        }
        if !(0.0..1.0).contains(&self.within_corr) {
            return Err(Error::InvalidConfig("within-block correlation must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn p_g(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.sizes
            .iter()
            .map(|&n| {
                let r = start..start + n;
                start += n;
                r
            })
            .collect()
    }

    pub fn block_of(&self, snp: usize) -> Option<usize> {
        self.ranges().iter().position(|r| r.contains(&snp))
    }

    pub fn maf_of(&self, snp: usize) -> Option<f64> {
        self.block_of(snp).map(|b| self.mafs[b])
    }

    /// First SNP of each of the first four blocks (all but the last block
    /// when there are fewer than five).
    pub fn default_causal(&self) -> Vec<usize> {
        let n = self.sizes.len();
        let causal_blocks = if n >= 5 { 4 } else { n.saturating_sub(1).max(1) };
        self.ranges().iter().take(causal_blocks).map(|r| r.start).collect()
    }
}

/// How a per-SNP heritability `h` (percent) becomes an effect size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectScaling {
    /// `β = √(h / (100·σ²_total·2·maf·(1 − maf)))`.
    #[default]
    TotalVarianceDivided,
    /// `β = √(h / (100·2·maf·(1 − maf)))`: the SNP's genetic variance is
    /// `h/100`, i.e. `h/σ²_total` percent of the error variance.
    PercentOfErrorVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Number of families.
    pub m: usize,
    pub blocks: BlockSpec,
    /// 0-based causal SNP indices; `None` uses [`BlockSpec::default_causal`].
    pub causal: Option<Vec<usize>>,
    /// Per-SNP heritability in percent.
    pub h: f64,
    pub vc: AceVarianceComponents,
    pub family_type: ChildType,
    pub effect_scaling: EffectScaling,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            m: 250,
            blocks: BlockSpec::default(),
            causal: None,
            h: 10.0,
            vc: AceVarianceComponents::default(),
            family_type: ChildType::Mz,
            effect_scaling: EffectScaling::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("family count m must be at least 1".into()));
        }
        if !(self.h >= 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidConfig(format!("heritability must be nonnegative, got {}", self.h)));
        }
        self.blocks.validate()?;
        self.vc.validate()?;
        let p_g = self.blocks.p_g();
        if let Some(bad) = self.causal_indices().iter().find(|&&j| j >= p_g) {
            return Err(Error::InvalidConfig(format!("causal index {bad} beyond {p_g} SNPs")));
        }
        Ok(())
    }

    pub fn causal_indices(&self) -> Vec<usize> {
        let mut c = self.causal.clone().unwrap_or_else(|| self.blocks.default_causal());
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Ground truth behind a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub causal_indices: Vec<usize>,
    pub h: f64,
    pub beta: DVector<f64>,
    pub causal_blocks: Vec<usize>,
    /// Last block without causal SNPs, if any.
    pub noise_block: Option<usize>,
}

impl TruthSpec {
    pub fn new(causal_indices: Vec<usize>, h: f64, beta: DVector<f64>, blocks: &BlockSpec) -> Self {
        let mut causal_blocks: Vec<usize> = causal_indices.iter().filter_map(|&j| blocks.block_of(j)).collect();
        causal_blocks.sort_unstable();
        causal_blocks.dedup();
        let noise_block = (0..blocks.sizes.len()).rev().find(|b| !causal_blocks.contains(b));
        Self { causal_indices, h, beta, causal_blocks, noise_block }
    }

    /// Causal SNPs with a nonzero effect.
    pub fn active(&self) -> Vec<usize> {
        self.causal_indices.iter().copied().filter(|&j| self.beta[j] != 0.0).collect()
    }
}

/// Effect size for each causal SNP from its MAF.
pub fn effect_sizes(h: f64, vc: &AceVarianceComponents, mafs: &[f64], scaling: EffectScaling) -> Result<DVector<f64>> {
    if !(h >= 0.0) {
        return Err(Error::InvalidConfig(format!("heritability must be nonnegative, got {h}")));
    }
    let scale = match scaling {
        EffectScaling::TotalVarianceDivided => 100.0 * vc.total(),
        EffectScaling::PercentOfErrorVariance => 100.0,
    };
    mafs.iter()
        .map(|&f| {
            let het = 2.0 * f * (1.0 - f);
            if !(het > 0.0) {
                return Err(Error::Numerical(format!("MAF {f} gives zero genotype variance")));
            }
            Ok((h / (scale * het)).sqrt())
        })
        .collect::<Result<Vec<_>>>()
        .map(DVector::from_vec)
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

/// One haplotype across all blocks.
pub fn simulate_haplotype<R: Rng + ?Sized>(blocks: &BlockSpec, rng: &mut R) -> Vec<u8> {
    let copy_prob = blocks.within_corr.sqrt();
    let mut hap = Vec::with_capacity(blocks.p_g());
    for (&size, &maf) in blocks.sizes.iter().zip(&blocks.mafs) {
        let shared = bernoulli(rng, maf);
        for _ in 0..size {
            let copy = rng.random::<f64>() < copy_prob;
            let fresh = bernoulli(rng, maf);
            hap.push(if copy { shared } else { fresh });
        }
    }
    hap
}

fn genotype_row(a: &[u8], b: &[u8]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x + y)).collect()
}

/// Pedigrees and genotype matrices for `config.m` nuclear families.
pub fn simulate_genotypes<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Vec<(PedigreeSpec, DMatrix<f64>)>> {
    config.validate()?;
    let blocks = &config.blocks;
    let p = blocks.p_g();
    let width = config.m.to_string().len().max(4);
    (0..config.m)
        .map(|i| {
            let ped = PedigreeSpec::nuclear(format!("F{:0width$}", i + 1), config.family_type);
            let parents: [[Vec<u8>; 2]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| simulate_haplotype(blocks, rng)));
            let inherit = |rng: &mut R| {
                let a = &parents[0][rng.random_range(0..2)];
                let b = &parents[1][rng.random_range(0..2)];
                genotype_row(a, b)
            };
            let (c1, c2) = match config.family_type {
                ChildType::Mz => {
                    let g = inherit(rng);
                    (g.clone(), g)
                }
                ChildType::Dz | ChildType::BioSib => (inherit(rng), inherit(rng)),
                ChildType::Adopted => {
                    let mut unrelated = || genotype_row(&simulate_haplotype(blocks, rng), &simulate_haplotype(blocks, rng));
                    (unrelated(), unrelated())
                }
            };
            let rows = [genotype_row(&parents[0][0], &parents[0][1]), genotype_row(&parents[1][0], &parents[1][1]), c1, c2];
            let g = DMatrix::from_fn(4, p, |r, c| rows[r][c]);
            Ok((ped, g))
        })
        .collect()
}

/// Genotypes plus phenotypes `yᵢ = Gᵢβ + εᵢ`, `εᵢ ~ N(0, Vᵢ)`.
pub fn simulate_dataset<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<(Dataset, TruthSpec)> {
    config.validate()?;
    let causal = config.causal_indices();
    let mafs: Vec<f64> = causal.iter().map(|&j| config.blocks.maf_of(j).expect("validated index")).collect();
    let effects = effect_sizes(config.h, &config.vc, &mafs, config.effect_scaling)?;
    let p = config.blocks.p_g();
    let mut beta = DVector::zeros(p);
    for (&j, &b) in causal.iter().zip(effects.iter()) {
        beta[j] = b;
    }

    let genotypes = simulate_genotypes(config, rng)?;
    let mut chol_cache: Vec<(DMatrix<f64>, DMatrix<f64>)> = Vec::new();
    let mut families = Vec::with_capacity(genotypes.len());
    for (ped, g) in genotypes {
        let phi = build_kinship(&ped)?;
        let l = match chol_cache.iter().find(|(p, _)| p == phi.as_matrix()) {
            Some((_, l)) => l.clone(),
            None => {
                let v = ace_covariance(&phi, &config.vc)?;
                let l = v
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("simulation covariance is not positive definite".into()))?
                    .unpack();
                chol_cache.push((phi.as_matrix().clone(), l.clone()));
                l
            }
        };
        let n = ped.len();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &g * &beta + l * z;
        families.push(Family { pedigree: ped, phenotype: y, genotypes: g, covariates: DMatrix::zeros(n, 0) });
    }
    let snp_ids = (1..=p).map(|j| format!("snp{j}")).collect();
    let dataset = Dataset::new(families, snp_ids, Vec::new())?;
    Ok((dataset, TruthSpec::new(causal, config.h, beta, &config.blocks)))
}

/// Independent training and test datasets for one replication.
pub fn simulate_replication(config: &SimConfig, replication: u64) -> Result<(Dataset, Dataset, TruthSpec)> {
    let mut train_rng = substream(config.seed, &[tag::SIM_TRAIN, replication]);
    let mut test_rng = substream(config.seed, &[tag::SIM_TEST, replication]);
    let (train, truth) = simulate_dataset(config, &mut train_rng)?;
    let (test, _) = simulate_dataset(config, &mut test_rng)?;
    Ok((train, test, truth))
}

/// Strict and block-relaxed true-positive / true-negative rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Absent when there are no causal SNPs.
    pub tp: Option<f64>,
    pub tn: f64,
    pub rtp: Option<f64>,
    pub rtn: f64,
}

pub fn score_selection(selected: &[usize], truth: &TruthSpec, blocks: &BlockSpec) -> Result<Metrics> {
    let p = blocks.p_g();
    if let Some(bad) = selected.iter().find(|&&j| j >= p) {
        return Err(Error::Structural(format!("selected index {bad} beyond {p} SNPs")));
    }
    let chosen: BTreeSet<usize> = selected.iter().copied().collect();
    let causal: BTreeSet<usize> = truth.active().into_iter().collect();
    let ranges = blocks.ranges();

    let tp = (!causal.is_empty()).then(|| causal.intersection(&chosen).count() as f64 / causal.len() as f64);
    let noncausal = p - causal.len();
    let tn = if noncausal == 0 {
        1.0
    } else {
        (0..p).filter(|j| !causal.contains(j) && !chosen.contains(j)).count() as f64 / noncausal as f64
    };
    let active_blocks: BTreeSet<usize> = causal.iter().filter_map(|&j| blocks.block_of(j)).collect();
    let rtp = (!active_blocks.is_empty()).then(|| {
        active_blocks
            .iter()
            .filter(|&&b| chosen.iter().any(|j| ranges[b].contains(j)))
            .count() as f64
            / active_blocks.len() as f64
    });
    let rtn = match truth.noise_block {
        Some(b) => ranges[b].clone().filter(|j| !chosen.contains(j)).count() as f64 / ranges[b].len() as f64,
        None => 1.0,
    };
    Ok(Metrics { tp, tn, rtp, rtn })
}
