//! Deterministic synthetic rating datasets with a known generating rule,
//! used as ground truth for the end-to-end training checks.

use std::collections::BTreeMap;

use crate::data::{Dataset, RatingRecord, SchemaDecl};
use crate::error::{Error, Result};
use crate::tensor::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticRule {
    /// overall = clamp(round(mean(criteria) + noise)); the criteria carry the
    /// full signal, group/item/context carry none.
    CriteriaMean,
    /// As CriteriaMean, additionally shifted -1/+1 by the first context's
    /// value (lower half of its domain shifts down, upper half up).
    ContextShift,
}

impl SyntheticRule {
    pub fn parse(s: &str) -> Result<SyntheticRule> {
        match s {
            "criteria_mean" => Ok(SyntheticRule::CriteriaMean),
            "context_shift" => Ok(SyntheticRule::ContextShift),
            other => Err(Error::Config(format!("unknown synthetic rule `{}`", other))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n_groups: usize,
    pub n_items: usize,
    pub n_records: usize,
    /// One entry per context variable: the number of distinct values.
    pub context_cards: Vec<usize>,
    pub criteria: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub rule: SyntheticRule,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_groups: 50,
            n_items: 30,
            n_records: 1000,
            context_cards: vec![4, 2, 2],
            criteria: 3,
            noise_std: 0.25,
            seed: 0,
            rule: SyntheticRule::CriteriaMean,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.n_items == 0 || self.n_records == 0 {
            return Err(Error::Config("synthetic counts must be positive".into()));
        }
        if self.criteria == 0 {
            return Err(Error::Config("synthetic data needs at least one criterion".into()));
        }
        if self.context_cards.iter().any(|&c| c == 0) {
            return Err(Error::Config("context cardinalities must be positive".into()));
        }
        if self.rule == SyntheticRule::ContextShift && self.context_cards.is_empty() {
            return Err(Error::Config("context_shift rule needs at least one context".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Generate a dataset on the [1,5] scale, deterministic in the seed.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let decl = SchemaDecl {
        group_col: "group_id".into(),
        item_col: "item_id".into(),
        context_cols: (1..=cfg.context_cards.len()).map(|i| format!("ctx{}", i)).collect(),
        criteria_cols: (1..=cfg.criteria).map(|i| format!("cr{}", i)).collect(),
        overall_col: "overall".into(),
        members_col: None,
        group_size_col: None,
        size_bucket: false,
        scale: (1.0, 5.0),
    };
    let mut rng = SeededRng::derive(cfg.seed, 0x53594E54);
    let mut records = Vec::with_capacity(cfg.n_records);
    for _ in 0..cfg.n_records {
        let group_id = format!("g{}", rng.below(cfg.n_groups));
        let item_id = format!("i{}", rng.below(cfg.n_items));
        let mut contexts = BTreeMap::new();
        let mut first_ctx_value = 0usize;
        for (c, (&card, name)) in cfg.context_cards.iter().zip(&decl.context_cols).enumerate() {
            let v = rng.below(card);
            if c == 0 {
                first_ctx_value = v;
            }
            contexts.insert(name.clone(), format!("{}_v{}", name, v));
        }
        let mut criteria = BTreeMap::new();
        let mut sum = 0.0;
        for name in &decl.criteria_cols {
            let level = rng.below(5) as i64 + 1;
            sum += level as f64;
            criteria.insert(name.clone(), level);
        }
        let mean = sum / cfg.criteria as f64;
        let shift = match cfg.rule {
            SyntheticRule::CriteriaMean => 0.0,
            SyntheticRule::ContextShift => {
                if 2 * first_ctx_value < cfg.context_cards[0] {
                    -1.0
                } else {
                    1.0
                }
            }
        };
        let raw = mean + shift + rng.normal(0.0, 1.0) * cfg.noise_std;
        let overall = raw.round().clamp(1.0, 5.0);
        records.push(RatingRecord {
            group_id,
            item_id,
            contexts,
            criteria,
            overall,
            members: None,
            group_size: None,
        });
    }
    Ok(Dataset { records, decl })
}
