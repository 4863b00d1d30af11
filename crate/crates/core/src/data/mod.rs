//! Ratings data pipeline: schema declaration, CSV ingestion, vocabularies,
//! deterministic splits, criteria imputation and synthetic datasets.

mod io;
mod synthetic;

pub use io::{load_ratings_csv, write_ratings_csv, SchemaDecl};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticRule};

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::model::{EncodedExample, FieldDef, FieldKind, FieldSchema};
use crate::tensor::SeededRng;

/// Pseudo-context injected by the optional group-size bucket switch.
pub const SIZE_BUCKET_FIELD: &str = "SizeBucket";

/// One group-item interaction row.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub group_id: String,
    pub item_id: String,
    pub contexts: BTreeMap<String, String>,
    pub criteria: BTreeMap<String, i64>,
    pub overall: f64,
    pub members: Option<Vec<String>>,
    pub group_size: Option<usize>,
}

/// Loaded ratings plus the declaration they were parsed under.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<RatingRecord>,
    pub decl: SchemaDecl,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scale(&self) -> (f64, f64) {
        self.decl.scale
    }

    /// Order-sensitive FNV-1a digest of the record contents; used to verify
    /// that paired experiment runs really saw identical splits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        };
        for r in &self.records {
            eat(r.group_id.as_bytes());
            eat(r.item_id.as_bytes());
            for (k, v) in &r.contexts {
                eat(k.as_bytes());
                eat(v.as_bytes());
            }
            for (k, v) in &r.criteria {
                eat(k.as_bytes());
                eat(&v.to_le_bytes());
            }
            eat(&r.overall.to_le_bytes());
        }
        h
    }
}

/// Token <-> index map for one field. Real tokens get contiguous indices
/// starting at 1; index 0 is the reserved unknown-token slot, so the
/// embedding table for this field has `distinct() + 1` rows.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens<'a>(tokens: impl Iterator<Item = &'a str>) -> Vocab {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            if !v.index.contains_key(t) {
                v.tokens.push(t.to_string());
                v.index.insert(t.to_string(), v.tokens.len());
            }
        }
        v
    }

    /// Index for a token; unknown tokens map to the reserved 0.
    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    /// Token for an index (>= 1). Index 0 is the unknown slot.
    pub fn token(&self, index: usize) -> Option<&str> {
        if index == 0 {
            None
        } else {
            self.tokens.get(index - 1).map(|s| s.as_str())
        }
    }

    /// Number of distinct real tokens (excluding the unknown slot).
    pub fn distinct(&self) -> usize {
        self.tokens.len()
    }

    /// Embedding rows needed: distinct tokens plus the unknown slot.
    pub fn table_size(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Per-field vocabularies built from training rows only, in first-occurrence
/// file order. Criteria use the fixed integer levels of the rating scale.
#[derive(Debug, Clone)]
pub struct Vocabularies {
    pub group: Vocab,
    pub item: Vocab,
    /// (context name, vocab) in declaration order.
    pub contexts: Vec<(String, Vocab)>,
    pub criteria_names: Vec<String>,
    pub criteria_levels: Vec<i64>,
    pub scale: (f64, f64),
}

/// Build vocabularies from the training split. Context domains are open
/// vocabularies; criteria levels are the fixed scale levels.
pub fn build_vocabs(train: &Dataset) -> Result<Vocabularies> {
    if train.is_empty() {
        return Err(Error::Dataset("cannot build vocabularies from an empty dataset".into()));
    }
    let group = Vocab::from_tokens(train.records.iter().map(|r| r.group_id.as_str()));
    let item = Vocab::from_tokens(train.records.iter().map(|r| r.item_id.as_str()));
    let mut contexts = Vec::new();
    for name in train.decl.context_names() {
        let vocab = Vocab::from_tokens(
            train
                .records
                .iter()
                .filter_map(|r| r.contexts.get(&name).map(|s| s.as_str())),
        );
        contexts.push((name, vocab));
    }
    let (lo, hi) = train.decl.scale;
    let criteria_levels: Vec<i64> = (lo.ceil() as i64..=hi.floor() as i64).collect();
    Ok(Vocabularies {
        group,
        item,
        contexts,
        criteria_names: train.decl.criteria_cols.clone(),
        criteria_levels,
        scale: train.decl.scale,
    })
}

impl Vocabularies {
    /// Full field schema in canonical order: group, item, contexts in
    /// declaration order, criteria in declaration order.
    pub fn full_schema(&self) -> Result<FieldSchema> {
        let mut fields = vec![
            FieldDef {
                name: "group".into(),
                kind: FieldKind::Group,
                vocab_size: self.group.table_size(),
            },
            FieldDef {
                name: "item".into(),
                kind: FieldKind::Item,
                vocab_size: self.item.table_size(),
            },
        ];
        for (name, vocab) in &self.contexts {
            fields.push(FieldDef {
                name: name.clone(),
                kind: FieldKind::Context,
                vocab_size: vocab.table_size(),
            });
        }
        for name in &self.criteria_names {
            fields.push(FieldDef {
                name: name.clone(),
                kind: FieldKind::Criterion,
                vocab_size: self.criteria_levels.len() + 1,
            });
        }
        FieldSchema::new(fields)
    }

    pub fn context(&self, name: &str) -> Option<&Vocab> {
        self.contexts
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    /// Vocab index for an integer criterion level (1-based over the scale
    /// levels); out-of-scale levels map to the unknown slot 0.
    pub fn criterion_index(&self, level: i64) -> usize {
        self.criteria_levels
            .iter()
            .position(|&l| l == level)
            .map(|p| p + 1)
            .unwrap_or(0)
    }
}

/// Map one record's active fields to vocabulary indices. Unknown tokens go
/// to the reserved index 0; fields the record is missing are encode errors.
pub fn encode_record(
    r: &RatingRecord,
    vocabs: &Vocabularies,
    schema: &FieldSchema,
) -> Result<EncodedExample> {
    let mut indices = Vec::with_capacity(schema.len());
    for f in schema.fields() {
        let idx = match f.kind {
            FieldKind::Group => vocabs.group.index_of(&r.group_id),
            FieldKind::Item => vocabs.item.index_of(&r.item_id),
            FieldKind::Context => {
                let token = r.contexts.get(&f.name).ok_or_else(|| {
                    Error::Encode(format!("record is missing context `{}`", f.name))
                })?;
                vocabs
                    .context(&f.name)
                    .ok_or_else(|| Error::Encode(format!("no vocabulary for context `{}`", f.name)))?
                    .index_of(token)
            }
            FieldKind::Criterion => {
                let level = r.criteria.get(&f.name).ok_or_else(|| {
                    Error::Encode(format!("record is missing criterion `{}`", f.name))
                })?;
                vocabs.criterion_index(*level)
            }
        };
        indices.push(idx);
    }
    Ok(EncodedExample {
        indices,
        target: r.overall,
    })
}

/// Encode every record of a dataset under the given schema.
pub fn encode_dataset(
    ds: &Dataset,
    vocabs: &Vocabularies,
    schema: &FieldSchema,
) -> Result<Vec<EncodedExample>> {
    ds.records
        .iter()
        .map(|r| encode_record(r, vocabs, schema))
        .collect()
}

/// Seeded uniform shuffle followed by contiguous slicing into
/// (floor(n*train), floor(n*val), remainder) pieces. Exact partition.
pub fn split(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fv, fs) = fractions;
    if ft <= 0.0 || fv <= 0.0 || fs <= 0.0 {
        return Err(Error::Split("split fractions must be positive".into()));
    }
    if ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "split fractions must sum to 1, got {}",
            ft + fv + fs
        )));
    }
    let n = ds.len();
    let n_train = (n as f64 * ft).floor() as usize;
    let n_val = (n as f64 * fv).floor() as usize;
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Split(format!(
            "split of {} rows produced an empty part ({}/{}/{})",
            n, n_train, n_val, n_test
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::derive(seed, 0x53504C49).shuffle(&mut order);
    let pick = |range: std::ops::Range<usize>| Dataset {
        records: order[range].iter().map(|&i| ds.records[i].clone()).collect(),
        decl: ds.decl.clone(),
    };
    Ok((
        pick(0..n_train),
        pick(n_train..n_train + n_val),
        pick(n_train + n_val..n),
    ))
}

/// Per-criterion imputed level for an item: the rounded (half-up) mean of
/// that criterion's training ratings for the item, falling back to the
/// rounded global mean when the item is unseen.
pub fn impute_criteria(train: &Dataset, item_id: &str) -> BTreeMap<String, i64> {
    let mut out = BTreeMap::new();
    let mid = (train.decl.scale.0 + train.decl.scale.1) / 2.0;
    for name in &train.decl.criteria_cols {
        let mut item_sum = 0.0;
        let mut item_n = 0usize;
        let mut global_sum = 0.0;
        let mut global_n = 0usize;
        for r in &train.records {
            if let Some(&level) = r.criteria.get(name) {
                global_sum += level as f64;
                global_n += 1;
                if r.item_id == item_id {
                    item_sum += level as f64;
                    item_n += 1;
                }
            }
        }
        let mean = if item_n > 0 {
            item_sum / item_n as f64
        } else if global_n > 0 {
            global_sum / global_n as f64
        } else {
            mid
        };
        out.insert(name.clone(), mean.round() as i64);
    }
    out
}
