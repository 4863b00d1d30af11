//! Metrics, test-set evaluation, top-K ranking for a group, and the
//! four-scenario experiment runner with a paired linear baseline.

use std::collections::BTreeMap;

use crate::data::{
    build_vocabs, encode_dataset, encode_record, impute_criteria, split, Dataset, RatingRecord,
    Vocabularies,
};
use crate::error::{Error, Result};
use crate::model::{
    scenario_schema, EncodedExample, Hyperparams, LinearBaseline, Model, Scenario,
};
use crate::optim::{fit, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

fn check_pairs(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::Argument(format!(
            "metrics: got {} predictions and {} targets",
            preds.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pairs(preds, targets)?;
    let n = preds.len() as f64;
    let sum: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / n).sqrt())
}

/// Mean absolute error.
pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pairs(preds, targets)?;
    let n = preds.len() as f64;
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
}

pub fn metrics(preds: &[f64], targets: &[f64]) -> Result<Metrics> {
    Ok(Metrics {
        rmse: rmse(preds, targets)?,
        mae: mae(preds, targets)?,
        n: preds.len(),
    })
}

/// Encode every test record under the model's schema (ground-truth criteria
/// as inputs), predict unclamped and compute RMSE/MAE over all rows.
pub fn evaluate(model: &Model, test: &Dataset, vocabs: &Vocabularies) -> Result<Metrics> {
    let mut preds = Vec::with_capacity(test.len());
    let mut targets = Vec::with_capacity(test.len());
    for r in &test.records {
        let ex = encode_record(r, vocabs, &model.schema)?;
        preds.push(model.predict(&ex)?);
        targets.push(ex.target);
    }
    metrics(&preds, &targets)
}

/// Evaluate over already-encoded examples.
pub fn evaluate_encoded(model: &Model, set: &[EncodedExample]) -> Result<Metrics> {
    let mut preds = Vec::with_capacity(set.len());
    let mut targets = Vec::with_capacity(set.len());
    for ex in set {
        preds.push(model.predict(ex)?);
        targets.push(ex.target);
    }
    metrics(&preds, &targets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub item_id: String,
    /// Predicted overall rating, clamped to the rating scale for display.
    pub predicted: f64,
    /// 1-based rank position.
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct Ranking {
    pub items: Vec<RankedItem>,
    /// Set when the group was never seen in training and the prediction ran
    /// through the unknown-token embedding.
    pub unknown_group: bool,
}

/// Score every candidate item for a group under the given context, imputing
/// criteria levels from the training data, and return the top
/// min(k, candidates) items. Sorted by predicted rating descending, ties
/// broken by ascending item vocabulary index (then item id).
pub fn rank_top_k(
    model: &Model,
    group_id: &str,
    candidates: &[String],
    context: &BTreeMap<String, String>,
    k: usize,
    train: &Dataset,
    vocabs: &Vocabularies,
) -> Result<Ranking> {
    if k == 0 {
        return Err(Error::Argument("rank_top_k: k must be >= 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Argument("rank_top_k: empty candidate set".into()));
    }
    let (lo, hi) = vocabs.scale;
    let unknown_group = vocabs.group.index_of(group_id) == 0;
    let mut scored: Vec<(f64, usize, String)> = Vec::with_capacity(candidates.len());
    for item in candidates {
        let record = RatingRecord {
            group_id: group_id.to_string(),
            item_id: item.clone(),
            contexts: context.clone(),
            criteria: impute_criteria(train, item),
            overall: 0.0,
            members: None,
            group_size: None,
        };
        let ex = encode_record(&record, vocabs, &model.schema)?;
        let pred = model.predict(&ex)?.clamp(lo, hi);
        scored.push((pred, vocabs.item.index_of(item), item.clone()));
    }
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let items = scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (pred, _, item))| RankedItem {
            item_id: item,
            predicted: pred,
            rank: i + 1,
        })
        .collect();
    Ok(Ranking { items, unknown_group })
}

/// One (scenario, seed) experiment outcome.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub seed: u64,
    pub metrics: Metrics,
    pub baseline: Metrics,
    pub epochs_ran: usize,
    pub split_fingerprint: u64,
    pub history: TrainHistory,
}

#[derive(Debug, Clone)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub baseline_mean_rmse: f64,
    pub baseline_mean_mae: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub runs: Vec<RunResult>,
    pub scenarios: Vec<Scenario>,
    pub seeds: Vec<u64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ScenarioReport {
    pub fn summaries(&self) -> Vec<ScenarioSummary> {
        self.scenarios
            .iter()
            .map(|s| {
                let runs: Vec<&RunResult> =
                    self.runs.iter().filter(|r| &r.scenario == s).collect();
                let rmses: Vec<f64> = runs.iter().map(|r| r.metrics.rmse).collect();
                let maes: Vec<f64> = runs.iter().map(|r| r.metrics.mae).collect();
                let brmse: Vec<f64> = runs.iter().map(|r| r.baseline.rmse).collect();
                let bmae: Vec<f64> = runs.iter().map(|r| r.baseline.mae).collect();
                let (mean_rmse, std_rmse) = mean_std(&rmses);
                let (mean_mae, std_mae) = mean_std(&maes);
                ScenarioSummary {
                    scenario: s.clone(),
                    mean_rmse,
                    std_rmse,
                    mean_mae,
                    std_mae,
                    baseline_mean_rmse: mean_std(&brmse).0,
                    baseline_mean_mae: mean_std(&bmae).0,
                }
            })
            .collect()
    }

    /// Machine-readable per-run rows.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("scenario,seed,rmse,mae,epochs_ran,baseline_rmse,baseline_mae\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.scenario.tag(),
                r.seed,
                r.metrics.rmse,
                r.metrics.mae,
                r.epochs_ran,
                r.baseline.rmse,
                r.baseline.mae
            ));
        }
        out
    }

    /// Human-readable comparison table: one column pair per scenario, one
    /// row for the attention model and one for the ridge baseline.
    pub fn render_table(&self) -> String {
        let summaries = self.summaries();
        let mut out = String::new();
        out.push_str(&format!("{:<10}", "model"));
        for s in &summaries {
            out.push_str(&format!("{:>24}", s.scenario.tag()));
        }
        out.push('\n');
        out.push_str(&format!("{:<10}", ""));
        for _ in &summaries {
            out.push_str(&format!("{:>14}{:>10}", "rmse", "mae"));
        }
        out.push('\n');
        out.push_str(&format!("{:<10}", "mha"));
        for s in &summaries {
            out.push_str(&format!(
                "{:>9.4} ±{:.4}{:>10.4}",
                s.mean_rmse, s.std_rmse, s.mean_mae
            ));
        }
        out.push('\n');
        out.push_str(&format!("{:<10}", "ridge"));
        for s in &summaries {
            out.push_str(&format!(
                "{:>16.4}{:>10.4}",
                s.baseline_mean_rmse, s.baseline_mean_mae
            ));
        }
        out.push('\n');
        out
    }
}

/// Ridge strength for the paired baseline.
pub const BASELINE_L2: f64 = 1e-3;

/// For each scenario x seed: split, build vocabularies on the training part,
/// restrict the schema, train, evaluate on the test part, and fit the ridge
/// baseline on the same encodings. Splits depend only on the seed, so runs
/// with a shared seed are paired across scenarios.
pub fn run_scenarios(
    full: &Dataset,
    scenarios: &[Scenario],
    hp: &Hyperparams,
    train_cfg: &TrainConfig,
    seeds: &[u64],
    fractions: (f64, f64, f64),
) -> Result<ScenarioReport> {
    if seeds.is_empty() {
        return Err(Error::Argument("run_scenarios needs at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(scenarios.len() * seeds.len());
    for scenario in scenarios {
        for &seed in seeds {
            let (train, val, test) = split(full, fractions, seed)?;
            let fingerprint = train
                .fingerprint()
                .rotate_left(1)
                .wrapping_add(val.fingerprint().rotate_left(2))
                .wrapping_add(test.fingerprint());
            let vocabs = build_vocabs(&train)?;
            let schema = scenario_schema(&vocabs.full_schema()?, scenario)?;
            let train_enc = encode_dataset(&train, &vocabs, &schema)?;
            let val_enc = encode_dataset(&val, &vocabs, &schema)?;
            let test_enc = encode_dataset(&test, &vocabs, &schema)?;
            let mut model = Model::build(
                schema.clone(),
                Hyperparams { seed: hp.seed ^ seed, ..hp.clone() },
            )?;
            let cfg = TrainConfig { seed: train_cfg.seed ^ seed, ..train_cfg.clone() };
            let history = fit(&mut model, &train_enc, &val_enc, &cfg)?;
            let model_metrics = evaluate_encoded(&model, &test_enc)?;
            let baseline_model = LinearBaseline::fit(&train_enc, &schema, BASELINE_L2, full.scale())?;
            let bpreds: Vec<f64> = test_enc.iter().map(|ex| baseline_model.predict(ex)).collect();
            let btargets: Vec<f64> = test_enc.iter().map(|ex| ex.target).collect();
            let baseline = metrics(&bpreds, &btargets)?;
            runs.push(RunResult {
                scenario: scenario.clone(),
                seed,
                metrics: model_metrics,
                baseline,
                epochs_ran: history.records.len(),
                split_fingerprint: fingerprint,
                history,
            });
        }
    }
    Ok(ScenarioReport {
        runs,
        scenarios: scenarios.to_vec(),
        seeds: seeds.to_vec(),
    })
}
