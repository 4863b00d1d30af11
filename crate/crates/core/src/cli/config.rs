//! Resolved run configuration. Precedence: built-in defaults, then a
//! `section.key=value` config file, then command-line flags. The fully
//! resolved configuration is echoed into the output directory so any run can
//! be reproduced from its echo alone.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::layers::AttnScale;
use crate::model::{CriteriaEncoding, Hyperparams, Scenario};
use crate::optim::TrainConfig;

pub const CONFIG_ENV_VAR: &str = "GROUPREC_CONFIG";

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub data_path: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    pub scenario_tag: String,
    pub scenario_context: Option<String>,
    pub hp: Hyperparams,
    pub train: TrainConfig,
    pub fractions: (f64, f64, f64),
    pub eval_seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            data_path: None,
            schema_path: None,
            scenario_tag: "mcgrs_mc".into(),
            scenario_context: None,
            hp: Hyperparams::default(),
            train: TrainConfig::default(),
            fractions: (0.8, 0.1, 0.1),
            eval_seeds: vec![0, 1, 2, 3, 4],
            out_dir: None,
        }
    }
}

impl CliConfig {
    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::parse(&self.scenario_tag, self.scenario_context.as_deref())
    }

    /// Apply one `section.key=value` file on top of the current values.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key=value, got `{}`", lineno + 1, line))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("config line {}: {}", lineno + 1, e)))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad {} value `{}`", what, value));
        match key {
            "data.path" => self.data_path = Some(PathBuf::from(value)),
            "data.schema" => self.schema_path = Some(PathBuf::from(value)),
            "scenario" => self.scenario_tag = value.to_string(),
            "scenario.context" => self.scenario_context = Some(value.to_string()),
            "model.d" => self.hp.d = value.parse().map_err(|_| bad(key))?,
            "model.heads" => self.hp.heads = value.parse().map_err(|_| bad(key))?,
            "model.d_h" => self.hp.d_h = value.parse().map_err(|_| bad(key))?,
            "model.dense_width" => self.hp.dense_width = value.parse().map_err(|_| bad(key))?,
            "model.layernorm_eps" => self.hp.layernorm_eps = value.parse().map_err(|_| bad(key))?,
            "model.seed" => self.hp.seed = value.parse().map_err(|_| bad(key))?,
            "model.attn_scale" => {
                self.hp.attn_scale = match value {
                    "d_h" => AttnScale::PerHead,
                    "d" => AttnScale::ModelDim,
                    _ => return Err(bad(key)),
                }
            }
            "model.criteria" => {
                self.hp.criteria_encoding = match value {
                    "categorical" => CriteriaEncoding::Categorical,
                    "ordinal" => CriteriaEncoding::Ordinal,
                    _ => return Err(bad(key)),
                }
            }
            "train.epochs" => self.train.epochs = value.parse().map_err(|_| bad(key))?,
            "train.batch_size" => self.train.batch_size = value.parse().map_err(|_| bad(key))?,
            "train.eta" => self.train.eta = value.parse().map_err(|_| bad(key))?,
            "train.eps" => self.train.eps = value.parse().map_err(|_| bad(key))?,
            "train.patience" => {
                self.train.early_stop_patience = value.parse().map_err(|_| bad(key))?
            }
            "train.seed" => self.train.seed = value.parse().map_err(|_| bad(key))?,
            "train.val_fraction" => {
                self.train.validation_fraction = value.parse().map_err(|_| bad(key))?
            }
            "split.train" => self.fractions.0 = value.parse().map_err(|_| bad(key))?,
            "split.val" => self.fractions.1 = value.parse().map_err(|_| bad(key))?,
            "split.test" => self.fractions.2 = value.parse().map_err(|_| bad(key))?,
            "eval.seeds" => {
                self.eval_seeds = value
                    .split(',')
                    .map(|s| s.trim().parse::<u64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(key))?;
                if self.eval_seeds.is_empty() {
                    return Err(bad(key));
                }
            }
            "out.dir" => self.out_dir = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown config key `{}`", other))),
        }
        Ok(())
    }

    /// Serialize every resolved setting; `apply_file` on the output restores
    /// an identical configuration.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.data_path {
            out.push_str(&format!("data.path={}\n", p.display()));
        }
        if let Some(p) = &self.schema_path {
            out.push_str(&format!("data.schema={}\n", p.display()));
        }
        out.push_str(&format!("scenario={}\n", self.scenario_tag));
        if let Some(c) = &self.scenario_context {
            out.push_str(&format!("scenario.context={}\n", c));
        }
        out.push_str(&format!("model.d={}\n", self.hp.d));
        out.push_str(&format!("model.heads={}\n", self.hp.heads));
        out.push_str(&format!("model.d_h={}\n", self.hp.d_h));
        out.push_str(&format!("model.dense_width={}\n", self.hp.dense_width));
        out.push_str(&format!("model.layernorm_eps={}\n", self.hp.layernorm_eps));
        out.push_str(&format!("model.seed={}\n", self.hp.seed));
        out.push_str(&format!(
            "model.attn_scale={}\n",
            match self.hp.attn_scale {
                AttnScale::PerHead => "d_h",
                AttnScale::ModelDim => "d",
            }
        ));
        out.push_str(&format!(
            "model.criteria={}\n",
            match self.hp.criteria_encoding {
                CriteriaEncoding::Categorical => "categorical",
                CriteriaEncoding::Ordinal => "ordinal",
            }
        ));
        out.push_str(&format!("train.epochs={}\n", self.train.epochs));
        out.push_str(&format!("train.batch_size={}\n", self.train.batch_size));
        out.push_str(&format!("train.eta={}\n", self.train.eta));
        out.push_str(&format!("train.eps={}\n", self.train.eps));
        out.push_str(&format!("train.patience={}\n", self.train.early_stop_patience));
        out.push_str(&format!("train.seed={}\n", self.train.seed));
        out.push_str(&format!(
            "train.val_fraction={}\n",
            self.train.validation_fraction
        ));
        out.push_str(&format!("split.train={}\n", self.fractions.0));
        out.push_str(&format!("split.val={}\n", self.fractions.1));
        out.push_str(&format!("split.test={}\n", self.fractions.2));
        out.push_str(&format!(
            "eval.seeds={}\n",
            self.eval_seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        if let Some(d) = &self.out_dir {
            out.push_str(&format!("out.dir={}\n", d.display()));
        }
        out
    }

    pub fn require_data_path(&self) -> Result<&PathBuf> {
        self.data_path
            .as_ref()
            .ok_or_else(|| Error::Config("no data path given (flag --data or data.path)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults_and_echo_roundtrips() {
        let mut cfg = CliConfig::default();
        cfg.apply_file(
            "# comment\n\
             data.path=/tmp/x.csv\n\
             scenario=mcgrs_sc\n\
             scenario.context=Class\n\
             model.d=8\nmodel.heads=2\nmodel.d_h=4\n\
             train.eta=0.05\n\
             eval.seeds=7,8\n",
        )
        .unwrap();
        assert_eq!(cfg.hp.d, 8);
        assert_eq!(cfg.train.eta, 0.05);
        assert_eq!(cfg.eval_seeds, vec![7, 8]);
        assert!(matches!(cfg.scenario().unwrap(), Scenario::McgrsSc { .. }));

        let mut again = CliConfig::default();
        again.apply_file(&cfg.echo()).unwrap();
        assert_eq!(again.echo(), cfg.echo());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let mut cfg = CliConfig::default();
        assert!(cfg.apply_file("nonsense.key=1\n").is_err());
        assert!(cfg.apply_file("model.d=eight\n").is_err());
        assert!(cfg.apply_file("model.attn_scale=both\n").is_err());
        assert!(cfg.apply_file("just a line\n").is_err());
    }

    #[test]
    fn scenario_requires_context_when_single_context() {
        let mut cfg = CliConfig::default();
        cfg.apply_file("scenario=mcgrs_sc\n").unwrap();
        assert!(cfg.scenario().is_err());
        cfg.apply_file("scenario.context=Class\n").unwrap();
        assert!(cfg.scenario().is_ok());
    }
}
