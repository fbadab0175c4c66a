//! Flat `key = value` experiment configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gmed::{EditConfig, EditKind, Variant};
use crate::strategies::AugmentPolicy;
use crate::stream::DatasetKind;

pub const DATA_DIR_ENV: &str = "GMED_DATA_DIR";

pub const ALPHA_GRID: [f64; 9] = [0.01, 0.03, 0.05, 0.07, 0.1, 0.5, 1.0, 5.0, 10.0];
pub const BETA_GRID: [f64; 5] = [0.0, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub variants: Vec<Variant>,
    pub mem_sizes: Vec<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub edit: EditConfig,
    pub augment: AugmentPolicy,
    pub mir_candidates: usize,
    pub n_tasks: Option<usize>,
    pub examples_per_task: usize,
    pub fuzzy: bool,
    pub fuzzy_start_frac: f64,
    pub offline_epochs: usize,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub tune: bool,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub cosine_trace: bool,
    pub pcr: bool,
    pub edit_trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::SplitMnist,
            data_dir: None,
            variants: vec![Variant::Er],
            mem_sizes: vec![500],
            batch_size: 10,
            lr: 0.05,
            hidden: vec![400, 400],
            edit: EditConfig::default(),
            augment: AugmentPolicy::default(),
            mir_candidates: crate::strategies::MIR_CANDIDATES,
            n_tasks: None,
            examples_per_task: 1000,
            fuzzy: false,
            fuzzy_start_frac: 0.5,
            offline_epochs: 5,
            n_seeds: 10,
            base_seed: 0,
            output_dir: PathBuf::from("out"),
            tune: false,
            alpha_grid: ALPHA_GRID.to_vec(),
            beta_grid: BETA_GRID.to_vec(),
            cosine_trace: false,
            pcr: false,
            edit_trace: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::ParseValue {
        key: key.into(),
        value: value.into(),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::ParseValue {
            key: key.into(),
            value: value.into(),
        });
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::ParseValue {
            key: key.into(),
            value: value.into(),
        }),
    }
}

impl ExperimentConfig {
    /// Set one key. Keys match the config file names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dataset" => self.dataset = parse(key, value)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "variant" | "variants" => self.variants = parse_list(key, value)?,
            "mem_size" | "mem_sizes" => self.mem_sizes = parse_list(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "alpha" => self.edit.alpha = parse(key, value)?,
            "beta" => self.edit.beta = parse(key, value)?,
            "gamma" => self.edit.gamma = parse(key, value)?,
            "edit_steps" => self.edit.steps = parse(key, value)?,
            "edit_kind" => self.edit.kind = parse::<EditKind>(key, value)?,
            "writeback" => self.edit.writeback = parse_bool(key, value)?,
            "n_extra_edit" => self.edit.n_extra_edit = parse(key, value)?,
            "augment" => {
                self.augment = match value {
                    "off" => AugmentPolicy::Off,
                    "rot_shift" => AugmentPolicy::default(),
                    _ => {
                        return Err(Error::ParseValue {
                            key: key.into(),
                            value: value.into(),
                        })
                    }
                }
            }
            "mir_candidates" => self.mir_candidates = parse(key, value)?,
            "n_tasks" => self.n_tasks = Some(parse(key, value)?),
            "examples_per_task" => self.examples_per_task = parse(key, value)?,
            "fuzzy" => self.fuzzy = parse_bool(key, value)?,
            "fuzzy_start_frac" => self.fuzzy_start_frac = parse(key, value)?,
            "offline_epochs" => self.offline_epochs = parse(key, value)?,
            "seeds" | "n_seeds" => self.n_seeds = parse(key, value)?,
            "base_seed" => self.base_seed = parse(key, value)?,
            "out" | "output_dir" => self.output_dir = PathBuf::from(value),
            "tune" => self.tune = parse_bool(key, value)?,
            "alpha_grid" => self.alpha_grid = parse_list(key, value)?,
            "beta_grid" => self.beta_grid = parse_list(key, value)?,
            "cosine_trace" => self.cosine_trace = parse_bool(key, value)?,
            "pcr" => self.pcr = parse_bool(key, value)?,
            "edit_trace" => self.edit_trace = parse_bool(key, value)?,
            _ => return Err(Error::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Apply every `key = value` line of a config file body.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::MalformedLine {
                line: i + 1,
                text: raw.into(),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![crate::stream::INPUT_DIM];
        s.extend(&self.hidden);
        s.push(crate::stream::NUM_CLASSES);
        s
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(move |i| self.base_seed + i)
    }
}

/// Defaults, then the file (if any), then `overrides` in order. The data
/// directory falls back to `env_data_dir` and must be known in the end.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &[(String, String)],
    env_data_dir: Option<&str>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    if cfg.data_dir.is_none() {
        cfg.data_dir = env_data_dir.filter(|s| !s.is_empty()).map(PathBuf::from);
    }
    if cfg.data_dir.is_none() {
        return Err(Error::MissingDatasetPath);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let cfg = parse_config(None, &[], Some("/data")).unwrap();
        assert_eq!(cfg.dataset, DatasetKind::SplitMnist);
        assert_eq!(cfg.variants, vec![Variant::Er]);
        assert_eq!(cfg.mem_sizes, vec![500]);
        assert_eq!(cfg.lr, 0.05);
        assert_eq!(cfg.batch_size, 10);
        assert_eq!(cfg.n_seeds, 10);
        assert_eq!(cfg.layer_sizes(), vec![784, 400, 400, 10]);
    }

    #[test]
    fn cli_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.conf");
        std::fs::write(&p, "# edit knobs\nalpha = 0.1\nbeta=0.5  # trailing\n\nvariant = er,er_gmed\ndata_dir = /from/file\n").unwrap();
        let cfg = parse_config(Some(&p), &kv(&[("alpha", "5.0"), ("beta", "0.01")]), Some("/env")).unwrap();
        assert_eq!(cfg.edit.alpha, 5.0);
        assert_eq!(cfg.edit.beta, 0.01);
        assert_eq!(cfg.variants, vec![Variant::Er, Variant::ErGmed]);
        assert_eq!(cfg.data_dir, Some(PathBuf::from("/from/file")));
    }

    #[test]
    fn errors() {
        let mut cfg = ExperimentConfig::default();
        assert!(matches!(cfg.apply_text("aplha=1"), Err(Error::UnknownKey(k)) if k == "aplha"));
        assert!(matches!(cfg.apply_text("alpha = five"), Err(Error::ParseValue { .. })));
        assert!(matches!(cfg.apply_text("alpha 5"), Err(Error::MalformedLine { line: 1, .. })));
        assert!(matches!(cfg.apply_text("variant = gem"), Err(Error::ParseValue { .. })));
        assert!(matches!(parse_config(None, &[], None), Err(Error::MissingDatasetPath)));
        assert!(matches!(parse_config(None, &[], Some("")), Err(Error::MissingDatasetPath)));
    }

    #[test]
    fn seeds_follow_base() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("seeds = 3\nbase_seed = 40").unwrap();
        assert_eq!(cfg.seeds().collect::<Vec<_>>(), vec![40, 41, 42]);
    }
}
