//! Declarative run configuration, read from TOML.
//!
//! ```toml
//! output_dir = "out"
//! seed = 7
//!
//! [models.random_forest]
//! n_trees = 100
//!
//! [[datasets]]
//! id = "book_a"
//! path = "book_a.csv"
//!
//! [[families]]
//! prefix = "synthetic"
//! count = 10
//! [families.spec]
//! n_rows = 20000
//! drift_rate = 1.5
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_synthetic, load_csv, CsvOptions, SyntheticSpec, TimeOrderedDataset};
use crate::harness::GridConfig;
use crate::models::ModelConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Svg,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svg" => Ok(Self::Svg),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub n_bins: usize,
    pub formats: Vec<OutputFormat>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            n_bins: 10,
            formats: vec![OutputFormat::Svg, OutputFormat::Csv],
        }
    }
}

/// One dataset: either a CSV file or an inline synthetic spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

/// `count` synthetic datasets `{prefix}_{i}` sharing a spec, with seeds
/// `spec.seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyEntry {
    pub prefix: String,
    pub count: usize,
    #[serde(default)]
    pub spec: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedDataset {
    pub id: String,
    pub source: DatasetSource,
}

impl ResolvedDataset {
    pub fn load(&self, csv: &CsvOptions) -> Result<TimeOrderedDataset> {
        match &self.source {
            DatasetSource::Csv(path) => load_csv(path, csv),
            DatasetSource::Synthetic(spec) => generate_synthetic(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub label_column: String,
    pub time_column: String,
    pub impute_missing: bool,
    pub models: ModelConfig,
    pub report: ReportOptions,
    pub datasets: Vec<DatasetEntry>,
    pub families: Vec<FamilyEntry>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let csv = CsvOptions::default();
        Self {
            output_dir: PathBuf::from("out"),
            seed: 0,
            label_column: csv.label_column,
            time_column: csv.time_column,
            impute_missing: csv.impute_missing,
            models: ModelConfig::default(),
            report: ReportOptions::default(),
            datasets: Vec::new(),
            families: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Parse a config file and resolve relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        for d in &mut config.datasets {
            if let Some(p) = &mut d.path {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.report.n_bins < 2 {
            return Err(Error::Config("report.n_bins must be at least 2".into()));
        }
        for d in &self.datasets {
            match (&d.path, &d.synthetic) {
                (Some(_), None) => {}
                (None, Some(spec)) => spec.validate()?,
                _ => {
                    return Err(Error::Config(format!(
                        "dataset `{}` needs exactly one of `path` or `synthetic`",
                        d.id
                    )))
                }
            }
        }
        for f in &self.families {
            f.spec.validate()?;
            if f.spec.seed.checked_add(f.count as u64).is_none() {
                return Err(Error::Config(format!("family `{}` seeds overflow", f.prefix)));
            }
        }
        let datasets = self.resolved_datasets();
        if datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        let mut seen = HashSet::new();
        for d in &datasets {
            if d.id.is_empty() || !seen.insert(d.id.as_str()) {
                return Err(Error::Config(format!("dataset id `{}` is empty or repeated", d.id)));
            }
        }
        Ok(())
    }

    /// Explicit datasets first, then family members in order.
    pub fn resolved_datasets(&self) -> Vec<ResolvedDataset> {
        let mut out = Vec::new();
        for d in &self.datasets {
            let source = match (&d.path, &d.synthetic) {
                (Some(p), _) => DatasetSource::Csv(p.clone()),
                (None, Some(s)) => DatasetSource::Synthetic(s.clone()),
                (None, None) => continue,
            };
            out.push(ResolvedDataset {
                id: d.id.clone(),
                source,
            });
        }
        for f in &self.families {
            for i in 0..f.count {
                let spec = SyntheticSpec {
                    seed: f.spec.seed + i as u64,
                    ..f.spec.clone()
                };
                out.push(ResolvedDataset {
                    id: format!("{}_{i}", f.prefix),
                    source: DatasetSource::Synthetic(spec),
                });
            }
        }
        out
    }

    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.label_column.clone(),
            time_column: self.time_column.clone(),
            impute_missing: self.impute_missing,
        }
    }

    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            models: self.models,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn misplaced_top_level_key_is_rejected() {
        // a key written after a table header belongs to that table
        let text = "[[datasets]]\nid = \"a\"\npath = \"a.csv\"\n[models.gradient_boosting]\nn_stages = 5\noutput_dir = \"x\"\n";
        assert!(RunConfig::from_toml_str(text).is_err());
        let text = "[[datasets]]\nid = \"a\"\n[datasets.synthetic]\nrows = 5\n";
        assert!(RunConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn parses_nested_document() {
        let c = RunConfig::from_toml_str(
            r#"
            seed = 3
            [models.random_forest]
            n_trees = 5
            [report]
            formats = ["csv"]
            [[datasets]]
            id = "a"
            path = "a.csv"
            [[families]]
            prefix = "s"
            count = 2
            [families.spec]
            n_rows = 500
            seed = 10
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.models.random_forest.n_trees, 5);
        assert_eq!(c.models.random_forest.max_depth, 12);
        assert_eq!(c.report.formats, vec![OutputFormat::Csv]);
        let ds = c.resolved_datasets();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds[0].source, DatasetSource::Csv("a.csv".into()));
        assert_eq!(ds[2].id, "s_1");
        match &ds[2].source {
            DatasetSource::Synthetic(s) => assert_eq!((s.n_rows, s.seed), (500, 11)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml_str("seed = 1").is_err());
        assert!(RunConfig::from_toml_str("[[datasets]]\nid = \"a\"").is_err());
        assert!(RunConfig::from_toml_str(
            "[[datasets]]\nid = \"a\"\npath = \"x\"\n[[datasets]]\nid = \"a\"\npath = \"y\""
        )
        .is_err());
        assert!(RunConfig::from_toml_str("bogus = 1\n[[datasets]]\nid = \"a\"\npath = \"x\"").is_err());
        assert!(RunConfig::from_toml_str(
            "[[families]]\nprefix = \"s\"\ncount = 1\n[families.spec]\nbase_default_rate = 1.5"
        )
        .is_err());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "output_dir = \"res\"\n[[datasets]]\nid = \"a\"\npath = \"a.csv\"\n").unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.output_dir, dir.path().join("res"));
        assert_eq!(c.datasets[0].path.as_deref(), Some(dir.path().join("a.csv").as_path()));
    }
}
