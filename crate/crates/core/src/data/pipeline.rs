//! Per-cohort cleaning and the cross-cohort merge.
//!
//! Order: drop constant genes → impute column means (each per cohort) →
//! intersect gene sets → concatenate samples → one-vs-rest labels.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::table::{parse_table, ExpressionTable, ParseOptions, ValueFormat};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Removes genes whose observed values are all equal, including genes with
/// no observed value at all. Survivors keep their order.
pub fn drop_constant_features(t: &ExpressionTable) -> ExpressionTable {
    let keep: Vec<usize> = (0..t.genes())
        .filter(|&g| {
            let mut observed = (0..t.samples()).filter_map(|s| t.value(s, g));
            match observed.next() {
                None => false,
                Some(first) => observed.any(|v| v != first),
            }
        })
        .collect();
    t.select_genes(&keep)
}

/// Fills every missing slot with the mean of its column's observed values.
pub fn impute_column_mean(t: &ExpressionTable) -> Result<ExpressionTable> {
    let means = t.values.col_means_unmasked(&t.missing)?;
    if let Some(g) = means.iter().position(Option::is_none) {
        return Err(Error::Data(format!(
            "gene `{}` in cohort `{}` has no observed values; drop constant features first",
            t.gene_names[g], t.cohort
        )));
    }
    let mut out = t.clone();
    let cols = t.genes();
    for (i, v) in out.values.as_mut_slice().iter_mut().enumerate() {
        if t.missing[i] {
            *v = means[i % cols].expect("checked above");
        }
    }
    out.missing = vec![false; out.missing.len()];
    Ok(out)
}

/// Constant-drop followed by imputation.
pub fn clean_cohort(t: &ExpressionTable) -> Result<ExpressionTable> {
    impute_column_mean(&drop_constant_features(t))
}

/// Samples from all cohorts over their shared genes, before labelling.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedDataset {
    pub features: Matrix,
    pub gene_names: Vec<String>,
    pub sample_ids: Vec<String>,
    /// Cohort of each sample.
    pub cohorts: Vec<String>,
    /// Cohort names in merge order.
    pub cohort_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub gene_names: Vec<String>,
    pub sample_ids: Vec<String>,
    pub cohorts: Vec<String>,
    pub positive_class: String,
}

/// Intersects gene sets (ordered as in the first table) and stacks samples in
/// table order. Tables must already be cleaned and imputed.
pub fn merge(tables: &[ExpressionTable]) -> Result<MergedDataset> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Data("no cohorts to merge".into()))?;
    let mut names = HashSet::new();
    for t in tables {
        if t.missing.iter().any(|&m| m) {
            return Err(Error::Data(format!(
                "cohort `{}` still has missing values",
                t.cohort
            )));
        }
        if !names.insert(t.cohort.as_str()) {
            return Err(Error::Data(format!("cohort `{}` given twice", t.cohort)));
        }
    }
    let sets: Vec<HashSet<&str>> = tables
        .iter()
        .map(|t| t.gene_names.iter().map(String::as_str).collect())
        .collect();
    let shared: Vec<String> = first
        .gene_names
        .iter()
        .filter(|g| sets.iter().all(|s| s.contains(g.as_str())))
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(Error::Data("cohorts share no genes".into()));
    }
    let mut parts = Vec::with_capacity(tables.len());
    let mut sample_ids = Vec::new();
    let mut cohorts = Vec::new();
    for t in tables {
        let columns: Vec<usize> = shared
            .iter()
            .map(|g| t.gene_index(g).expect("gene in intersection"))
            .collect();
        parts.push(t.values.select_cols(&columns));
        sample_ids.extend(t.sample_ids.iter().cloned());
        cohorts.extend(std::iter::repeat_n(t.cohort.clone(), t.samples()));
    }
    let features = Matrix::vstack(&parts.iter().collect::<Vec<_>>())?;
    Ok(MergedDataset {
        features,
        gene_names: shared,
        sample_ids,
        cohorts,
        cohort_names: tables.iter().map(|t| t.cohort.clone()).collect(),
    })
}

pub fn intersect_and_merge(
    tables: &[ExpressionTable],
    positive_class: &str,
) -> Result<LabeledDataset> {
    merge(tables)?.labeled(positive_class)
}

impl MergedDataset {
    pub fn samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn genes(&self) -> usize {
        self.gene_names.len()
    }

    /// One-vs-rest labels: 1 for samples of `positive_class`, else 0.
    pub fn labels(&self, positive_class: &str) -> Result<Vec<u8>> {
        if !self.cohort_names.iter().any(|c| c == positive_class) {
            return Err(Error::Data(format!(
                "unknown class `{positive_class}`; cohorts are {:?}",
                self.cohort_names
            )));
        }
        Ok(self
            .cohorts
            .iter()
            .map(|c| u8::from(c == positive_class))
            .collect())
    }

    pub fn labeled(&self, positive_class: &str) -> Result<LabeledDataset> {
        Ok(LabeledDataset {
            labels: self.labels(positive_class)?,
            features: self.features.clone(),
            gene_names: self.gene_names.clone(),
            sample_ids: self.sample_ids.clone(),
            cohorts: self.cohorts.clone(),
            positive_class: positive_class.to_string(),
        })
    }

    /// Fraction of samples per cohort, in merge order.
    pub fn class_fractions(&self) -> Vec<(String, f64)> {
        self.cohort_names
            .iter()
            .map(|c| {
                let n = self.cohorts.iter().filter(|x| *x == c).count();
                (c.clone(), n as f64 / self.samples().max(1) as f64)
            })
            .collect()
    }

    /// Writes `features.tsv` (exact values) and the `labels.csv` sidecar
    /// (`sampleId,cohort,label`, labelled against `positive_class`).
    pub fn save(&self, dir: &Path, positive_class: &str) -> Result<()> {
        let labels = self.labels(positive_class)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let table = ExpressionTable {
            cohort: "merged".into(),
            sample_ids: self.sample_ids.clone(),
            gene_names: self.gene_names.clone(),
            values: self.features.clone(),
            missing: vec![false; self.features.len()],
        };
        let path = dir.join(FEATURES_FILE);
        table.write(&path, b'\t', ValueFormat::Exact)?;
        let mut sidecar = String::from("sampleId,cohort,label\n");
        for ((id, cohort), label) in self.sample_ids.iter().zip(&self.cohorts).zip(labels) {
            sidecar.push_str(&format!("{id},{cohort},{label}\n"));
        }
        let path = dir.join(LABELS_FILE);
        fs::write(&path, sidecar).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<MergedDataset> {
        let path = dir.join(FEATURES_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let opts = ParseOptions {
            allow_duplicate_ids: true,
            ..ParseOptions::default()
        };
        let table = parse_table(&text, "merged", &path.display().to_string(), &opts)?;
        if table.missing_count() > 0 {
            return Err(Error::Data(format!(
                "{} contains missing values",
                path.display()
            )));
        }
        let path = dir.join(LABELS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("sampleId,cohort,label") {
            return Err(Error::Parse {
                source_name: path.display().to_string(),
                row: 1,
                column: 1,
                message: "expected header `sampleId,cohort,label`".into(),
            });
        }
        let mut cohorts = Vec::with_capacity(table.samples());
        let mut cohort_names: Vec<String> = Vec::new();
        for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            let bad = |message: String| Error::Parse {
                source_name: path.display().to_string(),
                row: i + 2,
                column: 1,
                message,
            };
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            if table.sample_ids.get(i).map(String::as_str) != Some(fields[0]) {
                return Err(bad(format!(
                    "sample `{}` does not match the feature file order",
                    fields[0]
                )));
            }
            if !cohort_names.iter().any(|c| c == fields[1]) {
                cohort_names.push(fields[1].to_string());
            }
            cohorts.push(fields[1].to_string());
        }
        if cohorts.len() != table.samples() {
            return Err(Error::Data(format!(
                "{} lists {} samples, feature file has {}",
                path.display(),
                cohorts.len(),
                table.samples()
            )));
        }
        Ok(MergedDataset {
            features: table.values,
            gene_names: table.gene_names,
            sample_ids: table.sample_ids,
            cohorts,
            cohort_names,
        })
    }
}

pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.csv";

/// What preprocessing did to one cohort.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortSummary {
    pub cohort: String,
    pub samples: usize,
    pub raw_genes: usize,
    pub constant_removed: usize,
    pub imputed_cells: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessSummary {
    pub cohorts: Vec<CohortSummary>,
    pub samples: usize,
    pub features: usize,
    /// Genes dropped as constant in at least one cohort, or absent from one.
    pub removed_features: usize,
    pub class_fractions: Vec<(String, f64)>,
}

impl std::fmt::Display for PreprocessSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.cohorts {
            writeln!(
                f,
                "cohort {}: {} samples, {} genes, {} constant removed, {} values imputed",
                c.cohort, c.samples, c.raw_genes, c.constant_removed, c.imputed_cells
            )?;
        }
        writeln!(f, "removed features: {}", self.removed_features)?;
        writeln!(
            f,
            "merged: {} samples x {} features",
            self.samples, self.features
        )?;
        let fractions: Vec<String> = self
            .class_fractions
            .iter()
            .map(|(c, p)| format!("{c} {:.0}%", 100.0 * p))
            .collect();
        write!(f, "class fractions: {}", fractions.join(", "))
    }
}

/// Full preprocessing of raw cohort tables. Cohorts are cleaned in parallel;
/// the result does not depend on scheduling.
pub fn preprocess(tables: &[ExpressionTable]) -> Result<(MergedDataset, PreprocessSummary)> {
    if tables.len() < 2 {
        return Err(Error::Config(
            "preprocessing needs at least two cohorts".into(),
        ));
    }
    let cleaned = tables
        .par_iter()
        .map(|t| {
            let dropped = drop_constant_features(t);
            let summary = CohortSummary {
                cohort: t.cohort.clone(),
                samples: t.samples(),
                raw_genes: t.genes(),
                constant_removed: t.genes() - dropped.genes(),
                imputed_cells: dropped.missing_count(),
            };
            impute_column_mean(&dropped).map(|c| (c, summary))
        })
        .collect::<Result<Vec<_>>>()?;
    let (cleaned, cohorts): (Vec<_>, Vec<_>) = cleaned.into_iter().unzip();
    let merged = merge(&cleaned)?;
    let all_genes: HashSet<&str> = tables
        .iter()
        .flat_map(|t| t.gene_names.iter().map(String::as_str))
        .collect();
    let summary = PreprocessSummary {
        cohorts,
        samples: merged.samples(),
        features: merged.genes(),
        removed_features: all_genes.len() - merged.genes(),
        class_fractions: merged.class_fractions(),
    };
    Ok((merged, summary))
}
