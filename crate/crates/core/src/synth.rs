//! Synthetic cohorts shaped like the real expression tables: shared gene
//! space, missing cells, constant genes, and per-cohort gene omissions.
//!
//! Each cohort's samples are `mean + noise_sd · N(0, 1)` per gene. Values are
//! written with four decimals, as in the real exports.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::table::{parse_table, ExpressionTable, ParseOptions};
use crate::error::{Error, Result};
use crate::rng::{tags, RngStream};

pub const DEFAULT_COHORTS: [&str; 3] = ["thyroid", "skin", "stomach"];

const OMIT_TAG: u64 = 0x4f4d_4954;
const MEANS_TAG: u64 = 0x4d45_414e;

#[derive(Clone, Debug, PartialEq)]
pub struct CohortSpec {
    pub name: String,
    pub samples: usize,
    /// Class mean per gene; every cohort has the same length.
    pub mean: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub cohorts: Vec<CohortSpec>,
    pub noise_sd: f64,
    pub missing_rate: f64,
    /// Extra all-constant genes appended to every cohort.
    pub constant_columns: usize,
    /// Genes each cohort leaves out; the omitted sets are disjoint.
    pub omit_per_cohort: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Cohort means drawn as `separation · noise_sd · N(0, 1)` on the first
    /// `informative` genes and 0 elsewhere.
    #[allow(clippy::too_many_arguments)]
    pub fn gaussian(
        names: &[&str],
        samples: usize,
        genes: usize,
        informative: usize,
        separation: f64,
        noise_sd: f64,
        seed: u64,
    ) -> SynthSpec {
        let root = RngStream::new(seed, 0).derive(tags::SYNTH);
        let cohorts = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let mut rng = root.derive_path(&[MEANS_TAG, i as u64]);
                let mean = (0..genes)
                    .map(|g| {
                        if g < informative {
                            separation * noise_sd * rng.standard_normal()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                CohortSpec {
                    name: name.to_string(),
                    samples,
                    mean,
                }
            })
            .collect();
        SynthSpec {
            cohorts,
            noise_sd,
            missing_rate: 0.0,
            constant_columns: 0,
            omit_per_cohort: 0,
            seed,
        }
    }

    /// Three cohorts of 200 samples over 50 genes, all informative with
    /// per-gene separation 3× the noise; a few NAs and constant genes.
    pub fn desk(seed: u64) -> SynthSpec {
        SynthSpec {
            missing_rate: 0.01,
            constant_columns: 3,
            ..SynthSpec::gaussian(&DEFAULT_COHORTS, 200, 50, 50, 3.0, 1.0, seed)
        }
    }

    /// Same shape as [`SynthSpec::desk`] but only five informative genes with
    /// separation equal to the noise.
    pub fn harder(seed: u64) -> SynthSpec {
        SynthSpec {
            missing_rate: 0.01,
            constant_columns: 3,
            ..SynthSpec::gaussian(&DEFAULT_COHORTS, 200, 50, 5, 1.0, 1.0, seed)
        }
    }

    pub fn genes(&self) -> usize {
        self.cohorts.first().map_or(0, |c| c.mean.len())
    }

    /// Feature count after preprocessing: omitted genes leave the intersection
    /// and constant genes are dropped.
    pub fn expected_features(&self) -> usize {
        self.genes() - self.omit_per_cohort * self.cohorts.len()
    }

    pub fn expected_samples(&self) -> usize {
        self.cohorts.iter().map(|c| c.samples).sum()
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let d = self.genes();
        if d == 0 || self.cohorts.is_empty() {
            return Err(Error::Config(
                "synthetic spec needs cohorts and genes".into(),
            ));
        }
        if self.cohorts.iter().any(|c| c.mean.len() != d) {
            return Err(Error::Config("cohort mean vectors differ in length".into()));
        }
        if let Some(c) = self.cohorts.iter().find(|c| c.samples < k) {
            return Err(Error::Config(format!(
                "cohort `{}` has fewer than {k} samples",
                c.name
            )));
        }
        if !(0.0..1.0).contains(&self.missing_rate) || self.noise_sd < 0.0 {
            return Err(Error::Config(
                "missing rate must be in [0, 1) and noise non-negative".into(),
            ));
        }
        if self.omit_per_cohort * self.cohorts.len() >= d {
            return Err(Error::Config("gene omissions leave no shared genes".into()));
        }
        Ok(())
    }
}

pub fn gene_name(g: usize) -> String {
    format!("G{:04}_{}", g + 1, 100_000 + g)
}

pub fn constant_gene_name(j: usize) -> String {
    format!("CONST{:02}_{}", j + 1, 900_000 + j)
}

fn round4(v: f64) -> String {
    format!("{v:.4}")
}

/// Tab-delimited file contents per cohort, as `(cohort name, text)`.
pub fn generate_text(spec: &SynthSpec) -> Result<Vec<(String, String)>> {
    spec.validate(1)?;
    let root = RngStream::new(spec.seed, 0).derive(tags::SYNTH);
    let d = spec.genes();
    let omit_order = root.derive(OMIT_TAG).permutation(d);

    let mut out = Vec::with_capacity(spec.cohorts.len());
    for (ci, cohort) in spec.cohorts.iter().enumerate() {
        let mut rng = root.derive(ci as u64);
        let omitted = &omit_order[ci * spec.omit_per_cohort..(ci + 1) * spec.omit_per_cohort];
        let genes: Vec<usize> = (0..d).filter(|g| !omitted.contains(g)).collect();
        let constants: Vec<String> = (0..spec.constant_columns)
            .map(|_| round4(rng.standard_normal()))
            .collect();

        let mut text = String::from("sampleId");
        for &g in &genes {
            text.push('\t');
            text.push_str(&gene_name(g));
        }
        for j in 0..spec.constant_columns {
            text.push('\t');
            text.push_str(&constant_gene_name(j));
        }
        text.push('\n');
        let tag: String = cohort
            .name
            .chars()
            .take(3)
            .collect::<String>()
            .to_uppercase();
        for s in 0..cohort.samples {
            text.push_str(&format!("SYN-{tag}-{s:04}-01"));
            let cells = genes
                .iter()
                .map(|&g| round4(cohort.mean[g] + spec.noise_sd * rng.standard_normal()))
                .chain(constants.iter().cloned());
            for cell in cells.collect::<Vec<_>>() {
                text.push('\t');
                if spec.missing_rate > 0.0 && rng.uniform() < spec.missing_rate {
                    text.push_str("NA");
                } else {
                    text.push_str(&cell);
                }
            }
            text.push('\n');
        }
        out.push((cohort.name.clone(), text));
    }
    Ok(out)
}

/// Generated cohorts as parsed tables (identical to reading the files back).
pub fn generate(spec: &SynthSpec) -> Result<Vec<ExpressionTable>> {
    generate_text(spec)?
        .into_iter()
        .map(|(name, text)| parse_table(&text, &name, &name, &ParseOptions::default()))
        .collect()
}

/// Writes `<dir>/<cohort>.tsv` per cohort and returns the paths.
pub fn write_cohorts(spec: &SynthSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    generate_text(spec)?
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(format!("{name}.tsv"));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{drop_constant_features, preprocess};

    #[test]
    fn deterministic_text() {
        let a = generate_text(&SynthSpec::desk(7)).unwrap();
        let b = generate_text(&SynthSpec::desk(7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_text(&SynthSpec::desk(8)).unwrap());
    }

    #[test]
    fn clean_spec_needs_no_cleaning() {
        let spec = SynthSpec::gaussian(&DEFAULT_COHORTS, 20, 8, 8, 3.0, 1.0, 1);
        let tables = generate(&spec).unwrap();
        for t in &tables {
            assert_eq!(t.missing_count(), 0);
            assert_eq!(&drop_constant_features(t), t);
        }
        let (merged, _) = preprocess(&tables).unwrap();
        assert_eq!(merged.genes(), 8);
        assert_eq!(merged.samples(), 60);
    }

    #[test]
    fn constant_columns_exactly_removed() {
        let spec = SynthSpec {
            constant_columns: 5,
            ..SynthSpec::gaussian(&DEFAULT_COHORTS, 30, 10, 10, 3.0, 1.0, 2)
        };
        for t in generate(&spec).unwrap() {
            let d = drop_constant_features(&t);
            assert_eq!(t.genes() - d.genes(), 5);
            assert!(d.gene_names.iter().all(|g| g.starts_with('G')));
        }
    }

    #[test]
    fn omissions_are_disjoint_and_counted() {
        let spec = SynthSpec {
            omit_per_cohort: 2,
            missing_rate: 0.05,
            constant_columns: 2,
            ..SynthSpec::gaussian(&DEFAULT_COHORTS, 25, 12, 12, 3.0, 1.0, 3)
        };
        let tables = generate(&spec).unwrap();
        for t in &tables {
            assert_eq!(t.genes(), 12 - 2 + 2);
        }
        let (merged, _) = preprocess(&tables).unwrap();
        assert_eq!(merged.genes(), spec.expected_features());
        assert_eq!(merged.genes(), 6);
        assert_eq!(merged.samples(), spec.expected_samples());
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SynthSpec::desk(0);
        spec.omit_per_cohort = 20;
        assert!(spec.validate(5).is_err());
        let spec = SynthSpec::gaussian(&DEFAULT_COHORTS, 3, 5, 5, 1.0, 1.0, 0);
        assert!(spec.validate(5).is_err());
    }

    #[test]
    fn values_have_four_decimals() {
        let (_, text) = &generate_text(&SynthSpec::desk(1)).unwrap()[0];
        let row = text.lines().nth(1).unwrap();
        for cell in row.split('\t').skip(1).filter(|c| *c != "NA") {
            let frac = cell.split('.').nth(1).unwrap();
            assert_eq!(frac.len(), 4, "{cell}");
        }
    }
}
