use std::collections::HashSet;
use std::fs;
use std::path::Path;

use csv::{ReaderBuilder, Trim};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::format::format_real;

pub const SAMPLE_ID_HEADER: &str = "sampleId";

#[derive(Clone, Debug, PartialEq)]
pub struct ParseOptions {
    /// Field delimiter; detected from the header line when `None`.
    pub delimiter: Option<u8>,
    /// Tokens that mark a missing value. Matching is exact after trimming.
    pub na_tokens: Vec<String>,
    pub allow_duplicate_ids: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            delimiter: None,
            na_tokens: vec!["NA".into(), "NaN".into(), String::new()],
            allow_duplicate_ids: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueFormat {
    /// 17 significant digits; parses back to the identical `f64`.
    Exact,
    /// Fixed number of decimals.
    Decimals(usize),
}

/// A cohort's expression table: samples × genes with a missing-value mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionTable {
    pub cohort: String,
    pub sample_ids: Vec<String>,
    pub gene_names: Vec<String>,
    /// Missing slots hold 0.0; consult `missing`.
    pub values: Matrix,
    /// Row-major, same shape as `values`.
    pub missing: Vec<bool>,
}

impl ExpressionTable {
    pub fn new(
        cohort: impl Into<String>,
        sample_ids: Vec<String>,
        gene_names: Vec<String>,
        values: Matrix,
        missing: Vec<bool>,
    ) -> Result<Self> {
        if values.shape() != (sample_ids.len(), gene_names.len()) || missing.len() != values.len() {
            return Err(Error::dim(
                "expression table",
                format!(
                    "{} samples x {} genes with values {:?} and {} mask slots",
                    sample_ids.len(),
                    gene_names.len(),
                    values.shape(),
                    missing.len()
                ),
            ));
        }
        check_unique(&gene_names, "gene name")?;
        check_unique(&sample_ids, "sample id")?;
        let mut values = values;
        for (v, &m) in values.as_mut_slice().iter_mut().zip(&missing) {
            if m {
                *v = 0.0;
            }
        }
        Ok(ExpressionTable {
            cohort: cohort.into(),
            sample_ids,
            gene_names,
            values,
            missing,
        })
    }

    pub fn samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn genes(&self) -> usize {
        self.gene_names.len()
    }

    pub fn is_missing(&self, sample: usize, gene: usize) -> bool {
        self.missing[sample * self.genes() + gene]
    }

    /// Value at a slot, `None` when missing.
    pub fn value(&self, sample: usize, gene: usize) -> Option<f64> {
        (!self.is_missing(sample, gene)).then(|| self.values.get(sample, gene))
    }

    pub fn gene_index(&self, name: &str) -> Option<usize> {
        self.gene_names.iter().position(|g| g == name)
    }

    pub fn sample_index(&self, id: &str) -> Option<usize> {
        self.sample_ids.iter().position(|s| s == id)
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Keeps the given gene columns, in the given order.
    pub fn select_genes(&self, columns: &[usize]) -> ExpressionTable {
        let g = self.genes();
        let missing = (0..self.samples())
            .flat_map(|r| columns.iter().map(move |&c| r * g + c))
            .map(|i| self.missing[i])
            .collect();
        ExpressionTable {
            cohort: self.cohort.clone(),
            sample_ids: self.sample_ids.clone(),
            gene_names: columns
                .iter()
                .map(|&c| self.gene_names[c].clone())
                .collect(),
            values: self.values.select_cols(columns),
            missing,
        }
    }

    pub fn to_delimited(&self, delimiter: u8, format: ValueFormat) -> String {
        let sep = delimiter as char;
        let mut out = String::new();
        out.push_str(SAMPLE_ID_HEADER);
        for g in &self.gene_names {
            out.push(sep);
            out.push_str(g);
        }
        out.push('\n');
        for (r, id) in self.sample_ids.iter().enumerate() {
            out.push_str(id);
            for c in 0..self.genes() {
                out.push(sep);
                match self.value(r, c) {
                    None => out.push_str("NA"),
                    Some(v) => match format {
                        ValueFormat::Exact => out.push_str(&format_real(v)),
                        ValueFormat::Decimals(d) => out.push_str(&format!("{v:.d$}")),
                    },
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path, delimiter: u8, format: ValueFormat) -> Result<()> {
        fs::write(path, self.to_delimited(delimiter, format)).map_err(|e| Error::io(path, e))
    }
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Data(format!("duplicate {what} `{n}`")));
        }
    }
    Ok(())
}

/// Tab if the header line contains one, otherwise comma.
pub fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parses a delimited expression table.
///
/// The sample-id column is the one headed `sampleId` (columns before it, such
/// as an exported row index, are ignored) or the first column when no header
/// cell says `sampleId`. Every later column is a gene.
pub fn parse_table(
    text: &str,
    cohort: &str,
    source_name: &str,
    opts: &ParseOptions,
) -> Result<ExpressionTable> {
    let delimiter = opts.delimiter.unwrap_or_else(|| detect_delimiter(text));
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .delimiter(delimiter)
        .from_reader(text.as_bytes());
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        row,
        column,
        message,
    };

    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(1, 0, e.to_string()))?,
        None => return Err(parse_err(1, 0, "empty input".into())),
    };
    let id_col = header
        .iter()
        .position(|h| h.eq_ignore_ascii_case(SAMPLE_ID_HEADER))
        .unwrap_or(0);
    let gene_names: Vec<String> = header.iter().skip(id_col + 1).map(str::to_string).collect();
    if gene_names.is_empty() {
        return Err(parse_err(1, id_col + 1, "no gene columns".into()));
    }
    let mut seen = HashSet::new();
    for (i, g) in gene_names.iter().enumerate() {
        if g.is_empty() {
            return Err(parse_err(1, id_col + 2 + i, "empty gene name".into()));
        }
        if !seen.insert(g.as_str()) {
            return Err(parse_err(
                1,
                id_col + 2 + i,
                format!("duplicate gene name `{g}`"),
            ));
        }
    }

    let width = header.len();
    let mut sample_ids = Vec::new();
    let mut ids_seen = HashSet::new();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| parse_err(row, 0, e.to_string()))?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != width {
            return Err(parse_err(
                row,
                record.len().min(width) + 1,
                format!("ragged row: {} fields, header has {width}", record.len()),
            ));
        }
        let id = record.get(id_col).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(parse_err(row, id_col + 1, "empty sample id".into()));
        }
        if !ids_seen.insert(id.clone()) && !opts.allow_duplicate_ids {
            return Err(parse_err(
                row,
                id_col + 1,
                format!("duplicate sample id `{id}`"),
            ));
        }
        sample_ids.push(id);
        for (j, cell) in record.iter().enumerate().skip(id_col + 1) {
            if opts.na_tokens.iter().any(|t| t == cell) {
                values.push(0.0);
                missing.push(true);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    values.push(v);
                    missing.push(false);
                }
                _ => return Err(parse_err(row, j + 1, format!("non-numeric value `{cell}`"))),
            }
        }
    }
    if sample_ids.is_empty() {
        return Err(parse_err(2, 0, "no data rows".into()));
    }
    let values = Matrix::from_vec(sample_ids.len(), gene_names.len(), values)?;
    Ok(ExpressionTable {
        cohort: cohort.to_string(),
        sample_ids,
        gene_names,
        values,
        missing,
    })
}

/// Reads a table file; the cohort name is the file stem.
pub fn read_table(path: &Path, opts: &ParseOptions) -> Result<ExpressionTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cohort = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cohort".into());
    parse_table(&text, &cohort, &path.display().to_string(), opts)
}
