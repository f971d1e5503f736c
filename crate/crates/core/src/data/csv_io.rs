//! CSV ingestion and split persistence.
//!
//! Loading streams the file up to three times: one pass to detect column
//! types, one to count category frequencies, one to emit the encoded matrix.
//! Keeps memory at O(output) even for million-row files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::LabeledDataset;

/// How string-valued columns become numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalPolicy {
    /// Categories map to 0,1,2,... by descending frequency, ties broken
    /// lexicographically. Keeps every column usable in threshold conditions.
    OrdinalByFrequency,
    /// One indicator column per category, named `column=value`.
    OneHot,
}

struct ColumnScan {
    numeric: bool,
    min: f64,
    has_missing: bool,
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_cell(cell: &str) -> Option<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return None;
    }
    trimmed.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Load a CSV with a header row into a [`LabeledDataset`].
///
/// The label column must parse to {0,1} on every row. The optional order
/// column is pulled out as the temporal split key and is not a feature.
/// Missing numeric cells are imputed one below the column minimum so they
/// route consistently to the `<=` branch of any split.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    order_column: Option<&str>,
    policy: CategoricalPolicy,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    {
        let mut sorted = headers.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("duplicate column '{}'", w[0])));
        }
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("label column '{label_column}' not found")))?;
    let order_idx = match order_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("order column '{name}' not found")))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && Some(i) != order_idx)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Schema("no feature columns left after label/order".into()));
    }

    // Pass 1: column types, numeric minima, labels, order key.
    let mut scans: Vec<ColumnScan> = feature_cols
        .iter()
        .map(|_| ColumnScan {
            numeric: true,
            min: f64::INFINITY,
            has_missing: false,
        })
        .collect();
    let mut labels: Vec<u8> = Vec::new();
    let mut order_key: Vec<f64> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {row}: {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        let label_cell = record.get(label_idx).unwrap_or("");
        match parse_cell(label_cell) {
            Some(v) if v == 0.0 || v == 1.0 => labels.push(v as u8),
            _ => {
                return Err(Error::Data(format!(
                    "row {row}: label '{label_cell}' is not 0 or 1"
                )))
            }
        }
        if let Some(oi) = order_idx {
            let cell = record.get(oi).unwrap_or("");
            let v = parse_cell(cell).ok_or_else(|| {
                Error::Data(format!("row {row}: order value '{cell}' is not numeric"))
            })?;
            order_key.push(v);
        }
        for (k, &ci) in feature_cols.iter().enumerate() {
            let cell = record.get(ci).unwrap_or("");
            if cell.trim().is_empty() {
                scans[k].has_missing = true;
                continue;
            }
            match parse_cell(cell) {
                Some(v) => {
                    if v < scans[k].min {
                        scans[k].min = v;
                    }
                }
                None => scans[k].numeric = false,
            }
        }
    }
    let n_rows = labels.len();

    // Pass 2: category frequencies for non-numeric columns.
    let categorical: Vec<bool> = scans.iter().map(|s| !s.numeric).collect();
    let mut freq: Vec<HashMap<String, u64>> = categorical.iter().map(|_| HashMap::new()).collect();
    if categorical.iter().any(|&c| c) {
        let mut reader = open_reader(path)?;
        for record in reader.records() {
            let record = record?;
            for (k, &ci) in feature_cols.iter().enumerate() {
                if categorical[k] {
                    let cell = record.get(ci).unwrap_or("").trim().to_string();
                    *freq[k].entry(cell).or_insert(0) += 1;
                }
            }
        }
    }
    // Category order: descending frequency, ties lexicographic.
    let mut codes: Vec<HashMap<String, usize>> = Vec::with_capacity(feature_cols.len());
    let mut ordered_cats: Vec<Vec<String>> = Vec::with_capacity(feature_cols.len());
    for f in &freq {
        let mut cats: Vec<(&String, &u64)> = f.iter().collect();
        cats.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let ordered: Vec<String> = cats.iter().map(|(c, _)| (*c).clone()).collect();
        codes.push(
            ordered
                .iter()
                .enumerate()
                .map(|(i, c)| (c.clone(), i))
                .collect(),
        );
        ordered_cats.push(ordered);
    }

    // Output schema.
    let mut out_names: Vec<String> = Vec::new();
    // For each input feature column: (output start, width) into out_names.
    let mut out_offsets: Vec<(usize, usize)> = Vec::with_capacity(feature_cols.len());
    for (k, &ci) in feature_cols.iter().enumerate() {
        let name = &headers[ci];
        if !categorical[k] || matches!(policy, CategoricalPolicy::OrdinalByFrequency) {
            out_offsets.push((out_names.len(), 1));
            out_names.push(name.clone());
        } else {
            let start = out_names.len();
            for cat in &ordered_cats[k] {
                out_names.push(format!("{name}={cat}"));
            }
            out_offsets.push((start, ordered_cats[k].len()));
        }
    }
    {
        let mut sorted = out_names.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!(
                "encoded column name '{}' collides",
                w[0]
            )));
        }
    }

    // Pass 3: emit the encoded matrix.
    let n_out_cols = out_names.len();
    let mut features = vec![0.0f64; n_rows * n_out_cols];
    let mut reader = open_reader(path)?;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let base = row * n_out_cols;
        for (k, &ci) in feature_cols.iter().enumerate() {
            let cell = record.get(ci).unwrap_or("");
            let (start, width) = out_offsets[k];
            if !categorical[k] {
                let v = match parse_cell(cell) {
                    Some(v) => v,
                    None => {
                        // Sentinel one below the column minimum.
                        if scans[k].min.is_finite() {
                            scans[k].min - 1.0
                        } else {
                            0.0
                        }
                    }
                };
                features[base + start] = v;
            } else {
                let code = codes[k][cell.trim()];
                match policy {
                    CategoricalPolicy::OrdinalByFrequency => {
                        features[base + start] = code as f64;
                    }
                    CategoricalPolicy::OneHot => {
                        for w in 0..width {
                            features[base + start + w] = 0.0;
                        }
                        features[base + start + code] = 1.0;
                    }
                }
            }
        }
    }

    let ds = LabeledDataset::from_parts(out_names, features, labels)?;
    if order_idx.is_some() {
        ds.with_order_key(order_key)
    } else {
        Ok(ds)
    }
}

/// Persist a dataset split as CSV: encoded feature columns, then the label,
/// then the order key when present.
pub fn write_csv(ds: &LabeledDataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut out = BufWriter::new(file);
    let mut header = ds.feature_names().join(",");
    header.push(',');
    header.push_str(label_column);
    if ds.order_key().is_some() {
        header.push_str(",__order");
    }
    writeln!(out, "{header}")?;
    let mut line = String::new();
    for i in 0..ds.n_rows() {
        line.clear();
        for v in ds.row(i) {
            let _ = write!(line, "{v},");
        }
        let _ = write!(line, "{}", ds.label(i));
        if let Some(key) = ds.order_key() {
            let _ = write!(line, ",{}", key[i]);
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Plain-text `key=value` sidecar manifest.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[(&str, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn parses_numeric_csv() {
        let f = write_temp("amount,label\n10.5,0\n3.25,1\n7,0\n");
        let ds = load_csv(f.path(), "label", None, CategoricalPolicy::OrdinalByFrequency).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_features(), 1);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.value(1, 0), 3.25);
    }

    #[test]
    fn ordinal_encoding_by_descending_frequency() {
        // b appears 3x, a 2x, c 1x -> b=0, a=1, c=2.
        let f = write_temp("cat,label\nb,0\na,0\nb,1\nc,0\na,1\nb,0\n");
        let ds = load_csv(f.path(), "label", None, CategoricalPolicy::OrdinalByFrequency).unwrap();
        let col: Vec<f64> = (0..6).map(|i| ds.value(i, 0)).collect();
        assert_eq!(col, vec![0.0, 1.0, 0.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn ordinal_encoding_breaks_ties_lexicographically() {
        let f = write_temp("cat,label\nz,0\ny,0\nx,1\n");
        let ds = load_csv(f.path(), "label", None, CategoricalPolicy::OrdinalByFrequency).unwrap();
        // All frequency 1 -> x=0, y=1, z=2.
        let col: Vec<f64> = (0..3).map(|i| ds.value(i, 0)).collect();
        assert_eq!(col, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn one_hot_encoding() {
        let f = write_temp("cat,label\nb,0\na,0\nb,1\n");
        let ds = load_csv(f.path(), "label", None, CategoricalPolicy::OneHot).unwrap();
        assert_eq!(ds.feature_names(), &["cat=b".to_string(), "cat=a".to_string()]);
        assert_eq!(ds.row(0), &[1.0, 0.0]);
        assert_eq!(ds.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn missing_numeric_gets_sentinel_below_min() {
        let f = write_temp("x,label\n5,0\n,1\n2,0\n");
        let ds = load_csv(f.path(), "label", None, CategoricalPolicy::OrdinalByFrequency).unwrap();
        assert_eq!(ds.value(1, 0), 1.0); // min 2 -> sentinel 1
    }

    #[test]
    fn bad_label_reports_row_index() {
        let f = write_temp("x,label\n5,0\n2,7\n");
        let err = load_csv(f.path(), "label", None, CategoricalPolicy::OrdinalByFrequency)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1"), "{msg}");
    }

    #[test]
    fn missing_label_column_is_schema_error() {
        let f = write_temp("x,y\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), "label", None, CategoricalPolicy::OrdinalByFrequency),
            Err(crate::error::Error::Schema(_))
        ));
    }

    #[test]
    fn order_column_becomes_key_not_feature() {
        let f = write_temp("x,t,label\n1,30,0\n2,10,1\n3,20,0\n");
        let ds = load_csv(f.path(), "label", Some("t"), CategoricalPolicy::OrdinalByFrequency)
            .unwrap();
        assert_eq!(ds.n_features(), 1);
        assert_eq!(ds.order_key().unwrap(), &[30.0, 10.0, 20.0]);
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let f = write_temp("x,y,label\n1.5,2,0\n3.75,4,1\n");
        let ds = load_csv(f.path(), "label", None, CategoricalPolicy::OrdinalByFrequency).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, out.path(), "label").unwrap();
        let back = load_csv(out.path(), "label", None, CategoricalPolicy::OrdinalByFrequency)
            .unwrap();
        assert_eq!(back.n_rows(), ds.n_rows());
        assert_eq!(back.labels(), ds.labels());
        for i in 0..ds.n_rows() {
            assert_eq!(back.row(i), ds.row(i));
        }
    }
}
