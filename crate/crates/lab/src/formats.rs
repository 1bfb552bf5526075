//! On-disk data: header-bearing delimited text described by a schema file,
//! the normalized round-trip format, and libsvm conversion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use spectral_core::data::{ColumnKind, Dataset, Scaling};
use spectral_core::{Example, Target};

use crate::keyvalue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Numeric,
    Categorical,
    Label,
    /// Present in the file but not used.
    Ignore,
}

impl std::str::FromStr for Role {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "numeric" => Ok(Role::Numeric),
            "categorical" => Ok(Role::Categorical),
            "label" => Ok(Role::Label),
            "ignore" => Ok(Role::Ignore),
            other => bail!("unknown column role '{other}' (expected numeric, categorical, label or ignore)"),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Numeric => "numeric",
            Role::Categorical => "categorical",
            Role::Label => "label",
            Role::Ignore => "ignore",
        })
    }
}

/// Column roles keyed by header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    roles: BTreeMap<String, Role>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut roles = BTreeMap::new();
        for (line, key, value) in keyvalue::parse(text)? {
            let role: Role = value.parse().with_context(|| format!("schema line {line}"))?;
            if roles.insert(key.clone(), role).is_some() {
                bail!("schema line {line}: column '{key}' listed twice");
            }
        }
        let labels = roles.values().filter(|r| **r == Role::Label).count();
        if labels != 1 {
            bail!("schema needs exactly one label column, found {labels}");
        }
        Ok(Schema { roles })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading schema {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in schema {}", path.display()))
    }

    pub fn role(&self, column: &str) -> Option<Role> {
        self.roles.get(column).copied()
    }
}

/// Categorical levels and label names fitted on one file, reusable on another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    /// Levels of each categorical column, sorted lexicographically.
    pub levels: BTreeMap<String, Vec<String>>,
    /// Original label strings; class `k` is `labels[k]`.
    pub labels: Vec<String>,
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path, delimiter: u8) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        bail!("{}: empty file", path.display());
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // row 1 is the header
        let record = record.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(RawTable { header, rows })
}

/// Label strings ordered numerically when they all parse as numbers,
/// lexicographically otherwise.
fn order_labels(labels: BTreeSet<String>) -> Vec<String> {
    let mut out: Vec<String> = labels.into_iter().collect();
    if out.iter().all(|l| l.parse::<f64>().is_ok()) {
        out.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    out
}

fn fit_encoding(table: &RawTable, schema: &Schema) -> Result<Encoding> {
    let mut levels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut labels = BTreeSet::new();
    for (j, name) in table.header.iter().enumerate() {
        match schema.role(name) {
            Some(Role::Categorical) => {
                let set = levels.entry(name.clone()).or_default();
                for row in &table.rows {
                    set.insert(row[j].clone());
                }
            }
            Some(Role::Label) => {
                for row in &table.rows {
                    labels.insert(row[j].clone());
                }
            }
            _ => {}
        }
    }
    Ok(Encoding {
        levels: levels.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        labels: order_labels(labels),
    })
}

fn encode(table: &RawTable, schema: &Schema, encoding: &Encoding, path: &Path) -> Result<Dataset> {
    for name in &table.header {
        if schema.role(name).is_none() {
            bail!("{}: column '{name}' has no role in the schema", path.display());
        }
    }
    let label_col = table
        .header
        .iter()
        .position(|name| schema.role(name) == Some(Role::Label))
        .ok_or_else(|| anyhow!("{}: the schema's label column is missing from the header", path.display()))?;

    let mut names = Vec::new();
    let mut kinds = Vec::new();
    for name in &table.header {
        match schema.role(name) {
            Some(Role::Numeric) => {
                names.push(name.clone());
                kinds.push(ColumnKind::Numeric);
            }
            Some(Role::Categorical) => {
                for level in encoding.levels.get(name).map(Vec::as_slice).unwrap_or_default() {
                    names.push(format!("{name}={level}"));
                    kinds.push(ColumnKind::Indicator);
                }
            }
            _ => {}
        }
    }

    let class_of: BTreeMap<&str, usize> =
        encoding.labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    let mut examples = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        if row.len() != table.header.len() {
            bail!(
                "{}: row {line}: expected {} fields, found {}",
                path.display(),
                table.header.len(),
                row.len()
            );
        }
        let mut x = Vec::with_capacity(names.len());
        for (j, name) in table.header.iter().enumerate() {
            match schema.role(name) {
                Some(Role::Numeric) => {
                    let v: f64 = row[j].parse().map_err(|_| {
                        anyhow!("{}: row {line}, column '{name}': cannot parse '{}' as a number", path.display(), row[j])
                    })?;
                    if !v.is_finite() {
                        bail!("{}: row {line}, column '{name}': value is not finite", path.display());
                    }
                    x.push(v);
                }
                Some(Role::Categorical) => {
                    // levels unseen when the encoding was fitted become all zeros
                    for level in encoding.levels.get(name).map(Vec::as_slice).unwrap_or_default() {
                        x.push(if *level == row[j] { 1.0 } else { 0.0 });
                    }
                }
                _ => {}
            }
        }
        let label = *class_of.get(row[label_col].as_str()).ok_or_else(|| {
            anyhow!(
                "{}: row {line}, column '{}': label '{}' was not seen when fitting",
                path.display(),
                table.header[label_col],
                row[label_col]
            )
        })?;
        examples.push(Example::classified(x, label));
    }
    Ok(Dataset::new(examples, encoding.labels.len(), names, kinds)?)
}

/// Loads a delimited file, one-hot encodes categoricals, relabels classes
/// to `0..K` and min-max scales numeric columns.
pub fn load_delimited(path: &Path, schema: &Schema, delimiter: u8) -> Result<(Dataset, Encoding)> {
    let table = read_table(path, delimiter)?;
    let encoding = fit_encoding(&table, schema)?;
    let mut ds = encode(&table, schema, &encoding, path)?;
    ds.fit_scaling();
    Ok((ds, encoding))
}

/// Loads a second file (a separate test set, say) with an encoding and
/// scaling fitted elsewhere.
pub fn load_delimited_with(
    path: &Path,
    schema: &Schema,
    delimiter: u8,
    encoding: &Encoding,
    scaling: &Scaling,
) -> Result<Dataset> {
    let table = read_table(path, delimiter)?;
    let mut ds = encode(&table, schema, encoding, path)?;
    if scaling.ranges.len() != ds.n_features() {
        bail!(
            "{}: scaling covers {} columns but the encoded data has {}",
            path.display(),
            scaling.ranges.len(),
            ds.n_features()
        );
    }
    ds.apply_scaling(scaling);
    Ok(ds)
}

pub const NORMALIZED_MAGIC: &str = "# spectral-lab normalized v1";

fn kind_name(kind: ColumnKind) -> &'static str {
    match kind {
        ColumnKind::Numeric => "numeric",
        ColumnKind::Indicator => "indicator",
    }
}

/// Writes the normalized format: metadata comment lines followed by a CSV
/// table with the target first. Floats are written in shortest round-trip form.
pub fn write_normalized(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{NORMALIZED_MAGIC}")?;
    writeln!(out, "# classes = {}", ds.n_classes)?;
    let kinds: Vec<&str> = ds.column_kinds.iter().map(|k| kind_name(*k)).collect();
    writeln!(out, "# kinds = {}", kinds.join(" "))?;
    if let Some(scaling) = &ds.scaling {
        let ranges: Vec<String> = scaling
            .ranges
            .iter()
            .map(|r| match r {
                Some((lo, hi)) => format!("{lo}:{hi}"),
                None => "-".to_owned(),
            })
            .collect();
        writeln!(out, "# scaling = {}", ranges.join(" "))?;
    }
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["target".to_owned()];
    header.extend(ds.feature_names.iter().cloned());
    writer.write_record(&header)?;
    for z in &ds.examples {
        let mut record = vec![match z.target {
            Target::Class(k) => k.to_string(),
            Target::Real(y) => y.to_string(),
        }];
        record.extend(z.features.iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    let bytes = writer.into_inner().map_err(|e| anyhow!("{e}"))?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn is_normalized(path: &Path) -> Result<bool> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    Ok(first.trim_end() == NORMALIZED_MAGIC)
}

pub fn read_normalized(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(NORMALIZED_MAGIC) {
        bail!("{}: not a normalized data file", path.display());
    }
    let mut meta = BTreeMap::new();
    let mut body_start = NORMALIZED_MAGIC.len() + 1;
    for line in lines {
        let Some(rest) = line.strip_prefix('#') else { break };
        let (k, v) = rest
            .split_once('=')
            .ok_or_else(|| anyhow!("{}: malformed metadata line '{line}'", path.display()))?;
        meta.insert(k.trim().to_owned(), v.trim().to_owned());
        body_start += line.len() + 1;
    }
    let n_classes: usize = meta
        .get("classes")
        .ok_or_else(|| anyhow!("{}: missing 'classes' metadata", path.display()))?
        .parse()?;
    let kinds = meta
        .get("kinds")
        .map(|s| {
            s.split_whitespace()
                .map(|k| match k {
                    "numeric" => Ok(ColumnKind::Numeric),
                    "indicator" => Ok(ColumnKind::Indicator),
                    other => Err(anyhow!("unknown column kind '{other}'")),
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?
        .unwrap_or_default();
    let scaling = meta
        .get("scaling")
        .map(|s| {
            s.split_whitespace()
                .map(|r| {
                    if r == "-" {
                        return Ok(None);
                    }
                    let (lo, hi) = r.split_once(':').ok_or_else(|| anyhow!("malformed range '{r}'"))?;
                    Ok(Some((lo.parse()?, hi.parse()?)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;

    let mut reader = csv::ReaderBuilder::new().from_reader(&text.as_bytes()[body_start.min(text.len())..]);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.first().map(String::as_str) != Some("target") {
        bail!("{}: the first column must be 'target'", path.display());
    }
    let names: Vec<String> = header[1..].to_vec();
    let mut examples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = || format!("{}: data row {}", path.display(), i + 1);
        let x = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(row)?;
        let t = &record[0];
        examples.push(if n_classes > 0 {
            Example::classified(x, t.parse().with_context(row)?)
        } else {
            Example::regression(x, t.parse().with_context(row)?)
        });
    }
    let kinds = if kinds.is_empty() { vec![ColumnKind::Numeric; names.len()] } else { kinds };
    let mut ds = Dataset::new(examples, n_classes, names, kinds)?;
    ds.scaling = scaling.map(|ranges| Scaling { ranges });
    Ok(ds)
}

/// Converts libsvm lines (`label idx:value ...`, 1-based indices, absent
/// entries zero) to a delimited file plus its schema.
pub fn convert_libsvm(input: &Path, output: &Path, schema_out: &Path) -> Result<usize> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let mut rows: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    let mut width = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label = parts.next().unwrap_or_default().to_owned();
        let mut entries = Vec::new();
        for part in parts {
            let (idx, value) = part
                .split_once(':')
                .ok_or_else(|| anyhow!("{}: line {}: malformed entry '{part}'", input.display(), i + 1))?;
            let idx: usize = idx
                .parse()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| anyhow!("{}: line {}: bad feature index '{idx}'", input.display(), i + 1))?;
            let value: f64 = value
                .parse()
                .map_err(|_| anyhow!("{}: line {}: bad value '{value}'", input.display(), i + 1))?;
            width = width.max(idx);
            entries.push((idx, value));
        }
        rows.push((label, entries));
    }
    if rows.is_empty() {
        bail!("{}: empty file", input.display());
    }
    let mut writer = csv::Writer::from_path(output).with_context(|| format!("writing {}", output.display()))?;
    let mut header = vec!["label".to_owned()];
    header.extend((1..=width).map(|j| format!("f{j}")));
    writer.write_record(&header)?;
    for (label, entries) in &rows {
        let mut dense = vec![0.0; width];
        for &(idx, value) in entries {
            dense[idx - 1] = value;
        }
        let mut record = vec![label.clone()];
        record.extend(dense.iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    let mut schema = String::from("label = label\n");
    for j in 1..=width {
        schema.push_str(&format!("f{j} = numeric\n"));
    }
    fs::write(schema_out, schema).with_context(|| format!("writing {}", schema_out.display()))?;
    Ok(rows.len())
}
