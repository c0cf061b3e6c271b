//! Feature matrix and choice labels.
//!
//! Labels are ternary: +1 / −1 are observed choices, 0 marks an unobserved
//! node. Unobserved nodes stay in the graph (their offsets are still
//! regularized) but contribute no likelihood term anywhere.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::SocialGraph;

pub type Label = i8;

pub fn is_labeled(y: Label) -> bool {
    y != 0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    num_nodes: usize,
    num_features: usize,
    labels: Vec<Label>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, num_features: usize, labels: Vec<Label>) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::validation("feature dimension must be positive"));
        }
        if features.len() % num_features != 0 {
            return Err(Error::dimension(format!(
                "feature buffer length {} is not a multiple of d={num_features}",
                features.len()
            )));
        }
        let num_nodes = features.len() / num_features;
        if labels.len() != num_nodes {
            return Err(Error::dimension(format!(
                "{} labels for {num_nodes} feature rows",
                labels.len()
            )));
        }
        if let Some(x) = features.iter().find(|x| !x.is_finite()) {
            return Err(Error::validation(format!("non-finite feature value {x}")));
        }
        if let Some(y) = labels.iter().find(|y| ![-1, 0, 1].contains(*y)) {
            return Err(Error::validation(format!(
                "label {y} outside {{-1,0,1}}"
            )));
        }
        Ok(Self {
            features,
            num_nodes,
            num_features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        let d = self.num_features;
        &self.features[node * d..(node + 1) * d]
    }

    pub fn label(&self, node: usize) -> Label {
        self.labels[node]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn labeled_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes).filter(|&i| is_labeled(self.labels[i]))
    }

    /// Copy with the given nodes recoded as unobserved. The receiver is left
    /// untouched, so original labels stay recoverable.
    pub fn masked(&self, hold_out: &[usize]) -> Dataset {
        let mut masked = self.clone();
        for &i in hold_out {
            masked.labels[i] = 0;
        }
        masked
    }

    /// Copy with replaced labels.
    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), self.num_features, labels)
    }

    /// Loads features (CSV, optional header, row order = node id) and labels
    /// (CSV `node_id,label`, missing ids default to unobserved) against a
    /// graph whose node count fixes the expected row count.
    pub fn from_files(
        features_path: impl AsRef<Path>,
        labels_path: impl AsRef<Path>,
        graph: &SocialGraph,
    ) -> Result<Self> {
        let (features, num_features, rows) = read_features_csv(features_path.as_ref())?;
        if rows != graph.num_nodes() {
            return Err(Error::dimension(format!(
                "{rows} feature rows for a {}-node graph",
                graph.num_nodes()
            )));
        }
        let labels = read_labels_csv(labels_path.as_ref(), graph.num_nodes())?;
        Dataset::new(features, num_features, labels)
    }

    /// Features as CSV without a header, one row per node.
    pub fn write_features_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        for i in 0..self.num_nodes {
            let row = self.feature_row(i);
            let mut line = String::new();
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{x}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Labels as `node_id,label` rows with a header.
    pub fn write_labels_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "node_id,label")?;
        for (i, y) in self.labels.iter().enumerate() {
            writeln!(w, "{i},{y}")?;
        }
        Ok(())
    }
}

fn csv_parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_features_csv(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_parse_err(path, 0, e.to_string()))?;

    let mut features = Vec::new();
    let mut num_features = None;
    let mut rows = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let line_no = idx + 1;
        let record = record.map_err(|e| csv_parse_err(path, line_no, e.to_string()))?;
        let mut row = Vec::with_capacity(record.len());
        let mut parse_failed = false;
        for field in record.iter() {
            match field.trim().parse::<f64>() {
                Ok(x) => row.push(x),
                Err(_) => {
                    parse_failed = true;
                    break;
                }
            }
        }
        if parse_failed {
            // A non-numeric first row is an optional header; anywhere else
            // it is malformed data.
            if idx == 0 {
                continue;
            }
            return Err(csv_parse_err(path, line_no, "non-numeric feature field"));
        }
        match num_features {
            None => num_features = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(csv_parse_err(
                    path,
                    line_no,
                    format!("expected {d} columns, found {}", row.len()),
                ))
            }
            _ => {}
        }
        features.extend_from_slice(&row);
        rows += 1;
    }
    let d = num_features.ok_or_else(|| Error::Empty(format!("{}: no feature rows", path.display())))?;
    Ok((features, d, rows))
}

fn read_labels_csv(path: &Path, num_nodes: usize) -> Result<Vec<Label>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_parse_err(path, 0, e.to_string()))?;

    let mut labels = vec![0 as Label; num_nodes];
    let mut seen = vec![false; num_nodes];
    for (idx, record) in reader.records().enumerate() {
        let line_no = idx + 1;
        let record = record.map_err(|e| csv_parse_err(path, line_no, e.to_string()))?;
        if record.len() < 2 {
            return Err(csv_parse_err(path, line_no, "expected node_id,label"));
        }
        let id_field = record.get(0).unwrap().trim();
        let node: usize = match id_field.parse() {
            Ok(n) => n,
            // An optional one-line header like "node_id,label".
            Err(_) if idx == 0 => continue,
            Err(e) => return Err(csv_parse_err(path, line_no, format!("bad node id: {e}"))),
        };
        if node >= num_nodes {
            return Err(Error::dimension(format!(
                "{}:{}: node id {node} outside [0,{num_nodes})",
                path.display(),
                line_no
            )));
        }
        if seen[node] {
            return Err(Error::validation(format!(
                "{}:{}: duplicate label for node {node}",
                path.display(),
                line_no
            )));
        }
        let value: i64 = record
            .get(1)
            .unwrap()
            .trim()
            .parse()
            .map_err(|e| csv_parse_err(path, line_no, format!("bad label: {e}")))?;
        if ![-1, 0, 1].contains(&value) {
            return Err(Error::validation(format!(
                "{}:{}: label {value} outside {{-1,0,1}}",
                path.display(),
                line_no
            )));
        }
        labels[node] = value as Label;
        seen[node] = true;
    }
    Ok(labels)
}
