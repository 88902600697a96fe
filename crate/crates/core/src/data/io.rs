//! Plain-text dataset files.
//!
//! ```text
//! K input_dim N domain has_labels
//! x_0,x_1,...,x_{d-1}[,label]
//! ```
//! Values are written in shortest round-trip form so save/load is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};
use crate::prompt_bank::DomainId;

pub fn render_dataset(dataset: &Dataset) -> String {
    let labels = dataset.labels.as_deref();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {} {} {}",
        dataset.num_classes(),
        dataset.input_dim(),
        dataset.len(),
        dataset.domain().as_str(),
        u8::from(labels.is_some())
    );
    for (i, row) in dataset.inputs().outer_iter().enumerate() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v:?}");
        }
        if let Some(labels) = labels {
            let _ = write!(out, ",{}", labels[i]);
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_dataset(dataset))?;
    Ok(())
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header_err = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(header_err("header must be `K input_dim N domain has_labels`"));
    }
    let num_classes: usize = fields[0].parse().map_err(|_| header_err("bad K"))?;
    let input_dim: usize = fields[1].parse().map_err(|_| header_err("bad input_dim"))?;
    let n: usize = fields[2].parse().map_err(|_| header_err("bad N"))?;
    let domain: DomainId = fields[3].parse().map_err(|_| header_err("bad domain"))?;
    let has_labels = match fields[4] {
        "1" => true,
        "0" => false,
        _ => return Err(header_err("has_labels must be 0 or 1")),
    };
    let width = input_dim + usize::from(has_labels);

    let mut inputs = Array2::zeros((n, input_dim));
    let mut labels = Vec::with_capacity(if has_labels { n } else { 0 });
    let mut rows = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        if rows == n {
            return Err(err(format!("more than the {n} rows declared in the header")));
        }
        let cells: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(err(format!("expected {width} fields, found {}", cells.len())));
        }
        for (j, cell) in cells[..input_dim].iter().enumerate() {
            inputs[[rows, j]] = cell.parse::<f64>().map_err(|_| err(format!("bad value `{cell}`")))?;
        }
        if has_labels {
            let cell = cells[input_dim];
            let y: usize = cell.parse().map_err(|_| err(format!("bad label `{cell}`")))?;
            if y >= num_classes {
                return Err(err(format!("label {y} out of range for K = {num_classes}")));
            }
            labels.push(y);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("header declares {n} rows, found {rows}"),
        });
    }
    Dataset::new(inputs, has_labels.then_some(labels), domain, num_classes)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_dataset(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip() {
        let ds = Dataset::new(
            array![[0.1, -2.5e-310], [1.0 / 3.0, f64::MAX]],
            Some(vec![1, 0]),
            DomainId::Target,
            2,
        )
        .unwrap();
        let back = parse_dataset(&render_dataset(&ds)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn header_only_is_empty() {
        let ds = parse_dataset("3 4 0 source 1\n").unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.input_dim(), 4);
    }

    #[test]
    fn label_column_mismatch() {
        let text = "2 2 2 source 1\n0.5,1.0,1\n0.5,1.0\n";
        match parse_dataset(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_dataset("2 2 1 source 0\n0.5,1.0,1\n").is_err());
        assert!(parse_dataset("2 2 2 source 0\n0.5,1.0\n").is_err());
        assert!(parse_dataset("2 2 source 0\n").is_err());
        assert!(parse_dataset("2 2 1 source 1\n0.5,x,1\n").is_err());
    }
}
