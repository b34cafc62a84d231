//! CSV dataset format: header `group,y,x1,...,xp`, one row per observation,
//! rows of a group in one contiguous block.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::MixedModelData;
use crate::error::{Error, Result};

pub fn read_csv<R: Read>(reader: R) -> Result<MixedModelData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "group" || &headers[1] != "y" {
        return Err(Error::Format(format!(
            "expected header `group,y,x1,...,xp`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let p = headers.len() - 2;
    for (k, h) in headers.iter().skip(2).enumerate() {
        if h != format!("x{}", k + 1) {
            return Err(Error::Format(format!("column {} should be `x{}`, got `{h}`", k + 3, k + 1)));
        }
    }

    let mut sizes: Vec<usize> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut current: Option<String> = None;
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        if rec.len() != p + 2 {
            return Err(Error::Format(format!("row {row}: {} fields, expected {}", rec.len(), p + 2)));
        }
        let label = &rec[0];
        if current.as_deref() != Some(label) {
            if !seen.insert(label.to_string()) {
                return Err(Error::Format(format!(
                    "row {row}: group `{label}` reappears after another group; groups must be contiguous"
                )));
            }
            current = Some(label.to_string());
            sizes.push(0);
        }
        *sizes.last_mut().unwrap() += 1;
        let parse = |s: &str, col: usize| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("row {row}, column {col}: `{s}`: {e}")))
        };
        y.push(parse(&rec[1], 2)?);
        for k in 0..p {
            x.push(parse(&rec[k + 2], k + 3)?);
        }
    }
    if sizes.is_empty() {
        return Err(Error::Format("dataset has no rows".into()));
    }
    MixedModelData::from_flat(p, sizes, y, x)
}

pub fn read_csv_path(path: impl AsRef<Path>) -> Result<MixedModelData> {
    read_csv(BufReader::new(File::open(path)?))
}

/// Writes with 1-based integer group labels. Floats use the shortest
/// round-trip representation, so output is a pure function of the data.
pub fn write_csv<W: Write>(data: &MixedModelData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["group".to_string(), "y".to_string()];
    header.extend((1..=data.p()).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(data.p() + 2);
    for i in 0..data.q() {
        let (y, x) = data.group(i);
        for (j, yij) in y.iter().enumerate() {
            rec.clear();
            rec.push((i + 1).to_string());
            rec.push(yij.to_string());
            rec.extend(x[j * data.p()..(j + 1) * data.p()].iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path(data: &MixedModelData, path: impl AsRef<Path>) -> Result<()> {
    write_csv(data, BufWriter::new(File::create(path)?))
}
