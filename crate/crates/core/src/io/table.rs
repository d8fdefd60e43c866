//! Comma-separated feature tables: `label,v1,v2,...` per line.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::LabeledSet;
use crate::model::FeatureVector;

pub fn parse_feature_table(text: &str) -> Result<LabeledSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut set = LabeledSet::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::ParseError {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let err = |message: String| Error::ParseError { line, message };
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() < 2 {
            return Err(err("expected a label and at least one value".into()));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(err(format!("{} columns, expected {w}", record.len())));
            }
            _ => {}
        }
        let values = record
            .iter()
            .skip(1)
            .map(|field| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(v) => Err(err(format!("non-finite value {v}"))),
                Err(_) => Err(err(format!("'{field}' is not a number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        set.push(FeatureVector::new(values)?, &record[0])?;
    }
    Ok(set)
}

pub fn read_feature_table(path: impl AsRef<Path>) -> Result<LabeledSet> {
    let path = path.as_ref();
    let bytes = super::read_bytes(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::InvalidInput(format!("{}: not UTF-8: {e}", path.display())))?;
    parse_feature_table(&text)
}

/// Writes a table that [`read_feature_table`] reads back exactly.
pub fn write_feature_table(path: impl AsRef<Path>, set: &LabeledSet) -> Result<()> {
    let mut out = String::new();
    for (v, label) in (0..set.len()).map(|i| set.get(i)) {
        out.push_str(label);
        for x in v.iter() {
            out.push(',');
            out.push_str(&format!("{x:?}"));
        }
        out.push('\n');
    }
    super::write_bytes(path.as_ref(), out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_table() {
        let set = parse_feature_table("a,1.0,2.0\nb,0.5,0.5").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dim(), Some(2));
        assert_eq!(set.get(1).1, "b");
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = parse_feature_table("a,1.0,2.0\nb,0.5").unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn nan_reports_line() {
        let err = parse_feature_table("a,NaN,1").unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 1, .. }), "{err:?}");
        let err = parse_feature_table("a,1,2\nb,inf,1").unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn garbage_value() {
        let err = parse_feature_table("a,1,2\nb,1,x\n").unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 2, .. }));
    }

    #[test]
    fn write_then_read_is_exact() {
        let set = parse_feature_table("a,0.1,2e-300\nb,-3.3333333333333335,7").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_feature_table(&path, &set).unwrap();
        assert_eq!(read_feature_table(&path).unwrap(), set);
    }
}
