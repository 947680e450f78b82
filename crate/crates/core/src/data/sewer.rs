//! Adapter for Sewer-ML style annotation CSVs: a filename column followed
//! by one 0/1 column per defect class. Feature vectors come from elsewhere
//! (for example a separately run image backbone), keyed by filename.

use std::collections::HashMap;
use std::path::Path;

use super::Sample;
use crate::error::{Error, Result};

/// Reads `path` and maps each row onto a [`Sample`].
///
/// `known` and `unknown` name the class columns to use, in head order.
/// A row is unknown when any `unknown` column is set. Rows without a
/// feature vector are an error.
pub fn load_sewer_annotations(
    path: &Path,
    known: &[String],
    unknown: &[String],
    features: &HashMap<String, Vec<f64>>,
) -> Result<Vec<Sample>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, 1, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let id_col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("filename"))
        .unwrap_or(0);
    let class_cols = known
        .iter()
        .chain(unknown)
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| csv_error(path, line, e))?;
        let id = record.get(id_col).unwrap_or_default().to_owned();
        let mut labels = Vec::new();
        for (class, &col) in class_cols.iter().enumerate() {
            match record.get(col).map(str::trim) {
                Some("1") => labels.push(class),
                Some("0") | Some("") => {}
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: format!("class column {col} holds {other:?}, expected 0 or 1"),
                    })
                }
            }
        }
        let feats = features.get(&id).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("no feature vector for `{id}`"),
        })?;
        samples.push(Sample {
            is_unknown: labels.iter().any(|&l| l >= known.len()),
            id,
            features: feats.clone(),
            labels,
        });
    }
    Ok(samples)
}

fn csv_error(path: &Path, line: usize, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(line, |p| p.line() as usize),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn maps_rows_to_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        fs::write(
            &path,
            "Filename,RB,OB,FS,Defect\n00001.png,1,0,0,1\n00002.png,0,0,0,0\n00003.png,0,1,1,1\n",
        )
        .unwrap();
        let features: HashMap<String, Vec<f64>> = [
            ("00001.png".to_owned(), vec![1.0]),
            ("00002.png".to_owned(), vec![2.0]),
            ("00003.png".to_owned(), vec![3.0]),
        ]
        .into();
        let known = vec!["RB".to_owned(), "OB".to_owned()];
        let unknown = vec!["FS".to_owned()];
        let s = load_sewer_annotations(&path, &known, &unknown, &features).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].labels.clone(), s[0].is_unknown), (vec![0], false));
        assert!(s[1].is_normal());
        assert_eq!((s[2].labels.clone(), s[2].is_unknown), (vec![1, 2], true));
        assert_eq!(s[2].features, vec![3.0]);

        let missing = vec!["XX".to_owned()];
        assert!(load_sewer_annotations(&path, &missing, &[], &features).is_err());
        let partial: HashMap<String, Vec<f64>> = [("00001.png".to_owned(), vec![1.0])].into();
        assert!(matches!(
            load_sewer_annotations(&path, &known, &unknown, &partial),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
