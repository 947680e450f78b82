//! Line-oriented dataset files.
//!
//! ```text
//! #edlset v1 D=<d> K=<k> classes=<c1,c2,...> unknown=<u1,...>
//! <id>\t<f1,f2,...>\t<l1,l2,...>\t<0|1>
//! ```
//!
//! Features are written with the shortest representation that parses back
//! to the same `f64`, so a save/load round trip is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{check_sample, DatasetSplit, Sample};
use crate::error::{Error, Result};

pub const DATASET_VERSION: &str = "v1";
pub const TRAIN_FILE: &str = "train.edl";
pub const VAL_FILE: &str = "val.edl";

const MAGIC: &str = "#edlset";

/// Contents of one dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub dim: usize,
    /// Known classes first, then the unknown ones.
    pub classes: Vec<String>,
    pub unknown: Vec<String>,
    pub samples: Vec<Sample>,
}

impl DatasetFile {
    fn known_count(&self) -> usize {
        self.classes.len() - self.unknown.len()
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_dataset(file: &DatasetFile) -> String {
    let mut out = format!(
        "{MAGIC} {DATASET_VERSION} D={} K={} classes={} unknown={}\n",
        file.dim,
        file.classes.len(),
        file.classes.join(","),
        file.unknown.join(",")
    );
    for s in &file.samples {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            s.id,
            join(&s.features),
            join(&s.labels),
            s.is_unknown as u8
        );
    }
    out
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<DatasetFile> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing `#edlset` header".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(MAGIC) {
        return Err(err(1, "missing `#edlset` header".into()));
    }
    let version = fields.next().unwrap_or_default();
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version.to_owned(),
            expected: DATASET_VERSION.to_owned(),
        });
    }

    let (mut dim, mut k, mut classes, mut unknown) = (None, None, None, Vec::new());
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(1, format!("malformed header field `{field}`")))?;
        let list = |v: &str| -> Vec<String> {
            if v.is_empty() {
                Vec::new()
            } else {
                v.split(',').map(str::to_owned).collect()
            }
        };
        match key {
            "D" => dim = Some(value.parse::<usize>().map_err(|e| err(1, format!("D: {e}")))?),
            "K" => k = Some(value.parse::<usize>().map_err(|e| err(1, format!("K: {e}")))?),
            "classes" => classes = Some(list(value)),
            "unknown" => unknown = list(value),
            other => return Err(err(1, format!("unknown header field `{other}`"))),
        }
    }
    let dim = dim.ok_or_else(|| err(1, "header lacks D".into()))?;
    let k = k.ok_or_else(|| err(1, "header lacks K".into()))?;
    let classes = classes.ok_or_else(|| err(1, "header lacks classes".into()))?;
    if classes.len() != k {
        return Err(err(1, format!("K={k} but {} class names", classes.len())));
    }
    if unknown.len() > k || classes[k - unknown.len()..] != unknown[..] {
        return Err(err(1, "unknown classes must be the last entries of `classes`".into()));
    }

    let mut file = DatasetFile {
        dim,
        classes,
        unknown,
        samples: Vec::new(),
    };
    let known = file.known_count();
    for (n, line) in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, features, labels, flag] = cols[..] else {
            return Err(err(n, format!("expected 4 tab-separated fields, found {}", cols.len())));
        };
        let features = if features.is_empty() {
            Vec::new()
        } else {
            features
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|_| err(n, format!("bad feature `{v}`"))))
                .collect::<Result<Vec<_>>>()?
        };
        let labels = if labels.is_empty() {
            Vec::new()
        } else {
            labels
                .split(',')
                .map(|v| v.parse::<usize>().map_err(|_| err(n, format!("bad label `{v}`"))))
                .collect::<Result<Vec<_>>>()?
        };
        let is_unknown = match flag {
            "0" => false,
            "1" => true,
            other => return Err(err(n, format!("unknown flag must be 0 or 1, got `{other}`"))),
        };
        let sample = Sample {
            id: id.to_owned(),
            features,
            labels,
            is_unknown,
        };
        check_sample(&sample, dim, known, k).map_err(|e| err(n, e.to_string()))?;
        file.samples.push(sample);
    }
    Ok(file)
}

pub fn save_dataset(path: &Path, file: &DatasetFile) -> Result<()> {
    fs::write(path, write_dataset(file)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

fn file_of(split: &DatasetSplit, samples: &[Sample]) -> DatasetFile {
    DatasetFile {
        dim: split.dim,
        classes: split.all_classes(),
        unknown: split.unknown_classes.clone(),
        samples: samples.to_vec(),
    }
}

/// Writes `train.edl` and `val.edl` into `dir`, creating it if needed.
pub fn save_split(dir: &Path, split: &DatasetSplit) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_dataset(&dir.join(TRAIN_FILE), &file_of(split, &split.train))?;
    save_dataset(&dir.join(VAL_FILE), &file_of(split, &split.validation))
}

pub fn load_split(dir: &Path) -> Result<DatasetSplit> {
    let train_path: PathBuf = dir.join(TRAIN_FILE);
    let train = load_dataset(&train_path)?;
    let val = load_dataset(&dir.join(VAL_FILE))?;
    if (train.dim, &train.classes, &train.unknown) != (val.dim, &val.classes, &val.unknown) {
        return Err(Error::invalid(format!(
            "{} and {} disagree on dimension or classes",
            TRAIN_FILE, VAL_FILE
        )));
    }
    let known = train.known_count();
    let split = DatasetSplit {
        dim: train.dim,
        known_classes: train.classes[..known].to_vec(),
        unknown_classes: train.unknown,
        train: train.samples,
        validation: val.samples,
    };
    if let Some(s) = split.train.iter().find(|s| s.is_unknown) {
        return Err(Error::invalid(format!(
            "{}: training sample `{}` carries an unknown class",
            train_path.display(),
            s.id
        )));
    }
    split.validate()?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GenConfig};
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem.edl")
    }

    #[test]
    fn empty_file_round_trips() {
        let f = DatasetFile {
            dim: 3,
            classes: vec!["a".into(), "u".into()],
            unknown: vec!["u".into()],
            samples: vec![],
        };
        let text = write_dataset(&f);
        assert_eq!(text, "#edlset v1 D=3 K=2 classes=a,u unknown=u\n");
        assert_eq!(parse_dataset(&text, p()).unwrap(), f);
    }

    #[test]
    fn record_layout() {
        let f = DatasetFile {
            dim: 2,
            classes: vec!["a".into(), "b".into()],
            unknown: vec![],
            samples: vec![
                Sample {
                    id: "s0".into(),
                    features: vec![0.1, -2.5e-300],
                    labels: vec![0, 1],
                    is_unknown: false,
                },
                Sample {
                    id: "s1".into(),
                    features: vec![1.0, 0.0],
                    labels: vec![],
                    is_unknown: false,
                },
            ],
        };
        let text = write_dataset(&f);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "s1\t1,0\t\t0");
        assert_eq!(parse_dataset(&text, p()).unwrap(), f);
    }

    #[test]
    fn generated_split_round_trips_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig {
            train_size: 150,
            val_size: 80,
            ..GenConfig::default()
        };
        let split = generate_synthetic(&cfg).unwrap().split;
        save_split(dir.path(), &split).unwrap();
        let back = load_split(dir.path()).unwrap();
        assert_eq!(back, split);
        for (a, b) in back.train.iter().zip(&split.train) {
            for (x, y) in a.features.iter().zip(&b.features) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn truncated_file_names_the_line() {
        let cfg = GenConfig {
            train_size: 10,
            val_size: 4,
            ..GenConfig::default()
        };
        let split = generate_synthetic(&cfg).unwrap().split;
        let text = write_dataset(&file_of(&split, &split.train));
        let cut = &text[..text.len() - 40];
        match parse_dataset(cut, p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 11),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            parse_dataset("#edlset v2 D=1 K=0 classes=\n", p()),
            Err(Error::Version { .. })
        ));
        assert!(matches!(parse_dataset("", p()), Err(Error::Parse { line: 1, .. })));
        assert!(parse_dataset("#edlset v1 D=1 K=2 classes=a\n", p()).is_err());
        assert!(parse_dataset("#edlset v1 D=1 K=2 classes=a,b unknown=a\n", p()).is_err());
        let bad_flag = "#edlset v1 D=1 K=1 classes=a\nx\t0.5\t0\t2\n";
        assert!(matches!(parse_dataset(bad_flag, p()), Err(Error::Parse { line: 2, .. })));
        let bad_dim = "#edlset v1 D=2 K=1 classes=a\nx\t0.5\t0\t0\n";
        assert!(matches!(parse_dataset(bad_dim, p()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn unknown_sample_in_train_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let header = "#edlset v1 D=1 K=2 classes=a,u unknown=u\n";
        fs::write(dir.path().join(TRAIN_FILE), format!("{header}t\t0.5\t1\t1\n")).unwrap();
        fs::write(dir.path().join(VAL_FILE), header).unwrap();
        assert!(load_split(dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn features_round_trip_exactly(xs in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..8)) {
            let f = DatasetFile {
                dim: xs.len(),
                classes: vec!["a".into()],
                unknown: vec![],
                samples: vec![Sample { id: "s".into(), features: xs.clone(), labels: vec![0], is_unknown: false }],
            };
            let back = parse_dataset(&write_dataset(&f), p()).unwrap();
            let bits: Vec<u64> = back.samples[0].features.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, xs.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
