//! Line-oriented dataset files.
//!
//! ```text
//! #tspgnn-dataset v1
//! #fields: tag seed n truth optimal_cost kind values...
//! euclidean 1234 12 exact 3.0417 coords x0 y0 x1 y1 ...
//! random 99 10 exact 2.113 weights w01 w02 ... w89
//! ```
//!
//! `truth` is `exact` or `approx`. Euclidean records store coordinates
//! (weights are recomputed on load), other records store the upper
//! triangle of the weight matrix row by row. Numbers are written in
//! shortest round-trip decimal form, so loading reproduces every value
//! bitwise.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generate::{DatasetRecord, GeneratorTag};
use crate::graph::TspInstance;

pub const DATASET_HEADER: &str = "#tspgnn-dataset v1";
const FIELDS_LINE: &str = "#fields: tag seed n truth optimal_cost kind values...";

pub fn format_record(r: &DatasetRecord) -> String {
    let inst = &r.instance;
    let truth = if r.exact { "exact" } else { "approx" };
    let mut line = format!("{} {} {} {} {}", r.tag, r.seed, inst.n(), truth, r.optimal_cost);
    match inst.coords() {
        Some(coords) => {
            line.push_str(" coords");
            for p in coords {
                let _ = write!(line, " {} {}", p[0], p[1]);
            }
        }
        None => {
            line.push_str(" weights");
            for w in inst.edge_weights() {
                let _ = write!(line, " {w}");
            }
        }
    }
    line
}

pub fn write_dataset<W: Write>(records: &[DatasetRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{DATASET_HEADER}")?;
    writeln!(out, "{FIELDS_LINE}")?;
    for r in records {
        writeln!(out, "{}", format_record(r))?;
    }
    out.flush()
}

pub fn save_dataset(records: &[DatasetRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(records, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::new();
    let mut saw_header = false;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        let trimmed = line.trim();
        if !saw_header {
            if trimmed != DATASET_HEADER {
                return Err(Error::parse(lineno, format!("expected header `{DATASET_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record = parse_record(trimmed).map_err(|msg| {
            Error::parse(lineno, format!("record {}: {msg}", records.len()))
        })?;
        records.push(record);
    }
    if !saw_header {
        return Err(Error::parse(1, "empty file, missing header"));
    }
    Ok(records)
}

fn parse_record(line: &str) -> std::result::Result<DatasetRecord, String> {
    let mut fields = line.split_ascii_whitespace();
    let mut next = |what: &str| fields.next().ok_or_else(|| format!("missing {what}"));
    let tag: GeneratorTag = next("tag")?.parse().map_err(|e: Error| e.to_string())?;
    let seed: u64 = next("seed")?.parse().map_err(|_| "bad seed".to_string())?;
    let n: usize = next("n")?.parse().map_err(|_| "bad city count".to_string())?;
    let exact = match next("truth")? {
        "exact" => true,
        "approx" => false,
        other => return Err(format!("truth must be exact or approx, got `{other}`")),
    };
    let optimal_cost: f64 = next("optimal_cost")?
        .parse()
        .map_err(|_| "bad optimal cost".to_string())?;
    let kind = next("kind")?.to_string();
    let values = fields
        .map(|v| v.parse::<f64>().map_err(|_| format!("bad number `{v}`")))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    let instance = match kind.as_str() {
        "coords" => {
            if values.len() != 2 * n {
                return Err(format!("expected {} coordinate values, got {}", 2 * n, values.len()));
            }
            let coords = values.chunks(2).map(|p| [p[0], p[1]]).collect();
            TspInstance::from_coords(coords)
        }
        "weights" => {
            let m = n * n.saturating_sub(1) / 2;
            if values.len() != m {
                return Err(format!("expected {m} weights, got {}", values.len()));
            }
            let mut w = vec![0.0; n * n];
            let mut it = values.into_iter();
            for i in 0..n {
                for j in i + 1..n {
                    let x = it.next().expect("length checked");
                    w[i * n + j] = x;
                    w[j * n + i] = x;
                }
            }
            TspInstance::from_weights(n, w)
        }
        other => return Err(format!("unknown value kind `{other}`")),
    }
    .map_err(|e| e.to_string())?;
    Ok(DatasetRecord {
        instance: Arc::new(instance.with_optimal_cost(optimal_cost)),
        optimal_cost,
        exact,
        tag,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, make_record, GroundTruth};

    fn roundtrip(records: &[DatasetRecord]) -> Vec<DatasetRecord> {
        let mut buf = Vec::new();
        write_dataset(records, &mut buf).unwrap();
        read_dataset(buf.as_slice()).unwrap()
    }

    #[test]
    fn empty_dataset_roundtrips() {
        assert!(roundtrip(&[]).is_empty());
    }

    #[test]
    fn mixed_records_roundtrip_bitwise() {
        let records: Vec<_> = (0..100u64)
            .map(|i| {
                let tag = GeneratorTag::ALL[(i % 3) as usize];
                make_record(tag, 5 + (i % 6) as usize, i, GroundTruth::ExactOnly).unwrap()
            })
            .collect();
        let back = roundtrip(&records);
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a, b);
            assert_eq!(a.optimal_cost.to_bits(), b.optimal_cost.to_bits());
            assert!(a
                .instance
                .weights()
                .iter()
                .zip(b.instance.weights())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_record_names_its_index() {
        let inst = generate(GeneratorTag::Random, 5, 1).unwrap();
        let rec = DatasetRecord {
            instance: Arc::new(inst),
            optimal_cost: 1.5,
            exact: true,
            tag: GeneratorTag::Random,
            seed: 1,
        };
        let good = format_record(&rec);
        let cut: String = good.split(' ').take(10).collect::<Vec<_>>().join(" ");
        let text = format!("{DATASET_HEADER}\n{good}\n{good}\n{cut}\n");
        match read_dataset(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("record 2"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_header_is_rejected() {
        assert!(matches!(read_dataset("euclidean 1 3".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(read_dataset("".as_bytes()).is_err());
    }
}
