//! JSON-lines dataset files.
//!
//! Line 1 is a header `{"dim": d, "k": k, "meta": {...}}`; each following
//! line is one sample `{"x": [...], "y": [...], "z": [[...], ...], "b": ±1}`.
//! Coordinates are written with 17 significant digits so that reading a file
//! back reproduces every `f64` exactly.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{ContrastiveSample, Dataset, Metadata};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dim: usize,
    k: usize,
    #[serde(default)]
    meta: Metadata,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<Vec<f64>>,
    b: i64,
}

fn push_vec(out: &mut String, v: &[f64]) -> Result<()> {
    out.push('[');
    for (i, c) in v.iter().enumerate() {
        if !c.is_finite() {
            return Err(Error::invalid("cannot serialize non-finite coordinate"));
        }
        if i > 0 {
            out.push(',');
        }
        write!(out, "{c:.16e}").expect("writing to a String");
    }
    out.push(']');
    Ok(())
}

pub fn write_dataset<W: Write>(ds: &Dataset, sink: W) -> Result<()> {
    ds.validate()?;
    let mut sink = BufWriter::new(sink);
    let header = serde_json::json!({ "dim": ds.dim, "k": ds.k, "meta": ds.meta });
    serde_json::to_writer(&mut sink, &header)?;
    sink.write_all(b"\n")?;

    let mut line = String::new();
    for s in &ds.samples {
        line.clear();
        line.push_str("{\"x\":");
        push_vec(&mut line, &s.x)?;
        line.push_str(",\"y\":");
        push_vec(&mut line, &s.y)?;
        line.push_str(",\"z\":[");
        for (j, z) in s.negatives.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            push_vec(&mut line, z)?;
        }
        write!(line, "],\"b\":{}}}", s.label).expect("writing to a String");
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(source: R) -> Result<Dataset> {
    let mut lines = source.lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing header line".into(),
                })
            }
            Some((i, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("bad header: {e}"),
                })?;
            }
        }
    };
    if header.dim == 0 || header.k == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "header dim and k must be positive".into(),
        });
    }

    let mut samples = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.b != 1 && rec.b != -1 {
            return Err(parse_err(format!("label must be ±1, got {}", rec.b)));
        }
        let sample = ContrastiveSample {
            x: rec.x,
            y: rec.y,
            negatives: rec.z,
            label: rec.b as i8,
        };
        sample.validate().map_err(|e| parse_err(e.to_string()))?;
        if sample.dim() != header.dim || sample.k() != header.k {
            return Err(parse_err(format!(
                "sample shape (d={}, k={}) does not match header (d={}, k={})",
                sample.dim(),
                sample.k(),
                header.dim,
                header.k
            )));
        }
        samples.push(sample);
    }
    Ok(Dataset {
        dim: header.dim,
        k: header.k,
        samples,
        meta: header.meta,
    })
}

pub fn write_dataset_file(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(ds, File::create(path)?)
}

pub fn read_dataset_file(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        read_dataset(text.as_bytes())
    }

    #[test]
    fn empty_sample_list_is_valid() {
        let ds = Dataset::new(3, 1, vec![], Metadata::new()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"dim\":3,\"k\":1,\"meta\":{}}\n"
        );
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), ds);
    }

    #[test]
    fn mismatched_dims_report_line() {
        let text = "{\"dim\":2,\"k\":1}\n{\"x\":[0,0,0],\"y\":[1,0],\"z\":[[0,1]],\"b\":1}\n";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_label_and_header_mismatch() {
        let text = "{\"dim\":2,\"k\":1}\n{\"x\":[0,0],\"y\":[1,0],\"z\":[[0,1]],\"b\":1}\n{\"x\":[0,0],\"y\":[1,0],\"z\":[[0,1]],\"b\":2}\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 3, .. })));
        let text = "{\"dim\":3,\"k\":1}\n{\"x\":[0,0],\"y\":[1,0],\"z\":[[0,1]],\"b\":1}\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse("not json\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn exact_round_trip_of_awkward_values() {
        let x = vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE, 1e300];
        let y = vec![std::f64::consts::PI, 0.0, -0.0, 5e-324];
        let z = vec![2.0f64.sqrt(), -7.25, 1e-17, 123456789.123456789];
        let s = ContrastiveSample::triplet(x, y, z, -1).unwrap();
        let mut meta = Metadata::new();
        meta.insert("seed".into(), 42.into());
        let ds = Dataset::new(4, 1, vec![s], meta).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        for (a, b) in ds.samples[0].x.iter().zip(&back.samples[0].x) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, ds);
    }
}
