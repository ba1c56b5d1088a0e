//! CSV output. Reals are written in the shortest form that parses back to the
//! same `f64`.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use realuid_core::tensor::Tensor;

use crate::error::{LabError, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// A CSV sink writing to a file or to stdout.
pub struct Table {
    w: csv::Writer<Box<dyn Write>>,
    label: String,
}

impl Table {
    /// `None` writes to stdout.
    pub fn create(path: Option<&Path>, header: &[&str]) -> Result<Self> {
        let (sink, label): (Box<dyn Write>, String) = match path {
            Some(p) => {
                if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
                }
                let f = File::create(p).map_err(|e| LabError::io(p, e))?;
                (Box::new(io::BufWriter::new(f)), p.display().to_string())
            }
            None => (Box::new(io::stdout()), "<stdout>".into()),
        };
        let mut t = Self {
            w: csv::Writer::from_writer(sink),
            label,
        };
        t.record(header.iter().copied())?;
        Ok(t)
    }

    fn err(&self, e: csv::Error) -> LabError {
        LabError::io(Path::new(&self.label), io::Error::other(e))
    }

    pub fn record<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| self.err(e))
    }

    pub fn reals(&mut self, values: &[f64]) -> Result<()> {
        self.record(values.iter().map(|&v| fmt_f64(v)))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w
            .flush()
            .map_err(|e| LabError::io(Path::new(&self.label), e))
    }
}

/// One row per sample; columns `x1..xD`, then `c1..cD` for conditioning rows.
pub fn write_samples(path: &Path, samples: &Tensor, cond: Option<&Tensor>) -> Result<()> {
    let d = samples.cols();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    if let Some(c) = cond {
        header.extend((1..=c.cols()).map(|i| format!("c{i}")));
    }
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::create(Some(path), &hdr)?;
    let mut row = Vec::with_capacity(header.len());
    for r in 0..samples.rows() {
        row.clear();
        row.extend_from_slice(&samples.data()[r * d..(r + 1) * d]);
        if let Some(c) = cond {
            let k = c.cols();
            row.extend_from_slice(&c.data()[r * k..(r + 1) * k]);
        }
        t.reals(&row)?;
    }
    t.finish()
}

/// Reads the `x*` columns of a samples file as an `[n, D]` tensor.
pub fn read_samples(path: &Path) -> Result<Tensor> {
    let bad = |m: String| LabError::Input(format!("{}: {m}", path.display()));
    let f = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut r = csv::Reader::from_reader(io::BufReader::new(f));
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('x'))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(bad("no x columns".into()));
    }
    let mut data = Vec::new();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for &c in &cols {
            let field = rec
                .get(c)
                .ok_or_else(|| bad(format!("short row {}", n + 1)))?;
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("row {}: {e}", n + 1)))?,
            );
        }
        n += 1;
    }
    if n == 0 {
        return Err(bad("no rows".into()));
    }
    Ok(Tensor::matrix(n, cols.len(), data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let vals = vec![
            0.1,
            -2.5e-300,
            1.0 / 3.0,
            12345.678901234567,
            1e22,
            -0.0,
            3.0,
            f64::MIN_POSITIVE,
        ];
        let t = Tensor::matrix(4, 2, vals.clone()).unwrap();
        write_samples(&p, &t, None).unwrap();
        let back = read_samples(&p).unwrap();
        for (a, b) in back.data().iter().zip(&vals) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x1,x2\n0.1,-2.5e-300\n"), "{text}");
    }

    #[test]
    fn conditioning_columns_skipped_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let x = Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        let c = Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap();
        write_samples(&p, &x, Some(&c)).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "x1,c1\n1.0,5.0\n2.0,6.0\n");
        assert_eq!(read_samples(&p).unwrap(), x);
    }

    #[test]
    fn garbage_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "x1\nabc\n").unwrap();
        assert!(matches!(read_samples(&p), Err(LabError::Input(_))));
        fs::write(&p, "y\n1\n").unwrap();
        assert!(read_samples(&p).is_err());
    }
}
