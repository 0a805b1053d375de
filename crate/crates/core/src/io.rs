//! Numeric CSV tables with `#`-prefixed metadata lines.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    /// `# key: value` lines in file order.
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::Parse(format!("missing column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        write_csv(
            w,
            &self.meta,
            &self.header,
            self.rows
                .iter()
                .map(|row| row.iter().map(|x| format!("{x:.17e}")).collect()),
        )
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(fs::File::create(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let meta = text
            .lines()
            .filter_map(|l| l.strip_prefix('#'))
            .filter_map(|l| l.split_once(':'))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("row {}: '{f}' is not a number", line + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { meta, header, rows })
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Writes `# key: value` lines followed by a CSV header and text rows.
pub fn write_csv(
    mut w: impl Write,
    meta: &[(String, String)],
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// A transmission sweep read from CSV: `lambda_nm`, `transmission` and an
/// optional `reference` column. Unnamed files use the first columns in order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumColumns {
    pub lambda_nm: Vec<f64>,
    pub transmission: Vec<f64>,
    pub reference: Option<Vec<f64>>,
}

pub fn read_spectrum_csv(path: impl AsRef<Path>) -> Result<SpectrumColumns> {
    spectrum_columns(&Table::read_path(path)?)
}

pub fn spectrum_columns(t: &Table) -> Result<SpectrumColumns> {
    let pick = |names: &[&str], fallback: usize| -> Result<Option<Vec<f64>>> {
        if let Some(name) = names.iter().find(|n| t.column_index(n).is_some()) {
            return t.column(name).map(Some);
        }
        let named = [
            "lambda_nm",
            "wavelength_nm",
            "transmission",
            "t",
            "reference",
        ]
        .iter()
        .any(|n| t.column_index(n).is_some());
        if !named && fallback < t.header.len() {
            return Ok(Some(t.rows.iter().map(|r| r[fallback]).collect()));
        }
        Ok(None)
    };
    let lambda_nm = pick(&["lambda_nm", "wavelength_nm"], 0)?
        .ok_or_else(|| Error::Parse("missing wavelength column".into()))?;
    let transmission = pick(&["transmission", "t"], 1)?
        .ok_or_else(|| Error::Parse("missing transmission column".into()))?;
    let reference = pick(&["reference"], 2)?;
    Ok(SpectrumColumns {
        lambda_nm,
        transmission,
        reference,
    })
}

/// Header and text fields of a CSV file, skipping `#` lines.
pub fn read_records(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| Ok(r?.iter().map(str::to_string).collect()))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

/// Resonance wavenumbers from the `k_um_inv` (or `k`) column of a roots table.
pub fn read_roots(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let t = Table::read_path(path)?;
    match t.column_index("k_um_inv") {
        Some(_) => t.column("k_um_inv"),
        None => t.column("k"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_values_and_meta() {
        let mut t = Table::new(&["k", "multiplicity"]).with_meta("seed", 7);
        t.push(vec![std::f64::consts::PI, 1.0]);
        t.push(vec![1e-300, 2.0]);
        let s = t.to_csv_string().unwrap();
        assert!(s.starts_with("# seed: 7\n"));
        let back = Table::parse(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn unnamed_spectrum_uses_positions() {
        let t = Table::parse("a,b\n1500,0.9\n1501,0.8\n").unwrap();
        let s = spectrum_columns(&t).unwrap();
        assert_eq!(s.lambda_nm, vec![1500.0, 1501.0]);
        assert_eq!(s.transmission, vec![0.9, 0.8]);
        assert!(s.reference.is_none());
    }

    #[test]
    fn named_spectrum_columns() {
        let t =
            Table::parse("# device: btg\nreference,lambda_nm,transmission\n2,1500,0.9\n").unwrap();
        let s = spectrum_columns(&t).unwrap();
        assert_eq!(s.lambda_nm, vec![1500.0]);
        assert_eq!(s.reference, Some(vec![2.0]));
        assert_eq!(t.meta_value("device"), Some("btg"));
    }

    #[test]
    fn roots_and_records() {
        let dir = std::env::temp_dir().join(format!("wavegraph-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("roots.csv");
        fs::write(&p, "# graph: ring\nk_um_inv,lambda_nm\n4.1,1532.5\n").unwrap();
        assert_eq!(read_roots(&p).unwrap(), vec![4.1]);
        let (h, rows) = read_records(&p).unwrap();
        assert_eq!(h, ["k_um_inv", "lambda_nm"]);
        assert_eq!(rows, vec![vec!["4.1".to_string(), "1532.5".to_string()]]);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn bad_number_reported() {
        assert!(matches!(Table::parse("k\nabc\n"), Err(Error::Parse(_))));
    }
}
