//! Small in-memory tables written as RFC 4180 CSV.

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest representation that parses back to the same value; never uses thousands
/// separators or a locale-dependent decimal mark.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        // Folds -0 into 0 so sign noise in exact zeros does not change the bytes.
        "0".into()
    } else {
        format!("{v}")
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn from_csv(text: &str) -> Result<Table> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = r.headers().context("reading CSV header")?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.context("reading CSV row")?.iter().map(str::to_string).collect());
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        match self.header.iter().position(|h| h == name) {
            Some(i) => Ok(i),
            None => bail!("no column `{name}` in {:?}", self.header),
        }
    }

    /// Parses a numeric column.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| r[i].parse::<f64>().with_context(|| format!("row {}: `{}` in `{name}` is not a number", k + 1, r[i])))
            .collect()
    }

    pub fn strings(&self, name: &str) -> Result<Vec<String>> {
        let i = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[i].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_quoting() {
        let mut t = Table::new(&["name", "value"]);
        t.push(vec!["a,b".into(), num(0.1)]);
        t.push(vec!["plain".into(), num(-0.0)]);
        let text = t.to_csv();
        assert!(text.contains("\"a,b\""));
        assert_eq!(Table::from_csv(&text).unwrap(), t);
        assert_eq!(t.floats("value").unwrap(), vec![0.1, 0.0]);
        assert!(t.floats("name").is_err());
    }

    #[test]
    fn numbers_are_plain_decimals() {
        assert_eq!(num(1e-5), "0.00001");
        assert_eq!(num(1234567.0), "1234567");
        assert_eq!(num(0.5).parse::<f64>().unwrap(), 0.5);
    }
}
