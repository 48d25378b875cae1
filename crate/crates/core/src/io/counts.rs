//! Count-table CSV: `class,sent,total,error`, optionally preceded by
//! `# key = value` metadata lines (`n_rounds` is recognized).

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result, Violations};
use crate::sift::{ClassCounts, CountClass, CountTable};

const HEADER: [&str; 4] = ["class", "sent", "total", "error"];

/// Parses a count table from CSV text.
pub fn parse_count_table(text: &str) -> Result<CountTable> {
    if text.trim().is_empty() {
        return Err(Error::Parse("count table is empty".into()));
    }
    let mut n_rounds = None;
    let mut body = String::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(meta) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once('=') {
                if k.trim() == "n_rounds" {
                    let v = v.trim();
                    n_rounds = Some(
                        v.parse::<u64>()
                            .map_err(|_| Error::Parse(format!("n_rounds '{v}' is not a non-negative integer")))?,
                    );
                }
            }
            continue;
        }
        body.push_str(line);
        body.push('\n');
    }

    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse(format!(
            "expected header '{}', found '{}'",
            HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut table = CountTable {
        n_rounds,
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut v = Violations::default();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::Parse(format!("row {line}: {e}")))?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!(
                "row {line}: expected 4 fields, found {}",
                rec.len()
            )));
        }
        let class: CountClass = rec[0].parse()?;
        let mut num = |i: usize| -> Result<u64> {
            let s = &rec[i];
            match s.parse::<i128>() {
                Ok(x) if x < 0 => {
                    v.check(false, || format!("{class}: {} is negative ({x})", HEADER[i]));
                    Ok(0)
                }
                Ok(x) => u64::try_from(x).map_err(|_| Error::Parse(format!("row {line}: {s} too large"))),
                Err(_) => Err(Error::Parse(format!("row {line}: '{s}' is not an integer"))),
            }
        };
        let c = ClassCounts {
            sent: num(1)?,
            total: num(2)?,
            error: num(3)?,
        };
        if !seen.insert(class) {
            v.check(false, || format!("{class}: duplicate row"));
            continue;
        }
        v.check(c.error <= c.total, || {
            format!("{class}: error {} exceeds total {}", c.error, c.total)
        });
        v.check(c.sent == 0 || c.total <= c.sent, || {
            format!("{class}: total {} exceeds sent {}", c.total, c.sent)
        });
        *table.get_mut(class) = c;
    }
    for c in CountClass::ALL {
        v.check(seen.contains(&c), || format!("{c}: missing row"));
    }
    v.into_result()?;
    Ok(table)
}

pub fn load_count_table(path: impl AsRef<Path>) -> Result<CountTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_count_table(&text)
}

/// Serializes a count table; the inverse of [`parse_count_table`].
pub fn write_count_table(table: &CountTable) -> String {
    let mut out = String::new();
    if let Some(n) = table.n_rounds {
        out.push_str(&format!("# n_rounds = {n}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for (c, x) in table.iter() {
        w.write_record([
            c.to_string(),
            x.sent.to_string(),
            x.total.to_string(),
            x.error.to_string(),
        ])
        .expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii"));
    out
}
