use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::{ClassId, DomainTrials, Error, Result};

const NAME_ROW: &str = "channels,samples";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format { offset: line as u64, message: format!("line {line}: {}", message.into()) }
}

/// Parses one trial. The text starts with an optional `channels,samples`
/// name row, then a `c,t` row, then `c` rows of `t` comma-separated values.
/// Format errors report the 1-based line number as the offset.
pub fn parse_csv_trial(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty()).peekable();
    if let Some((_, l)) = lines.peek() {
        if l.replace(' ', "").eq_ignore_ascii_case(NAME_ROW) {
            lines.next();
        }
    }
    let (line, dims) = lines.next().ok_or_else(|| parse_err(1, "missing dimension row"))?;
    let dims: Vec<usize> = dims
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(line, format!("bad dimension row: {e}")))?;
    let [c, t] = dims[..] else {
        return Err(parse_err(line, "dimension row must hold two integers"));
    };
    let mut values = Vec::with_capacity(c * t);
    let mut rows = 0;
    for (line, row) in lines {
        rows += 1;
        if rows > c {
            return Err(parse_err(line, format!("more than {c} channel rows")));
        }
        let before = values.len();
        for v in row.split(',') {
            values.push(v.trim().parse::<f64>().map_err(|e| parse_err(line, format!("{e}: {v:?}")))?);
        }
        if values.len() - before != t {
            return Err(parse_err(line, format!("expected {t} values, found {}", values.len() - before)));
        }
    }
    if rows != c {
        return Err(parse_err(0, format!("expected {c} channel rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(c, t, &values))
}

pub fn read_csv_trial(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_csv_trial(&fs::read_to_string(path)?)
}

/// One file per trial, in the given order.
pub fn read_csv_domain(paths: &[impl AsRef<Path>], labels: Option<Vec<ClassId>>, subject_id: &str) -> Result<DomainTrials<f64>> {
    let trials = paths.iter().map(read_csv_trial).collect::<Result<Vec<_>>>()?;
    DomainTrials::new(trials, labels, subject_id)
}

/// Writes the name row, the dimension row and the channel rows. Values use
/// the shortest representation that parses back exactly.
pub fn write_csv_trial(trial: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("{NAME_ROW}\n{},{}\n", trial.nrows(), trial.ncols());
    for row in trial.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_and_without_name_row() {
        let a = parse_csv_trial("channels,samples\n2,3\n1,2,3\n4,5,6\n").unwrap();
        let b = parse_csv_trial("2,3\n1, 2, 3\n4,5,6").unwrap();
        assert_eq!(a, b);
        assert_eq!(a[(1, 0)], 4.0);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(matches!(parse_csv_trial("2,3\n1,2,3\n4,5\n"), Err(Error::Format { offset: 3, .. })));
        assert!(parse_csv_trial("2,3\n1,2,3\n").is_err());
        assert!(parse_csv_trial("2\n1,2\n").is_err());
        assert!(parse_csv_trial("1,2\n1,x\n").is_err());
    }

    #[test]
    fn write_read_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(3, 5, |r, c| (r as f64 + 0.1) / (c as f64 + 3.0));
        let p = dir.path().join("t.csv");
        write_csv_trial(&m, &p).unwrap();
        assert_eq!(read_csv_trial(&p).unwrap(), m);
        let d = read_csv_domain(&[&p, &p], Some(vec![1, 2]), "csv").unwrap();
        assert_eq!(d.len(), 2);
    }
}
