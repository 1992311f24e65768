//! Matrix Market coordinate I/O for symmetric real matrices, plus dense
//! vectors in array format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseSymMatrix;

/// A matrix together with the `%` comment lines that followed its banner.
#[derive(Debug, Clone, PartialEq)]
pub struct MtxFile {
    pub matrix: SparseSymMatrix,
    /// Comment lines without the leading `%`.
    pub comments: Vec<String>,
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

struct Header {
    symmetric: bool,
    comments: Vec<String>,
}

fn read_header<I: Iterator<Item = std::io::Result<String>>>(
    lines: &mut std::iter::Enumerate<I>,
    want_format: &str,
) -> Result<(Header, Vec<String>, usize)> {
    let (_, banner) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty input".into()))?;
    let banner = banner?;
    let words: Vec<String> = banner.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() < 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix banner"));
    }
    if words[2] != want_format {
        return Err(parse_err(1, format!("expected {want_format} format, got {}", words[2])));
    }
    if words[3] != "real" && words[3] != "integer" {
        return Err(parse_err(1, format!("unsupported field {}", words[3])));
    }
    let symmetric = match words[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(parse_err(1, format!("unsupported symmetry {other}"))),
    };
    let mut comments = Vec::new();
    for (idx, line) in lines.by_ref() {
        let line = line?;
        let trimmed = line.trim();
        if let Some(c) = trimmed.strip_prefix('%') {
            comments.push(c.to_string());
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let size: Vec<String> = trimmed.split_whitespace().map(String::from).collect();
        return Ok((
            Header {
                symmetric,
                comments,
            },
            size,
            idx + 1,
        ));
    }
    Err(Error::Parse("missing size line".into()))
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| parse_err(line, format!("bad integer {s:?}")))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| parse_err(line, format!("bad number {s:?}")))
}

/// Reads a square coordinate matrix. `general` files must be symmetric;
/// mirrored entries are checked for agreement.
pub fn read_matrix(reader: impl BufRead) -> Result<MtxFile> {
    let mut lines = reader.lines().enumerate();
    let (header, size, size_line) = read_header(&mut lines, "coordinate")?;
    if size.len() != 3 {
        return Err(parse_err(size_line, "size line needs rows cols nnz"));
    }
    let rows = parse_usize(&size[0], size_line)?;
    let cols = parse_usize(&size[1], size_line)?;
    let nnz = parse_usize(&size[2], size_line)?;
    if rows != cols {
        return Err(parse_err(size_line, format!("matrix is {rows}x{cols}, not square")));
    }
    let mut triplets = Vec::with_capacity(nnz);
    for (idx, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(idx + 1, "entry needs row col value"));
        }
        let i = parse_usize(f[0], idx + 1)?;
        let j = parse_usize(f[1], idx + 1)?;
        if i == 0 || j == 0 {
            return Err(parse_err(idx + 1, "indices are 1-based"));
        }
        let v = parse_f64(f[2], idx + 1)?;
        if header.symmetric && j > i {
            return Err(parse_err(idx + 1, "symmetric files list the lower triangle only"));
        }
        triplets.push((i - 1, j - 1, v));
    }
    if triplets.len() != nnz {
        return Err(Error::Parse(format!(
            "size line promises {nnz} entries, found {}",
            triplets.len()
        )));
    }
    let matrix = if header.symmetric {
        SparseSymMatrix::from_summed_triplets(rows, triplets)?
    } else {
        let m = SparseSymMatrix::from_triplets(rows, triplets.iter().cloned())?;
        let stored = triplets.iter().filter(|t| t.2 != 0.0 && t.0 != t.1).count();
        let expected = 2 * (m.nnz() - m.diag().iter().filter(|d| **d != 0.0).count());
        if stored != expected {
            return Err(Error::Parse(
                "general file is not symmetric (missing mirrored entries)".into(),
            ));
        }
        m
    };
    Ok(MtxFile {
        matrix,
        comments: header.comments,
    })
}

/// Writes a symmetric coordinate file (lower triangle, 1-based), with each
/// comment on its own `%` line. Values use the shortest representation that
/// parses back to the same bits.
pub fn write_matrix(mut w: impl Write, m: &SparseSymMatrix, comments: &[String]) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "%%MatrixMarket matrix coordinate real symmetric").unwrap();
    for c in comments {
        writeln!(s, "%{c}").unwrap();
    }
    writeln!(s, "{} {} {}", m.n(), m.n(), m.nnz()).unwrap();
    for (i, j, v) in m.entries() {
        writeln!(s, "{} {} {:?}", j + 1, i + 1, v).unwrap();
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<MtxFile> {
    let f = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_matrix(std::io::BufReader::new(f))
}

pub fn write_matrix_file(path: impl AsRef<Path>, m: &SparseSymMatrix, comments: &[String]) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    let mut w = std::io::BufWriter::new(f);
    write_matrix(&mut w, m, comments)?;
    w.flush()?;
    Ok(())
}

/// Reads a dense vector: Matrix Market `array` with one column, or plain
/// whitespace-separated numbers.
pub fn read_vector(reader: impl BufRead) -> Result<Vec<f64>> {
    let mut text = String::new();
    for line in reader.lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    if text.trim_start().starts_with("%%") {
        let mut lines = text.lines().map(|l| Ok(l.to_string())).enumerate();
        let (_, size, size_line) = read_header(&mut lines, "array")?;
        if size.len() != 2 || size[1] != "1" {
            return Err(parse_err(size_line, "vector must be an n x 1 array"));
        }
        let n = parse_usize(&size[0], size_line)?;
        let mut out = Vec::with_capacity(n);
        for (idx, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            out.push(parse_f64(t, idx + 1)?);
        }
        if out.len() != n {
            return Err(Error::Parse(format!("expected {n} values, found {}", out.len())));
        }
        return Ok(out);
    }
    text.split_whitespace()
        .enumerate()
        .map(|(k, s)| {
            s.parse()
                .map_err(|_| Error::Parse(format!("value {}: bad number {s:?}", k + 1)))
        })
        .collect()
}

pub fn write_vector(mut w: impl Write, v: &[f64]) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "%%MatrixMarket matrix array real general").unwrap();
    writeln!(s, "{} 1", v.len()).unwrap();
    for x in v {
        writeln!(s, "{x:?}").unwrap();
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_vector_file(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let f = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_vector(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "%%MatrixMarket matrix coordinate real symmetric
% generated for a test
%second line
3 3 4
1 1 2.0
2 1 -1
2 2 2
3 3 0.5
";

    #[test]
    fn reads_symmetric_and_keeps_comments() {
        let f = read_matrix(SAMPLE.as_bytes()).unwrap();
        assert_eq!(f.comments, vec![" generated for a test", "second line"]);
        assert_eq!(f.matrix.get(0, 1), -1.0);
        assert_eq!(f.matrix.get(1, 0), -1.0);
        assert_eq!(f.matrix.get(2, 2), 0.5);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = read_matrix(SAMPLE.as_bytes()).unwrap();
        let m = f.matrix.scaled(1.0 / 3.0);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, &f.comments).unwrap();
        let back = read_matrix(buf.as_slice()).unwrap();
        assert_eq!(back.matrix, m);
        assert_eq!(back.comments, f.comments);
    }

    #[test]
    fn general_must_be_symmetric() {
        let ok = "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2\n1 2 -1\n2 1 -1\n";
        assert!(read_matrix(ok.as_bytes()).is_ok());
        let bad = "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2\n1 2 -1\n2 1 -2\n";
        assert!(matches!(read_matrix(bad.as_bytes()), Err(Error::NonSymmetric { .. })));
        let half = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 2\n1 2 -1\n";
        assert!(matches!(read_matrix(half.as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_matrix("".as_bytes()).is_err());
        let wrong_count = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2\n";
        assert!(matches!(read_matrix(wrong_count.as_bytes()), Err(Error::Parse(_))));
        let nan = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 1 NaN\n";
        assert!(matches!(read_matrix(nan.as_bytes()), Err(Error::NonFinite { .. })));
        let oob = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1\n";
        assert!(matches!(read_matrix(oob.as_bytes()), Err(Error::IndexOutOfBounds { .. })));
    }

    #[test]
    fn vectors_in_both_formats() {
        let v = vec![1.0, -2.5, 1e-300];
        let mut buf = Vec::new();
        write_vector(&mut buf, &v).unwrap();
        assert_eq!(read_vector(buf.as_slice()).unwrap(), v);
        assert_eq!(read_vector("1 2\n3".as_bytes()).unwrap(), vec![1.0, 2.0, 3.0]);
    }
}
