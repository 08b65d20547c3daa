//! FROSTT `.tns` text tensors: one nonzero per line, 1-based indices
//! followed by the value; `#` starts a comment line.

use std::io::BufRead;
use std::path::Path;

use bitweave_core::tensor::SparseTensorCoo;

#[derive(Debug, thiserror::Error)]
pub enum FrosttError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: index {index} in mode {mode} is below 1")]
    IndexBelowOne { line: usize, mode: usize, index: i64 },
    #[error("no nonzeros found")]
    Empty,
    #[error(transparent)]
    Tensor(#[from] bitweave_core::Error),
}

/// Reads a tensor from any buffered source. `dims` overrides the per-mode
/// maximum index as the shape.
pub fn read_frostt<R: BufRead>(reader: R, dims: Option<&[usize]>) -> Result<SparseTensorCoo, FrosttError> {
    let mut entries: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut order = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| FrosttError::Parse { line: lineno, msg: e.to_string() })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(FrosttError::Parse { line: lineno, msg: "expected indices followed by a value".into() });
        }
        let n = fields.len() - 1;
        match order {
            None => order = Some(n),
            Some(o) if o != n => {
                return Err(FrosttError::Parse { line: lineno, msg: format!("{n} indices, earlier lines have {o}") })
            }
            _ => {}
        }
        let mut coords = Vec::with_capacity(n);
        for (mode, f) in fields[..n].iter().enumerate() {
            let index: i64 = f
                .parse()
                .map_err(|_| FrosttError::Parse { line: lineno, msg: format!("bad index {f:?}") })?;
            if index < 1 {
                return Err(FrosttError::IndexBelowOne { line: lineno, mode: mode + 1, index });
            }
            coords.push(index as usize - 1);
        }
        let value: f64 = fields[n]
            .parse()
            .map_err(|_| FrosttError::Parse { line: lineno, msg: format!("bad value {:?}", fields[n]) })?;
        entries.push((coords, value));
    }
    if entries.is_empty() {
        return Err(FrosttError::Empty);
    }
    Ok(match dims {
        Some(d) => SparseTensorCoo::from_entries(d.to_vec(), entries)?,
        None => SparseTensorCoo::from_entries_infer_dims(entries)?,
    })
}

pub fn load_frostt(path: impl AsRef<Path>, dims: Option<&[usize]>) -> Result<SparseTensorCoo, FrosttError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| FrosttError::Io { path: path.display().to_string(), source })?;
    read_frostt(std::io::BufReader::new(file), dims)
}

pub fn write_frostt<W: std::io::Write>(t: &SparseTensorCoo, mut out: W) -> std::io::Result<()> {
    for (coords, v) in t.iter() {
        for c in coords {
            write!(out, "{} ", c + 1)?;
        }
        writeln!(out, "{v:?}")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<SparseTensorCoo, FrosttError> {
        read_frostt(text.as_bytes(), None)
    }

    #[test]
    fn one_based_to_zero_based() {
        let t = read("1 1 1 2.0\n4 8 2 1.0").unwrap();
        assert_eq!(t.dims(), &[4, 8, 2]);
        let e: Vec<_> = t.iter().map(|(c, v)| (c.to_vec(), v)).collect();
        assert_eq!(e, vec![(vec![0, 0, 0], 2.0), (vec![3, 7, 1], 1.0)]);
    }

    #[test]
    fn duplicates_and_comments() {
        let t = read("# header\n1 1 1 1.0\n\n1 1 1 2.0\n").unwrap();
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.values(), &[3.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(read("1 1 1.0\n1 x 2.0"), Err(FrosttError::Parse { line: 2, .. })));
        assert!(matches!(read("1 1 1.0\n1 1 1 2.0"), Err(FrosttError::Parse { line: 2, .. })));
        assert!(matches!(read("1 1 z"), Err(FrosttError::Parse { line: 1, .. })));
        assert!(matches!(read("# c\n0 1 1.0"), Err(FrosttError::IndexBelowOne { line: 2, mode: 1, index: 0 })));
        assert!(matches!(read("# only comments\n"), Err(FrosttError::Empty)));
        assert!(matches!(read(""), Err(FrosttError::Empty)));
    }

    #[test]
    fn dims_override() {
        let t = read_frostt("1 2 1.0".as_bytes(), Some(&[4, 4])).unwrap();
        assert_eq!(t.dims(), &[4, 4]);
        assert!(read_frostt("5 2 1.0".as_bytes(), Some(&[4, 4])).is_err());
    }

    #[test]
    fn write_then_read() {
        let t = read("1 1 1 2.5\n4 8 2 1.0\n2 3 1 -0.125").unwrap();
        let mut buf = Vec::new();
        write_frostt(&t, &mut buf).unwrap();
        assert_eq!(read(std::str::from_utf8(&buf).unwrap()).unwrap(), t);
    }
}
