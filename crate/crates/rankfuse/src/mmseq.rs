//! The MMSEQ dataset format.
//!
//! Line-oriented UTF-8 text:
//!
//! ```text
//! MMSEQ 1 <n_sequences>
//! SPLIT train <n_train>
//! SEQ <T> <D_l> <D_v> <D_a> <label>
//! <T lines of D_l numbers>
//! <T lines of D_v numbers>
//! <T lines of D_a numbers>
//! SEQ ...
//! SPLIT valid <n_valid>
//! ...
//! SPLIT test <n_test>
//! ...
//! ```
//!
//! The three `SPLIT` markers appear exactly once each, in the order train,
//! valid, test, and their counts sum to `n_sequences`. Numbers are written in
//! Rust's shortest round-trip decimal form, so `read(write(x))` reproduces
//! every `f64` bit for bit. Blank lines are not allowed; fields are separated
//! by single spaces.

use std::fmt::Write as _;
use std::path::Path;

use rankfuse_core::synth::{DatasetSplit, MultimodalSequence};
use rankfuse_core::Matrix;

use crate::error::{FormatError, IoError};
use crate::fsutil::write_atomic;

pub const MAGIC: &str = "MMSEQ";
pub const VERSION: u32 = 1;
const SPLITS: [&str; 3] = ["train", "valid", "test"];

/// Renders `split` in MMSEQ form.
pub fn to_string(split: &DatasetSplit) -> String {
    let parts = [&split.train, &split.valid, &split.test];
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION} {total}").unwrap();
    for (name, seqs) in SPLITS.iter().zip(parts) {
        writeln!(out, "SPLIT {name} {}", seqs.len()).unwrap();
        for s in seqs.iter() {
            let [dl, dv, da] = s.dims();
            writeln!(out, "SEQ {} {dl} {dv} {da} {}", s.steps(), s.label()).unwrap();
            for m in s.features() {
                for t in 0..m.rows() {
                    let row = m.row(t);
                    for (j, v) in row.iter().enumerate() {
                        if j > 0 {
                            out.push(' ');
                        }
                        write!(out, "{v}").unwrap();
                    }
                    out.push('\n');
                }
            }
        }
    }
    out
}

pub fn write_dataset(path: &Path, split: &DatasetSplit) -> Result<(), IoError> {
    write_atomic(path, to_string(split).as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<DatasetSplit, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse(&text).map_err(|e| IoError::format(path, e))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), FormatError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(FormatError::new(
                self.last + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T, FormatError> {
    field
        .parse()
        .map_err(|_| FormatError::new(line, format!("invalid {what} `{field}`")))
}

fn fields<'a>(
    line_no: usize,
    line: &'a str,
    keyword: &str,
    count: usize,
) -> Result<Vec<&'a str>, FormatError> {
    let f: Vec<&str> = line.split(' ').collect();
    if f[0] != keyword {
        return Err(FormatError::new(
            line_no,
            format!("expected `{keyword}` line, found `{}`", truncate(line)),
        ));
    }
    if f.len() != count + 1 {
        return Err(FormatError::new(
            line_no,
            format!("`{keyword}` line needs {count} fields, found {}", f.len() - 1),
        ));
    }
    Ok(f[1..].to_vec())
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(40) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Parses MMSEQ text.
pub fn parse(text: &str) -> Result<DatasetSplit, FormatError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (n, header) = lines.next("`MMSEQ` header")?;
    let f = fields(n, header, MAGIC, 2)?;
    let version: u32 = parse_field(n, f[0], "version")?;
    if version != VERSION {
        return Err(FormatError::new(n, format!("unsupported version {version}")));
    }
    let total: usize = parse_field(n, f[1], "sequence count")?;

    let mut parts: [Vec<MultimodalSequence>; 3] = Default::default();
    for (name, part) in SPLITS.iter().zip(parts.iter_mut()) {
        let (n, line) = lines.next(&format!("`SPLIT {name}` marker"))?;
        let f = fields(n, line, "SPLIT", 2)?;
        if f[0] != *name {
            return Err(FormatError::new(
                n,
                format!("expected split `{name}`, found `{}`", f[0]),
            ));
        }
        let count: usize = parse_field(n, f[1], "split size")?;
        for _ in 0..count {
            part.push(parse_sequence(&mut lines)?);
        }
    }

    let read: usize = parts.iter().map(Vec::len).sum();
    if read != total {
        return Err(FormatError::new(
            1,
            format!("header announces {total} sequences, splits hold {read}"),
        ));
    }
    if let Some((i, _)) = lines.inner.next() {
        return Err(FormatError::new(i + 1, "trailing content after the last sequence"));
    }
    let [train, valid, test] = parts;
    let split = DatasetSplit { train, valid, test };
    split
        .validate()
        .map_err(|e| FormatError::new(lines.last, e.to_string()))?;
    Ok(split)
}

fn parse_sequence(lines: &mut Lines<'_>) -> Result<MultimodalSequence, FormatError> {
    let (seq_line, line) = lines.next("`SEQ` block")?;
    let f = fields(seq_line, line, "SEQ", 5)?;
    let steps: usize = parse_field(seq_line, f[0], "T")?;
    let dims: [usize; 3] = [
        parse_field(seq_line, f[1], "D_l")?,
        parse_field(seq_line, f[2], "D_v")?,
        parse_field(seq_line, f[3], "D_a")?,
    ];
    let label: f64 = parse_field(seq_line, f[4], "label")?;
    if steps == 0 || dims.contains(&0) {
        return Err(FormatError::new(seq_line, "T and all feature dims must be positive"));
    }

    let names = ["language", "visual", "acoustic"];
    let mut mats = Vec::with_capacity(3);
    for (m, &d) in dims.iter().enumerate() {
        let mut data = Vec::with_capacity(steps * d);
        for t in 0..steps {
            let what = format!(
                "{} row {} of {steps} for the block starting at line {seq_line}",
                names[m],
                t + 1
            );
            let (n, row) = lines.next(&what)?;
            let before = data.len();
            for v in row.split(' ') {
                data.push(parse_field::<f64>(n, v, "number")?);
            }
            if data.len() - before != d {
                return Err(FormatError::new(
                    n,
                    format!(
                        "{} row has {} values, block at line {seq_line} declares {d}",
                        names[m],
                        data.len() - before
                    ),
                ));
            }
        }
        mats.push(Matrix::from_vec(steps, d, data).expect("sizes checked"));
    }
    let features: [Matrix; 3] = mats.try_into().expect("three modalities");
    MultimodalSequence::new(features, label)
        .map_err(|e| FormatError::new(seq_line, format!("block at line {seq_line}: {e}")))
}
