//! Model checkpoint files.
//!
//! Versioned line-oriented text:
//!
//! ```text
//! RANKFUSE-CHECKPOINT 1
//! variant <t2fn|tfn|ef-lstm|lf-lstm>
//! inputs <D_l> <D_v> <D_a>
//! hidden <d_l> <d_v> <d_a>
//! params <N>
//! <N lines, one parameter each>
//! ```
//!
//! Parameters follow [`ModelParams::to_flat`]: for each encoder (three, or one
//! for early fusion) its `4H × (I + H)` gate weights row-major, then its `4H`
//! biases; then the classifier weights, then the classifier bias. Gate rows are
//! ordered input, forget, output, candidate; each row acts on `[x_t; h_{t-1}]`.
//! The classifier of the fusion variants reads the fused tensor flattened
//! row-major. Values use shortest round-trip decimals, so a save/load cycle is
//! bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use rankfuse_core::neural::{ModelDims, ModelParams, Variant};

use crate::error::{FormatError, IoError};
use crate::fsutil::write_atomic;

pub const MAGIC: &str = "RANKFUSE-CHECKPOINT";
pub const VERSION: u32 = 1;

pub fn to_string(p: &ModelParams) -> String {
    let flat = p.to_flat();
    let [il, iv, ia] = p.dims.inputs;
    let [hl, hv, ha] = p.dims.hidden;
    let mut out = String::with_capacity(flat.len() * 24 + 128);
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "variant {}", p.variant).unwrap();
    writeln!(out, "inputs {il} {iv} {ia}").unwrap();
    writeln!(out, "hidden {hl} {hv} {ha}").unwrap();
    writeln!(out, "params {}", flat.len()).unwrap();
    for v in flat {
        writeln!(out, "{v}").unwrap();
    }
    out
}

pub fn save(path: &Path, p: &ModelParams) -> Result<(), IoError> {
    write_atomic(path, to_string(p).as_bytes())
}

pub fn load(path: &Path) -> Result<ModelParams, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse(&text).map_err(|e| IoError::format(path, e))
}

/// Splits line `*pos` (0-based) as `key f1 … fn` and advances `pos`.
fn keyed<'a>(lines: &[&'a str], pos: &mut usize, key: &str, n: usize) -> Result<(usize, Vec<&'a str>), FormatError> {
    let line_no = *pos + 1;
    let line = lines
        .get(*pos)
        .ok_or_else(|| FormatError::new(line_no, format!("missing `{key}` line")))?;
    *pos += 1;
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.first() != Some(&key) || f.len() != n + 1 {
        return Err(FormatError::new(
            line_no,
            format!("expected `{key}` followed by {n} fields"),
        ));
    }
    Ok((line_no, f[1..].to_vec()))
}

fn three(line: usize, f: &[&str]) -> Result<[usize; 3], FormatError> {
    let mut out = [0; 3];
    for (o, s) in out.iter_mut().zip(f) {
        *o = s
            .parse()
            .map_err(|_| FormatError::new(line, format!("invalid dimension `{s}`")))?;
    }
    Ok(out)
}

pub fn parse(text: &str) -> Result<ModelParams, FormatError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut pos = 0;
    let (n, f) = keyed(&lines, &mut pos, MAGIC, 1)?;
    if f[0] != VERSION.to_string() {
        return Err(FormatError::new(n, format!("unsupported checkpoint version `{}`", f[0])));
    }
    let (n, f) = keyed(&lines, &mut pos, "variant", 1)?;
    let variant: Variant = f[0]
        .parse()
        .map_err(|_| FormatError::new(n, format!("unknown variant `{}`", f[0])))?;
    let (n_in, f) = keyed(&lines, &mut pos, "inputs", 3)?;
    let inputs = three(n_in, &f)?;
    let (n_h, f) = keyed(&lines, &mut pos, "hidden", 3)?;
    let hidden = three(n_h, &f)?;
    let dims = ModelDims::new(inputs, hidden).map_err(|e| FormatError::new(n_h, e.to_string()))?;
    let (n, f) = keyed(&lines, &mut pos, "params", 1)?;
    let count: usize = f[0]
        .parse()
        .map_err(|_| FormatError::new(n, format!("invalid parameter count `{}`", f[0])))?;

    let mut params = ModelParams::zeros(variant, dims);
    if count != params.num_params() {
        return Err(FormatError::new(
            n,
            format!(
                "{variant} with these dims has {} parameters, file declares {count}",
                params.num_params()
            ),
        ));
    }
    let body = &lines[pos..];
    if body.len() < count {
        return Err(FormatError::new(
            lines.len() + 1,
            format!("truncated: {} of {count} parameters present", body.len()),
        ));
    }
    if body.len() > count {
        return Err(FormatError::new(pos + count + 1, "trailing content after parameters"));
    }
    let mut flat = Vec::with_capacity(count);
    for (i, line) in body.iter().enumerate() {
        let line_no = pos + i + 1;
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| FormatError::new(line_no, format!("invalid parameter `{line}`")))?;
        flat.push(v);
    }
    params.assign_flat(&flat).expect("count checked");
    params
        .validate()
        .map_err(|e| FormatError::new(n, e.to_string()))?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_every_variant() {
        let dims = ModelDims::new([3, 2, 4], [2, 3, 2]).unwrap();
        for v in Variant::ALL {
            let p = ModelParams::init(v, dims, 11);
            let back = parse(&to_string(&p)).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn count_mismatch_rejected() {
        let dims = ModelDims::new([1, 1, 1], [1, 1, 1]).unwrap();
        let text = to_string(&ModelParams::init(Variant::Tfn, dims, 0));
        let cut: Vec<&str> = text.lines().collect();
        let e = parse(&cut[..cut.len() - 1].join("\n")).unwrap_err();
        assert!(e.message.contains("truncated"), "{e}");
        let e = parse(&text.replace("variant tfn", "variant lf-lstm")).unwrap_err();
        assert_eq!(e.line, 5);
    }

    #[test]
    fn empty_file_rejected() {
        assert_eq!(parse("").unwrap_err().line, 1);
    }
}
