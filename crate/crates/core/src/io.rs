//! Text and image formats: patch dictionaries, custom `Ω` tables, the
//! dictionary graph, label fields (PGM and CSV), uncertainty maps and flow
//! traces.
//!
//! Writers are byte-deterministic. Reals are written with 17 significant
//! digits in the style of C's `%.17g`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::dictionary::{dictionary_graph_edges, PatchAdjacency, PatchDictionary, PatchTemplate};
use crate::error::{Error, Result};
use crate::flow::TraceRecord;
use crate::grid::Direction;
use crate::labeling::{LabelField, UncertaintyField};

/// `%.17g`-style formatting.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp) as usize, x);
        strip_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Nonblank lines with `#` comments removed, numbered from 1.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse '{tok}'")))
}

pub fn format_dictionary(dict: &PatchDictionary) -> String {
    let k = dict.side();
    let mut s = format!("patchdict v1 {k} {} {}\n", dict.class_count(), dict.len());
    for (d, t) in dict.templates().iter().enumerate() {
        let _ = writeln!(s, "template {d}");
        for r in 0..k {
            let row: Vec<String> = (0..k).map(|c| t.at(r, c).to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s
}

/// Parses the `patchdict v1` format. `path` is only used in error messages.
pub fn parse_dictionary(text: &str, path: &Path) -> Result<PatchDictionary> {
    let mut lines = content_lines(text);
    let Some((ln, header)) = lines.next() else {
        return Err(parse_err(path, 1, "empty dictionary file"));
    };
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != "patchdict" || toks[1] != "v1" {
        return Err(parse_err(path, ln, "expected header 'patchdict v1 <k> <c> <|D|>'"));
    }
    let k: usize = parse_num(path, ln, toks[2])?;
    let c: usize = parse_num(path, ln, toks[3])?;
    let count: usize = parse_num(path, ln, toks[4])?;
    if k.is_multiple_of(2) || c == 0 || count == 0 {
        return Err(parse_err(
            path,
            ln,
            "patch side must be odd, class and template counts positive",
        ));
    }
    let mut templates = Vec::with_capacity(count);
    for d in 0..count {
        let Some((ln, head)) = lines.next() else {
            return Err(parse_err(path, text.lines().count(), format!("missing template {d}")));
        };
        let toks: Vec<&str> = head.split_whitespace().collect();
        if toks.len() != 2 || toks[0] != "template" {
            return Err(parse_err(path, ln, "expected 'template <index>'"));
        }
        let idx: usize = parse_num(path, ln, toks[1])?;
        if idx != d {
            return Err(parse_err(path, ln, format!("template index {idx}, expected {d}")));
        }
        let mut cells = Vec::with_capacity(k * k);
        for _ in 0..k {
            let Some((ln, row)) = lines.next() else {
                return Err(parse_err(
                    path,
                    text.lines().count(),
                    format!("template {d} is truncated"),
                ));
            };
            let vals = row
                .split_whitespace()
                .map(|t| parse_num::<usize>(path, ln, t))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != k {
                return Err(parse_err(
                    path,
                    ln,
                    format!("expected {k} class ids, got {}", vals.len()),
                ));
            }
            if let Some(bad) = vals.iter().find(|&&x| x >= c) {
                return Err(parse_err(path, ln, format!("class id {bad} not below {c}")));
            }
            cells.extend(vals);
        }
        templates.push(PatchTemplate::new(k, cells).map_err(|e| parse_err(path, ln, e.to_string()))?);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(path, ln, "trailing content after last template"));
    }
    PatchDictionary::new(templates, c).map_err(|e| parse_err(path, 1, e.to_string()))
}

pub fn format_dictionary_graph(adj: &PatchAdjacency) -> String {
    let mut s = format!("dictgraph {}\n", adj.len());
    for e in dictionary_graph_edges(adj) {
        let tag = match e.direction {
            Direction::Horizontal => 'h',
            Direction::Vertical => 'v',
        };
        let _ = writeln!(s, "{tag} {} {} {}", e.from, e.to, fmt_g17(e.weight));
    }
    s
}

pub fn format_omega(adj: &PatchAdjacency) -> String {
    let mut s = format!("omega v1 {}\n", adj.len());
    for om in [&adj.omega_h, &adj.omega_v] {
        for row in om.rows() {
            let vals: Vec<String> = row.iter().map(|&x| fmt_g17(x)).collect();
            let _ = writeln!(s, "{}", vals.join(" "));
        }
    }
    s
}

/// Parses `omega v1 <|D|>` followed by the rows of `Ω^h` and then `Ω^v`.
pub fn parse_omega(text: &str, path: &Path) -> Result<PatchAdjacency> {
    let mut lines = content_lines(text);
    let Some((ln, header)) = lines.next() else {
        return Err(parse_err(path, 1, "empty omega file"));
    };
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != "omega" || toks[1] != "v1" {
        return Err(parse_err(path, ln, "expected header 'omega v1 <|D|>'"));
    }
    let m: usize = parse_num(path, ln, toks[2])?;
    if m == 0 {
        return Err(parse_err(path, ln, "template count must be positive"));
    }
    let mut read_block = |name: &str| -> Result<Array2<f64>> {
        let mut out = Array2::zeros((m, m));
        for r in 0..m {
            let Some((ln, row)) = lines.next() else {
                return Err(parse_err(
                    path,
                    text.lines().count(),
                    format!("{name} block is truncated"),
                ));
            };
            let vals = row
                .split_whitespace()
                .map(|t| parse_num::<f64>(path, ln, t))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != m {
                return Err(parse_err(path, ln, format!("expected {m} weights, got {}", vals.len())));
            }
            if let Some(bad) = vals.iter().find(|&&x| !x.is_finite() || x < 0.0) {
                return Err(parse_err(path, ln, format!("invalid weight {bad}")));
            }
            out.row_mut(r).assign(&ndarray::Array1::from(vals));
        }
        Ok(out)
    };
    let h = read_block("horizontal")?;
    let v = read_block("vertical")?;
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(path, ln, "trailing content after omega tables"));
    }
    PatchAdjacency::new(h, v).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Plain (P2) PGM with class ids as gray levels.
pub fn format_labels_pgm(labels: &LabelField, class_count: usize) -> String {
    let maxval = class_count.saturating_sub(1).max(1);
    let mut s = format!("P2\n{} {}\n{maxval}\n", labels.width(), labels.height());
    for r in 0..labels.height() {
        let row: Vec<String> = (0..labels.width()).map(|c| labels.get(r, c).to_string()).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0, line: 1 }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'\n' => {
                    self.line += 1;
                    self.pos += 1;
                }
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| {
            (
                self.line,
                std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("?"),
            )
        })
    }
}

/// Reads a P2 or P5 PGM; gray levels are class ids.
pub fn parse_labels_pgm(bytes: &[u8], path: &Path) -> Result<LabelField> {
    let mut toks = Tokens::new(bytes);
    let mut header = |what: &str| -> Result<(usize, &str)> {
        toks.next()
            .ok_or_else(|| parse_err(path, toks.line, format!("missing {what}")))
    };
    let (ln, magic) = header("magic number")?;
    let binary = match magic {
        "P2" => false,
        "P5" => true,
        other => {
            return Err(parse_err(
                path,
                ln,
                format!("unsupported magic '{other}', expected P2 or P5"),
            ))
        }
    };
    let (ln, w) = header("width")?;
    let width: usize = parse_num(path, ln, w)?;
    let (ln, h) = header("height")?;
    let height: usize = parse_num(path, ln, h)?;
    let (ln, mv) = header("maxval")?;
    let maxval: usize = parse_num(path, ln, mv)?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(parse_err(path, ln, "invalid PGM dimensions or maxval"));
    }
    let n = width * height;
    let mut labels = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates maxval from the raster
        let start = toks.pos + 1;
        let bpp = if maxval < 256 { 1 } else { 2 };
        let raster = bytes
            .get(start..start + n * bpp)
            .ok_or_else(|| parse_err(path, toks.line, format!("raster has fewer than {} bytes", n * bpp)))?;
        for chunk in raster.chunks(bpp) {
            let v = if bpp == 1 {
                chunk[0] as usize
            } else {
                ((chunk[0] as usize) << 8) | chunk[1] as usize
            };
            labels.push(v);
        }
    } else {
        for _ in 0..n {
            let (ln, t) = toks
                .next()
                .ok_or_else(|| parse_err(path, toks.line, format!("expected {n} gray values")))?;
            labels.push(parse_num(path, ln, t)?);
        }
        if let Some((ln, _)) = toks.next() {
            return Err(parse_err(path, ln, "trailing data after raster"));
        }
    }
    if let Some(pos) = labels.iter().position(|&v| v > maxval) {
        return Err(parse_err(
            path,
            1,
            format!("gray value {} at pixel {pos} exceeds maxval", labels[pos]),
        ));
    }
    LabelField::new(height, width, labels)
}

pub fn format_labels_csv(labels: &LabelField) -> String {
    let mut s = String::new();
    for r in 0..labels.height() {
        let row: Vec<String> = (0..labels.width()).map(|c| labels.get(r, c).to_string()).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn parse_labels_csv(text: &str, path: &Path) -> Result<LabelField> {
    let mut width = None;
    let mut labels = Vec::new();
    let mut height = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| parse_num::<usize>(path, i + 1, t.trim()))
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("row has {} entries, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        labels.extend(row);
        height += 1;
    }
    let Some(width) = width else {
        return Err(parse_err(path, 1, "empty label file"));
    };
    LabelField::new(height, width, labels)
}

/// Reads a label field, choosing the format by extension (`.csv` or PGM).
pub fn read_labels(path: &Path) -> Result<LabelField> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = String::from_utf8(bytes).map_err(|_| parse_err(path, 1, "file is not UTF-8"))?;
        parse_labels_csv(&text, path)
    } else {
        parse_labels_pgm(&bytes, path)
    }
}

pub fn read_dictionary(path: &Path) -> Result<PatchDictionary> {
    parse_dictionary(&read_text(path)?, path)
}

pub fn read_omega(path: &Path) -> Result<PatchAdjacency> {
    parse_omega(&read_text(path)?, path)
}

/// Plain PGM of the normalized field scaled to `0..=255`.
pub fn format_uncertainty_pgm(u: &UncertaintyField) -> String {
    let mut s = format!("P2\n{} {}\n255\n", u.width, u.height);
    for r in 0..u.height {
        let row: Vec<String> = (0..u.width)
            .map(|c| ((u.normalized[r * u.width + c] * 255.0).round() as u8).to_string())
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// One CSV row per grid row.
pub fn format_real_grid_csv(values: &[f64], width: usize) -> String {
    let mut s = String::new();
    for row in values.chunks(width) {
        let vals: Vec<String> = row.iter().map(|&x| fmt_g17(x)).collect();
        let _ = writeln!(s, "{}", vals.join(","));
    }
    s
}

pub fn format_trace_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::from("step,time,objective,mean_entropy,mean_max_entry\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.step,
            fmt_g17(r.time),
            fmt_g17(r.objective),
            fmt_g17(r.mean_entropy),
            fmt_g17(r.mean_max_entry)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(fmt_g17(0.0), "0");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(0.5), "0.5");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(2.0 / 3.0), "0.66666666666666663");
        assert_eq!(fmt_g17(-12.25), "-12.25");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(123456.0), "123456");
        assert_eq!(fmt_g17(f64::NAN), "nan");
    }

    proptest! {
        #[test]
        fn g17_round_trips(x in prop::num::f64::NORMAL) {
            prop_assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn dictionary_round_trip_and_errors() {
        let text = "patchdict v1 3 2 2\ntemplate 0\n0 1 0\n0 1 0\n0 1 0\ntemplate 1\n0 0 0\n1 1 1\n0 0 0\n";
        let dict = parse_dictionary(text, p()).unwrap();
        assert_eq!(dict.len(), 2);
        assert_eq!(dict.template(1).at(1, 0), 1);
        assert_eq!(format_dictionary(&dict), text);

        let bad_class = "patchdict v1 3 2 1\ntemplate 0\n0 1 0\n0 2 0\n0 1 0\n";
        match parse_dictionary(bad_class, p()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
        let short_row = "patchdict v1 3 2 1\ntemplate 0\n0 1 0\n0 1\n0 1 0\n";
        assert!(matches!(
            parse_dictionary(short_row, p()),
            Err(Error::Parse { line: 4, .. })
        ));
        assert!(matches!(
            parse_dictionary("patchdict v2 3 2 1\n", p()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_dictionary("patchdict v1 3 2 2\ntemplate 0\n0 0 0\n0 0 0\n0 0 0\n", p()).is_err());
        assert!(parse_dictionary("", p()).is_err());
    }

    #[test]
    fn omega_round_trip() {
        let adj = PatchAdjacency::new(
            ndarray::array![[0.0, 0.1], [2.0 / 3.0, 1.0]],
            ndarray::array![[0.25, 0.0], [0.0, 1e-20]],
        )
        .unwrap();
        let text = format_omega(&adj);
        assert!(text.starts_with("omega v1 2\n0 0.10000000000000001\n"));
        assert_eq!(parse_omega(&text, p()).unwrap(), adj);
        assert!(parse_omega("omega v1 2\n0 1\n1 0\n0 -1\n1 0\n", p()).is_err());
        assert!(parse_omega("omega v1 2\n0 1\n1 0\n0 1\n", p()).is_err());
    }

    #[test]
    fn dictgraph_format() {
        let adj = PatchAdjacency::new(
            ndarray::array![[1.0, 0.0], [0.0, 0.5]],
            ndarray::array![[0.0, 1.0 / 3.0], [0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(
            format_dictionary_graph(&adj),
            "dictgraph 2\nh 0 0 1\nh 1 1 0.5\nv 0 1 0.33333333333333331\n"
        );
    }

    #[test]
    fn pgm_plain_and_binary() {
        let l = LabelField::new(2, 3, vec![0, 1, 2, 2, 1, 0]).unwrap();
        let text = format_labels_pgm(&l, 3);
        assert_eq!(text, "P2\n3 2\n2\n0 1 2\n2 1 0\n");
        assert_eq!(parse_labels_pgm(text.as_bytes(), p()).unwrap(), l);

        let mut bin = b"P5\n# comment\n3 2\n255\n".to_vec();
        bin.extend([0u8, 1, 2, 2, 1, 0]);
        assert_eq!(parse_labels_pgm(&bin, p()).unwrap(), l);

        let mut wide = b"P5 3 2 65535\n".to_vec();
        for v in [0u16, 1, 2, 2, 1, 300] {
            wide.extend(v.to_be_bytes());
        }
        assert_eq!(parse_labels_pgm(&wide, p()).unwrap().labels()[5], 300);

        assert!(parse_labels_pgm(b"P3\n1 1\n1\n0\n", p()).is_err());
        assert!(parse_labels_pgm(b"P2\n2 1\n1\n0\n", p()).is_err());
        assert!(parse_labels_pgm(b"P2\n1 1\n1\n5\n", p()).is_err());
        assert!(parse_labels_pgm(b"P5\n2 2\n255\n\x00", p()).is_err());
    }

    #[test]
    fn csv_labels() {
        let l = LabelField::new(2, 2, vec![1, 0, 0, 1]).unwrap();
        let text = format_labels_csv(&l);
        assert_eq!(text, "1,0\n0,1\n");
        assert_eq!(parse_labels_csv(&text, p()).unwrap(), l);
        assert!(matches!(
            parse_labels_csv("1,0\n0\n", p()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_labels_csv("1,x\n", p()).is_err());
        assert!(parse_labels_csv("\n", p()).is_err());
    }

    #[test]
    fn uncertainty_outputs() {
        let u = UncertaintyField {
            height: 1,
            width: 3,
            raw: vec![0.0, 2.25, 4.5],
            normalized: vec![0.0, 0.5, 1.0],
        };
        assert_eq!(format_uncertainty_pgm(&u), "P2\n3 1\n255\n0 128 255\n");
        assert_eq!(format_real_grid_csv(&u.raw, 3), "0,2.25,4.5\n");
    }

    #[test]
    fn trace_csv_header() {
        let t = [TraceRecord {
            step: 0,
            time: 0.0,
            objective: 1.5,
            mean_entropy: 0.5,
            mean_max_entry: 0.75,
        }];
        assert_eq!(
            format_trace_csv(&t),
            "step,time,objective,mean_entropy,mean_max_entry\n0,0,1.5,0.5,0.75\n"
        );
    }
}
