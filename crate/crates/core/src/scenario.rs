//! Synthetic binary labeling instances: a dictionary, a clean label field and
//! a noisy copy of it. Everything is a deterministic function of the seed.

use std::collections::HashSet;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{PatchDictionary, PatchTemplate};
use crate::error::{Error, Result};
use crate::labeling::LabelField;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Thin horizontal and vertical lines with the 16-template line dictionary.
    Lines,
    Checkerboard,
    TwoClassBlobs,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Lines => "lines5x5-like",
            ScenarioKind::Checkerboard => "checkerboard",
            ScenarioKind::TwoClassBlobs => "two-class-blobs",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lines5x5-like" | "lines" => Ok(ScenarioKind::Lines),
            "checkerboard" => Ok(ScenarioKind::Checkerboard),
            "two-class-blobs" | "blobs" => Ok(ScenarioKind::TwoClassBlobs),
            other => Err(Error::domain(format!(
                "unknown scenario '{other}' (expected lines5x5-like, checkerboard or two-class-blobs)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub dictionary: PatchDictionary,
    pub clean: LabelField,
    pub noisy: LabelField,
}

/// The 16 binary `3 × 3` line templates: the empty patch, a horizontal line
/// in each row (1–3), a vertical line in each column (4–6), and every
/// horizontal/vertical crossing (7–15, row-major over `(row, col)`).
pub fn line_dictionary() -> PatchDictionary {
    let line = |row: Option<usize>, col: Option<usize>| {
        let cells = (0..9)
            .map(|q| (Some(q / 3) == row || Some(q % 3) == col) as usize)
            .collect();
        PatchTemplate::new(3, cells).expect("3x3 template")
    };
    let mut templates = vec![line(None, None)];
    templates.extend((0..3).map(|r| line(Some(r), None)));
    templates.extend((0..3).map(|c| line(None, Some(c))));
    for r in 0..3 {
        for c in 0..3 {
            templates.push(line(Some(r), Some(c)));
        }
    }
    PatchDictionary::new(templates, 2)
        .expect("valid dictionary")
        .with_class_names(vec!["background".into(), "foreground".into()])
        .expect("two names")
}

/// Distinct fully in-grid `k × k` windows of `labels`, in raster order of
/// first appearance.
pub fn dictionary_from_windows(labels: &LabelField, k: usize, class_count: usize) -> Result<PatchDictionary> {
    if k.is_multiple_of(2) || k > labels.height() || k > labels.width() {
        return Err(Error::domain(format!(
            "window side {k} must be odd and fit in the field"
        )));
    }
    labels.check_classes(class_count)?;
    let mut seen = HashSet::new();
    let mut templates = Vec::new();
    for r in 0..=labels.height() - k {
        for c in 0..=labels.width() - k {
            let cells: Vec<usize> = (0..k * k).map(|q| labels.get(r + q / k, c + q % k)).collect();
            if seen.insert(cells.clone()) {
                templates.push(PatchTemplate::new(k, cells)?);
            }
        }
    }
    PatchDictionary::new(templates, class_count)
}

/// Picks up to `count` positions in `1..len-1` with pairwise distance ≥ 3.
fn spaced_positions(len: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    if len < 3 {
        return out;
    }
    for _ in 0..count * 50 {
        if out.len() == count {
            break;
        }
        let p = rng.gen_range(1..len - 1);
        if out.iter().all(|&q| p.abs_diff(q) >= 3) {
            out.push(p);
        }
    }
    out.sort_unstable();
    out
}

fn lines_field(height: usize, width: usize, rng: &mut ChaCha8Rng) -> LabelField {
    let rows = spaced_positions(height, (height / 6).max(1), rng);
    let cols = spaced_positions(width, (width / 6).max(1), rng);
    let labels = (0..height * width)
        .map(|i| (rows.contains(&(i / width)) || cols.contains(&(i % width))) as usize)
        .collect();
    LabelField::new(height, width, labels).expect("nonempty")
}

fn checkerboard_field(height: usize, width: usize, rng: &mut ChaCha8Rng) -> LabelField {
    let block = (height.min(width) / 4).max(2);
    let phase = rng.gen_range(0..2);
    let labels = (0..height * width)
        .map(|i| ((i / width) / block + (i % width) / block + phase) % 2)
        .collect();
    LabelField::new(height, width, labels).expect("nonempty")
}

fn blobs_field(height: usize, width: usize, rng: &mut ChaCha8Rng) -> LabelField {
    let mut field = LabelField::filled(height, width, 0).expect("nonempty");
    let count = ((height * width) / 64).max(1);
    for _ in 0..count {
        let cr = rng.gen_range(0..height) as f64;
        let cc = rng.gen_range(0..width) as f64;
        let radius: f64 = rng.gen_range(2.0..4.5);
        for r in 0..height {
            for c in 0..width {
                let (dr, dc) = (r as f64 - cr, c as f64 - cc);
                if dr * dr + dc * dc <= radius * radius {
                    field.set(r, c, 1);
                }
            }
        }
    }
    field
}

/// Flips each label independently with probability `rate` (binary fields).
pub fn add_flip_noise(clean: &LabelField, rate: f64, rng: &mut ChaCha8Rng) -> LabelField {
    let mut noisy = clean.clone();
    for r in 0..clean.height() {
        for c in 0..clean.width() {
            if rng.gen::<f64>() < rate {
                noisy.set(r, c, 1 - clean.get(r, c));
            }
        }
    }
    noisy
}

pub fn gen_scenario(kind: ScenarioKind, height: usize, width: usize, noise_rate: f64, seed: u64) -> Result<Scenario> {
    if height < 3 || width < 3 {
        return Err(Error::domain(format!(
            "scenario grids must be at least 3x3, got {height}x{width}"
        )));
    }
    if !(0.0..=1.0).contains(&noise_rate) {
        return Err(Error::domain(format!(
            "noise rate must lie in [0, 1], got {noise_rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = match kind {
        ScenarioKind::Lines => lines_field(height, width, &mut rng),
        ScenarioKind::Checkerboard => checkerboard_field(height, width, &mut rng),
        ScenarioKind::TwoClassBlobs => blobs_field(height, width, &mut rng),
    };
    let dictionary = match kind {
        ScenarioKind::Lines => line_dictionary(),
        _ => dictionary_from_windows(&clean, 3, 2)?,
    };
    let noisy = add_flip_noise(&clean, noise_rate, &mut rng);
    Ok(Scenario {
        kind,
        dictionary,
        clean,
        noisy,
    })
}
