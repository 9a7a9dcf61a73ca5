//! Stratified train/test splitting and stratified k-fold generation.
//!
//! Shuffling is fully specified so splits reproduce across platforms and
//! implementations: items of each class (taken in input order, classes in
//! ascending index order) are permuted by a Fisher-Yates shuffle driven by
//! a ChaCha8 stream keyed from the `u64` seed via the standard SplitMix64
//! expansion (`SeedableRng::seed_from_u64`). Index draws use
//! `next_u64() % (i + 1)`; the modulo bias is far below any practical
//! dataset size.
//!
//! Per-class test counts use half-up rounding of `fraction * n`. K-fold
//! remainders rotate with the class index so no single fold collects every
//! class's extra item.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("test fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
}

/// One item to split: an opaque identifier with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub id: String,
    pub class_index: usize,
}

impl LabeledItem {
    pub fn new(id: impl Into<String>, class_index: usize) -> Self {
        Self {
            id: id.into(),
            class_index,
        }
    }
}

/// Non-fatal conditions discovered while splitting.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitWarning {
    /// Rounding left one side of the split empty for this class, or the
    /// class has fewer items than folds.
    DegenerateClass { class_index: usize, count: usize },
}

impl fmt::Display for SplitWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitWarning::DegenerateClass { class_index, count } => write!(
                f,
                "class {class_index} with {count} items cannot populate every side"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitOutcome {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub warnings: Vec<SplitWarning>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KfoldOutcome {
    pub folds: Vec<Vec<String>>,
    pub warnings: Vec<SplitWarning>,
}

/// Documented Fisher-Yates: swap positions n-1..1 with `next_u64() % (i+1)`.
fn shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

fn check_unique_ids(items: &[LabeledItem]) -> Result<(), PartitionError> {
    let mut seen = HashSet::with_capacity(items.len());
    for item in items {
        if !seen.insert(item.id.as_str()) {
            return Err(PartitionError::DuplicateId(item.id.clone()));
        }
    }
    Ok(())
}

/// Item indices grouped by class, classes ascending, input order within.
fn group_by_class(items: &[LabeledItem]) -> Vec<(usize, Vec<usize>)> {
    let mut classes: Vec<usize> = items.iter().map(|i| i.class_index).collect();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| {
            let members = items
                .iter()
                .enumerate()
                .filter(|(_, it)| it.class_index == c)
                .map(|(i, _)| i)
                .collect();
            (c, members)
        })
        .collect()
}

fn round_half_up(x: f64) -> usize {
    // f64::round is half away from zero, which is half-up for x >= 0
    x.round() as usize
}

/// Stratified split: per class with `n` items, exactly `round(fraction * n)`
/// go to the test side, chosen by seeded shuffle. Output id lists preserve
/// the original item order.
pub fn stratified_split(
    items: &[LabeledItem],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitOutcome, PartitionError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(PartitionError::InvalidFraction(test_fraction));
    }
    check_unique_ids(items)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; items.len()];
    let mut warnings = Vec::new();
    for (class_index, mut members) in group_by_class(items) {
        let n = members.len();
        let test_count = round_half_up(test_fraction * n as f64);
        if test_count == 0 || test_count == n {
            warnings.push(SplitWarning::DegenerateClass {
                class_index,
                count: n,
            });
        }
        shuffle(&mut rng, &mut members);
        for &idx in members.iter().take(test_count) {
            is_test[idx] = true;
        }
    }

    let mut outcome = SplitOutcome {
        warnings,
        ..Default::default()
    };
    for (i, item) in items.iter().enumerate() {
        if is_test[i] {
            outcome.test.push(item.id.clone());
        } else {
            outcome.train.push(item.id.clone());
        }
    }
    Ok(outcome)
}

/// Stratified k-fold: folds are disjoint, cover all items, and within every
/// class the fold sizes differ by at most one.
pub fn stratified_kfold(
    items: &[LabeledItem],
    k: usize,
    seed: u64,
) -> Result<KfoldOutcome, PartitionError> {
    if k < 2 {
        return Err(PartitionError::InvalidK(k));
    }
    check_unique_ids(items)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; items.len()];
    let mut warnings = Vec::new();
    for (class_index, mut members) in group_by_class(items) {
        let n = members.len();
        if n < k {
            warnings.push(SplitWarning::DegenerateClass {
                class_index,
                count: n,
            });
        }
        shuffle(&mut rng, &mut members);
        let base = n / k;
        let rem = n % k;
        let mut cursor = 0usize;
        for offset in 0..k {
            // rotate which folds take the remainder so totals stay balanced
            let fold = (class_index + offset) % k;
            let size = base + usize::from(offset < rem);
            for &idx in &members[cursor..cursor + size] {
                fold_of[idx] = fold;
            }
            cursor += size;
        }
    }

    let mut folds = vec![Vec::new(); k];
    for (i, item) in items.iter().enumerate() {
        folds[fold_of[i]].push(item.id.clone());
    }
    Ok(KfoldOutcome { folds, warnings })
}

/// Parse an items file: one `<item_id> <class_index>` pair per line,
/// whitespace-separated; `#` comments and blank lines ignored.
pub fn parse_items(text: &str) -> Result<Vec<LabeledItem>, String> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut fields = t.split_whitespace();
        let id = fields.next().ok_or_else(|| format!("line {}: empty", idx + 1))?;
        let class: usize = fields
            .next()
            .ok_or_else(|| format!("line {}: missing class index", idx + 1))?
            .parse()
            .map_err(|e| format!("line {}: bad class index: {e}", idx + 1))?;
        if fields.next().is_some() {
            return Err(format!("line {}: expected 2 fields", idx + 1));
        }
        out.push(LabeledItem::new(id, class));
    }
    Ok(out)
}

/// Write `train.txt` and `test.txt` (one item id per line) into `dir`.
pub fn write_split_files(dir: &Path, outcome: &SplitOutcome) -> std::io::Result<()> {
    for (name, ids) in [("train.txt", &outcome.train), ("test.txt", &outcome.test)] {
        let mut f = std::fs::File::create(dir.join(name))?;
        for id in ids {
            writeln!(f, "{id}")?;
        }
    }
    Ok(())
}

/// Write `fold_<i>.txt` files (one item id per line) into `dir`.
pub fn write_fold_files(dir: &Path, outcome: &KfoldOutcome) -> std::io::Result<()> {
    for (i, fold) in outcome.folds.iter().enumerate() {
        let mut f = std::fs::File::create(dir.join(format!("fold_{i}.txt")))?;
        for id in fold {
            writeln!(f, "{id}")?;
        }
    }
    Ok(())
}
