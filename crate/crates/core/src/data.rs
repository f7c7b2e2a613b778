//! Datasets, the synthetic distributions used by the experiments, and CSV ingestion.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net::NetParams;
use crate::rng::{tags, Seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    /// +1 or -1.
    Binary(f64),
    /// Class index in `0..l`.
    Class(usize),
    Real(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Binary,
    Multiclass(usize),
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: DVector<f64>,
    pub y: Label,
}

/// An immutable, non-empty collection of examples sharing one dimension and label kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    d: usize,
    kind: LabelKind,
}

fn label_matches(y: &Label, kind: LabelKind) -> bool {
    match (y, kind) {
        (Label::Binary(v), LabelKind::Binary) => *v == 1.0 || *v == -1.0,
        (Label::Class(c), LabelKind::Multiclass(l)) => *c < l,
        (Label::Real(v), LabelKind::Regression) => v.is_finite(),
        _ => false,
    }
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, kind: LabelKind) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::Degenerate("dataset must contain at least one example".into()))?;
        let d = first.x.len();
        if d == 0 {
            return Err(Error::Dimension("examples must have d >= 1".into()));
        }
        for (i, e) in examples.iter().enumerate() {
            if e.x.len() != d {
                return Err(Error::Dimension(format!(
                    "example {i} has dimension {}, expected {d}",
                    e.x.len()
                )));
            }
            if e.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Degenerate(format!("example {i} has a non-finite feature")));
            }
            if !label_matches(&e.y, kind) {
                return Err(Error::Degenerate(format!(
                    "example {i} label {:?} does not match {kind:?}",
                    e.y
                )));
            }
        }
        Ok(Dataset { examples, d, kind })
    }

    /// Builds a binary dataset from columns of `x` (d×n) and labels in {-1,+1}.
    pub fn binary(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if x.ncols() != y.len() {
            return Err(Error::Dimension("label count differs from column count".into()));
        }
        let ex = x
            .column_iter()
            .zip(y)
            .map(|(c, &v)| LabeledExample { x: c.into_owned(), y: Label::Binary(v) })
            .collect();
        Dataset::new(ex, LabelKind::Binary)
    }

    pub fn regression(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if x.ncols() != y.len() {
            return Err(Error::Dimension("label count differs from column count".into()));
        }
        let ex = x
            .column_iter()
            .zip(y)
            .map(|(c, &v)| LabeledExample { x: c.into_owned(), y: Label::Real(v) })
            .collect();
        Dataset::new(ex, LabelKind::Regression)
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }
    pub fn n(&self) -> usize {
        self.examples.len()
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn kind(&self) -> LabelKind {
        self.kind
    }
    pub fn x(&self, i: usize) -> &DVector<f64> {
        &self.examples[i].x
    }

    /// Inputs as a d×n matrix, one example per column.
    pub fn design(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.n(), |r, c| self.examples[c].x[r])
    }

    /// Labels as reals: ±1 for binary, the class index for multiclass, the target for regression.
    pub fn targets(&self) -> Vec<f64> {
        self.examples
            .iter()
            .map(|e| match e.y {
                Label::Binary(v) | Label::Real(v) => v,
                Label::Class(c) => c as f64,
            })
            .collect()
    }

    pub fn classes(&self) -> Vec<usize> {
        self.examples
            .iter()
            .map(|e| match e.y {
                Label::Class(c) => c,
                Label::Binary(v) => usize::from(v > 0.0),
                Label::Real(_) => 0,
            })
            .collect()
    }

    /// Largest Euclidean norm over inputs.
    pub fn max_norm(&self) -> f64 {
        self.examples.iter().map(|e| e.x.norm()).fold(0.0, f64::max)
    }

    /// Concatenates two datasets of the same shape.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let mut ex = self.examples.clone();
        ex.extend(other.examples.iter().cloned());
        if other.kind != self.kind {
            return Err(Error::Dimension("label kinds differ".into()));
        }
        Dataset::new(ex, self.kind)
    }
}

/// One draw from D: returns (x, y).
fn draw_d(d: usize, rng: &mut impl Rng) -> (DVector<f64>, f64) {
    let mut x = DVector::zeros(d);
    let case: u8 = rng.gen_range(0..4);
    let y = match case {
        0 => {
            x[0] = 1.0;
            1.0
        }
        1 => {
            x[0] = -1.0;
            1.0
        }
        2 => {
            x[1] = 1.0;
            -1.0
        }
        _ => {
            x[1] = -1.0;
            -1.0
        }
    };
    for k in 2..d {
        x[k] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    }
    (x, y)
}

/// Samples `n` examples from D in dimension `d`.
///
/// Head coordinates: with probability 1/4 each, `x1 = ±1` (label +1) or `x2 = ±1`
/// (label -1); the remaining `d - 2` coordinates are independent uniform signs.
/// Example `i` depends only on `(seed, i)`.
pub fn sample_distribution_d(n: usize, d: usize, seed: Seed) -> Result<Dataset> {
    sample_distribution_d_from(n, d, seed, 0)
}

/// As [`sample_distribution_d`] but starting at stream index `offset`, so a test set drawn
/// with a different offset never overlaps the training draws.
pub fn sample_distribution_d_from(n: usize, d: usize, seed: Seed, offset: u64) -> Result<Dataset> {
    if d < 3 {
        return Err(Error::Dimension(format!("distribution D needs d >= 3, got {d}")));
    }
    if n == 0 {
        return Err(Error::Degenerate("n must be at least 1".into()));
    }
    let ex = (0..n as u64)
        .map(|i| {
            let mut rng = seed.rng_at(tags::DATA_D, offset + i);
            let (x, y) = draw_d(d, &mut rng);
            LabeledExample { x, y: Label::Binary(y) }
        })
        .collect();
    Dataset::new(ex, LabelKind::Binary)
}

/// Teacher-labelled Gaussian inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TeacherMode {
    /// Label is the sign of the teacher output; rejects points with |teacher(x)| < floor.
    Classification { margin_floor: f64 },
    /// Label is the teacher output itself.
    Regression,
}

const PROBE_DRAWS: usize = 10_000;
const MIN_ACCEPTANCE: f64 = 1e-4;

/// Draws standard normal inputs and labels them with `teacher`.
///
/// In classification mode a probe batch of 10^4 draws estimates the acceptance rate of the
/// rejection step first, and an acceptance rate below 10^-4 is reported as infeasible.
pub fn sample_teacher_net(
    n: usize,
    d: usize,
    teacher: &NetParams,
    mode: TeacherMode,
    seed: Seed,
) -> Result<Dataset> {
    sample_teacher_net_from(n, d, teacher, mode, seed, 0)
}

/// As [`sample_teacher_net`] with a stream offset, used for disjoint test sets.
pub fn sample_teacher_net_from(
    n: usize,
    d: usize,
    teacher: &NetParams,
    mode: TeacherMode,
    seed: Seed,
    offset: u64,
) -> Result<Dataset> {
    if teacher.depth() != 2 {
        return Err(Error::Dimension("teacher must be a two-layer net".into()));
    }
    if teacher.input_dim() != d {
        return Err(Error::Dimension(format!(
            "teacher expects d = {}, got {d}",
            teacher.input_dim()
        )));
    }
    if n == 0 {
        return Err(Error::Degenerate("n must be at least 1".into()));
    }
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
    };
    match mode {
        TeacherMode::Regression => {
            let ex = (0..n as u64)
                .map(|i| {
                    let mut rng = seed.rng_at(tags::TEACHER, offset + i);
                    let x = gauss(&mut rng);
                    let y = teacher.score(&x);
                    LabeledExample { x, y: Label::Real(y) }
                })
                .collect();
            Dataset::new(ex, LabelKind::Regression)
        }
        TeacherMode::Classification { margin_floor } => {
            if !(margin_floor >= 0.0) {
                return Err(Error::Domain("margin floor must be >= 0".into()));
            }
            if margin_floor > 0.0 {
                let mut accepted = 0usize;
                for i in 0..PROBE_DRAWS as u64 {
                    let mut rng = seed.rng_at(tags::TEACHER_PROBE, i);
                    let x = gauss(&mut rng);
                    if teacher.score(&x).abs() >= margin_floor {
                        accepted += 1;
                    }
                }
                let rate = accepted as f64 / PROBE_DRAWS as f64;
                if rate < MIN_ACCEPTANCE {
                    return Err(Error::InfeasibleMargin { floor: margin_floor, rate, probe: PROBE_DRAWS });
                }
            }
            // Each example owns one stream and redraws inside it until accepted, so example i
            // does not depend on how many rejections earlier examples needed.
            let mut ex = Vec::with_capacity(n);
            for i in 0..n as u64 {
                let mut rng = seed.rng_at(tags::TEACHER, offset + i);
                loop {
                    let x = gauss(&mut rng);
                    let s = teacher.score(&x);
                    if s.abs() >= margin_floor && s != 0.0 {
                        let y = if s > 0.0 { 1.0 } else { -1.0 };
                        ex.push(LabeledExample { x, y: Label::Binary(y) });
                        break;
                    }
                }
            }
            Dataset::new(ex, LabelKind::Binary)
        }
    }
}

/// Reads a dataset from a comma-separated file: `d` feature columns then one label column.
/// A first row that does not parse as numbers is treated as a header.
pub fn load_csv(path: impl AsRef<Path>, kind: LabelKind) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, kind)
}

/// Parses CSV text; see [`load_csv`].
pub fn parse_csv(text: &str, kind: LabelKind) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut examples = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(e) => {
                if idx == 0 {
                    width = Some(rec.len());
                    continue;
                }
                return Err(Error::Parse { line, msg: format!("non-numeric cell: {e}") });
            }
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {w} columns, found {}", values.len()),
                })
            }
            _ => {}
        }
        if values.len() < 2 {
            return Err(Error::Parse { line, msg: "need at least one feature and a label".into() });
        }
        let (feat, lab) = values.split_at(values.len() - 1);
        let lab = lab[0];
        if feat.iter().chain(std::iter::once(&lab)).any(|v| !v.is_finite()) {
            return Err(Error::Parse { line, msg: "non-finite value".into() });
        }
        let y = match kind {
            LabelKind::Binary => {
                if lab != 1.0 && lab != -1.0 {
                    return Err(Error::Parse { line, msg: format!("binary label must be -1 or +1, got {lab}") });
                }
                Label::Binary(lab)
            }
            LabelKind::Multiclass(l) => {
                if lab < 0.0 || lab.fract() != 0.0 || lab as usize >= l {
                    return Err(Error::Parse { line, msg: format!("class label must be in 0..{l}, got {lab}") });
                }
                Label::Class(lab as usize)
            }
            LabelKind::Regression => Label::Real(lab),
        };
        examples.push(LabeledExample { x: DVector::from_column_slice(feat), y });
    }
    if examples.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no data rows".into() });
    }
    Dataset::new(examples, kind)
}
