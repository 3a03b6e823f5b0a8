use std::path::Path;

use guidesampler_core::{Alphabet, RandomSource, TokenSequence};

use crate::error::{Error, Result};
use crate::landscape::Landscape;

/// Sequences with one measured value per property axis.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub sequences: Vec<TokenSequence>,
    /// `values[axis][i]` belongs to `sequences[i]`.
    pub values: Vec<Vec<f64>>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// Draws `n` sequences from the data distribution with the target region
/// held out, labeled with the true fitness.
pub fn draw_labeled(landscape: &Landscape, n: usize, rng: &mut RandomSource) -> Result<LabeledSet> {
    let space = landscape.space();
    let p = landscape.p_data();
    let mut sequences = Vec::with_capacity(n);
    while sequences.len() < n {
        let x = space.decode(p.sample_index(rng))?;
        if !landscape.in_target(&x) {
            sequences.push(x);
        }
    }
    let values = (0..landscape.num_properties())
        .map(|axis| sequences.iter().map(|x| landscape.fitness(axis, x)).collect())
        .collect();
    Ok(LabeledSet { sequences, values })
}

/// Binary labels: positive when the axis value reaches the empirical
/// `quantile` of the set.
pub fn labels_at_quantile(set: &LabeledSet, axis: usize, quantile: f64) -> Result<Vec<(TokenSequence, bool)>> {
    let values = set
        .values
        .get(axis)
        .ok_or_else(|| Error::Config(format!("labeled set has no axis {axis}")))?;
    if values.is_empty() {
        return Err(Error::Config("labeled set is empty".into()));
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = ((quantile * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    let cut = sorted[idx];
    Ok(set.sequences.iter().cloned().zip(values.iter().map(|&v| v >= cut)).collect())
}

fn parse_value(field: &str) -> Option<f64> {
    match field.trim().to_ascii_lowercase().as_str() {
        "true" => Some(1.0),
        "false" => Some(0.0),
        other => other.parse().ok(),
    }
}

/// Reads `sequence,<label>[,<label>...]` with a header row; labels are
/// booleans or reals.
pub fn load_labeled_csv(path: &Path, alphabet: Alphabet) -> Result<LabeledSet> {
    let mut reader = csv::Reader::from_path(path)?;
    let axes = reader.headers()?.len().saturating_sub(1);
    if axes == 0 {
        return Err(Error::Config(format!("{}: need a sequence column and at least one label column", path.display())));
    }
    let mut set = LabeledSet {
        sequences: Vec::new(),
        values: vec![Vec::new(); axes],
    };
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let x = TokenSequence::parse(&record[0], alphabet)?;
        if let Some(first) = set.sequences.first() {
            if first.len() != x.len() {
                return Err(Error::Config(format!("row {}: sequence length {} differs from {}", row + 1, x.len(), first.len())));
            }
        }
        for axis in 0..axes {
            let v = parse_value(&record[axis + 1])
                .ok_or_else(|| Error::Config(format!("row {}: label {:?} is not boolean or numeric", row + 1, &record[axis + 1])))?;
            set.values[axis].push(v);
        }
        set.sequences.push(x);
    }
    Ok(set)
}

pub fn write_labeled_csv(path: &Path, set: &LabeledSet) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["sequence".to_string()];
    header.extend((0..set.values.len()).map(|a| format!("y{a}")));
    writer.write_record(&header)?;
    for (i, x) in set.sequences.iter().enumerate() {
        let mut row = vec![x.to_string()];
        row.extend(set.values.iter().map(|v| v[i].to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
