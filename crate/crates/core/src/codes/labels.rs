//! Label vectors: a sparse map from bin index to the sum of the labels of
//! every hull with a vertex in that bin.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bh::{BhDecomposer, BhSequence};
use crate::error::{Error, Result};
use crate::geometry::Curvature;
use crate::hull::{graham_scan, ConvexHull};
use crate::quantize::QuantGrid;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub entries: BTreeMap<u64, u64>,
}

impl LabelVector {
    pub fn support(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, bin: u64) -> u64 {
        self.entries.get(&bin).copied().unwrap_or(0)
    }

    /// Entry-wise sum.
    pub fn merge(&mut self, other: &LabelVector) {
        for (&b, &v) in &other.entries {
            *self.entries.entry(b).or_insert(0) += v;
        }
    }
}

/// Linear bin indices of the vertices of a quantized hull, deduplicated.
pub fn hull_bins(hull: &ConvexHull, grid: &QuantGrid) -> Result<Vec<u64>> {
    let mut bins = hull.extremes.iter().map(|&x| grid.bin_of(x).map(|b| b.linear)).collect::<Result<Vec<_>>>()?;
    bins.sort_unstable();
    bins.dedup();
    Ok(bins)
}

/// Label vector of one client in the binary setting: bins of the positive
/// hull carry `a_plus`, bins of the negative hull carry `a_minus`, and bins
/// shared by both carry the sum.
pub fn build_label_vector(
    hull_plus: &ConvexHull,
    hull_minus: &ConvexHull,
    grid: &QuantGrid,
    a_minus: u64,
    a_plus: u64,
) -> Result<LabelVector> {
    build_multiclass_label_vector(&[hull_minus.clone(), hull_plus.clone()], &[a_minus, a_plus], grid)
}

/// Label vector for any number of class hulls, `labels[j]` tagging
/// `hulls[j]`.
pub fn build_multiclass_label_vector(hulls: &[ConvexHull], labels: &[u64], grid: &QuantGrid) -> Result<LabelVector> {
    if hulls.len() != labels.len() {
        return Err(Error::InvalidParameter(format!("{} hulls but {} labels", hulls.len(), labels.len())));
    }
    let mut v = LabelVector::default();
    for (hull, &label) in hulls.iter().zip(labels) {
        for b in hull_bins(hull, grid)? {
            *v.entries.entry(b).or_insert(0) += label;
        }
    }
    Ok(v)
}

/// Splits per-bin label sums into the bins of each sequence element: entry
/// `j` of the result lists the bins whose sum contains `seq.elements[j]`.
pub fn disambiguate(sums: &BTreeMap<u64, u64>, seq: &BhSequence, h: usize) -> Result<Vec<Vec<u64>>> {
    let mut dec = BhDecomposer::new(seq, h);
    let mut bins = vec![Vec::new(); seq.len()];
    for (&bin, &sum) in sums {
        let idx = dec.indices(sum).ok_or(Error::UnresolvableLabel { bin, sum, h })?;
        if idx.windows(2).any(|w| w[0] == w[1]) {
            // one hull cannot occupy a bin twice
            return Err(Error::UnresolvableLabel { bin, sum, h });
        }
        for j in idx {
            bins[j].push(bin);
        }
    }
    Ok(bins)
}

/// Hull whose vertices are the centers of `bins`.
pub fn hull_from_bins(bins: &[u64], grid: &QuantGrid, c: Curvature) -> Result<ConvexHull> {
    let points = bins.iter().map(|&b| grid.from_linear(b).map(|i| grid.bin_center(i))).collect::<Result<Vec<_>>>()?;
    if points.is_empty() {
        return Ok(ConvexHull::default());
    }
    graham_scan(&points, c)
}

/// Inverse of [`build_multiclass_label_vector`] for one client: the hull
/// tagged by each label.
pub fn split_label_vector(v: &LabelVector, labels: &[u64], grid: &QuantGrid, c: Curvature) -> Result<Vec<ConvexHull>> {
    let mut elements: Vec<u64> = labels.to_vec();
    elements.sort_unstable();
    elements.dedup();
    if elements.len() != labels.len() {
        return Err(Error::InvalidParameter("labels must be distinct".into()));
    }
    let seq = BhSequence { h: labels.len().max(1), elements };
    let bins = disambiguate(&v.entries, &seq, labels.len())?;
    labels
        .iter()
        .map(|l| {
            let j = seq.elements.binary_search(l).expect("label is in the sequence");
            hull_from_bins(&bins[j], grid, c)
        })
        .collect()
}
