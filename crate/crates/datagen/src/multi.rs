//! Multi-target groups: samples departing within the same time bin.

use std::collections::BTreeMap;

use crate::sample::MctfSample;

/// Samples grouped by `(day, departure_step / bin)`; groups with a single
/// sample are dropped. Each group lists sample indices in input order.
pub fn group_multi_target(samples: &[MctfSample], bin: usize) -> Vec<Vec<usize>> {
    let bin = bin.max(1);
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry((s.day, s.departure_step / bin)).or_default().push(i);
    }
    groups.into_values().filter(|g| g.len() > 1).collect()
}
