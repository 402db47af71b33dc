//! Data partitions: the mapping from scalar data nodes `z_1..z_n` to the
//! partition elements `y_1..y_M` that WAIC sums over.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::util::fnv64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    /// Every group holds exactly one data node (the default pointwise choice).
    Ungrouped,
    /// At least one group holds two or more nodes; the predictive density is
    /// evaluated jointly over each group.
    Grouped,
}

/// A validated partition of a model's data nodes: disjoint, exhaustive,
/// ordered groups of node identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    groups: Vec<Vec<String>>,
    kind: PartitionKind,
    total: usize,
}

impl PartitionSpec {
    /// Number of partition elements M.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<String>] {
        &self.groups
    }

    pub fn kind(&self) -> PartitionKind {
        self.kind
    }

    /// Total number of data nodes n across all groups.
    pub fn total_nodes(&self) -> usize {
        self.total
    }

    /// Stable digest of the group structure, echoed into checkpoints so a
    /// resumed run cannot silently continue against a different partition.
    pub fn digest(&self) -> u64 {
        let mut bytes = Vec::new();
        for group in &self.groups {
            for name in group {
                bytes.extend_from_slice(name.as_bytes());
                bytes.push(0x1f);
            }
            bytes.push(0x1e);
        }
        fnv64(&bytes)
    }

    /// Serialize as the partition file format: one group per line, node
    /// identifiers separated by spaces, `#` lines ignored.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# waic partition: one group per line\n");
        for group in &self.groups {
            out.push_str(&group.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parse the partition file format and validate against the model's data
    /// nodes.
    pub fn parse(text: &str, data_nodes: &[String]) -> Result<PartitionSpec> {
        let grouping = parse_groups(text);
        build_partition(data_nodes, Some(&grouping))
    }

    /// Parse a partition file whose groups define the node universe
    /// themselves (external streams, where no model graph exists).
    pub fn parse_standalone(text: &str) -> Result<PartitionSpec> {
        let grouping = parse_groups(text);
        let data_nodes: Vec<String> = grouping.iter().flatten().cloned().collect();
        build_partition(&data_nodes, Some(&grouping))
    }
}

fn parse_groups(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect()
}

/// Build a partition over `data_nodes`.
///
/// With no grouping, returns the default ungrouped partition of singletons in
/// node order. With a grouping, validates that it is a true partition: every
/// node in exactly one group, no strangers.
pub fn build_partition(
    data_nodes: &[String],
    grouping: Option<&[Vec<String>]>,
) -> Result<PartitionSpec> {
    if data_nodes.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let groups: Vec<Vec<String>> = match grouping {
        None => data_nodes.iter().map(|n| vec![n.clone()]).collect(),
        Some(g) => g.iter().map(|grp| grp.to_vec()).collect(),
    };
    if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
        return Err(Error::EmptyPartition);
    }
    let known: HashSet<&str> = data_nodes.iter().map(String::as_str).collect();
    let mut seen: HashSet<&str> = HashSet::with_capacity(data_nodes.len());
    for group in &groups {
        for name in group {
            if !known.contains(name.as_str()) {
                return Err(Error::UnknownNode(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateNode(name.clone()));
            }
        }
    }
    if seen.len() != data_nodes.len() {
        let missing = data_nodes
            .iter()
            .find(|n| !seen.contains(n.as_str()))
            .expect("some node must be missing");
        return Err(Error::IncompletePartition(missing.clone()));
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let kind = if groups.iter().all(|g| g.len() == 1) {
        PartitionKind::Ungrouped
    } else {
        PartitionKind::Grouped
    };
    Ok(PartitionSpec { groups, kind, total })
}

/// Consecutive blocks of `block_size` nodes in node order; the final block may
/// be shorter when `n` is not a multiple of `block_size`.
pub fn consecutive_blocks(data_nodes: &[String], block_size: usize) -> Result<PartitionSpec> {
    if block_size < 1 {
        return Err(Error::BadBlockSize);
    }
    let grouping: Vec<Vec<String>> =
        data_nodes.chunks(block_size).map(|c| c.to_vec()).collect();
    build_partition(data_nodes, Some(&grouping))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nodes(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("z[{i}]")).collect()
    }

    #[test]
    fn default_is_ungrouped_singletons() {
        let p = build_partition(&nodes(3), None).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.kind(), PartitionKind::Ungrouped);
        assert!(p.groups().iter().all(|g| g.len() == 1));
    }

    #[test]
    fn grouped_by_first_index() {
        // 20 groups of 100, the hierarchical grouped layout.
        let all: Vec<String> = (1..=20)
            .flat_map(|j| (1..=100).map(move |i| format!("y[{j},{i}]")))
            .collect();
        let grouping: Vec<Vec<String>> = (1..=20)
            .map(|j| (1..=100).map(|i| format!("y[{j},{i}]")).collect())
            .collect();
        let p = build_partition(&all, Some(&grouping)).unwrap();
        assert_eq!(p.len(), 20);
        assert!(p.groups().iter().all(|g| g.len() == 100));
        assert_eq!(p.kind(), PartitionKind::Grouped);
        assert_eq!(p.total_nodes(), 2000);
    }

    #[test]
    fn duplicate_node_rejected() {
        let ns = nodes(3);
        let grouping = vec![
            vec!["z[1]".to_string(), "z[2]".to_string()],
            vec!["z[2]".to_string(), "z[3]".to_string()],
        ];
        assert!(matches!(
            build_partition(&ns, Some(&grouping)),
            Err(Error::DuplicateNode(n)) if n == "z[2]"
        ));
    }

    #[test]
    fn omitted_node_rejected() {
        let ns = nodes(3);
        let grouping = vec![vec!["z[1]".to_string()], vec!["z[3]".to_string()]];
        assert!(matches!(
            build_partition(&ns, Some(&grouping)),
            Err(Error::IncompletePartition(n)) if n == "z[2]"
        ));
    }

    #[test]
    fn unknown_node_rejected() {
        let ns = nodes(2);
        let grouping = vec![vec!["z[1]".to_string()], vec!["w[9]".to_string()]];
        assert!(matches!(
            build_partition(&ns, Some(&grouping)),
            Err(Error::UnknownNode(n)) if n == "w[9]"
        ));
    }

    #[test]
    fn blocks_divide_evenly() {
        let p = consecutive_blocks(&nodes(200), 20).unwrap();
        assert_eq!(p.len(), 10);
        assert!(p.groups().iter().all(|g| g.len() == 20));
    }

    #[test]
    fn blocks_whole_series() {
        let p = consecutive_blocks(&nodes(200), 200).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.kind(), PartitionKind::Grouped);
    }

    #[test]
    fn blocks_with_remainder() {
        let p = consecutive_blocks(&nodes(5), 2).unwrap();
        let sizes: Vec<usize> = p.groups().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
    }

    #[test]
    fn zero_block_size_rejected() {
        assert!(matches!(consecutive_blocks(&nodes(5), 0), Err(Error::BadBlockSize)));
    }

    #[test]
    fn singleton_grouping_equals_default() {
        let ns = nodes(4);
        let grouping: Vec<Vec<String>> = ns.iter().map(|n| vec![n.clone()]).collect();
        let explicit = build_partition(&ns, Some(&grouping)).unwrap();
        let default = build_partition(&ns, None).unwrap();
        assert_eq!(explicit, default);
        assert_eq!(explicit.kind(), PartitionKind::Ungrouped);
    }

    #[test]
    fn text_round_trip() {
        let ns = nodes(5);
        let p = consecutive_blocks(&ns, 2).unwrap();
        let text = p.to_text();
        let back = PartitionSpec::parse(&text, &ns).unwrap();
        assert_eq!(p, back);
        assert_eq!(p.digest(), back.digest());
    }

    proptest! {
        #[test]
        fn prop_group_sizes_sum_to_n(n in 1usize..60, block in 1usize..70) {
            let p = consecutive_blocks(&nodes(n), block).unwrap();
            let total: usize = p.groups().iter().map(Vec::len).sum();
            prop_assert_eq!(total, n);
            prop_assert_eq!(p.total_nodes(), n);
            prop_assert!(p.len() >= 1 && p.len() <= n);
        }
    }
}
