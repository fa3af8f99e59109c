//! Evolution forests: the genealogy of one QD instance, one tree per seed.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LineageRecord {
    pub parent: Option<usize>,
    pub root_index: usize,
    pub depth: usize,
}

/// Solutions credited to one prior member.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RootStats {
    pub solution_count: usize,
    pub solution_depths: Vec<usize>,
}

/// Array-backed forest; node ids are dense and assigned in registration order.
#[derive(Clone, Debug, Default)]
pub struct EvolutionForest {
    nodes: Vec<LineageRecord>,
}

impl EvolutionForest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn register_root(&mut self, prior_index: usize) -> usize {
        self.nodes.push(LineageRecord {
            parent: None,
            root_index: prior_index,
            depth: 0,
        });
        self.nodes.len() - 1
    }

    pub fn register_child(&mut self, parent_id: usize) -> Result<usize> {
        let parent = *self.get(parent_id)?;
        self.nodes.push(LineageRecord {
            parent: Some(parent_id),
            root_index: parent.root_index,
            depth: parent.depth + 1,
        });
        Ok(self.nodes.len() - 1)
    }

    pub fn get(&self, id: usize) -> Result<&LineageRecord> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    /// Walks parent links up to the tree root.
    pub fn get_root(&self, id: usize) -> Result<usize> {
        let mut cur = id;
        while let Some(p) = self.get(cur)?.parent {
            cur = p;
        }
        Ok(cur)
    }

    pub fn records(&self) -> &[LineageRecord] {
        &self.nodes
    }

    /// Distinct prior indices that own a tree in this forest.
    pub fn root_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.parent.is_none())
            .map(|n| n.root_index)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Solution counts and depths per prior index, over the given solved nodes.
    /// Every root present in the forest gets an entry, solved or not.
    pub fn root_stats(&self, solved: &[usize]) -> Result<BTreeMap<usize, RootStats>> {
        let mut stats: BTreeMap<usize, RootStats> = self
            .root_indices()
            .into_iter()
            .map(|r| (r, RootStats::default()))
            .collect();
        for &id in solved {
            let node = self.get(id)?;
            let entry = stats.entry(node.root_index).or_default();
            entry.solution_count += 1;
            entry.solution_depths.push(node.depth);
        }
        Ok(stats)
    }

    /// Writes the node table (`id,parent,root_index,depth,solved`) as CSV.
    pub fn write_csv<W: Write>(&self, out: W, solved: &[usize]) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            id: usize,
            parent: Option<usize>,
            root_index: usize,
            depth: usize,
            solved: bool,
        }
        let solved: HashSet<usize> = solved.iter().copied().collect();
        let mut w = csv::Writer::from_writer(out);
        for (id, n) in self.nodes.iter().enumerate() {
            w.serialize(Row {
                id,
                parent: n.parent,
                root_index: n.root_index,
                depth: n.depth,
                solved: solved.contains(&id),
            })?;
        }
        w.flush().map_err(|e| Error::io("forest csv", e))?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The three-tree example forest over priors A=0, B=1, C=2.
    /// Returns the forest and the solution ids S0..S4.
    pub(crate) fn example_forest() -> (EvolutionForest, Vec<usize>) {
        let mut f = EvolutionForest::new();
        let a = f.register_root(0);
        let b = f.register_root(1);
        let c = f.register_root(2);
        let mut child = |p: usize| f.register_child(p).unwrap();
        let a1 = child(a);
        let a2 = child(a);
        let b1 = child(b);
        let b2 = child(b);
        let _b3 = child(b);
        let c1 = child(c);
        let c2 = child(c);
        let _a3 = child(a1);
        let s0 = child(a2);
        let _b4 = child(b1);
        let _b5 = child(b1);
        let b6 = child(b1);
        let b7 = child(b2);
        let c3 = child(c1);
        let s4 = child(c2);
        let b8 = child(b6);
        let s2 = child(b7);
        let c4 = child(c3);
        let s1 = child(b8);
        let s3 = child(c4);
        (f, vec![s0, s1, s2, s3, s4])
    }

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort_unstable();
        v
    }

    #[test]
    fn roots_and_chains() {
        let mut f = EvolutionForest::new();
        let roots: Vec<usize> = (0..3).map(|i| f.register_root(i)).collect();
        assert_eq!(roots, vec![0, 1, 2]);
        assert!(roots.iter().all(|&r| f.get(r).unwrap().depth == 0));
        assert_eq!(f.get_root(1).unwrap(), 1);

        let a = f.register_child(0).unwrap();
        let b = f.register_child(a).unwrap();
        let c = f.register_child(b).unwrap();
        assert_eq!(f.get(c).unwrap().depth, 3);
        assert_eq!(f.get_root(c).unwrap(), 0);

        let y = f.register_child(2).unwrap();
        let x = f.register_child(y).unwrap();
        assert_ne!(f.get(x).unwrap().root_index, f.get(c).unwrap().root_index);
        assert!(matches!(f.register_child(99), Err(Error::UnknownNode(99))));
    }

    #[test]
    fn duplicate_roots_share_index() {
        let mut f = EvolutionForest::new();
        let a = f.register_root(4);
        let b = f.register_root(4);
        assert_ne!(a, b);
        assert_eq!(f.root_indices(), vec![4]);
    }

    #[test]
    fn example_forest_stats() {
        let (f, s) = example_forest();
        assert_eq!(f.get(s[1]).unwrap().depth, 4);
        let stats = f.root_stats(&s).unwrap();
        assert_eq!(stats[&0].solution_count, 1);
        assert_eq!(stats[&1].solution_count, 2);
        assert_eq!(stats[&2].solution_count, 2);
        assert_eq!(stats[&0].solution_depths, vec![2]);
        assert_eq!(sorted(stats[&1].solution_depths.clone()), vec![3, 4]);
        assert_eq!(sorted(stats[&2].solution_depths.clone()), vec![2, 4]);
    }

    #[test]
    fn unsolved_and_root_solutions() {
        let (f, _) = example_forest();
        let stats = f.root_stats(&[]).unwrap();
        assert_eq!(stats.len(), 3);
        assert!(stats.values().all(|s| s == &RootStats::default()));
        let stats = f.root_stats(&[1]).unwrap();
        assert_eq!(stats[&1].solution_depths, vec![0]);
    }

    #[test]
    fn csv_dump_has_one_row_per_node() {
        let (f, s) = example_forest();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "id,parent,root_index,depth,solved");
        assert_eq!(lines.clone().count(), f.len());
        assert_eq!(lines.next().unwrap(), "0,,0,0,false");
    }
}
