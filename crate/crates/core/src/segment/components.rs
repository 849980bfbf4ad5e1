use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grid::{Mask, Volume, NEIGHBORS_26, NEIGHBORS_6};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "6")]
    Six,
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [[isize; 3]] {
        match self {
            Connectivity::Six => &NEIGHBORS_6,
            Connectivity::TwentySix => &NEIGHBORS_26,
        }
    }
}

/// Component labels: 0 is background, 1 is the largest component.
#[derive(Clone, Debug, PartialEq)]
pub struct Components {
    pub labels: Volume<u32>,
    /// `sizes[k]` is the voxel count of label `k + 1`; non-increasing.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Mask of the labels `1..=k`.
    pub fn largest(&self, k: usize) -> Mask {
        self.labels.map(|&l| l != 0 && (l as usize) <= k)
    }

    pub fn component(&self, label: u32) -> Mask {
        self.labels.map(|&l| l == label)
    }
}

/// Label connected components, numbered by decreasing size with ties going
/// to the component whose smallest linear index comes first.
pub fn connected_components(mask: &Mask, conn: Connectivity) -> Components {
    let g = *mask.geom();
    let mut raw = Volume::filled(g, 0u32);
    let mut sizes = vec![];
    let mut queue = VecDeque::new();
    for start in mask.foreground() {
        if raw.data()[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        raw.data_mut()[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let c = g.coords(i);
            for &o in conn.offsets() {
                if let Some(n) = g.offset(c, o) {
                    let j = g.index(n[0], n[1], n[2]);
                    if mask.data()[j] && raw.data()[j] == 0 {
                        raw.data_mut()[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    // discovery order is already by smallest index, so a stable sort breaks ties
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    let mut relabel = vec![0u32; sizes.len() + 1];
    for (new, &old) in order.iter().enumerate() {
        relabel[old + 1] = new as u32 + 1;
    }
    Components {
        labels: raw.map(|&l| relabel[l as usize]),
        sizes: order.iter().map(|&o| sizes[o]).collect(),
    }
}

/// The largest component, or an empty mask.
pub fn largest_component(mask: &Mask, conn: Connectivity) -> Mask {
    connected_components(mask, conn).largest(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Geometry;

    #[test]
    fn block_is_one_component() {
        let g = Geometry::unit([4, 4, 4]).unwrap();
        let m = Volume::from_fn(g, |c| c.iter().all(|&v| (1..3).contains(&v)));
        for conn in [Connectivity::Six, Connectivity::TwentySix] {
            let cc = connected_components(&m, conn);
            assert_eq!(cc.sizes, vec![8]);
        }
    }

    #[test]
    fn corner_contact() {
        let g = Geometry::unit([3, 3, 3]).unwrap();
        let m = Volume::from_fn(g, |c| c == [0, 0, 0] || c == [1, 1, 1]);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count(), 1);
        assert_eq!(connected_components(&m, Connectivity::Six).count(), 2);
    }

    #[test]
    fn ordering_by_size_then_index() {
        let g = Geometry::unit([9, 1, 1]).unwrap();
        // sizes 1, 2, 2 starting at x = 0, 2, 5
        let m = Volume::from_fn(g, |c| matches!(c[0], 0 | 2 | 3 | 5 | 6));
        let cc = connected_components(&m, Connectivity::Six);
        assert_eq!(cc.sizes, vec![2, 2, 1]);
        assert_eq!(cc.labels.data(), &[3, 0, 1, 1, 0, 2, 2, 0, 0]);
        assert_eq!(cc.largest(2).count(), 4);
    }

    #[test]
    fn empty_mask() {
        let g = Geometry::unit([2, 2, 2]).unwrap();
        let cc = connected_components(&Volume::filled(g, false), Connectivity::Six);
        assert_eq!(cc.count(), 0);
        assert!(!largest_component(&Volume::filled(g, false), Connectivity::Six).any());
    }
}
