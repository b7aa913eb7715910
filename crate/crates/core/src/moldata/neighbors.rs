use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::Molecule;
use crate::error::{Error, Result};
use crate::linalg3::Vec3;

/// Pairs closer than this are rejected as corrupt input.
pub const MIN_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    /// `X_i − X_j`
    pub r: Vec3,
    pub distance: f64,
}

/// Per-atom neighbours within a cutoff, each list sorted by neighbour index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub cutoff: f64,
    lists: Vec<Vec<Neighbor>>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn of(&self, i: usize) -> &[Neighbor] {
        &self.lists[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Neighbor]> {
        self.lists.iter().map(|l| l.as_slice())
    }

    pub fn edge_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// Neighbour graph from bare positions.
    ///
    /// Pairs with `0 < |r_ij| ≤ cutoff` are included. Atoms are binned into
    /// cubic cells of edge `cutoff`; only the 27 surrounding cells are scanned.
    pub fn from_positions(positions: &[Vec3], cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("cutoff must be positive, got {cutoff}")));
        }
        let cell_of = |p: &Vec3| -> (i64, i64, i64) {
            let c = |v: f64| libm::floor(v / cutoff) as i64;
            (c(p.x), c(p.y), c(p.z))
        };
        let mut cells: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
        for (i, p) in positions.iter().enumerate() {
            cells.entry(cell_of(p)).or_default().push(i);
        }

        let mut lists = alloc::vec![Vec::new(); positions.len()];
        for (i, pi) in positions.iter().enumerate() {
            let (cx, cy, cz) = cell_of(pi);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(members) = cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &j in members {
                            if j == i {
                                continue;
                            }
                            let r = *pi - positions[j];
                            let distance = r.norm();
                            if distance < MIN_SEPARATION {
                                let (a, b) = if i < j { (i, j) } else { (j, i) };
                                return Err(Error::CoincidentAtoms {
                                    i: a,
                                    j: b,
                                    min_distance: MIN_SEPARATION,
                                });
                            }
                            if distance <= cutoff {
                                lists[i].push(Neighbor { index: j, r, distance });
                            }
                        }
                    }
                }
            }
            lists[i].sort_by_key(|n| n.index);
        }
        Ok(Self { cutoff, lists })
    }
}

pub fn build_neighbors(mol: &Molecule, cutoff: f64) -> Result<NeighborList> {
    NeighborList::from_positions(&mol.positions, cutoff)
}
