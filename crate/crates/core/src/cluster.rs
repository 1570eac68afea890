//! Square-cell splitting of node sets, nested cluster hierarchies, and the
//! spatial-reuse scheduling of parallel cluster work.

use crate::error::{Error, Result};
use crate::netmodel::{cells_per_side, perfect_sqrt, Network, NodeId, Point, Region};

/// One occupied cell of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub nodes: Vec<NodeId>,
    pub region: Region,
    /// Cell coordinate on the global grid of this scale.
    pub coord: (usize, usize),
}

impl Cell {
    pub fn root(net: &Network) -> Cell {
        Cell {
            nodes: net.nodes().collect(),
            region: Region::UNIT,
            coord: (0, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Splits a node set into clusters of roughly `target` nodes.
pub trait GridBuilder {
    fn split(&self, parent: &Cell, target: usize) -> Vec<Cell>;
}

/// `g × g` square cells over the parent region with
/// `g = round(sqrt(N / target))`, where `N = n · area(parent)` is the
/// parent's nominal occupancy (exactly `n` at the root). Sizing sub-grids
/// by area rather than by realized counts gives sibling clusters the same
/// grid. A target of 1 yields singletons.
#[derive(Debug, Clone, Copy)]
pub struct SquareGrid<'a> {
    positions: &'a [Point],
}

impl<'a> SquareGrid<'a> {
    pub fn new(net: &'a Network) -> Self {
        SquareGrid {
            positions: net.positions(),
        }
    }
}

impl GridBuilder for SquareGrid<'_> {
    fn split(&self, parent: &Cell, target: usize) -> Vec<Cell> {
        let side = parent.region.side;
        let nominal = (self.positions.len() as f64 * side * side).round().max(1.0) as usize;
        let g = cells_per_side(nominal, target);
        let mut cells: Vec<Vec<NodeId>> = vec![Vec::new(); g * g];
        for &node in &parent.nodes {
            let (c, r) = parent.region.cell_of(self.positions[node.0], g);
            cells[r * g + c].push(node);
        }
        let mut out = Vec::new();
        for (idx, nodes) in cells.into_iter().enumerate() {
            if nodes.is_empty() {
                continue;
            }
            let (col, row) = (idx % g, idx / g);
            let region = parent.region.sub_region(g, col, row);
            let coord = (parent.coord.0 * g + col, parent.coord.1 * g + row);
            if target <= 1 {
                // singleton clusters share their cell's coordinate
                for node in nodes {
                    out.push(Cell {
                        nodes: vec![node],
                        region,
                        coord,
                    });
                }
            } else {
                out.push(Cell { nodes, region, coord });
            }
        }
        out
    }
}

/// Nested partition: depth 0 is the whole network, depth `d + 1` splits
/// every depth-`d` cluster at `sizes[d]`.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    pub clusters: Vec<TreeCluster>,
    /// `membership[d][node] = (cluster id, position in that cluster)`.
    membership: Vec<Vec<(u32, u32)>>,
}

#[derive(Debug, Clone)]
pub struct TreeCluster {
    pub cell: Cell,
    pub depth: usize,
    pub children: Vec<usize>,
}

impl ClusterTree {
    pub fn build<G: GridBuilder>(net: &Network, grid: &G, sizes: &[usize]) -> ClusterTree {
        let n = net.len();
        let mut clusters = vec![TreeCluster {
            cell: Cell::root(net),
            depth: 0,
            children: Vec::new(),
        }];
        let mut membership = vec![vec![(0u32, 0u32); n]; sizes.len() + 1];
        for (pos, node) in clusters[0].cell.nodes.iter().enumerate() {
            membership[0][node.0] = (0, pos as u32);
        }
        let mut frontier = vec![0usize];
        for (d, &target) in sizes.iter().enumerate() {
            let mut next = Vec::new();
            for &id in &frontier {
                let cells = grid.split(&clusters[id].cell, target);
                for cell in cells {
                    let child = clusters.len();
                    for (pos, node) in cell.nodes.iter().enumerate() {
                        membership[d + 1][node.0] = (child as u32, pos as u32);
                    }
                    clusters.push(TreeCluster {
                        cell,
                        depth: d + 1,
                        children: Vec::new(),
                    });
                    clusters[id].children.push(child);
                    next.push(child);
                }
            }
            frontier = next;
        }
        ClusterTree {
            clusters,
            membership,
        }
    }

    pub fn levels(&self) -> usize {
        self.membership.len() - 1
    }

    /// Cluster id and in-cluster position of `node` at `depth`.
    #[inline]
    pub fn locate(&self, depth: usize, node: NodeId) -> (usize, usize) {
        let (c, p) = self.membership[depth][node.0];
        (c as usize, p as usize)
    }

    pub fn at_depth(&self, depth: usize) -> impl Iterator<Item = usize> + '_ {
        self.clusters
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.depth == depth)
            .map(|(i, _)| i)
    }
}

/// Spatial reuse factor `ρ = r²`: clusters whose cell coordinates agree
/// modulo `r` share a class; classes take turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reuse {
    side: usize,
}

impl Reuse {
    pub const NONE: Reuse = Reuse { side: 1 };

    pub fn new(rho: usize) -> Result<Reuse> {
        match perfect_sqrt(rho) {
            Some(side) if side >= 1 => Ok(Reuse { side }),
            _ => Err(Error::InvalidParams(format!(
                "reuse factor {rho} is not a positive perfect square"
            ))),
        }
    }

    pub fn factor(&self) -> usize {
        self.side * self.side
    }

    fn class(&self, coord: (usize, usize)) -> usize {
        (coord.1 % self.side) * self.side + coord.0 % self.side
    }

    /// Runs jobs in parallel inside a class and classes one after another.
    /// Returns the total length and the start offset of every job.
    pub fn schedule(&self, jobs: &[((usize, usize), u64)]) -> (u64, Vec<u64>) {
        let classes = self.factor();
        let mut longest = vec![0u64; classes];
        for &(coord, len) in jobs {
            let c = self.class(coord);
            longest[c] = longest[c].max(len);
        }
        let mut offset = vec![0u64; classes];
        let mut acc = 0;
        for c in 0..classes {
            offset[c] = acc;
            acc += longest[c];
        }
        let starts = jobs.iter().map(|&(coord, _)| offset[self.class(coord)]).collect();
        (acc, starts)
    }
}
