//! Random network instances: node placement in the unit square, the
//! source→destination permutation, the path-loss channel and square-cell
//! clustering at an arbitrary scale.

use std::fmt::Write as _;
use std::io::BufRead;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a node inside a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Channel constants shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path-loss exponent, at least 2.
    pub alpha: f64,
    pub power: f64,
    pub noise: f64,
    /// Bits per quantized MIMO observation.
    pub quant_bits: u32,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            alpha: 3.0,
            power: 1.0,
            noise: 1.0,
            quant_bits: 2,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 2.0) {
            return Err(Error::InvalidParams(format!("alpha = {} < 2", self.alpha)));
        }
        if self.quant_bits < 1 {
            return Err(Error::InvalidParams("Q must be at least 1".into()));
        }
        if !(self.power > 0.0) || !(self.noise > 0.0) {
            return Err(Error::InvalidParams("P and N0 must be positive".into()));
        }
        Ok(())
    }
}

/// An immutable network instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    positions: Vec<Point>,
    pairing: Vec<NodeId>,
    channel: ChannelParams,
    seed: u64,
}

impl Network {
    /// Places `n` nodes uniformly in the unit square and draws a fixed-point
    /// free pairing, both from a generator seeded with `seed`.
    pub fn generate(n: usize, channel: ChannelParams, seed: u64) -> Result<Network> {
        if n < 2 {
            return Err(Error::InvalidSize(n));
        }
        channel.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..n)
            .map(|_| Point {
                x: rng.gen::<f64>(),
                y: rng.gen::<f64>(),
            })
            .collect();
        let pairing = random_derangement(n, &mut rng);
        Ok(Network {
            positions,
            pairing,
            channel,
            seed,
        })
    }

    /// Places `n = s²` nodes at the centres of an `s × s` lattice. Any grid
    /// whose cells-per-side divides `s` then holds exactly the same number of
    /// nodes in every cell, which makes slot counts exactly predictable.
    pub fn lattice(n: usize, channel: ChannelParams, seed: u64) -> Result<Network> {
        if n < 2 {
            return Err(Error::InvalidSize(n));
        }
        channel.validate()?;
        let side = perfect_sqrt(n)
            .ok_or_else(|| Error::InvalidParams(format!("lattice needs a perfect square, got {n}")))?;
        let positions = (0..n)
            .map(|i| Point {
                x: ((i % side) as f64 + 0.5) / side as f64,
                y: ((i / side) as f64 + 0.5) / side as f64,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairing = random_derangement(n, &mut rng);
        Ok(Network {
            positions,
            pairing,
            channel,
            seed,
        })
    }

    pub fn from_parts(
        positions: Vec<Point>,
        pairing: Vec<NodeId>,
        channel: ChannelParams,
        seed: u64,
    ) -> Result<Network> {
        let n = positions.len();
        if n < 2 {
            return Err(Error::InvalidSize(n));
        }
        channel.validate()?;
        if pairing.len() != n {
            return Err(Error::InvalidParams("pairing length differs from node count".into()));
        }
        let mut seen = vec![false; n];
        for (i, d) in pairing.iter().enumerate() {
            if d.0 >= n || seen[d.0] {
                return Err(Error::InvalidParams("pairing is not a permutation".into()));
            }
            if d.0 == i {
                return Err(Error::InvalidParams(format!("node {i} is paired with itself")));
            }
            seen[d.0] = true;
        }
        Ok(Network {
            positions,
            pairing,
            channel,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, i: NodeId) -> Point {
        self.positions[i.0]
    }

    pub fn pairing(&self) -> &[NodeId] {
        &self.pairing
    }

    pub fn destination(&self, source: NodeId) -> NodeId {
        self.pairing[source.0]
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len()).map(NodeId)
    }

    /// `H_ik = r_ik^(-alpha/2) · e^{j·phase}`.
    pub fn channel_gain(&self, i: NodeId, k: NodeId, phase: f64) -> Result<Complex64> {
        if i == k {
            return Err(Error::SelfChannel(i.0));
        }
        let r = self.positions[i.0].distance(&self.positions[k.0]);
        let magnitude = r.powf(-self.channel.alpha / 2.0);
        Ok(Complex64::from_polar(magnitude, phase))
    }

    /// Channel gain with a fresh fading phase drawn uniformly from `[0, 2π)`.
    pub fn sample_channel_gain<R: Rng + ?Sized>(
        &self,
        i: NodeId,
        k: NodeId,
        rng: &mut R,
    ) -> Result<Complex64> {
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        self.channel_gain(i, k, phase)
    }

    /// Line-oriented text form: a header `n alpha P N0 Q seed` followed by
    /// one `id x y dest` line per node.
    pub fn to_text(&self) -> String {
        let c = &self.channel;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            self.len(),
            c.alpha,
            c.power,
            c.noise,
            c.quant_bits,
            self.seed
        );
        for (i, (p, d)) in self.positions.iter().zip(&self.pairing).enumerate() {
            let _ = writeln!(out, "{} {} {} {}", i, p.x, p.y, d.0);
        }
        out
    }

    pub fn write_text<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Network> {
        let mut lines = reader.lines().enumerate().filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty(),
            Err(_) => true,
        });
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected 6 header fields, found {}", fields.len()),
            });
        }
        let n: usize = parse_field(fields[0], 1)?;
        let channel = ChannelParams {
            alpha: parse_field(fields[1], 1)?,
            power: parse_field(fields[2], 1)?,
            noise: parse_field(fields[3], 1)?,
            quant_bits: parse_field(fields[4], 1)?,
        };
        let seed: u64 = parse_field(fields[5], 1)?;

        let mut positions = vec![None; n];
        let mut pairing = vec![NodeId(0); n];
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "expected `id x y dest`".into(),
                });
            }
            let id: usize = parse_field(f[0], line_no)?;
            if id >= n || positions[id].is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("node id {id} out of range or repeated"),
                });
            }
            positions[id] = Some(Point {
                x: parse_field(f[1], line_no)?,
                y: parse_field(f[2], line_no)?,
            });
            pairing[id] = NodeId(parse_field(f[3], line_no)?);
        }
        let positions = positions
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                p.ok_or(Error::Parse {
                    line: 0,
                    msg: format!("node {i} missing"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::from_parts(positions, pairing, channel, seed)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse `{s}`"),
    })
}

pub(crate) fn perfect_sqrt(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}

/// Uniform shuffle, then each fixed point is swapped with a random other
/// entry. A swap of a fixed point never creates a new one.
fn random_derangement<R: Rng>(n: usize, rng: &mut R) -> Vec<NodeId> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    for i in 0..n {
        if perm[i] == i {
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            perm.swap(i, j);
        }
    }
    perm.into_iter().map(NodeId).collect()
}

/// Axis-aligned square subregion of the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

impl Region {
    pub const UNIT: Region = Region {
        x0: 0.0,
        y0: 0.0,
        side: 1.0,
    };

    /// Cell `(col, row)` of a `g × g` split. Cells are half-open except the
    /// last row and column, which are closed.
    pub fn cell_of(&self, p: Point, g: usize) -> (usize, usize) {
        let idx = |v: f64, o: f64| -> usize {
            let t = ((v - o) / self.side * g as f64).floor();
            if t <= 0.0 {
                0
            } else {
                (t as usize).min(g - 1)
            }
        };
        (idx(p.x, self.x0), idx(p.y, self.y0))
    }

    pub fn sub_region(&self, g: usize, col: usize, row: usize) -> Region {
        let side = self.side / g as f64;
        Region {
            x0: self.x0 + col as f64 * side,
            y0: self.y0 + row as f64 * side,
            side,
        }
    }
}

/// `round(sqrt(count / target))`, never below 1.
pub fn cells_per_side(count: usize, target: usize) -> usize {
    if target == 0 || count == 0 {
        return 1;
    }
    ((count as f64 / target as f64).sqrt().round() as usize).max(1)
}

/// Square-cell partition of the unit square at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGrid {
    pub target_size: usize,
    pub cells_per_side: usize,
    /// Cell index (`row * g + col`) of every node.
    pub assignment: Vec<usize>,
    pub occupancy: Vec<Vec<NodeId>>,
}

impl ClusterGrid {
    pub fn build(net: &Network, target: usize) -> Result<ClusterGrid> {
        let n = net.len();
        if target < 1 || target > n {
            return Err(Error::InvalidParams(format!(
                "cluster size {target} outside [1, {n}]"
            )));
        }
        let g = cells_per_side(n, target);
        let mut assignment = Vec::with_capacity(n);
        let mut occupancy = vec![Vec::new(); g * g];
        for (i, p) in net.positions().iter().enumerate() {
            let (c, r) = Region::UNIT.cell_of(*p, g);
            let cell = r * g + c;
            assignment.push(cell);
            occupancy[cell].push(NodeId(i));
        }
        Ok(ClusterGrid {
            target_size: target,
            cells_per_side: g,
            assignment,
            occupancy,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.occupancy.len()
    }

    pub fn cell_of(&self, node: NodeId) -> usize {
        self.assignment[node.0]
    }

    /// Counts of `pairing[s]` per cell for every `s` in `sources`.
    pub fn destination_histogram(&self, net: &Network, sources: &[NodeId]) -> Vec<usize> {
        let mut hist = vec![0; self.cell_count()];
        for &s in sources {
            hist[self.assignment[net.destination(s).0]] += 1;
        }
        hist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(n: usize, seed: u64) -> Network {
        Network::generate(n, ChannelParams::default(), seed).unwrap()
    }

    #[test]
    fn two_nodes_swap() {
        let net = net(2, 99);
        assert_eq!(net.pairing(), &[NodeId(1), NodeId(0)]);
    }

    #[test]
    fn rejects_tiny_networks() {
        assert!(matches!(
            Network::generate(1, ChannelParams::default(), 0),
            Err(Error::InvalidSize(1))
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(net(100, 7), net(100, 7));
        assert_ne!(net(100, 7).positions(), net(100, 8).positions());
    }

    #[test]
    fn mean_x_near_half() {
        let mut ch = ChannelParams::default();
        ch.alpha = 3.0;
        let net = Network::generate(10_000, ch, 1).unwrap();
        let mean = net.positions().iter().map(|p| p.x).sum::<f64>() / 10_000.0;
        assert!((0.48..=0.52).contains(&mean), "mean {mean}");
    }

    #[test]
    fn channel_gain_cases() {
        let ch = ChannelParams {
            alpha: 2.0,
            ..Default::default()
        };
        let pts = vec![Point { x: 0.0, y: 0.0 }, Point { x: 1.0, y: 0.0 }];
        let net = Network::from_parts(pts, vec![NodeId(1), NodeId(0)], ch, 0).unwrap();
        let g = net.channel_gain(NodeId(0), NodeId(1), 0.0).unwrap();
        assert!((g.re - 1.0).abs() < 1e-12 && g.im.abs() < 1e-12);
        assert!(matches!(
            net.channel_gain(NodeId(0), NodeId(0), 0.0),
            Err(Error::SelfChannel(0))
        ));

        let ch4 = ChannelParams {
            alpha: 4.0,
            ..Default::default()
        };
        let pts = vec![Point { x: 0.0, y: 0.0 }, Point { x: 0.0, y: 0.25 }];
        let net = Network::from_parts(pts, vec![NodeId(1), NodeId(0)], ch4, 0).unwrap();
        for phase in [0.0, 1.0, 2.5, 6.0] {
            let g = net.channel_gain(NodeId(0), NodeId(1), phase).unwrap();
            assert!((g.norm() - 16.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_channel_rejected() {
        let ch = ChannelParams {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(Network::generate(10, ch, 0).is_err());
    }

    #[test]
    fn single_cluster_when_target_is_n() {
        let net = net(50, 3);
        let grid = ClusterGrid::build(&net, 50).unwrap();
        assert_eq!(grid.cells_per_side, 1);
        assert_eq!(grid.occupancy[0].len(), 50);
    }

    #[test]
    fn corner_node_lands_in_last_cell() {
        let pts = vec![
            Point { x: 1.0, y: 1.0 },
            Point { x: 0.0, y: 0.0 },
            Point { x: 0.3, y: 0.7 },
            Point { x: 0.9, y: 0.1 },
        ];
        let pairing = vec![NodeId(1), NodeId(2), NodeId(3), NodeId(0)];
        let net = Network::from_parts(pts, pairing, ChannelParams::default(), 0).unwrap();
        let grid = ClusterGrid::build(&net, 1).unwrap();
        assert_eq!(grid.cells_per_side, 2);
        assert_eq!(grid.cell_of(NodeId(0)), 3);
        assert_eq!(grid.cell_of(NodeId(1)), 0);
    }

    #[test]
    fn occupancy_concentrates_around_target() {
        // Monte-Carlo check of Θ(M) cell occupancy: M = 100, n = 10000.
        let mut ok = 0;
        for trial in 0..100 {
            let net = net(10_000, 1000 + trial);
            let grid = ClusterGrid::build(&net, 100).unwrap();
            if grid.occupancy.iter().all(|c| (50..=200).contains(&c.len())) {
                ok += 1;
            }
        }
        assert!(ok >= 99, "{ok}/100");
    }

    #[test]
    fn histogram_edge_cases() {
        let net = net(64, 5);
        let grid = ClusterGrid::build(&net, 16).unwrap();
        assert!(grid.destination_histogram(&net, &[]).iter().all(|&c| c == 0));
        let all: Vec<NodeId> = net.nodes().collect();
        assert_eq!(grid.destination_histogram(&net, &all).iter().sum::<usize>(), 64);
    }

    #[test]
    fn histogram_max_is_logarithmic() {
        // one source per cluster, 64 clusters of 64 nodes
        let bound = 12.0 * (4096f64).ln() / (4096f64).ln().ln();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ok = 0;
        for trial in 0..1000 {
            let net = net(4096, 50_000 + trial);
            let grid = ClusterGrid::build(&net, 64).unwrap();
            let sources: Vec<NodeId> = grid
                .occupancy
                .iter()
                .filter(|c| !c.is_empty())
                .map(|c| *c.choose(&mut rng).unwrap())
                .collect();
            let max = *grid.destination_histogram(&net, &sources).iter().max().unwrap();
            if (max as f64) <= bound {
                ok += 1;
            }
        }
        assert!(ok >= 990, "{ok}/1000");
    }

    #[test]
    fn text_round_trip() {
        let net = net(30, 42);
        let text = net.to_text();
        assert!(text.starts_with("30 3 1 1 2 42\n"));
        let back = Network::read_text(text.as_bytes()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn text_rejects_garbage() {
        assert!(Network::read_text("3 2 1 1 2\n".as_bytes()).is_err());
        assert!(Network::read_text("2 2 1 1 2 0\n0 0.1 0.1 0\n1 0.2 0.2 1\n".as_bytes()).is_err());
    }

    #[test]
    fn lattice_cells_are_exact() {
        let net = Network::lattice(256, ChannelParams::default(), 1).unwrap();
        let grid = ClusterGrid::build(&net, 16).unwrap();
        assert!(grid.occupancy.iter().all(|c| c.len() == 16));
        assert!(Network::lattice(200, ChannelParams::default(), 1).is_err());
    }
}
