//! Reference geometry and topology of a multi-block structured domain.
//!
//! Every block is an axis-aligned uniform lattice. Blocks are glued along
//! [`InterfacePatch`]es whose paired nodes coincide; a paired node is one
//! physical point and therefore one *unknown* for every node-based solve.
//! Unknowns are numbered in sweep order (blocks by id, then `k`, `j`, `i`
//! with `i` fastest), the first instance met being the owner.
//!
//! For each unknown the topology records which of the eight octants around
//! the point are covered by cells. Everything the solvers need at a node
//! (the 7-point stencil weights, the dual-volume weight, which coordinate
//! directions are pinned by the external boundary) follows from that mask.

use crate::error::{Error, Result};
use crate::Vec3;

/// Tolerance used when checking that paired interface nodes coincide.
const COINCIDENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::XMin,
        Face::XMax,
        Face::YMin,
        Face::YMax,
        Face::ZMin,
        Face::ZMax,
    ];

    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, Face::XMax | Face::YMax | Face::ZMax)
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::XMin => Face::XMax,
            Face::XMax => Face::XMin,
            Face::YMin => Face::YMax,
            Face::YMax => Face::YMin,
            Face::ZMin => Face::ZMax,
            Face::ZMax => Face::ZMin,
        }
    }

    /// The two in-face axes, ascending.
    pub fn tangential_axes(self) -> [usize; 2] {
        match self.axis() {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    fn bit(self) -> u8 {
        1 << (2 * self.axis() + self.is_max() as usize)
    }
}

/// One axis-aligned block with isotropic spacing `h`; nodes run `0..=n` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredBlock {
    id: usize,
    origin: Vec3,
    spacing: f64,
    cells: [usize; 3],
}

impl StructuredBlock {
    pub fn new(id: usize, origin: Vec3, spacing: f64, cells: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidBlock {
                block: id,
                reason: format!("spacing must be positive, got {spacing}"),
            });
        }
        if cells.iter().any(|&n| n < 2) {
            return Err(Error::InvalidBlock {
                block: id,
                reason: format!("every axis needs at least 2 cells, got {cells:?}"),
            });
        }
        if origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidBlock {
                block: id,
                reason: "origin must be finite".into(),
            });
        }
        Ok(Self {
            id,
            origin,
            spacing,
            cells,
        })
    }

    /// Builds a block from its physical extent, rejecting anisotropic spacing.
    pub fn from_extent(id: usize, origin: Vec3, extent: Vec3, cells: [usize; 3]) -> Result<Self> {
        let h: Vec<f64> = (0..3).map(|a| extent[a] / cells[a] as f64).collect();
        let tol = 1e-12 * h[0].abs();
        if (h[1] - h[0]).abs() > tol || (h[2] - h[0]).abs() > tol {
            return Err(Error::InvalidBlock {
                block: id,
                reason: format!("anisotropic spacing ({}, {}, {})", h[0], h[1], h[2]),
            });
        }
        Self::new(id, origin, h[0], cells)
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn nodes(&self) -> [usize; 3] {
        [self.cells[0] + 1, self.cells[1] + 1, self.cells[2] + 1]
    }

    pub fn node_count(&self) -> usize {
        self.nodes().iter().product()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    #[inline]
    pub fn node_index(&self, ijk: [usize; 3]) -> usize {
        let [ni, nj, _] = self.nodes();
        ijk[0] + ni * (ijk[1] + nj * ijk[2])
    }

    #[inline]
    pub fn node_ijk(&self, idx: usize) -> [usize; 3] {
        let [ni, nj, _] = self.nodes();
        [idx % ni, (idx / ni) % nj, idx / (ni * nj)]
    }

    #[inline]
    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.cells[0] * (c[1] + self.cells[1] * c[2])
    }

    #[inline]
    pub fn cell_ijk(&self, idx: usize) -> [usize; 3] {
        let [ci, cj, _] = self.cells;
        [idx % ci, (idx / ci) % cj, idx / (ci * cj)]
    }

    /// Reference position `origin + h·(i, j, k)`.
    #[inline]
    pub fn position(&self, ijk: [usize; 3]) -> Vec3 {
        [
            self.origin[0] + self.spacing * ijk[0] as f64,
            self.origin[1] + self.spacing * ijk[1] as f64,
            self.origin[2] + self.spacing * ijk[2] as f64,
        ]
    }

    pub fn upper_corner(&self) -> Vec3 {
        self.position(self.cells)
    }

    pub fn volume(&self) -> f64 {
        self.spacing.powi(3) * self.cell_count() as f64
    }

    /// Node index of the face plane along its axis (`0` or `n`).
    pub fn face_plane(&self, face: Face) -> usize {
        if face.is_max() {
            self.cells[face.axis()]
        } else {
            0
        }
    }

    #[inline]
    fn has_node(&self, ijk: [isize; 3]) -> bool {
        (0..3).all(|a| ijk[a] >= 0 && ijk[a] <= self.cells[a] as isize)
    }

    #[inline]
    fn has_cell(&self, c: [isize; 3]) -> bool {
        (0..3).all(|a| c[a] >= 0 && c[a] < self.cells[a] as isize)
    }

    /// Bitmask of the octants around node `ijk` that are covered by cells of
    /// this block. Bit `sx | sy << 1 | sz << 2`, with `1` meaning the + side.
    fn octants(&self, ijk: [usize; 3]) -> u8 {
        let mut mask = 0u8;
        for bit in 0..8u8 {
            let c = [0, 1, 2].map(|a| ijk[a] as isize - if bit >> a & 1 == 1 { 0 } else { 1 });
            if self.has_cell(c) {
                mask |= 1 << bit;
            }
        }
        mask
    }
}

/// One side of an interface: a rectangle of nodes on a block face.
/// `lo..=hi` are node indices along `face.tangential_axes()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceSide {
    pub block: usize,
    pub face: Face,
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl FaceSide {
    fn extent(&self) -> [usize; 2] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]]
    }

    fn node(&self, block: &StructuredBlock, offset: [usize; 2]) -> [usize; 3] {
        let mut ijk = [0; 3];
        ijk[self.face.axis()] = block.face_plane(self.face);
        let [t0, t1] = self.face.tangential_axes();
        ijk[t0] = self.lo[0] + offset[0];
        ijk[t1] = self.lo[1] + offset[1];
        ijk
    }

    fn offset_of(&self, block: &StructuredBlock, ijk: [usize; 3]) -> Option<[usize; 2]> {
        if ijk[self.face.axis()] != block.face_plane(self.face) {
            return None;
        }
        let [t0, t1] = self.face.tangential_axes();
        let inside = |v: usize, lo: usize, hi: usize| v >= lo && v <= hi;
        if inside(ijk[t0], self.lo[0], self.hi[0]) && inside(ijk[t1], self.lo[1], self.hi[1]) {
            Some([ijk[t0] - self.lo[0], ijk[t1] - self.lo[1]])
        } else {
            None
        }
    }
}

/// Conforming contact between two blocks. Node `lo + o` on side A pairs
/// with node `lo + o` on side B.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfacePatch {
    side_a: FaceSide,
    side_b: FaceSide,
}

impl InterfacePatch {
    pub fn new(side_a: FaceSide, side_b: FaceSide, blocks: &[StructuredBlock]) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidInterface(msg));
        let (Some(a), Some(b)) = (blocks.get(side_a.block), blocks.get(side_b.block)) else {
            return bad("side references a missing block".into());
        };
        if side_a.block == side_b.block {
            return bad("both sides on the same block".into());
        }
        if side_a.face.opposite() != side_b.face {
            return bad(format!(
                "faces {:?} and {:?} are not opposite",
                side_a.face, side_b.face
            ));
        }
        if (a.spacing - b.spacing).abs() > 1e-12 * a.spacing {
            return bad(format!("spacings differ: {} vs {}", a.spacing, b.spacing));
        }
        let inverted = |s: &FaceSide| s.lo[0] > s.hi[0] || s.lo[1] > s.hi[1];
        if inverted(&side_a) || inverted(&side_b) || side_a.extent() != side_b.extent() {
            return bad("index rectangles differ in shape".into());
        }
        for (side, block) in [(&side_a, a), (&side_b, b)] {
            let [t0, t1] = side.face.tangential_axes();
            if side.hi[0] > block.cells[t0] || side.hi[1] > block.cells[t1] {
                return bad(format!("rectangle exceeds block {}", block.id));
            }
        }
        let patch = Self { side_a, side_b };
        let scale = a.spacing.max(1.0);
        for (pa, pb) in patch.pairs(blocks) {
            let (xa, xb) = (a.position(pa), b.position(pb));
            if dist(xa, xb) > COINCIDENCE_TOL * scale {
                return bad(format!("paired nodes {pa:?} / {pb:?} do not coincide"));
            }
        }
        Ok(patch)
    }

    pub fn side_a(&self) -> &FaceSide {
        &self.side_a
    }

    pub fn side_b(&self) -> &FaceSide {
        &self.side_b
    }

    /// Maps a side-A node to its side-B partner.
    pub fn pair(&self, blocks: &[StructuredBlock], a_ijk: [usize; 3]) -> Option<[usize; 3]> {
        let off = self.side_a.offset_of(&blocks[self.side_a.block], a_ijk)?;
        Some(self.side_b.node(&blocks[self.side_b.block], off))
    }

    /// Maps a side-B node back to its side-A partner.
    pub fn pair_inverse(
        &self,
        blocks: &[StructuredBlock],
        b_ijk: [usize; 3],
    ) -> Option<[usize; 3]> {
        let off = self.side_b.offset_of(&blocks[self.side_b.block], b_ijk)?;
        Some(self.side_a.node(&blocks[self.side_a.block], off))
    }

    /// All `(side A node, side B node)` pairs.
    pub fn pairs<'a>(
        &'a self,
        blocks: &'a [StructuredBlock],
    ) -> impl Iterator<Item = ([usize; 3], [usize; 3])> + 'a {
        let [e0, e1] = self.side_a.extent();
        let (a, b) = (&blocks[self.side_a.block], &blocks[self.side_b.block]);
        (0..=e1).flat_map(move |o1| {
            (0..=e0).map(move |o0| (self.side_a.node(a, [o0, o1]), self.side_b.node(b, [o0, o1])))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeTag {
    Interior,
    BoundaryFace,
    BoundaryEdge,
    BoundaryCorner,
    InterfaceInterior,
    InterfaceEdge,
    InterfaceCorner,
}

/// Classification of one block node. `outward[a]` is `±1` when the external
/// boundary pins axis `a` at this node (the sign points out of the domain),
/// `0` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeClass {
    pub tag: NodeTag,
    pub outward: [i8; 3],
}

impl NodeClass {
    /// Outward unit normals as `(axis, sign)`.
    pub fn normals(&self) -> impl Iterator<Item = (usize, i8)> + '_ {
        (0..3)
            .filter(|&a| self.outward[a] != 0)
            .map(|a| (a, self.outward[a]))
    }
}

const NO_NEIGHBOR: u32 = u32::MAX;

/// Node-level connectivity over unknowns.
#[derive(Debug, Clone)]
pub struct Topology {
    unknown_of: Vec<Vec<u32>>,
    owner: Vec<(u32, u32)>,
    multiplicity: Vec<u8>,
    octants: Vec<u8>,
    neighbors: Vec<[u32; 6]>,
    outward: Vec<[i8; 3]>,
}

impl Topology {
    fn build(blocks: &[StructuredBlock], interfaces: &[InterfacePatch]) -> Self {
        let offsets: Vec<usize> = blocks
            .iter()
            .scan(0, |acc, b| {
                let start = *acc;
                *acc += b.node_count();
                Some(start)
            })
            .collect();
        let total: usize = blocks.iter().map(StructuredBlock::node_count).sum();

        let mut parent: Vec<usize> = (0..total).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for patch in interfaces {
            let (ba, bb) = (patch.side_a.block, patch.side_b.block);
            for (pa, pb) in patch.pairs(blocks) {
                let ga = offsets[ba] + blocks[ba].node_index(pa);
                let gb = offsets[bb] + blocks[bb].node_index(pb);
                let (ra, rb) = (find(&mut parent, ga), find(&mut parent, gb));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }

        let mut unknown_of_root = vec![NO_NEIGHBOR; total];
        let mut unknown_of = Vec::with_capacity(blocks.len());
        let mut owner = Vec::new();
        let mut multiplicity = Vec::new();
        for (b, block) in blocks.iter().enumerate() {
            let mut map = Vec::with_capacity(block.node_count());
            for n in 0..block.node_count() {
                let root = find(&mut parent, offsets[b] + n);
                if unknown_of_root[root] == NO_NEIGHBOR {
                    unknown_of_root[root] = owner.len() as u32;
                    owner.push((b as u32, n as u32));
                    multiplicity.push(0u8);
                }
                let u = unknown_of_root[root];
                multiplicity[u as usize] += 1;
                map.push(u);
            }
            unknown_of.push(map);
        }

        let count = owner.len();
        let mut octants = vec![0u8; count];
        let mut neighbors = vec![[NO_NEIGHBOR; 6]; count];
        for (b, block) in blocks.iter().enumerate() {
            for n in 0..block.node_count() {
                let ijk = block.node_ijk(n);
                let u = unknown_of[b][n] as usize;
                octants[u] |= block.octants(ijk);
                for (dir, slot) in neighbors[u].iter_mut().enumerate() {
                    let (axis, step) = (dir / 2, if dir % 2 == 0 { -1 } else { 1 });
                    let mut nb = ijk.map(|v| v as isize);
                    nb[axis] += step;
                    if block.has_node(nb) {
                        let v = unknown_of[b][block.node_index(nb.map(|x| x as usize))];
                        debug_assert!(*slot == NO_NEIGHBOR || *slot == v);
                        *slot = v;
                    }
                }
            }
        }

        let outward = octants.iter().map(|&m| outward_from_octants(m)).collect();
        Self {
            unknown_of,
            owner,
            multiplicity,
            octants,
            neighbors,
            outward,
        }
    }
}

/// Blocks glued by interface patches. All blocks share one spacing `h`.
#[derive(Debug, Clone)]
pub struct MultiBlockDomain {
    blocks: Vec<StructuredBlock>,
    interfaces: Vec<InterfacePatch>,
    volume: f64,
    spacing: f64,
    topology: Topology,
}

impl MultiBlockDomain {
    pub fn new(blocks: Vec<StructuredBlock>, interfaces: Vec<InterfacePatch>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidBlock {
                block: 0,
                reason: "domain has no blocks".into(),
            });
        };
        let spacing = first.spacing;
        for (i, b) in blocks.iter().enumerate() {
            if b.id != i {
                return Err(Error::InvalidBlock {
                    block: b.id,
                    reason: format!(
                        "block ids must be 0..n in order, found {} at position {i}",
                        b.id
                    ),
                });
            }
            if (b.spacing - spacing).abs() > 1e-12 * spacing {
                return Err(Error::InvalidBlock {
                    block: b.id,
                    reason: format!(
                        "spacing {} differs from the domain spacing {spacing}",
                        b.spacing
                    ),
                });
            }
        }
        for (i, a) in blocks.iter().enumerate() {
            for b in &blocks[i + 1..] {
                let (alo, ahi, blo, bhi) = (a.origin, a.upper_corner(), b.origin, b.upper_corner());
                let overlap =
                    (0..3).all(|ax| ahi[ax].min(bhi[ax]) - alo[ax].max(blo[ax]) > 1e-9 * spacing);
                if overlap {
                    return Err(Error::InvalidBlock {
                        block: b.id,
                        reason: format!("overlaps block {} with positive volume", a.id),
                    });
                }
            }
        }
        let volume = blocks.iter().map(StructuredBlock::volume).sum();
        let topology = Topology::build(&blocks, &interfaces);
        Ok(Self {
            blocks,
            interfaces,
            volume,
            spacing,
            topology,
        })
    }

    /// The L-shaped back-step: column `[0,1]×[0,2]×[0,1]` with `(n, 2n, n)`
    /// cells and cube `[1,2]×[0,1]×[0,1]` with `(n, n, n)` cells, glued at
    /// `x = 1` over `y ≤ 1`.
    pub fn backstep(cells_per_unit: usize) -> Result<Self> {
        let n = cells_per_unit;
        if n < 2 {
            return Err(Error::OutOfRange {
                name: "n",
                value: n as f64,
                constraint: "n >= 2",
            });
        }
        let column = StructuredBlock::from_extent(0, [0.0; 3], [1.0, 2.0, 1.0], [n, 2 * n, n])?;
        let cube = StructuredBlock::from_extent(1, [1.0, 0.0, 0.0], [1.0, 1.0, 1.0], [n, n, n])?;
        let blocks = vec![column, cube];
        let patch = InterfacePatch::new(
            FaceSide {
                block: 0,
                face: Face::XMax,
                lo: [0, 0],
                hi: [n, n],
            },
            FaceSide {
                block: 1,
                face: Face::XMin,
                lo: [0, 0],
                hi: [n, n],
            },
            &blocks,
        )?;
        Self::new(blocks, vec![patch])
    }

    /// The unit cube `[0,1]³` as a single block with `n` cells per axis.
    pub fn single_block(cells_per_unit: usize) -> Result<Self> {
        let n = cells_per_unit;
        if n < 2 {
            return Err(Error::OutOfRange {
                name: "n",
                value: n as f64,
                constraint: "n >= 2",
            });
        }
        let block = StructuredBlock::from_extent(0, [0.0; 3], [1.0; 3], [n; 3])?;
        Self::new(vec![block], Vec::new())
    }

    pub fn blocks(&self) -> &[StructuredBlock] {
        &self.blocks
    }

    pub fn block(&self, id: usize) -> &StructuredBlock {
        &self.blocks[id]
    }

    pub fn interfaces(&self) -> &[InterfacePatch] {
        &self.interfaces
    }

    /// |Ω|, the sum of block volumes.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn unknown_count(&self) -> usize {
        self.topology.owner.len()
    }

    #[inline]
    pub fn unknown(&self, block: usize, node: usize) -> usize {
        self.topology.unknown_of[block][node] as usize
    }

    /// Per-block node → unknown maps.
    pub fn unknown_maps(&self) -> &[Vec<u32>] {
        &self.topology.unknown_of
    }

    /// Owning `(block, node index)` of an unknown.
    #[inline]
    pub fn owner(&self, u: usize) -> (usize, usize) {
        let (b, n) = self.topology.owner[u];
        (b as usize, n as usize)
    }

    /// Reference position of an unknown, taken from its owner.
    pub fn unknown_position(&self, u: usize) -> Vec3 {
        let (b, n) = self.owner(u);
        let block = &self.blocks[b];
        block.position(block.node_ijk(n))
    }

    /// Number of blocks sharing this unknown.
    pub fn multiplicity(&self, u: usize) -> usize {
        self.topology.multiplicity[u] as usize
    }

    /// Neighbor of `u` in direction `dir` (`0..6` = −x, +x, −y, +y, −z, +z).
    #[inline]
    pub fn neighbor(&self, u: usize, dir: usize) -> Option<usize> {
        let v = self.topology.neighbors[u][dir];
        (v != NO_NEIGHBOR).then_some(v as usize)
    }

    pub(crate) fn neighbor_table(&self) -> &[[u32; 6]] {
        &self.topology.neighbors
    }

    /// Count of cell-covered octants around `u`, and those on side `dir`.
    fn octant_counts(&self, u: usize, dir: usize) -> (u32, u32) {
        let mask = self.topology.octants[u];
        let (axis, plus) = (dir / 2, dir % 2 == 1);
        let side = (0..8u8)
            .filter(|bit| mask >> bit & 1 == 1 && (bit >> axis & 1 == 1) == plus)
            .count();
        (mask.count_ones(), side as u32)
    }

    /// Stencil weights of the 7-point Laplacian at `u`: neighbor `dir` enters
    /// with `coef[dir] / h²` and the node itself with `−6 / h²`.
    ///
    /// The weight of an edge is twice the fraction of the node's cells that
    /// contain it. This is 1 in the interior, 2 toward the inside at a mirror
    /// (Neumann) boundary, 0 toward a missing neighbor, and the weights always
    /// sum to 6.
    pub fn stencil_weights(&self, u: usize) -> [f64; 6] {
        std::array::from_fn(|dir| {
            let (total, side) = self.octant_counts(u, dir);
            2.0 * side as f64 / total as f64
        })
    }

    /// Dual-cell volume fraction of `u`: covered octants / 8. Interior nodes
    /// get 1, face nodes 1/2, edges 1/4, corners 1/8.
    pub fn dual_weight(&self, u: usize) -> f64 {
        self.topology.octants[u].count_ones() as f64 / 8.0
    }

    /// Outward sign per axis pinned by the external boundary at `u`.
    ///
    /// An axis is pinned when reflecting the covered-octant set across it
    /// changes the set; the outward side is the one with fewer covered
    /// octants.
    #[inline]
    pub fn outward(&self, u: usize) -> [i8; 3] {
        self.topology.outward[u]
    }

    /// Iterates `(block id, cell ijk)` over every cell of every block.
    pub fn cells(&self) -> impl Iterator<Item = (usize, [usize; 3])> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| (0..b.cell_count()).map(move |c| (b.id, b.cell_ijk(c))))
    }

    pub fn cell_count(&self) -> usize {
        self.blocks.iter().map(StructuredBlock::cell_count).sum()
    }

    /// Node indices (within `block`) of the 8 corners of a cell, in
    /// `(di, dj, dk)` bit order `di | dj << 1 | dk << 2`.
    pub fn cell_corners(&self, block: usize, cell: [usize; 3]) -> [usize; 8] {
        let b = &self.blocks[block];
        std::array::from_fn(|bit| {
            b.node_index([
                cell[0] + (bit & 1),
                cell[1] + (bit >> 1 & 1),
                cell[2] + (bit >> 2 & 1),
            ])
        })
    }

    /// Classifies every node of every block.
    pub fn classify_nodes(&self) -> Vec<Vec<NodeClass>> {
        // faces of each block node that lie in one of its interface patches
        let mut patch_faces: Vec<Vec<u8>> = self
            .blocks
            .iter()
            .map(|b| vec![0u8; b.node_count()])
            .collect();
        for patch in &self.interfaces {
            for (pa, pb) in patch.pairs(&self.blocks) {
                let (a, b) = (patch.side_a.block, patch.side_b.block);
                patch_faces[a][self.blocks[a].node_index(pa)] |= patch.side_a.face.bit();
                patch_faces[b][self.blocks[b].node_index(pb)] |= patch.side_b.face.bit();
            }
        }

        self.blocks
            .iter()
            .map(|block| {
                (0..block.node_count())
                    .map(|n| {
                        let u = self.unknown(block.id, n);
                        let ijk = block.node_ijk(n);
                        let outward = self.outward(u);
                        let pinned = outward.iter().filter(|&&s| s != 0).count();
                        let tag = if self.multiplicity(u) == 1 {
                            match pinned {
                                0 => NodeTag::Interior,
                                1 => NodeTag::BoundaryFace,
                                2 => NodeTag::BoundaryEdge,
                                _ => NodeTag::BoundaryCorner,
                            }
                        } else {
                            // block faces through this node not covered by one of its patches
                            let external = Face::ALL
                                .iter()
                                .filter(|f| ijk[f.axis()] == block.face_plane(**f))
                                .filter(|f| patch_faces[block.id][n] & f.bit() == 0)
                                .count();
                            match (external, pinned) {
                                (0, 0) => NodeTag::InterfaceInterior,
                                // a re-entrant boundary feature seen only through the other block
                                (0, 1) => NodeTag::BoundaryFace,
                                (0, 2) => NodeTag::BoundaryEdge,
                                (0, _) => NodeTag::BoundaryCorner,
                                (1, _) => NodeTag::InterfaceEdge,
                                _ => NodeTag::InterfaceCorner,
                            }
                        };
                        NodeClass { tag, outward }
                    })
                    .collect()
            })
            .collect()
    }
}

fn outward_from_octants(mask: u8) -> [i8; 3] {
    let covered = |bit: u8| mask >> bit & 1 == 1;
    std::array::from_fn(|axis| {
        let flip = |bit: u8| bit ^ (1 << axis);
        if (0..8u8).all(|bit| covered(bit) == covered(flip(bit))) {
            return 0;
        }
        let plus = (0..8u8)
            .filter(|&bit| covered(bit) && bit >> axis & 1 == 1)
            .count();
        let minus = (0..8u8)
            .filter(|&bit| covered(bit) && bit >> axis & 1 == 0)
            .count();
        if plus < minus {
            1
        } else {
            -1
        }
    })
}

#[inline]
pub(crate) fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn backstep_dimensions() {
        let d = MultiBlockDomain::backstep(20).unwrap();
        assert_eq!(d.block(0).cells(), [20, 40, 20]);
        assert_eq!(d.block(1).cells(), [20, 20, 20]);
        assert_eq!(d.spacing(), 0.05);
        assert_eq!(d.interfaces().len(), 1);
    }

    #[test]
    fn backstep_n2_volume_and_patch() {
        let d = MultiBlockDomain::backstep(2).unwrap();
        assert_eq!(d.volume(), 3.0);
        let pairs: Vec<_> = d.interfaces()[0].pairs(d.blocks()).collect();
        assert_eq!(pairs.len(), 9);
    }

    #[test]
    fn rejects_too_coarse() {
        assert!(MultiBlockDomain::backstep(1).is_err());
        assert!(MultiBlockDomain::single_block(0).is_err());
    }

    #[test]
    fn rejects_anisotropic_spacing() {
        let err =
            StructuredBlock::from_extent(0, [0.0; 3], [1.0, 1.5, 1.0], [4, 4, 4]).unwrap_err();
        assert!(err.to_string().contains("anisotropic"));
    }

    #[test]
    fn rejects_overlapping_blocks() {
        let a = StructuredBlock::new(0, [0.0; 3], 0.25, [4, 4, 4]).unwrap();
        let b = StructuredBlock::new(1, [0.5, 0.0, 0.0], 0.25, [4, 4, 4]).unwrap();
        assert!(MultiBlockDomain::new(vec![a, b], vec![]).is_err());
    }

    #[test]
    fn rejects_misaligned_patch() {
        let a = StructuredBlock::new(0, [0.0; 3], 0.25, [4, 4, 4]).unwrap();
        let b = StructuredBlock::new(1, [1.0, 0.25, 0.0], 0.25, [4, 4, 4]).unwrap();
        let blocks = vec![a, b];
        let side = |block, face| FaceSide {
            block,
            face,
            lo: [0, 0],
            hi: [3, 4],
        };
        let err =
            InterfacePatch::new(side(0, Face::XMax), side(1, Face::XMin), &blocks).unwrap_err();
        assert!(err.to_string().contains("coincide"));
    }

    #[test]
    fn pairing_round_trip_and_coincidence() {
        let d = MultiBlockDomain::backstep(5).unwrap();
        let patch = &d.interfaces()[0];
        let bl = d.blocks();
        for (a, b) in patch.pairs(bl) {
            assert_eq!(patch.pair(bl, a), Some(b));
            assert_eq!(patch.pair_inverse(bl, b), Some(a));
            assert!(dist(bl[0].position(a), bl[1].position(b)) < 1e-14);
        }
        // nodes above the patch have no partner
        assert_eq!(patch.pair(bl, [5, 6, 0]), None);
    }

    #[test]
    fn interface_nodes_share_unknowns() {
        let d = MultiBlockDomain::backstep(4).unwrap();
        let (b0, b1) = (d.block(0), d.block(1));
        let shared = 5 * 5;
        assert_eq!(
            d.unknown_count(),
            b0.node_count() + b1.node_count() - shared
        );
        for (a, b) in d.interfaces()[0].pairs(d.blocks()) {
            assert_eq!(
                d.unknown(0, b0.node_index(a)),
                d.unknown(1, b1.node_index(b))
            );
        }
    }

    #[test]
    fn stencil_weights_reproduce_mirror_stencils() {
        let d = MultiBlockDomain::single_block(4).unwrap();
        let b = d.block(0);
        let w = |ijk| d.stencil_weights(d.unknown(0, b.node_index(ijk)));
        assert_eq!(w([2, 2, 2]), [1.0; 6]);
        // corner: 2ω₁₀₀ + 2ω₀₁₀ + 2ω₀₀₁
        assert_eq!(w([0, 0, 0]), [0.0, 2.0, 0.0, 2.0, 0.0, 2.0]);
        // edge along x at y = z = 0
        assert_eq!(w([2, 0, 0]), [1.0, 1.0, 0.0, 2.0, 0.0, 2.0]);
        // face y = 0
        assert_eq!(w([2, 0, 2]), [1.0, 1.0, 0.0, 2.0, 1.0, 1.0]);
        for u in 0..d.unknown_count() {
            assert_eq!(d.stencil_weights(u).iter().sum::<f64>(), 6.0);
        }
    }

    #[test]
    fn interface_interior_uses_plain_stencil_across_blocks() {
        let d = MultiBlockDomain::backstep(4).unwrap();
        let b0 = d.block(0);
        let u = d.unknown(0, b0.node_index([4, 2, 2]));
        assert_eq!(d.stencil_weights(u), [1.0; 6]);
        assert_eq!(d.dual_weight(u), 1.0);
        let plus_x = d.neighbor(u, 1).unwrap();
        assert_eq!(d.owner(plus_x), (1, d.block(1).node_index([1, 2, 2])));
    }

    #[test]
    fn reentrant_edge_weights() {
        let d = MultiBlockDomain::backstep(4).unwrap();
        let u = d.unknown(0, d.block(0).node_index([4, 4, 2]));
        assert_eq!(d.dual_weight(u), 0.75);
        let w = d.stencil_weights(u);
        let expect = [4.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0, 1.0, 1.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(d.outward(u), [1, 1, 0]);
    }

    #[test]
    fn classify_backstep_n4_examples() {
        let d = MultiBlockDomain::backstep(4).unwrap();
        let tags = d.classify_nodes();
        let b0 = d.block(0);
        assert_eq!(tags[0][b0.node_index([4, 6, 2])].tag, NodeTag::BoundaryFace);
        assert_eq!(
            tags[0][b0.node_index([4, 2, 2])].tag,
            NodeTag::InterfaceInterior
        );
        // re-entrant edge: boundary edge in the column, interface edge in the cube
        assert_eq!(tags[0][b0.node_index([4, 4, 2])].tag, NodeTag::BoundaryEdge);
        assert_eq!(
            tags[1][d.block(1).node_index([0, 4, 2])].tag,
            NodeTag::InterfaceEdge
        );
        // junction of the interface with the z = 0 wall and the re-entrant edge
        let junction = tags[0][b0.node_index([4, 4, 0])];
        assert_eq!(junction.tag, NodeTag::InterfaceEdge);
        assert_eq!(junction.outward, [1, 1, -1]);
        assert_eq!(
            tags[0][b0.node_index([4, 0, 0])].tag,
            NodeTag::InterfaceCorner
        );
    }

    #[test]
    fn classify_x1_face_partition_n4() {
        let d = MultiBlockDomain::backstep(4).unwrap();
        let tags = d.classify_nodes();
        let b0 = d.block(0);
        let mut counts: HashMap<NodeTag, usize> = HashMap::new();
        for j in 0..=8 {
            for k in 0..=4 {
                *counts
                    .entry(tags[0][b0.node_index([4, j, k])].tag)
                    .or_default() += 1;
            }
        }
        assert_eq!(counts.values().sum::<usize>(), 9 * 5);
        assert_eq!(counts[&NodeTag::InterfaceInterior], 3 * 3);
        // y = 0 row and z = 0/1 rows of the patch, corners excluded
        assert_eq!(counts[&NodeTag::InterfaceEdge], 3 + 2 * 4);
        assert_eq!(counts[&NodeTag::InterfaceCorner], 2);
        // re-entrant edge, z = 0/1 rows of the step wall, y = 2 row
        assert_eq!(counts[&NodeTag::BoundaryEdge], 3 + 2 * 3 + 3);
        assert_eq!(counts[&NodeTag::BoundaryFace], 3 * 3);
        assert_eq!(counts[&NodeTag::BoundaryCorner], 2);
    }

    #[test]
    fn classify_backstep_n20_interface_node() {
        let d = MultiBlockDomain::backstep(20).unwrap();
        let tags = d.classify_nodes();
        let b1 = d.block(1);
        assert_eq!(
            tags[1][b1.node_index([0, 10, 10])].tag,
            NodeTag::InterfaceInterior
        );
    }

    #[test]
    fn unit_block_corner_has_three_normals() {
        let d = MultiBlockDomain::single_block(3).unwrap();
        let c = d.classify_nodes()[0][0];
        assert_eq!(c.tag, NodeTag::BoundaryCorner);
        assert_eq!(
            c.normals().collect::<Vec<_>>(),
            vec![(0, -1), (1, -1), (2, -1)]
        );
    }

    #[test]
    fn tags_partition_every_block() {
        let d = MultiBlockDomain::backstep(6).unwrap();
        for (block, tags) in d.blocks().iter().zip(d.classify_nodes()) {
            assert_eq!(tags.len(), block.node_count());
        }
        let single = MultiBlockDomain::single_block(4).unwrap();
        let tags = &single.classify_nodes()[0];
        let count = |t| tags.iter().filter(|c| c.tag == t).count();
        assert_eq!(count(NodeTag::BoundaryCorner), 8);
        assert_eq!(count(NodeTag::BoundaryEdge), 12 * 3);
        assert_eq!(count(NodeTag::BoundaryFace), 6 * 9);
        assert_eq!(count(NodeTag::Interior), 27);
    }
}
