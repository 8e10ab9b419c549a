//! Node- and cell-indexed arrays over a [`MultiBlockDomain`].

use crate::error::{Error, Result};
use crate::grid::MultiBlockDomain;
use crate::Vec3;

/// Per-block arrays of node values, indexed like [`crate::grid::StructuredBlock::node_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField<T> {
    blocks: Vec<Vec<T>>,
}

pub type ScalarField = NodeField<f64>;
pub type VectorField = NodeField<Vec3>;

/// Per-block arrays of cell values.
pub type CellField = Vec<Vec<f64>>;

impl<T: Copy> NodeField<T> {
    pub fn filled(domain: &MultiBlockDomain, value: T) -> Self {
        Self {
            blocks: domain
                .blocks()
                .iter()
                .map(|b| vec![value; b.node_count()])
                .collect(),
        }
    }

    /// Wraps raw per-block arrays; lengths are checked against the domain.
    pub fn from_blocks(domain: &MultiBlockDomain, blocks: Vec<Vec<T>>) -> Result<Self> {
        let field = Self { blocks };
        field.check_shape(domain)?;
        Ok(field)
    }

    /// Copies one value per unknown to every block instance of that unknown.
    pub fn from_unknowns(domain: &MultiBlockDomain, values: &[T]) -> Self {
        debug_assert_eq!(values.len(), domain.unknown_count());
        Self {
            blocks: domain
                .unknown_maps()
                .iter()
                .map(|map| map.iter().map(|&u| values[u as usize]).collect())
                .collect(),
        }
    }

    /// Evaluates `f(unknown, reference position)` once per unknown so that
    /// paired interface nodes receive bit-identical values.
    pub fn from_fn(domain: &MultiBlockDomain, mut f: impl FnMut(usize, Vec3) -> T) -> Self {
        let values: Vec<T> = (0..domain.unknown_count())
            .map(|u| f(u, domain.unknown_position(u)))
            .collect();
        Self::from_unknowns(domain, &values)
    }

    /// Owner value of every unknown.
    pub fn to_unknowns(&self, domain: &MultiBlockDomain) -> Vec<T> {
        (0..domain.unknown_count())
            .map(|u| {
                let (b, n) = domain.owner(u);
                self.blocks[b][n]
            })
            .collect()
    }

    pub fn block(&self, b: usize) -> &[T] {
        &self.blocks[b]
    }

    pub fn block_mut(&mut self, b: usize) -> &mut [T] {
        &mut self.blocks[b]
    }

    pub fn blocks(&self) -> &[Vec<T>] {
        &self.blocks
    }

    #[inline]
    pub fn at(&self, domain: &MultiBlockDomain, block: usize, ijk: [usize; 3]) -> T {
        self.blocks[block][domain.block(block).node_index(ijk)]
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(T) -> U) -> NodeField<U> {
        NodeField {
            blocks: self
                .blocks
                .iter()
                .map(|b| b.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.blocks.iter().flatten()
    }

    pub fn check_shape(&self, domain: &MultiBlockDomain) -> Result<()> {
        let ok = self.blocks.len() == domain.blocks().len()
            && self
                .blocks
                .iter()
                .zip(domain.blocks())
                .all(|(v, b)| v.len() == b.node_count());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "field has {} blocks of sizes {:?}",
                self.blocks.len(),
                self.blocks.iter().map(Vec::len).collect::<Vec<_>>()
            )))
        }
    }
}

/// Midpoint-rule integral of `g(field)` over Ω: each cell contributes
/// `h³` times the mean of `g` over its 8 corner nodes.
pub fn cell_mean_integral(
    domain: &MultiBlockDomain,
    field: &ScalarField,
    g: impl Fn(f64) -> f64,
) -> f64 {
    let h3 = domain.spacing().powi(3);
    let mut total = 0.0;
    for (b, cell) in domain.cells() {
        let values = field.block(b);
        let corners = domain.cell_corners(b, cell);
        let sum: f64 = corners.iter().map(|&n| g(values[n])).sum();
        total += h3 * sum / 8.0;
    }
    total
}
