//! Flat parameter storage with named blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockInfo {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub fan_in: usize,
}

impl BlockInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<BlockInfo>,
    total: usize,
}

impl ParamLayout {
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, fan_in: usize) -> BlockId {
        let id = BlockId(self.blocks.len());
        self.blocks.push(BlockInfo {
            name: name.into(),
            offset: self.total,
            rows,
            cols,
            fan_in,
        });
        self.total += rows * cols;
        id
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn info(&self, id: BlockId) -> &BlockInfo {
        &self.blocks[id.0]
    }

    pub fn find(&self, name: &str) -> Option<&BlockInfo> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// All trainable values of a model as one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(layout: ParamLayout) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    /// Seeded uniform initialization in `±1/sqrt(fan_in)` per block.
    pub fn init(layout: ParamLayout, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(layout.len());
        for b in layout.blocks() {
            let bound = 1.0 / (b.fan_in.max(1) as f64).sqrt();
            values.extend((0..b.len()).map(|_| rng.random_range(-bound..bound)));
        }
        Self { layout, values }
    }

    pub fn from_vec(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn block(&self, id: BlockId) -> &[f64] {
        &self.values[self.layout.info(id).range()]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut [f64] {
        let r = self.layout.info(id).range();
        &mut self.values[r]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
