use super::{CMat, MatError};

/// Grid layout of a square block matrix: block `i` spans rows/columns
/// `offsets[i]..offsets[i] + sizes[i]`. Uniform layouts (`n` blocks of size
/// `k`) and ragged ones (sizes `d_a·k`) share this type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn uniform(n: usize, k: usize) -> Self {
        Self::ragged(vec![k; n])
    }

    pub fn ragged(sizes: Vec<usize>) -> Self {
        let offsets = sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        BlockLayout { sizes, offsets }
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn check(&self, m: &CMat) -> Result<(), MatError> {
        let t = self.total();
        if m.nrows() != t || m.ncols() != t {
            return Err(MatError::DimensionMismatch(format!(
                "block layout of total size {t} applied to a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(())
    }

    pub fn get(&self, m: &CMat, i: usize, j: usize) -> Result<CMat, MatError> {
        self.check(m)?;
        Ok(m.view(
            (self.offsets[i], self.offsets[j]),
            (self.sizes[i], self.sizes[j]),
        )
        .into_owned())
    }

    pub fn set(&self, m: &mut CMat, i: usize, j: usize, block: &CMat) -> Result<(), MatError> {
        self.check(m)?;
        if block.nrows() != self.sizes[i] || block.ncols() != self.sizes[j] {
            return Err(MatError::DimensionMismatch(format!(
                "block ({i},{j}) must be {}x{}, got {}x{}",
                self.sizes[i],
                self.sizes[j],
                block.nrows(),
                block.ncols()
            )));
        }
        m.view_mut(
            (self.offsets[i], self.offsets[j]),
            (self.sizes[i], self.sizes[j]),
        )
        .copy_from(block);
        Ok(())
    }

    /// Assembles a matrix from a full grid of blocks.
    pub fn assemble(&self, blocks: &[Vec<CMat>]) -> Result<CMat, MatError> {
        let t = self.total();
        let mut m = CMat::zeros(t, t);
        for (i, row) in blocks.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                self.set(&mut m, i, j, b)?;
            }
        }
        Ok(m)
    }

    pub fn blocks(&self, m: &CMat) -> Result<Vec<Vec<CMat>>, MatError> {
        self.check(m)?;
        Ok((0..self.count())
            .map(|i| {
                (0..self.count())
                    .map(|j| self.get(m, i, j).expect("checked"))
                    .collect()
            })
            .collect())
    }
}
