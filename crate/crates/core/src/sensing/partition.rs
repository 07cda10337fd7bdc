use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Vectorized non-overlapping blocks of a zero-padded image.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrid {
    /// Raster-ordered blocks, row-major over the grid.
    pub blocks: Vec<Vec<f64>>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub block_size: usize,
    /// Image size before padding.
    pub original: (usize, usize),
}

impl BlockGrid {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Reassembles and crops back to the original image size.
    pub fn to_image(&self) -> Result<GrayImage> {
        let padded = assemble_blocks(&self.blocks, self.grid_rows, self.grid_cols, self.block_size)?;
        padded.crop(self.original.0, self.original.1)
    }
}

/// Splits `img` into `A x A` blocks after zero-padding right and bottom to
/// multiples of `A`.
pub fn block_partition(img: &GrayImage, block_size: usize) -> Result<BlockGrid> {
    if block_size == 0 {
        return Err(Error::arg("block size must be >= 1"));
    }
    let padded = img.pad_to_multiple(block_size)?;
    let (h, w) = padded.dims();
    let (r, c) = (h / block_size, w / block_size);
    let px = padded.pixels();
    let mut blocks = Vec::with_capacity(r * c);
    for bi in 0..r {
        for bj in 0..c {
            let mut v = Vec::with_capacity(block_size * block_size);
            for y in 0..block_size {
                let row = (bi * block_size + y) * w + bj * block_size;
                v.extend_from_slice(&px[row..row + block_size]);
            }
            blocks.push(v);
        }
    }
    Ok(BlockGrid { blocks, grid_rows: r, grid_cols: c, block_size, original: img.dims() })
}

/// Reshapes each length-`A^2` vector to an `A x A` block and tiles them on an
/// `r x c` grid, row-major. Raw values, no clamping.
pub fn assemble_values(blocks: &[Vec<f64>], rows: usize, cols: usize, block_size: usize) -> Result<Vec<f64>> {
    if blocks.len() != rows * cols {
        return Err(Error::dim(format!("{} blocks for a {rows}x{cols} grid", blocks.len())));
    }
    let n = block_size * block_size;
    if let Some(b) = blocks.iter().find(|b| b.len() != n) {
        return Err(Error::dim(format!("block of length {} where {n} expected", b.len())));
    }
    let w = cols * block_size;
    let mut out = vec![0.0; rows * block_size * w];
    for (k, b) in blocks.iter().enumerate() {
        let (bi, bj) = (k / cols, k % cols);
        for y in 0..block_size {
            let row = (bi * block_size + y) * w + bj * block_size;
            out[row..row + block_size].copy_from_slice(&b[y * block_size..(y + 1) * block_size]);
        }
    }
    Ok(out)
}

/// [`assemble_values`] as an image, values clamped into [0, 1].
pub fn assemble_blocks(blocks: &[Vec<f64>], rows: usize, cols: usize, block_size: usize) -> Result<GrayImage> {
    let values = assemble_values(blocks, rows, cols, block_size)?;
    GrayImage::from_clamped(rows * block_size, cols * block_size, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_tiling() {
        let img = GrayImage::filled(64, 64, 0.5).unwrap();
        let g = block_partition(&img, 32).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.blocks.iter().all(|b| b.len() == 1024));
    }

    #[test]
    fn padding_rule() {
        let img = GrayImage::filled(33, 33, 0.5).unwrap();
        let g = block_partition(&img, 32).unwrap();
        assert_eq!((g.grid_rows, g.grid_cols, g.len()), (2, 2, 4));
        // the last block holds one real pixel in its top-left corner
        assert_eq!(g.blocks[3][0], 0.5);
        assert_eq!(g.blocks[3][1], 0.0);
    }

    #[test]
    fn quadrant_constants() {
        let blocks: Vec<Vec<f64>> = (1..=4).map(|v| vec![v as f64 / 4.0; 4]).collect();
        let values = assemble_values(&blocks, 2, 2, 2).unwrap();
        #[rustfmt::skip]
        let want = [0.25, 0.25, 0.5, 0.5,
                    0.25, 0.25, 0.5, 0.5,
                    0.75, 0.75, 1.0, 1.0,
                    0.75, 0.75, 1.0, 1.0];
        assert_eq!(values, want);
    }

    #[test]
    fn single_block_is_reshape() {
        let b = vec![(0..9).map(|v| v as f64 / 8.0).collect::<Vec<_>>()];
        let img = assemble_blocks(&b, 1, 1, 3).unwrap();
        assert_eq!(img.pixels(), &b[0][..]);
    }

    #[test]
    fn count_mismatch() {
        let b = vec![vec![0.0; 4]; 3];
        assert!(matches!(assemble_values(&b, 2, 2, 2), Err(Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn partition_round_trip_is_bit_exact(h in 1usize..40, w in 1usize..40, block in 1usize..12, seed in 0u64..1000) {
            let img = GrayImage::from_fn(h, w, |y, x| ((y * 31 + x * 17 + seed as usize) % 97) as f64 / 96.0).unwrap();
            let g = block_partition(&img, block).unwrap();
            prop_assert_eq!(g.grid_rows * g.grid_cols, g.len());
            prop_assert_eq!(g.to_image().unwrap(), img);
        }
    }
}
