//! Dense logical synapse matrix: the ground truth every store is checked against.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::quant::quantize_weight;
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("expected {expected} entries for a {n_pre}x{n_post} matrix, got {got}")]
    Shape {
        n_pre: usize,
        n_post: usize,
        expected: usize,
        got: usize,
    },
    #[error("density {0} is outside [0, 1]")]
    Density(f64),
}

/// `n_pre x n_post` weights in row-major order (row = presynaptic neuron) with a presence mask.
///
/// Absent synapses always carry weight zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SynapseMatrix<T> {
    n_pre: usize,
    n_post: usize,
    weights: Vec<T>,
    mask: Vec<bool>,
}

impl<T: Scalar> SynapseMatrix<T> {
    /// Builds a matrix, zeroing every weight whose mask entry is false.
    pub fn new(n_pre: usize, n_post: usize, mut weights: Vec<T>, mask: Vec<bool>) -> Result<Self, MatrixError> {
        let expected = n_pre * n_post;
        for got in [weights.len(), mask.len()] {
            if got != expected {
                return Err(MatrixError::Shape { n_pre, n_post, expected, got });
            }
        }
        for (w, &m) in weights.iter_mut().zip(&mask) {
            if !m {
                *w = T::zero();
            }
        }
        Ok(Self { n_pre, n_post, weights, mask })
    }

    /// Fully connected matrix.
    pub fn dense(n_pre: usize, n_post: usize, weights: Vec<T>) -> Result<Self, MatrixError> {
        Self::new(n_pre, n_post, weights, vec![true; n_pre * n_post])
    }

    /// Matrix whose synapses are exactly the nonzero weights.
    pub fn from_nonzero(n_pre: usize, n_post: usize, weights: Vec<T>) -> Result<Self, MatrixError> {
        let mask = weights.iter().map(|w| *w != T::zero()).collect();
        Self::new(n_pre, n_post, weights, mask)
    }

    /// Random matrix with `round(density * n_pre * n_post)` synapses chosen uniformly without
    /// replacement and weights uniform in `(-1, 1)`.
    pub fn random<R: Rng + ?Sized>(
        n_pre: usize,
        n_post: usize,
        density: f64,
        rng: &mut R,
    ) -> Result<Self, MatrixError> {
        if !(0.0..=1.0).contains(&density) {
            return Err(MatrixError::Density(density));
        }
        let slots = n_pre * n_post;
        let nnz = (density * slots as f64).round() as usize;
        let mut mask = vec![false; slots];
        for k in index::sample(rng, slots, nnz) {
            mask[k] = true;
        }
        let weights = mask
            .iter()
            .map(|&m| if m { T::lit(rng.random_range(-1.0..1.0)) } else { T::zero() })
            .collect();
        Self::new(n_pre, n_post, weights, mask)
    }

    pub fn n_pre(&self) -> usize {
        self.n_pre
    }

    pub fn n_post(&self) -> usize {
        self.n_post
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn index(&self, pre: usize, post: usize) -> usize {
        pre * self.n_post + post
    }

    pub fn weight(&self, pre: usize, post: usize) -> T {
        self.weights[self.index(pre, post)]
    }

    pub fn has_synapse(&self, pre: usize, post: usize) -> bool {
        self.mask[self.index(pre, post)]
    }

    pub fn nnz(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn density(&self) -> f64 {
        let slots = self.n_pre * self.n_post;
        if slots == 0 {
            0.0
        } else {
            self.nnz() as f64 / slots as f64
        }
    }

    /// Copy with every weight snapped to the `b_w` grid; the mask is unchanged.
    pub fn quantized(&self, b_w: u32) -> Self {
        Self {
            n_pre: self.n_pre,
            n_post: self.n_post,
            weights: self.weights.iter().map(|&w| quantize_weight(w, b_w)).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Dense row `pre` (absent synapses read as zero).
    pub fn row(&self, pre: usize) -> &[T] {
        &self.weights[pre * self.n_post..(pre + 1) * self.n_post]
    }

    /// Dense column `post`.
    pub fn column(&self, post: usize) -> Vec<T> {
        (0..self.n_pre).map(|i| self.weight(i, post)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn mask_zeroes_absent_weights() {
        let m = SynapseMatrix::new(1, 3, vec![1.0f64, 2.0, 3.0], vec![true, false, true]).unwrap();
        assert_eq!(m.weights(), &[1.0, 0.0, 3.0]);
        assert_eq!(m.nnz(), 2);
        assert!((m.density() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn shape_checked() {
        let err = SynapseMatrix::<f64>::dense(2, 2, vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, MatrixError::Shape { expected: 4, got: 3, .. }));
    }

    #[test]
    fn random_density_is_exact_count() {
        let mut rng = seeded(1);
        let m = SynapseMatrix::<f64>::random(728, 128, 0.75, &mut rng).unwrap();
        assert_eq!(m.nnz(), 69_888);
        assert!(SynapseMatrix::<f64>::random(2, 2, 1.5, &mut rng).is_err());
    }
}
