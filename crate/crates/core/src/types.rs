//! Domain newtypes over [`Tensor`] with their validity invariants.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An RGB frame: `[h, w, 3]`, intensities in `[0, 1]`, finite, at least 8x8.
#[derive(Debug, Clone, PartialEq)]
pub struct Image(Tensor);

impl Image {
    pub fn new(t: Tensor) -> Result<Self> {
        let (h, w, c) = t.dims3();
        if c != 3 {
            return Err(Error::dimension(format!("image must have 3 channels, got {c}")));
        }
        if h < 8 || w < 8 {
            return Err(Error::validation(format!("image must be at least 8x8, got {h}x{w}")));
        }
        if !t.all_finite() {
            return Err(Error::validation("image contains non-finite values"));
        }
        if t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::validation("image intensities must lie in [0, 1]"));
        }
        Ok(Image(t))
    }

    /// Wrap without validation; for internal paths that guarantee invariants.
    pub fn new_unchecked(t: Tensor) -> Self {
        Image(t)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn size(&self) -> (usize, usize) {
        let (h, w, _) = self.0.dims3();
        (h, w)
    }
}

/// Per-pixel displacement field `[h, w, 2]`; channel 0 is horizontal,
/// channel 1 vertical, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField(Tensor);

impl FlowField {
    pub fn new(t: Tensor) -> Result<Self> {
        let (_, _, c) = t.dims3();
        if c != 2 {
            return Err(Error::dimension(format!("flow must have 2 channels, got {c}")));
        }
        if !t.all_finite() {
            return Err(Error::validation("flow contains non-finite values"));
        }
        Ok(FlowField(t))
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        FlowField(Tensor::zeros(&[h, w, 2]))
    }

    /// Constant displacement everywhere.
    pub fn constant(h: usize, w: usize, dx: f64, dy: f64) -> Self {
        let mut t = Tensor::zeros(&[h, w, 2]);
        for y in 0..h {
            for x in 0..w {
                t.set3(y, x, 0, dx);
                t.set3(y, x, 1, dy);
            }
        }
        FlowField(t)
    }

    pub fn new_unchecked(t: Tensor) -> Self {
        FlowField(t)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn size(&self) -> (usize, usize) {
        let (h, w, _) = self.0.dims3();
        (h, w)
    }

    /// Elementwise scale of the displacement values (spatial size unchanged).
    pub fn scaled(&self, k: f64) -> FlowField {
        FlowField(self.0.map(|v| v * k))
    }
}

/// Hard occlusion mask `[h, w, 1]`; every value is exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(Tensor);

impl BinaryMask {
    pub fn new(t: Tensor) -> Result<Self> {
        let (_, _, c) = t.dims3();
        if c != 1 {
            return Err(Error::dimension(format!("mask must have 1 channel, got {c}")));
        }
        if t.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::validation("mask values must be exactly 0 or 1"));
        }
        Ok(BinaryMask(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn size(&self) -> (usize, usize) {
        let (h, w, _) = self.0.dims3();
        (h, w)
    }

    pub fn count_ones(&self) -> usize {
        self.0.data().iter().filter(|&&v| v == 1.0).count()
    }
}

/// L feature grids at dyadically shrinking resolutions; level `l` of a source
/// of size `h x w` is `h/2^l x w/2^l`.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
}

impl FeaturePyramid {
    pub fn new(levels: Vec<Tensor>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::validation("pyramid must have at least one level"));
        }
        let (h0, w0, _) = levels[0].dims3();
        for (l, t) in levels.iter().enumerate() {
            let (h, w, _) = t.dims3();
            if h * (1 << l) != h0 || w * (1 << l) != w0 {
                return Err(Error::dimension(format!(
                    "level {l} is {h}x{w}, expected {}x{}",
                    h0 >> l,
                    w0 >> l
                )));
            }
            if !t.all_finite() {
                return Err(Error::validation(format!("level {l} contains non-finite values")));
            }
        }
        Ok(FeaturePyramid { levels })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
}

/// Latent variable of the flow generator: one grid per split plus the final
/// block output; element counts sum to `3 * h * w` of the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub parts: Vec<Tensor>,
}

impl LatentCode {
    pub fn total_elements(&self) -> usize {
        self.parts.iter().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.parts.iter().all(Tensor::all_finite)
    }

    /// Flatten all components in schedule order.
    pub fn flattened(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_elements());
        for p in &self.parts {
            out.extend_from_slice(p.data());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_validation() {
        assert!(Image::new(Tensor::filled(&[8, 8, 3], 0.5)).is_ok());
        assert!(Image::new(Tensor::filled(&[8, 8, 2], 0.5)).is_err());
        assert!(Image::new(Tensor::filled(&[4, 8, 3], 0.5)).is_err());
        assert!(Image::new(Tensor::filled(&[8, 8, 3], 1.5)).is_err());
        assert!(Image::new(Tensor::filled(&[8, 8, 3], f64::NAN)).is_err());
    }

    #[test]
    fn mask_validation() {
        let mut t = Tensor::zeros(&[4, 4, 1]);
        t.set3(1, 1, 0, 1.0);
        assert!(BinaryMask::new(t.clone()).is_ok());
        t.set3(2, 2, 0, 0.5);
        assert!(BinaryMask::new(t).is_err());
    }

    #[test]
    fn pyramid_shape_contract() {
        let levels = vec![
            Tensor::zeros(&[8, 8, 4]),
            Tensor::zeros(&[4, 4, 8]),
            Tensor::zeros(&[2, 2, 16]),
        ];
        assert!(FeaturePyramid::new(levels).is_ok());
        let bad = vec![Tensor::zeros(&[8, 8, 4]), Tensor::zeros(&[3, 4, 8])];
        assert!(FeaturePyramid::new(bad).is_err());
    }
}
