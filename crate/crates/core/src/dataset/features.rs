use sha2::{Digest, Sha256};

/// Turns an image reference into a fixed-length visual feature vector.
pub trait FeatureProvider: Sync {
    fn dim(&self) -> usize;
    fn features(&self, image_ref: &str) -> Vec<f64>;
}

/// Deterministic stand-in for a frozen image encoder: hashes the reference
/// into values in `[-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashFeatures {
    pub dim: usize,
}

impl FeatureProvider for HashFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, image_ref: &str) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        let mut block = 0u64;
        while out.len() < self.dim {
            let digest = Sha256::new()
                .chain_update(image_ref.as_bytes())
                .chain_update(block.to_le_bytes())
                .finalize();
            for chunk in digest.chunks_exact(4) {
                if out.len() == self.dim {
                    break;
                }
                let v = u32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                out.push(v as f64 / 2f64.powi(31) - 1.0);
            }
            block += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_features_are_stable_and_bounded() {
        let p = HashFeatures { dim: 19 };
        let a = p.features("cam0/000001.jpg");
        assert_eq!(a.len(), 19);
        assert_eq!(a, p.features("cam0/000001.jpg"));
        assert_ne!(a, p.features("cam0/000002.jpg"));
        assert!(a.iter().all(|v| (-1.0..1.0).contains(v)));
    }
}
