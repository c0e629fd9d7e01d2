use nalgebra::DVector;

/// Sorted scalar projection of stored vectors. Any two vectors within a given
/// distance have projections within a computable window, so candidate
/// duplicates come from a range query instead of a full scan.
#[derive(Debug, Clone, Default)]
pub(crate) struct KeyIndex {
    keys: Vec<(f64, usize)>,
}

fn weight(i: usize) -> f64 {
    // Golden-ratio sequence, values in [0.5, 1.5).
    0.5 + (i as f64 * 0.618_033_988_749_895).fract()
}

pub(crate) const MAX_WEIGHT: f64 = 1.5;

pub(crate) fn key(parts: &[&DVector<f64>]) -> f64 {
    let mut acc = 0.0;
    let mut i = 0;
    for p in parts {
        for v in p.iter() {
            acc += weight(i) * v;
            i += 1;
        }
    }
    acc
}

impl KeyIndex {
    pub fn insert(&mut self, k: f64, id: usize) {
        let pos = self.keys.partition_point(|&(x, _)| x < k);
        self.keys.insert(pos, (k, id));
    }

    /// Ids whose key lies in `[k − radius, k + radius]`.
    pub fn near(&self, k: f64, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let lo = self.keys.partition_point(|&(x, _)| x < k - radius);
        self.keys[lo..]
            .iter()
            .take_while(move |&&(x, _)| x <= k + radius)
            .map(|&(_, id)| id)
    }

    pub fn clear(&mut self) {
        self.keys.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_query_finds_neighbours() {
        let mut ix = KeyIndex::default();
        for (i, k) in [3.0, -1.0, 0.5, 0.51, 10.0].iter().enumerate() {
            ix.insert(*k, i);
        }
        let mut got: Vec<_> = ix.near(0.5, 0.02).collect();
        got.sort();
        assert_eq!(got, vec![2, 3]);
        assert_eq!(ix.near(100.0, 1.0).count(), 0);
    }

    #[test]
    fn close_vectors_have_close_keys() {
        let a = DVector::from_vec(vec![0.3, -0.2, 1.0, 0.0]);
        let b = &a + DVector::from_vec(vec![1e-7, -1e-7, 1e-7, 0.0]);
        let d = (&a - &b).amax();
        assert!((key(&[&a]) - key(&[&b])).abs() <= MAX_WEIGHT * d * 4.0);
    }
}
