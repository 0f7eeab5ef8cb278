//! Running first- and second-order feature statistics.
//!
//! The whole learned state of the classifier family lives here: the Gram
//! matrix `G = Σ Φ Φᵀ`, the per-class prototype sums `c_y = Σ_{y_i = y} Φ_i`
//! and the per-class counts. Everything is an unweighted sum, so streams can
//! be sharded and merged in any order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::ConcatFeature;

#[derive(Debug, Clone, PartialEq)]
pub struct StatAccumulator {
    gram: DMatrix<f64>,
    proto_sums: DMatrix<f64>,
    class_counts: Vec<u64>,
    k: usize,
    samples_seen: u64,
}

impl StatAccumulator {
    /// Empty statistics for `dim`-dimensional features over `num_classes`
    /// classes, built from the last `k` layers.
    pub fn new(dim: usize, num_classes: usize, k: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::range("dim", dim, ">= 1"));
        }
        if num_classes == 0 {
            return Err(Error::range("num_classes", num_classes, ">= 1"));
        }
        if k == 0 {
            return Err(Error::range("k", k, ">= 1"));
        }
        Ok(Self {
            gram: DMatrix::zeros(dim, dim),
            proto_sums: DMatrix::zeros(num_classes, dim),
            class_counts: vec![0; num_classes],
            k,
            samples_seen: 0,
        })
    }

    /// Rebuilds an accumulator from stored parts, checking every invariant.
    pub(crate) fn from_parts(
        gram: DMatrix<f64>,
        proto_sums: DMatrix<f64>,
        class_counts: Vec<u64>,
        k: usize,
        samples_seen: u64,
    ) -> Result<Self> {
        let dim = gram.nrows();
        if dim == 0 || gram.ncols() != dim {
            return Err(Error::Shape(format!(
                "gram is {}x{}, expected a non-empty square matrix",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if proto_sums.ncols() != dim || proto_sums.nrows() != class_counts.len() {
            return Err(Error::Shape(format!(
                "prototype sums are {}x{}, expected {}x{dim}",
                proto_sums.nrows(),
                proto_sums.ncols(),
                class_counts.len()
            )));
        }
        if k == 0 || class_counts.is_empty() {
            return Err(Error::Shape("k and num_classes must be positive".into()));
        }
        if class_counts.iter().sum::<u64>() != samples_seen {
            return Err(Error::State(
                "samples_seen does not equal the sum of class counts".into(),
            ));
        }
        for j in 0..dim {
            for i in 0..j {
                if gram[(i, j)] != gram[(j, i)] {
                    return Err(Error::State(format!("gram is not symmetric at ({i}, {j})")));
                }
            }
        }
        for (y, &n) in class_counts.iter().enumerate() {
            if n == 0 && proto_sums.row(y).iter().any(|&v| v != 0.0) {
                return Err(Error::State(format!(
                    "class {y} has no samples but a non-zero prototype sum"
                )));
            }
        }
        Ok(Self {
            gram,
            proto_sums,
            class_counts,
            k,
            samples_seen,
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `C x D` matrix whose row `y` is the summed prototype `c_y`.
    pub fn proto_sums(&self) -> &DMatrix<f64> {
        &self.proto_sums
    }

    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    pub fn is_empty(&self) -> bool {
        self.samples_seen == 0
    }

    pub fn has_seen(&self, label: usize) -> bool {
        self.class_counts.get(label).is_some_and(|&n| n > 0)
    }

    pub fn update(&mut self, feat: &ConcatFeature, label: usize) -> Result<()> {
        self.update_values(&feat.values, label)
    }

    /// Adds one sample: `G += v vᵀ`, `c_label += v`.
    pub fn update_values(&mut self, values: &[f64], label: usize) -> Result<()> {
        let dim = self.dim();
        if values.len() != dim {
            return Err(Error::Contract(format!(
                "feature has dimension {}, accumulator expects {dim}",
                values.len()
            )));
        }
        if label >= self.num_classes() {
            return Err(Error::Contract(format!(
                "label {label} is not below num_classes {}",
                self.num_classes()
            )));
        }
        // Column-major storage: walk the upper triangle column by column and
        // mirror each entry so both halves hold the identical value.
        for (j, &vj) in values.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            for (i, &vi) in values[..=j].iter().enumerate() {
                let g = self.gram[(i, j)] + vi * vj;
                self.gram[(i, j)] = g;
                self.gram[(j, i)] = g;
            }
        }
        let mut row = self.proto_sums.row_mut(label);
        for (p, &v) in row.iter_mut().zip(values) {
            *p += v;
        }
        self.class_counts[label] += 1;
        self.samples_seen += 1;
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() || self.num_classes() != other.num_classes() || self.k != other.k
        {
            return Err(Error::Contract(format!(
                "cannot combine accumulators of shape (dim {}, C {}, k {}) and (dim {}, C {}, k {})",
                self.dim(),
                self.num_classes(),
                self.k,
                other.dim(),
                other.num_classes(),
                other.k
            )));
        }
        Ok(())
    }

    /// Componentwise sum of two accumulators over disjoint sample sets.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.merge_in(other)?;
        Ok(out)
    }

    pub fn merge_in(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        self.gram += &other.gram;
        self.proto_sums += &other.proto_sums;
        for (a, b) in self.class_counts.iter_mut().zip(&other.class_counts) {
            *a += b;
        }
        self.samples_seen += other.samples_seen;
        Ok(())
    }

    /// Mean prototype `c_y / n_y`.
    pub fn mean_prototype(&self, label: usize) -> Result<DVector<f64>> {
        match self.class_counts.get(label) {
            None => Err(Error::Contract(format!(
                "label {label} is not below num_classes {}",
                self.num_classes()
            ))),
            Some(0) => Err(Error::UnseenClass { label }),
            Some(&n) => Ok(self.proto_sums.row(label).transpose() / n as f64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feat(values: &[f64]) -> ConcatFeature {
        ConcatFeature {
            values: values.to_vec(),
            k: 1,
        }
    }

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn new_is_zero() {
        let acc = StatAccumulator::new(3, 2, 1).unwrap();
        assert_eq!(acc.gram(), &DMatrix::zeros(3, 3));
        assert_eq!(acc.proto_sums(), &DMatrix::zeros(2, 3));
        assert_eq!(acc.class_counts(), &[0, 0]);
        assert!(acc.is_empty());
    }

    #[test]
    fn new_rejects_zero_sizes() {
        assert!(matches!(StatAccumulator::new(0, 2, 1), Err(Error::Range { .. })));
        assert!(matches!(StatAccumulator::new(2, 0, 1), Err(Error::Range { .. })));
    }

    #[test]
    fn single_update_is_outer_product() {
        let mut acc = StatAccumulator::new(3, 2, 1).unwrap();
        let v = [1.0, -2.0, 0.5];
        acc.update(&feat(&v), 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(acc.gram()[(i, j)], v[i] * v[j]);
            }
        }
        assert_eq!(acc.proto_sums().row(1).iter().copied().collect::<Vec<_>>(), v);
        assert_eq!(acc.class_counts(), &[0, 1]);
    }

    #[test]
    fn two_updates_hand_arithmetic() {
        let mut acc = StatAccumulator::new(2, 1, 1).unwrap();
        acc.update(&feat(&[1.0, 0.0]), 0).unwrap();
        acc.update(&feat(&[0.0, 2.0]), 0).unwrap();
        assert_eq!(acc.gram(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        assert_eq!(acc.proto_sums().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(acc.samples_seen(), 2);
    }

    #[test]
    fn update_contract_errors() {
        let mut acc = StatAccumulator::new(2, 2, 1).unwrap();
        assert!(matches!(acc.update(&feat(&[1.0]), 0), Err(Error::Contract(_))));
        assert!(matches!(acc.update(&feat(&[1.0, 1.0]), 2), Err(Error::Contract(_))));
        assert!(acc.is_empty());
    }

    #[test]
    fn streaming_matches_batch_gram() {
        let rows = random_rows(200, 12, 7);
        let mut acc = StatAccumulator::new(12, 3, 1).unwrap();
        for (i, r) in rows.iter().enumerate() {
            acc.update_values(r, i % 3).unwrap();
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let f = DMatrix::from_row_slice(200, 12, &flat);
        let oracle = f.transpose() * &f;
        for (a, b) in acc.gram().iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300) || (a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let rows = random_rows(30, 4, 3);
        let mut a = StatAccumulator::new(4, 2, 1).unwrap();
        let mut b = StatAccumulator::new(4, 2, 1).unwrap();
        for (i, r) in rows.iter().enumerate() {
            if i % 2 == 0 {
                a.update_values(r, 0).unwrap();
            } else {
                b.update_values(r, 1).unwrap();
            }
        }
        let empty = StatAccumulator::new(4, 2, 1).unwrap();
        assert_eq!(a.merge(&empty).unwrap(), a);
        assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
    }

    #[test]
    fn merge_rejects_shape_mismatch() {
        let a = StatAccumulator::new(4, 2, 1).unwrap();
        assert!(a.merge(&StatAccumulator::new(3, 2, 1).unwrap()).is_err());
        assert!(a.merge(&StatAccumulator::new(4, 3, 1).unwrap()).is_err());
        assert!(a.merge(&StatAccumulator::new(4, 2, 2).unwrap()).is_err());
    }

    #[test]
    fn mean_prototype_cases() {
        let mut acc = StatAccumulator::new(2, 3, 1).unwrap();
        acc.update(&feat(&[1.0, 0.0]), 2).unwrap();
        acc.update(&feat(&[3.0, 2.0]), 2).unwrap();
        acc.update(&feat(&[5.0, 7.0]), 0).unwrap();
        assert_eq!(acc.mean_prototype(2).unwrap().as_slice(), &[2.0, 1.0]);
        assert_eq!(acc.mean_prototype(0).unwrap().as_slice(), &[5.0, 7.0]);
        assert!(matches!(acc.mean_prototype(1), Err(Error::UnseenClass { label: 1 })));
    }

    #[test]
    fn mean_prototype_matches_column_mean() {
        let rows = random_rows(50, 6, 11);
        let mut acc = StatAccumulator::new(6, 1, 1).unwrap();
        for r in &rows {
            acc.update_values(r, 0).unwrap();
        }
        let mean = acc.mean_prototype(0).unwrap();
        for j in 0..6 {
            let oracle = rows.iter().map(|r| r[j]).sum::<f64>() / 50.0;
            assert_relative_eq!(mean[j], oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn from_parts_checks_invariants() {
        let mut acc = StatAccumulator::new(2, 2, 1).unwrap();
        acc.update(&feat(&[1.0, 2.0]), 0).unwrap();
        let ok = StatAccumulator::from_parts(
            acc.gram.clone(),
            acc.proto_sums.clone(),
            acc.class_counts.clone(),
            1,
            1,
        );
        assert_eq!(ok.unwrap(), acc);
        let mut asym = acc.gram.clone();
        asym[(0, 1)] += 1.0;
        assert!(StatAccumulator::from_parts(asym, acc.proto_sums.clone(), vec![1, 0], 1, 1).is_err());
        assert!(StatAccumulator::from_parts(
            acc.gram.clone(),
            acc.proto_sums.clone(),
            vec![1, 0],
            1,
            2
        )
        .is_err());
    }
}
