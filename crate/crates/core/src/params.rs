//! Ordered name → tensor maps holding a full model state.

use std::collections::BTreeMap;

use crate::tensor::Tensor;

/// A complete model state keyed by parameter name, iterated in sorted order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NamedParamMap(BTreeMap<String, Tensor<f32>>);

/// Why two maps cannot be combined elementwise.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("schema mismatch: missing {missing:?}, unexpected {unexpected:?}, reshaped {reshaped:?}")]
pub struct SchemaMismatch {
    pub missing: Vec<String>,
    pub unexpected: Vec<String>,
    pub reshaped: Vec<String>,
}

impl NamedParamMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<f32>) -> Option<Tensor<f32>> {
        self.0.insert(name.into(), value)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.0.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<f32>)> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<f32>)> {
        self.0.iter_mut()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.0.values().map(Tensor::numel).sum()
    }

    pub fn as_map(&self) -> &BTreeMap<String, Tensor<f32>> {
        &self.0
    }

    /// Checks `other` has exactly the same names and shapes.
    pub fn check_schema<U>(&self, other: &BTreeMap<String, Tensor<U>>) -> Result<(), SchemaMismatch>
    where
        U: crate::tensor::Scalar,
    {
        let missing: Vec<String> = self.0.keys().filter(|k| !other.contains_key(*k)).cloned().collect();
        let unexpected: Vec<String> = other.keys().filter(|k| !self.0.contains_key(*k)).cloned().collect();
        let reshaped: Vec<String> = self
            .0
            .iter()
            .filter(|(k, v)| other.get(*k).is_some_and(|o| o.shape() != v.shape()))
            .map(|(k, _)| k.clone())
            .collect();
        if missing.is_empty() && unexpected.is_empty() && reshaped.is_empty() {
            Ok(())
        } else {
            Err(SchemaMismatch { missing, unexpected, reshaped })
        }
    }

    pub fn check_same_schema(&self, other: &NamedParamMap) -> Result<(), SchemaMismatch> {
        self.check_schema(&other.0)
    }

    /// Widened copy for the 64-bit verification path.
    pub fn to_f64(&self) -> BTreeMap<String, Tensor<f64>> {
        self.0.iter().map(|(k, v)| (k.clone(), v.cast())).collect()
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &NamedParamMap) -> bool {
        self.check_same_schema(other).is_ok()
            && self.0.iter().all(|(k, v)| {
                let o = &other.0[k];
                v.data().iter().zip(o.data()).all(|(a, b)| a.to_bits() == b.to_bits())
            })
    }

    /// Largest elementwise distance in units in the last place.
    pub fn max_ulp_distance(&self, other: &NamedParamMap) -> Option<u32> {
        self.check_same_schema(other).ok()?;
        let mut worst = 0u32;
        for (k, v) in &self.0 {
            for (&a, &b) in v.data().iter().zip(other.0[k].data()) {
                worst = worst.max(ulp_distance(a, b));
            }
        }
        Some(worst)
    }
}

impl FromIterator<(String, Tensor<f32>)> for NamedParamMap {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<f32>)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl IntoIterator for NamedParamMap {
    type Item = (String, Tensor<f32>);
    type IntoIter = std::collections::btree_map::IntoIter<String, Tensor<f32>>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// Number of representable `f32` values between `a` and `b`.
pub fn ulp_distance(a: f32, b: f32) -> u32 {
    fn ordered(x: f32) -> i64 {
        let bits = x.to_bits() as i32 as i64;
        if bits < 0 {
            i32::MIN as i64 - bits
        } else {
            bits
        }
    }
    if a.is_nan() || b.is_nan() {
        return u32::MAX;
    }
    (ordered(a) - ordered(b)).unsigned_abs().min(u32::MAX as u64) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ulp_distance_basics() {
        assert_eq!(ulp_distance(1.0, 1.0), 0);
        assert_eq!(ulp_distance(1.0, f32::from_bits(1.0f32.to_bits() + 1)), 1);
        assert_eq!(ulp_distance(0.0, -0.0), 0);
        assert_eq!(ulp_distance(f32::from_bits(1), -f32::from_bits(1)), 2);
    }

    #[test]
    fn schema_mismatch_lists_offending_keys() {
        let mut a = NamedParamMap::new();
        a.insert("w", Tensor::zeros(&[2]));
        a.insert("only_a", Tensor::zeros(&[1]));
        let mut b = NamedParamMap::new();
        b.insert("w", Tensor::zeros(&[3]));
        b.insert("only_b", Tensor::zeros(&[1]));
        let err = a.check_same_schema(&b).unwrap_err();
        assert_eq!(err.missing, vec!["only_a"]);
        assert_eq!(err.unexpected, vec!["only_b"]);
        assert_eq!(err.reshaped, vec!["w"]);
    }
}
