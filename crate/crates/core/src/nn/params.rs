use indexmap::IndexMap;
use ndarray::Array2;

use crate::error::{Error, Result};

/// Ordered collection of named parameter matrices.
///
/// Vectors (biases, batch-norm scales) are stored as `1 x n` rows so every
/// entry has the same rank. Insertion order is preserved and is the order
/// used by flattening, checkpoints and optimizer slots.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Array2<f64>>,
}

/// Gradients share the layout of the parameters they belong to.
pub type GradStore = ParamStore;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Input(format!("duplicate parameter name `{name}`")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.entries.get_mut(name)
    }

    /// Like [`get`](Self::get) but reports a missing entry as a state error.
    pub fn expect(&self, name: &str) -> Result<&Array2<f64>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::State(format!("parameter `{name}` not found")))
    }

    pub fn expect_mut(&mut self, name: &str) -> Result<&mut Array2<f64>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("parameter `{name}` not found")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars across all entries.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Array2::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Array2::zeros(v.raw_dim())))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|((ka, va), (kb, vb))| ka == kb && va.dim() == vb.dim())
    }

    pub(crate) fn check_layout(&self, other: &Self, context: &str) -> Result<()> {
        if self.same_layout(other) {
            return Ok(());
        }
        for (name, value) in &self.entries {
            match other.entries.get(name) {
                Some(o) if o.dim() == value.dim() => {}
                Some(o) => {
                    return Err(Error::shape(
                        format!("{context} `{name}`"),
                        format!("{:?}", value.dim()),
                        format!("{:?}", o.dim()),
                    ))
                }
                None => {
                    return Err(Error::State(format!("{context}: `{name}` missing")));
                }
            }
        }
        Err(Error::State(format!(
            "{context}: parameter sets differ ({} vs {} entries)",
            self.len(),
            other.len()
        )))
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, value) in &self.entries {
            if value.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { name: name.clone() });
            }
        }
        Ok(())
    }

    /// Concatenates every entry in insertion order, row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for v in self.entries.values() {
            out.extend(v.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::shape(
                "flat parameter vector",
                self.num_scalars(),
                flat.len(),
            ));
        }
        let mut offset = 0;
        for v in self.entries.values_mut() {
            for (dst, src) in v.iter_mut().zip(&flat[offset..]) {
                *dst = *src;
            }
            offset += v.len();
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|v| v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all entries so the global L2 norm does not exceed `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for v in self.entries.values_mut() {
                v.mapv_inplace(|x| x * scale);
            }
        }
        norm
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.entries.values_mut() {
            v.mapv_inplace(|x| x * factor);
        }
    }

    /// `self += factor * other`, entry by entry.
    pub fn add_scaled(&mut self, other: &Self, factor: f64) -> Result<()> {
        self.check_layout(other, "add_scaled")?;
        for (dst, src) in self.entries.values_mut().zip(other.entries.values()) {
            dst.scaled_add(factor, src);
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl<'a> IntoIterator for &'a ParamStore {
    type Item = (&'a String, &'a Array2<f64>);
    type IntoIter = indexmap::map::Iter<'a, String, Array2<f64>>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}
