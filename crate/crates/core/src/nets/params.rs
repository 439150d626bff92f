use std::collections::BTreeMap;

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayViewMut2, Ix1, Ix2, IxDyn};

use crate::error::{Error, Result};

/// Named parameter arrays. Iteration order is the lexical order of names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    arrays: BTreeMap<String, ArrayD<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, array: ArrayD<f64>) {
        self.arrays.insert(name.into(), array);
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::arg(format!("parameter {name} missing")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ArrayD<f64>> {
        self.arrays
            .get_mut(name)
            .ok_or_else(|| Error::arg(format!("parameter {name} missing")))
    }

    pub fn matrix(&self, name: &str) -> Result<ArrayView2<'_, f64>> {
        self.get(name)?
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|e| Error::arg(format!("{name}: {e}")))
    }

    pub fn matrix_mut(&mut self, name: &str) -> Result<ArrayViewMut2<'_, f64>> {
        self.get_mut(name)?
            .view_mut()
            .into_dimensionality::<Ix2>()
            .map_err(|e| Error::arg(format!("{name}: {e}")))
    }

    pub fn vector(&self, name: &str) -> Result<ArrayView1<'_, f64>> {
        self.get(name)?
            .view()
            .into_dimensionality::<Ix1>()
            .map_err(|e| Error::arg(format!("{name}: {e}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.arrays.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<f64>)> {
        self.arrays.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.arrays.keys()
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    /// Total scalar count.
    pub fn size(&self) -> usize {
        self.arrays.values().map(ArrayD::len).sum()
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            arrays: self
                .arrays
                .iter()
                .map(|(k, v)| (k.clone(), ArrayD::zeros(v.raw_dim())))
                .collect(),
        }
    }

    /// Shapes by name, for architecture compatibility checks.
    pub fn shapes(&self) -> BTreeMap<String, Vec<usize>> {
        self.arrays
            .iter()
            .map(|(k, v)| (k.clone(), v.shape().to_vec()))
            .collect()
    }

    /// `self += scale * other` over matching names.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) -> Result<()> {
        for (name, g) in &other.arrays {
            let dst = self.get_mut(name)?;
            if dst.shape() != g.shape() {
                return Err(Error::arg(format!("shape mismatch for {name}")));
            }
            dst.scaled_add(scale, g);
        }
        Ok(())
    }

    pub fn check_finite(&self, term: &str) -> Result<()> {
        for (name, a) in &self.arrays {
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(term, format!("non-finite value in {name}")));
            }
        }
        Ok(())
    }

    /// Bitwise equality, distinguishing -0.0 from 0.0 and equal NaN payloads.
    pub fn bit_identical(&self, other: &ParamSet) -> bool {
        self.arrays.len() == other.arrays.len()
            && self.arrays.iter().zip(&other.arrays).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.shape() == b.shape()
                    && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// Flattened values in name order (used by finite-difference checks).
    pub fn flatten(&self) -> Vec<f64> {
        self.arrays.values().flat_map(|a| a.iter().copied()).collect()
    }
}

pub(crate) fn zeros(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::zeros(IxDyn(shape))
}
