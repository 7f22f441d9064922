use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named, shaped, row-major parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Ordered collection of every learnable array of a model.
///
/// Gradients and optimizer moments reuse the same type so they can be
/// zipped against the parameters array by array.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    params: Vec<Param>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, shape: &[usize], values: Vec<f64>) {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "shape/value mismatch for {name}"
        );
        assert!(self.index_of(name).is_none(), "duplicate parameter {name}");
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            values,
        });
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::config("params", format!("missing parameter array `{name}`")))
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.param(name).map(|p| p.values.as_slice())
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| p.values.as_mut_slice())
            .ok_or_else(|| Error::config("params", format!("missing parameter array `{name}`")))
    }

    /// Checked access with an expected element count.
    pub fn get_sized(&self, name: &str, len: usize) -> Result<&[f64]> {
        let v = self.get(name)?;
        if v.len() != len {
            return Err(Error::dim(name, len, v.len()));
        }
        Ok(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar coordinates.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: vec![0.0; p.values.len()],
                })
                .collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        for p in &mut self.params {
            p.values.iter_mut().for_each(|v| *v = value);
        }
    }

    /// Element-wise `self += other`; layouts must match.
    pub fn add_assign(&mut self, other: &ParameterSet) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in &mut self.params {
            p.values.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn same_layout(&self, other: &ParameterSet) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// Name of the first array holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.params
            .iter()
            .find(|p| p.values.iter().any(|v| !v.is_finite()))
            .map(|p| p.name.as_str())
    }

    /// Maps a flat coordinate to `(array index, offset)`.
    pub fn locate(&self, mut flat: usize) -> Option<(usize, usize)> {
        for (i, p) in self.params.iter().enumerate() {
            if flat < p.values.len() {
                return Some((i, flat));
            }
            flat -= p.values.len();
        }
        None
    }

    pub fn value_at(&self, flat: usize) -> f64 {
        let (i, o) = self.locate(flat).expect("coordinate out of range");
        self.params[i].values[o]
    }

    pub fn set_value_at(&mut self, flat: usize, value: f64) {
        let (i, o) = self.locate(flat).expect("coordinate out of range");
        self.params[i].values[o] = value;
    }

    pub fn flat_name(&self, flat: usize) -> String {
        match self.locate(flat) {
            Some((i, o)) => format!("{}[{}]", self.params[i].name, o),
            None => format!("<out of range {flat}>"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParameterSet {
        let mut p = ParameterSet::new();
        p.push("a", &[2], vec![1.0, 2.0]);
        p.push("b", &[1, 3], vec![3.0, 4.0, 5.0]);
        p
    }

    #[test]
    fn flat_indexing_walks_arrays_in_order() {
        let p = sample();
        assert_eq!(p.num_values(), 5);
        assert_eq!(p.locate(2), Some((1, 0)));
        assert_eq!(p.value_at(4), 5.0);
        assert_eq!(p.flat_name(1), "a[1]");
        assert_eq!(p.locate(5), None);
    }

    #[test]
    fn add_and_scale() {
        let mut p = sample();
        let q = sample();
        p.add_assign(&q);
        p.scale(0.5);
        assert_eq!(p, sample());
    }

    #[test]
    fn detects_non_finite() {
        let mut p = sample();
        assert!(p.first_non_finite().is_none());
        p.get_mut("b").unwrap()[1] = f64::NAN;
        assert_eq!(p.first_non_finite(), Some("b"));
    }

    #[test]
    fn missing_array_is_an_error() {
        assert!(sample().get("nope").is_err());
        assert!(sample().get_sized("a", 3).is_err());
    }
}
