use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Hard node predictions: the argmax class of every node.
///
/// This is the one-hot prediction matrix stored by row index of its single 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predictions(pub Vec<u8>);

impl Predictions {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn class(&self, node: usize) -> u8 {
        self.0[node]
    }

    pub fn classes(&self) -> &[u8] {
        &self.0
    }

    /// Argmax per row with ties resolved toward the lower class index.
    pub fn from_logits(logits: &Array2<f64>) -> Self {
        Predictions(
            logits
                .rows()
                .into_iter()
                .map(|row| {
                    let mut best = 0usize;
                    for (c, &v) in row.iter().enumerate().skip(1) {
                        if v > row[best] {
                            best = c;
                        }
                    }
                    best as u8
                })
                .collect(),
        )
    }

    pub fn one_hot(&self, classes: usize) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), classes));
        for (i, &c) in self.0.iter().enumerate() {
            out[[i, c as usize]] = 1.0;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn argmax_and_ties() {
        let p = Predictions::from_logits(&array![[0.2, 0.9], [0.5, 0.5], [0.0, -1.0]]);
        assert_eq!(p.0, vec![1, 0, 0]);
        assert_eq!(p.one_hot(2), array![[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]);
    }
}
