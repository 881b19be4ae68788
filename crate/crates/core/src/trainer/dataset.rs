use crate::error::{Error, Result};
use crate::numerics::{Matrix, SparseGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Binary,
    Continuous,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Binary => "binary",
            FeatureKind::Continuous => "continuous",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "binary" => Ok(FeatureKind::Binary),
            "continuous" => Ok(FeatureKind::Continuous),
            other => Err(Error::Dataset(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// Node features, labels and index splits. Nodes outside every split are
/// unlabeled from the learner's point of view.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub y: Vec<usize>,
    pub num_classes: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub graph: Option<SparseGraph>,
    pub feature_kind: FeatureKind,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn label_rate(&self) -> f64 {
        self.train.len() as f64 / self.n() as f64
    }

    pub fn targets(&self, idx: &[usize]) -> Vec<(usize, usize)> {
        idx.iter().map(|&i| (i, self.y[i])).collect()
    }

    /// Nodes in none of the three splits, ascending.
    pub fn unlabeled(&self) -> Vec<usize> {
        let mut used = vec![false; self.n()];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            used[i] = true;
        }
        (0..self.n()).filter(|&i| !used[i]).collect()
    }

    /// Checks shapes, label ranges and split disjointness.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.y.len() != n {
            return Err(Error::Dataset(format!(
                "{} labels for {n} feature rows",
                self.y.len()
            )));
        }
        if let Some((i, &c)) = self.y.iter().enumerate().find(|(_, &c)| c >= self.num_classes) {
            return Err(Error::Dataset(format!(
                "node {i}: label {c} outside {} classes",
                self.num_classes
            )));
        }
        if self.train.is_empty() {
            return Err(Error::Dataset("empty training split".into()));
        }
        let mut owner: Vec<Option<&str>> = vec![None; n];
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in set.iter() {
                if i >= n {
                    return Err(Error::Dataset(format!("{name} index {i} out of range for {n} nodes")));
                }
                if let Some(prev) = owner[i] {
                    return Err(Error::Dataset(format!(
                        "node {i} appears in both {prev} and {name} splits"
                    )));
                }
                owner[i] = Some(name);
            }
        }
        if let Some(g) = &self.graph {
            if g.n() != n {
                return Err(Error::Dataset(format!("graph has {} nodes, features {n}", g.n())));
            }
        }
        if self.feature_kind == FeatureKind::Binary
            && self.x.data().iter().any(|&v| v != 0.0 && v != 1.0)
        {
            return Err(Error::Dataset("binary dataset has non-binary features".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset {
            name: "toy".into(),
            x: Matrix::zeros(5, 2),
            y: vec![0, 1, 0, 1, 0],
            num_classes: 2,
            train: vec![0, 1],
            val: vec![2],
            test: vec![3],
            graph: None,
            feature_kind: FeatureKind::Continuous,
        }
    }

    #[test]
    fn overlap_names_the_index() {
        let mut d = toy();
        d.validate().unwrap();
        d.test.push(1);
        let msg = d.validate().unwrap_err().to_string();
        assert!(msg.contains("node 1"), "{msg}");
    }

    #[test]
    fn unlabeled_nodes_and_rate() {
        let d = toy();
        assert_eq!(d.unlabeled(), vec![4]);
        assert!((d.label_rate() - 0.4).abs() < 1e-15);
        let mut bad = toy();
        bad.y[2] = 5;
        assert!(bad.validate().is_err());
    }
}
