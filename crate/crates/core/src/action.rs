use serde::{Deserialize, Serialize};

/// An environment action: a discrete index or a continuous vector.
///
/// Serialized untagged, so JSON carries either an integer or an array of
/// numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Action::Discrete(_) => None,
            Action::Continuous(v) => Some(v),
        }
    }
}
