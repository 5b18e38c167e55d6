//! Noisy stand-ins for the demographic classifier and location inference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demographics::{AgeBracket, Gender};
use crate::error::{Error, Result};
use crate::geo::State;
use crate::rng::{substream, SimRng};
use crate::worldgen::SimUser;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationErrorModel {
    #[default]
    UniformOtherState,
    NeighborState,
}

/// Row-stochastic confusion matrices, rows indexed by the true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfusionSpec {
    pub age_matrix: [[f64; 4]; 4],
    pub gender_matrix: [[f64; 2]; 2],
    /// Row 0: person, row 1: organisation; column 1 is "labelled org".
    pub org_matrix: [[f64; 2]; 2],
    pub location_accuracy: f64,
    pub location_error_model: LocationErrorModel,
    /// Candidate count for `neighbor_state` errors.
    pub neighbor_k: usize,
}

fn identity<const N: usize>() -> [[f64; N]; N] {
    let mut m = [[0.0; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

impl Default for ConfusionSpec {
    fn default() -> Self {
        ConfusionSpec {
            age_matrix: identity(),
            gender_matrix: identity(),
            org_matrix: identity(),
            location_accuracy: 1.0,
            location_error_model: LocationErrorModel::UniformOtherState,
            neighbor_k: 5,
        }
    }
}

fn check_rows<const N: usize>(name: &str, m: &[[f64; N]]) -> Result<()> {
    for (i, row) in m.iter().enumerate() {
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Spec(format!("{name} row {i} has a negative or non-finite entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!("{name} row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

impl ConfusionSpec {
    pub fn validate(&self) -> Result<()> {
        check_rows("age_matrix", &self.age_matrix)?;
        check_rows("gender_matrix", &self.gender_matrix)?;
        check_rows("org_matrix", &self.org_matrix)?;
        if !(0.0..=1.0).contains(&self.location_accuracy) {
            return Err(Error::Spec(format!("location_accuracy {} is not a probability", self.location_accuracy)));
        }
        if self.location_error_model == LocationErrorModel::NeighborState && self.neighbor_k == 0 {
            return Err(Error::Spec("neighbor_k must be positive".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.age_matrix == identity() && self.gender_matrix == identity() && self.org_matrix == identity() && self.location_accuracy == 1.0
    }
}

/// A user with the labels later stages see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledUser {
    #[serde(flatten)]
    pub user: SimUser,
    pub obs_age: AgeBracket,
    pub obs_gender: Gender,
    pub obs_org: bool,
    pub obs_state: Option<State>,
}

fn draw_row(rng: &mut SimRng, row: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last column with positive mass
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}

/// Draw observed age, gender and organisation labels from the confusion rows.
/// Observed state is copied from the truth; see [`infer_location`].
pub fn infer_demographics(users: &[SimUser], spec: &ConfusionSpec, seed: u64) -> Result<Vec<LabeledUser>> {
    spec.validate()?;
    Ok(users
        .iter()
        .map(|u| {
            let mut rng = substream(seed, "infer-demographics", u.user_id);
            let age = draw_row(&mut rng, &spec.age_matrix[u.true_age.index()]);
            let gender = draw_row(&mut rng, &spec.gender_matrix[u.true_gender.index()]);
            let org = draw_row(&mut rng, &spec.org_matrix[u.is_org as usize]) == 1;
            LabeledUser {
                user: u.clone(),
                obs_age: AgeBracket::from_index(age),
                obs_gender: Gender::from_index(gender),
                obs_org: org,
                obs_state: u.true_state,
            }
        })
        .collect())
}

/// Replace each observed state: the true state with probability
/// `location_accuracy`, otherwise a draw from the error model. Users with no
/// true state stay unlabelled.
pub fn infer_location(users: &mut [LabeledUser], spec: &ConfusionSpec, seed: u64) -> Result<()> {
    spec.validate()?;
    let states: Vec<State> = State::analysis_set(false).collect();
    for lu in users.iter_mut() {
        let Some(truth) = lu.user.true_state else {
            lu.obs_state = None;
            continue;
        };
        let mut rng = substream(seed, "infer-location", lu.user.user_id);
        if rng.random_bool(spec.location_accuracy) {
            lu.obs_state = Some(truth);
            continue;
        }
        let wrong = match spec.location_error_model {
            LocationErrorModel::UniformOtherState => {
                let others: Vec<State> = states.iter().copied().filter(|s| *s != truth).collect();
                others[rng.random_range(0..others.len())]
            }
            LocationErrorModel::NeighborState => {
                let near = truth.nearest(spec.neighbor_k);
                near[rng.random_range(0..near.len())]
            }
        };
        lu.obs_state = Some(wrong);
    }
    Ok(())
}

/// Both channels in sequence.
pub fn infer(users: &[SimUser], spec: &ConfusionSpec, seed: u64) -> Result<Vec<LabeledUser>> {
    let mut out = infer_demographics(users, spec, seed)?;
    infer_location(&mut out, spec, seed)?;
    Ok(out)
}
