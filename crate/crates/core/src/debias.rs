//! Regression of census counts on platform counts per demographic cell, and
//! the population predictions built from it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::census::PopulationTable;
use crate::demographics::{cell_from_index, cell_index, AgeBracket, Gender, N_CELLS};
use crate::error::{Error, Result};
use crate::geo::{GeoLevel, GeoUnit};
use crate::inference::LabeledUser;
use crate::stats::{wilson, Z95};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroRowPolicy {
    /// Remove cells with no platform users.
    #[default]
    Drop,
    Keep,
    /// Remove every unit that has at least one empty cell.
    DropStates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignRow {
    pub geo: GeoUnit,
    pub age: AgeBracket,
    pub gender: Gender,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "N")]
    pub n: u64,
}

/// Platform counts M aligned with census counts N, one row per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTable {
    pub level: GeoLevel,
    pub zero_row_policy: ZeroRowPolicy,
    /// Retained rows, sorted by (geo, age, gender).
    pub rows: Vec<DesignRow>,
    pub dropped: Vec<DesignRow>,
    /// Units that are estimated and scored.
    pub units: Vec<GeoUnit>,
}

impl RegressionTable {
    /// Apply `policy` to a complete set of candidate rows.
    pub fn from_rows(level: GeoLevel, mut candidates: Vec<DesignRow>, policy: ZeroRowPolicy) -> Result<Self> {
        candidates.sort_by_key(|r| (r.geo, cell_index(r.age, r.gender)));
        for w in candidates.windows(2) {
            if (w[0].geo, w[0].age, w[0].gender) == (w[1].geo, w[1].age, w[1].gender) {
                return Err(Error::Join(format!("duplicate row {} {} {}", w[0].geo, w[0].age, w[0].gender)));
            }
        }
        if let Some(r) = candidates.iter().find(|r| r.geo.level() != level) {
            return Err(Error::Join(format!("row for {} is not at level {level}", r.geo)));
        }
        let mut units: Vec<GeoUnit> = candidates.iter().map(|r| r.geo).collect();
        units.dedup();
        let (rows, dropped): (Vec<DesignRow>, Vec<DesignRow>) = match policy {
            ZeroRowPolicy::Keep => (candidates, Vec::new()),
            ZeroRowPolicy::Drop => candidates.into_iter().partition(|r| r.m > 0),
            ZeroRowPolicy::DropStates => {
                let bad: std::collections::BTreeSet<GeoUnit> =
                    candidates.iter().filter(|r| r.m == 0).map(|r| r.geo).collect();
                units.retain(|u| !bad.contains(u));
                candidates.into_iter().partition(|r| !bad.contains(&r.geo))
            }
        };
        Ok(RegressionTable {
            level,
            zero_row_policy: policy,
            rows,
            dropped,
            units,
        })
    }

    pub fn candidate_rows(&self) -> usize {
        self.rows.len() + self.dropped.len()
    }

    pub fn dropped_fraction(&self) -> f64 {
        if self.candidate_rows() == 0 {
            return 0.0;
        }
        self.dropped.len() as f64 / self.candidate_rows() as f64
    }

    /// Retained rows of one unit.
    pub fn unit_rows(&self, geo: GeoUnit) -> &[DesignRow] {
        let lo = self.rows.partition_point(|r| r.geo < geo);
        let hi = self.rows.partition_point(|r| r.geo <= geo);
        &self.rows[lo..hi]
    }

    /// Evaluation target for a unit: census population over its retained cells.
    pub fn unit_population(&self, geo: GeoUnit) -> u64 {
        self.unit_rows(geo).iter().map(|r| r.n).sum()
    }

    /// Units with at least one empty cell.
    pub fn units_missing_cells(&self) -> Vec<GeoUnit> {
        let mut out: Vec<GeoUnit> = self.rows.iter().chain(&self.dropped).filter(|r| r.m == 0).map(|r| r.geo).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Multiply every M by `c` (for equivariance checks).
    pub fn scaled_m(&self, c: u64) -> RegressionTable {
        let mut t = self.clone();
        t.rows.iter_mut().for_each(|r| r.m *= c);
        t
    }
}

/// Count observed users per cell and join census counts at `level`.
///
/// Users labelled as organisations, without an observed state, or observed
/// in a state outside the census's analysis set are not counted.
pub fn build_design(
    users: &[LabeledUser],
    census: &PopulationTable,
    level: GeoLevel,
    policy: ZeroRowPolicy,
) -> Result<RegressionTable> {
    if level.finer_than(census.level()) {
        return Err(Error::Join(format!("census is at {} level, cannot join at {level}", census.level())));
    }
    let census = census.aggregate(level)?;
    let mut m: BTreeMap<GeoUnit, [u64; N_CELLS]> = census.geo_units().into_iter().map(|g| (g, [0; N_CELLS])).collect();
    for u in users {
        if u.obs_org {
            continue;
        }
        let Some(state) = u.obs_state else { continue };
        let Some(geo) = GeoUnit::State(state).at_level(level) else { continue };
        if let Some(cells) = m.get_mut(&geo) {
            cells[cell_index(u.obs_age, u.obs_gender)] += 1;
        }
    }
    let mut rows = Vec::with_capacity(m.len() * N_CELLS);
    for (geo, counts) in &m {
        let n = census.counts(*geo).expect("unit from census");
        for i in 0..N_CELLS {
            let (age, gender) = cell_from_index(i);
            rows.push(DesignRow {
                geo: *geo,
                age,
                gender,
                m: counts[i],
                n: n[i],
            });
        }
    }
    RegressionTable::from_rows(level, rows, policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelSpec {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl ModelSpec {
    pub const ALL: [ModelSpec; 5] = [ModelSpec::M1, ModelSpec::M2, ModelSpec::M3, ModelSpec::M4, ModelSpec::M5];

    pub fn formula(self) -> &'static str {
        match self {
            ModelSpec::M1 => "N ~ M",
            ModelSpec::M2 => "N ~ sum_g M(g)",
            ModelSpec::M3 => "N ~ sum_a M(a)",
            ModelSpec::M4 => "N ~ sum_ag M(a,g)",
            ModelSpec::M5 => "log N(a,g) ~ log M(a,g) + a + g",
        }
    }

    fn unit_columns(self) -> Vec<String> {
        match self {
            ModelSpec::M1 => vec!["M".into()],
            ModelSpec::M2 => Gender::ALL.iter().map(|g| format!("M_{g}")).collect(),
            ModelSpec::M3 => AgeBracket::ALL.iter().map(|a| format!("M_{a}")).collect(),
            ModelSpec::M4 => (0..N_CELLS)
                .map(|i| {
                    let (a, g) = cell_from_index(i);
                    format!("M_{a}_{g}")
                })
                .collect(),
            ModelSpec::M5 => vec![
                "intercept".into(),
                "log_M".into(),
                "age_19-29".into(),
                "age_30-39".into(),
                "age_ge40".into(),
                "gender_f".into(),
            ],
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelSpec::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model spec {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Add an intercept to the unit-level models.
    pub intercept: bool,
    /// Added to M before taking logs; with 0, empty cells are left out of the
    /// log-linear fit.
    pub log_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_obs: usize,
    pub rss: f64,
    pub r_squared: f64,
    pub max_abs_residual: f64,
    pub negative_coefficients: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub coefficients: Vec<(String, f64)>,
    pub options: FitOptions,
    pub diagnostics: Diagnostics,
}

impl FittedModel {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|c| c.0 == name).map(|c| c.1)
    }

    fn values(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.1).collect()
    }
}

/// Least squares with rank checking. Columns are scaled to unit norm before
/// the SVD; a rank-deficient design names every column that takes part in a
/// near-null direction.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    let zero_cols: Vec<String> = norms.iter().zip(names).filter(|(v, _)| **v == 0.0).map(|(_, c)| c.clone()).collect();
    if !zero_cols.is_empty() {
        return Err(Error::SingularDesign { columns: zero_cols });
    }
    let mut xs = x.clone();
    for (j, nv) in norms.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / nv);
    }
    let tol = 1e-10;
    let rank_ok = n >= p && {
        let sv = xs.clone().svd(false, false).singular_values;
        let max = sv.max();
        sv.iter().all(|s| *s > tol * max)
    };
    if !rank_ok {
        let gram = xs.transpose() * &xs;
        let eig = gram.symmetric_eigen();
        let max = eig.eigenvalues.amax();
        let mut cols = vec![false; p];
        for (k, ev) in eig.eigenvalues.iter().enumerate() {
            if *ev <= tol * max.max(1.0) {
                for j in 0..p {
                    if eig.eigenvectors[(j, k)].abs() > 1e-6 {
                        cols[j] = true;
                    }
                }
            }
        }
        let columns = names.iter().zip(cols).filter(|(_, c)| *c).map(|(s, _)| s.clone()).collect();
        return Err(Error::SingularDesign { columns });
    }
    let svd = xs.svd(true, true);
    let beta_s = svd.solve(y, 0.0).map_err(|e| Error::SingularDesign { columns: vec![e.to_string()] })?;
    Ok(DVector::from_iterator(p, beta_s.iter().zip(&norms).map(|(b, nv)| b / nv)))
}

fn unit_features(spec: ModelSpec, rows: &[DesignRow]) -> Vec<f64> {
    match spec {
        ModelSpec::M1 => vec![rows.iter().map(|r| r.m as f64).sum()],
        ModelSpec::M2 => {
            let mut v = vec![0.0; 2];
            rows.iter().for_each(|r| v[r.gender.index()] += r.m as f64);
            v
        }
        ModelSpec::M3 => {
            let mut v = vec![0.0; 4];
            rows.iter().for_each(|r| v[r.age.index()] += r.m as f64);
            v
        }
        ModelSpec::M4 => {
            let mut v = vec![0.0; N_CELLS];
            rows.iter().for_each(|r| v[cell_index(r.age, r.gender)] += r.m as f64);
            v
        }
        ModelSpec::M5 => unreachable!("cell-level model"),
    }
}

fn cell_features(r: &DesignRow, log_offset: f64) -> Option<Vec<f64>> {
    let m = r.m as f64 + log_offset;
    if m <= 0.0 {
        return None;
    }
    let a = r.age.index();
    Some(vec![
        1.0,
        m.ln(),
        (a == 1) as u8 as f64,
        (a == 2) as u8 as f64,
        (a == 3) as u8 as f64,
        (r.gender == Gender::Female) as u8 as f64,
    ])
}

fn diagnostics(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, names: &[String], spec: ModelSpec) -> Diagnostics {
    let resid = y - x * beta;
    let rss = resid.norm_squared();
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let negative_coefficients = names
        .iter()
        .zip(beta.iter())
        .filter(|(n, b)| **b < 0.0 && (spec != ModelSpec::M5 || n.as_str() == "log_M"))
        .map(|(n, _)| n.clone())
        .collect();
    Diagnostics {
        n_obs: y.len(),
        rss,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN },
        max_abs_residual: resid.amax(),
        negative_coefficients,
    }
}

/// Fit `spec` on the table's units, optionally leaving one out.
pub fn fit_model_excluding(
    table: &RegressionTable,
    spec: ModelSpec,
    opts: &FitOptions,
    exclude: Option<GeoUnit>,
) -> Result<FittedModel> {
    let units: Vec<GeoUnit> = table.units.iter().copied().filter(|u| Some(*u) != exclude).collect();
    let mut names = spec.unit_columns();
    let (xrows, y): (Vec<Vec<f64>>, Vec<f64>) = if spec == ModelSpec::M5 {
        units
            .iter()
            .flat_map(|u| table.unit_rows(*u))
            .filter(|r| r.n > 0)
            .filter_map(|r| cell_features(r, opts.log_offset).map(|f| (f, (r.n as f64).ln())))
            .unzip()
    } else {
        if opts.intercept {
            names.insert(0, "intercept".into());
        }
        units
            .iter()
            .filter(|u| !table.unit_rows(**u).is_empty())
            .map(|u| {
                let rows = table.unit_rows(*u);
                let mut f = unit_features(spec, rows);
                if opts.intercept {
                    f.insert(0, 1.0);
                }
                (f, rows.iter().map(|r| r.n as f64).sum::<f64>())
            })
            .unzip()
    };
    if y.is_empty() {
        return Err(Error::SingularDesign { columns: names });
    }
    let p = names.len();
    let x = DMatrix::from_row_iterator(y.len(), p, xrows.into_iter().flatten());
    let y = DVector::from_vec(y);
    let beta = least_squares(&x, &y, &names)?;
    let diagnostics = diagnostics(&x, &y, &beta, &names, spec);
    Ok(FittedModel {
        spec,
        coefficients: names.into_iter().zip(beta.iter().copied()).collect(),
        options: *opts,
        diagnostics,
    })
}

pub fn fit_model(table: &RegressionTable, spec: ModelSpec, opts: &FitOptions) -> Result<FittedModel> {
    fit_model_excluding(table, spec, opts, None)
}

/// Predict one unit's population from its retained rows.
pub fn predict_population(model: &FittedModel, rows: &[DesignRow]) -> Result<f64> {
    let geo = rows.first().map(|r| r.geo.to_string()).unwrap_or_else(|| "<empty>".into());
    let beta = model.values();
    if model.spec == ModelSpec::M5 {
        let mut total = 0.0;
        let mut used = 0;
        for r in rows {
            if let Some(f) = cell_features(r, model.options.log_offset) {
                total += f.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().exp();
                used += 1;
            }
        }
        if used == 0 {
            return Err(Error::UnpredictableUnit(geo));
        }
        return Ok(total);
    }
    if rows.is_empty() {
        return Err(Error::UnpredictableUnit(geo));
    }
    let mut f = unit_features(model.spec, rows);
    if model.options.intercept {
        f.insert(0, 1.0);
    }
    Ok(f.iter().zip(&beta).map(|(a, b)| a * b).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionEstimate {
    pub age: AgeBracket,
    pub gender: Gender,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "N")]
    pub n: u64,
    /// `None` when the census cell is empty.
    pub pi_hat: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

/// π̂(a, g) = Σ M / Σ N over every candidate row, with 95% Wilson intervals.
pub fn inclusion_probabilities(table: &RegressionTable) -> Vec<InclusionEstimate> {
    let mut acc = [(0u64, 0u64); N_CELLS];
    for r in table.rows.iter().chain(&table.dropped) {
        let c = &mut acc[cell_index(r.age, r.gender)];
        c.0 += r.m;
        c.1 += r.n;
    }
    acc.iter()
        .enumerate()
        .map(|(i, &(m, n))| {
            let (age, gender) = cell_from_index(i);
            let (pi_hat, ci_low, ci_high) = if n == 0 {
                (None, None, None)
            } else {
                let (lo, hi) = wilson(m.min(n), n, Z95);
                (Some(m as f64 / n as f64), Some(lo), Some(hi))
            };
            InclusionEstimate {
                age,
                gender,
                m,
                n,
                pi_hat,
                ci_low,
                ci_high,
            }
        })
        .collect()
}
