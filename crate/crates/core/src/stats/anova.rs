//! One-way analysis of variance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::beta::f_sf;
use super::sum::{neumaier_sum, sorted_sum};
use crate::error::{Error, Result};
use crate::serde_ext::f64_ext;

/// Learner attribute that defines the populations being compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Sex,
    Group,
    HtmlLevel,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Sex, Factor::Group, Factor::HtmlLevel];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Sex => "sex",
            Factor::Group => "group",
            Factor::HtmlLevel => "html_level",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Factor {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Factor::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| format!("unknown factor {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnovaFlag {
    Ok,
    /// No within-group variance but the means differ: F = inf, p = 0.
    InfiniteF,
    /// No variance at all: reported as F = 0, p = 1.
    Undefined,
}

/// Raw one-way ANOVA numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneWay {
    pub k: usize,
    pub n: usize,
    pub ssb: f64,
    pub ssw: f64,
    #[serde(with = "f64_ext")]
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
    pub flag: AnovaFlag,
}

/// One-way ANOVA over `groups`.
///
/// Each group is summed in sorted order with compensation, so permuting
/// observations within groups leaves the result bit-identical.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<OneWay> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::Domain(format!("ANOVA needs at least 2 groups, got {k}")));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Domain(format!("ANOVA group {i} is empty")));
    }
    if groups.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Domain("ANOVA observations must be finite".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    if n <= k {
        return Err(Error::Domain(format!("ANOVA needs N > k (N={n}, k={k})")));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = sorted_sum(&all) / n as f64;
    let means: Vec<f64> = groups.iter().map(|g| sorted_sum(g) / g.len() as f64).collect();
    let mut between: Vec<f64> = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .collect();
    between.sort_by(f64::total_cmp);
    let ssb = neumaier_sum(between);
    let mut within: Vec<f64> = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| {
            let sq: Vec<f64> = g.iter().map(|x| (x - m).powi(2)).collect();
            sorted_sum(&sq)
        })
        .collect();
    within.sort_by(f64::total_cmp);
    let ssw = neumaier_sum(within);

    let df1 = k - 1;
    let df2 = n - k;
    let (f, p_value, flag) = if ssw == 0.0 && ssb == 0.0 {
        (0.0, 1.0, AnovaFlag::Undefined)
    } else if ssw == 0.0 {
        (f64::INFINITY, 0.0, AnovaFlag::InfiniteF)
    } else {
        let f = (ssb / df1 as f64) / (ssw / df2 as f64);
        (f, f_sf(f, df1 as f64, df2 as f64)?, AnovaFlag::Ok)
    };
    Ok(OneWay {
        k,
        n,
        ssb,
        ssw,
        f,
        df1,
        df2,
        p_value,
        flag,
    })
}

/// ANOVA of one attention parameter across the levels of one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub parameter: String,
    pub factor: Factor,
    /// Scope the observations were drawn from ("session" or an activity).
    pub scope: String,
    pub levels: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub test: OneWay,
    pub alpha: f64,
    pub significant: bool,
}

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Group `(level, value)` observations by level (sorted) and test them.
pub fn anova_by_level(
    parameter: &str,
    factor: Factor,
    scope: &str,
    observations: &[(String, f64)],
    alpha: f64,
) -> Result<AnovaResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("significance level {alpha} outside (0, 1)")));
    }
    let mut by_level: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    for (level, v) in observations {
        by_level.entry(level.as_str()).or_default().push(*v);
    }
    let levels: Vec<String> = by_level.keys().map(|s| s.to_string()).collect();
    let groups: Vec<Vec<f64>> = by_level.into_values().collect();
    let test = anova_oneway(&groups)?;
    Ok(AnovaResult {
        parameter: parameter.to_string(),
        factor,
        scope: scope.to_string(),
        group_sizes: groups.iter().map(Vec::len).collect(),
        levels,
        significant: test.p_value < alpha,
        alpha,
        test,
    })
}
