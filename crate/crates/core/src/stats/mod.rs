//! Population statistics: one-way ANOVA with its F-distribution p-value,
//! and box-plot summaries.

pub mod anova;
pub mod beta;
pub mod sum;
pub mod summary;

pub use anova::{anova_by_level, anova_oneway, AnovaFlag, AnovaResult, Factor, OneWay, DEFAULT_ALPHA};
pub use beta::{f_cdf, f_sf, ln_beta, ln_gamma, reg_inc_beta};
pub use summary::{box_summary, BoxSummary};
