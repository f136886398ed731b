use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use ctrlbot_core::control::{RoutePath, RoutingTrace};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rater {
    ClientEditor,
    EndUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    Bad,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub session_id: String,
    pub turn_id: u64,
    pub rater: Rater,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub good: usize,
    pub bad: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticsSummary {
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
    pub turns: usize,
    pub paths: BTreeMap<RoutePath, usize>,
    pub hedged: usize,
    pub refusals: usize,
    pub grounding_violations: usize,
    pub ratings: BTreeMap<Rater, VerdictCounts>,
}

fn in_window(t: DateTime<Utc>, from: Option<DateTime<Utc>>, to: Option<DateTime<Utc>>) -> bool {
    from.is_none_or(|f| t >= f) && to.is_none_or(|e| t < e)
}

/// Counts over traces and ratings with timestamps in `[from, to)`.
pub fn summarize(
    traces: &[RoutingTrace],
    ratings: &[RatingRecord],
    from: Option<DateTime<Utc>>,
    to: Option<DateTime<Utc>>,
) -> AnalyticsSummary {
    let mut paths: BTreeMap<RoutePath, usize> = RoutePath::ALL.iter().map(|p| (*p, 0)).collect();
    let mut s = AnalyticsSummary {
        from,
        to,
        turns: 0,
        paths: BTreeMap::new(),
        hedged: 0,
        refusals: 0,
        grounding_violations: 0,
        ratings: [(Rater::ClientEditor, VerdictCounts::default()), (Rater::EndUser, VerdictCounts::default())].into(),
    };
    for t in traces.iter().filter(|t| in_window(t.timestamp, from, to)) {
        s.turns += 1;
        *paths.entry(t.path).or_default() += 1;
        s.hedged += usize::from(t.hedged);
        s.refusals += usize::from(t.path == RoutePath::Refusal);
        s.grounding_violations += usize::from(t.grounding.as_ref().is_some_and(|g| !g.grounded));
    }
    s.paths = paths;
    for r in ratings.iter().filter(|r| in_window(r.timestamp, from, to)) {
        let c = s.ratings.entry(r.rater).or_default();
        match r.verdict {
            Verdict::Good => c.good += 1,
            Verdict::Bad => c.bad += 1,
        }
    }
    s
}
