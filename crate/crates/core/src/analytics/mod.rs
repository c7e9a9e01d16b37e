//! Aggregation of paragraph scores by publisher, year and U.S. state, plus
//! pairwise publisher tests and report emission.

pub mod emit;
pub mod gazetteer;
pub mod tables;
pub mod welch;

pub use emit::{emit_report, AnalyticsTables, Formats};
pub use gazetteer::{tag_state, Gazetteer, MatchSource, StateTag};
pub use tables::{
    pairwise_publisher_test, publisher_year_table, state_year_table, JoinGap, PairwiseTest, PublisherYearCell,
    StateYearCell, StateYearTable,
};

use crate::corpus::Article;
use crate::detection::AssessmentRecord;

/// Computes every analytics table for one assessment set.
pub fn analyze(
    records: &[AssessmentRecord],
    articles: &[Article],
    gazetteer: &Gazetteer,
) -> Result<AnalyticsTables, JoinGap> {
    let state_tags: Vec<StateTag> = articles.iter().map(|a| tag_state(a, gazetteer)).collect();
    Ok(AnalyticsTables {
        publisher_year: publisher_year_table(records, articles)?,
        state_year: state_year_table(records, articles, &state_tags)?,
        pairwise_tests: pairwise_publisher_test(records),
        state_tags,
    })
}
