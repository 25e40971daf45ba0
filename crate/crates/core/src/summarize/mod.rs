//! From frame scores to a budgeted summary: segmentation, segment scoring and selection.

pub mod knapsack;
pub mod kts;
pub mod summary;

pub use knapsack::knapsack_select;
pub use kts::{change_points_to_segments, kts_fixed, kts_penalty, kts_segment, KtsOptions, KtsResult, Scatter};
pub use summary::{
    budget_capacity, build_summary, frame_scores_to_original, record_segments, run_lengths, shot_scores,
    summarize_record, summarize_segments, summary_json, Summary, SummaryOptions,
};
