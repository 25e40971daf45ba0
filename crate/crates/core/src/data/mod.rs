//! Dataset records, the HDF5 container, synthetic data and split plans.

pub mod container;
pub mod record;
pub mod splits;
pub mod synthetic;

pub use container::{list_videos, load_all, load_video_record, write_records, LoadOptions};
pub use record::{labels_to_original, pick_spans, segments_to_original, VideoRecord};
pub use splits::{make_splits, Fold, SplitPlan, SplitPolicy};
pub use synthetic::{make_synthetic_record, SyntheticSpec};
