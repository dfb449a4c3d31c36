//! Reconstructs retweet cascades and monthly social networks from event logs,
//! scores users as source spreaders and brokers, labels stable versus temporal
//! influencers, and trains gradient-boosted classifiers that predict which
//! current influencers will stay influential.

pub mod artifacts;
pub mod error;
pub mod eval;
pub mod features;
pub mod fixtures;
pub mod graph;
pub mod ids;
pub mod ingest;
pub mod labeling;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod synth;
pub mod time;

pub use error::{Error, Result};
pub use ids::{TweetId, UserId};
pub use scoring::InfluenceKind;
pub use time::{MonthId, TimeWindow, WindowKind};
