//! Engine behind a self-hosted personalized e-magazine.
//!
//! The crate is split along the data flow:
//!
//! - [`ingest`] fetches RSS sources, scrapes item descriptions into text,
//!   links and media URLs, classifies them into the [`taxonomy`] and stores
//!   them deduplicated.
//! - [`interest`] keeps each user's weighted keywords and their High/Mid/Low
//!   tiers, driven by profile imports, behavior events and manual settings.
//! - [`recommender`] builds the user × keyword matrix, factors it with an
//!   in-house truncated SVD and recommends keywords held by similar users.
//! - [`magazine`] ranks stored content against a user's High-tier keywords
//!   and serves search, saved items, ratings and share payloads.
//! - [`store`] is the embedded write-ahead-logged store everything persists to.
//! - [`engine`] ties the modules together behind one service facade that the
//!   HTTP API and the CLI drive.

pub mod config;
pub mod engine;
pub mod html;
pub mod ingest;
pub mod interest;
pub mod magazine;
pub mod recommender;
pub mod store;
pub mod taxonomy;
pub mod text;

pub use config::EngineConfig;
pub use engine::{Clock, Engine, EngineError, FixedClock, SystemClock};
pub use store::Store;
pub use taxonomy::Taxonomy;
