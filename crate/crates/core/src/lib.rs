//! Statement-classification toolkit for LaTeXML-flavoured scholarly HTML.
//!
//! The pipeline runs in stages:
//!
//! * [`taxonomy`] holds the raw statement labels, their aliases and the
//!   grouping of raw labels into nest classes.
//! * [`html`] and [`ingest`] parse documents and pull out the first logical
//!   paragraph of every labelled statement.
//! * [`math`] turns presentation MathML into font-aware lexemes.
//! * [`normalize`] and [`lang`] produce the plain-text token stream and
//!   apply the quality filters.
//! * [`dataset`] writes the content-addressed dataset tree, computes
//!   statistics and splits.
//! * [`embed`], [`classify`] and [`eval`] cover the shallow baselines and
//!   their scoring.

pub mod classify;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod eval;
pub mod html;
pub mod ingest;
pub mod lang;
pub mod math;
pub mod normalize;
pub mod pipeline;
pub mod taxonomy;

pub use error::{Error, Result};
pub use taxonomy::{NestLabel, StatementLabel, Taxonomy};
