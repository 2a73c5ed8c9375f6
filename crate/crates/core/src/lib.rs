//! Android malware detection by static taint analysis plus runtime
//! monitoring of the suspect processes it finds.
//!
//! [`ir`] parses apps, [`taint`] finds source-to-sink flows, [`features`]
//! turns them into category bits and suspects, [`monitor`] replays event
//! traces into labelled instances, and [`bayesnet`] with [`evaluation`]
//! learns and scores the classifier. [`pipeline`] strings the stages
//! together.

pub mod arff;
pub mod bayesnet;
pub mod catalog;
pub mod evaluation;
pub mod features;
pub mod ir;
pub mod monitor;
pub mod pipeline;
pub mod taint;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/app-model.md")]
mod book_app_model {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/taint-analysis.md")]
mod book_taint_analysis {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/categories.md")]
mod book_categories {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/monitoring.md")]
mod book_monitoring {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/arff.md")]
mod book_arff {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/bayesian-networks.md")]
mod book_bayesian_networks {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/evaluation.md")]
mod book_evaluation {}
