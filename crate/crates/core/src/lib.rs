//! Induces compact fraud-rule sets from decision-tree models: grow a tree
//! model on one data subset, turn its leaves into candidate rules, then
//! greedily pick a small rule set that stays inside a false-positive-rate or
//! alert-rate budget, topping the budget up exactly with one randomized rule.

pub mod data;
pub mod error;
pub mod eval;
pub mod rules;
pub mod selection;
pub mod trees;

pub use error::{Error, Result};
