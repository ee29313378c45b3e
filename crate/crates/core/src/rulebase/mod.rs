//! Rules, their text form, co-occurrence priors, perturbed Bernoulli rule
//! generators, candidate harvesting and the evaluate-and-update pass.

mod base;
mod dsl;
mod generator;
mod prior;
mod rule;

pub use base::{
    aggregate_rules, harvest_annotation_rules, update_rules, Candidate, RuleBase, RuleDiff, Scored,
};
pub use dsl::{
    load_rule_file, parse_rule, parse_rule_file, render_rule_file, save_rule_file, serialize_rule,
    sidecar_path, LineMeta,
};
pub use generator::{
    bernoulli_kl, default_betas, generate_candidates, perturbed_generator, sample_rules, Branch,
    GeneratorProfile,
};
pub use prior::{cooccurrence_prior, min_max, npmi, npmi_value, NPMI_EPSILON};
pub use rule::{Provenance, Rule};
