//! Learned `NOT`/`OR` operators, the truth discriminator, rule compilation
//! to clause form, the logic-law regularizer and the expression probes.

mod expressions;
mod laws;
mod ops;
mod rules;

pub use expressions::{
    ambient_samples, ambiguous_fraction, expression_accuracy, truth_pools, AccuracyTable,
    Expression, ExpressionScore,
};
pub use laws::{law_terms, logic_law_loss, logic_law_loss_rows, LawJudgements};
pub use ops::LogicOps;
pub use rules::{
    compile_rule, compile_rule_sized, eval_rule, fold_rules, CompiledRule, FoldOutput, RuleTrace,
    Slot,
};
