//! Averaging normal form around a periodic frequency.
//!
//! The pieces are the exact resonant average and homological generator
//! ([`resonant_average`], [`homological_generator`]), Lie series for the
//! symplectic change of variables, one improvement step with its quantitative
//! bounds ([`one_step`]), the `m`-fold iteration ([`iterate_normal_form`]),
//! the explicit constants of the small-κ theorem ([`parameter_recipe`]) and
//! the inequality checker ([`check_conditions`]).

mod averaging;
mod conditions;
mod flow;
mod lie;
mod recipe;
mod step;

pub use averaging::{homological_generator, resonant_average};
pub use conditions::{check_conditions, largest_passing_theta, recipe_condition_inputs, ConditionInputs, ConditionLine, ConditionReport, LemmaId, Relation, LE_SLACK};
pub use flow::{exact_flow_h, pull_back_by_rotation, quadrature_average, QuadratureAverage};
pub use lie::{lie_increment, lie_series, lie_transform, lie_weighted_increment, MAX_SERIES_TERMS};
pub use recipe::{
    check_admissible_a, exponents_from_a, kappa_for, max_admissible_a, parameter_recipe, variant_r3, Exponents4,
    Recipe, RecipeInputs,
};
pub use step::{
    decomposition_residual, iterate_normal_form, one_step, AveragingContext, NormalFormResult, StepReport,
    StepResult,
};
