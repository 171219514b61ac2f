//! Tree-based supervised learners: a decision tree, bagged and extremely
//! randomized forests, and softmax gradient-boosted trees.

mod ensemble;
mod hist;
mod space;
mod tree;

pub use ensemble::{
    fit, forest_train, gbdt_train, tree_train, EnsembleModel, LearnerKind, MaxFeatures,
    TreeParams, Variant,
};
pub use space::{learner_space, params_from_assignment, params_to_assignment};
pub use tree::{weighted_gini, Node, Tree};
