"""priorboost: multi-target gradient boosting on top of prior predictions.

The additive expansion for each target starts from the prior model's own
prediction of that target instead of a fitted constant; boosting stages then
learn only the correction. Inbuilt model selection falls back to the prior
whenever boosting does not beat it under cross-validation.
"""

from .core import (
    Dataset,
    Loss,
    SplitSpec,
    TargetSlice,
    average_mae,
    dataset_fingerprint,
    load_dataset_csv,
    loss_value,
    mae,
    negative_gradient,
    pairwise_correlations,
    save_dataset_csv,
    split,
)
from .learners import (
    LinearModel,
    RegressionTree,
    StackingParams,
    StackingRegressor,
    TreeParams,
    fit_linear,
    fit_stacking,
    fit_tree,
    predict_tree,
)
from .boosting import (
    AdditiveExpansion,
    BoostParams,
    CvReport,
    Stage,
    apply_boost_config,
    base_boost,
    base_boost_cv,
    line_search,
    make_boost_fit_factory,
    predict_expansion,
)
from .multitarget import (
    EvaluationReport,
    MultiTargetModel,
    evaluate_multi,
    fit_multi,
    load_model,
    predict_multi,
    save_model,
)
from .selection import (
    CvResult,
    FoldPlan,
    Grid,
    LearningCurvePoint,
    NestedCvResult,
    cross_validate,
    learning_curve,
    make_folds,
    nested_cv,
)
from .explain import (
    Attribution,
    ImportanceReport,
    SummaryData,
    shapley_exact,
    shapley_sampled,
    summary_data,
)
from .simdata import (
    BiasData,
    BiasScenario,
    ChainParams,
    ChainSampler,
    ControlModelProxy,
    Distortion,
    EigensolverError,
    generate_bias_dataset,
    generate_dataset,
    spectrum,
    tridiag_eigensystem,
)

__version__ = "0.1.0"
