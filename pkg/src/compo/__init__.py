"""Multi-component text-to-image evaluation: components-inclusion scoring,
composite dataset construction, and distribution metrics."""

from .analysis import (
    BiasReport,
    ChiSquaredResult,
    ContingencyTable,
    bias_ratios,
    chi_squared_test,
    regularized_gamma_q,
    sequence_invariance_test,
)
from .errors import CompoError
from .lookup import LookupTable, build_lookup, count_components
from .mcid import CorpusIndex, Layout, build_dataset, compose, load_corpus, plan_layout
from .metrics import (
    GaussianStats,
    fit_gaussian,
    frechet_distance,
    inception_score,
    sqrtm_psd,
)
from .prompts import (
    Grammar,
    PromptSpec,
    render_prompt,
    sample_prompts,
    shuffle_prompt,
)
from .scoring import (
    CisResult,
    ScoreRecord,
    aggregate_cis,
    classify_subsets,
    evaluate,
    score_image,
)
from .vocabulary import ComponentLabel, Vocabulary, article_for, load_vocabulary

__version__ = "0.1.0"

__all__ = [
    "BiasReport",
    "ChiSquaredResult",
    "CisResult",
    "CompoError",
    "ComponentLabel",
    "ContingencyTable",
    "CorpusIndex",
    "GaussianStats",
    "Grammar",
    "Layout",
    "LookupTable",
    "PromptSpec",
    "ScoreRecord",
    "Vocabulary",
    "aggregate_cis",
    "article_for",
    "bias_ratios",
    "build_dataset",
    "build_lookup",
    "chi_squared_test",
    "classify_subsets",
    "compose",
    "count_components",
    "evaluate",
    "fit_gaussian",
    "frechet_distance",
    "inception_score",
    "load_corpus",
    "load_vocabulary",
    "plan_layout",
    "regularized_gamma_q",
    "render_prompt",
    "sample_prompts",
    "score_image",
    "sequence_invariance_test",
    "shuffle_prompt",
    "sqrtm_psd",
    "__version__",
]
