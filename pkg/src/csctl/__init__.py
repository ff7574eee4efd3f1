"""Convolutional sparse coding transfer learning toolkit.

Learn convolution kernel banks from unlabeled blocked feature data,
encode labeled targets into sparse maps, select rows/features with
Relief weighting and evaluate with a linear SVM under
leave-one-subject-out cross-validation, including a seeded kernel-bank
search.
"""

__version__ = "0.1.0"

from .augment import (  # noqa: F401
    NoiseSpec,
    RawSignal,
    SourceDomain,
    build_source_domain,
    expand_dataset,
    extract_toy_features,
    mix_noise_at_snr,
)
from .ops import (  # noqa: F401
    KernelBank,
    apply_inv_lemma_coding,
    apply_inv_lemma_dict,
    conv2_circular,
    csc_objective,
    pad_kernel,
    project_kernel,
    soft_threshold,
    support_mask,
)
from .pipeline import (  # noqa: F401
    FeatureTable,
    TargetDataset,
    encode_target,
    local_normalize_block,
    normalize_table,
    reshape_expand,
    select_feature_map,
)
from .relief import ReliefParams, SelectedTable, WeightVector, relief_weights, select_top_q, ss_ck  # noqa: F401
from .search import (  # noqa: F401
    Report,
    SearchSpace,
    TrialResult,
    best_trial,
    default_q_grid,
    run_pipeline,
    search_optimal_kernel,
    split_kernel_sets,
    target_as_source,
)
from .solver import (  # noqa: F401
    CodingState,
    DictState,
    SolverConfig,
    code_step,
    code_step_plain,
    dict_step,
    dict_step_plain,
    init_kernel_bank,
    learn_kernels,
    load_kernel_bank,
    save_kernel_bank,
    solve_coding,
)
from .svm import LinearModel, Metrics, confusion_metrics, loso_cv, predict, train_linear_svm  # noqa: F401
