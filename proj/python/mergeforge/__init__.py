"""Model merging toolkit: task vectors, task arithmetic, DARE, TIES, learned
per-layer merge weights, hierarchical merging, and an analytic cost model."""

from mergeforge._core import (  # noqa: F401
    ConfigError,
    CostConfig,
    CostInput,
    DatasetSplit,
    EvalResult,
    Example,
    FitConfig,
    FitResult,
    IoError,
    LayerDescriptor,
    LayerStats,
    MergeWeights,
    ModelSpec,
    NamedArray,
    NamedArrayD,
    NumericError,
    OptimizerConfig,
    ParameterSet,
    StructuralError,
    SuiteConfig,
    TaskSuite,
    TaskVector,
    TrainConfig,
    TrainError,
    apply_task_vector,
    build_plan_by_similarity,
    compute_task_vector,
    dare_sparsify,
    evaluate,
    execute_plan,
    fit_supermerge,
    flops_per_epoch,
    generate_suite,
    init_params,
    layer_stats,
    load_dataset_split,
    load_params,
    load_task_vector,
    materialize,
    merge_dare,
    merge_task_arithmetic,
    merge_ties,
    merge_weight_count,
    peak_memory_bytes,
    run_benchmark,
    save_dataset_split,
    save_params,
    save_task_vector,
    split_validation,
    ties_merge_vector,
    train,
    zero_params,
)

__version__ = "0.1.0"
