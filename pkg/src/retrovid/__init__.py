"""Label-altering video transforms and everything needed to put them to work.

The package covers the full pipeline around an externally trained video
classifier: bit-exact clip transforms (time reversal, horizontal flip and
their composition) over explicit memory layouts, automatic discovery of
per-class label transforms from prediction logs, synthesis of augmented
and zero-shot dataset manifests, evaluation metrics, and the statistics
behind the forced-choice reversibility study.
"""

from .discovery import (
    ClassDiagnostic,
    DiscoveryConfig,
    DiscoveryReport,
    PredictionEntry,
    PredictionLog,
    ScoreCounts,
    affinity,
    class_recall,
    extract_transform,
    load_prediction_log,
    save_prediction_log,
    score_against_ground_truth,
    sweep,
    transfer_matrix,
)
from .errors import (
    ConfigurationError,
    EmptySplitError,
    IncompleteLogError,
    RetroError,
    UndefinedMetricError,
    ValidationError,
)
from .manifest import (
    ClassEntry,
    ClassTransformMap,
    DatasetManifest,
    EntryKind,
    VideoRecord,
    bundled_class_names,
    bundled_map,
    category_counts,
    equivariant,
    invariant,
    load_class_names,
    load_manifest,
    load_transform_map,
    novel,
    save_manifest,
    save_transform_map,
    validate_transform_map,
)
from .metrics import (
    BreakdownRow,
    ConfusionMatrix,
    breakdown,
    breakdown_to_csv,
    confusion,
    topk_accuracy,
)
from .perception import (
    ClassTally,
    PairChoice,
    SubmissionRecord,
    Verdict,
    classify_reversibility,
    qc_filter,
    reversibility_bounds,
    tally,
)
from .rten import read_rten, tensor_from_bytes, tensor_to_bytes, write_rten
from .synthesis import (
    AugmentationSampler,
    SampledExample,
    SyntheticExample,
    ZeroShotSplit,
    build_augmented,
    build_zero_shot_subset,
    load_synthetic_manifest,
    save_synthetic_manifest,
)
from .tensor import (
    FrameTensor,
    Layout,
    TransformId,
    apply_transform,
    convert_layout,
    horizontal_flip,
    misinterpret_layout,
    time_reverse,
)

__version__ = "0.1.0"
