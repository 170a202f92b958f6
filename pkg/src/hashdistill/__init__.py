"""Compact hashing models: feature distillation from a frozen teacher,
CSQ/DCH retrieval fine-tuning, analytic counting, and Hamming-space mAP."""

from .counting import CountReport, count_flops, count_parameters, enumerate_parameters
from .errors import (
    CenterGenerationError, ConfigError, DataError, HashDistillError,
    MissingArtifactError, ShapeCollapseError,
)
from .experiment import (
    ExperimentConfig, MetricsReport, report_tables, run_distill,
    run_encode_and_evaluate, run_finetune,
)
from .finetune import FinetuneConfig, finetune_retrieval
from .hash_centers import HashCenterSet, generate_hash_centers
from .hash_losses import csq_loss, dch_loss, pairwise_similarity
from .kd import DistillConfig, FeatureBatch, extract_features, kd_loss, train_kd
from .model_spec import BlockSpec, ModelSpec, TensorShape, shape_trace
from .retrieval import (
    CodeMatrix, RankedList, average_precision_at_n, binarize, hamming_rank,
    map_at_n,
)
from .splits import DatasetSplit, make_cifar10_split, make_nuswide_split
from .students import attach_hash_head, build_student, student_spec
from .synthetic import SyntheticSpec, make_synthetic

__version__ = "0.1.0"
