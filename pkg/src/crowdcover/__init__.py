"""Crowd-efficient coverage auditing for unlabeled item collections.

Decides, with as few human (or simulated-human) tasks as possible, whether
demographic groups are represented at least tau times in a collection, and
extracts every maximal uncovered pattern over intersectional attributes.
"""

from .aggregation import (
    LabeledPool,
    MultipleCoverageReport,
    SuperGroup,
    aggregate_groups,
    label_samples,
    multiple_coverage,
)
from .classifier import (
    ClassifierCoverageReport,
    PredictionSet,
    classifier_coverage,
    label_verify,
    partition_verify,
    probe_precision,
)
from .collection import Item, ItemCollection, true_count
from .engine import (
    GroupCoverageRun,
    SearchNode,
    base_coverage,
    group_coverage,
    reported_upper_bound,
    task_bound,
)
from .errors import (
    AnswerSourceError,
    ConfigError,
    CoverageRunError,
    CrowdCoverError,
    DuplicateTaskError,
    PartialLabelError,
    TranscriptMissError,
    UnknownItemError,
)
from .harness import ExperimentSpec, fig5_collection, generate, sweep
from .lattice import (
    IntersectionalReport,
    MupReport,
    PatternLattice,
    PatternStatus,
    children_along,
    combine_bottom_up,
    intersectional_coverage,
)
from .schema import Attribute, AttributeSchema, Group, Pattern, match
from .sources import (
    AnswerSource,
    SimulatedCrowd,
    TranscriptRecorder,
    TranscriptReplaySource,
)
from .tasks import CoverageVerdict, QueryKind, QueryTask, TraceEntry, point_task, set_task

__version__ = "0.1.0"

__all__ = [
    "AnswerSource",
    "AnswerSourceError",
    "Attribute",
    "AttributeSchema",
    "ClassifierCoverageReport",
    "ConfigError",
    "CoverageRunError",
    "CoverageVerdict",
    "CrowdCoverError",
    "DuplicateTaskError",
    "ExperimentSpec",
    "Group",
    "GroupCoverageRun",
    "IntersectionalReport",
    "Item",
    "ItemCollection",
    "LabeledPool",
    "MultipleCoverageReport",
    "MupReport",
    "PartialLabelError",
    "Pattern",
    "PatternLattice",
    "PatternStatus",
    "PredictionSet",
    "QueryKind",
    "QueryTask",
    "SearchNode",
    "SimulatedCrowd",
    "SuperGroup",
    "TraceEntry",
    "TranscriptMissError",
    "TranscriptRecorder",
    "TranscriptReplaySource",
    "UnknownItemError",
    "aggregate_groups",
    "base_coverage",
    "children_along",
    "classifier_coverage",
    "combine_bottom_up",
    "fig5_collection",
    "generate",
    "group_coverage",
    "intersectional_coverage",
    "label_samples",
    "label_verify",
    "match",
    "multiple_coverage",
    "partition_verify",
    "point_task",
    "probe_precision",
    "reported_upper_bound",
    "set_task",
    "sweep",
    "task_bound",
    "true_count",
]
