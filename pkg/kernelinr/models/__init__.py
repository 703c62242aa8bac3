from kernelinr.models.enums import (
    OrderingStrategy,
    StartRule,
    TieRule,
    Refinement,
    DistanceMetric,
    EncoderKind,
    SigmaMode,
    EigSolver,
    TargetTag,
    LayerKind,
)
from kernelinr.models.report import (
    ValidationViolation,
    ValidationResult,
    RunManifest,
    CellResult,
    TrendCheck,
    ReproSummary,
)
from kernelinr.models.weights import (
    WeightBundle,
    KernelCoord,
    PermutationTable,
    BundleMeta,
)
from kernelinr.models.encoding import (
    PeConfig,
    RffMap,
    SigmaSchedule,
    CoordinateEncoder,
)
from kernelinr.models.inr import (
    InrModel,
    Gradients,
    AdamState,
    GradCheckReport,
    LayerStats,
    InrCheckpoint,
)
from kernelinr.models.analysis import (
    OrderingConfig,
    SmoothnessReport,
    LayerPermutationReport,
    NtkReport,
    SpectrumReport,
    SpectralRow,
)
from kernelinr.models.training import (
    RffSettings,
    SigmaSettings,
    AdamSettings,
    OrderingSettings,
    TrainConfig,
    EvalRecord,
    TrainHistory,
    SigmaSweepRecord,
)
from kernelinr.models.network import (
    ConvLayer,
    ReluLayer,
    AvgPoolLayer,
    LinearLayer,
    NetSpec,
    LabeledDataset,
)
