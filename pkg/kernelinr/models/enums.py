from enum import Enum


class OrderingStrategy(str, Enum):
    IDENTITY = "identity"
    UOS = "uos"
    MOS = "mos"
    COSINE_BASELINE = "cosine_baseline"


class StartRule(str, Enum):
    SLOT_ZERO = "slot_zero"
    MAX_NORM = "max_norm"


class TieRule(str, Enum):
    LOWEST_ORIGINAL_INDEX = "lowest_original_index"


class Refinement(str, Enum):
    NONE = "none"
    TWO_OPT = "two_opt"


class DistanceMetric(str, Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


class EncoderKind(str, Enum):
    NONE = "none"
    PE = "pe"
    RFF = "rff"


class SigmaMode(str, Enum):
    GLOBAL_FIXED = "global_fixed"
    PER_LAYER_ADAPTIVE = "per_layer_adaptive"


class EigSolver(str, Enum):
    JACOBI = "jacobi"
    LAPACK = "lapack"


class TargetTag(str, Enum):
    ORIGINAL = "original"
    SMOOTHED = "smoothed"


class LayerKind(str, Enum):
    CONV = "conv"
    RELU = "relu"
    AVGPOOL = "avgpool"
    LINEAR = "linear"
