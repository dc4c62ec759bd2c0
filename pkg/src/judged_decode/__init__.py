"""Draft-and-judge token sampling engine with exact correctness oracles."""

from .dist import AllZeroMass, Distribution, SparseDistribution
from .kernel import StepOutcome, accept_count
from .models import (
    BackendUnavailable,
    Context,
    ContextTooLong,
    NGramModel,
    PreferenceAssignment,
    PreferenceDescription,
    PrefixedSource,
    ProbabilitySource,
    RemoteSource,
    SequenceSource,
    TableModel,
    build_prefixed_context,
    load_model,
    split_round_robin,
)
from .oracle import EnumerationReport, EnumerationTooLarge, MonteCarloReport
from .judge_decode import GenerationResult, JudgeConfig, JudgmentStepTrace, generate, judgment_step, lambda_sweep
from .spec_decode import SpecDecodeConfig, SpecStepTrace, spec_decode_generate, spec_decode_step

__version__ = "0.1.0"
