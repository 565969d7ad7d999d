from .harness import (
    BenchConfig,
    BenchReport,
    BenchRow,
    CorpusInvalid,
    CorpusMismatch,
    DeltaReport,
    EmptyCorpus,
    compare_configs,
    evaluate_corpus,
    evaluate_instance,
    load_corpus,
    render_table,
)
from .runner import RunnerConfig, SandboxSetupError, TestResult, TestStatus, run_tests
from .scoring import LocalizationReport, score_localization

__all__ = [
    "BenchConfig", "BenchReport", "BenchRow", "CorpusInvalid", "CorpusMismatch", "DeltaReport",
    "EmptyCorpus", "LocalizationReport", "RunnerConfig", "SandboxSetupError", "TestResult",
    "TestStatus", "compare_configs", "evaluate_corpus", "evaluate_instance", "load_corpus",
    "render_table", "run_tests", "score_localization",
]
