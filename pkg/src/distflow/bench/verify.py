"""Cross-mode and oracle equivalence check for one config."""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from ..console import log
from ..runtime.datapath import Mode
from ..runtime.trace import RecordTrace, TraceDiff
from .models import RunConfig
from .oracle import run_oracle
from .runner import run_experiment


class Verdict(str, Enum):
    EQUAL = "EQUAL"
    MISMATCH = "MISMATCH"


class TraceCheck(BaseModel):
    """One pairwise comparison of record traces."""

    left: str
    right: str
    compared: int = 0
    mismatches: int = 0
    missing_keys: int = 0
    duplicates: int = 0
    detail: str = ""

    @property
    def equal(self) -> bool:
        return not (self.mismatches or self.missing_keys or self.duplicates or self.detail)


class VerifyReport(BaseModel):
    fingerprint: str
    scale: str
    iterations: int
    verdict: Verdict = Verdict.EQUAL
    checks: List[TraceCheck] = Field(default_factory=list)
    failures: List[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict == Verdict.EQUAL


def _check(left_name: str, left: RecordTrace, right_name: str, right: RecordTrace) -> TraceCheck:
    diff = TraceDiff(left, right)
    return TraceCheck(
        left=left_name,
        right=right_name,
        compared=diff.compared,
        mismatches=len(diff.mismatches),
        missing_keys=len(diff.missing_keys),
        duplicates=len(diff.duplicates),
        detail=diff.describe() or "",
    )


def _version_check(name: str, per_rank: Dict[int, Dict[str, int]], expected: Dict[str, int]) -> Optional[str]:
    wrong = sorted(rank for rank, versions in per_rank.items() if versions != expected)
    if wrong:
        return f"{name}: model versions on ranks {wrong} differ from the oracle's {expected}"
    return None


def verify(
    config: RunConfig,
    iterations: Optional[int] = None,
    seed_override: Optional[int] = None,
) -> VerifyReport:
    """Run distributed mode, central mode and the oracle, then compare traces record by record.

    `seed_override` replaces the seed of the central run only, as a negative
    control. Warmup iterations are not run; every iteration is compared.
    """
    iterations = iterations or config.iterations
    base = config.model_copy(update={"record_trace": True, "warmup_iterations": 0, "iterations": iterations})
    distributed = base.model_copy(update={"mode": Mode.DISTRIBUTED})
    central = base.model_copy(update={"mode": Mode.CENTRAL})
    if seed_override is not None:
        central = central.model_copy(update={"seed": seed_override})

    report = VerifyReport(fingerprint=base.fingerprint(), scale=base.scale, iterations=iterations)
    oracle = run_oracle(base, iterations=iterations)
    traces: Dict[str, RecordTrace] = {"oracle": oracle.trace}

    for name, run_config in ((Mode.DISTRIBUTED.value, distributed), (Mode.CENTRAL.value, central)):
        log("runner", f"verify: running {name} mode at {base.scale} for {iterations} iterations")
        result = run_experiment(run_config)
        if not result.ok:
            report.failures.append(f"{name}: {result.summary.error}")
            continue
        traces[name] = result.outcome.merged_trace()
        problem = _version_check(name, result.outcome.model_versions, oracle.model_versions)
        if problem:
            report.failures.append(problem)

    names = [name for name in (Mode.DISTRIBUTED.value, Mode.CENTRAL.value) if name in traces]
    for name in names:
        report.checks.append(_check(name, traces[name], "oracle", traces["oracle"]))
    if len(names) == 2:
        report.checks.append(_check(names[0], traces[names[0]], names[1], traces[names[1]]))

    if report.failures or not all(check.equal for check in report.checks):
        report.verdict = Verdict.MISMATCH
    return report
