"""Run context for persisting experiment state under the data directory."""

import json
import shutil
import uuid
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from ..config import get_config


class RunKind(str, Enum):
    """CLI command that created the run."""
    RUN = "run"
    SWEEP = "sweep"
    VERIFY = "verify"


class RunPhase(str, Enum):
    """Run phases for experiment execution."""
    CREATED = "created"
    PLANNED = "planned"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class RunStatus(BaseModel):
    """Phase tracking for one run."""

    phase: RunPhase = RunPhase.CREATED
    created_at: datetime = Field(default_factory=datetime.now)
    updated_at: datetime = Field(default_factory=datetime.now)

    # Error tracking
    errors: List[str] = Field(default_factory=list)

    def update_phase(self, new_phase: RunPhase) -> None:
        """Update the current phase and timestamp."""
        self.phase = new_phase
        self.updated_at = datetime.now()

    def add_error(self, error: str) -> None:
        """Add an error to the tracking list."""
        self.errors.append(f"{datetime.now().isoformat()}: {error}")


class RunContext(BaseModel):
    """Complete context for one experiment with a UUID-based directory."""

    # Core identifiers
    run_id: str = Field(default_factory=lambda: str(uuid.uuid4()))
    name: str
    kind: RunKind = RunKind.RUN

    run_dir: Path

    # Configuration snapshot and status
    config: Dict[str, Any] = Field(default_factory=dict)
    fingerprint: str = ""
    status: RunStatus = Field(default_factory=RunStatus)

    # Outputs
    summary: Dict[str, Any] = Field(default_factory=dict)
    results_path: Optional[str] = None

    metadata: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def create(
        cls,
        name: str,
        kind: RunKind = RunKind.RUN,
        config: Optional[Dict[str, Any]] = None,
        fingerprint: str = "",
        base_data_dir: Optional[Path] = None,
    ) -> "RunContext":
        """Create a new run context and its directory."""
        base_data_dir = Path(base_data_dir or get_config().data_dir)
        run_id = str(uuid.uuid4())
        context = cls(
            run_id=run_id,
            name=name,
            kind=kind,
            run_dir=base_data_dir / run_id,
            config=config or {},
            fingerprint=fingerprint,
        )
        context.run_dir.mkdir(parents=True, exist_ok=True)
        context.save()
        return context

    @property
    def context_file(self) -> Path:
        return self.run_dir / "run_context.json"

    def save(self) -> None:
        """Save the run context to persistent storage."""
        self.status.updated_at = datetime.now()
        self.run_dir.mkdir(parents=True, exist_ok=True)
        with open(self.context_file, "w", encoding="utf-8") as f:
            data = self.model_dump(mode="json")
            json.dump(data, f, indent=2, default=str)

    @classmethod
    def load(cls, run_id: str, base_data_dir: Optional[Path] = None) -> "RunContext":
        """Load an existing run context by ID.

        Raises:
            ValueError: no run with that ID, or its context file is missing.
        """
        base_data_dir = Path(base_data_dir or get_config().data_dir)
        run_dir = base_data_dir / run_id
        if not run_dir.exists():
            raise ValueError(f"Run {run_id} not found")

        config_file = run_dir / "run_context.json"
        if not config_file.exists():
            raise ValueError(f"Run context file not found for run {run_id}")

        with open(config_file, "r", encoding="utf-8") as f:
            data = json.load(f)
        return cls.model_validate(data)

    @classmethod
    def list_runs(cls, base_data_dir: Optional[Path] = None) -> List["RunContext"]:
        """Every loadable run, newest first; unreadable directories are skipped."""
        base_data_dir = Path(base_data_dir or get_config().data_dir)
        if not base_data_dir.exists():
            return []
        runs = []
        for run_dir in base_data_dir.iterdir():
            if not (run_dir / "run_context.json").exists():
                continue
            try:
                runs.append(cls.load(run_dir.name, base_data_dir))
            except (ValueError, json.JSONDecodeError):
                continue
        return sorted(runs, key=lambda run: run.status.created_at, reverse=True)

    @classmethod
    def clean(cls, older_than_days: int, base_data_dir: Optional[Path] = None) -> List[str]:
        """Delete runs created more than `older_than_days` days ago; returns their IDs."""
        cutoff = datetime.now() - timedelta(days=older_than_days)
        removed = []
        for run in cls.list_runs(base_data_dir):
            if run.status.created_at < cutoff:
                shutil.rmtree(run.run_dir, ignore_errors=True)
                removed.append(run.run_id)
        return removed

    # Phase transitions

    def mark_planned(self, plan_dump: Optional[Dict[str, Any]] = None) -> None:
        if plan_dump is not None:
            self.metadata["plan"] = plan_dump
        self.status.update_phase(RunPhase.PLANNED)
        self.save()

    def mark_running(self) -> None:
        self.status.update_phase(RunPhase.RUNNING)
        self.save()

    def mark_completed(self, summary: Optional[Dict[str, Any]] = None, results_path: Optional[Path] = None) -> None:
        if summary is not None:
            self.summary = summary
        if results_path is not None:
            self.results_path = str(results_path)
        self.status.update_phase(RunPhase.COMPLETED)
        self.save()

    def mark_failed(self, error: str, summary: Optional[Dict[str, Any]] = None) -> None:
        if summary is not None:
            self.summary = summary
        self.status.add_error(error)
        self.status.update_phase(RunPhase.FAILED)
        self.save()

    def add_error(self, error: str) -> None:
        """Add an error to the run context."""
        self.status.add_error(error)
        self.save()

    def to_summary_dict(self) -> Dict[str, Any]:
        """Get a summary dictionary for display purposes."""
        return {
            "run_id": self.run_id,
            "name": self.name,
            "kind": self.kind.value,
            "phase": self.status.phase,
            "created_at": self.status.created_at.isoformat(),
            "fingerprint": self.fingerprint,
            "mode": self.config.get("mode", ""),
            "scale": "{num_nodes}x{workers_per_node}".format(**self.config["topology"])
            if "topology" in self.config
            else "",
            "has_errors": len(self.status.errors) > 0,
        }
