"""Shared domain types and pass/fail classification rules.

Every pipeline stage works in terms of these value objects. They are
immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Optional

_SHA_RE = re.compile(r"^[0-9a-f]{40}$")


class Status(str, Enum):
    """Terminal state of a CI build or job."""

    PASSED = "passed"
    FAILED = "failed"
    ERRORED = "errored"
    CANCELED = "canceled"


class Event(str, Enum):
    PUSH = "push"
    PULL_REQUEST = "pull_request"


class Outcome(str, Enum):
    FAIL = "fail"
    PASS = "pass"
    EXCLUDED = "excluded"


class Availability(str, Enum):
    AVAILABLE = "available"
    UNAVAILABLE = "unavailable"


class RecoverySource(str, Enum):
    GIT_HISTORY = "git_history"
    ARCHIVE = "archive"
    NONE = "none"


class Stage(str, Enum):
    """Funnel stages reported by the pipeline, in order."""

    ALL_PAIRS = "all_pairs"
    AVAILABLE = "available"
    LOG_PRESENT = "log_present"
    DOCKER_ERA = "docker_era"
    WITH_IMAGE = "with_image"
    ATTEMPTED = "attempted"
    REPRODUCED = "reproduced"


STAGE_ORDER = list(Stage)


def outcome_class(status: Status) -> Outcome:
    """Classify a build/job status for pair mining.

    Errored runs count as fail-side candidates (an errored fail side is
    what makes an error-pass pair); canceled runs carry no signal and
    are excluded from adjacency entirely.
    """
    status = Status(status)
    if status is Status.PASSED:
        return Outcome.PASS
    if status in (Status.FAILED, Status.ERRORED):
        return Outcome.FAIL
    return Outcome.EXCLUDED


class ConfigError(ValueError):
    """Raised for a job configuration that cannot be fingerprinted."""


def _normalize(value):
    if isinstance(value, dict):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]  # list order is meaningful
    if isinstance(value, str):
        return " ".join(value.split())
    if isinstance(value, (int, float, bool)) or value is None:
        return value
    raise ConfigError(f"unparseable configuration: unsupported value {value!r}")


def config_fingerprint(raw_config) -> str:
    """Canonical text fingerprint of a job configuration.

    Keys are sorted and whitespace inside scalar strings collapsed, so
    equal raw configs always yield equal keys; list order is preserved
    (build matrices are order-sensitive).
    """
    if not isinstance(raw_config, dict):
        raise ConfigError("unparseable configuration: expected a mapping")
    return json.dumps(_normalize(raw_config), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class Project:
    slug: str
    primary_language: str
    repo_url: str = ""

    def __post_init__(self):
        if self.slug.count("/") != 1:
            raise ValueError(f"slug must be owner/name: {self.slug!r}")
        if not self.primary_language:
            raise ValueError("primary_language must be non-empty")


@dataclass(frozen=True)
class Job:
    job_id: int
    status: Status
    config_key: str
    log_ref: Optional[str] = None


@dataclass(frozen=True)
class CommitCoordinates:
    trigger_sha: Optional[str]
    base_sha: Optional[str] = None
    merge_sha: Optional[str] = None
    availability: Availability = Availability.UNAVAILABLE
    recovery_source: RecoverySource = RecoverySource.NONE
    reason: Optional[str] = None

    def __post_init__(self):
        for name in ("trigger_sha", "base_sha", "merge_sha"):
            sha = getattr(self, name)
            if sha is not None and not _SHA_RE.fullmatch(sha):
                raise ValueError(f"{name} is not a 40-hex sha: {sha!r}")
        if self.availability is Availability.AVAILABLE and self.recovery_source is RecoverySource.NONE:
            raise ValueError("available coordinates need a recovery source")


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp to an aware UTC datetime, second precision."""
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


@dataclass(frozen=True)
class Build:
    build_id: int
    status: Status
    event: Event
    branch: Optional[str]
    committed_at: datetime
    jobs: tuple[Job, ...]
    pr_number: Optional[int] = None
    trigger: Optional[CommitCoordinates] = None
    raw_trigger_sha: Optional[str] = None
    raw_base_sha: Optional[str] = None
    merge_message: Optional[str] = None

    def __post_init__(self):
        if (self.event is Event.PULL_REQUEST) != (self.pr_number is not None):
            raise ValueError("pr_number must be present exactly for pull_request events")
        if self.status is Status.PASSED and any(j.status is not Status.PASSED for j in self.jobs):
            raise ValueError("a passed build cannot contain non-passed jobs")

    @property
    def group_key(self) -> tuple:
        if self.event is Event.PULL_REQUEST:
            return (None, self.pr_number)
        return (self.branch, None)

    @property
    def sort_key(self) -> tuple:
        # chronological, ties broken by build_id
        return (self.committed_at, self.build_id)


@dataclass(frozen=True)
class JobPair:
    project: Project
    failed_build_id: int
    passed_build_id: int
    failed_job: Job
    passed_job: Job
    failed_commits: CommitCoordinates
    passed_commits: CommitCoordinates
    group_key: tuple

    def __post_init__(self):
        if self.failed_job.config_key != self.passed_job.config_key:
            raise ValueError("paired jobs must share a config_key")

    def to_dict(self) -> dict:
        return {
            "project": {
                "slug": self.project.slug,
                "primary_language": self.project.primary_language,
                "repo_url": self.project.repo_url,
            },
            "failed_build_id": self.failed_build_id,
            "passed_build_id": self.passed_build_id,
            "failed_job": _job_dict(self.failed_job),
            "passed_job": _job_dict(self.passed_job),
            "failed_commits": _coords_dict(self.failed_commits),
            "passed_commits": _coords_dict(self.passed_commits),
            "group_key": list(self.group_key),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JobPair":
        return cls(
            project=Project(**d["project"]),
            failed_build_id=d["failed_build_id"],
            passed_build_id=d["passed_build_id"],
            failed_job=_job_from_dict(d["failed_job"]),
            passed_job=_job_from_dict(d["passed_job"]),
            failed_commits=_coords_from_dict(d["failed_commits"]),
            passed_commits=_coords_from_dict(d["passed_commits"]),
            group_key=tuple(d["group_key"]),
        )


def _job_dict(j: Job) -> dict:
    return {"job_id": j.job_id, "status": j.status.value, "config_key": j.config_key, "log_ref": j.log_ref}


def _job_from_dict(d: dict) -> Job:
    return Job(job_id=d["job_id"], status=Status(d["status"]), config_key=d["config_key"], log_ref=d.get("log_ref"))


def _coords_dict(c: CommitCoordinates) -> dict:
    return {
        "trigger_sha": c.trigger_sha,
        "base_sha": c.base_sha,
        "merge_sha": c.merge_sha,
        "availability": c.availability.value,
        "recovery_source": c.recovery_source.value,
        "reason": c.reason,
    }


def _coords_from_dict(d: dict) -> CommitCoordinates:
    return CommitCoordinates(
        trigger_sha=d.get("trigger_sha"),
        base_sha=d.get("base_sha"),
        merge_sha=d.get("merge_sha"),
        availability=Availability(d["availability"]),
        recovery_source=RecoverySource(d["recovery_source"]),
        reason=d.get("reason"),
    )


@dataclass(frozen=True)
class PipelineStageCount:
    stage: Stage
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be non-negative")
