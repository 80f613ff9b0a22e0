"""Execution backends for job scripts and artifact containers.

``DockerRuntime`` drives a container engine through its standard CLI;
``LocalRuntime`` runs the script as a sandboxed subprocess in the
worktree, which is what tests and docker-less hosts use. Both expose the
same surface, so the reproducer and the artifact tools are backend
agnostic.
"""

from __future__ import annotations

import os
import shutil
import signal
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

SCRIPT_REL_PATH = ".failpass/job.sh"
KILLED_EXIT_STATUS = -9


class RuntimeUnavailable(Exception):
    """The configured execution backend cannot run jobs on this host."""


@dataclass(frozen=True)
class ExecResult:
    exit_status: int
    log_text: str
    wall_time: float
    timed_out: bool


def _run_with_timeout(argv: list[str], cwd: Path, env: dict, timeout_s: float) -> ExecResult:
    start = time.monotonic()
    proc = subprocess.Popen(
        argv,
        cwd=cwd,
        env=env,
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        start_new_session=True,
    )
    try:
        out, _ = proc.communicate(timeout=timeout_s)
        timed_out = False
        status = proc.returncode
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        out, _ = proc.communicate()
        timed_out = True
        status = KILLED_EXIT_STATUS
    return ExecResult(
        exit_status=status,
        log_text=(out or b"").decode("utf-8", errors="replace"),
        wall_time=time.monotonic() - start,
        timed_out=timed_out,
    )


class LocalRuntime:
    """Runs job scripts directly in the worktree with a scrubbed environment."""

    _KEEP_ENV = ("PATH", "HOME", "LANG", "TMPDIR")

    def __init__(self, extra_env: Optional[dict[str, str]] = None):
        self.extra_env = dict(extra_env or {})

    def run_script(self, image: str, worktree: Path, timeout_s: float,
                   env: Optional[dict[str, str]] = None) -> ExecResult:
        run_env = {k: os.environ[k] for k in self._KEEP_ENV if k in os.environ}
        run_env.update(self.extra_env)
        run_env.update(env or {})
        return _run_with_timeout(["/bin/sh", SCRIPT_REL_PATH], Path(worktree), run_env, timeout_s)

    # artifact tooling: local backend treats images as no-ops
    def fetch_image(self, image: str) -> None:
        pass

    def shell(self, image: str, label: str) -> int:
        raise RuntimeUnavailable("interactive shells require a container engine")

    def cleanup(self, label: str, purge: bool = False) -> None:
        pass


class DockerRuntime:
    """Shells out to the docker CLI."""

    def __init__(self, docker: str = "docker"):
        self.docker = docker
        if shutil.which(docker) is None:
            raise RuntimeUnavailable(f"container engine not found: {docker}")

    def run_script(self, image: str, worktree: Path, timeout_s: float,
                   env: Optional[dict[str, str]] = None) -> ExecResult:
        argv = [self.docker, "run", "--rm", "--label", "failpass=job",
                "-v", f"{Path(worktree).resolve()}:/build", "-w", "/build"]
        for key, value in (env or {}).items():
            argv += ["-e", f"{key}={value}"]
        argv += [image, "/bin/sh", SCRIPT_REL_PATH]
        return _run_with_timeout(argv, Path(worktree), dict(os.environ), timeout_s)

    def fetch_image(self, image: str) -> None:
        subprocess.run([self.docker, "pull", image], check=True)

    def shell(self, image: str, label: str) -> int:
        proc = subprocess.run(
            [self.docker, "run", "-it", "--label", f"failpass-artifact={label}", image, "/bin/bash"],
        )
        return proc.returncode

    def cleanup(self, label: str, purge: bool = False) -> None:
        ids = subprocess.run(
            [self.docker, "ps", "-aq", "--filter", f"label=failpass-artifact={label}"],
            capture_output=True, text=True, check=True,
        ).stdout.split()
        if ids:
            subprocess.run([self.docker, "rm", "-f", *ids], check=True)
        if purge:
            subprocess.run([self.docker, "rmi", "-f", label], check=False)


def default_runtime():
    try:
        return DockerRuntime()
    except RuntimeUnavailable:
        return LocalRuntime()
