"""Execute an instance's test against a candidate in a scratch copy."""

from __future__ import annotations

import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from ..errors import AgentFixError
from ..model import BenchmarkInstance, write_instance

CANDIDATE_FILE = "buggy.py"
TEST_FILE = "test.py"
DEFAULT_TIMEOUT = 300.0
DEFAULT_ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "SYSTEMROOT", "VIRTUAL_ENV")
# unroutable proxy; a best-effort block for HTTP clients that honour proxy variables
_BLACKHOLE_PROXY = "http://127.0.0.1:9"


class SandboxSetupError(AgentFixError):
    pass


class TestStatus(str, Enum):
    __test__ = False  # not a pytest class

    RESOLVED = "Resolved"
    UNRESOLVED = "Unresolved"
    EXECUTION_ERROR = "ExecutionError"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    status: TestStatus
    exit_code: int
    stdout: str = ""
    stderr: str = ""
    duration: float = 0.0

    def __post_init__(self):
        if (self.status is TestStatus.RESOLVED) != (self.exit_code == 0):
            raise ValueError("Resolved if and only if the exit code is 0")

    @property
    def resolved(self) -> bool:
        return self.status is TestStatus.RESOLVED

    def to_dict(self) -> dict:
        return {"status": self.status.value, "exit_code": self.exit_code,
                "duration": self.duration, "stdout": self.stdout[-4000:], "stderr": self.stderr[-4000:]}


@dataclass(frozen=True)
class RunnerConfig:
    """How a test is launched.

    ``command`` is a list of argument templates; ``{interpreter}``,
    ``{test_file}`` and ``{workdir}`` are substituted.
    """

    command: tuple[str, ...] = ("{interpreter}", "{test_file}")
    interpreter: str = sys.executable
    timeout: float = DEFAULT_TIMEOUT
    env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST
    extra_env: dict[str, str] = field(default_factory=dict)
    block_network: bool = True
    keep_workdir: bool = False

    def __post_init__(self):
        object.__setattr__(self, "command", tuple(self.command))
        object.__setattr__(self, "env_allowlist", tuple(self.env_allowlist))
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if not self.command:
            raise ValueError("command must be non-empty")

    def argv(self, workdir: Path) -> list[str]:
        values = {"interpreter": self.interpreter, "test_file": TEST_FILE, "workdir": str(workdir)}
        return [part.format(**values) for part in self.command]

    def environment(self, workdir: Path) -> dict[str, str]:
        env = {k: os.environ[k] for k in self.env_allowlist if k in os.environ}
        env["PYTHONDONTWRITEBYTECODE"] = "1"
        env["PYTHONPATH"] = str(workdir)
        if self.block_network:
            for key in ("http_proxy", "https_proxy", "HTTP_PROXY", "HTTPS_PROXY", "ALL_PROXY"):
                env[key] = _BLACKHOLE_PROXY
            env["NO_PROXY"] = env["no_proxy"] = ""
        env.update(self.extra_env)
        return env


def prepare_workdir(candidate: str, instance: BenchmarkInstance, parent: Path | str | None = None) -> Path:
    """Scratch copy of the instance with ``buggy.py`` replaced by the candidate."""
    try:
        workdir = Path(tempfile.mkdtemp(prefix=f"agentfix-{instance.instance_id}-", dir=parent))
        if instance.root is not None and Path(instance.root).is_dir():
            shutil.copytree(instance.root, workdir, dirs_exist_ok=True)
        else:
            write_instance(instance, workdir)
        with open(workdir / CANDIDATE_FILE, "w", encoding="utf-8", newline="") as fh:
            fh.write(candidate)
    except OSError as exc:
        raise SandboxSetupError(f"cannot prepare scratch directory: {exc}") from exc
    return workdir


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError, AttributeError):
        proc.kill()


def run_tests(candidate: str, instance: BenchmarkInstance, runner: RunnerConfig | None = None) -> TestResult:
    runner = runner or RunnerConfig()
    if shutil.which(runner.interpreter) is None and not Path(runner.interpreter).is_file():
        raise SandboxSetupError(f"interpreter {runner.interpreter!r} not found")
    workdir = prepare_workdir(candidate, instance)
    started = time.perf_counter()
    try:
        try:
            proc = subprocess.Popen(
                runner.argv(workdir), cwd=workdir, env=runner.environment(workdir),
                stdout=subprocess.PIPE, stderr=subprocess.PIPE, stdin=subprocess.DEVNULL,
                text=True, errors="replace", start_new_session=True,
            )
        except OSError as exc:
            return TestResult(TestStatus.EXECUTION_ERROR, -1, "", str(exc), time.perf_counter() - started)
        try:
            out, err = proc.communicate(timeout=runner.timeout)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            out, err = proc.communicate()
            return TestResult(TestStatus.TIMEOUT, -1, out, err, time.perf_counter() - started)
        status = TestStatus.RESOLVED if proc.returncode == 0 else TestStatus.UNRESOLVED
        return TestResult(status, proc.returncode, out, err, time.perf_counter() - started)
    finally:
        if not runner.keep_workdir:
            shutil.rmtree(workdir, ignore_errors=True)
