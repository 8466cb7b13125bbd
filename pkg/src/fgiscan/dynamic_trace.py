"""Dynamic profiles from system-call trace logs.

The profiler never executes packages itself.  Installation runs happen in
an external sandbox runner (a user-supplied command template); everything
here works from the pre-recorded text logs that runner produces, in the
classic ``name(args) = retval`` trace format:

    [pid 4242] connect(3, {sa_family=AF_INET, ...}, 16) = 0
    openat(AT_FDCWD, "/etc/passwd", O_RDONLY <unfinished ...>
    [pid 4243] +++ exited with 0 +++
    <... openat resumed>) = 3
    --- SIGCHLD {si_signo=SIGCHLD, ...} ---

Interrupted calls are merged at the position of their ``resumed`` line,
keyed by (pid, name).  Every input line lands in exactly one bucket
(event, merged pair, signal, exit, noise, blank, malformed, or dangling
unfinished), so the counts always add up to the line total.
"""

from __future__ import annotations

import logging
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

from .catalog import Category, FunctionCatalog, load_syscall_categories
from .corpus import PackageRef
from .errors import IsolationViolation, MissingLog, RunnerUnavailable, Timeout

logger = logging.getLogger(__name__)

_COUNTED_CATEGORIES = (Category.NETWORK, Category.FILE, Category.PROCESS)

# optional "[pid 1234] " / "1234 " prefix, optional -t/-tt/-ttt timestamp
_PREFIX_RE = re.compile(
    r"^(?:\[pid\s+(?P<pid_a>\d+)\]\s+|(?P<pid_b>\d+)\s+)?"
    r"(?:\d{2}:\d{2}:\d{2}(?:\.\d+)?\s+|\d{9,}\.\d+\s+)?"
)
_CALL_RE = re.compile(
    r"^(?P<name>[A-Za-z_][\w.]*)\((?P<args>.*)\)\s+=\s+(?P<ret>.*)$"
)
_UNFINISHED_RE = re.compile(
    r"^(?P<name>[A-Za-z_][\w.]*)\((?P<args>.*?),?\s*<unfinished \.\.\.>$"
)
_RESUMED_RE = re.compile(
    r"^<\.\.\.\s+(?P<name>[A-Za-z_][\w.]*)\s+resumed>\s*,?\s*"
    r"(?P<args>.*)\)\s+=\s+(?P<ret>.*)$"
)
_SIGNAL_RE = re.compile(r"^---\s+SIG\w+.*---$")
_EXIT_RE = re.compile(r"^\+\+\+\s+(?:exited with\s+(?P<code>-?\d+)|killed by\s+SIG\w+.*)\s+\+\+\+$")
_NOISE_RE = re.compile(r"^strace:")


@dataclass(frozen=True)
class TraceEvent:
    sequence: int
    function_name: str
    category: Category
    arguments: str = ""
    return_value: str = ""
    pid: int | None = None

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence,
            "function_name": self.function_name,
            "category": self.category.value,
            "arguments": self.arguments,
            "return_value": self.return_value,
            "pid": self.pid,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceEvent":
        return cls(
            sequence=d["sequence"],
            function_name=d["function_name"],
            category=Category(d["category"]),
            arguments=d.get("arguments", ""),
            return_value=d.get("return_value", ""),
            pid=d.get("pid"),
        )


@dataclass
class TraceParseResult:
    events: list[TraceEvent] = field(default_factory=list)
    malformed: list[tuple[int, str]] = field(default_factory=list)
    merged_pairs: int = 0
    skipped_unfinished: int = 0
    signal_lines: int = 0
    exit_lines: int = 0
    noise_lines: int = 0
    blank_lines: int = 0
    total_lines: int = 0
    last_exit_code: int | None = None

    def accounted_lines(self) -> int:
        """Every line in exactly one bucket; merged pairs took two lines."""
        plain_events = len(self.events) - self.merged_pairs
        return (
            plain_events + 2 * self.merged_pairs + self.skipped_unfinished
            + len(self.malformed) + self.signal_lines + self.exit_lines
            + self.noise_lines + self.blank_lines
        )


def _categorize(
    name: str,
    syscall_categories: dict[str, Category],
    catalog: FunctionCatalog | None,
) -> Category:
    category = syscall_categories.get(name)
    if category is not None:
        return category
    if catalog is not None:
        entry = catalog.lookup_any_language(name)
        if entry is not None:
            return entry.category
    return Category.OTHER


def parse_trace_log(
    stream: TextIO | Iterable[str],
    catalog: FunctionCatalog | None = None,
    syscall_categories: dict[str, Category] | None = None,
) -> TraceParseResult:
    """Parse a trace log; tolerant, line-oriented, never raises on content.

    Categories come from the syscall table first, then (for runners that
    log library-level calls) from the function catalog across languages.
    """
    if syscall_categories is None:
        syscall_categories = load_syscall_categories()

    result = TraceParseResult()
    # (pid, name) -> argument prefix from the <unfinished ...> line
    pending: dict[tuple[int | None, str], str] = {}

    for line_no, raw in enumerate(stream, start=1):
        result.total_lines += 1
        line = raw.rstrip("\n")
        if not line.strip():
            result.blank_lines += 1
            continue

        prefix = _PREFIX_RE.match(line)
        pid_text = prefix.group("pid_a") or prefix.group("pid_b")
        pid = int(pid_text) if pid_text else None
        body = line[prefix.end():].strip()

        if _SIGNAL_RE.match(body):
            result.signal_lines += 1
            continue
        exit_match = _EXIT_RE.match(body)
        if exit_match:
            result.exit_lines += 1
            if exit_match.group("code") is not None:
                result.last_exit_code = int(exit_match.group("code"))
            continue
        if _NOISE_RE.match(body):
            result.noise_lines += 1
            continue

        unfinished = _UNFINISHED_RE.match(body)
        if unfinished:
            key = (pid, unfinished.group("name"))
            if key in pending:
                # a second unfinished call for the same key cannot be
                # matched unambiguously; drop the stale one
                result.skipped_unfinished += 1
            pending[key] = unfinished.group("args")
            continue

        resumed = _RESUMED_RE.match(body)
        if resumed:
            key = (pid, resumed.group("name"))
            if key not in pending:
                result.malformed.append((line_no, line))
                continue
            head = pending.pop(key)
            tail = resumed.group("args")
            arguments = f"{head}, {tail}" if head and tail else head + tail
            result.events.append(TraceEvent(
                sequence=len(result.events),
                function_name=resumed.group("name"),
                category=_categorize(resumed.group("name"),
                                     syscall_categories, catalog),
                arguments=arguments,
                return_value=resumed.group("ret").strip(),
                pid=pid,
            ))
            result.merged_pairs += 1
            continue

        call = _CALL_RE.match(body)
        if call:
            result.events.append(TraceEvent(
                sequence=len(result.events),
                function_name=call.group("name"),
                category=_categorize(call.group("name"),
                                     syscall_categories, catalog),
                arguments=call.group("args"),
                return_value=call.group("ret").strip(),
                pid=pid,
            ))
            continue

        result.malformed.append((line_no, line))

    result.skipped_unfinished += len(pending)
    return result


@dataclass
class DynamicProfile:
    package: PackageRef | None
    events: list[TraceEvent] = field(default_factory=list)
    succeeded: bool = False
    log_path: str = ""
    malformed_count: int = 0
    skipped_unfinished: int = 0

    @property
    def per_category_counts(self) -> dict[Category, int]:
        counts = {category: 0 for category in _COUNTED_CATEGORIES}
        for event in self.events:
            if event.category in counts:
                counts[event.category] += 1
        return counts

    @property
    def per_category_distinct_counts(self) -> dict[Category, int]:
        names: dict[Category, set[str]] = {c: set() for c in _COUNTED_CATEGORIES}
        for event in self.events:
            if event.category in names:
                names[event.category].add(event.function_name)
        return {category: len(bucket) for category, bucket in names.items()}

    @property
    def distinct_function_names(self) -> set[str]:
        return {event.function_name for event in self.events}

    def to_dict(self) -> dict:
        return {
            "events": [event.to_dict() for event in self.events],
            "succeeded": self.succeeded,
            "log_path": self.log_path,
            "malformed_count": self.malformed_count,
            "skipped_unfinished": self.skipped_unfinished,
        }

    @classmethod
    def from_dict(cls, d: dict, package: PackageRef | None = None) -> "DynamicProfile":
        return cls(
            package=package,
            events=[TraceEvent.from_dict(e) for e in d.get("events", [])],
            succeeded=d.get("succeeded", False),
            log_path=d.get("log_path", ""),
            malformed_count=d.get("malformed_count", 0),
            skipped_unfinished=d.get("skipped_unfinished", 0),
        )


def dynamic_profile(
    log_path: str | Path,
    catalog: FunctionCatalog | None = None,
    package: PackageRef | None = None,
) -> DynamicProfile:
    """Profile from one pre-recorded install-trace log.

    ``succeeded`` means the log's final status line reports exit code 0.
    """
    log_path = Path(log_path)
    if not log_path.is_file():
        raise MissingLog(f"no trace log at {log_path}")
    with open(log_path, encoding="utf-8", errors="replace") as fh:
        parsed = parse_trace_log(fh, catalog=catalog)

    succeeded = False
    with open(log_path, encoding="utf-8", errors="replace") as fh:
        final = ""
        for line in fh:
            if line.strip():
                final = line.strip()
    if final:
        body = final[_PREFIX_RE.match(final).end():].strip()
        exit_match = _EXIT_RE.match(body)
        succeeded = bool(exit_match and exit_match.group("code") == "0")

    if parsed.malformed:
        logger.warning(
            "%d malformed trace line(s) in %s; first at line %d",
            len(parsed.malformed), log_path, parsed.malformed[0][0],
        )
    return DynamicProfile(
        package=package,
        events=parsed.events,
        succeeded=succeeded,
        log_path=str(log_path),
        malformed_count=len(parsed.malformed),
        skipped_unfinished=parsed.skipped_unfinished,
    )


def run_sandboxed_install(
    archive_path: str | Path,
    workdir: str | Path,
    *,
    runner_command: str | list[str] | None = None,
    timeout: float = 600.0,
    network_policy: str = "deny",
) -> Path:
    """Run one package install under an external sandbox runner.

    ``runner_command`` is a template (string or argv list) with ``{archive}``,
    ``{workdir}``, ``{timeout}``, ``{network_policy}`` and optionally
    ``{logfile}`` placeholders.  Without a template this raises
    RunnerUnavailable: there is deliberately no built-in way to execute
    untrusted package code in the calling process.

    A runner signals a containment failure by printing a line starting with
    ``ISOLATION-VIOLATION:`` on stderr, which becomes IsolationViolation here.
    Returns the path of the written trace log.
    """
    if runner_command is None:
        raise RunnerUnavailable(
            "no sandbox runner configured; analyze pre-recorded logs instead"
        )
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    log_path = workdir / "install_trace.log"

    values = {
        "archive": str(archive_path),
        "workdir": str(workdir),
        "timeout": str(int(timeout)),
        "network_policy": network_policy,
        "logfile": str(log_path),
    }
    if isinstance(runner_command, str):
        argv = shlex.split(runner_command)
    else:
        argv = list(runner_command)
    runner_writes_log = any("{logfile}" in part for part in argv)
    argv = [part.format(**values) for part in argv]

    try:
        completed = subprocess.run(
            argv, capture_output=True, text=True, timeout=timeout,
        )
    except subprocess.TimeoutExpired as exc:
        stdout = exc.stdout or b""
        if isinstance(stdout, bytes):
            stdout = stdout.decode("utf-8", errors="replace")
        if not runner_writes_log:
            log_path.write_text(stdout, encoding="utf-8")
        raise Timeout(
            f"sandbox runner exceeded {timeout:.0f}s", log_path=log_path
        ) from exc
    except OSError as exc:
        raise RunnerUnavailable(f"cannot start sandbox runner: {exc}") from exc

    for line in (completed.stderr or "").splitlines():
        if line.startswith("ISOLATION-VIOLATION:"):
            raise IsolationViolation(line.partition(":")[2].strip())

    if not runner_writes_log:
        log_path.write_text(completed.stdout or "", encoding="utf-8")
    if completed.returncode != 0:
        logger.warning("sandbox runner exited %d for %s",
                       completed.returncode, archive_path)
    return log_path
