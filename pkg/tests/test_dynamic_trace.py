import io
import sys
import textwrap

import pytest

from fgiscan.catalog import Category
from fgiscan.dynamic_trace import (
    DynamicProfile,
    parse_trace_log,
    dynamic_profile,
    run_sandboxed_install,
)
from fgiscan.errors import IsolationViolation, MissingLog, RunnerUnavailable, Timeout


def parse(text, catalog=None):
    return parse_trace_log(io.StringIO(text), catalog=catalog)


# ------------------------------------------------------------ line buckets

def test_every_line_lands_in_exactly_one_bucket():
    text = (
        'openat(AT_FDCWD, "a", O_RDONLY) = 3\n'
        "[pid 11] connect(5, <unfinished ...>\n"
        "this line is not strace output\n"
        "--- SIGCHLD {si_signo=SIGCHLD} ---\n"
        "\n"
        "strace: Process 11 attached\n"
        "[pid 11] <... connect resumed> , 16) = 0\n"
        "+++ exited with 1 +++\n"
        "recvfrom(3, <unfinished ...>\n"
        "+++ exited with 0 +++\n"
    )
    result = parse(text)
    assert result.total_lines == 10
    assert len(result.events) == 2
    assert result.merged_pairs == 1
    assert len(result.malformed) == 1
    assert result.malformed[0][0] == 3
    assert result.signal_lines == 1
    assert result.blank_lines == 1
    assert result.noise_lines == 1
    assert result.exit_lines == 2
    assert result.skipped_unfinished == 1  # dangling recvfrom at EOF
    assert result.last_exit_code == 0
    assert result.accounted_lines() == result.total_lines


def test_merged_event_sits_at_resumed_position_with_joined_args():
    text = (
        "[pid 11] connect(5, <unfinished ...>\n"
        'openat(AT_FDCWD, "x", O_RDONLY) = 3\n'
        "[pid 11] <... connect resumed> , 16) = 0\n"
        "+++ exited with 0 +++\n"
    )
    result = parse(text)
    assert [e.function_name for e in result.events] == ["openat", "connect"]
    merged = result.events[1]
    assert merged.arguments == "5, 16"
    assert merged.return_value == "0"
    assert merged.pid == 11
    assert merged.sequence == 1


def test_pairs_are_keyed_by_pid_and_name():
    # same syscall name on two pids must not cross-merge
    text = (
        "[pid 1] read(3, <unfinished ...>\n"
        "[pid 2] read(4, <unfinished ...>\n"
        '[pid 2] <... read resumed> "b", 1) = 1\n'
        '[pid 1] <... read resumed> "a", 1) = 1\n'
    )
    result = parse(text)
    assert result.merged_pairs == 2
    assert result.events[0].pid == 2
    assert result.events[0].arguments.startswith("4")
    assert result.events[1].pid == 1
    assert result.events[1].arguments.startswith("3")


def test_second_unfinished_same_key_drops_stale_one():
    text = (
        "read(3, <unfinished ...>\n"
        "read(4, <unfinished ...>\n"
        '<... read resumed> "x", 2) = 2\n'
    )
    result = parse(text)
    assert result.skipped_unfinished == 1
    assert result.merged_pairs == 1
    assert result.events[0].arguments.startswith("4")  # newest survives


def test_orphan_resumed_is_malformed():
    result = parse('<... write resumed> ) = 1\n')
    assert result.events == []
    assert len(result.malformed) == 1


def test_timestamps_and_bare_pid_prefixes():
    text = (
        "4299  14:24:05.000731 getpid() = 4299\n"
        "[pid 4301] 14:24:05.001462 close(3) = 0\n"
        "1699999999.123456 openat(AT_FDCWD, \"z\", O_RDONLY) = 5\n"
    )
    result = parse(text)
    assert [(e.function_name, e.pid) for e in result.events] == [
        ("getpid", 4299), ("close", 4301), ("openat", None),
    ]


def test_killed_by_signal_counts_as_exit_without_code():
    result = parse("+++ killed by SIGKILL +++\n")
    assert result.exit_lines == 1
    assert result.last_exit_code is None


# ---------------------------------------------------------- categorization

def test_syscall_table_first_then_catalog(catalog):
    text = (
        'openat(AT_FDCWD, "x", O_RDONLY) = 3\n'   # syscall table: file
        'readFileSync("x") = 0\n'                  # catalog (javascript): file
        "mysteryxyz(1) = 0\n"                      # nowhere: other
    )
    result = parse(text, catalog=catalog)
    assert [e.category for e in result.events] == [
        Category.FILE, Category.FILE, Category.OTHER,
    ]

    # without a catalog, library-level names fall through to other
    result = parse(text, catalog=None)
    assert [e.category for e in result.events] == [
        Category.FILE, Category.OTHER, Category.OTHER,
    ]


# ----------------------------------------------------------- profile type

def test_dynamic_profile_counts(tmp_path, catalog):
    log = tmp_path / "t.log"
    log.write_text(
        "socket(AF_INET, SOCK_STREAM, 0) = 3\n"
        "connect(3, addr, 16) = 0\n"
        "connect(4, addr, 16) = 0\n"
        'read(3, "x", 1) = 1\n'
        "brk(NULL) = 0x1000\n"
        "+++ exited with 0 +++\n"
    )
    profile = dynamic_profile(log, catalog)
    assert profile.succeeded is True
    counts = profile.per_category_counts
    # raw counts, excluding the catch-all bucket
    assert counts == {Category.NETWORK: 3, Category.FILE: 1, Category.PROCESS: 0}
    distinct = profile.per_category_distinct_counts
    assert distinct == {Category.NETWORK: 2, Category.FILE: 1, Category.PROCESS: 0}
    assert profile.distinct_function_names == {"socket", "connect", "read", "brk"}

    again = DynamicProfile.from_dict(profile.to_dict())
    assert again.events == profile.events
    assert again.succeeded is True


def test_dynamic_profile_failure_status(tmp_path):
    log = tmp_path / "t.log"
    log.write_text("openat(AT_FDCWD) = 3\n+++ killed by SIGSEGV +++\n")
    assert dynamic_profile(log).succeeded is False

    log.write_text("openat(AT_FDCWD) = 3\n+++ exited with 2 +++\n")
    assert dynamic_profile(log).succeeded is False


def test_dynamic_profile_missing_log(tmp_path):
    with pytest.raises(MissingLog):
        dynamic_profile(tmp_path / "absent.log")


# ----------------------------------------------------------------- runner

def test_runner_unavailable_without_command(tmp_path):
    with pytest.raises(RunnerUnavailable):
        run_sandboxed_install(tmp_path / "a.tgz", tmp_path / "w")


def test_runner_unavailable_when_binary_missing(tmp_path):
    with pytest.raises(RunnerUnavailable):
        run_sandboxed_install(tmp_path / "a.tgz", tmp_path / "w",
                              runner_command=["/nonexistent/sandbox-runner"])


def test_runner_with_logfile_placeholder(tmp_path):
    runner = tmp_path / "runner.py"
    runner.write_text(textwrap.dedent("""\
        import sys
        archive, logfile = sys.argv[1], sys.argv[2]
        with open(logfile, "w") as fh:
            fh.write('openat(AT_FDCWD, "' + archive + '", O_RDONLY) = 3\\n')
            fh.write('close(3) = 0\\n')
            fh.write('+++ exited with 0 +++\\n')
    """))
    log = run_sandboxed_install(
        tmp_path / "pkg.tgz", tmp_path / "work",
        runner_command=[sys.executable, str(runner), "{archive}", "{logfile}"],
    )
    assert log.name == "install_trace.log"
    with open(log) as fh:
        result = parse_trace_log(fh)
    assert [e.function_name for e in result.events] == ["openat", "close"]
    assert "pkg.tgz" in result.events[0].arguments


def test_runner_stdout_capture(tmp_path):
    code = "print('openat(AT_FDCWD) = 3'); print('+++ exited with 0 +++')"
    log = run_sandboxed_install(
        tmp_path / "pkg.tgz", tmp_path / "work",
        runner_command=[sys.executable, "-c", code],
    )
    assert log.read_text().startswith("openat")


def test_runner_isolation_violation(tmp_path):
    code = (
        "import sys; "
        "sys.stderr.write('ISOLATION-VIOLATION: outbound connect blocked\\n')"
    )
    with pytest.raises(IsolationViolation, match="outbound connect"):
        run_sandboxed_install(tmp_path / "pkg.tgz", tmp_path / "work",
                              runner_command=[sys.executable, "-c", code])


def test_runner_timeout(tmp_path):
    with pytest.raises(Timeout) as exc_info:
        run_sandboxed_install(
            tmp_path / "pkg.tgz", tmp_path / "work",
            runner_command=[sys.executable, "-c", "import time; time.sleep(30)"],
            timeout=0.5,
        )
    assert exc_info.value.log_path is not None
