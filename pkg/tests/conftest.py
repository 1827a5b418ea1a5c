import pytest

_LOG = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, clause, ok, detail)``; the summary prints one line per criterion."""
    log = request.config.stash.setdefault(_LOG, {})

    def record(criterion: int, clause: str, ok: bool, detail: str = "") -> bool:
        log.setdefault(criterion, []).append((clause, bool(ok), detail))
        print(f"criterion {criterion} [{clause}] {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_LOG, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(log):
        clauses = log[criterion]
        ok = all(c[1] for c in clauses)
        failed = [f"{name} ({detail})" for name, good, detail in clauses if not good]
        passed = "; ".join(f"{name}: {detail}" if detail else name
                           for name, good, detail in clauses if good)
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += " | failing: " + "; ".join(failed)
        if passed:
            line += " | passing: " + passed
        terminalreporter.write_line(line)
