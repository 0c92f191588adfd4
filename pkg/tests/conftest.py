import pytest

# criterion number -> (title, [(part, passed, detail)])
ACCEPTANCE: dict[int, tuple[str, list[tuple[str, bool, str]]]] = {}


def acceptance_line(n: int) -> str:
    title, parts = ACCEPTANCE[n]
    ok = all(p for _, p, _ in parts)
    failed = [f"{name}: {detail}" for name, p, detail in parts if not p]
    tail = f" ({len(parts)} parts)" if ok else " | " + "; ".join(failed)
    return f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title}{tail}"


@pytest.fixture
def criterion():
    """``criterion(n, title, part, passed, detail)`` records one part of an acceptance criterion."""

    def record(n: int, title: str, part: str, passed: bool, detail: str = "") -> None:
        entry = ACCEPTANCE.setdefault(n, (title, []))
        entry[1].append((part, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {n} / {part}: {detail}")
        assert passed, f"criterion {n} ({title}) / {part}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(acceptance_line(n))
    missing = sorted(set(range(1, 15)) - set(ACCEPTANCE))
    if missing and len(ACCEPTANCE) > 1:
        terminalreporter.write_line(f"not run: {missing}")
