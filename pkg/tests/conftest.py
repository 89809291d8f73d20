import pytest

from pscub.polymer_core import build_system

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


def record(number: int, ok: bool, detail: str = "") -> None:
    _CRITERIA.setdefault(number, []).append((bool(ok), detail))


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        ok = all(p for p, _ in parts)
        details = "; ".join(d if p or ok else f"[fail] {d}" for p, d in parts if d)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {details}")


@pytest.fixture
def fig2():
    """Five polymers a..e with a-b, b-c, a-d, b-e, c-e."""
    return build_system("abcde", [("a", "b"), ("b", "c"), ("a", "d"), ("b", "e"), ("c", "e")])


@pytest.fixture
def pair_system():
    return build_system("ab", [("a", "b")])


@pytest.fixture
def free_pair():
    return build_system("ab", [])
