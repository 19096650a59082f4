import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """Record a numbered acceptance line: ``criterion(n, ok, detail)``."""
    def record(number: int, ok: bool, detail: str = ""):
        prev = ACCEPTANCE.get(number)
        if prev is not None:
            ok = ok and prev[0]
            detail = f"{prev[1]}; {detail}" if detail else prev[1]
        ACCEPTANCE[number] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 10):
        ok, detail = ACCEPTANCE.get(n, (False, "not evaluated"))
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
