import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    rows = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props or rep.when not in ("call", "setup"):
                continue
            n = props["criterion"]
            ok = rep.passed and rows.get(n, (True,))[0]
            detail = "; ".join(d for d in (rows.get(n, (None, ""))[1], props.get("detail", "")) if d)
            rows[n] = (ok, detail)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(rows, key=lambda k: (isinstance(k, str), k)):
        ok, detail = rows[n]
        label = f"criterion {n:>2}" if isinstance(n, int) else f"example {n}"
        terminalreporter.write_line(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
