import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_laplacian_1d(n, h, kind="periodic"):
    """Explicit (1, -2, 1)/h^2 matrix with the closure of ``kind``."""
    A = np.zeros((n, n))
    for i in range(n):
        A[i, i] = -2.0
        for j in (i - 1, i + 1):
            if 0 <= j < n:
                A[i, j] += 1.0
            elif kind == "periodic":
                A[i, j % n] += 1.0
            elif kind == "neumann":
                A[i, i] += 1.0
    return A / h**2


def dense_laplacian(shape, spacing, kinds=None):
    """Kronecker-sum assembly A_x (x) I + I (x) A_y (+ z)."""
    kinds = kinds or ["periodic"] * len(shape)
    total = np.zeros((int(np.prod(shape)),) * 2)
    for axis, (n, h, kind) in enumerate(zip(shape, spacing, kinds)):
        term = np.ones((1, 1))
        for b, m in enumerate(shape):
            term = np.kron(term, dense_laplacian_1d(n, h, kind) if b == axis else np.eye(m))
        total += term
    return total


# one line per acceptance criterion, printed after the run
CRITERIA: dict = {}


def report(number, passed, detail):
    CRITERIA[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}: {detail}")
