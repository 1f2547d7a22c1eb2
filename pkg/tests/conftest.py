import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def dense_stencil(d1, d2, h=1.0):
    """Osmosis matrix built pixel by pixel from the flux-form stencil.

    Independent of the library's assembly: each interior edge carries the flux
    ``(u_hi - u_lo)/h - d (u_hi + u_lo)/2``, which enters the two adjacent
    pixels with opposite signs, divided by ``h``.
    """
    n_y, n_x = d1.shape[0], d2.shape[1]
    N = n_x * n_y
    A = np.zeros((N, N))

    def idx(i, j):
        return j * n_x + i

    for j in range(n_y):
        for i in range(n_x):
            row = idx(i, j)
            # neighbours (ii, jj) and the drift on the shared edge, oriented from
            # the lower-index pixel to the higher-index one
            for ii, jj, d, sign in (
                (i + 1, j, d1[j, i + 1] if i + 1 < n_x else 0.0, +1),
                (i - 1, j, d1[j, i] if i >= 1 else 0.0, -1),
                (i, j + 1, d2[j + 1, i] if j + 1 < n_y else 0.0, +1),
                (i, j - 1, d2[j, i] if j >= 1 else 0.0, -1),
            ):
                if not (0 <= ii < n_x and 0 <= jj < n_y):
                    continue
                col = idx(ii, jj)
                # flux towards increasing index: (u_hi - u_lo)/h - d (u_hi + u_lo)/2
                # u'_row gains sign * flux / h
                if sign > 0:  # row is the low pixel: u' += flux/h
                    A[row, col] += (1 / h - d / 2) / h
                    A[row, row] += (-1 / h - d / 2) / h
                else:  # row is the high pixel: u' -= flux/h
                    A[row, col] += (1 / h + d / 2) / h
                    A[row, row] += (-1 / h + d / 2) / h
    return A


@pytest.fixture
def stencil():
    return dense_stencil


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
