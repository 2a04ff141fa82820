"""Shared fixtures: random test matrices, synthetic channels, acceptance report."""

from __future__ import annotations

import numpy as np
import pytest

from clusterdet.channel import ChannelRealization

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hpd(rng, n, cond=None):
    """Random Hermitian positive-definite matrix, optionally with a set condition number."""
    Q, _ = np.linalg.qr(crandn(rng, n, n))
    if cond is None:
        w = rng.uniform(0.5, 5.0, n)
    else:
        w = np.geomspace(1.0, cond, n)
    S = (Q * w) @ Q.conj().T
    return (S + S.conj().T) / 2


def block_orthogonal_channel(rng, sizes, M=None, rho=100.0):
    """Channel whose cluster blocks are mutually orthogonal (H_c^H H_i = 0 for c != i).

    Each cluster gets its own orthonormal subspace, mixed by a random square
    matrix so that users inside a cluster are strongly correlated.
    """
    N = sum(sizes)
    M = M or 2 * N
    Q, _ = np.linalg.qr(crandn(rng, M, N))
    cols, start = [], 0
    for n in sizes:
        mix = np.eye(n) + 0.9 * crandn(rng, n, n)
        cols.append(Q[:, start : start + n] @ mix)
        start += n
    H = np.hstack(cols)
    return ChannelRealization(H=H, P=np.ones(N), K=np.ones(N), user_positions=np.zeros((N, 3)), rho=rho)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
