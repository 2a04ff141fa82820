"""Linear MIMO detectors on the Gram system ``A x = b``.

Three families:

* exact LMMSE via a Cholesky-based inverse,
* stationary matrix-splitting iterations on ``A`` (RI, Jacobi, GS, SSOR),
* the cluster-aware two-stage detector: invert the per-cluster diagonal
  blocks of ``A`` (stage 1), then run the same stationary iterations on the
  block-preconditioned system ``Psi x = x_tilde`` with ``Psi = Phi^-1 A``
  (stage 2).

Flop counts go to an optional :class:`FlopLedger` using the complexity table
conventions: complex multiply-adds, additions free.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NotPositiveDefiniteError, SingularTriangularError
from .linalg import HermitianView, as_cvector, cholesky_invert, hermitian_gram, spectral_norm

DIVERGENCE_LIMIT = 1e12

PHASES = ("gram_build", "block_invert", "transform", "per_iteration")


class Method(str, enum.Enum):
    RI = "RI"
    JACOBI = "JACOBI"
    GS = "GS"
    SSOR = "SSOR"


@dataclass
class FlopLedger:
    """Complex multiply-add counters keyed by phase.

    ``per_iteration`` accumulates over every iteration run; ``iterations``
    counts them, so the per-iteration cost is the ratio.
    """

    counts: dict = field(default_factory=lambda: dict.fromkeys(PHASES, 0))
    iterations: int = 0

    def add(self, phase: str, n: int) -> None:
        if phase not in self.counts:
            raise KeyError(f"unknown ledger phase {phase!r}")
        if n < 0:
            raise ValueError("ledger counts only grow")
        self.counts[phase] += int(n)

    def __getitem__(self, phase):
        return self.counts[phase]

    @property
    def stage1_total(self) -> int:
        return self.counts["block_invert"] + self.counts["transform"]

    def merge(self, other: "FlopLedger") -> None:
        for k, v in other.counts.items():
            self.counts[k] += v
        self.iterations += other.iterations

    def to_dict(self) -> dict:
        return {**self.counts, "iterations": self.iterations}


def per_iteration_flops(method: Method | str, n: int) -> int:
    """Per-iteration multiply-adds for an ``n``-user system.

    RI and Jacobi: N^2 + 2N. GS: 1.5 N^2 (a fused sweep where the triangular
    solve shares the residual product; rounded down for odd N). SSOR: 2N^2 + N.
    """
    method = Method(method)
    if method in (Method.RI, Method.JACOBI):
        return n * n + 2 * n
    if method is Method.GS:
        return 3 * n * n // 2
    return 2 * n * n + n


@dataclass(frozen=True)
class GramSystem:
    A: HermitianView
    b: np.ndarray
    rho: float

    def __post_init__(self):
        if self.b.shape != (self.A.n,):
            raise InvalidInputError(f"b has shape {self.b.shape}, expected ({self.A.n},)")

    @property
    def n(self) -> int:
        return self.A.n


@dataclass(frozen=True)
class ClusterPartition:
    """Contiguous cluster blocks of sizes ``sizes`` covering users ``0..N-1``.

    ``perm`` maps canonical position to the caller's original user index; it is
    the identity unless the partition came from :meth:`from_labels`.
    """

    sizes: tuple[int, ...]
    perm: tuple[int, ...] | None = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise InvalidInputError("every cluster must hold at least one user")
        if self.perm is None:
            object.__setattr__(self, "perm", tuple(range(sum(sizes))))
        elif sorted(self.perm) != list(range(sum(sizes))):
            raise InvalidInputError("perm must be a permutation of range(N)")

    @classmethod
    def uniform(cls, n: int, c: int) -> "ClusterPartition":
        if n % c:
            raise InvalidInputError(f"{n} users do not split evenly into {c} clusters")
        return cls((n // c,) * c)

    @classmethod
    def from_labels(cls, labels) -> "ClusterPartition":
        """Group users by cluster label (clusters in order of first appearance)."""
        labels = list(labels)
        order = list(dict.fromkeys(labels))
        perm = [i for lab in order for i, l in enumerate(labels) if l == lab]
        sizes = [labels.count(lab) for lab in order]
        return cls(tuple(sizes), tuple(perm))

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    def slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.sizes)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_clusters), self.sizes)

    def canonicalize(self, x) -> np.ndarray:
        """Reorder a per-user array from input order into cluster-contiguous order."""
        return np.asarray(x)[list(self.perm)]

    def restore(self, x) -> np.ndarray:
        """Inverse of :meth:`canonicalize`."""
        x = np.asarray(x)
        out = np.empty_like(x)
        out[list(self.perm)] = x
        return out


@dataclass(frozen=True)
class PreconditionedSystem:
    system: GramSystem
    partition: ClusterPartition
    phi_inv_blocks: tuple
    Psi: np.ndarray
    x_tilde: np.ndarray
    delta_norm: float

    @property
    def n(self) -> int:
        return self.Psi.shape[0]

    def apply_phi_inv(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.complex128)
        return np.concatenate([G @ v[s] for G, s in zip(self.phi_inv_blocks, self.partition.slices())])


@dataclass(frozen=True)
class IterativeConfig:
    method: Method = Method.GS
    max_iters: int = 100
    omega: float = 1.0
    record_trajectory: bool = True
    tol: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if int(self.max_iters) < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not 0 < self.omega < 2:
            raise InvalidInputError("omega must lie in (0, 2)")
        if self.tol < 0:
            raise InvalidInputError("tol must be >= 0")


@dataclass(frozen=True)
class Trajectory:
    """Iterates ``x_1..x_T`` (rows of ``iterates``) from the start point ``x0``.

    With ``record_trajectory`` off, ``iterates`` holds only the last one.
    ``diverged`` marks a run cut short because an entry exceeded 1e12.
    """

    x0: np.ndarray
    iterates: np.ndarray
    diverged: bool
    steps: int

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1] if len(self.iterates) else self.x0

    def with_start(self) -> np.ndarray:
        """``(steps + 1, N)`` stack ``x_0, x_1, ...``."""
        return np.vstack([self.x0[None, :], self.iterates])


def build_gram(chan, y, rho: float | None = None, ledger: FlopLedger | None = None) -> GramSystem:
    """``A = H^H H + rho^-1 I`` and the matched-filter output ``b = H^H y``.

    ``chan`` is a ChannelRealization or a bare channel matrix (then ``rho`` is required).
    """
    H = getattr(chan, "H", chan)
    if rho is None:
        rho = getattr(chan, "rho", None)
        if rho is None:
            raise InvalidInputError("rho is required when passing a bare channel matrix")
    H = np.asarray(H, dtype=np.complex128)
    y = as_cvector(y, "y")
    M, N = H.shape
    if y.shape[0] != M:
        raise InvalidInputError(f"y has length {y.shape[0]}, channel has {M} antennas")
    A = hermitian_gram(H, 1.0 / rho)
    b = H.conj().T @ y
    if ledger is not None:
        ledger.add("gram_build", M * N * N + M * N)
    return GramSystem(A=A, b=b, rho=float(rho))


def lmmse_direct(sys: GramSystem, ledger: FlopLedger | None = None) -> np.ndarray:
    """Exact LMMSE estimate ``A^-1 b``."""
    Ainv = cholesky_invert(sys.A)
    if ledger is not None:
        ledger.add("block_invert", sys.n**3)
    return Ainv @ sys.b


def _invert_block(A, s, index):
    try:
        return cholesky_invert(A[s, s])
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(s.start + exc.index, f"cluster block {index} is not positive definite") from exc


def stage1_block_invert(
    sys: GramSystem,
    part: ClusterPartition,
    ledger: FlopLedger | None = None,
    workers: int = 1,
) -> PreconditionedSystem:
    """Invert each cluster's diagonal block of ``A`` and form ``Psi`` and ``x_tilde``.

    The ledger records ``sum N_c^3`` for the inversions and, for the transform,
    ``N * sum(N_c^2) / C`` for Psi plus ``sum N_c^2`` for x_tilde; with uniform
    clusters these are C(N/C)^3, N^3/C^2 and N^2/C.
    """
    if part.n != sys.n:
        raise InvalidInputError(f"partition covers {part.n} users, system has {sys.n}")
    A = sys.A.data
    slices = part.slices()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = tuple(pool.map(_invert_block, [A] * len(slices), slices, range(len(slices))))
    else:
        blocks = tuple(_invert_block(A, s, c) for c, s in enumerate(slices))

    Psi = np.empty_like(A)
    x_tilde = np.empty(sys.n, dtype=np.complex128)
    for G, s in zip(blocks, slices):
        Psi[s, :] = G @ A[s, :]
        x_tilde[s] = G @ sys.b[s]

    off = Psi.copy()
    for s in slices:
        off[s, s] = 0
    delta_norm = spectral_norm(off)

    if ledger is not None:
        sq = sum(n * n for n in part.sizes)
        ledger.add("block_invert", sum(n**3 for n in part.sizes))
        ledger.add("transform", sys.n * sq // part.n_clusters + sq)
    return PreconditionedSystem(
        system=sys, partition=part, phi_inv_blocks=blocks, Psi=Psi, x_tilde=x_tilde, delta_norm=delta_norm
    )


def _stationary(Amat, b, x0, diag, cfg: IterativeConfig, ledger):
    """x_{t+1} = x_t + M^-1 (b - A x_t) with M built from ``diag`` and tril(Amat).

    ``diag`` is D for the conventional splitting and the identity for the
    preconditioned one.
    """
    n = b.shape[0]
    method, omega = cfg.method, cfg.omega
    if method is not Method.RI:
        zero = np.flatnonzero(diag == 0)
        if zero.size:
            raise SingularTriangularError(zero[0], f"splitting has a zero diagonal entry at {zero[0]}")
    if method in (Method.GS, Method.SSOR):
        w = omega if method is Method.SSOR else 1.0
        lower = np.tril(Amat, -1) * w
        lower[np.diag_indices(n)] = diag
        upper = lower.conj().T
        ssor_scale = omega * (2.0 - omega)

    x = x0.copy()
    out = []
    diverged = False
    steps = 0
    for _ in range(cfg.max_iters):
        r = b - Amat @ x
        if method is Method.RI:
            z = r
        elif method is Method.JACOBI:
            z = r / diag
        elif method is Method.GS:
            z = sla.solve_triangular(lower, r, lower=True, check_finite=False)
        else:
            z = sla.solve_triangular(lower, r, lower=True, check_finite=False)
            z = ssor_scale * sla.solve_triangular(upper, diag * z, lower=False, check_finite=False)
        x_new = x + z
        steps += 1
        if not np.all(np.isfinite(x_new)) or np.max(np.abs(x_new)) > DIVERGENCE_LIMIT:
            diverged = True
            if np.all(np.isfinite(x_new)):
                out.append(x_new)
                x = x_new
            break
        if cfg.record_trajectory:
            out.append(x_new)
        done = cfg.tol > 0 and np.linalg.norm(x_new - x) < cfg.tol
        x = x_new
        if done:
            break
    if ledger is not None:
        ledger.add("per_iteration", steps * per_iteration_flops(method, n))
        ledger.iterations += steps
    if not cfg.record_trajectory and not diverged:
        out = [x]
    iterates = np.array(out) if out else np.empty((0, n), dtype=np.complex128)
    return Trajectory(x0=x0, iterates=iterates, diverged=diverged, steps=steps)


def iterate_conventional(
    sys: GramSystem,
    cfg: IterativeConfig,
    x0=None,
    ledger: FlopLedger | None = None,
) -> Trajectory:
    """Stationary iteration on ``A x = b`` with M = I, D, D + L or (D + L) D^-1 (D + L)^H.

    Starts from zero unless ``x0`` is given.
    """
    x0 = np.zeros(sys.n, dtype=np.complex128) if x0 is None else as_cvector(x0, "x0").copy()
    if x0.shape[0] != sys.n:
        raise InvalidInputError(f"x0 has length {x0.shape[0]}, expected {sys.n}")
    A = sys.A.data
    return _stationary(A, sys.b, x0, np.diag(A).real.astype(np.complex128), cfg, ledger)


def iterate_preconditioned(
    pre: PreconditionedSystem,
    cfg: IterativeConfig,
    ledger: FlopLedger | None = None,
) -> Trajectory:
    """Stage 2: stationary iteration on ``Psi x = x_tilde`` from ``x_0 = x_tilde``.

    Theta is I (RI, Jacobi), I + F (GS) or (I + F)(I + F)^H (SSOR), F being the
    strict lower triangle of Psi.
    """
    ones = np.ones(pre.n, dtype=np.complex128)
    return _stationary(pre.Psi, pre.x_tilde, pre.x_tilde.copy(), ones, cfg, ledger)


def residual(sys_or_pre, x, norm: str = "euclid") -> float:
    """Relative residual ``|A x - b| / |b|`` (or ``|Psi x - x_tilde| / |x_tilde|``).

    ``norm="energy"`` measures the residual in the A^-1 norm instead, which is
    the A-norm of the error and decreases monotonically under GS on a
    positive-definite A. Only valid for a GramSystem.
    """
    x = np.asarray(x, dtype=np.complex128)
    if isinstance(sys_or_pre, PreconditionedSystem):
        if norm != "euclid":
            raise InvalidInputError("energy norm is only defined for the Hermitian Gram system")
        r = sys_or_pre.Psi @ x - sys_or_pre.x_tilde
        return float(np.linalg.norm(r) / np.linalg.norm(sys_or_pre.x_tilde))
    A, b = sys_or_pre.A.data, sys_or_pre.b
    r = A @ x - b
    if norm == "euclid":
        return float(np.linalg.norm(r) / np.linalg.norm(b))
    if norm == "energy":
        c = sla.cho_factor(A, lower=True, check_finite=False)
        num = np.vdot(r, sla.cho_solve(c, r, check_finite=False)).real
        den = np.vdot(b, sla.cho_solve(c, b, check_finite=False)).real
        return float(np.sqrt(num / den))
    raise InvalidInputError(f"unknown norm {norm!r}")
