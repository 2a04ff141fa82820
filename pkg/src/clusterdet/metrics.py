"""Symbol mapping, SER, condition numbers, correlation maps and CDFs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .detectors import ClusterPartition, PreconditionedSystem
from .errors import InvalidInputError, NotPositiveDefiniteError
from .linalg import as_cvector, as_hermitian, extreme_eigenvalues

HEATMAP_FLOOR_DB = -60.0


def _gray(n):
    return n ^ (n >> 1)


@dataclass(frozen=True)
class Constellation:
    """Square Gray-labelled QAM with unit average energy.

    Index ``k`` carries bits ``k`` (MSB first); the upper half of the bits picks
    the in-phase level and the lower half the quadrature level, each through a
    Gray map, so nearest neighbours differ in one bit.
    """

    order: int = 4
    points: np.ndarray = field(init=False, repr=False, compare=False)
    bits: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order not in (4, 16, 64):
            raise InvalidInputError(f"unsupported QAM order {self.order}; use 4, 16 or 64")
        side = math.isqrt(self.order)
        half = side.bit_length() - 1
        levels = 2 * np.arange(side) - (side - 1)  # -(side-1) .. side-1
        # position of Gray word g on the PAM axis
        pos = np.empty(side, dtype=int)
        for p in range(side):
            pos[_gray(p)] = p
        k = np.arange(self.order)
        i_idx, q_idx = k >> half, k & (side - 1)
        pts = levels[pos[i_idx]] + 1j * levels[pos[q_idx]]
        pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
        nbits = 2 * half
        bits = (k[:, None] >> np.arange(nbits - 1, -1, -1)) & 1
        pts.setflags(write=False)
        bits.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bits", bits)

    @property
    def bits_per_symbol(self) -> int:
        return self.bits.shape[1]


def modulate(symbols, const: Constellation, sigma_x: float = 1.0) -> np.ndarray:
    """Map integer indices to constellation points scaled to average power ``sigma_x**2``."""
    s = np.asarray(symbols)
    if s.size and (not np.issubdtype(s.dtype, np.integer) or s.min() < 0 or s.max() >= const.order):
        raise InvalidInputError(f"symbol indices must be integers in [0, {const.order})")
    return sigma_x * const.points[s]


def demodulate(x_hat, const: Constellation, sigma_x: float = 1.0) -> np.ndarray:
    """Nearest-point hard decisions; exact ties go to the lowest index.

    Works on any array shape (e.g. a whole ``(T, N)`` trajectory at once).
    """
    x = np.asarray(x_hat, dtype=np.complex128)
    if not np.all(np.isfinite(x)):
        # huge-but-finite values are fine; NaN/Inf has no nearest point
        raise InvalidInputError("cannot demodulate non-finite estimates")
    d = np.abs(x[..., None] - sigma_x * const.points) ** 2
    return np.argmin(d, axis=-1)


def measure_ser(truth, detected) -> float:
    truth, detected = np.asarray(truth), np.asarray(detected)
    if truth.shape != detected.shape:
        raise InvalidInputError(f"length mismatch: {truth.shape} vs {detected.shape}")
    if truth.size == 0:
        raise InvalidInputError("cannot measure SER on empty input")
    return float(np.mean(truth != detected))


def ser_stderr(ser, n):
    """Binomial standard error of an SER estimated from ``n`` symbols."""
    ser = np.asarray(ser, dtype=float)
    return np.sqrt(ser * (1.0 - ser) / n)


def qpsk_ser_awgn(noise_std_per_dim: float) -> float:
    """Exact QPSK SER on a unit-gain AWGN channel (unit-energy symbols)."""
    from scipy.special import erfc

    q = 0.5 * erfc((1 / math.sqrt(2)) / noise_std_per_dim / math.sqrt(2))
    return 2 * q - q * q


def condition_number(S) -> float:
    """Eigenvalue condition number of a Hermitian positive-definite matrix."""
    lo, hi = extreme_eigenvalues(as_hermitian(S))
    if lo <= 0:
        raise NotPositiveDefiniteError(0, f"smallest eigenvalue {lo:.3e} is not positive")
    return hi / lo


def preconditioned_condition_number(pre: PreconditionedSystem) -> float:
    """Eigenvalue condition number of ``Psi = Phi^-1 A``.

    Psi is not Hermitian, but with ``Phi^-1 = R R^H`` (Cholesky, blockwise) it
    is similar to the Hermitian ``R^H A R``, whose spectrum is computed instead.
    """
    A = pre.system.A.data
    R = np.zeros_like(A)
    for G, s in zip(pre.phi_inv_blocks, pre.partition.slices()):
        R[s, s] = sla.cholesky(G, lower=True, check_finite=False)
    B = R.conj().T @ A @ R
    B = np.tril(B, -1) + np.tril(B, -1).conj().T + np.diag(np.diag(B).real)
    return condition_number(B)


def gershgorin_bound(pre: PreconditionedSystem) -> tuple[float, bool]:
    """Upper bound ``(1 + e) / (1 - e)`` on kappa(Psi) with ``e = |Phi^-1 Delta|``.

    For ``e >= 1`` the bound is infinite and holds vacuously.
    """
    e = pre.delta_norm
    if e >= 1:
        return math.inf, True
    bound = (1 + e) / (1 - e)
    return bound, preconditioned_condition_number(pre) <= bound + 1e-6


def correlation_heatmap(A, floor_db: float = HEATMAP_FLOOR_DB) -> np.ndarray:
    """``20 log10(|A_ij| / max|A|)`` clamped below at ``floor_db``."""
    mag = np.abs(np.asarray(A))
    peak = mag.max()
    if peak == 0:
        raise InvalidInputError("correlation heatmap of an all-zero matrix")
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag / peak)
    return np.maximum(db, floor_db)


def intra_inter_gap_db(A, part: ClusterPartition) -> tuple[float | None, float | None, float | None]:
    """Mean |A_ij| over intra-cluster off-diagonal and over inter-cluster entries.

    Returns ``(intra_db, inter_db, gap_db)`` relative to max|A|. Inter and gap
    are None with a single cluster; intra is None when every cluster has one user.
    """
    mag = np.abs(np.asarray(A))
    mag = mag / mag.max()
    lab = part.labels()
    same = lab[:, None] == lab[None, :]
    offdiag = ~np.eye(len(lab), dtype=bool)
    intra = mag[same & offdiag]
    inter = mag[~same]
    intra_db = 20 * math.log10(intra.mean()) if intra.size else None
    inter_db = 20 * math.log10(inter.mean()) if inter.size else None
    gap = intra_db - inter_db if (intra_db is not None and inter_db is not None) else None
    return intra_db, inter_db, gap


@dataclass(frozen=True)
class CdfSeries:
    """Right-continuous step CDF: ``F(v) = P(X <= v)`` jumps at each value."""

    values: tuple[float, ...]
    probabilities: tuple[float, ...]

    def evaluate(self, v: float) -> float:
        i = np.searchsorted(self.values, v, side="right")
        return 0.0 if i == 0 else self.probabilities[i - 1]

    def quantile(self, p: float) -> float:
        i = int(np.searchsorted(self.probabilities, p - 1e-12, side="left"))
        return self.values[min(i, len(self.values) - 1)]


def empirical_cdf(samples) -> CdfSeries:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise InvalidInputError("empirical CDF of an empty sample")
    vals, counts = np.unique(x, return_counts=True)
    probs = np.cumsum(counts) / x.size
    return CdfSeries(tuple(vals.tolist()), tuple(probs.tolist()))


@dataclass(frozen=True)
class SerCurve:
    """SER per x-axis point with binomial standard errors.

    ``axis`` is ``"iteration"`` or ``"snr_db"``; ``symbols`` is the number of
    decisions behind each point and ``trials`` the channel realizations.
    """

    method: str
    axis: str
    x: tuple
    ser: tuple
    stderr: tuple
    trials: int
    symbols: int

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError("a SER curve needs at least one trial")
        if any(not 0.0 <= s <= 1.0 for s in self.ser):
            raise InvalidInputError("SER values must lie in [0, 1]")

    @classmethod
    def from_counts(cls, method, axis, x, errors, symbols, trials):
        ser = np.asarray(errors, dtype=float) / symbols
        return cls(
            method=method,
            axis=axis,
            x=tuple(np.asarray(x).tolist()),
            ser=tuple(ser.tolist()),
            stderr=tuple(ser_stderr(ser, symbols).tolist()),
            trials=int(trials),
            symbols=int(symbols),
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "axis": self.axis,
            "x": list(self.x),
            "ser": list(self.ser),
            "stderr": list(self.stderr),
            "trials": self.trials,
            "symbols": self.symbols,
        }

    @classmethod
    def from_dict(cls, d) -> "SerCurve":
        return cls(d["method"], d["axis"], tuple(d["x"]), tuple(d["ser"]), tuple(d["stderr"]), d["trials"], d["symbols"])


def iterations_to_reach(curve_ser, target_ser: float, stderr: float) -> int | None:
    """First iteration index from which the curve stays within ``2 * stderr`` of the target.

    Index 0 is the start point. None when the final point is still outside.
    """
    s = np.asarray(curve_ser, dtype=float)
    ok = np.abs(s - target_ser) <= 2 * stderr
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return 0 if bad.size == 0 else int(bad[-1] + 1)
