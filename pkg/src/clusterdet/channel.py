"""Clustered-user LEO satellite uplink channel.

Users sit on a flat ground plane (local tangent plane, metres) in discs around
cluster centres. The satellite carries a nadir-facing uniform planar array at
``altitude_m`` above ``nadir_xy``. Each user column mixes a deterministic
line-of-sight phase vector, built from exact element-to-user distances, with
i.i.d. Rayleigh scattering, weighted by a log-normal Rician K-factor.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInputError

SPEED_OF_LIGHT = 299792458.0  # m/s
BOLTZMANN = 1.380649e-23  # J/K


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class SatelliteGeometry:
    altitude_m: float = 550e3
    carrier_hz: float = 2.0e9
    upa_rows: int = 48
    upa_cols: int = 48
    element_spacing_wavelengths: float = 0.5
    nadir_xy: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "nadir_xy", tuple(float(v) for v in self.nadir_xy))
        if not self.altitude_m > 0:
            raise ConfigError("geometry.altitude_m must be > 0")
        if not self.carrier_hz > 0:
            raise ConfigError("geometry.carrier_hz must be > 0")
        if int(self.upa_rows) < 1 or int(self.upa_cols) < 1:
            raise ConfigError("geometry.upa_rows and upa_cols must be positive integers")
        if not self.element_spacing_wavelengths > 0:
            raise ConfigError("geometry.element_spacing_wavelengths must be > 0")
        if len(self.nadir_xy) != 2:
            raise ConfigError("geometry.nadir_xy must have two coordinates")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def n_elements(self) -> int:
        return self.upa_rows * self.upa_cols


@dataclass(frozen=True)
class ClusterLayout:
    cluster_centers: tuple[tuple[float, float], ...]
    cluster_radius_m: float
    users_per_cluster: tuple[int, ...]

    def __post_init__(self):
        centers = tuple((float(c[0]), float(c[1])) for c in self.cluster_centers)
        sizes = tuple(int(n) for n in self.users_per_cluster)
        object.__setattr__(self, "cluster_centers", centers)
        object.__setattr__(self, "users_per_cluster", sizes)
        if not centers:
            raise ConfigError("layout needs at least one cluster")
        if len(sizes) != len(centers):
            raise ConfigError(
                f"layout has {len(centers)} centers but {len(sizes)} entries in users_per_cluster"
            )
        if any(n < 1 for n in sizes):
            raise ConfigError("every cluster needs at least one user")
        if not self.cluster_radius_m >= 0:
            raise ConfigError("layout.cluster_radius_m must be >= 0")
        pts = np.array(centers)
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.hypot(*(pts[i] - pts[j])) <= 2 * self.cluster_radius_m:
                    raise ConfigError(f"clusters {i} and {j} overlap (center distance <= 2 * radius)")

    @classmethod
    def ring(cls, n_clusters, users_per_cluster, ring_radius_m=100e3, cluster_radius_m=500.0):
        """Cluster centres evenly spaced on a circle around the origin."""
        ang = 2 * np.pi * np.arange(n_clusters) / n_clusters
        centers = [(ring_radius_m * math.cos(a), ring_radius_m * math.sin(a)) for a in ang]
        if n_clusters == 1:
            centers = [(0.0, 0.0)]
        return cls(tuple(centers), cluster_radius_m, (users_per_cluster,) * n_clusters)

    @property
    def n_users(self) -> int:
        return sum(self.users_per_cluster)

    @property
    def n_clusters(self) -> int:
        return len(self.users_per_cluster)


@dataclass(frozen=True)
class LinkBudget:
    """Uplink budget from handset to satellite array.

    ``g_over_t_dbk`` and ``fspl_db`` may be left as None to derive them from the
    array/temperature data and from the nadir distance respectively.
    ``misc_loss_db`` lumps the handset polarization mismatch (3 dB for a
    linearly polarized handset against a circularly polarized satellite).
    """

    tx_power_dbm: float = 25.0
    bandwidth_hz: float = 2.0e6
    ambient_temp_k: float = 260.0
    antenna_temp_k: float = 150.0
    element_gain_dbi: float = 3.0
    g_over_t_dbk: float | None = 14.96
    fspl_db: float | None = 153.55
    tx_antenna_gain_dbi: float = 0.0
    misc_loss_db: float = 3.0
    temp_combination: str = "sum"

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ConfigError("budget.bandwidth_hz must be > 0")
        if not (self.ambient_temp_k > 0 and self.antenna_temp_k > 0):
            raise ConfigError("budget temperatures must be > 0")
        if self.temp_combination not in ("sum", "antenna", "ambient"):
            raise ConfigError("budget.temp_combination must be one of sum, antenna, ambient")

    def system_temp_k(self) -> float:
        if self.temp_combination == "sum":
            return self.ambient_temp_k + self.antenna_temp_k
        if self.temp_combination == "antenna":
            return self.antenna_temp_k
        return self.ambient_temp_k

    def resolved_g_over_t(self, n_elements: int) -> float:
        if self.g_over_t_dbk is not None:
            return float(self.g_over_t_dbk)
        gain = self.element_gain_dbi + 10 * math.log10(n_elements)
        return gain - 10 * math.log10(self.system_temp_k())

    def resolved_fspl(self, geom: SatelliteGeometry) -> float:
        if self.fspl_db is not None:
            return float(self.fspl_db)
        return fspl_db(geom.altitude_m, geom.carrier_hz)


@dataclass(frozen=True)
class RicianParams:
    """Log-normal K-factor distribution (parameters in dB).

    When ``seed`` is set the K-factors come from their own stream, so they stay
    fixed while the rest of the realization varies with the trial seed.
    """

    k_mean_db: float = 10.0
    k_std_db: float = 2.0
    seed: int | None = None

    def __post_init__(self):
        if not self.k_std_db >= 0:
            raise ConfigError("rician.k_std_db must be >= 0")


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray
    P: np.ndarray
    K: np.ndarray
    user_positions: np.ndarray
    rho: float

    @property
    def n_antennas(self) -> int:
        return self.H.shape[0]

    @property
    def n_users(self) -> int:
        return self.H.shape[1]

    def with_rho(self, rho: float) -> "ChannelRealization":
        return dataclasses.replace(self, rho=float(rho))

    def __eq__(self, other):
        if not isinstance(other, ChannelRealization):
            return NotImplemented
        return (
            self.rho == other.rho
            and np.array_equal(self.H, other.H)
            and np.array_equal(self.P, other.P)
            and np.array_equal(self.K, other.K)
            and np.array_equal(self.user_positions, other.user_positions)
        )

    __hash__ = None


def place_users(layout: ClusterLayout, seed) -> np.ndarray:
    """Drop users uniformly (by area) in their cluster discs at ground level.

    Returns an ``(N, 3)`` array ordered cluster by cluster.
    """
    rng = np.random.default_rng(seed)
    out = []
    for (cx, cy), n in zip(layout.cluster_centers, layout.users_per_cluster):
        r = layout.cluster_radius_m * np.sqrt(rng.random(n))
        th = 2 * np.pi * rng.random(n)
        out.append(np.column_stack([cx + r * np.cos(th), cy + r * np.sin(th), np.zeros(n)]))
    return np.concatenate(out)


def element_positions(geom: SatelliteGeometry) -> np.ndarray:
    """``(M, 3)`` element coordinates of the nadir-facing UPA, row-major over the grid."""
    d = geom.element_spacing_wavelengths * geom.wavelength_m
    ix = (np.arange(geom.upa_rows) - (geom.upa_rows - 1) / 2) * d + geom.nadir_xy[0]
    iy = (np.arange(geom.upa_cols) - (geom.upa_cols - 1) / 2) * d + geom.nadir_xy[1]
    X, Y = np.meshgrid(ix, iy, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, float(geom.altitude_m))])


def _distances(elements, users):
    diff = elements[:, None, :] - users[None, :, :]
    return np.sqrt(np.einsum("mnk,mnk->mn", diff, diff))


def los_vector(user_pos, elements, carrier_hz: float) -> np.ndarray:
    """Unit-modulus LOS phase vector ``exp(-j 2 pi d_m / lambda)`` over the elements."""
    user_pos = np.asarray(user_pos, dtype=float).reshape(1, 3)
    elements = np.asarray(elements, dtype=float).reshape(-1, 3)
    if not (np.all(np.isfinite(user_pos)) and np.all(np.isfinite(elements))):
        raise InvalidInputError("positions must be finite")
    lam = SPEED_OF_LIGHT / carrier_hz
    d = _distances(elements, user_pos)[:, 0]
    return np.exp(-2j * np.pi * (d / lam))


def fspl_db(distance_m: float, carrier_hz: float) -> float:
    """Free-space path loss ``20 log10(4 pi d f / c)`` in dB."""
    if not distance_m > 0:
        raise InvalidInputError("distance_m must be > 0")
    return 20.0 * math.log10(4 * math.pi * distance_m * carrier_hz / SPEED_OF_LIGHT)


def link_snr(budget: LinkBudget, fspl: float, n_elements: int = 48 * 48) -> float:
    """Linear SNR from the dB chain.

    tx power + handset gain + G/T - FSPL - misc losses - 10log10(k) - 10log10(B)
    """
    tx_dbw = budget.tx_power_dbm - 30.0
    snr_db = (
        tx_dbw
        + budget.tx_antenna_gain_dbi
        + budget.resolved_g_over_t(n_elements)
        - fspl
        - budget.misc_loss_db
        - 10 * math.log10(BOLTZMANN)
        - 10 * math.log10(budget.bandwidth_hz)
    )
    return 10.0 ** (snr_db / 10.0)


def draw_k_factors(rician: RicianParams, n: int, rng) -> np.ndarray:
    if rician.seed is not None:
        rng = np.random.default_rng(rician.seed)
    k_db = rician.k_mean_db + rician.k_std_db * rng.standard_normal(n)
    return 10.0 ** (k_db / 10.0)


def rician_channel(
    geom: SatelliteGeometry,
    layout: ClusterLayout,
    budget: LinkBudget,
    rician: RicianParams,
    seed,
) -> ChannelRealization:
    """Draw one channel realization.

    Column n is ``sqrt(P_n) (sqrt(K_n/(K_n+1)) a_n + sqrt(1/(K_n+1)) g_n)`` where
    ``a_n`` is the LOS phase vector scaled to unit norm and ``g_n`` has i.i.d.
    CN(0, 1/M) entries, so ``E|h_n|^2 = P_n`` for every K.

    ``P_n`` is the path gain relative to the budget's reference FSPL, so
    ``rho * P_n`` is the per-user SNR after array combining.
    """
    rng = np.random.default_rng(seed)
    users = place_users(layout, rng)
    elements = element_positions(geom)
    M, N = elements.shape[0], users.shape[0]
    lam = geom.wavelength_m

    d = _distances(elements, users)
    los = np.exp(-2j * np.pi * (d / lam)) / math.sqrt(M)
    K = draw_k_factors(rician, N, rng)
    nlos = (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) * math.sqrt(0.5 / M)

    center = np.array([geom.nadir_xy[0], geom.nadir_xy[1], geom.altitude_m])
    ranges = np.linalg.norm(users - center, axis=1)
    ref_fspl = budget.resolved_fspl(geom)
    P = 10.0 ** ((ref_fspl - np.array([fspl_db(r, geom.carrier_hz) for r in ranges])) / 10.0)

    H = np.sqrt(P) * (np.sqrt(K / (K + 1)) * los + np.sqrt(1 / (K + 1)) * nlos)
    rho = link_snr(budget, ref_fspl, M)
    return ChannelRealization(H=H, P=P, K=K, user_positions=users, rho=rho)


def corrupt_csi(chan: ChannelRealization, nmse_db: float, seed) -> ChannelRealization:
    """Least-squares style estimate ``H + E`` with ``E|E|_F^2 / |H|_F^2 = 10^(-|nmse_db|/10)``."""
    if not np.isfinite(nmse_db):
        raise InvalidInputError("nmse_db must be finite")
    rng = np.random.default_rng(seed)
    M, N = chan.H.shape
    nmse = 10.0 ** (-abs(nmse_db) / 10.0)
    var = nmse * np.sum(np.abs(chan.H) ** 2) / (M * N)
    E = (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) * math.sqrt(var / 2)
    return dataclasses.replace(chan, H=chan.H + E)


# -- export --------------------------------------------------------------------

_MAGIC = b"CDHM"
_HEADER = struct.Struct("<4sIQQ4s")  # magic, version, rows, cols, dtype tag


def save_matrix_binary(H, path) -> None:
    """Write ``H`` as little-endian: header, then column-major interleaved re/im float64."""
    H = np.asarray(H, dtype=np.complex128)
    rows, cols = H.shape
    payload = np.asfortranarray(H).ravel(order="F").astype("<c16").tobytes()
    Path(path).write_bytes(_HEADER.pack(_MAGIC, 1, rows, cols, b"c128") + payload)


def load_matrix_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, version, rows, cols, tag = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1 or tag != b"c128":
        raise InvalidInputError(f"{path}: not a clusterdet matrix file")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if data.size != rows * cols:
        raise InvalidInputError(f"{path}: payload holds {data.size} entries, header says {rows * cols}")
    return data.reshape((rows, cols), order="F").astype(np.complex128)


def matrix_to_json(H) -> str:
    H = np.asarray(H, dtype=np.complex128)
    return json.dumps({"rows": H.shape[0], "cols": H.shape[1], "re": H.real.tolist(), "im": H.imag.tolist()})


def matrix_from_json(text: str) -> np.ndarray:
    obj = json.loads(text)
    H = np.array(obj["re"], dtype=float) + 1j * np.array(obj["im"], dtype=float)
    if H.shape != (obj["rows"], obj["cols"]):
        raise InvalidInputError("JSON matrix dimensions do not match its payload")
    return H
