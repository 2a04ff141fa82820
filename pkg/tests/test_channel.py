import math
import struct

import numpy as np
import pytest

from clusterdet.channel import (
    BOLTZMANN,
    ClusterLayout,
    LinkBudget,
    RicianParams,
    SatelliteGeometry,
    corrupt_csi,
    element_positions,
    fspl_db,
    link_snr,
    load_matrix_binary,
    los_vector,
    matrix_from_json,
    matrix_to_json,
    place_users,
    rician_channel,
    save_matrix_binary,
)
from clusterdet.detectors import ClusterPartition, build_gram
from clusterdet.errors import ConfigError, InvalidInputError
from clusterdet.metrics import intra_inter_gap_db

# independent high-precision evaluations of the closed forms (frozen)
WAVELENGTH_2GHZ = 0.149896229
FSPL_550KM = 153.27563692504787
FSPL_568KM = 153.55534984938338
SNR_DB_26DBM = 19.998867216577853
SNR_DB_16DBM = 9.998867216577853

SMALL = SatelliteGeometry(upa_rows=16, upa_cols=16)


def _channel(k_mean_db, seed, geom=SMALL, layout=None, k_std_db=0.0):
    layout = layout or ClusterLayout.ring(4, 4)
    return rician_channel(geom, layout, LinkBudget(), RicianParams(k_mean_db, k_std_db), seed)


# -- configuration types -----------------------------------------------------------


def test_geometry_defaults_and_validation():
    g = SatelliteGeometry()
    assert g.n_elements == 2304
    assert g.wavelength_m == pytest.approx(WAVELENGTH_2GHZ, rel=1e-12)
    with pytest.raises(ConfigError):
        SatelliteGeometry(altitude_m=0)
    with pytest.raises(ConfigError):
        SatelliteGeometry(element_spacing_wavelengths=-0.5)


def test_layout_validation():
    with pytest.raises(ConfigError, match="overlap"):
        ClusterLayout(((0, 0), (500, 0)), 300.0, (2, 2))
    with pytest.raises(ConfigError, match="users_per_cluster"):
        ClusterLayout(((0, 0),), 10.0, (2, 2))
    with pytest.raises(ConfigError):
        ClusterLayout(((0, 0),), -1.0, (2,))
    ring = ClusterLayout.ring(8, 8)
    assert ring.n_users == 64 and ring.n_clusters == 8
    radii = np.hypot(*np.array(ring.cluster_centers).T)
    np.testing.assert_allclose(radii, 100e3)


def test_budget_validation():
    with pytest.raises(ConfigError):
        LinkBudget(bandwidth_hz=0)
    with pytest.raises(ConfigError):
        LinkBudget(temp_combination="product")
    assert LinkBudget().system_temp_k() == 410.0


# -- place_users ---------------------------------------------------------------------


def test_place_users_degenerate_radius():
    layout = ClusterLayout(((1000.0, -20.0),), 0.0, (3,))
    np.testing.assert_array_equal(place_users(layout, 1), [[1000.0, -20.0, 0.0]] * 3)


def test_place_users_within_discs():
    layout = ClusterLayout.ring(4, 4)
    pos = place_users(layout, 7)
    assert pos.shape == (16, 3)
    assert np.all(pos[:, 2] == 0)
    centers = np.repeat(np.array(layout.cluster_centers), 4, axis=0)
    assert np.all(np.hypot(*(pos[:, :2] - centers).T) <= 500.0)


def test_place_users_deterministic():
    layout = ClusterLayout.ring(4, 4)
    np.testing.assert_array_equal(place_users(layout, 42), place_users(layout, 42))
    assert not np.array_equal(place_users(layout, 42), place_users(layout, 43))


def test_place_users_uniform_by_area():
    layout = ClusterLayout(((0.0, 0.0),), 1.0, (20000,))
    r = np.hypot(*place_users(layout, 3)[:, :2].T)
    # P(r <= 1/2) = 1/4 for a uniform disc
    assert np.mean(r <= 0.5) == pytest.approx(0.25, abs=0.01)


# -- element_positions ---------------------------------------------------------------


def test_elements_single():
    np.testing.assert_array_equal(element_positions(SatelliteGeometry(upa_rows=1, upa_cols=1)), [[0, 0, 550e3]])


def test_elements_2x2_square():
    p = element_positions(SatelliteGeometry(upa_rows=2, upa_cols=2))
    side = WAVELENGTH_2GHZ / 2
    np.testing.assert_allclose(np.sort(p[:, 0]), [-side / 2, -side / 2, side / 2, side / 2], rtol=1e-12)
    d = np.linalg.norm(p[:, None] - p[None], axis=2)
    np.testing.assert_allclose(np.sort(d[0])[1:], [side, side, side * math.sqrt(2)], rtol=1e-12)
    assert np.all(p[:, 2] == 550e3)


def test_elements_full_array():
    p = element_positions(SatelliteGeometry())
    assert p.shape == (2304, 3)
    np.testing.assert_allclose(p[:, :2].mean(axis=0), 0, atol=1e-12)


# -- los_vector ----------------------------------------------------------------------


def test_los_unit_modulus(rng):
    els = rng.normal(size=(50, 3)) * 10
    a = los_vector(rng.normal(size=3) * 1e4, els, 2e9)
    np.testing.assert_allclose(np.abs(a), 1.0, rtol=1e-14)
    assert np.vdot(a, a).real == pytest.approx(50.0, rel=1e-13)


def test_los_integer_wavelength_phase():
    lam = 0.5  # metres, f = c / 0.5
    a = los_vector([0.0, 0.0, 0.0], [[0.0, 0.0, 7 * lam]], 299792458.0 / lam)
    assert abs(a[0] - 1.0) <= 1e-9


def test_los_coincident_users():
    els = element_positions(SMALL)
    a1 = los_vector([300.0, 10.0, 0.0], els, 2e9)
    a2 = los_vector([300.0, 10.0, 0.0], els, 2e9)
    assert abs(np.vdot(a1, a2)) / len(els) == pytest.approx(1.0, rel=1e-12)


def test_los_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        los_vector([np.nan, 0, 0], [[0, 0, 1]], 2e9)


# -- rician_channel ------------------------------------------------------------------


def test_pure_los_limit():
    chan = _channel(200.0, 5)
    els = element_positions(SMALL)
    for n in range(chan.n_users):
        expected = math.sqrt(chan.P[n]) * los_vector(chan.user_positions[n], els, SMALL.carrier_hz) / math.sqrt(SMALL.n_elements)
        err = np.linalg.norm(chan.H[:, n] - expected) / np.linalg.norm(expected)
        assert err <= 1e-6


@pytest.mark.parametrize("k_mean_db", [-200.0, 0.0, 10.0])
def test_channel_energy_matches_path_gain(k_mean_db):
    ratios = np.array([np.sum(np.abs(c.H) ** 2, axis=0) / c.P for c in (_channel(k_mean_db, s) for s in range(1000))])
    assert ratios.mean() == pytest.approx(1.0, rel=0.05)


def test_channel_shapes_and_positivity():
    chan = rician_channel(SatelliteGeometry(), ClusterLayout.ring(4, 4), LinkBudget(), RicianParams(), 0)
    assert chan.H.shape == (2304, 16)
    assert np.all(chan.P > 0) and np.all(chan.K > 0) and chan.rho > 0
    # users sit ~100 km off nadir, so path gain is just below the 153.55 dB reference
    assert np.all((chan.P > 0.9) & (chan.P < 1.1))


def test_channel_deterministic():
    args = (SatelliteGeometry(), ClusterLayout.ring(4, 4), LinkBudget(), RicianParams())
    assert rician_channel(*args, 99) == rician_channel(*args, 99)
    assert rician_channel(*args, 99) != rician_channel(*args, 100)


def test_fixed_k_seed_pins_k_factors():
    args = (SMALL, ClusterLayout.ring(4, 4), LinkBudget(), RicianParams(seed=3))
    assert np.array_equal(rician_channel(*args, 1).K, rician_channel(*args, 2).K)


@pytest.mark.parametrize("seed", range(5))
def test_intra_cluster_correlation_exceeds_inter(seed):
    chan = rician_channel(SatelliteGeometry(), ClusterLayout.ring(4, 4), LinkBudget(), RicianParams(), seed)
    A = build_gram(chan, np.zeros(chan.n_antennas)).A.data
    _, _, gap = intra_inter_gap_db(A, ClusterPartition.uniform(16, 4))
    assert gap >= 10.0


# -- fspl and link budget ------------------------------------------------------------


def test_fspl_zero_crossing():
    f = 2e9
    assert fspl_db(WAVELENGTH_2GHZ / (4 * math.pi), f) == pytest.approx(0.0, abs=1e-12)


def test_fspl_nadir_and_slant():
    assert fspl_db(550e3, 2e9) == pytest.approx(FSPL_550KM, abs=1e-9)
    assert fspl_db(568e3, 2e9) == pytest.approx(FSPL_568KM, abs=1e-9)
    assert round(fspl_db(568e3, 2e9), 2) == 153.56 and fspl_db(567.65e3, 2e9) == pytest.approx(153.55, abs=1e-4)


def test_fspl_rejects_non_positive_distance():
    with pytest.raises(InvalidInputError):
        fspl_db(0.0, 2e9)


def test_link_snr_trivial_chain():
    # kTB = -30 dBm (1e-6 W) with every gain and loss zero and 0 dBm transmit power
    budget = LinkBudget(tx_power_dbm=0.0, g_over_t_dbk=0.0, misc_loss_db=0.0, bandwidth_hz=1e-6 / BOLTZMANN)
    assert link_snr(budget, 0.0) == pytest.approx(1000.0, rel=1e-12)


@pytest.mark.parametrize("dbm,expected", [(26.0, SNR_DB_26DBM), (16.0, SNR_DB_16DBM)])
def test_link_snr_paper_budget(dbm, expected):
    budget = LinkBudget(tx_power_dbm=dbm)
    snr_db = 10 * math.log10(link_snr(budget, budget.fspl_db))
    assert snr_db == pytest.approx(expected, abs=1e-9)
    assert abs(snr_db - (20.0 if dbm == 26 else 10.0)) <= 0.5


def test_link_snr_derived_g_over_t():
    budget = LinkBudget(g_over_t_dbk=None)
    assert budget.resolved_g_over_t(2304) == pytest.approx(3 + 10 * math.log10(2304) - 10 * math.log10(410), abs=1e-12)


# -- corrupt_csi ---------------------------------------------------------------------


def test_csi_noiseless_limit():
    chan = _channel(10.0, 0)
    est = corrupt_csi(chan, -400.0, 1)
    np.testing.assert_allclose(est.H, chan.H, atol=1e-9, rtol=0)
    assert est.P is chan.P and est.rho == chan.rho


def _nmse_batch(chan, seeds, nmse_db=10.0):
    h2 = np.sum(np.abs(chan.H) ** 2)
    return np.array([np.sum(np.abs(corrupt_csi(chan, nmse_db, s).H - chan.H) ** 2) / h2 for s in seeds])


def test_csi_error_energy():
    chan = _channel(10.0, 0)
    assert _nmse_batch(chan, range(500)).mean() == pytest.approx(0.1, rel=0.05)


def test_csi_error_independent_of_seed_batch():
    chan = _channel(10.0, 0)
    a, b = _nmse_batch(chan, range(0, 300)).mean(), _nmse_batch(chan, range(1000, 1300)).mean()
    assert abs(a - b) <= 0.05 * a


def test_csi_deterministic_and_validates():
    chan = _channel(10.0, 0)
    assert corrupt_csi(chan, -10, 4) == corrupt_csi(chan, -10, 4)
    with pytest.raises(InvalidInputError):
        corrupt_csi(chan, float("nan"), 4)


# -- export --------------------------------------------------------------------------


def test_binary_layout(tmp_path):
    H = np.array([[1 + 2j, 3 + 4j], [5 + 6j, 7 + 8j], [9 + 0j, -1j]])
    path = tmp_path / "h.bin"
    save_matrix_binary(H, path)
    raw = path.read_bytes()
    magic, version, rows, cols, tag = struct.unpack_from("<4sIQQ4s", raw)
    assert (magic, version, rows, cols, tag) == (b"CDHM", 1, 3, 2, b"c128")
    payload = np.frombuffer(raw[28:], dtype="<f8")
    # column-major, interleaved re/im
    np.testing.assert_array_equal(payload[:6], [1, 2, 5, 6, 9, 0])
    np.testing.assert_array_equal(load_matrix_binary(path), H)


def test_binary_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"XXXX" + bytes(24))
    with pytest.raises(InvalidInputError):
        load_matrix_binary(path)


def test_json_round_trip():
    H = _channel(10.0, 0).H[:5, :3]
    assert np.array_equal(matrix_from_json(matrix_to_json(H)), H)
