"""The four case studies: correlation structure, condition numbers,
SER convergence with perfect CSI, and SER with estimated CSI.

Every study is a pure function of its ScenarioConfig (plus an optional channel
factory used by tests to inject synthetic channels). Trials share the channel,
symbol and noise streams across studies, so study 4 with negligible CSI error
reproduces study 3 decisions at the same SNR.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .channel import ChannelRealization, corrupt_csi, rician_channel
from .config import ScenarioConfig
from .detectors import (
    ClusterPartition,
    FlopLedger,
    IterativeConfig,
    Method,
    build_gram,
    iterate_conventional,
    iterate_preconditioned,
    lmmse_direct,
    residual,
    stage1_block_invert,
)
from .metrics import (
    CdfSeries,
    Constellation,
    SerCurve,
    condition_number,
    correlation_heatmap,
    demodulate,
    empirical_cdf,
    gershgorin_bound,
    intra_inter_gap_db,
    iterations_to_reach,
    modulate,
    preconditioned_condition_number,
)
from .montecarlo import monte_carlo, trial_rng

ChannelFactory = Callable[[ScenarioConfig, np.random.Generator], ChannelRealization]

CONVERGED_RESIDUAL = 1e-6
CSI_STREAM = 1


def default_channel(cfg: ScenarioConfig, rng) -> ChannelRealization:
    return rician_channel(cfg.geometry, cfg.layout, cfg.budget, cfg.rician, rng)


@dataclass
class ExperimentResult:
    study: str
    config: dict
    curves: list = field(default_factory=list)
    cdfs: dict = field(default_factory=dict)
    heatmap: list | None = None
    summary: dict = field(default_factory=dict)
    ledger: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    version: str = __version__
    schema_version: str = "1"

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "study": self.study,
            "version": self.version,
            "wall_time_s": self.wall_time_s,
            "config": self.config,
            "summary": self.summary,
            "ledger": self.ledger,
            "curves": [c.to_dict() for c in self.curves],
            "cdfs": {k: {"values": list(v.values), "probabilities": list(v.probabilities)} for k, v in self.cdfs.items()},
            "heatmap": self.heatmap,
        }

    @classmethod
    def from_dict(cls, d) -> "ExperimentResult":
        return cls(
            study=d["study"],
            config=d["config"],
            curves=[SerCurve.from_dict(c) for c in d["curves"]],
            cdfs={k: CdfSeries(tuple(v["values"]), tuple(v["probabilities"])) for k, v in d["cdfs"].items()},
            heatmap=d["heatmap"],
            summary=d["summary"],
            ledger=d["ledger"],
            wall_time_s=d["wall_time_s"],
            version=d["version"],
            schema_version=d["schema_version"],
        )

    def numeric_payload(self) -> dict:
        """Everything except timing and version, for reproducibility checks."""
        d = self.to_dict()
        d.pop("wall_time_s")
        d.pop("version")
        return d

    def curve(self, method: str) -> SerCurve:
        for c in self.curves:
            if c.method == method:
                return c
        raise KeyError(method)


def _partition(cfg: ScenarioConfig) -> ClusterPartition:
    return ClusterPartition(cfg.layout.users_per_cluster)


def _transmit(cfg, chan, rng, const):
    """Draw symbol indices and a unit-variance complex noise vector."""
    idx = rng.integers(0, const.order, chan.n_users)
    M = chan.n_antennas
    w = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) * math.sqrt(0.5)
    return idx, modulate(idx, const), w


def _errors_along(traj, idx, const, length):
    """Symbol-error count at t = 0..length-1, holding the last iterate after truncation."""
    xs = traj.with_start()
    if xs.shape[0] < length:
        xs = np.vstack([xs, np.repeat(xs[-1:], length - xs.shape[0], axis=0)])
    return np.sum(demodulate(xs[:length], const) != idx, axis=1)


def _sum_ledgers(stats, key) -> dict:
    total = {}
    for out in stats.outputs:
        for k, v in out[key].items():
            total[k] = total.get(k, 0) + v
    return total


# -- case study 1 -----------------------------------------------------------------


def run_case_study_1(cfg: ScenarioConfig, channel_factory: ChannelFactory | None = None) -> ExperimentResult:
    """Normalized |A| heatmap (dB) of one realization and the intra/inter correlation gap."""
    t0 = time.perf_counter()
    factory = channel_factory or default_channel
    rng = trial_rng(cfg.seed, 0)
    chan = factory(cfg, rng).with_rho(10 ** (cfg.snr_db / 10))
    A = build_gram(chan, np.zeros(chan.n_antennas)).A.data
    heat = correlation_heatmap(A)
    part = _partition(cfg)
    intra, inter, gap = intra_inter_gap_db(A, part)
    lab = part.labels()
    inter_cells = heat[lab[:, None] != lab[None, :]]
    summary = {
        "n_users": chan.n_users,
        "n_clusters": cfg.layout.n_clusters,
        "intra_mean_db": intra,
        "inter_mean_db": inter,
        "gap_db": gap,
        "gap_applicable": gap is not None,
        "inter_db_p05": float(np.percentile(inter_cells, 5)) if inter_cells.size else None,
        "inter_db_p95": float(np.percentile(inter_cells, 95)) if inter_cells.size else None,
    }
    return ExperimentResult(
        study="study1",
        config=cfg.to_dict(),
        heatmap=heat.tolist(),
        summary=summary,
        wall_time_s=time.perf_counter() - t0,
    )


# -- case study 2 -----------------------------------------------------------------


def run_case_study_2(
    cfg: ScenarioConfig, threads: int = 1, channel_factory: ChannelFactory | None = None
) -> ExperimentResult:
    """Distributions of kappa(A) and kappa(Psi) plus the Gershgorin bound check."""
    t0 = time.perf_counter()
    factory = channel_factory or default_channel
    part = _partition(cfg)
    rho = 10 ** (cfg.snr_db / 10)

    def trial(rng, i):
        chan = factory(cfg, rng).with_rho(rho)
        sys = build_gram(chan, np.zeros(chan.n_antennas))
        pre = stage1_block_invert(sys, part)
        k_a = condition_number(sys.A)
        k_psi = preconditioned_condition_number(pre)
        bound, holds = gershgorin_bound(pre)
        return {
            "kappa_A": k_a,
            "kappa_Psi": k_psi,
            "delta_norm": pre.delta_norm,
            "bound_applicable": pre.delta_norm < 1,
            "bound_holds": holds,
        }

    stats = monte_carlo(cfg.trials, cfg.seed, trial, threads=threads)
    ka, kp = stats.collect("kappa_A"), stats.collect("kappa_Psi")
    applicable = stats.collect("bound_applicable")
    holds = stats.collect("bound_holds")
    summary = {
        "trials": stats.succeeded,
        "failed_trials": len(stats.failures),
        "median_kappa_A": float(np.median(ka)),
        "median_kappa_Psi": float(np.median(kp)),
        "median_ratio": float(np.median(ka) / np.median(kp)),
        "median_per_sample_ratio": float(np.median(ka / kp)),
        "psi_below_A_fraction": float(np.mean(kp < ka)),
        "median_delta_norm": float(np.median(stats.collect("delta_norm"))),
        "bound_applicable": int(np.sum(applicable)),
        "bound_holds": int(np.sum(holds & applicable)),
    }
    return ExperimentResult(
        study="study2",
        config=cfg.to_dict(),
        cdfs={"kappa_A": empirical_cdf(ka), "kappa_Psi": empirical_cdf(kp)},
        summary=summary,
        wall_time_s=time.perf_counter() - t0,
    )


# -- case study 3 -----------------------------------------------------------------


def run_case_study_3(
    cfg: ScenarioConfig, threads: int = 1, channel_factory: ChannelFactory | None = None
) -> ExperimentResult:
    """SER versus iteration index at a fixed SNR for conventional and two-stage detectors."""
    t0 = time.perf_counter()
    factory = channel_factory or default_channel
    part = _partition(cfg)
    const = Constellation(cfg.modulation_order)
    rho = 10 ** (cfg.snr_db / 10)
    T = cfg.iterations
    methods = cfg.detectors

    def trial(rng, i):
        chan = factory(cfg, rng).with_rho(rho)
        idx, x, w = _transmit(cfg, chan, rng, const)
        y = chan.H @ x + w / math.sqrt(rho)
        base = FlopLedger()
        sys = build_gram(chan, y, ledger=base)
        x_l = lmmse_direct(sys)
        stage1 = FlopLedger()
        pre = stage1_block_invert(sys, part, ledger=stage1)
        out = {"symbols": chan.n_users, "lmmse": int(np.sum(demodulate(x_l, const) != idx))}
        for m in methods:
            it = IterativeConfig(method=m, max_iters=T, omega=cfg.omega)
            conv_l, prop_l = FlopLedger(), FlopLedger()
            conv_l.merge(base)
            prop_l.merge(base)
            prop_l.merge(stage1)
            conv = iterate_conventional(sys, it, ledger=conv_l)
            prop = iterate_preconditioned(pre, it, ledger=prop_l)
            out[f"conv_{m}"] = _errors_along(conv, idx, const, T + 1)
            out[f"prop_{m}"] = _errors_along(prop, idx, const, T + 1)
            out[f"conv_{m}_diverged"] = int(conv.diverged)
            out[f"prop_{m}_diverged"] = int(prop.diverged)
            out[f"conv_{m}_unconverged"] = int(conv.diverged or residual(sys, conv.final) > CONVERGED_RESIDUAL)
            out[f"prop_{m}_unconverged"] = int(prop.diverged or residual(sys, prop.final) > CONVERGED_RESIDUAL)
            out[f"ledger_conv_{m}"] = conv_l.to_dict()
            out[f"ledger_prop_{m}"] = prop_l.to_dict()
        return out

    stats = monte_carlo(cfg.trials, cfg.seed, trial, threads=threads)
    n_sym = int(stats.total("symbols"))
    ts = np.arange(T + 1)
    lmmse_ser, lmmse_se = stats.ser("lmmse")
    curves = [SerCurve.from_counts("LMMSE", "iteration", ts, np.full(T + 1, stats.total("lmmse")), n_sym, stats.succeeded)]
    summary = {
        "trials": stats.succeeded,
        "failed_trials": len(stats.failures),
        "snr_db": cfg.snr_db,
        "lmmse_ser": float(lmmse_ser),
        "lmmse_stderr": float(lmmse_se),
        "methods": {},
    }
    ledger = {}
    # floor keeps the band nonzero when LMMSE makes no errors at all
    tol_se = float(max(lmmse_se, 1.0 / n_sym))
    for m in methods:
        entry = {}
        for fam, label in (("conv", "conventional"), ("prop", "proposed")):
            key = f"{fam}_{m}"
            curve = SerCurve.from_counts(f"{m}-{label}", "iteration", ts, stats.total(key), n_sym, stats.succeeded)
            curves.append(curve)
            reach = iterations_to_reach(curve.ser, float(lmmse_ser), tol_se)
            entry[label] = {
                "iterations_to_lmmse": reach,
                "diverged_fraction": float(np.mean(stats.collect(f"{key}_diverged"))),
                "unconverged_fraction": float(np.mean(stats.collect(f"{key}_unconverged"))),
                "final_ser": curve.ser[-1],
            }
            ledger[f"{m}-{label}"] = _sum_ledgers(stats, f"ledger_{key}")
        c, p = entry["conventional"]["iterations_to_lmmse"], entry["proposed"]["iterations_to_lmmse"]
        entry["speedup"] = None if c is None or p is None else c / max(p, 1)
        summary["methods"][m] = entry
    return ExperimentResult(
        study="study3",
        config=cfg.to_dict(),
        curves=curves,
        summary=summary,
        ledger=ledger,
        wall_time_s=time.perf_counter() - t0,
    )


# -- case study 4 -----------------------------------------------------------------


def run_case_study_4(
    cfg: ScenarioConfig, threads: int = 1, channel_factory: ChannelFactory | None = None
) -> ExperimentResult:
    """SER versus SNR with the detector built from an estimated channel.

    Received signals use the true channel; LMMSE, conventional GS and two-stage
    GS all work from ``H + E``. GS curves are reported at the configured
    iteration counts.
    """
    t0 = time.perf_counter()
    factory = channel_factory or default_channel
    part = _partition(cfg)
    const = Constellation(cfg.modulation_order)
    snrs = cfg.snr_sweep_db
    conv_ts, prop_ts = cfg.cs4_conventional_iters, cfg.cs4_proposed_iters
    conv_cfg = IterativeConfig(Method.GS, max_iters=max(max(conv_ts), 1))
    prop_cfg = IterativeConfig(Method.GS, max_iters=max(max(prop_ts), 1))

    def trial(rng, i):
        chan = factory(cfg, rng)
        idx, x, w = _transmit(cfg, chan, rng, const)
        est = chan if cfg.nmse_db is None else corrupt_csi(chan, cfg.nmse_db, trial_rng(cfg.seed, i, CSI_STREAM))
        lm = np.zeros(len(snrs), dtype=int)
        cv = np.zeros((len(snrs), len(conv_ts)), dtype=int)
        pv = np.zeros((len(snrs), len(prop_ts)), dtype=int)
        clean = chan.H @ x
        for k, snr in enumerate(snrs):
            rho = 10 ** (snr / 10)
            sys = build_gram(est.H, clean + w / math.sqrt(rho), rho=rho)
            lm[k] = np.sum(demodulate(lmmse_direct(sys), const) != idx)
            conv = _errors_along(iterate_conventional(sys, conv_cfg), idx, const, conv_cfg.max_iters + 1)
            prop = _errors_along(iterate_preconditioned(stage1_block_invert(sys, part), prop_cfg), idx, const, prop_cfg.max_iters + 1)
            cv[k] = conv[list(conv_ts)]
            pv[k] = prop[list(prop_ts)]
        return {"symbols": chan.n_users, "lmmse": lm, "conv": cv, "prop": pv}

    stats = monte_carlo(cfg.trials, cfg.seed, trial, threads=threads)
    n_sym = int(stats.total("symbols"))
    lm, cv, pv = stats.total("lmmse"), stats.total("conv"), stats.total("prop")
    curves = [SerCurve.from_counts("LMMSE", "snr_db", snrs, lm, n_sym, stats.succeeded)]
    for j, t in enumerate(conv_ts):
        curves.append(SerCurve.from_counts(f"GS-conventional-t{t}", "snr_db", snrs, cv[:, j], n_sym, stats.succeeded))
    for j, t in enumerate(prop_ts):
        curves.append(SerCurve.from_counts(f"GS-proposed-t{t}", "snr_db", snrs, pv[:, j], n_sym, stats.succeeded))

    lmmse = curves[0]
    within = {}
    for c in curves[1:]:
        within[c.method] = [
            abs(s - l) <= 2 * max(se, 1.0 / n_sym) for s, l, se in zip(c.ser, lmmse.ser, lmmse.stderr)
        ]
    summary = {
        "trials": stats.succeeded,
        "failed_trials": len(stats.failures),
        "nmse_db": cfg.nmse_db,
        "within_2se_of_lmmse": within,
    }
    return ExperimentResult(
        study="study4",
        config=cfg.to_dict(),
        curves=curves,
        summary=summary,
        wall_time_s=time.perf_counter() - t0,
    )


STUDIES = {
    "study1": run_case_study_1,
    "study2": run_case_study_2,
    "study3": run_case_study_3,
    "study4": run_case_study_4,
}
