"""Experiment orchestration behind the CLI.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns a
:class:`Report`: a JSON-able record plus long-format CSV rows
``(run_id, quantity, class, state, value, half_width)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .dps import (
    class_loads,
    collapse_prediction,
    ht_dps,
    ht_parametrize_dps,
    ht_workload_from_collapse,
    rate_conservation_residual,
    weighted_moment_residual,
)
from .errors import ModelError
from .estimators import estimate_scaled_law, independence_diagnostic
from .simulator import SimEstimates, simulate_dps, simulate_workload
from .workload import (
    empty_prob_gap,
    ht_mean_workload,
    ht_model,
    ht_offset_vector,
    ht_parametrize,
    mean_workload,
    offset_vector,
    traffic_intensity,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("run_id", "quantity", "class", "state", "value", "half_width")
CHECK_SIGMAS = 3.0


@dataclass
class Report:
    name: str
    record: dict
    rows: list = field(default_factory=list)
    ok: bool = True

    def add(self, run_id, quantity, value, half_width=None, by="class"):
        """Append rows; 1-d arrays are indexed ``by`` class or state, 2-d by (class, state)."""
        value = np.asarray(value, dtype=float)
        hw = np.full(value.shape, np.nan) if half_width is None else np.asarray(half_width, dtype=float)
        for idx in np.ndindex(value.shape):
            k = d = None
            if value.ndim == 2:
                k, d = idx
            elif value.ndim == 1:
                k, d = (idx[0], None) if by == "class" else (None, idx[0])
            h = float(hw[idx])
            self.rows.append((run_id, quantity, k, d, float(value[idx]), None if math.isnan(h) else h))

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(["" if v is None else v for v in row])
        return buf.getvalue()

    def json_text(self) -> str:
        return json.dumps(_jsonable(self.record), sort_keys=True, indent=2) + "\n"

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{self.name}.json", out / f"{self.name}.csv"]
        paths[0].write_text(self.json_text())
        paths[1].write_text(self.csv_text())
        return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _est(e) -> dict:
    return {"mean": e.mean, "half_width": e.half_width}


def _at_load(cfg: ExperimentConfig):
    """Workload model and DPS spec (or None) at the configured load."""
    if cfg.load is None:
        return cfg.workload_model, cfg.dps
    N = 1.0 / (1.0 - cfg.load)
    if cfg.dps is not None:
        spec = ht_parametrize_dps(cfg.dps, N)
        return spec.model, spec
    return ht_parametrize(cfg.model, N), None


# --------------------------------------------------------------------------
# analyze


def run_analyze(cfg: ExperimentConfig) -> Report:
    m, spec = _at_load(cfg)
    rho = traffic_intensity(m)
    hm = ht_model(m)
    rec = {
        "rho_inf": rho,
        "c_inf": m.c_inf,
        "pi": m.pi,
        "a_ht": ht_offset_vector(hm),
        "ew_ht": ht_mean_workload(hm),
    }
    rec["law_mean"] = rec["ew_ht"]
    rep = Report("analyze", rec)
    if rho < 1:
        rec["a"] = offset_vector(m)
    else:
        rec["a"] = None
        rec["a_note"] = "offset vector for the mean workload requires rho_inf < 1"
    if cfg.p0 is None:
        rec["ew"] = None
        rec["ew_note"] = "requires p0"
    else:
        rec["ew"] = mean_workload(m, cfg.p0, tol=cfg.p0_tolerance)
        rep.add("analyze", "ew", rec["ew"])
    rep.add("analyze", "rho_inf", rho)
    rep.add("analyze", "ew_ht", rec["ew_ht"])
    rep.add("analyze", "a_ht", rec["a_ht"], by="state")
    if spec is not None:
        loads = class_loads(spec)
        hspec = ht_dps(spec)
        pred = collapse_prediction(hspec)
        ht_loads = class_loads(hspec)
        rec["classes"] = {
            "lambda_k_inf": loads.lambda_k_inf,
            "rho_k_inf": loads.rho_k_inf,
            "rho_k_hat": ht_loads.rho_k_inf,
            "rho_d_hat": ht_loads.rho_d_hat,
        }
        rec["collapse"] = {
            "direction": pred.direction,
            "ex_mean": pred.ex_mean,
            "per_state": pred.per_state_means(),
            "workload_mean": ht_workload_from_collapse(pred, hspec).mean,
        }
        rep.add("analyze", "direction", pred.direction)
        rep.add("analyze", "ex_mean", pred.ex_mean)
        rep.add("analyze", "per_state", pred.per_state_means())
    return rep


# --------------------------------------------------------------------------
# simulate


def _simulate(cfg, m, spec, horizon, warmup, seed, snapshots) -> SimEstimates:
    kwargs = dict(horizon=horizon, warmup=warmup, batches=cfg.batches, rng_seed=seed,
                  snapshots=snapshots, replications=cfg.replications, workers=cfg.workers)
    if spec is not None:
        return simulate_dps(spec, **kwargs)
    return simulate_workload(m, **kwargs)


def run_simulate(cfg: ExperimentConfig) -> Report:
    m, spec = _at_load(cfg)
    est = _simulate(cfg, m, spec, cfg.horizon, cfg.warmup, cfg.seed, 0)
    rho = traffic_intensity(m)
    rec = {
        "seed": cfg.seed,
        "horizon": cfg.horizon,
        "warmup": est.warmup,
        "batches": cfg.batches,
        "replications": cfg.replications,
        "n_events": est.n_events,
        "rho_inf": rho,
        "estimates": {
            "ew": _est(est.ew),
            "p0": _est(est.p0),
            "occupancy": _est(est.occupancy),
            "empty_identity_gap": _est(est.empty_identity_gap(m)),
        },
    }
    rep = Report("simulate", rec)
    rid = f"sim-seed{cfg.seed}"
    rep.add(rid, "ew", est.ew.mean, est.ew.half_width)
    rep.add(rid, "p0", est.p0.mean, est.p0.half_width, by="state")
    rep.add(rid, "occupancy", est.occupancy.mean, est.occupancy.half_width, by="state")
    p0 = np.clip(est.p0.mean, 0.0, m.pi)
    if abs(empty_prob_gap(m, p0)) <= cfg.p0_tolerance:
        rec["ew_formula_from_sim_p0"] = mean_workload(m, p0, tol=cfg.p0_tolerance)
        rep.add(rid, "ew_formula", rec["ew_formula_from_sim_p0"])
    if spec is not None:
        rec["estimates"]["m_kd"] = _est(est.m_kd)
        rec["estimates"]["share_kd"] = _est(est.share_kd)
        rep.add(rid, "m_kd", est.m_kd.mean, est.m_kd.half_width)
        rep.add(rid, "share_kd", est.share_kd.mean, est.share_kd.half_width)
    return rep


# --------------------------------------------------------------------------
# heavy-traffic sweep


def _sweep_window(cfg, N):
    scale = N * N if cfg.horizon_scaling == "n2" else 1.0
    warmup = None if cfg.warmup is None else cfg.warmup * scale
    return cfg.horizon * scale, warmup


def _sweep_workload_row(cfg, N, predicted, rep):
    mN = ht_parametrize(cfg.model, N)
    horizon, warmup = _sweep_window(cfg, N)
    est = simulate_workload(mN, horizon, warmup, cfg.batches, rng_seed=[cfg.seed, N],
                            snapshots=cfg.snapshots, replications=cfg.replications, workers=cfg.workers)
    law = estimate_scaled_law(est.snap_values, 1.0 / N, reference_mean=predicted)
    indep = independence_diagnostic(est.snap_values / N, est.snap_states, mN.dim)
    gap = est.empty_identity_gap(mN)
    row = {
        "N": N,
        "status": "ok",
        "n_events": est.n_events,
        "scaled_mean": est.ew.mean / N,
        "scaled_mean_hw": est.ew.half_width / N,
        "predicted_mean": predicted,
        "ratio": est.ew.mean / N / predicted,
        "ratio_hw": est.ew.half_width / N / predicted,
        "ks_stat": law.ks,
        "ks_own_mean": estimate_scaled_law(est.snap_values, 1.0 / N).ks,
        "snapshot_mean": law.mean,
        "snapshot_lag1": law.lag1,
        "n_samples": law.n,
        "independence_diag": indep.worst,
        "independence_hw": float(indep.half_width[0]),
        "empty_identity_gap": gap.mean,
        "empty_identity_gap_hw": gap.half_width,
    }
    rid = f"N{N}"
    rep.add(rid, "scaled_mean", row["scaled_mean"], row["scaled_mean_hw"])
    rep.add(rid, "predicted_mean", predicted)
    rep.add(rid, "ratio", row["ratio"], row["ratio_hw"])
    rep.add(rid, "ks_stat", law.ks)
    rep.add(rid, "independence_diag", indep.worst, row["independence_hw"])
    rep.add(rid, "empty_identity_gap", gap.mean, gap.half_width)
    return row


def _sweep_dps_row(cfg, N, pred, rho_hat, predicted_w, rep):
    spec = ht_parametrize_dps(cfg.dps, N)
    horizon, warmup = _sweep_window(cfg, N)
    est = simulate_dps(spec, horizon, warmup, cfg.batches, rng_seed=[cfg.seed, N],
                       snapshots=cfg.snapshots, replications=cfg.replications, workers=cfg.workers)
    g = spec.g
    # scaled collapse coordinates g_k M_k / (rho_k N); all equal X in the limit
    X = est.snap_values * g / rho_hat / N
    K = spec.K
    laws = [estimate_scaled_law(X[:, k], 1.0, reference_mean=pred.ex_mean) for k in range(K)]
    indep = independence_diagnostic(X, est.snap_states, spec.model.dim)
    mq = est.mean_queue
    scaled = mq.mean / N
    predicted = pred.scaled_means()
    if K > 1:
        corr = np.corrcoef(X.T)
        corr_min = float(corr[np.triu_indices(K, 1)].min())
    else:
        corr_min = 1.0
    xbar = X.mean()
    spread = float(np.mean(X.max(axis=1) - X.min(axis=1)) / xbar) if xbar > 0 else float("nan")
    row = {
        "N": N,
        "status": "ok",
        "n_events": est.n_events,
        "scaled_mean": scaled,
        "scaled_mean_hw": mq.half_width / N,
        "predicted_mean": predicted,
        "ratio": scaled / predicted,
        "ratio_hw": mq.half_width / N / predicted,
        "ks_stat": [law.ks for law in laws],
        "n_samples": laws[0].n,
        "independence_diag": indep.value,
        "independence_hw": indep.half_width,
        "collapse_ratio_stats": {"corr_min": corr_min, "relative_spread": spread},
        "workload_scaled_mean": est.ew.mean / N,
        "workload_scaled_mean_hw": est.ew.half_width / N,
        "workload_predicted_mean": predicted_w,
    }
    rid = f"N{N}"
    rep.add(rid, "scaled_mean", scaled, row["scaled_mean_hw"])
    rep.add(rid, "predicted_mean", predicted)
    rep.add(rid, "ratio", row["ratio"], row["ratio_hw"])
    rep.add(rid, "ks_stat", np.array(row["ks_stat"]))
    rep.add(rid, "independence_diag", indep.value, indep.half_width)
    rep.add(rid, "collapse_corr_min", corr_min)
    rep.add(rid, "workload_scaled_mean", row["workload_scaled_mean"], row["workload_scaled_mean_hw"])
    return row


def run_ht_sweep(cfg: ExperimentConfig) -> Report:
    """Simulate the ``N``-parametrized model for every ``N`` and compare with the limits.

    A failure at one ``N`` is recorded in its row and the sweep carries on.
    """
    rec = {"seed": cfg.seed, "horizon": cfg.horizon, "horizon_scaling": cfg.horizon_scaling,
           "n_values": list(cfg.n_values), "rows": [], "partial": False}
    rep = Report("ht_sweep", rec)
    if cfg.dps is not None:
        hspec = ht_dps(cfg.dps)
        pred = collapse_prediction(hspec)
        rho_hat = class_loads(hspec).rho_k_inf
        predicted_w = ht_workload_from_collapse(pred, hspec).mean
        rec["predicted"] = {"direction": pred.direction, "ex_mean": pred.ex_mean,
                            "scaled_means": pred.scaled_means(), "workload_mean": predicted_w}
    else:
        predicted = ht_mean_workload(ht_model(cfg.model))
        rec["predicted"] = {"workload_mean": predicted}
    for N in cfg.n_values:
        try:
            if cfg.dps is not None:
                row = _sweep_dps_row(cfg, N, pred, rho_hat, predicted_w, rep)
            else:
                row = _sweep_workload_row(cfg, N, predicted, rep)
        except Exception as exc:  # keep the remaining N values
            log.warning("sweep point N=%s failed: %s", N, exc)
            row = {"N": N, "status": f"error: {type(exc).__name__}: {exc}"}
            rec["partial"] = True
            rep.ok = False
        rec["rows"].append(row)
    return rep


# --------------------------------------------------------------------------
# validate


def _check(name, value, half_width, detail=None) -> dict:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    hw = np.atleast_1d(np.asarray(half_width, dtype=float))
    passed = bool(np.all(np.abs(value) <= CHECK_SIGMAS * hw))
    out = {"check": name, "value": value, "half_width": hw, "passed": passed}
    if detail:
        out["detail"] = detail
    return out


def run_validate(cfg: ExperimentConfig) -> Report:
    """Statistical cross-checks; a check fails when ``|residual| > 3 * half-width``."""
    m, spec = _at_load(cfg)
    rho = traffic_intensity(m)
    checks = []
    seq = np.random.SeedSequence(cfg.seed).spawn(2)
    est = _simulate(cfg, m, spec, cfg.horizon, cfg.warmup, seq[0], 0)
    gap = est.empty_identity_gap(m)
    checks.append(_check("empty_probability_identity", gap.mean, gap.half_width))
    if spec is None:
        p0 = np.clip(est.p0.mean, 0.0, m.pi)
        try:
            formula = mean_workload(m, p0, tol=cfg.p0_tolerance)
            checks.append(_check("mean_workload_formula", est.ew.mean - formula, est.ew.half_width,
                                 {"simulated": est.ew.mean, "formula": formula}))
        except ModelError as exc:
            checks.append({"check": "mean_workload_formula", "passed": False, "detail": str(exc)})
    else:
        rc = rate_conservation_residual(spec, est, mu=cfg.check_mu)
        checks.append(_check("rate_conservation", rc.value, rc.half_width))
        wm = weighted_moment_residual(spec, est, mu=cfg.check_mu)
        checks.append(_check("weighted_moments", wm.value, wm.half_width))
        mix = simulate_workload(m, cfg.horizon, cfg.warmup, cfg.batches, rng_seed=seq[1],
                                replications=cfg.replications, workers=cfg.workers)
        diff = est.ew.mean - mix.ew.mean
        hw = math.hypot(est.ew.half_width, mix.ew.half_width)
        checks.append(_check("work_conservation", diff, hw,
                             {"dps": est.ew.mean, "mixture": mix.ew.mean}))
    ok = all(c["passed"] for c in checks)
    rec = {"seed": cfg.seed, "rho_inf": rho, "horizon": cfg.horizon, "checks": checks, "passed": ok}
    rep = Report("validate", rec, ok=ok)
    for c in checks:
        if "value" in c:
            rep.add("validate", c["check"], c["value"], c["half_width"])
    return rep


RUNNERS = {
    "analyze": run_analyze,
    "simulate": run_simulate,
    "ht-sweep": run_ht_sweep,
    "validate": run_validate,
}
