"""The five simulation studies and their figure data, as reproducible reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .dgp import DgpConfig
from .estimators import Method
from .harness import CellReport, CellSpec, qq_data, run_cell
from .theory import MC_POINTS, THEORY_SEED, theory_report

EXPERIMENT_IDS = (
    "table1",
    "table2",
    "table3",
    "table4",
    "table5",
    "figure_qq",
    "figure_boundary",
    "figure_bias",
    "figure_attenuation",
    "figure_weighted",
)
DEFAULT_REPS = 2000
DEFAULT_SEED = 20_240_601

TABLE1_NS = (500, 1000, 5000)
TABLE2_SIGMAS = (0.5, 0.25, 0.1, 0.05, 0.01, 0.005, 0.001)
TABLE3_SHAPES = ("worst_case", "linear", "symmetric")
TABLE3_DELTAS = (0.05, 0.10, 0.15, 0.20)
TABLE4_SIGMAS = (0.10, 0.20, 0.30)
TABLE5_NS = (500, 1000, 5000)
WEIGHTED_NS = (500, 1000, 2000, 5000)


@dataclass
class ExperimentResult:
    id: str
    rows: list[dict]
    meta: dict
    # file stem suffix -> rows, written as CSV next to the report
    plot_data: dict[str, list[dict]] = field(default_factory=dict)
    cells: list[CellReport] = field(default_factory=list, repr=False)


class _Runner:
    def __init__(self, reps: int, seed: int, workers: int):
        self.reps, self.seed, self.workers = reps, seed, workers
        self.cells: list[CellReport] = []
        self._theory: dict = {}

    def cell(self, cfg: DgpConfig, method: str, n: int, target: float) -> CellReport:
        spec = CellSpec(cfg, Method(method), n, self.reps, self.seed, target)
        rep = run_cell(spec, self.workers)
        self.cells.append(rep)
        return rep

    def theory(self, cfg: DgpConfig):
        key = cfg.with_n(1)
        if key not in self._theory:
            self._theory[key] = theory_report(cfg)
        return self._theory[key]

    def meta(self, exp_id: str, **extra) -> dict:
        return {
            "experiment": exp_id,
            "reps": self.reps,
            "master_seed": self.seed,
            "theory_mc_points": MC_POINTS,
            "theory_seed": THEORY_SEED,
            "cells": [c.spec.to_dict() for c in self.cells],
            **extra,
        }


def _stats(rep: CellReport) -> dict:
    s = rep.summary()
    return {k: s[k] for k in ("mean", "bias", "sd", "rmse", "coverage", "n_finite")}


def _table1(run: _Runner) -> ExperimentResult:
    cfg = DgpConfig(sigma_u=0.30, tau0=1.0)
    rows = []
    for n in TABLE1_NS:
        for method in ("oracle", "plugin", "orthogonal"):
            rep = run.cell(cfg, method, n, cfg.tau0)
            rows.append({"estimator": method, "n": n, **_stats(rep), "mc_error": rep.mc_error})
    th = run.theory(cfg)
    return ExperimentResult("table1", rows, run.meta("table1", theory=th.to_dict()))


def _boundary_cells(run: _Runner) -> list[tuple[float, float, CellReport]]:
    out = []
    for s in TABLE2_SIGMAS:
        cfg = DgpConfig(sigma_u=s)
        out.append((s, run.theory(cfg).v_star, run.cell(cfg, "oracle", 1000, cfg.tau0)))
    return out


def _table2(run: _Runner) -> ExperimentResult:
    rows = [
        {"sigma_u": s, "true_v_star": v, **_stats(rep)}
        for s, v, rep in _boundary_cells(run)
    ]
    return ExperimentResult("table2", rows, run.meta("table2"))


def _figure_boundary(run: _Runner) -> ExperimentResult:
    cells = _boundary_cells(run)
    _, v0, rep0 = cells[0]
    points = [
        {
            "v_star": v,
            "rmse": rep.rmse,
            "coverage": rep.coverage,
            # 1/V* reference anchored at the largest V*
            "rmse_reference": rep0.rmse * v0 / v,
        }
        for _, v, rep in cells
    ]
    return ExperimentResult("figure_boundary", points, run.meta("figure_boundary"), {"points": points})


def _sensitivity_rows(run: _Runner, deltas) -> list[dict]:
    rows = []
    for shape in TABLE3_SHAPES:
        for delta in deltas:
            cfg = DgpConfig(sigma_u=0.30, eta_shape=shape, delta=delta)
            th = run.theory(cfg)
            rep = run.cell(cfg, "oracle", 2000, cfg.tau0)
            rows.append({
                "shape": shape,
                "delta": delta,
                "emp_bias": rep.bias,
                "theo_bias": th.b_cal,
                "sharp_bound": th.sharp_bound,
                "tightness": abs(rep.bias) / th.sharp_bound,
                "mc_error": rep.mc_error,
                "coverage": rep.coverage,
            })
    return rows


def _table3(run: _Runner) -> ExperimentResult:
    rows = _sensitivity_rows(run, TABLE3_DELTAS)
    return ExperimentResult("table3", rows, run.meta("table3"))


def _figure_bias(run: _Runner) -> ExperimentResult:
    rows = _sensitivity_rows(run, TABLE3_DELTAS)
    curves = [{k: r[k] for k in ("shape", "delta", "emp_bias", "theo_bias", "sharp_bound")} for r in rows]
    return ExperimentResult("figure_bias", rows, run.meta("figure_bias"), {"curves": curves})


def _threshold_cells(run: _Runner):
    out = []
    for s in TABLE4_SIGMAS:
        cfg = DgpConfig(variant="symmetric_threshold", sigma_u=s)
        kappa = run.theory(cfg).kappa
        for method in ("oracle", "plugin", "orthogonal", "hard_threshold"):
            out.append((s, kappa, method, run.cell(cfg, method, 1000, cfg.tau0)))
    return out


def _table4(run: _Runner) -> ExperimentResult:
    rows = []
    for s, kappa, method, rep in _threshold_cells(run):
        rows.append({
            "sigma_u": s,
            "kappa": kappa,
            "estimator": method,
            **_stats(rep),
            "mc_error": rep.mc_error,
            "ratio_to_kappa_tau": rep.mean / (kappa * rep.spec.target),
        })
    return ExperimentResult("table4", rows, run.meta("table4"))


def _figure_attenuation(run: _Runner) -> ExperimentResult:
    dists, rows = [], []
    for s, kappa, method, rep in _threshold_cells(run):
        if method == "orthogonal":
            continue
        rows.append({"sigma_u": s, "kappa": kappa, "estimator": method, **_stats(rep)})
        dists.extend(
            {"sigma_u": s, "estimator": method, "replication": i, "estimate": float(e)}
            for i, e in enumerate(rep.estimates)
        )
    return ExperimentResult("figure_attenuation", rows, run.meta("figure_attenuation"), {"estimates": dists})


def _hetero_rows(run: _Runner, ns) -> list[dict]:
    rows = []
    for design in ("hetero_A", "hetero_B"):
        cfg = DgpConfig(variant=design, tau0=1.0, tau1=0.5, sigma_u=0.30)
        tau_bar = run.theory(cfg).tau_bar
        for n in ns:
            rep = run.cell(cfg, "oracle", n, tau_bar)
            rows.append({"design": design[-1], "n": n, "tau_bar": tau_bar, **_stats(rep), "mc_error": rep.mc_error})
    return rows


def _table5(run: _Runner) -> ExperimentResult:
    return ExperimentResult("table5", _hetero_rows(run, TABLE5_NS), run.meta("table5"))


def _figure_weighted(run: _Runner) -> ExperimentResult:
    rows = _hetero_rows(run, WEIGHTED_NS)
    curve = [{k: r[k] for k in ("design", "n", "tau_bar", "rmse")} for r in rows]
    return ExperimentResult("figure_weighted", rows, run.meta("figure_weighted"), {"rmse_by_n": curve})


def _figure_qq(run: _Runner) -> ExperimentResult:
    cfg = DgpConfig(sigma_u=0.30)
    rows, plot = [], {}
    for n in TABLE1_NS:
        rep = run.cell(cfg, "oracle", n, cfg.tau0)
        qq = qq_data(rep.estimates, cfg.tau0, rep.ses, n)
        rows.append({"n": n, "ks_distance": qq.ks, "degenerate": qq.degenerate, "n_finite": rep.n_finite})
        plot[f"n{n}"] = [
            {"theoretical": float(t), "empirical": float(e)} for t, e in zip(qq.theoretical, qq.empirical)
        ]
    return ExperimentResult("figure_qq", rows, run.meta("figure_qq"), plot)


_BUILDERS = {
    "table1": _table1,
    "table2": _table2,
    "table3": _table3,
    "table4": _table4,
    "table5": _table5,
    "figure_qq": _figure_qq,
    "figure_boundary": _figure_boundary,
    "figure_bias": _figure_bias,
    "figure_attenuation": _figure_attenuation,
    "figure_weighted": _figure_weighted,
}


def run_experiment(
    exp_id: str, reps: int = DEFAULT_REPS, seed: int = DEFAULT_SEED, workers: int = 1
) -> ExperimentResult:
    if exp_id not in _BUILDERS:
        raise KeyError(f"unknown experiment {exp_id!r}; choose from {', '.join(EXPERIMENT_IDS)}")
    run = _Runner(reps, seed, workers)
    result = _BUILDERS[exp_id](run)
    result.cells = run.cells
    return result


# -- serialization ---------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else "nan"
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    writer = csv.writer(buf, lineterminator="\n")
    header = list(rows[0])
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row.get(k)) for k in header])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def to_json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2) + "\n"


def write_result(result: ExperimentResult, out_dir, fmt: str = "csv") -> list[Path]:
    """Write the report (CSV + meta JSON, or one JSON document) and plot-data CSVs."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv":
        written.append(out / f"{result.id}.csv")
        written[-1].write_text(rows_to_csv(result.rows))
        written.append(out / f"{result.id}.meta.json")
        written[-1].write_text(to_json(result.meta))
    else:
        written.append(out / f"{result.id}.json")
        written[-1].write_text(to_json({"meta": result.meta, "rows": result.rows}))
    for suffix, rows in result.plot_data.items():
        path = out / f"{result.id}_{suffix}.csv"
        path.write_text(rows_to_csv(rows))
        written.append(path)
    return written
