"""Scenario orchestration: binds the field generator, the accuracy model,
the dual-prediction protocol and the detector into reproducible experiment
runs, and lays their results out as named CSV-ready series.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import ada, malicious, stdp
from .fieldgen import (
    ROLE_PROTOCOL,
    FieldParams,
    NodeLayout,
    Stream,
    awgn_channel,
    build_spatial_covariance,
    generate_stream,
    inject_malicious,
    substream,
)
from .stdp import Thresholds

DEFAULT_SEED = 12

# Fixed jittered-grid coordinates (meters) in the 4 x 4 sensing region,
# sink at the center.  The six nodes nearest the sink are ids
# 2, 5, 4, 10, 7, 9 in that order.
DEFAULT_POSITIONS = {
    1: (0.31, 0.18),
    2: (1.42, 2.37),
    3: (3.78, 0.42),
    4: (2.64, 1.56),
    5: (1.71, 1.29),
    6: (0.24, 3.69),
    7: (2.95, 2.58),
    8: (3.82, 3.77),
    9: (1.18, 2.94),
    10: (2.39, 2.81),
}
DEFAULT_SINK = (2.0, 2.0)


@dataclass(frozen=True)
class MaliciousSpec:
    node_ids: tuple[int, ...]
    scale: float


@dataclass(frozen=True)
class Scenario:
    """Full experiment configuration; every run is a pure function of it."""

    layout: NodeLayout
    field: FieldParams = FieldParams()
    n_block: int = 5
    num_blocks: int = 200
    thresholds: Thresholds = Thresholds(alpha=0.5, beta=0.05)
    mu_mode: float | str = "auto"
    malicious: MaliciousSpec | None = None
    channel: float | None = None
    seed: int = DEFAULT_SEED
    select_first: bool = False
    select_count: int = 6

    def __post_init__(self):
        if self.n_block < 1:
            raise ValueError("n_block must be >= 1")
        if self.num_blocks < 2:
            raise ValueError("num_blocks must be >= 2")
        if isinstance(self.mu_mode, str):
            if self.mu_mode != "auto":
                raise ValueError(f"mu_mode must be 'auto' or a positive number")
        elif not self.mu_mode > 0:
            raise ValueError("explicit mu must be positive")
        if self.malicious is not None:
            unknown = set(self.malicious.node_ids) - set(self.layout.node_ids)
            if unknown:
                raise ValueError(f"malicious nodes {sorted(unknown)} not in layout")
            if self.malicious.scale <= 1:
                raise ValueError("malicious scale must exceed 1")
        if not 1 <= self.select_count <= self.layout.size:
            raise ValueError("select_count must be within the node count")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    @property
    def explicit_mu(self) -> float | None:
        return None if self.mu_mode == "auto" else float(self.mu_mode)


def default_layout() -> NodeLayout:
    ids = tuple(sorted(DEFAULT_POSITIONS))
    return NodeLayout(
        positions=tuple(DEFAULT_POSITIONS[i] for i in ids),
        sink=DEFAULT_SINK,
        node_ids=ids,
    )


def default_scenario(**overrides) -> Scenario:
    return replace(Scenario(layout=default_layout()), **overrides)


def scenario_to_dict(scenario: Scenario) -> dict:
    """Plain JSON-able echo of a scenario (the config-file shape)."""
    sig = scenario.field.sigma_u
    return {
        "layout": {
            "positions": [list(p) for p in scenario.layout.positions],
            "sink": list(scenario.layout.sink),
            "node_ids": list(scenario.layout.node_ids),
        },
        "field": {
            "theta": scenario.field.theta,
            "sigma_u": list(sig) if isinstance(sig, tuple) else sig,
            "sigma_d": scenario.field.sigma_d,
            "noise_var": scenario.field.noise_var,
            "temporal_phi": scenario.field.temporal_phi,
        },
        "n_block": scenario.n_block,
        "num_blocks": scenario.num_blocks,
        "thresholds": {
            "alpha": scenario.thresholds.alpha,
            "beta": scenario.thresholds.beta,
        },
        "mu_mode": scenario.mu_mode,
        "malicious": None
        if scenario.malicious is None
        else {
            "node_ids": list(scenario.malicious.node_ids),
            "scale": scenario.malicious.scale,
        },
        "channel": scenario.channel,
        "seed": scenario.seed,
        "select_first": scenario.select_first,
        "select_count": scenario.select_count,
    }


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(canonical.encode()).hexdigest()


@dataclass(frozen=True)
class RunReport:
    """Named result series plus a scenario echo and its hash."""

    kind: str
    series: dict[str, list[tuple]]
    metadata: dict

    def __post_init__(self):
        for name, rows in self.series.items():
            if not rows:
                raise ValueError(f"series {name} is empty")
            for row in rows:
                for cell in row:
                    if isinstance(cell, float) and not np.isfinite(cell):
                        raise ValueError(f"non-finite value in series {name}: {row}")


def _base_metadata(kind: str, scenario: Scenario) -> dict:
    echo = scenario_to_dict(scenario)
    return {"kind": kind, "scenario": echo, "config_sha1": config_hash(echo)}


def run_ada(scenario: Scenario) -> RunReport:
    """Descent accuracy trace plus the per-node-count accuracy curve."""
    cov = build_spatial_covariance(scenario.layout, scenario.field)
    trace = ada.steepest_descent(cov, mu=scenario.explicit_mu)
    selection = ada.select_nodes(
        scenario.layout, scenario.field, count=scenario.select_count
    )
    series = {
        "accuracy_vs_iteration": [
            (k, acc) for k, acc in enumerate(trace.accuracy)
        ],
        "accuracy_vs_nodes": [
            (size, acc, ";".join(str(i) for i in selection.order[:size]))
            for size, acc in selection.curve
        ],
    }
    metadata = _base_metadata("ADA", scenario)
    metadata.update(
        {
            "mu": trace.mu,
            "converged": trace.converged,
            "iterations": trace.iterations,
            "final_accuracy": trace.accuracy[-1],
            "selected": list(selection.selected),
        }
    )
    return RunReport(kind="ADA", series=series, metadata=metadata)


@dataclass(frozen=True)
class ProtocolRun:
    stream: Stream
    state: stdp.ProtocolState
    rows: tuple[stdp.TraceRow, ...]
    percentages: dict[int, float]

    @property
    def total_percentage(self) -> float:
        sent = sum(self.state.record.transmitted.values())
        total = sum(self.state.record.total.values())
        return 100.0 * sent / total


def active_node_ids(scenario: Scenario) -> tuple[int, ...]:
    """Participating nodes: everyone, or the selected nearest subset."""
    if not scenario.select_first:
        return scenario.layout.node_ids
    chosen = ada.select_nodes(
        scenario.layout, scenario.field, count=scenario.select_count
    ).selected
    return tuple(sorted(chosen))


def simulate_protocol(scenario: Scenario, stream: Stream | None = None) -> ProtocolRun:
    """Generate (or take) a stream and run the full protocol over it."""
    if stream is None:
        stream = generate_stream(
            scenario.layout,
            scenario.field,
            scenario.n_block,
            scenario.num_blocks,
            scenario.seed,
        )
        if scenario.malicious is not None:
            stream = inject_malicious(
                stream,
                scenario.malicious.node_ids,
                scenario.malicious.scale,
                scenario.seed,
            )
    active = [i for i in active_node_ids(scenario) if i in stream.blocks]
    stream = stream.restrict(active)

    # A corrupted node's own measurements are degraded too: its client-side
    # noise draws scale with the corruption factor.  Without this the
    # auto step size (normalized by the corruption-inflated eigenvalue)
    # turns corrupted clients into the best-behaved filters and the
    # weight-variance detector has nothing to see.
    noise_std = float(np.sqrt(scenario.field.noise_var))
    corrupted = set(scenario.malicious.node_ids) if scenario.malicious else set()
    scale = scenario.malicious.scale if scenario.malicious else 1.0
    draws = {
        i: substream(scenario.seed, ROLE_PROTOCOL, i).normal(
            0.0, noise_std * (scale if i in corrupted else 1.0), stream.num_blocks
        )
        for i in active
    }
    channel = None
    if scenario.channel is not None:
        snr = scenario.channel

        def channel(node_id, block, _snr=snr, _seed=scenario.seed):
            return awgn_channel(block, _snr, _seed)

    state = stdp.new_protocol_state(active, scenario.n_block)
    rows: list[stdp.TraceRow] = []
    for r in range(stream.num_blocks):
        result = stdp.step_round(
            state,
            {i: stream.blocks[i][r] for i in active},
            scenario.thresholds,
            mu=scenario.explicit_mu,
            client_noise={i: float(draws[i][r]) for i in active},
            channel=channel,
        )
        rows.extend(result.rows)
    return ProtocolRun(
        stream=stream,
        state=state,
        rows=tuple(rows),
        percentages=stdp.transmission_percentage(state.record),
    )


def _protocol_series(run: ProtocolRun, beta: float) -> dict[str, list[tuple]]:
    series = {
        "transmission": [
            (beta, i, pct) for i, pct in sorted(run.percentages.items())
        ],
        "trace": [
            (
                row.round_index,
                row.node_id,
                row.phase.value,
                ";".join(k.value for k in row.kinds),
                row.error_glob,
                row.error_new,
                int(row.transmitted),
            )
            for row in run.rows
        ],
    }
    weight_rows = [
        (r, i, tap, float(w[tap]))
        for i, snaps in sorted(run.state.weight_history.items())
        for r, w in snaps
        for tap in range(w.size)
    ]
    if weight_rows:
        series["weights"] = weight_rows
    return series


def run_stdp(scenario: Scenario, stream: Stream | None = None) -> RunReport:
    """Protocol run reporting per-node transmission percentages and traces."""
    run = simulate_protocol(scenario, stream)
    series = _protocol_series(run, scenario.thresholds.beta)
    metadata = _base_metadata("STDP", scenario)
    metadata.update(
        {
            "active_nodes": list(run.stream.node_ids),
            "total_percentage": run.total_percentage,
            "mu": run.state.mu,
        }
    )
    return RunReport(kind="STDP", series=series, metadata=metadata)


def run_detect(scenario: Scenario, stream: Stream | None = None) -> RunReport:
    """Protocol run followed by weight-variance classification."""
    if scenario.malicious is None and stream is None:
        raise ValueError("detect experiment requires a malicious configuration")
    run = simulate_protocol(scenario, stream)
    histories = malicious.histories_from_snapshots(
        {i: [w for _, w in snaps] for i, snaps in run.state.weight_history.items()}
    )
    variances = {i: malicious.weight_variance(h) for i, h in sorted(histories.items())}
    report = malicious.classify(variances)
    series = _protocol_series(run, scenario.thresholds.beta)
    series["detection"] = [
        (i, variances[i], report.threshold, report.labels[i].value)
        for i in sorted(variances)
    ]
    metadata = _base_metadata("DETECT", scenario)
    metadata.update(
        {
            "active_nodes": list(run.stream.node_ids),
            "kappa": report.kappa,
            "threshold": report.threshold,
            "flagged": sorted(
                i for i, lab in report.labels.items() if lab is malicious.Label.MALICIOUS
            ),
        }
    )
    return RunReport(kind="DETECT", series=series, metadata=metadata)


SWEEP_AXES = ("beta", "n_block", "node_count")


def scenario_for_point(scenario: Scenario, axis: str, value) -> Scenario:
    """The single-run scenario corresponding to one sweep point."""
    if axis == "beta":
        return replace(
            scenario, thresholds=Thresholds(scenario.thresholds.alpha, float(value))
        )
    if axis == "n_block":
        return replace(scenario, n_block=int(value))
    if axis == "node_count":
        return replace(scenario, select_first=True, select_count=int(value))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _sweep_point(args) -> tuple:
    scenario, axis, value = args
    report = run_stdp(scenario_for_point(scenario, axis, value))
    return value, report


def sweep(
    scenario: Scenario, axis: str, values: Sequence, jobs: int = 1
) -> RunReport:
    """One protocol run per axis value, merged into a single report.

    Every point reuses the scenario's base seed, so points differ only in
    the swept parameter and each sub-run can be reproduced by running the
    corresponding single scenario directly.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one axis value")
    tasks = [(scenario, axis, value) for value in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_sweep_point, tasks))
    else:
        points = [_sweep_point(t) for t in tasks]

    series: dict[str, list[tuple]] = {"transmission": [], "transmission_total": []}
    sub_meta = []
    for value, report in points:
        for _, node_id, pct in report.series["transmission"]:
            series["transmission"].append((value, node_id, pct))
        series["transmission_total"].append((value, report.metadata["total_percentage"]))
        sub_meta.append(
            {
                "value": value,
                "config_sha1": report.metadata["config_sha1"],
                "seed": report.metadata["scenario"]["seed"],
                "total_percentage": report.metadata["total_percentage"],
            }
        )
    metadata = _base_metadata("SWEEP", scenario)
    metadata.update({"axis": axis, "values": values, "points": sub_meta})
    return RunReport(kind="SWEEP", series=series, metadata=metadata)


def _fmt(cell) -> str:
    if isinstance(cell, float):
        return f"{cell:.9g}"
    if cell is None:
        return ""
    return str(cell)


def report_files(report: RunReport) -> dict[str, tuple[tuple[str, ...], list[tuple[str, ...]]]]:
    """Map a report to its CSV files: name -> (header, formatted rows).

    Floats are rendered with 9 significant digits; every run kind maps to
    a fixed file set so repeated runs are byte-comparable.
    """
    out: dict[str, tuple[tuple[str, ...], list[tuple[str, ...]]]] = {}

    def emit(name: str, header: tuple[str, ...], rows: list[tuple]):
        out[name] = (header, [tuple(_fmt(c) for c in row) for row in rows])

    if report.kind == "ADA":
        emit(
            "ada_iterations.csv",
            ("iter", "accuracy"),
            report.series["accuracy_vs_iteration"],
        )
        emit(
            "ada_nodes.csv",
            ("k", "accuracy", "node_ids"),
            report.series["accuracy_vs_nodes"],
        )
        return out

    if report.kind == "SWEEP":
        axis = report.metadata["axis"]
        name = "stdp_transmission.csv" if axis == "beta" else "sweep_transmission.csv"
        emit(name, (axis, "node_id", "pct"), report.series["transmission"])
        emit(
            "sweep_totals.csv",
            (axis, "total_pct"),
            report.series["transmission_total"],
        )
        return out

    emit(
        "stdp_transmission.csv",
        ("beta", "node_id", "pct"),
        report.series["transmission"],
    )
    emit(
        "message_trace.csv",
        ("round", "node_id", "phase", "kind", "error_glob", "error_new", "transmitted"),
        report.series["trace"],
    )
    if "weights" in report.series:
        emit(
            "weights.csv",
            ("round", "node_id", "tap_index", "value"),
            report.series["weights"],
        )
    if report.kind == "DETECT":
        emit(
            "detection.csv",
            ("node_id", "variance", "threshold", "label"),
            report.series["detection"],
        )
    return out
