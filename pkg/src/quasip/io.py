"""File formats: CSV payloads with JSON sidecars, checkpoints, fit reports.

All floating-point CSV output uses 17 significant digits, so writer/reader
round trips are lossless for float64.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from quasip.analysis import DecaySeries, FitResult
from quasip.bridge import RadialKernelTable
from quasip.homodyne import HusimiHistogram, RecordBatch
from quasip.phasespace import PhaseSpaceGrid, QuasiProbabilityField
from quasip.tomography import QuadratureDataset

_FMT = "%.17g"


def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def save_quadratures(path, dataset: QuadratureDataset) -> None:
    """CSV ``index,x,phi``."""
    data = np.column_stack([np.arange(len(dataset)), dataset.x, dataset.phi])
    np.savetxt(path, data, fmt=("%d", _FMT, _FMT), delimiter=",", header="index,x,phi", comments="")


def load_quadratures(path) -> QuadratureDataset:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return QuadratureDataset(np.empty(0), np.empty(0))
    return QuadratureDataset(data[:, 1], data[:, 2])


def save_records(path, records: RecordBatch) -> None:
    """CSV ``t_index,X1,X2,X3,dphi`` plus a JSON sidecar with generator metadata."""
    data = np.column_stack([records.t_index, records.x1, records.x2, records.x3, records.dphi])
    np.savetxt(
        path,
        data,
        fmt=("%d", _FMT, _FMT, _FMT, _FMT),
        delimiter=",",
        header="t_index,X1,X2,X3,dphi",
        comments="",
    )
    if records.meta:
        _sidecar(path).write_text(json.dumps(records.meta, indent=2, sort_keys=True))


def load_records(path) -> RecordBatch:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = None
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
    return RecordBatch(
        data[:, 0].astype(np.int64), data[:, 1], data[:, 2], data[:, 3], data[:, 4], meta
    )


def save_field(path, field: QuasiProbabilityField) -> None:
    """CSV ``q,p,value,sigma`` (row-major over q) plus a JSON sidecar."""
    g = field.grid
    qq, pp = np.meshgrid(g.q_axis, g.p_axis, indexing="ij")
    sig = field.sigmas if field.sigmas is not None else np.zeros(g.shape)
    data = np.column_stack([qq.ravel(), pp.ravel(), field.values.ravel(), sig.ravel()])
    np.savetxt(path, data, fmt=_FMT, delimiter=",", header="q,p,value,sigma", comments="")
    meta = field.meta or {}
    sidecar = {
        "R": meta.get("R"),
        "grid": g.as_dict(),
        "n_samples": meta.get("n_samples"),
        "s": meta.get("s"),
        "w": meta.get("w"),
        "tau_ps": meta.get("tau_ps"),
    }
    extra = {k: v for k, v in meta.items() if k not in sidecar and _jsonable(v)}
    sidecar.update(extra)
    _sidecar(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_field(path) -> QuasiProbabilityField:
    side = json.loads(_sidecar(path).read_text())
    grid = PhaseSpaceGrid.from_dict(side["grid"])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    values = data[:, 2].reshape(grid.shape)
    sigmas = data[:, 3].reshape(grid.shape)
    meta = {k: v for k, v in side.items() if k != "grid"}
    return QuasiProbabilityField(grid, values, sigmas, meta)


def save_husimi(path, hist: HusimiHistogram) -> None:
    """CSV ``q_ps,p_ps,count`` over bin centers."""
    qc = 0.5 * (hist.q_edges[:-1] + hist.q_edges[1:])
    pc = 0.5 * (hist.p_edges[:-1] + hist.p_edges[1:])
    qq, pp = np.meshgrid(qc, pc, indexing="ij")
    data = np.column_stack([qq.ravel(), pp.ravel(), hist.counts.ravel()])
    np.savetxt(
        path, data, fmt=(_FMT, _FMT, "%d"), delimiter=",", header="q_ps,p_ps,count", comments=""
    )


def save_kernel_table(path, table: RadialKernelTable) -> None:
    """CSV ``r,K`` plus JSON metadata sidecar."""
    np.savetxt(
        path,
        np.column_stack([table.radii, table.values]),
        fmt=_FMT,
        delimiter=",",
        header="r,K",
        comments="",
    )
    meta = dict(table.meta)
    meta["R"] = table.r_filter
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_kernel_table(path) -> RadialKernelTable:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(_sidecar(path).read_text())
    r_filter = meta.pop("R")
    return RadialKernelTable(r_filter, data[:, 0], data[:, 1], meta)


def save_series(path, series: DecaySeries) -> None:
    """CSV ``t_ps,value,stderr``."""
    err = series.stderrs if series.stderrs is not None else np.full(len(series), np.nan)
    data = np.column_stack([series.times, series.values, err])
    np.savetxt(path, data, fmt=_FMT, delimiter=",", header="t_ps,value,stderr", comments="")


def load_series(path, label: str = "") -> DecaySeries:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    err = data[:, 2] if data.shape[1] > 2 else None
    if err is not None and np.all(np.isnan(err)):
        err = None
    return DecaySeries(data[:, 0], data[:, 1], stderrs=err, label=label)


def save_fit_report(path, result: FitResult) -> None:
    report = {
        "model": result.model,
        "params": result.params,
        "stderrs": result.stderrs,
        "residual_norm": result.residual_norm,
        "n_points": result.n_points,
    }
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))


def save_checkpoint(path, ensemble) -> None:
    """Single-file ensemble checkpoint: JSON header plus binary arrays."""
    from quasip.twa import TrajectoryEnsemble  # local import avoids a cycle

    assert isinstance(ensemble, TrajectoryEnsemble)
    header = {
        "params": _params_dict(ensemble.params),
        "t": ensemble.t,
        "meta": ensemble.meta,
        "rng_states": [rng.bit_generator.state for rng in ensemble.rngs],
    }
    np.savez_compressed(
        path,
        header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
        psi_re=ensemble.psi.real,
        psi_im=ensemble.psi.imag,
        n_res=ensemble.n_res,
    )


def load_checkpoint(path):
    from quasip.twa import ModelParams, TrajectoryEnsemble

    with np.load(path) as data:
        header = json.loads(bytes(data["header"].tobytes()).decode())
        psi = data["psi_re"] + 1j * data["psi_im"]
        n_res = np.array(data["n_res"])
    params = ModelParams(**header["params"])
    rngs = []
    for state in header["rng_states"]:
        rng = np.random.default_rng(0)
        rng.bit_generator.state = state
        rngs.append(rng)
    return TrajectoryEnsemble(psi, n_res, header["t"], rngs, params, header.get("meta", {}))


def _params_dict(params) -> dict:
    from dataclasses import asdict

    return asdict(params)


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False
