"""CSV and JSON writers/readers for the on-disk interchange formats.

Formats:

* tomogram:     ``I,Q,value,shots``     (``shots`` 0 marks a noiseless map)
* moment table: ``n,m,re,im,stderr``
* records:      ``shot,i,q,qubit_q``

Every CSV gets a JSON sidecar of the same stem carrying the parameters and
seed it was produced with.  Float formatting is fixed so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .tomography import MomentTable, RecordSet, Tomogram

_FMT = "{:.12g}"


def _fmt(x) -> str:
    return _FMT.format(float(x))


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def write_sidecar(csv_path: Path, params: dict) -> Path:
    return write_json(Path(csv_path).with_suffix(".json"), params)


def write_tomogram_csv(path: Path, tomogram: Tomogram, params: dict | None = None) -> Path:
    path = Path(path)
    shots = 0 if tomogram.shots_per_point is None else tomogram.shots_per_point
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["I", "Q", "value", "shots"])
        for point, value in zip(tomogram.grid, tomogram.values):
            writer.writerow([_fmt(point.real), _fmt(point.imag), _fmt(value), shots])
    write_sidecar(path, {"eta": tomogram.eta, "f_mm": tomogram.f_mm, **(params or {})})
    return path


def read_tomogram_csv(path: Path, eta: float | None = None, f_mm: float | None = None) -> Tomogram:
    path = Path(path)
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    eta = meta.get("eta", eta)
    f_mm = meta.get("f_mm", f_mm)
    if eta is None or f_mm is None:
        raise ValueError("eta/f_mm not found in sidecar and not supplied")
    grid, values, shots = [], [], 0
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            grid.append(complex(float(row["I"]), float(row["Q"])))
            values.append(float(row["value"]))
            shots = int(row["shots"])
    return Tomogram(
        grid=np.array(grid),
        values=np.array(values),
        shots_per_point=None if shots == 0 else shots,
        eta=float(eta),
        f_mm=float(f_mm),
    )


def write_moment_table_csv(path: Path, table: MomentTable, params: dict | None = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "m", "re", "im", "stderr"])
        for n, m in table.pairs():
            v = table.value(n, m)
            writer.writerow([n, m, _fmt(v.real), _fmt(v.imag), _fmt(table.std_error(n, m))])
    write_sidecar(path, {"order": table.order, **(params or {})})
    return path


def read_moment_table_csv(path: Path) -> MomentTable:
    values, errors, order = {}, {}, 0
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            n, m = int(row["n"]), int(row["m"])
            values[(n, m)] = complex(float(row["re"]), float(row["im"]))
            errors[(n, m)] = float(row["stderr"])
            order = max(order, n + m)
    return MomentTable(order=order, values=values, std_errors=errors)


def write_records_csv(
    path: Path, records: RecordSet, params: dict | None = None, max_rows: int | None = None
) -> Path:
    path = Path(path)
    count = len(records) if max_rows is None else min(len(records), max_rows)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shot", "i", "q", "qubit_q"])
        for k in range(count):
            writer.writerow(
                [int(records.shot[k]), _fmt(records.i[k]), _fmt(records.q[k]), _fmt(records.qubit_q[k])]
            )
    write_sidecar(path, {"rows": count, "total_shots": len(records), **(params or {})})
    return path


def read_records_csv(path: Path) -> RecordSet:
    shot, i, q, qq = [], [], [], []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            shot.append(int(row["shot"]))
            i.append(float(row["i"]))
            q.append(float(row["q"]))
            qq.append(float(row["qubit_q"]))
    return RecordSet(
        i=np.array(i), q=np.array(q), qubit_q=np.array(qq), shot=np.array(shot, dtype=int)
    )


def write_density_matrix_csv(path: Path, entries: np.ndarray, params: dict | None = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "re", "im"])
        for r in range(entries.shape[0]):
            for c in range(entries.shape[1]):
                writer.writerow([r, c, _fmt(entries[r, c].real), _fmt(entries[r, c].imag)])
    write_sidecar(path, {"dim": entries.shape[0], **(params or {})})
    return path
