"""CSV and JSON artifacts, written atomically with exactly reproducible floats."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from collections import OrderedDict

import numpy as np

from .dynamics import Trajectory
from .errors import OutOfRangeError
from .scaling import TraitWindow

TRAJECTORY_COLUMNS = ("time", "trait", "value", "space", "K")
CONVERGENCE_COLUMNS = ("K", "log_K", "delta_K", "h_K", "sup_error", "max_slope", "runtime")


def fmt(v) -> str:
    """Shortest round-tripping text for a float; empty for ``None``."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def atomic_write(path: str, text: str):
    """Write ``text`` to ``path`` via a temporary file and a rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv(trajs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for tr in trajs:
        x = tr.window.x
        K = fmt(tr.K) if tr.K is not None else ""
        for t, row in zip(tr.times, tr.values):
            ts = fmt(t)
            for xi, v in zip(x, row):
                w.writerow((ts, fmt(xi), fmt(v), tr.space, K))
    return buf.getvalue()


def convergence_csv(records, timings: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGENCE_COLUMNS)
    for r in records:
        # wall-clock time varies run to run, so it is opt-in
        w.writerow((fmt(r.K), fmt(r.log_K), fmt(r.delta_K), fmt(r.h_K), fmt(r.sup_error),
                    fmt(r.max_slope), fmt(r.runtime) if timings else ""))
    return buf.getvalue()


def report_json(reports) -> str:
    return json.dumps([r.to_json() for r in reports], indent=2) + "\n"


def read_trajectory_csv(path, scaling_for=None) -> list[Trajectory]:
    """Rebuild trajectories from a trajectory CSV, one per ``(space, K)`` group.

    ``scaling_for(K)`` supplies the scaling of lattice trajectories; HJ
    trajectories infer their grid step from the trait column.
    """
    groups: OrderedDict = OrderedDict()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRAJECTORY_COLUMNS:
            raise OutOfRangeError(f"{path}: expected columns {','.join(TRAJECTORY_COLUMNS)}")
        for row in reader:
            key = (row["space"], row["K"])
            groups.setdefault(key, []).append((float(row["time"]), float(row["trait"]), float(row["value"])))
    out = []
    for (space, K), rows in groups.items():
        arr = np.array(rows)
        times = np.unique(arr[:, 0])
        traits = np.unique(arr[:, 1])
        if arr.shape[0] != times.size * traits.size:
            raise OutOfRangeError(f"{path}: group {space}/{K} is not a full time x trait grid")
        order = np.lexsort((arr[:, 1], arr[:, 0]))
        values = arr[order, 2].reshape(times.size, traits.size)
        scaling = scaling_for(float(K)) if K and scaling_for is not None else None
        delta = scaling.delta_K if scaling is not None else float(np.median(np.diff(traits)))
        i_min = int(round(traits[0] / delta))
        window = TraitWindow(float(traits[0]), float(traits[-1]), delta, i_min, i_min + traits.size - 1)
        out.append(Trajectory(times, values, window, space, scaling, {}))
    return out
