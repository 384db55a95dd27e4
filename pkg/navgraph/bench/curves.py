"""Time-versus-quality curves from bench records."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import pandas as pd

# Record columns that identify one curve; the remaining swept parameters
# (M, k, beam_width, ...) become points along it.
DEFAULT_CURVE_KEYS = ("graph_kind", "long_scheme", "algorithm", "llf")

CURVE_COLUMNS = ("curve", "error", "cost", "recall_at_1", "cell")


def curve_label(row: pd.Series, keys: Sequence[str]) -> str:
    return "|".join(f"{key}={row[key]}" for key in keys)


def emit_curves(records: pd.DataFrame, keys: Sequence[str] = DEFAULT_CURVE_KEYS,
                cost: str = "mean_distance_computations") -> pd.DataFrame:
    """One (error, cost) curve per configuration, ready for log-scale plotting.

    Failed cells are dropped. Within a curve, points are sorted by cost and,
    among points with the same error, only the cheapest is kept.

    Args:
        records: Frame of bench records (CSV_COLUMNS), or an emitted curve frame.
        keys: Record columns identifying a curve.
        cost: Record column used as the cost axis.

    Returns:
        Frame with columns curve, error, cost, recall_at_1, cell.
    """
    if "curve" in records.columns and "cost" in records.columns:
        frame = records.loc[:, list(CURVE_COLUMNS)].copy()
    else:
        ok = records[records["status"] == "ok"] if "status" in records.columns else records
        frame = pd.DataFrame({
            "curve": ok.apply(lambda row: curve_label(row, keys), axis=1) if len(ok) else [],
            "error": ok["error"],
            "cost": ok[cost],
            "recall_at_1": ok["recall_at_1"],
            "cell": ok["cell"],
        })
    if frame.empty:
        return pd.DataFrame(columns=list(CURVE_COLUMNS))
    frame = frame.sort_values(["curve", "cost", "error", "cell"], kind="mergesort")
    frame = frame.drop_duplicates(subset=["curve", "error"], keep="first")
    return frame.reset_index(drop=True).loc[:, list(CURVE_COLUMNS)]


def write_curves(curves: pd.DataFrame, path: Union[str, Path]) -> None:
    curves.to_csv(path, index=False)
