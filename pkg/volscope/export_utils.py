"""
Utilitaires d'export pour VolScope
Documents JSON déterministes et tables CSV prêtes pour les graphiques
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from volscope import __version__
from volscope.dynamics import SERIES_COLUMNS, RollingResult
from volscope.freqdomain import BandMeasures, FrequencyReport
from volscope.timedomain import ConnectednessTable, DyMeasures, spillover_frame

FLOAT_FORMAT = "%.12g"
PathLike = Union[str, Path]


def to_jsonable(obj: Any) -> Any:
    """Convertit récursivement numpy / pandas en types JSON (NaN -> null)"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return None if math.isnan(value) or math.isinf(value) else value
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, pd.Timestamp):
        return obj.strftime("%Y-%m-%d")
    return obj


def write_json(document: Dict[str, Any], path: PathLike):
    """Écrit un document JSON (clés triées, sortie identique d'une exécution à l'autre)"""
    text = json.dumps(to_jsonable(document), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_csv(frame: pd.DataFrame, path: PathLike, index: bool = False):
    frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")


def table_document(table: ConnectednessTable, measures: DyMeasures) -> Dict[str, Any]:
    """Table de connectedness et mesures DY"""
    return {
        "horizon_tag": table.horizon_tag,
        "variable_names": table.variable_names,
        "theta": table.theta,
        "raw": table.raw,
        "total": measures.total,
        "from": measures.from_others,
        "to": measures.to_others,
        "net": measures.net,
        "pairwise": measures.pairwise,
    }


def export_table_csv(table: ConnectednessTable, measures: DyMeasures, path: PathLike):
    """Table de spillover (k+1 lignes / colonnes nommées)"""
    write_csv(spillover_frame(table, measures), path, index=True)


def band_document(measures: BandMeasures) -> Dict[str, Any]:
    band = measures.band
    return {
        "lower": band.lower,
        "upper": band.upper,
        "within_table": measures.within_table,
        "normalized_table": measures.normalized_table,
        "within_total": measures.within_total,
        "within_from": measures.within_from,
        "within_to": measures.within_to,
        "within_net": measures.within_net,
        "within_pairwise": measures.within_pairwise,
        "gamma": measures.gamma,
        "absolute_total": measures.absolute_total,
        "absolute_from": measures.absolute_from,
        "absolute_to": measures.absolute_to,
        "absolute_net": measures.absolute_net,
        "absolute_pairwise": measures.absolute_pairwise,
    }


def report_document(report: FrequencyReport) -> Dict[str, Any]:
    """Rapport complet d'un échantillon, bandes indexées par libellé"""
    return {
        "version": __version__,
        "model": report.model.to_document(),
        "time_domain": table_document(report.time_table, report.time_measures),
        "bands": {m.band.label: band_document(m) for m in report.bands},
        "reconciliation": report.reconciliation,
        "wold_tail_ratio": report.tail_ratio,
    }


def band_measures_long(report: FrequencyReport) -> pd.DataFrame:
    """Format long band,measure,variable_i,variable_j,value"""
    names = report.time_table.variable_names
    rows = []
    for measures in report.bands:
        label = measures.band.label
        for measure in ("within_total", "gamma", "absolute_total"):
            rows.append((label, measure, "", "", getattr(measures, measure)))
        for measure in ("within_from", "within_to", "within_net", "absolute_from", "absolute_to", "absolute_net"):
            vector = getattr(measures, measure)
            rows.extend((label, measure, name, "", vector[i]) for i, name in enumerate(names))
        for measure in ("within_table", "within_pairwise", "absolute_pairwise"):
            matrix = getattr(measures, measure)
            rows.extend(
                (label, measure, ni, nj, matrix[i, j]) for i, ni in enumerate(names) for j, nj in enumerate(names)
            )
    return pd.DataFrame(rows, columns=["band", "measure", "variable_i", "variable_j", "value"])


def rolling_long(result: RollingResult) -> pd.DataFrame:
    """Format long date,measure,band,value,lower,upper"""
    frames = []
    for (measure, band), series in result.series.items():
        frame = series.reset_index()
        frame.insert(1, "measure", measure)
        frame.insert(2, "band", band)
        frames.append(frame)
    long = pd.concat(frames, ignore_index=True)
    long["date"] = pd.DatetimeIndex(long["date"]).strftime("%Y-%m-%d")
    return long[["date", "measure", "band", *SERIES_COLUMNS]]


def rolling_document(result: RollingResult) -> Dict[str, Any]:
    """Métadonnées d'un calcul glissant (les séries sont dans le CSV long)"""
    meta = result.bootstrap_meta
    return {
        "version": __version__,
        "window_length": result.window_length,
        "step": result.step,
        "n_windows": result.n_windows,
        "first_anchor": result.anchor_dates[0],
        "last_anchor": result.anchor_dates[-1],
        "bands": [{"label": b.label, "lower": b.lower, "upper": b.upper} for b in result.bands_used],
        "gaps": [{"index": g.index, "date": g.date, "reason": g.reason} for g in result.gaps],
        "bootstrap": meta._asdict() if meta else None,
        "max_reconciliation": None if result.reconciliation is None else result.reconciliation.max(),
        "events": [
            {"date": e.date, "label": e.label, "anchor": e.anchor, "placed": e.placed} for e in result.events
        ],
    }
