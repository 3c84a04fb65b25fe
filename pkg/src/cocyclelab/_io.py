"""CSV and JSON artifacts with a provenance header."""

import csv
import hashlib
import io
import json
import math
from datetime import datetime, timezone

import numpy as np

from . import __version__


def fmt(x):
    """17 significant digits for reals, plain text otherwise; locale independent."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if x is None:
        return ""
    return str(x)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return "NaN" if math.isnan(x) else ("Infinity" if x > 0 else "-Infinity")
        return x
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if hasattr(obj, "theta"):
        return float(obj.theta)
    return obj


def canonical_json(obj):
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def content_hash(obj):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def metadata(config, seed, started):
    return {
        "version": __version__,
        "config": to_jsonable(config),
        "seed": seed,
        "wall_clock_s": round(datetime.now(timezone.utc).timestamp() - started, 3),
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "input_hash": content_hash(config),
    }


def csv_body(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def csv_text(columns, rows, meta):
    header = "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in meta.items())
    return header + csv_body(columns, rows)


def strip_header(text):
    """CSV body without the ``#`` provenance lines."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def json_text(report, meta):
    return json.dumps({"meta": to_jsonable(meta), "report": to_jsonable(report)}, indent=2,
                      sort_keys=True) + "\n"
