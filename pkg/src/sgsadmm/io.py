"""Problem files, iteration logs, and run summaries.

Problems are stored as self-describing JSON (format tag "sgs-admm/1") with
constraint rows as sparse triplet lists in svec indexing.  Iteration logs are
flat CSV with a fixed column set; summaries are small JSON documents.
"""

import csv
import json

import numpy as np

from .proxlib import svec_dim
from .qsdp import QOperatorSpec, QsdpProblem

FORMAT_VERSION = "sgs-admm/1"

LOG_COLUMNS = [
    "k", "eta_D", "eta_P", "eta_X", "eta_Z", "eta_W", "eta_S", "eta_I",
    "eta_qsdp", "eta_gap", "Dw", "dx_cert", "dy_cert", "pcg_iters",
    "skipped", "sigma", "time_s",
]


def _triplets(M):
    M = np.asarray(M, dtype=float)
    r, c = np.nonzero(M)
    return [[int(i), int(j), float(M[i, j])] for i, j in zip(r, c)]


def _from_triplets(shape, trips):
    M = np.zeros(shape)
    for i, j, v in trips:
        M[int(i), int(j)] = float(v)
    return M


def _encode_bounds(B):
    out = []
    for row in np.asarray(B, dtype=float):
        out.append([None if not np.isfinite(v) else float(v) for v in row])
    return out


def _decode_bounds(rows, fill):
    return np.array([[fill if v is None else float(v) for v in row] for row in rows])


def save_problem(problem, path):
    doc = {
        "version": FORMAT_VERSION,
        "n": int(problem.n),
        "C": np.asarray(problem.C, dtype=float).tolist(),
        "A_E": {"rows": int(problem.m_E), "triplets": _triplets(problem.A_E)},
        "b_E": np.asarray(problem.b_E, dtype=float).tolist(),
        "A_I": {"rows": int(problem.m_I), "triplets": _triplets(problem.A_I)},
        "b_I": np.asarray(problem.b_I, dtype=float).tolist(),
    }
    if problem.box_lower is None:
        doc["box"] = {"kind": "nonneg"}
    else:
        doc["box"] = {
            "kind": "box",
            "L": _encode_bounds(problem.box_lower),
            "U": _encode_bounds(problem.box_upper),
        }
    q = problem.Q
    if q.kind == "vacuous":
        doc["Q"] = {"kind": "vacuous"}
    elif q.kind == "explicit":
        doc["Q"] = {"kind": "explicit", "triplets": _triplets(q.matrix)}
    elif q.kind == "sym-kronecker":
        doc["Q"] = {"kind": "sym-kronecker", "A": q.A.tolist(), "B": q.B.tolist()}
    else:
        doc["Q"] = {"kind": "lyapunov", "A": q.A.tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_problem(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError("unsupported problem format %r" % doc.get("version"))
    n = int(doc["n"])
    d = svec_dim(n)
    qdoc = doc.get("Q", {"kind": "vacuous"})
    kind = qdoc["kind"]
    if kind == "vacuous":
        Q = QOperatorSpec("vacuous", n)
    elif kind == "explicit":
        Q = QOperatorSpec("explicit", n, matrix=_from_triplets((d, d), qdoc["triplets"]))
    elif kind == "sym-kronecker":
        Q = QOperatorSpec("sym-kronecker", n, A=np.array(qdoc["A"]), B=np.array(qdoc["B"]))
    elif kind == "lyapunov":
        Q = QOperatorSpec("lyapunov", n, A=np.array(qdoc["A"]))
    else:
        raise ValueError("unknown quadratic-operator kind %r" % kind)
    box = doc.get("box", {"kind": "nonneg"})
    if box["kind"] == "nonneg":
        L = U = None
    else:
        L = _decode_bounds(box["L"], -np.inf)
        U = _decode_bounds(box["U"], np.inf)
    mE = int(doc["A_E"]["rows"])
    mI = int(doc["A_I"]["rows"])
    return QsdpProblem(
        n=n,
        Q=Q,
        C=np.array(doc["C"], dtype=float),
        A_E=_from_triplets((mE, d), doc["A_E"]["triplets"]),
        b_E=np.array(doc["b_E"], dtype=float),
        A_I=_from_triplets((mI, d), doc["A_I"]["triplets"]),
        b_I=np.array(doc["b_I"], dtype=float),
        box_lower=L,
        box_upper=U,
    )


def record_row(rec):
    res = rec.residuals
    return {
        "k": rec.k,
        "eta_D": res.get("eta_D", np.nan),
        "eta_P": res.get("eta_P", np.nan),
        "eta_X": res.get("eta_X", np.nan),
        "eta_Z": res.get("eta_Z", np.nan),
        "eta_W": res.get("eta_W", np.nan),
        "eta_S": res.get("eta_S", np.nan),
        "eta_I": res.get("eta_I", np.nan),
        "eta_qsdp": res.get("eta_qsdp", rec.eta),
        "eta_gap": res.get("eta_gap", np.nan),
        "Dw": rec.Dw,
        "dx_cert": rec.dx_cert,
        "dy_cert": rec.dy_cert,
        "pcg_iters": rec.pcg_iters,
        "skipped": rec.skipped,
        "sigma": rec.sigma,
        "time_s": rec.time_s,
    }


class CsvLogWriter:
    """Streams iteration records into a CSV file with a fixed header."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=LOG_COLUMNS)
        self._writer.writeheader()

    def __call__(self, rec):
        self._writer.writerow(record_row(rec))

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, val in row.items():
                if key in ("k", "pcg_iters", "skipped"):
                    parsed[key] = int(val)
                else:
                    parsed[key] = float(val)
            rows.append(parsed)
    return rows


def write_summary(path, summary):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    raise TypeError("cannot serialize %r" % type(obj))


def summarize_report(report, algorithm):
    res = dict(report.final_residuals)
    res = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in res.items()}
    return {
        "algorithm": algorithm,
        "converged": bool(report.converged),
        "iterations": int(report.iterations),
        "wall_time_s": float(report.wall_time),
        "sigma_final": float(report.sigma_final),
        "certificate_audit_pass": bool(report.certificate_audit_pass),
        "final_residuals": res,
    }
