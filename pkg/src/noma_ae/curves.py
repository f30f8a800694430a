"""BER curves on disk and their pointwise comparison."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError

CURVE_FIELDS = ("snr_db", "ber_ue1", "ber_ue2", "ber_avg", "trials", "n_seeds", "scheme", "fingerprint")


@dataclass(frozen=True)
class CurveRow:
    snr_db: float
    ber_ue1: float
    ber_ue2: float
    trials: int
    n_seeds: int

    @property
    def ber_avg(self):
        return 0.5 * (self.ber_ue1 + self.ber_ue2)

    def stderr(self, which="avg"):
        """Binomial standard error of a seed-averaged estimate; zero for analytic rows."""
        if self.trials == 0:
            return 0.0
        p = {"avg": self.ber_avg, "ue1": self.ber_ue1, "ue2": self.ber_ue2}[which]
        return math.sqrt(max(p * (1 - p), 0.0) / (self.trials * self.n_seeds))


@dataclass
class BerCurve:
    scheme: str
    rows: list = field(default_factory=list)
    fingerprint: str = ""

    @property
    def snr_db(self):
        return np.array([r.snr_db for r in self.rows])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def at(self, snr_db):
        for r in self.rows:
            if r.snr_db == snr_db:
                return r
        raise KeyError(snr_db)


def analytic_curve(scheme, snr_grid, ber1, ber2, fingerprint=""):
    rows = [CurveRow(float(s), float(a), float(b), 0, 1) for s, a, b in zip(snr_grid, ber1, ber2)]
    return BerCurve(scheme, rows, fingerprint)


def average_curves(curves, scheme, fingerprint=""):
    """Pointwise mean over seeds; trial counts must agree."""
    if not curves:
        raise StructuralError("nothing to average")
    grid = [p.snr_db for p in curves[0]]
    rows = []
    for i, s in enumerate(grid):
        pts = [c[i] for c in curves]
        if any(p.snr_db != s for p in pts) or len({p.trials for p in pts}) != 1:
            raise StructuralError("per-seed curves disagree on SNR grid or trial count")
        # fixed summation order keeps reruns bit-identical
        u1 = math.fsum(p.ber_ue1 for p in pts) / len(pts)
        u2 = math.fsum(p.ber_ue2 for p in pts) / len(pts)
        rows.append(CurveRow(float(s), u1, u2, pts[0].trials, len(pts)))
    return BerCurve(scheme, rows, fingerprint)


def write_curve(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for r in curve.rows:
            # repr round-trips floats exactly
            w.writerow([repr(r.snr_db), repr(r.ber_ue1), repr(r.ber_ue2), repr(r.ber_avg), r.trials,
                        r.n_seeds, curve.scheme, curve.fingerprint])


def read_curve(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_FIELDS:
            raise StructuralError(f"{path}: unexpected header {reader.fieldnames}")
        rows, scheme, fp = [], None, ""
        for rec in reader:
            row = CurveRow(float(rec["snr_db"]), float(rec["ber_ue1"]), float(rec["ber_ue2"]),
                           int(rec["trials"]), int(rec["n_seeds"]))
            if float(rec["ber_avg"]) != row.ber_avg:
                raise StructuralError(f"{path}: ber_avg is not the mean of the two users at {row.snr_db} dB")
            rows.append(row)
            scheme, fp = rec["scheme"], rec["fingerprint"]
    return BerCurve(scheme or "", rows, fp)


@dataclass
class Comparison:
    snr_db: list
    delta: list
    slack: list
    status: str

    @property
    def ok(self):
        return self.status in ("equal", "below")

    def report(self, name_a="a", name_b="b"):
        lines = [f"# {name_a} vs {name_b}: status {self.status}", "snr_db,delta_avg,slack,a_le_b"]
        for s, d, sl in zip(self.snr_db, self.delta, self.slack):
            lines.append(f"{s!r},{d!r},{sl!r},{int(d <= sl)}")
        return "\n".join(lines) + "\n"


def compare_curves(a, b, n_stderr=3.0, which="avg"):
    """Pointwise ``a - b`` of the chosen BER column.

    Status is ``equal`` when every delta is zero, ``below`` when ``a <= b``
    everywhere up to ``n_stderr`` combined standard errors, ``above`` otherwise.
    """
    if len(a.rows) != len(b.rows) or any(x.snr_db != y.snr_db for x, y in zip(a.rows, b.rows)):
        raise StructuralError("curves are on different SNR grids")
    col = {"avg": "ber_avg", "ue1": "ber_ue1", "ue2": "ber_ue2"}[which]
    delta, slack = [], []
    for x, y in zip(a.rows, b.rows):
        delta.append(getattr(x, col) - getattr(y, col))
        slack.append(n_stderr * math.hypot(x.stderr(which), y.stderr(which)))
    if all(d == 0 for d in delta):
        status = "equal"
    elif all(d <= s for d, s in zip(delta, slack)):
        status = "below"
    else:
        status = "above"
    return Comparison([r.snr_db for r in a.rows], delta, slack, status)
