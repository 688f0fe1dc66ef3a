"""Stuck-at fault campaigns over the soft FPU and the checker path.

Each experiment injects one permanent stuck-at fault, runs one input vector
through the FPU and the checker, and classifies the outcome:

* Masked: the FPU value is correct and no error was flagged;
* UMD: the value is wrong and the checker flagged it;
* UMUD: the value is wrong and the checker accepted it (silent corruption);
* UMUC: the value is wrong but checking was suppressed, or the fault raised
  a spurious exception flag that suppressed checking of a correct value;
* FalsePositive: the value is correct but the checker flagged an error.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .float_bits import FRAC_BITS, PackedFloat32, _check_k, exact_value
from .nets import FaultSite, FaultSpec, OpKind, UnknownFaultSite
from .rpc_check import (ADD_CLASSES, CLASS_LIST, R_EXC, ST_ERR, ST_OK, ST_SUP, CheckClass,
                        CheckVerdict, Status, SuppressionReason, check_batch,
                        list_checker_sites)
from .softfpu import FpuResult, fpu_batch, list_fault_sites


class Classification(str, enum.Enum):
    MASKED = "Masked"
    UMD = "UMD"
    UMUD = "UMUD"
    UMUC = "UMUC"
    FALSE_POSITIVE = "FalsePositive"


CLASSIFICATIONS = tuple(Classification)
C_MASKED, C_UMD, C_UMUD, C_UMUC, C_FP = range(5)
CSV_COLUMNS = ("site", "stuck_value", "masked", "umd", "umud", "umuc", "fp")
FAULT_FREE = "fault-free"


def _is_nan(words):
    return (((words >> 23) & 0xFF) == 0xFF) & ((words & 0x7FFFFF) != 0)


def same_value(w1, w2):
    """Word equality, treating any two NaNs as equal."""
    w1, w2 = np.asarray(w1), np.asarray(w2)
    return (w1 == w2) | (_is_nan(w1) & _is_nan(w2))


def classify_batch(golden_words, golden_flags, faulty_words, faulty_flags, status, reason
                   ) -> np.ndarray:
    """Vectorised :func:`classify`; returns classification codes."""
    equal = same_value(golden_words, faulty_words)
    spurious = (equal & (status == ST_SUP) & (reason == R_EXC)
                & (np.asarray(golden_flags) != np.asarray(faulty_flags)))
    return np.select(
        [equal & (status == ST_ERR), spurious, equal,
         status == ST_SUP, status == ST_ERR],
        [C_FP, C_UMUC, C_MASKED, C_UMUC, C_UMD],
        C_UMUD).astype(np.int64)


def classify(golden: FpuResult, faulty: FpuResult, verdict: CheckVerdict) -> Classification:
    status = {Status.NO_ERROR: ST_OK, Status.ERROR_DETECTED: ST_ERR,
              Status.SUPPRESSED: ST_SUP}[verdict.status]
    reason = R_EXC if verdict.suppression_reason is SuppressionReason.EXCEPTION else 0
    code = classify_batch(np.array([golden.word]), np.array([int(golden.flags)]),
                          np.array([faulty.word]), np.array([int(faulty.flags)]),
                          np.array([status]), np.array([reason]))[0]
    return CLASSIFICATIONS[int(code)]


# -- error size ------------------------------------------------------------------


def percentage_error(correct, erroneous) -> float | None:
    """|(correct - erroneous) / correct| * 100, evaluated exactly then rounded once.

    Returns None (undefined) when ``correct`` is zero or not finite, and inf
    when ``erroneous`` is infinite or NaN.
    """
    c = correct if isinstance(correct, PackedFloat32) else PackedFloat32(int(correct))
    e = erroneous if isinstance(erroneous, PackedFloat32) else PackedFloat32(int(erroneous))
    if c.exp_bits == 0xFF or (c.word & 0x7FFFFFFF) == 0:
        return None
    if e.exp_bits == 0xFF:
        return math.inf
    cv = exact_value(c)
    return float(abs((cv - exact_value(e)) / cv) * 100)


def approximate_mpe(cls, k: int) -> float:
    """max|Diff| * 2^-k * 100: one checker ulp for add/sub classes, three otherwise."""
    _check_k(k)
    max_diff = 1 if CheckClass(cls) in ADD_CLASSES else 3
    return float(Fraction(max_diff * 100, 1 << k))


# -- configuration ----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Campaign configuration.

    ``sites`` is "all", "none" (a fault-free sanity run), a list of site
    labels such as ``"mult.product[3]"``, or a dict ``{"sample": n, "seed": s}``.
    """

    op: OpKind
    k: int
    sites: object = field(default_factory=lambda: {"sample": 200, "seed": 0})
    vectors_per_fault: int = 1000
    input_seed: int = 0
    stuck_values: tuple = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "op", OpKind.parse(self.op))
        _check_k(self.k)
        if self.vectors_per_fault < 1:
            raise ValueError("vectors_per_fault must be positive")
        sv = tuple(sorted(set(int(v) for v in self.stuck_values)))
        if not sv or any(v not in (0, 1) for v in sv):
            raise ValueError("stuck_values must be a non-empty subset of {0, 1}")
        object.__setattr__(self, "stuck_values", sv)
        s = self.sites
        if isinstance(s, (list, tuple)):
            if not s:
                raise ValueError("empty site selection")
            object.__setattr__(self, "sites", tuple(str(x) for x in s))
        elif isinstance(s, dict):
            if set(s) - {"sample", "seed"} or int(s.get("sample", 0)) < 1:
                raise ValueError("site sample must look like {'sample': n, 'seed': s} with n >= 1")
            object.__setattr__(self, "sites", {"sample": int(s["sample"]),
                                               "seed": int(s.get("seed", 0))})
        elif s not in ("all", "none"):
            raise ValueError(f"unrecognised site selection {s!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["op"] = self.op.value
        d["sites"] = list(self.sites) if isinstance(self.sites, tuple) else self.sites
        d["stuck_values"] = list(self.stuck_values)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"op", "k", "sites", "vectors_per_fault", "input_seed", "stuck_values"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        if "op" not in d or "k" not in d:
            raise ValueError("config needs 'op' and 'k'")
        return cls(**d)


def all_sites(op, k: int) -> list[FaultSite]:
    """FPU sites of ``op`` followed by the checker-side sites at width k."""
    return list_fault_sites(op) + list_checker_sites(op, k)


def _site_key(seed: int, site: FaultSite) -> bytes:
    return hashlib.sha256(f"{seed}:{site.net_name}:{site.bit_index}".encode()).digest()


def select_sites(cfg: ExperimentConfig) -> list[FaultSite]:
    """Resolve the site selection.  Samples keep the n sites with the smallest
    seeded hash, so selections for different k share their FPU sites."""
    if cfg.sites == "none":
        return []
    pool = all_sites(cfg.op, cfg.k)
    if cfg.sites == "all":
        return pool
    if isinstance(cfg.sites, tuple):
        by_label = {s.label: s for s in pool}
        out = []
        for label in cfg.sites:
            if label not in by_label:
                raise UnknownFaultSite(f"no fault site {label!r} for {cfg.op.value} at k={cfg.k}")
            out.append(by_label[label])
        return out
    n, seed = cfg.sites["sample"], cfg.sites["seed"]
    ranked = sorted(pool, key=lambda s: _site_key(seed, s))
    chosen = set(ranked[:n])
    return [s for s in pool if s in chosen]


# -- input vectors --------------------------------------------------------------


def draw_vectors(op, n: int, seed: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Uniform random bit patterns whose fault-free check is not suppressed at any k.

    Depends only on (op, n, seed), so every fault and every k sees the same
    vectors.  Returns ``(a, b, drawn)`` where ``drawn`` counts all candidates.
    """
    op = OpKind.parse(op)
    rng = np.random.default_rng([seed, list(OpKind).index(op)])
    got_a, got_b, have, drawn = [], [], 0, 0
    while have < n:
        m = max(4 * (n - have), 256)
        a = rng.integers(0, 1 << 32, m, dtype=np.int64)
        b = rng.integers(0, 1 << 32, m, dtype=np.int64)
        r = fpu_batch(op, a, b)
        ok = np.ones(m, dtype=bool)
        for k in range(1, FRAC_BITS + 1):
            ok &= check_batch(op, a, b, r.words, r.flags, k).status != ST_SUP
        idx = np.flatnonzero(ok)[: n - have]
        drawn += m if len(idx) < n - have else int(np.flatnonzero(ok)[n - have - 1]) + 1
        got_a.append(a[idx])
        got_b.append(b[idx])
        have += len(idx)
    return np.concatenate(got_a), np.concatenate(got_b), drawn


# -- report ---------------------------------------------------------------------


@dataclass
class SiteResult:
    site: str
    unit: str
    stuck_value: int | None
    counts: list

    def row(self) -> dict:
        out = {"site": self.site, "stuck_value": "" if self.stuck_value is None else self.stuck_value}
        out.update({col: int(c) for col, c in zip(CSV_COLUMNS[2:], self.counts)})
        return out


@dataclass
class CampaignReport:
    config: ExperimentConfig
    counts: dict
    per_site: list
    umud_errors: np.ndarray            # percentage error per UMUD sample (inf allowed)
    umud_classes: np.ndarray           # CheckClass index per UMUD sample
    umud_undefined: int
    vectors_drawn: int
    vectors_used: int
    unit_counts: dict = field(default_factory=dict)

    @property
    def op(self) -> OpKind:
        return self.config.op

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def umud_fraction(self) -> float:
        return self.counts[Classification.UMUD.value] / self.total if self.total else 0.0

    @property
    def rejection_rate(self) -> float:
        return 1 - self.vectors_used / self.vectors_drawn if self.vectors_drawn else 0.0

    def summary_line(self) -> str:
        parts = " ".join(f"{c.value}={self.counts[c.value]}" for c in CLASSIFICATIONS)
        return (f"op={self.op.value} k={self.k} experiments={self.total} {parts} "
                f"umud_fraction={self.umud_fraction:.6f}")

    def to_dict(self) -> dict:
        return {
            "schema": "rpcfpu.campaign/1",
            "config": self.config.to_dict(),
            "op": self.op.value,
            "k": self.k,
            "experiments": self.total,
            "counts": dict(self.counts),
            "unit_counts": {u: dict(c) for u, c in sorted(self.unit_counts.items())},
            "umud_fraction": self.umud_fraction,
            "vectors": {"drawn": self.vectors_drawn, "used": self.vectors_used,
                        "rejection_rate": self.rejection_rate},
            "umud_stats": umud_stats(self),
            "umud_samples": {
                "percentage_error": [e if math.isfinite(e) else "inf"
                                     for e in self.umud_errors.tolist()],
                "class": [CLASS_LIST[int(c)].value for c in self.umud_classes],
                "undefined": self.umud_undefined,
            },
            "per_site": [s.row() | {"unit": s.unit} for s in self.per_site],
            "notes": {
                "umuc": "UMUC also counts correct results whose checking was suppressed "
                        "by a fault-induced exception flag",
                "comparator_faults": "checker and comparator sites perturb only the checking "
                                     "path, so they yield Masked, FalsePositive or UMUC",
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for s in self.per_site:
            w.writerow(s.row())
        return buf.getvalue()


def umud_stats(report: CampaignReport) -> dict:
    """Quartiles, median and over-MPE fraction of UMUD errors, per class.

    Returns ``{"empty": True}`` when there are no UMUD samples.
    """
    errs, classes = report.umud_errors, report.umud_classes
    if len(errs) == 0:
        return {"empty": True}
    out = {"empty": False, "k": report.k, "classes": {}}
    groups = [("all", np.ones(len(errs), dtype=bool))]
    groups += [(CLASS_LIST[c].value, classes == c) for c in sorted(set(classes.tolist()))]
    mpe = np.array([approximate_mpe(CLASS_LIST[int(c)], report.k) for c in classes])
    for name, sel in groups:
        e = errs[sel]
        q1, med, q3 = (float(np.quantile(e, q, method="nearest")) for q in (0.25, 0.5, 0.75))
        fix = lambda x: x if math.isfinite(x) else "inf"     # noqa: E731
        out["classes"][name] = {
            "count": int(sel.sum()), "q1": fix(q1), "median": fix(med), "q3": fix(q3),
            "over_mpe_fraction": float(np.mean(e > mpe[sel])),
        }
    return out


# -- runner ---------------------------------------------------------------------


def _pe_batch(golden: np.ndarray, faulty: np.ndarray):
    """Percentage errors of defined samples and the mask of defined samples."""
    pes = [percentage_error(c, e) for c, e in zip(golden.tolist(), faulty.tolist())]
    defined = np.array([p is not None for p in pes], dtype=bool)
    return [p for p in pes if p is not None], defined


def _run_sites(args):
    op, k, specs, a, b = args
    golden = fpu_batch(op, a, b)
    base = check_batch(op, a, b, golden.words, golden.flags, k)
    results = []
    for site, sv in specs:
        if site is None:
            faulty, verdict = golden, base
        elif site.unit == "fpu":
            spec = FaultSpec(site, sv)
            faulty = fpu_batch(op, a, b, [spec])
            verdict = check_batch(op, a, b, faulty.words, faulty.flags, k)
        else:
            spec = FaultSpec(site, sv)
            faulty = golden
            verdict = check_batch(op, a, b, golden.words, golden.flags, k, [spec])
        codes = classify_batch(golden.words, golden.flags, faulty.words, faulty.flags,
                               verdict.status, verdict.reason)
        umud = codes == C_UMUD
        errs, defined = _pe_batch(golden.words[umud], faulty.words[umud])
        results.append((np.bincount(codes, minlength=5), errs, int((~defined).sum()),
                        verdict.cls[umud][defined]))
    return results


def run_campaign(cfg: ExperimentConfig, workers: int = 1) -> CampaignReport:
    """Run every (site, stuck value, vector) experiment of ``cfg``."""
    sites = select_sites(cfg)
    if cfg.sites != "none" and not sites:
        raise ValueError("empty site selection")
    a, b, drawn = draw_vectors(cfg.op, cfg.vectors_per_fault, cfg.input_seed)
    specs = [(None, None)] if cfg.sites == "none" else \
        [(s, v) for s in sites for v in cfg.stuck_values]

    if workers > 1 and len(specs) > 1:
        chunks = [specs[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_run_sites, [(cfg.op, cfg.k, c, a, b) for c in chunks]))
        # undo the round-robin split so accumulation order is fixed
        results = [None] * len(specs)
        for w, part in enumerate(parts):
            for j, res in enumerate(part):
                results[w + j * workers] = res
    else:
        results = _run_sites((cfg.op, cfg.k, specs, a, b))

    totals = np.zeros(5, dtype=np.int64)
    per_site, errs, cls_list, undefined = [], [], [], 0
    unit_counts: dict = {}
    for (site, sv), (counts, e, und, cls) in zip(specs, results):
        totals += counts
        unit = "none" if site is None else site.unit
        uc = unit_counts.setdefault(unit, dict.fromkeys((c.value for c in CLASSIFICATIONS), 0))
        for c, n in zip(CLASSIFICATIONS, counts.tolist()):
            uc[c.value] += n
        per_site.append(SiteResult(FAULT_FREE if site is None else site.label, unit, sv,
                                   counts.tolist()))
        errs.extend(e)
        cls_list.append(np.asarray(cls, dtype=np.int64))
        undefined += und
    counts = {c.value: int(n) for c, n in zip(CLASSIFICATIONS, totals)}
    return CampaignReport(cfg, counts, per_site, np.array(errs, dtype=np.float64),
                          np.concatenate(cls_list) if cls_list else np.zeros(0, np.int64),
                          undefined, drawn, len(a), unit_counts)
