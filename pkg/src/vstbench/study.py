"""SSQ scoring and the user-study analysis pipeline.

Scoring follows the Kennedy simulator-sickness questionnaire: 16 symptoms
rated 0-3, three overlapping symptom groups, fixed subscale weights. The
study report mirrors the benchmark protocol: per-condition pre/post deltas,
discomfort ratings, symptom frequencies, and a Friedman/Wilcoxon or
RM-ANOVA/paired-t battery with Holm adjustment per dependent variable.

Input CSV schema (one row per participant x condition):

    participant, condition,
    ssq_pre_01..ssq_pre_16, ssq_post_01..ssq_post_16,   # integers 0..3
    discomfort_typing, discomfort_navigation, discomfort_interaction,  # 0..10
    perf_cpm, perf_typing_er, perf_nav_time, perf_nav_er, perf_ppm     # >= 0

SSQ items are ordered as in SSQ_ITEMS below. Conditions are NV, DP, GAP.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .stats import (
    TestResult,
    friedman_test,
    holm_bonferroni,
    paired_t_test,
    rm_anova,
    wilcoxon_signed_rank,
)


class StudyError(ValueError):
    pass


class StudySchemaError(StudyError):
    """Raised after exhaustive CSV validation; carries every violation."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        preview = "\n  ".join(problems[:25])
        more = "" if len(problems) <= 25 else f"\n  ... and {len(problems) - 25} more"
        super().__init__(f"{len(problems)} schema violation(s):\n  {preview}{more}")


# canonical SSQ item order and symptom-group membership
SSQ_ITEMS = (
    "general_discomfort",
    "fatigue",
    "headache",
    "eyestrain",
    "difficulty_focusing",
    "increased_salivation",
    "sweating",
    "nausea",
    "difficulty_concentrating",
    "fullness_of_head",
    "blurred_vision",
    "dizziness_eyes_open",
    "dizziness_eyes_closed",
    "vertigo",
    "stomach_awareness",
    "burping",
)

NAUSEA_ITEMS = (0, 5, 6, 7, 8, 14, 15)
OCULOMOTOR_ITEMS = (0, 1, 2, 3, 4, 8, 10)
DISORIENTATION_ITEMS = (4, 7, 9, 10, 11, 12, 13)

# subscale weights; total severity weights the plain 16-item sum
WEIGHT_NAUSEA = 9.54
WEIGHT_OCULOMOTOR = 7.58
WEIGHT_DISORIENTATION = 13.92
WEIGHT_TOTAL = 3.74

CONDITIONS = ("NV", "DP", "GAP")
DISCOMFORT_TASKS = ("typing", "navigation", "interaction")
PERFORMANCE_FIELDS = ("cpm", "typing_er", "nav_time", "nav_er", "ppm")

# which performance variables take the parametric branch (RM-ANOVA + paired t)
DEFAULT_PARAMETRIC = {
    "cpm": False,
    "typing_er": False,
    "nav_time": True,
    "nav_er": False,
    "ppm": True,
}


@dataclass(frozen=True)
class SSQResponse:
    """One questionnaire: 16 ratings, each in {0, 1, 2, 3}."""

    ratings: tuple[int, ...]

    def __post_init__(self):
        if len(self.ratings) != 16:
            raise StudyError(f"expected 16 ratings, got {len(self.ratings)}")
        for i, r in enumerate(self.ratings):
            if not isinstance(r, (int, np.integer)) or not 0 <= r <= 3:
                raise StudyError(
                    f"rating {SSQ_ITEMS[i]} = {r!r} outside the 0..3 scale"
                )

    @classmethod
    def zeros(cls) -> "SSQResponse":
        return cls(tuple([0] * 16))


@dataclass(frozen=True)
class SSQScores:
    nausea: float
    oculomotor: float
    disorientation: float
    total: float

    def __sub__(self, other: "SSQScores") -> "SSQScores":
        return SSQScores(
            self.nausea - other.nausea,
            self.oculomotor - other.oculomotor,
            self.disorientation - other.disorientation,
            self.total - other.total,
        )

    def as_dict(self) -> dict:
        return {
            "nausea": self.nausea,
            "oculomotor": self.oculomotor,
            "disorientation": self.disorientation,
            "total": self.total,
        }


def ssq_score(response: SSQResponse) -> SSQScores:
    """Weighted subscale scores of a single questionnaire."""
    r = np.asarray(response.ratings, dtype=np.float64)
    return SSQScores(
        nausea=WEIGHT_NAUSEA * float(r[list(NAUSEA_ITEMS)].sum()),
        oculomotor=WEIGHT_OCULOMOTOR * float(r[list(OCULOMOTOR_ITEMS)].sum()),
        disorientation=WEIGHT_DISORIENTATION * float(r[list(DISORIENTATION_ITEMS)].sum()),
        total=WEIGHT_TOTAL * float(r.sum()),
    )


def ssq_delta(pre: SSQScores, post: SSQScores) -> SSQScores:
    """Componentwise post minus pre."""
    return post - pre


@dataclass
class ConditionRecord:
    """Everything one participant produced under one condition."""

    participant: str
    condition: str
    pre: SSQResponse
    post: SSQResponse
    discomfort: dict[str, int]
    performance: dict[str, float]

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise StudyError(f"unknown condition {self.condition!r}")
        for task in DISCOMFORT_TASKS:
            v = self.discomfort.get(task)
            if not isinstance(v, (int, np.integer)) or not 0 <= v <= 10:
                raise StudyError(f"discomfort[{task}] = {v!r} outside 0..10")
        for key in PERFORMANCE_FIELDS:
            v = self.performance.get(key)
            if v is None or v < 0:
                raise StudyError(f"performance[{key}] = {v!r} must be >= 0")

    @property
    def average_discomfort(self) -> float:
        return float(np.mean([self.discomfort[t] for t in DISCOMFORT_TASKS]))

    def delta_scores(self) -> SSQScores:
        return ssq_delta(ssq_score(self.pre), ssq_score(self.post))


# --- CSV I/O -------------------------------------------------------------------

CSV_COLUMNS = (
    ["participant", "condition"]
    + [f"ssq_pre_{i:02d}" for i in range(1, 17)]
    + [f"ssq_post_{i:02d}" for i in range(1, 17)]
    + [f"discomfort_{t}" for t in DISCOMFORT_TASKS]
    + [f"perf_{p}" for p in PERFORMANCE_FIELDS]
)


def read_study_csv(path: str | Path) -> list[ConditionRecord]:
    """Parse and validate a study CSV; every violation is reported before abort."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"study CSV not found: {p}")
    text = p.read_text()
    return parse_study_csv(text, source=str(p))


def parse_study_csv(text: str, source: str = "<csv>") -> list[ConditionRecord]:
    problems: list[str] = []
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise StudySchemaError([f"{source}: empty file (no header row)"])
    missing = [c for c in CSV_COLUMNS if c not in reader.fieldnames]
    if missing:
        problems.append(f"{source}: missing columns: {', '.join(missing)}")
        raise StudySchemaError(problems)

    records = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        def intfield(col, lo, hi):
            raw = (row.get(col) or "").strip()
            try:
                v = int(raw)
            except ValueError:
                problems.append(f"{source}:{lineno}: {col} = {raw!r} is not an integer")
                return None
            if not lo <= v <= hi:
                problems.append(f"{source}:{lineno}: {col} = {v} outside {lo}..{hi}")
                return None
            return v

        def floatfield(col):
            raw = (row.get(col) or "").strip()
            try:
                v = float(raw)
            except ValueError:
                problems.append(f"{source}:{lineno}: {col} = {raw!r} is not a number")
                return None
            if v < 0:
                problems.append(f"{source}:{lineno}: {col} = {v} must be >= 0")
                return None
            return v

        participant = (row.get("participant") or "").strip()
        condition = (row.get("condition") or "").strip()
        if not participant:
            problems.append(f"{source}:{lineno}: empty participant id")
        if condition not in CONDITIONS:
            problems.append(
                f"{source}:{lineno}: condition = {condition!r}, expected one of {CONDITIONS}"
            )
        key = (participant, condition)
        if key in seen:
            problems.append(f"{source}:{lineno}: duplicate row for {key}")
        seen.add(key)

        pre = [intfield(f"ssq_pre_{i:02d}", 0, 3) for i in range(1, 17)]
        post = [intfield(f"ssq_post_{i:02d}", 0, 3) for i in range(1, 17)]
        disc = {t: intfield(f"discomfort_{t}", 0, 10) for t in DISCOMFORT_TASKS}
        perf = {f: floatfield(f"perf_{f}") for f in PERFORMANCE_FIELDS}

        if problems:
            continue
        records.append(
            ConditionRecord(
                participant=participant,
                condition=condition,
                pre=SSQResponse(tuple(pre)),
                post=SSQResponse(tuple(post)),
                discomfort=disc,
                performance=perf,
            )
        )
    if problems:
        raise StudySchemaError(problems)
    return records


def write_study_csv(records: list[ConditionRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in sorted(records, key=lambda r: (r.participant, CONDITIONS.index(r.condition))):
            writer.writerow(
                [r.participant, r.condition]
                + list(r.pre.ratings)
                + list(r.post.ratings)
                + [r.discomfort[t] for t in DISCOMFORT_TASKS]
                + [r.performance[f] for f in PERFORMANCE_FIELDS]
            )


# --- descriptive helpers ---------------------------------------------------------


def _describe(values: np.ndarray) -> dict:
    """Mean/SD plus median and IQR using linear-interpolation quantiles."""
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {
        "mean": float(v.mean()),
        "sd": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
        "median": float(med),
        "iqr": float(q3 - q1),
        "n": int(len(v)),
    }


def _pairwise_battery(
    by_condition: dict[str, np.ndarray],
    dv_name: str,
    parametric: bool,
    wilcoxon_method: str,
) -> dict:
    """Omnibus test plus Holm-adjusted pairwise family for one dependent variable."""
    data = np.stack([by_condition[c] for c in CONDITIONS], axis=1)
    pairs = [("DP", "NV"), ("GAP", "NV"), ("DP", "GAP")]
    results: list[TestResult] = []
    if parametric:
        omnibus = rm_anova(data, name=f"{dv_name}:rm_anova")
        for hi, lo in pairs:
            results.append(
                paired_t_test(by_condition[hi], by_condition[lo], name=f"{dv_name}:{hi}-{lo}")
            )
    else:
        omnibus = friedman_test(data, name=f"{dv_name}:friedman")
        for hi, lo in pairs:
            try:
                res = wilcoxon_signed_rank(
                    by_condition[hi], by_condition[lo],
                    method=wilcoxon_method, name=f"{dv_name}:{hi}-{lo}",
                )
                # report the other branch too: exact vs approximate p
                other = "approx" if res.extra.get("method") == "exact" else "exact"
                try:
                    res.extra[f"p_{other}"] = wilcoxon_signed_rank(
                        by_condition[hi], by_condition[lo], method=other
                    ).p
                except Exception:
                    pass
            except Exception as exc:
                res = TestResult(name=f"{dv_name}:{hi}-{lo}", statistic_name="W",
                                 statistic=float("nan"), dof=None, p=1.0,
                                 extra={"degenerate": str(exc)})
            results.append(res)

    adjusted = holm_bonferroni([r.p for r in results])
    for r, adj in zip(results, adjusted):
        r.adjusted_p = adj

    def direction(hi, lo):
        return f"{hi} > {lo}" if np.mean(by_condition[hi]) > np.mean(by_condition[lo]) else f"{lo} > {hi}"

    return {
        "omnibus": omnibus.to_dict(),
        "pairwise": [
            {**r.to_dict(), "pair": f"{hi}-{lo}",
             "direction": direction(hi, lo),
             "significant": r.significant()}
            for r, (hi, lo) in zip(results, pairs)
        ],
    }


def score_study(
    records: list[ConditionRecord],
    parametric: dict[str, bool] | None = None,
    wilcoxon_method: str = "auto",
) -> dict:
    """Full study report: per-condition summaries plus the test battery.

    Participants missing any condition are excluded with a warning.
    """
    parametric = {**DEFAULT_PARAMETRIC, **(parametric or {})}
    by_participant: dict[str, dict[str, ConditionRecord]] = {}
    for r in records:
        by_participant.setdefault(r.participant, {})[r.condition] = r

    included = sorted(p for p, conds in by_participant.items() if len(conds) == 3)
    excluded = sorted(p for p in by_participant if p not in included)
    warnings = [
        f"participant {p} excluded: missing conditions "
        f"{sorted(set(CONDITIONS) - set(by_participant[p]))}"
        for p in excluded
    ]
    if len(included) < 2:
        raise StudyError("need at least 2 complete participants")

    def per_condition(getter) -> dict[str, np.ndarray]:
        return {
            c: np.array([getter(by_participant[p][c]) for p in included])
            for c in CONDITIONS
        }

    report: dict = {
        "participants": {"included": included, "excluded": excluded, "warnings": warnings,
                         "n": len(included)},
        "conditions": list(CONDITIONS),
    }

    # SSQ delta summaries plus the test battery
    scales = ("nausea", "oculomotor", "disorientation", "total")
    ssq_tables = {}
    ssq_tests = {}
    for scale in scales:
        data = per_condition(lambda rec, s=scale: getattr(rec.delta_scores(), s))
        ssq_tables[scale] = {c: _describe(data[c]) for c in CONDITIONS}
        ssq_tests[scale] = _pairwise_battery(data, f"ssq_{scale}", parametric=False,
                                             wilcoxon_method=wilcoxon_method)
    report["ssq"] = {"deltas": ssq_tables, "tests": ssq_tests}

    # per-symptom delta frequencies; the combined DP/GAP column is
    # ambiguous in the source protocol, so both candidate readings are emitted
    symptoms = {}
    for i, item in enumerate(SSQ_ITEMS):
        data = per_condition(lambda rec, j=i: rec.post.ratings[j] - rec.pre.ratings[j])
        entry = {
            c: {
                "mean": float(data[c].mean()),
                "sd": float(data[c].std(ddof=1)),
                "pct_positive": float(100.0 * np.mean(data[c] > 0)),
            }
            for c in CONDITIONS
        }
        both_positive = (data["DP"] > 0) & (data["GAP"] > 0)
        entry["dp_and_gap"] = {
            "intersection_pct_positive": float(100.0 * both_positive.mean()),
            "mean_of_means": float((data["DP"].mean() + data["GAP"].mean()) / 2.0),
            "pct_mean_of_means": float(
                (100.0 * np.mean(data["DP"] > 0) + 100.0 * np.mean(data["GAP"] > 0)) / 2.0
            ),
        }
        entry["groups"] = [
            g
            for g, idxs in (
                ("N", NAUSEA_ITEMS),
                ("O", OCULOMOTOR_ITEMS),
                ("D", DISORIENTATION_ITEMS),
            )
            if i in idxs
        ]
        symptoms[item] = entry
    report["symptoms"] = symptoms

    # discomfort summaries plus the test battery
    disc_tables = {}
    disc_tests = {}
    for task in DISCOMFORT_TASKS + ("average",):
        if task == "average":
            data = per_condition(lambda rec: rec.average_discomfort)
        else:
            data = per_condition(lambda rec, t=task: rec.discomfort[t])
        disc_tables[task] = {c: _describe(data[c]) for c in CONDITIONS}
        disc_tests[task] = _pairwise_battery(data, f"discomfort_{task}", parametric=False,
                                             wilcoxon_method=wilcoxon_method)
    report["discomfort"] = {"scores": disc_tables, "tests": disc_tests}

    # task performance: parametric or rank branch per dependent variable
    perf_tables = {}
    perf_tests = {}
    for dv in PERFORMANCE_FIELDS:
        data = per_condition(lambda rec, d=dv: rec.performance[d])
        perf_tables[dv] = {c: _describe(data[c]) for c in CONDITIONS}
        perf_tests[dv] = _pairwise_battery(
            data, f"perf_{dv}", parametric=parametric[dv], wilcoxon_method=wilcoxon_method
        )
        perf_tests[dv]["branch"] = "parametric" if parametric[dv] else "nonparametric"
    report["performance"] = {"scores": perf_tables, "tests": perf_tests}

    return report


def balanced_latin_square(k: int = 3) -> list[tuple[int, ...]]:
    """Balanced Latin-square condition orders (2k rows for odd k).

    First row 0, 1, k-1, 2, k-2, ...; following rows shift by one; odd k
    additionally appends the reversed rows.
    """
    first = [0]
    for j in range(1, k):
        first.append((first[-1] + j) % k if j % 2 else (first[-1] - j) % k)
    rows = [tuple((v + i) % k for v in first) for i in range(k)]
    if k % 2:
        rows += [tuple(reversed(r)) for r in rows]
    return rows


# --- synthetic cohort -------------------------------------------------------------


def generate_example_cohort(n: int = 24, seed: int = 7) -> list[ConditionRecord]:
    """Deterministic synthetic cohort with a DP > GAP > NV severity pattern.

    Crafted so the study battery reproduces the qualitative significance
    pattern of a passthrough comfort study: both passthrough conditions
    exceed natural vision everywhere, and DP exceeds GAP on nausea,
    disorientation, and total severity (but not reliably on oculomotor).
    """
    rng = np.random.default_rng(seed)
    # items feeding nausea/disorientation but not the oculomotor group get the
    # extra DP severity; oculomotor-group items stay matched between DP and GAP
    nd_only = {5, 6, 7, 9, 11, 12, 13, 14, 15}
    records = []
    for pid in range(1, n + 1):
        pre = [int(rng.random() < 0.12) for _ in range(16)]
        for cond in CONDITIONS:
            post = list(pre)
            for i in range(16):
                if cond == "NV":
                    p1, p2 = 0.04, 0.0
                elif cond == "GAP":
                    p1, p2 = (0.20, 0.03) if i in nd_only else (0.33, 0.07)
                else:  # DP
                    p1, p2 = (0.55, 0.18) if i in nd_only else (0.35, 0.08)
                u = rng.random()
                inc = 2 if u < p2 else (1 if u < p2 + p1 else 0)
                # occasional recovery on pre-existing symptoms
                if inc == 0 and pre[i] > 0 and rng.random() < 0.10:
                    inc = -1
                post[i] = int(np.clip(pre[i] + inc, 0, 3))

            base = {"NV": 0.7, "GAP": 3.0, "DP": 4.1}[cond]
            disc = {
                t: int(np.clip(round(rng.normal(base + off, 1.2)), 0, 10))
                for t, off in zip(DISCOMFORT_TASKS, (-0.4, 0.3, 0.0))
            }
            perf_mu = {
                "NV": (60.8, 1.75, 120.0, 1.6, 6.0),
                "DP": (44.1, 3.3, 137.8, 2.8, 4.65),
                "GAP": (46.2, 3.0, 136.2, 2.2, 4.57),
            }[cond]
            sds = (9.0, 1.2, 9.0, 3.2, 1.0)
            perf_vals = [max(0.0, rng.normal(m, s)) for m, s in zip(perf_mu, sds)]
            records.append(
                ConditionRecord(
                    participant=f"P{pid:02d}",
                    condition=cond,
                    pre=SSQResponse(tuple(pre)),
                    post=SSQResponse(tuple(post)),
                    discomfort=disc,
                    performance=dict(zip(PERFORMANCE_FIELDS, perf_vals)),
                )
            )
    return records
