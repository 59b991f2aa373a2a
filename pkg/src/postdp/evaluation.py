"""Membership-inference attack metrics and pairwise statistical comparisons.

Attack evaluation is threshold-based: the cut point is the midpoint between
the mean member and mean non-member confidence scores, and ROC-AUC is the
rank statistic (probability a random member outscores a random non-member,
ties counted 1/2).  The comparison battery covers Welch's t with a 95% CI,
elementwise error metrics, Pearson r, R^2 against a reference, coefficient
of variation, and a Wilcoxon signed-rank test that is exact for small n.
"""

import csv
import dataclasses
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm, rankdata
from scipy.stats import t as student_t

WILCOXON_EXACT_MAX_N = 25

RESULTS_COLUMNS = (
    "model",
    "batch_size",
    "epochs",
    "epsilon",
    "perplexity_member",
    "perplexity_non_member",
    "roc_auc",
    "accuracy",
    "precision",
    "recall",
    "f1",
)
METRIC_COLUMNS = RESULTS_COLUMNS[4:]


class SchemaError(ValueError):
    """Input file is missing a required column."""


@dataclass(frozen=True)
class ScoreSet:
    member_scores: tuple[float, ...]
    nonmember_scores: tuple[float, ...]

    def __post_init__(self):
        if not self.member_scores or not self.nonmember_scores:
            raise ValueError("both member and non-member score lists must be nonempty")
        for s in itertools.chain(self.member_scores, self.nonmember_scores):
            if not math.isfinite(s):
                raise ValueError(f"scores must be finite, got {s}")


@dataclass(frozen=True)
class MiaMetrics:
    threshold: float
    roc_auc: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    no_positive_predictions: bool = False

    def to_dict(self) -> dict:
        return dict(vars(self))


def mia_threshold(scores: ScoreSet) -> float:
    """Midpoint between the mean member and mean non-member scores."""
    member = np.asarray(scores.member_scores, dtype=float)
    nonmember = np.asarray(scores.nonmember_scores, dtype=float)
    return float((member.mean() + nonmember.mean()) / 2.0)


def rank_auc(member, nonmember) -> float:
    """ROC-AUC as the Mann-Whitney rank statistic with average ranks for ties."""
    member = np.asarray(member, dtype=float)
    nonmember = np.asarray(nonmember, dtype=float)
    n_m, n_n = member.size, nonmember.size
    ranks = rankdata(np.concatenate([member, nonmember]))
    rank_sum = ranks[:n_m].sum()
    return (rank_sum - n_m * (n_m + 1) / 2.0) / (n_m * n_n)


def mia_evaluate(scores: ScoreSet) -> MiaMetrics:
    """Threshold attack metrics; a score at the threshold predicts member."""
    threshold = mia_threshold(scores)
    member = np.asarray(scores.member_scores, dtype=float)
    nonmember = np.asarray(scores.nonmember_scores, dtype=float)
    tp = int(np.count_nonzero(member >= threshold))
    fn = member.size - tp
    fp = int(np.count_nonzero(nonmember >= threshold))
    tn = nonmember.size - fp

    accuracy = (tp + tn) / (member.size + nonmember.size)
    no_positives = (tp + fp) == 0
    precision = 0.0 if no_positives else tp / (tp + fp)
    recall = tp / member.size
    f1 = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return MiaMetrics(
        threshold=threshold,
        roc_auc=rank_auc(member, nonmember),
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        no_positive_predictions=no_positives,
    )


def wilcoxon_signed_rank(differences) -> tuple[float, float, str]:
    """Two-sided signed-rank test on paired differences; zeros are dropped.

    Exact tail sums over the signed-rank distribution for n <= 25 (ties get
    average ranks), normal approximation with continuity correction above.
    Returns (statistic, p_value, mode) where statistic = min(W+, W-).
    """
    d = np.asarray(differences, dtype=float)
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise ValueError("all differences are zero; test not applicable")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)

    if n <= WILCOXON_EXACT_MAX_N:
        # Subset-sum distribution over doubled ranks (halves become ints).
        doubled = np.rint(2.0 * ranks).astype(int)
        total = int(doubled.sum())
        counts = np.zeros(total + 1, dtype=np.int64)
        counts[0] = 1
        for r in doubled:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[: total + 1 - r]
            counts = counts + shifted
        lo = int(round(2.0 * stat))
        hi = total - lo
        p = (counts[: lo + 1].sum() + counts[hi:].sum()) / 2.0**n
        return stat, float(min(p, 1.0)), "exact"

    mean = float(ranks.sum()) / 2.0
    sd = math.sqrt(float((ranks**2).sum()) / 4.0)
    z = (stat - mean + 0.5) / sd
    p = 2.0 * norm.cdf(z)
    return stat, float(min(p, 1.0)), "normal-approx"


@dataclass(frozen=True)
class PairwiseReport:
    """One model-pair comparison; entries are None when not applicable."""

    n_a: int
    n_b: int
    paired: bool
    welch_t: float = None
    welch_p: float = None
    welch_df: float = None
    ci95_low: float = None
    ci95_high: float = None
    rmse: float = None
    mae: float = None
    mse: float = None
    medae: float = None
    mape: float = None
    mape_skipped: int = 0
    pearson_r: float = None
    r2: float = None
    cov: float = None
    wilcoxon_stat: float = None
    wilcoxon_p: float = None
    wilcoxon_mode: str = None
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = dict(vars(self))
        d["notes"] = list(self.notes)
        return d


def pairwise_compare(a, b, paired: bool = True) -> PairwiseReport:
    """Statistical comparison of two result series.

    b is the reference for R^2, MAPE, and the coefficient of variation.
    Elementwise metrics need paired, equal-length inputs; unpaired calls get
    the Welch test and CoV only.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 1 or b.size < 1:
        raise ValueError("both inputs must be nonempty")
    if paired and a.size != b.size:
        raise ValueError(f"paired inputs must have equal length, got {a.size} and {b.size}")
    notes = []
    out: dict = {"n_a": int(a.size), "n_b": int(b.size), "paired": paired}

    if a.size >= 2 and b.size >= 2:
        va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
        se_sq = va / a.size + vb / b.size
        if se_sq == 0.0:
            notes.append("zero variance in both samples; t-test not applicable")
        else:
            diff = float(a.mean() - b.mean())
            se = math.sqrt(se_sq)
            df_den = (va / a.size) ** 2 / (a.size - 1) + (vb / b.size) ** 2 / (b.size - 1)
            # df_den can underflow to 0 while se_sq stays positive.
            df = se_sq**2 / df_den if df_den > 0.0 else math.inf
            t_stat = diff / se
            out["welch_t"] = t_stat
            out["welch_df"] = df
            out["welch_p"] = float(2.0 * student_t.sf(abs(t_stat), df))
            t_crit = float(student_t.ppf(0.975, df))
            out["ci95_low"] = diff - t_crit * se
            out["ci95_high"] = diff + t_crit * se
    else:
        notes.append("need n >= 2 in both samples for variance-based statistics")

    if b.size >= 2:
        mean_b = float(b.mean())
        if mean_b == 0.0:
            notes.append("reference mean is zero; CoV not applicable")
        else:
            out["cov"] = float(b.std(ddof=1)) / abs(mean_b)

    if paired:
        d = a - b
        out["mse"] = float(np.mean(d**2))
        out["rmse"] = math.sqrt(out["mse"])
        out["mae"] = float(np.mean(np.abs(d)))
        out["medae"] = float(np.median(np.abs(d)))

        nonzero = b != 0.0
        out["mape_skipped"] = int(np.count_nonzero(~nonzero))
        if out["mape_skipped"]:
            notes.append(f"mape skipped {out['mape_skipped']} zero-reference pair(s)")
        if np.any(nonzero):
            with np.errstate(over="ignore"):
                out["mape"] = float(np.mean(np.abs(d[nonzero] / b[nonzero])))

        if a.size >= 2 and float(a.std()) > 0.0 and float(b.std()) > 0.0:
            out["pearson_r"] = float(np.corrcoef(a, b)[0, 1])
        else:
            notes.append("constant input; Pearson r not applicable")

        ss_tot = float(np.sum((b - b.mean()) ** 2))
        if ss_tot == 0.0:
            notes.append("reference has zero variance; R^2 not applicable")
        else:
            out["r2"] = 1.0 - float(np.sum(d**2)) / ss_tot

        if np.any(d != 0.0):
            stat, p, mode = wilcoxon_signed_rank(d)
            out["wilcoxon_stat"] = stat
            out["wilcoxon_p"] = p
            out["wilcoxon_mode"] = mode
        else:
            notes.append("all differences zero; Wilcoxon not applicable")
    else:
        notes.append("unpaired inputs; elementwise metrics skipped")

    return PairwiseReport(notes=tuple(notes), **out)


def load_score_file(path) -> list[float]:
    """Single-cohort score file: CSV with a `score` column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "score" not in reader.fieldnames:
            raise SchemaError(f"{path}: missing required column 'score'")
        return [float(row["score"]) for row in reader]


def load_labeled_score_file(path) -> ScoreSet:
    """Two-column `label,score` file; label 1 marks members."""
    members, nonmembers = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for col in ("label", "score"):
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise SchemaError(f"{path}: missing required column {col!r}")
        for row in reader:
            (members if int(row["label"]) == 1 else nonmembers).append(float(row["score"]))
    return ScoreSet(member_scores=tuple(members), nonmember_scores=tuple(nonmembers))


def load_run_results(paths) -> list[dict]:
    """Run-results CSVs with the fixed column set; numeric fields are parsed."""
    runs = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for col in RESULTS_COLUMNS:
                if reader.fieldnames is None or col not in reader.fieldnames:
                    raise SchemaError(f"{path}: missing required column {col!r}")
            for row in reader:
                parsed = {"model": row["model"]}
                for col in RESULTS_COLUMNS[1:]:
                    parsed[col] = float(row[col])
                runs.append(parsed)
    return runs


def _descriptive_rows(runs, group_key):
    rows = []
    keys = sorted({(r[group_key], r["model"]) for r in runs})
    for group_value, model in keys:
        sample = [r for r in runs if r[group_key] == group_value and r["model"] == model]
        row = {group_key: group_value, "model": model, "n": len(sample)}
        for metric in METRIC_COLUMNS:
            values = np.array([r[metric] for r in sample])
            row[f"{metric}_mean"] = float(values.mean())
            row[f"{metric}_std"] = float(values.std(ddof=0))
        rows.append(row)
    return rows


def _pairwise_rows(runs, group_key):
    rows = []
    for group_value in sorted({r[group_key] for r in runs}):
        in_group = [r for r in runs if r[group_key] == group_value]
        models = sorted({r["model"] for r in in_group})
        for model_a, model_b in itertools.combinations(models, 2):
            runs_a = [r for r in in_group if r["model"] == model_a]
            runs_b = [r for r in in_group if r["model"] == model_b]
            paired = len(runs_a) == len(runs_b)
            for metric in METRIC_COLUMNS:
                report = pairwise_compare(
                    [r[metric] for r in runs_a], [r[metric] for r in runs_b], paired=paired
                )
                row = {
                    group_key: group_value,
                    "model_a": model_a,
                    "model_b": model_b,
                    "metric": metric,
                }
                row.update(report.to_dict())
                rows.append(row)
    return rows


def _write_rows_csv(rows, path, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            record = []
            for col in columns:
                value = row[col]
                if value is None:
                    record.append("")
                elif isinstance(value, (list, tuple)):
                    record.append("; ".join(str(v) for v in value))
                elif isinstance(value, float):
                    record.append(repr(value))
                else:
                    record.append(str(value))
            writer.writerow(record)


def batch_report(results_files, group_key: str, out_dir) -> dict:
    """Grouped descriptive statistics and per-pair comparisons, as CSV + JSON.

    Groups runs by (group_key value, model); every model pair within a group
    is compared metric by metric.  Output ordering follows sorted group keys.
    """
    if group_key not in ("batch_size", "epochs"):
        raise ValueError(f"group_key must be 'batch_size' or 'epochs', got {group_key!r}")
    runs = load_run_results(results_files)
    if not runs:
        raise SchemaError("no runs found in the given results files")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    descriptive = _descriptive_rows(runs, group_key)
    pairwise = _pairwise_rows(runs, group_key)

    descriptive_columns = [group_key, "model", "n"]
    for metric in METRIC_COLUMNS:
        descriptive_columns += [f"{metric}_mean", f"{metric}_std"]
    pairwise_columns = [group_key, "model_a", "model_b", "metric"] + [
        f.name for f in dataclasses.fields(PairwiseReport)
    ]

    paths = {
        "descriptive_csv": out_dir / "descriptive.csv",
        "descriptive_json": out_dir / "descriptive.json",
        "pairwise_csv": out_dir / "pairwise.csv",
        "pairwise_json": out_dir / "pairwise.json",
    }
    _write_rows_csv(descriptive, paths["descriptive_csv"], descriptive_columns)
    _write_rows_csv(pairwise, paths["pairwise_csv"], pairwise_columns)
    paths["descriptive_json"].write_text(
        json.dumps({"schema_version": 1, "rows": descriptive}, indent=2) + "\n"
    )
    paths["pairwise_json"].write_text(
        json.dumps({"schema_version": 1, "rows": pairwise}, indent=2) + "\n"
    )
    return {
        "descriptive": descriptive,
        "pairwise": pairwise,
        "paths": {k: str(v) for k, v in paths.items()},
    }
