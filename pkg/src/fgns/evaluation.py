"""Quantitative comparison of the two explanation methods.

For a balanced set of correctly and incorrectly classified test queries,
both methods produce neighbors, and we measure (in raw pixel space) how far
neighbors sit from the query and from the predicted class's prototype.
Two-sample t-tests compare the methods per distance family, in a pooled and
a Welch variant, both per neighbor and per query-averaged. Summaries use
Tukey hinges for quartiles (the median joins both halves) and ddof=1 for
SD/variance.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .catalog import FeatureCatalog
from .config import RunConfig
from .data import LabeledDataset
from .errors import DegenerateSampleError, InsufficientDataError
from .model import ClassifierModel
from .neighbors import METHOD_BASELINE, METHOD_FGNS, explain

# Previously reported results for this protocol on Kannada-MNIST; the report
# prints them beside fresh numbers for eyeball comparison, never as targets.
PUBLISHED_REFERENCE = {
    "query_distance_mean": {METHOD_FGNS: 6.87, METHOD_BASELINE: 4.92},
    "prototype_distance_mean": {METHOD_FGNS: 4.14, METHOD_BASELINE: 5.55},
    "prototype_distance_sd": {METHOD_FGNS: 0.53, METHOD_BASELINE: 1.05},
}


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.asarray(a, dtype=np.float64).ravel() - np.asarray(b, dtype=np.float64).ravel()
    return float(np.sqrt(np.sum(diff * diff)))


def _median(sorted_values: np.ndarray) -> float:
    n = sorted_values.size
    mid = n // 2
    if n % 2 == 1:
        return float(sorted_values[mid])
    return float((sorted_values[mid - 1] + sorted_values[mid]) / 2.0)


def summarize(values) -> dict:
    """n, mean, median, Tukey-hinge quartiles, iqr, sample sd and variance."""
    arr = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = arr.size
    if n < 2:
        raise InsufficientDataError(f"summary needs at least 2 values, got {n}")
    half = (n + 1) // 2
    q1 = _median(arr[:half])
    q3 = _median(arr[n - half :])
    return {
        "n": int(n),
        "mean": float(arr.mean()),
        "median": _median(arr),
        "q1": q1,
        "q3": q3,
        "iqr": q3 - q1,
        "sd": float(np.std(arr, ddof=1)),
        "variance": float(np.var(arr, ddof=1)),
    }


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float
    kind: str  # "pooled" or "welch"

    def to_payload(self) -> dict:
        return {"t": self.t, "df": self.df, "p": self.p, "kind": self.kind}


def two_sample_t(xs, ys, pooled: bool) -> TTestResult:
    """Two-sided two-sample t-test.

    Zero variance in both samples with equal means gives t=0, p=1; zero
    variance with unequal means has no defined statistic and raises.
    """
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    n1, n2 = xs.size, ys.size
    if n1 < 2 or n2 < 2:
        raise InsufficientDataError(f"t-test needs 2+ values per sample, got {n1} and {n2}")
    m1, m2 = float(xs.mean()), float(ys.mean())
    v1 = float(np.var(xs, ddof=1))
    v2 = float(np.var(ys, ddof=1))
    kind = "pooled" if pooled else "welch"
    if pooled:
        df = float(n1 + n2 - 2)
        sp2 = ((n1 - 1) * v1 + (n2 - 1) * v2) / df
        se2 = sp2 * (1.0 / n1 + 1.0 / n2)
    else:
        se2 = v1 / n1 + v2 / n2
        if se2 > 0.0:
            df = se2**2 / ((v1 / n1) ** 2 / (n1 - 1) + (v2 / n2) ** 2 / (n2 - 1))
        else:
            df = float(n1 + n2 - 2)
    if se2 == 0.0:
        if m1 == m2:
            return TTestResult(t=0.0, df=df, p=1.0, kind=kind)
        raise DegenerateSampleError(
            "zero variance with unequal means: t statistic undefined"
        )
    t = (m1 - m2) / float(np.sqrt(se2))
    p = 2.0 * float(scipy.stats.t.sf(abs(t), df))
    return TTestResult(t=float(t), df=float(df), p=p, kind=kind)


@dataclass(frozen=True)
class QuerySelection:
    correct_rows: np.ndarray
    incorrect_rows: np.ndarray
    requested_correct: int
    requested_incorrect: int


def select_queries(
    correct_mask: np.ndarray, n_correct: int, n_incorrect: int, seed: int
) -> QuerySelection:
    """Seeded balanced draw of query rows from a correctness mask.

    Short sides take everything available, except that fewer than two
    misclassifications (or zero correct ones) abort the evaluation.
    """
    correct_mask = np.asarray(correct_mask, dtype=bool)
    correct_pool = np.flatnonzero(correct_mask)
    incorrect_pool = np.flatnonzero(~correct_mask)
    if incorrect_pool.size < 2:
        raise InsufficientDataError(
            f"need at least 2 misclassified instances, found {incorrect_pool.size}"
        )
    if correct_pool.size < 1:
        raise InsufficientDataError("no correctly classified instances to sample")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xE7A1])))
    take_c = min(n_correct, correct_pool.size)
    take_i = min(n_incorrect, incorrect_pool.size)
    chosen_c = np.sort(rng.choice(correct_pool, size=take_c, replace=False))
    chosen_i = np.sort(rng.choice(incorrect_pool, size=take_i, replace=False))
    return QuerySelection(
        correct_rows=chosen_c,
        incorrect_rows=chosen_i,
        requested_correct=n_correct,
        requested_incorrect=n_incorrect,
    )


def run_quant_eval(
    m: ClassifierModel,
    train: LabeledDataset,
    test: LabeledDataset,
    cat: FeatureCatalog,
    protos: dict[int, np.ndarray],
    cfg: RunConfig,
) -> dict:
    """Produce the full comparison payload (stats, tests, raw distances)."""
    eval_test = test.filter_classes(cfg.data.eval_classes)
    preds = m.predict(eval_test.images)
    correct_mask = preds == eval_test.labels
    sel = select_queries(
        correct_mask,
        n_correct=cfg.evaluation.n_correct,
        n_incorrect=cfg.evaluation.n_incorrect,
        seed=cfg.seed,
    )
    rows = np.concatenate([sel.correct_rows, sel.incorrect_rows])

    train_row_by_id = {int(tid): i for i, tid in enumerate(train.ids)}
    distances: dict[str, dict[str, list[float]]] = {
        METHOD_FGNS: {"query": [], "prototype": [], "query_per_query": [], "prototype_per_query": []},
        METHOD_BASELINE: {"query": [], "prototype": [], "query_per_query": [], "prototype_per_query": []},
    }
    fallbacks = {METHOD_FGNS: 0, METHOD_BASELINE: 0}

    for row in rows:
        query = eval_test.images[int(row)]
        true_class = int(eval_test.labels[int(row)])
        for method in (METHOD_FGNS, METHOD_BASELINE):
            exp = explain(
                m,
                train,
                cat,
                protos,
                query_image=query,
                method=method,
                n_neighbors=cfg.explain.n_neighbors,
                rho=cfg.explain.rho,
                query_id=int(eval_test.ids[int(row)]),
                true_class=true_class,
                baseline_all_classes=cfg.evaluation.baseline_all_classes,
            )
            if exp.fallback:
                fallbacks[method] += 1
            proto = protos[exp.predicted_class]
            dq, dp = [], []
            for tid, _score in exp.neighbors:
                neighbor = train.images[train_row_by_id[tid]]
                dq.append(euclidean(query, neighbor))
                dp.append(euclidean(neighbor, proto))
            distances[method]["query"].extend(dq)
            distances[method]["prototype"].extend(dp)
            distances[method]["query_per_query"].append(float(np.mean(dq)))
            distances[method]["prototype_per_query"].append(float(np.mean(dp)))

    methods_stats = {
        method: {
            "query_distance": summarize(d["query"]),
            "query_distance_per_query": summarize(d["query_per_query"]),
            "prototype_distance": summarize(d["prototype"]),
            "prototype_distance_per_query": summarize(d["prototype_per_query"]),
        }
        for method, d in distances.items()
    }
    tests = {}
    for family, key in (("query_distance", "query"), ("prototype_distance", "prototype")):
        tests[family] = {
            "per_neighbor": {
                "pooled": two_sample_t(
                    distances[METHOD_FGNS][key], distances[METHOD_BASELINE][key], pooled=True
                ).to_payload(),
                "welch": two_sample_t(
                    distances[METHOD_FGNS][key], distances[METHOD_BASELINE][key], pooled=False
                ).to_payload(),
            },
            "per_query_mean": {
                "pooled": two_sample_t(
                    distances[METHOD_FGNS][key + "_per_query"],
                    distances[METHOD_BASELINE][key + "_per_query"],
                    pooled=True,
                ).to_payload(),
                "welch": two_sample_t(
                    distances[METHOD_FGNS][key + "_per_query"],
                    distances[METHOD_BASELINE][key + "_per_query"],
                    pooled=False,
                ).to_payload(),
            },
        }

    return {
        "eval_classes": list(cfg.data.eval_classes),
        "queries": {
            "n_correct": int(sel.correct_rows.size),
            "n_incorrect": int(sel.incorrect_rows.size),
            "requested_correct": sel.requested_correct,
            "requested_incorrect": sel.requested_incorrect,
            "test_subset_size": int(len(eval_test)),
            "test_subset_accuracy": float(np.mean(correct_mask)),
            "misclassified_available": int(np.sum(~correct_mask)),
        },
        "fallbacks": fallbacks,
        "methods": methods_stats,
        "tests": tests,
        "reference": PUBLISHED_REFERENCE,
        "distances": distances,
    }


def render_text_report(report: dict, config_hash: str) -> str:
    """Fixed-width human-readable twin of the JSON report."""
    out = io.StringIO()
    q = report["queries"]
    out.write(f"Neighbor-quality evaluation  (config {config_hash[:12]})\n")
    out.write(
        "Classes {}; queries: {} correct + {} incorrect (requested {}/{}).\n".format(
            ",".join(str(c) for c in report["eval_classes"]),
            q["n_correct"],
            q["n_incorrect"],
            q["requested_correct"],
            q["requested_incorrect"],
        )
    )
    out.write(
        "Test subset: {} instances, accuracy {:.4f}, {} misclassified.\n".format(
            q["test_subset_size"], q["test_subset_accuracy"], q["misclassified_available"]
        )
    )
    fb = report["fallbacks"]
    out.write(f"Catalog fallbacks: fgns {fb[METHOD_FGNS]}, knn_baseline {fb[METHOD_BASELINE]}.\n")
    out.write(
        "Quartiles are Tukey hinges (median joins both halves); sd/variance use ddof=1.\n"
    )
    header = f"{'method':<14}{'n':>6}{'mean':>10}{'median':>10}{'q1':>10}{'q3':>10}{'iqr':>10}{'sd':>10}{'variance':>12}"
    for family, title in (
        ("query_distance", "distance query -> neighbor (pixel space, per neighbor)"),
        ("prototype_distance", "distance neighbor -> class prototype (per neighbor)"),
    ):
        out.write(f"\n{title}\n{header}\n")
        for method in (METHOD_FGNS, METHOD_BASELINE):
            s = report["methods"][method][family]
            out.write(
                f"{method:<14}{s['n']:>6}{s['mean']:>10.4f}{s['median']:>10.4f}"
                f"{s['q1']:>10.4f}{s['q3']:>10.4f}{s['iqr']:>10.4f}{s['sd']:>10.4f}"
                f"{s['variance']:>12.4f}\n"
            )
        for variant in ("per_neighbor", "per_query_mean"):
            for kind in ("pooled", "welch"):
                t = report["tests"][family][variant][kind]
                out.write(
                    f"  t-test {variant}/{kind}: t={t['t']:.4f} df={t['df']:.2f} p={t['p']:.3e}\n"
                )
    ref = report["reference"]
    out.write("\nreference results (previously reported for this protocol):\n")
    out.write(
        "  query distance mean:      fgns {:.2f}  knn_baseline {:.2f}\n".format(
            ref["query_distance_mean"][METHOD_FGNS], ref["query_distance_mean"][METHOD_BASELINE]
        )
    )
    out.write(
        "  prototype distance mean:  fgns {:.2f}  knn_baseline {:.2f}\n".format(
            ref["prototype_distance_mean"][METHOD_FGNS],
            ref["prototype_distance_mean"][METHOD_BASELINE],
        )
    )
    out.write(
        "  prototype distance sd:    fgns {:.2f}  knn_baseline {:.2f}\n".format(
            ref["prototype_distance_sd"][METHOD_FGNS],
            ref["prototype_distance_sd"][METHOD_BASELINE],
        )
    )
    return out.getvalue()


def histogram_csv(report: dict, bins: int) -> str:
    """CSV of per-method histogram counts over shared bins per family."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["family", "bin_left", "bin_right", METHOD_FGNS, METHOD_BASELINE])
    for family, key in (("query_distance", "query"), ("prototype_distance", "prototype")):
        fg = np.asarray(report["distances"][METHOD_FGNS][key])
        kb = np.asarray(report["distances"][METHOD_BASELINE][key])
        lo = float(min(fg.min(), kb.min()))
        hi = float(max(fg.max(), kb.max()))
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        counts_f, _ = np.histogram(fg, bins=edges)
        counts_k, _ = np.histogram(kb, bins=edges)
        for i in range(bins):
            writer.writerow(
                [
                    family,
                    f"{edges[i]:.6f}",
                    f"{edges[i + 1]:.6f}",
                    int(counts_f[i]),
                    int(counts_k[i]),
                ]
            )
    return out.getvalue()
