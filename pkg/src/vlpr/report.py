"""Evaluation report rendering: text, key-value, CSV, and figures."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .pipeline import EvalOutcome


def outcome_key_values(outcome: EvalOutcome) -> str:
    lines = [
        f"evaluated={outcome.retrieval.evaluated}",
        f"excluded={outcome.retrieval.excluded}",
        f"skipped_empty={len(outcome.stats.skipped_empty)}",
        f"skipped_missing_pose={len(outcome.stats.skipped_missing_pose)}",
    ]
    for n in sorted(outcome.retrieval.recalls):
        lines.append(f"retrieval_recall@{n}={outcome.retrieval.recalls[n]:.6f}")
    for n in sorted(outcome.reranked.recalls):
        lines.append(f"reranked_recall@{n}={outcome.reranked.recalls[n]:.6f}")
    return "\n".join(lines) + "\n"


def outcome_table(outcome: EvalOutcome) -> str:
    header = f"{'N':>4}  {'retrieval':>10}  {'reranked':>10}"
    rows = [
        f"{n:>4}  {outcome.retrieval.recalls[n]:>10.4f}  {outcome.reranked.recalls[n]:>10.4f}"
        for n in sorted(outcome.retrieval.recalls)
    ]
    footer = (
        f"queries evaluated: {outcome.retrieval.evaluated}, "
        f"excluded (no GT neighbor): {outcome.retrieval.excluded}"
    )
    return "\n".join([header, "-" * len(header), *rows, footer])


def per_query_csv(outcome: EvalOutcome) -> str:
    retrieval_ranks = dict(outcome.retrieval.per_query)
    reranked_ranks = dict(outcome.reranked.per_query)
    lines = ["query_id,retrieval_first_rank,reranked_first_rank"]
    for query_id in sorted(retrieval_ranks):
        a = retrieval_ranks[query_id]
        b = reranked_ranks.get(query_id)
        lines.append(
            f"{query_id},{'' if a is None else a},{'' if b is None else b}"
        )
    return "\n".join(lines) + "\n"


def _recall_curve_figure(outcome: EvalOutcome, path: Path) -> None:
    ns = sorted(outcome.retrieval.recalls)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ns, [outcome.retrieval.recalls[n] for n in ns], "o-", label="retrieval")
    ax.plot(ns, [outcome.reranked.recalls[n] for n in ns], "s--", label="graph re-ranked")
    ax.set_xlabel("N")
    ax.set_ylabel("recall@N")
    ax.set_xticks(ns)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _rank_histogram_figure(outcome: EvalOutcome, path: Path) -> None:
    max_n = max(outcome.retrieval.recalls)
    found = [r for _, r in outcome.retrieval.per_query if r is not None and r <= max_n]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if found:
        bins = range(1, max_n + 2)
        ax.hist(found, bins=bins, align="left", rwidth=0.85)
    ax.set_xlabel("first correct rank (retrieval)")
    ax.set_ylabel("queries")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(outcome: EvalOutcome, out_dir: str | Path) -> list[Path]:
    """Write report.txt, report.kv, per_query.csv, and the figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    text_path = out / "report.txt"
    text_path.write_text(outcome_table(outcome) + "\n", encoding="utf-8")
    written.append(text_path)

    kv_path = out / "report.kv"
    kv_path.write_text(outcome_key_values(outcome), encoding="utf-8")
    written.append(kv_path)

    csv_path = out / "per_query.csv"
    csv_path.write_text(per_query_csv(outcome), encoding="utf-8")
    written.append(csv_path)

    curve_path = out / "recall_curve.png"
    _recall_curve_figure(outcome, curve_path)
    written.append(curve_path)

    hist_path = out / "rank_histogram.png"
    _rank_histogram_figure(outcome, hist_path)
    written.append(hist_path)
    return written
