"""Rendering: aligned text grids, CSV tables, and matplotlib figures.

Every figure is written straight to a file with fixed metadata so repeated
runs of the same pipeline produce byte-identical output directories.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analytics import PersonaBidderTable, ZeroBidSummary
from .inference import EvaluationMetrics, InferenceReport

_PNG_METADATA = {"Software": "kashf"}

# Cell markers: first slot compares the cell among categories (its bidder
# column), second among bidders (its persona row).
_CAT_MARK = {1: "^", -1: "v", 0: " "}
_BIDDER_MARK = {1: "+", -1: "-", 0: " "}


def _fmt(value: float | None, decimals: int) -> str:
    return "-" if value is None else f"{value:.{decimals}f}"


def format_table_text(
    table: PersonaBidderTable, title: str, decimals: int = 2
) -> str:
    """Aligned grid with ^/v markers (among categories) and +/- markers
    (among bidders), plus weighted Avg./Std. margins."""
    header = [""] + list(table.cols) + ["Avg.", "Std."]
    lines: list[list[str]] = [header]
    scale = table.unit_scale
    for r in table.rows:
        row = [r]
        for c in table.cols:
            v = table.value(r, c)
            marks = _CAT_MARK[table.among_categories.get((r, c), 0)] + _BIDDER_MARK[
                table.among_bidders.get((r, c), 0)
            ]
            row.append(_fmt(v, decimals) + marks.rstrip())
        avg = table.row_avg.get(r)
        std = table.row_std.get(r)
        row.append(_fmt(None if avg is None else avg / scale, decimals))
        row.append(_fmt(None if std is None else std / scale, decimals))
        lines.append(row)
    avg_row = ["Avg."] + [
        _fmt(
            None if table.col_avg.get(c) is None else table.col_avg[c] / scale,
            decimals,
        )
        for c in table.cols
    ]
    avg_row.append(
        _fmt(
            None if table.overall_row_avg is None else table.overall_row_avg / scale,
            decimals,
        )
    )
    avg_row.append(
        _fmt(
            None if table.overall_col_avg is None else table.overall_col_avg / scale,
            decimals,
        )
    )
    std_row = ["Std."] + [
        _fmt(
            None if table.col_std.get(c) is None else table.col_std[c] / scale,
            decimals,
        )
        for c in table.cols
    ]
    std_row.append(
        _fmt(
            None if table.overall_row_std is None else table.overall_row_std / scale,
            decimals,
        )
    )
    std_row.append(
        _fmt(
            None if table.overall_col_std is None else table.overall_col_std / scale,
            decimals,
        )
    )
    lines.append(avg_row)
    lines.append(std_row)

    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    rendered = [title, ""]
    for i, row in enumerate(lines):
        rendered.append(
            "  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip()
        )
        if i == 0:
            rendered.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
    rendered.append("")
    rendered.append("markers: ^/v beyond +/-1 std among categories, "
                    "+/- beyond +/-1 std among bidders")
    return "\n".join(rendered) + "\n"


def write_table_csv(table: PersonaBidderTable, path: str | Path) -> None:
    scale = table.unit_scale
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["persona"]
        for c in table.cols:
            header += [c, f"{c}_count", f"{c}_vs_categories", f"{c}_vs_bidders"]
        header += ["avg", "std"]
        writer.writerow(header)
        for r in table.rows:
            row: list[object] = [r]
            for c in table.cols:
                cell = table.cell(r, c)
                value = table.value(r, c)
                row += [
                    "" if value is None else f"{value:.6f}",
                    cell.count,
                    table.among_categories.get((r, c), 0),
                    table.among_bidders.get((r, c), 0),
                ]
            avg = table.row_avg.get(r)
            std = table.row_std.get(r)
            row += [
                "" if avg is None else f"{avg / scale:.6f}",
                "" if std is None else f"{std / scale:.6f}",
            ]
            writer.writerow(row)
        tail: list[object] = ["Avg."]
        for c in table.cols:
            v = table.col_avg.get(c)
            tail += ["" if v is None else f"{v / scale:.6f}", "", "", ""]
        tail += [
            ""
            if table.overall_row_avg is None
            else f"{table.overall_row_avg / scale:.6f}",
            "",
        ]
        writer.writerow(tail)


def format_zero_bids_text(summary: ZeroBidSummary) -> str:
    lines = ["Zero-bid share (%) by intent arm", ""]
    header = ["bidder", "no-intent", "intent", "total", "chi^2", "significant"]
    rows = [header]
    for row in list(summary.per_bidder) + [summary.overall]:
        rows.append(
            [
                row.bidder,
                _fmt(row.pct_no_intent, 2),
                _fmt(row.pct_intent, 2),
                _fmt(row.pct_total, 2),
                _fmt(row.chi_square, 3) if row.chi_square is not None else "n/a",
                "yes" if row.significant else "no",
            ]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    for i, r in enumerate(rows):
        lines.append("  ".join(c.ljust(widths[j]) for j, c in enumerate(r)).rstrip())
        if i == 0:
            lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
    return "\n".join(lines) + "\n"


def write_zero_bids_csv(summary: ZeroBidSummary, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "bidder", "pct_no_intent", "pct_intent", "pct_total",
                "n_no_intent", "zeros_no_intent", "n_intent", "zeros_intent",
                "chi_square", "significant",
            ]
        )
        for row in list(summary.per_bidder) + [summary.overall]:
            writer.writerow(
                [
                    row.bidder,
                    _fmt(row.pct_no_intent, 4),
                    _fmt(row.pct_intent, 4),
                    _fmt(row.pct_total, 4),
                    row.n_no_intent,
                    row.zeros_no_intent,
                    row.n_intent,
                    row.zeros_intent,
                    "" if row.chi_square is None else f"{row.chi_square:.6f}",
                    int(row.significant),
                ]
            )


def write_accuracy_csv(report: InferenceReport, path: str | Path) -> None:
    """Per-bidder cross-validation accuracy and per-class recall."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["bidder", "cv_accuracy", "recall_low", "recall_medium", "recall_high",
             "n_rows", "note"]
        )
        accs = []
        for bidder in report.bidders:
            if bidder in report.results:
                r = report.results[bidder]
                rec = list(r.per_class_recall) + [None] * (3 - len(r.per_class_recall))
                writer.writerow(
                    [
                        bidder,
                        "" if r.cv_accuracy is None else f"{r.cv_accuracy:.4f}",
                        *["" if v is None else f"{v:.4f}" for v in rec[:3]],
                        r.n_rows,
                        "",
                    ]
                )
                if r.cv_accuracy is not None:
                    accs.append(r.cv_accuracy)
            else:
                writer.writerow(
                    [bidder, "", "", "", "", "", report.insensitive.get(bidder, "")]
                )
        if accs:
            writer.writerow(
                ["Avg.", f"{sum(accs) / len(accs):.4f}", "", "", "", "", ""]
            )


def write_influence_csv(
    report: InferenceReport,
    path: str | Path,
    metrics: EvaluationMetrics | None = None,
) -> None:
    """Ranked tracker influence per bidder; with metrics, each edge carries
    its ground-truth and cookie-sync validation flags."""
    flags = {}
    if metrics is not None:
        flags = {(a.bidder, a.tracker): a for a in metrics.assessments}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["bidder", "rank", "tracker", "importance"]
        if metrics is not None:
            header += ["in_ground_truth", "channel", "detected_by_cookie_sync"]
        writer.writerow(header)
        for bidder in report.bidders:
            result = report.results.get(bidder)
            if result is None:
                continue
            for rank, (tracker, importance) in enumerate(result.ranking, start=1):
                row: list[object] = [bidder, rank, tracker, f"{importance:.6f}"]
                if metrics is not None:
                    a = flags.get((bidder, tracker))
                    row += [
                        int(a.in_ground_truth) if a else 0,
                        (a.channel or "") if a else "",
                        int(a.detected_by_cookie_sync) if a else 0,
                    ]
                writer.writerow(row)


def write_importance_csv(
    report: InferenceReport, trackers: tuple[str, ...], path: str | Path
) -> None:
    """Full per-bidder importance vectors, one column per tracker org."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bidder", *trackers])
        for bidder in report.bidders:
            result = report.results.get(bidder)
            if result is None or result.importance is None:
                continue
            writer.writerow(
                [bidder]
                + [f"{result.importance.get(t, 0.0):.6f}" for t in trackers]
            )


def write_influence_table_csv(
    report: InferenceReport, metrics: EvaluationMetrics, path: str | Path
) -> None:
    """Wide influence table: one row per bidder, one column per rank, with
    ground-truth (GT) and cookie-sync (CS) validation flags appended."""
    flags = {(a.bidder, a.tracker): a for a in metrics.assessments}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["bidder"] + [f"tracker_{i}" for i in range(1, report.top_k + 1)]
        )
        for bidder in report.bidders:
            result = report.results.get(bidder)
            if result is None:
                writer.writerow([bidder] + [""] * report.top_k)
                continue
            cells = []
            for tracker, _ in result.ranking:
                a = flags.get((bidder, tracker))
                marks = []
                if a and a.in_ground_truth:
                    marks.append("GT")
                if a and a.detected_by_cookie_sync:
                    marks.append("CS")
                cells.append(tracker + (f" [{','.join(marks)}]" if marks else ""))
            writer.writerow([bidder] + cells + [""] * (report.top_k - len(cells)))


def write_sync_pairs_csv(evidence: dict, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["org_a", "org_b", "evidence_count"])
        for (a, b), count in sorted(evidence.items()):
            writer.writerow([a, b, count])


# --- figures -----------------------------------------------------------------

def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def fig_table_heatmap(
    table: PersonaBidderTable, path: str | Path, title: str, unit: str
) -> None:
    data = np.array(
        [
            [
                np.nan if (v := table.value(r, c)) is None else v
                for c in table.cols
            ]
            for r in table.rows
        ]
    )
    fig, ax = plt.subplots(figsize=(7, 0.45 * len(table.rows) + 1.6))
    im = ax.imshow(data, aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(table.cols)), table.cols, rotation=30, ha="right")
    ax.set_yticks(range(len(table.rows)), table.rows)
    for i in range(len(table.rows)):
        for j in range(len(table.cols)):
            if not np.isnan(data[i, j]):
                ax.text(j, i, f"{data[i, j]:.2f}", ha="center", va="center",
                        color="white", fontsize=7)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label=unit)
    fig.tight_layout()
    _save(fig, path)


def fig_zero_bids(summary: ZeroBidSummary, path: str | Path) -> None:
    bidders = [r.bidder for r in summary.per_bidder]
    no_intent = [r.pct_no_intent or 0.0 for r in summary.per_bidder]
    intent = [r.pct_intent or 0.0 for r in summary.per_bidder]
    x = np.arange(len(bidders))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - 0.2, no_intent, width=0.4, label="no intent")
    ax.bar(x + 0.2, intent, width=0.4, label="intent")
    total = summary.overall.pct_total
    if total is not None:
        ax.axhline(total, color="grey", linestyle="--", linewidth=1,
                   label=f"overall {total:.1f}%")
    ax.set_xticks(x, bidders, rotation=30, ha="right")
    ax.set_ylabel("zero bids (%)")
    ax.set_title("Zero-bid share by bidder and intent arm")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def fig_importance(report: InferenceReport, path: str | Path) -> None:
    shown = [b for b in report.bidders if b in report.results]
    if not shown:
        return
    fig, axes = plt.subplots(
        len(shown), 1, figsize=(7, 2.0 * len(shown)), squeeze=False
    )
    for ax, bidder in zip(axes[:, 0], shown):
        result = report.results[bidder]
        names = [t for t, _ in result.ranking][::-1]
        scores = [imp for _, imp in result.ranking][::-1]
        ax.barh(names, scores, color="tab:blue")
        ax.set_title(f"{bidder}: top-{report.top_k} tracker influence")
        ax.set_xlabel("importance")
    fig.tight_layout()
    _save(fig, path)


def fig_accuracy(report: InferenceReport, path: str | Path) -> None:
    bidders = [b for b in report.bidders if b in report.results]
    accs = [report.results[b].cv_accuracy for b in bidders]
    pairs = [(b, a) for b, a in zip(bidders, accs) if a is not None]
    if not pairs:
        return
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar([b for b, _ in pairs], [a for _, a in pairs], color="tab:green")
    avg = sum(a for _, a in pairs) / len(pairs)
    ax.axhline(avg, color="grey", linestyle="--", linewidth=1, label=f"avg {avg:.2f}")
    ax.set_ylim(0, 1)
    ax.set_ylabel("10-fold CV accuracy")
    ax.set_title("Bid-class prediction accuracy per bidder")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def fig_evaluation(metrics: EvaluationMetrics, path: str | Path) -> None:
    bidders = list(metrics.per_bidder_precision)
    if not bidders:
        return
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar(bidders, [metrics.per_bidder_precision[b] for b in bidders],
            color="tab:purple")
    ax1.set_ylim(0, 1)
    ax1.set_ylabel("precision@k")
    ax1.set_title("Ground-truth precision per bidder")
    ax1.tick_params(axis="x", rotation=30)
    labels = ["client-side\nrecovered", "server-side\nrecovered",
              "server-side\nunseen by sync"]
    values = [
        metrics.recovered_client_side,
        metrics.recovered_server_side,
        metrics.server_side_recovered,
    ]
    ax2.bar(labels, values, color=["tab:blue", "tab:orange", "tab:red"])
    ax2.set_ylabel("edges")
    ax2.set_title("Recovered sharing edges by channel")
    fig.tight_layout()
    _save(fig, path)
