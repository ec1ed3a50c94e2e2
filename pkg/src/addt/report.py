"""Campaign reports: per-trial CSV, aggregate JSON, markdown tables, figures."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from pathlib import Path

from .campaign import RESULT_COLUMNS
from .metrics import wilson_interval

KNOWN_FORMATS = ("csv", "json", "markdown")


def _split_config_id(config_id: str) -> tuple[str, str]:
    """A config id is 'scenario' or 'scenario[axis=value,...]'."""
    if config_id.endswith("]") and "[" in config_id:
        name, _, rest = config_id.partition("[")
        return name, rest[:-1]
    return config_id, ""


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow(["" if row.get(col) is None else _cell(row.get(col))
                         for col in RESULT_COLUMNS])
    return buf.getvalue()


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def aggregate_rows(rows: list[dict]) -> dict:
    """Per-config success aggregate plus outcome counts and latency summary."""
    by_config: dict[str, list[dict]] = defaultdict(list)
    for row in rows:
        by_config[row["config_id"]].append(row)
    out = {}
    for config_id in sorted(by_config):
        config_rows = by_config[config_id]
        n = len(config_rows)
        k = sum(1 for r in config_rows if r["outcome"] == "success")
        lo, hi = wilson_interval(k, n)
        outcomes: dict[str, int] = defaultdict(int)
        for r in config_rows:
            outcomes[r["outcome"]] += 1
        means = [r["latency_mean_ms"] for r in config_rows]
        p99s = [r["latency_p99_ms"] for r in config_rows]
        out[config_id] = {
            "trials": n,
            "successes": k,
            "success_rate": k / n,
            "ci_low": lo,
            "ci_high": hi,
            "outcomes": dict(sorted(outcomes.items())),
            "latency_mean_ms": sum(means) / n,
            "latency_p99_ms_mean": sum(p99s) / n,
        }
    return out


def markdown_table(rows: list[dict]) -> str:
    """Scenarios as rows, swept fault levels as columns, success percents."""
    agg = aggregate_rows(rows)
    cells: dict[str, dict[str, float]] = defaultdict(dict)
    levels: list[str] = []
    for config_id, summary in agg.items():
        scenario, level = _split_config_id(config_id)
        level = level or "baseline"
        cells[scenario][level] = summary["success_rate"]
        if level not in levels:
            levels.append(level)

    lines = ["# Mission success rates", ""]
    header = "| Scenario | " + " | ".join(levels) + " |"
    rule = "|" + "---|" * (len(levels) + 1)
    lines += [header, rule]
    for scenario in sorted(cells):
        row = [scenario]
        for level in levels:
            rate = cells[scenario].get(level)
            row.append("" if rate is None else f"{100.0 * rate:.2f}%")
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")
    n_trials = {summary["trials"] for summary in agg.values()}
    lines.append(f"Trials per cell: {', '.join(str(n) for n in sorted(n_trials))}.")
    lines.append("")
    return "\n".join(lines)


def render_figures(rows: list[dict], out_dir: Path) -> list[Path]:
    """Success-rate and latency figures next to the delimited output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    agg = aggregate_rows(rows)
    paths = []

    scenarios: dict[str, list[tuple[str, float, float, float]]] = defaultdict(list)
    for config_id, summary in agg.items():
        scenario, level = _split_config_id(config_id)
        scenarios[scenario].append((level or "baseline", summary["success_rate"],
                                    summary["ci_low"], summary["ci_high"]))

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    n_scen = len(scenarios)
    width = 0.8 / max(1, n_scen)
    all_levels: list[str] = []
    for levels in scenarios.values():
        for level, *_ in levels:
            if level not in all_levels:
                all_levels.append(level)
    for i, (scenario, entries) in enumerate(sorted(scenarios.items())):
        by_level = {lvl: (rate, lo, hi) for lvl, rate, lo, hi in entries}
        xs, ys, errs = [], [], []
        for j, level in enumerate(all_levels):
            if level in by_level:
                rate, lo, hi = by_level[level]
                xs.append(j + (i - (n_scen - 1) / 2) * width)
                ys.append(100.0 * rate)
                errs.append([100.0 * (rate - lo), 100.0 * (hi - rate)])
        if xs:
            ax.bar(xs, ys, width=width, label=scenario,
                   yerr=list(zip(*errs)) if errs else None, capsize=2)
    ax.set_xticks(range(len(all_levels)))
    ax.set_xticklabels(all_levels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("mission success rate [%]")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = out_dir / "success_rates.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    means = [row["latency_mean_ms"] for row in rows if row.get("latency_mean_ms")]
    if means:
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        ax.hist(means, bins=40, color="#4878b0", edgecolor="white")
        ax.axvline(100.0, color="crimson", linestyle="--", linewidth=1.2,
                   label="100 ms deadline")
        ax.set_xlabel("per-trial mean end-to-end latency [ms]")
        ax.set_ylabel("trials")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / "latency_hist.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def emit_report(rows: list[dict], out_dir: Path, formats: tuple[str, ...] = KNOWN_FORMATS,
                figures: bool = True) -> dict[str, Path]:
    """Write the requested report artifacts; returns the paths by kind."""
    if not rows:
        raise ValueError("emit_report requires at least one record")
    for fmt in formats:
        if fmt not in KNOWN_FORMATS:
            raise ValueError(f"unknown report format {fmt!r}")
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    if "csv" in formats:
        path = out_dir / "results.csv"
        path.write_text(rows_to_csv(rows), encoding="utf-8")
        written["csv"] = path
    if "json" in formats:
        path = out_dir / "aggregate.json"
        path.write_text(json.dumps(aggregate_rows(rows), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        written["json"] = path
    if "markdown" in formats:
        path = out_dir / "report.md"
        path.write_text(markdown_table(rows), encoding="utf-8")
        written["markdown"] = path
    if figures:
        for path in render_figures(rows, out_dir):
            written[path.stem] = path
    return written
