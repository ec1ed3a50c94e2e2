"""Monte Carlo campaign execution: deterministic, parallel, resumable."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .dsl import ResolvedConfig, serialize
from .seeding import derive_seed, fnv1a_64
from .trial import TrialOptions, TrialRecord, run_trial

DEFAULT_TRIALS = 240

RESULT_COLUMNS = (
    "config_id", "trial_index", "seed", "outcome", "time_of_event", "e_p", "e_theta",
    "latency_best_ms", "latency_mean_ms", "latency_p99_ms", "latency_violation_rate",
    "ticks", "n_fault_injections",
)


@dataclass(frozen=True)
class CampaignPlan:
    configs: tuple[ResolvedConfig, ...]
    out_dir: Path
    trials_per_config: int = DEFAULT_TRIALS
    master_seed: int = 0
    options: TrialOptions = field(default_factory=TrialOptions)

    def __post_init__(self) -> None:
        if self.trials_per_config < 1:
            raise ValueError("trials_per_config must be >= 1")
        if not self.configs:
            raise ValueError("plan needs at least one config")

    def fingerprint(self) -> str:
        h = fnv1a_64(repr((
            sorted(config_hash(c) for c in self.configs),
            self.trials_per_config,
            self.master_seed,
            self.options.latency_coupling,
        )).encode())
        return f"{h:016x}"


def config_hash(config: ResolvedConfig) -> int:
    """64-bit FNV-1a over the canonical serialization of the resolved scenario."""
    return fnv1a_64(serialize(config.scenario).encode("utf-8"))


def worker_count() -> int:
    env = os.environ.get("ADDT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _run_batch(config: ResolvedConfig, indices: list[int], master_seed: int,
               options: TrialOptions, trace_dir: str | None) -> list[dict]:
    chash = config_hash(config)
    out = []
    for trial_index in indices:
        seed = derive_seed(master_seed, chash, trial_index)
        record = run_trial(config, seed, trial_index, options)
        if trace_dir is not None and record.trace_rows is not None:
            path = Path(trace_dir) / f"{_safe_name(config.config_id)}_{trial_index:05d}.csv"
            path.write_text("\n".join(record.trace_rows) + "\n", encoding="utf-8")
        out.append(_record_payload(record))
    return out


def _safe_name(config_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in config_id)


def _record_payload(record: TrialRecord) -> dict:
    payload = record.to_row()
    if record.fault_log:
        payload["fault_log"] = [
            {"tick": e.tick, "node": e.node, "state_index": e.state_index,
             "bit": e.bit, "value_before": _json_float(e.value_before),
             "value_after": _json_float(e.value_after)}
            for e in record.fault_log
        ]
    return payload


def _json_float(value: float) -> float | str:
    # JSON has no NaN/Inf literals; encode them as strings for the audit log.
    if value != value:
        return "nan"
    if value in (float("inf"), float("-inf")):
        return "inf" if value > 0 else "-inf"
    return value


def run_campaign(plan: CampaignPlan, workers: int | None = None,
                 progress: bool = False) -> list[dict]:
    """Execute all configs x trials; returns rows sorted by (config_id, trial_index).

    Completed trials are appended to ``records.jsonl`` as they finish, and a
    manifest tracks coverage so an interrupted campaign resumes exactly where
    it stopped. The sorted result set is independent of worker count and of
    which run produced each row.
    """
    out_dir = plan.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_dir = None
    if plan.options.trace:
        trace_dir = str(out_dir / "traces")
        Path(trace_dir).mkdir(exist_ok=True)

    records_path = out_dir / "records.jsonl"
    manifest_path = out_dir / "manifest.json"
    fingerprint = plan.fingerprint()

    existing: dict[tuple[str, int], dict] = {}
    if manifest_path.exists() and records_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            manifest = {}
        if manifest.get("fingerprint") == fingerprint:
            with records_path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    row = json.loads(line)
                    existing[(row["config_id"], row["trial_index"])] = row
        else:
            records_path.unlink()
    elif records_path.exists():
        records_path.unlink()

    jobs: list[tuple[ResolvedConfig, list[int]]] = []
    batch = 16
    for config in plan.configs:
        missing = [i for i in range(plan.trials_per_config)
                   if (config.config_id, i) not in existing]
        for start in range(0, len(missing), batch):
            jobs.append((config, missing[start:start + batch]))

    n_workers = workers if workers is not None else worker_count()
    rows = dict(existing)
    total_jobs = len(jobs)

    def _absorb(payloads: list[dict], fh) -> None:
        for payload in payloads:
            rows[(payload["config_id"], payload["trial_index"])] = payload
            fh.write(json.dumps(payload, sort_keys=True) + "\n")
        fh.flush()

    _write_manifest(manifest_path, plan, fingerprint, rows, complete=False)
    try:
        with records_path.open("a", encoding="utf-8") as fh:
            if n_workers <= 1 or total_jobs <= 1:
                for done, (config, indices) in enumerate(jobs, 1):
                    _absorb(_run_batch(config, indices, plan.master_seed,
                                       plan.options, trace_dir), fh)
                    if progress:
                        print(f"  [{done}/{total_jobs}] batches complete", flush=True)
            else:
                with ProcessPoolExecutor(max_workers=n_workers) as pool:
                    futures = [
                        pool.submit(_run_batch, config, indices, plan.master_seed,
                                    plan.options, trace_dir)
                        for config, indices in jobs
                    ]
                    for done, future in enumerate(futures, 1):
                        _absorb(future.result(), fh)
                        if progress:
                            print(f"  [{done}/{total_jobs}] batches complete", flush=True)
    finally:
        complete = len(rows) == len(plan.configs) * plan.trials_per_config
        _write_manifest(manifest_path, plan, fingerprint, rows, complete=complete)

    ordered = [rows[key] for key in sorted(rows)]
    return ordered


def _write_manifest(path: Path, plan: CampaignPlan, fingerprint: str,
                    rows: dict, complete: bool) -> None:
    manifest = {
        "fingerprint": fingerprint,
        "master_seed": plan.master_seed,
        "trials_per_config": plan.trials_per_config,
        "configs": [c.config_id for c in plan.configs],
        "completed": sorted([cid, idx] for cid, idx in rows),
        "complete": complete,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
