"""Dataset building: weighted episode sampling over a worker pool.

Episode types are drawn with weights that default to inverse plan length
(short types appear more often). Workers share nothing but the manifest
list behind a lock; a crashing worker marks its episode aborted and the
run keeps going. The whole collection is a pure function of the master
seed.
"""

from __future__ import annotations

import csv
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..substrate import Rng
from .episodes import EPISODE_TYPES, PLAN_LENGTH, run_episode
from .io import load_episode, save_episode, write_manifest
from .world import ACTION_KEYS, GROUND, AIR, TORCH, HOTBAR_KEYS, N_TILES


def worker_cap(requested: int) -> int:
    cap = os.environ.get("SOLARIS_KIT_THREADS")
    if cap:
        return max(1, min(requested, int(cap)))
    return max(1, requested)


def default_type_weights() -> dict:
    return {t: 1.0 / PLAN_LENGTH[t] for t in EPISODE_TYPES}


def collect(
    n_episodes: int,
    out_dir,
    type_weights: dict | None = None,
    workers: int = 4,
    master_seed: int = 0,
) -> list:
    """Run n episodes and write logs plus manifest.ndjson under out_dir."""
    weights = dict(type_weights) if type_weights else default_type_weights()
    for t in weights:
        if t not in EPISODE_TYPES:
            raise ValueError(f"unknown episode type {t!r}")
    total = sum(weights.values())
    if total <= 0:
        raise ValueError("type weights must sum to a positive value")
    types = sorted(weights)
    probs = np.array([weights[t] / total for t in types], dtype=np.float64)

    pick_rng = Rng(master_seed, "episode-types")
    seed_rng = Rng(master_seed, "episode-seeds")
    jobs = []
    for i in range(n_episodes):
        ti = int(pick_rng.at(i).choice(len(types), p=probs))
        seed = int(seed_rng.at(i).integers(0, 2**31 - 1))
        jobs.append((types[ti], seed))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries: list = [None] * n_episodes
    lock = threading.Lock()

    def run_one(i: int, ep_type: str, seed: int) -> None:
        try:
            log = run_episode(ep_type, seed)
            path = save_episode(log, out)
            entry = {
                "episode_id": log.episode_id,
                "type": log.episode_type,
                "world_kind": log.world_kind,
                "seed": log.seed,
                "length": log.length,
                "aborted": log.aborted,
                "path": path,
            }
        except Exception as exc:  # crashed worker: mark and move on
            entry = {
                "episode_id": f"{ep_type}-{seed:08d}",
                "type": ep_type,
                "world_kind": "",
                "seed": seed,
                "length": 0,
                "aborted": True,
                "path": "",
                "error": str(exc),
            }
        with lock:
            entries[i] = entry

    with ThreadPoolExecutor(max_workers=worker_cap(workers)) as pool:
        futures = [pool.submit(run_one, i, t, s) for i, (t, s) in enumerate(jobs)]
        for f in futures:
            f.result()

    write_manifest(entries, out / "manifest.ndjson")
    return entries


# --- filtering ---------------------------------------------------------------


def _spawned_in_wall(entry: dict, log) -> str | None:
    """Reject logs whose first frame shows an agent inside a solid tile."""
    for p in range(log.frames.shape[0]):
        own = log.frames[p, 0, -1, log.frames.shape[3] // 2, :N_TILES]
        tile = int(np.argmax(own)) if own.sum() > 0 else AIR
        if tile not in (AIR, GROUND, TORCH):
            return f"agent {p} spawned inside tile {tile}"
    return None


NAMED_PREDICATES = {"agent_spawned_in_wall": _spawned_in_wall}


def filter_episodes(manifest: list, predicate: str = "agent_spawned_in_wall"):
    """Split a manifest into (kept, excluded-with-reason) by a named check.

    Aborted or fileless entries are excluded up front. Running the filter
    on its own output changes nothing.
    """
    if predicate not in NAMED_PREDICATES:
        raise ValueError(f"unknown predicate {predicate!r}")
    check = NAMED_PREDICATES[predicate]
    kept, excluded = [], []
    for entry in manifest:
        if entry.get("aborted") or not entry.get("path"):
            excluded.append({"episode_id": entry["episode_id"], "reason": "aborted"})
            continue
        log = load_episode(entry["path"])
        reason = check(entry, log)
        if reason:
            excluded.append({"episode_id": entry["episode_id"], "reason": reason})
        else:
            kept.append(entry)
    return kept, excluded


# --- statistics --------------------------------------------------------------

CAMERA_BINS = np.array([0.0, 15, 30, 45, 60, 75, 90, 120, 150, 180, np.inf])


def action_stats(manifest: list, csv_path=None) -> dict:
    """Per-action frequencies and a camera-magnitude histogram.

    Frequencies are fractions of all logged (player, tick) records. The
    histogram covers records with a nonzero camera delta; bin counts sum
    to exactly that total.
    """
    if not manifest:
        raise ValueError("empty manifest")
    flag_keys = [k for k in ACTION_KEYS if k != "camera"]
    counts = {k: 0 for k in flag_keys}
    magnitudes = []
    records = 0
    for entry in manifest:
        if not entry.get("path"):
            continue
        log = load_episode(entry["path"])
        for p in range(len(log.actions)):
            for a in log.actions[p]:
                records += 1
                for k in flag_keys:
                    counts[k] += a[k]
                mag = abs(float(a["camera"][0]))
                if mag > 0 or abs(float(a["camera"][1])) > 0:
                    magnitudes.append(max(mag, abs(float(a["camera"][1]))))
    hist, _ = np.histogram(magnitudes, bins=CAMERA_BINS)
    report = {
        "records": records,
        "frequencies": {k: (counts[k] / records if records else 0.0) for k in flag_keys},
        "camera_actions": len(magnitudes),
        "camera_histogram": {
            f"{CAMERA_BINS[i]:.0f}-{CAMERA_BINS[i+1]:.0f}": int(hist[i])
            for i in range(len(hist))
        },
    }
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            w.writerow(["records", records])
            for k in flag_keys:
                w.writerow([f"freq.{k}", f"{report['frequencies'][k]:.6f}"])
            w.writerow(["camera_actions", len(magnitudes)])
            for name, n in report["camera_histogram"].items():
                w.writerow([f"camera_hist.{name}", n])
    return report
