"""Regenerate the per-run usage fixtures (``python3 tests/fixtures/gen_usage.py``).

Each file holds 37 runs; each run is a list of per-call usage records. Costs are
whole micro-dollars and wall times whole centiseconds, chosen so that the
per-run totals sum exactly to the target totals.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

# model -> (total cost in micro-USD, total time in centiseconds)
TARGETS = {
    "gemini-3-pro": (16_435_400, 1_194_064),
    "gpt-5.2": (1_820_400, 154_549),
    "claude-sonnet-4": (2_808_300, 160_580),
}
RUNS = 37


def split(total: int, parts: int, rng: random.Random) -> list[int]:
    """Random positive integers summing to ``total``, none below a quarter of the mean."""
    floor = total // (parts * 4)
    spare = total - floor * parts
    cuts = sorted(rng.randint(0, spare) for _ in range(parts - 1))
    return [floor + b - a for a, b in zip([0] + cuts, cuts + [spare])]


def build(model: str, seed: int) -> dict:
    rng = random.Random(seed)
    cost_total, time_total = TARGETS[model]
    run_costs = split(cost_total, RUNS, rng)
    run_times = split(time_total, RUNS, rng)
    runs = []
    for cost, centis in zip(run_costs, run_times):
        calls = rng.randint(2, 6)
        runs.append([
            {"input_tokens": rng.randint(800, 9000), "output_tokens": rng.randint(50, 2500),
             "wall_time": t / 100, "cost": c / 1_000_000}
            for c, t in zip(split(cost, calls, rng), split(centis, calls, rng))
        ])
    return {"model": model, "runs": runs}


if __name__ == "__main__":
    here = Path(__file__).parent
    for seed, model in enumerate(TARGETS):
        path = here / f"usage_{model}.json"
        path.write_text(json.dumps(build(model, seed), indent=1) + "\n", encoding="utf-8")
        print(path)
