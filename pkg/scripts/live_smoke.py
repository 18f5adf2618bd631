"""Live smoke test against an OpenAI-compatible endpoint.

Refines at least 20 synthetic samples, then checks that the batch completed,
that the mean trajectory length lies in [1, 6] and that every trace validates.
No metric target is asserted. Without --base-url a local stub server is used.

    REFINERY_API_KEY=... python3 scripts/live_smoke.py --base-url https://api.openai.com/v1 \\
        --model gpt-3.5-turbo-0125 --samples 20
"""

import argparse
import contextlib
import json
import sys
import tempfile
from pathlib import Path

from refinery import synthetic
from refinery.analytics import trajectory_stats
from refinery.aspects import build_backgrounds
from refinery.cli import main
from refinery.dataset import load_workspace
from refinery.domain import parse_goal
from refinery.llm import OpenAICompatibleBackend
from refinery.orchestrator import Pipeline, run_batch
from refinery.stubserver import StubServer
from refinery.traces import TraceDirectory, validate_trace


def smoke(base_url: str, model: str, samples: int, out: Path, parallelism: int, rps: float | None) -> int:
    raw = synthetic.write(out / "raw", n_users=samples, seed=0)
    if main(["ingest", "--interactions", str(raw["interactions"]), "--items", str(raw["items"]),
             "--features", str(raw["features"]), "--base-outputs", str(raw["base_outputs"]),
             "--n-users", str(samples), "--out", str(out / "data")]):
        return 1
    ws = load_workspace(out / "data")
    backend = OpenAICompatibleBackend(base_url, model, max_attempts=5, requests_per_second=rps,
                                      max_in_flight=parallelism)
    results = run_batch(ws.samples, parse_goal("F=P=C"), backend, Pipeline(features=ws.features),
                        build_backgrounds(ws.samples, ws.train, ws.items), parallelism,
                        TraceDirectory(out / "traces"))
    failed = [r.sample.key for r in results if r.failed]
    stats = trajectory_stats(results) if len(failed) < len(results) else None
    invalid = 0
    for f in sorted((out / "traces").glob("*.json")):
        try:
            validate_trace(json.loads(f.read_text(encoding="utf-8")))
        except Exception as exc:
            invalid += 1
            print(f"invalid trace {f.name}: {exc}")
    print(f"samples {len(results)}, failed {len(failed)}, invalid traces {invalid}")
    if stats:
        print(stats.to_text(), end="")
    ok = not failed and not invalid and stats is not None and 1 <= stats.avg_length <= 6
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cli() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--base-url", help="endpoint root; omit to use the local stub server")
    p.add_argument("--model", default="gpt-3.5-turbo-0125")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--rps", type=float, default=None, help="requests-per-second cap")
    p.add_argument("--out", type=Path, help="keep outputs here instead of a temp dir")
    args = p.parse_args()
    if args.samples < 20:
        p.error("--samples must be >= 20")
    with contextlib.ExitStack() as stack:
        out = args.out or Path(stack.enter_context(tempfile.TemporaryDirectory()))
        base_url = args.base_url
        if base_url is None:
            base_url = stack.enter_context(StubServer()).base_url
        return smoke(base_url, args.model, args.samples, out, args.parallelism, args.rps)


if __name__ == "__main__":
    sys.exit(cli())
