"""End-to-end run on a synthetic corpus through the local stub endpoint.

Exercises ingest, refine, evaluate and report exactly as an operator would,
with the live HTTP backend pointed at a rule-based local server.

    python3 scripts/run_synthetic.py --out runs/synthetic --users 40 --goal "F>P>C"
"""

import argparse
import os
import sys
from pathlib import Path

from refinery import synthetic
from refinery.cli import main
from refinery.stubserver import StubServer


def run(out: Path, users: int, goal: str, seed: int, parallelism: int) -> int:
    raw = synthetic.write(out / "raw", n_users=users, seed=seed)
    steps = [["ingest", "--interactions", str(raw["interactions"]), "--items", str(raw["items"]),
              "--features", str(raw["features"]), "--base-outputs", str(raw["base_outputs"]),
              "--n-users", str(users), "--seed", str(seed), "--out", str(out / "data")]]
    with StubServer() as server:
        config = out / "config.toml"
        config.write_text(f'[backend]\nbase_url = "{server.base_url}"\nmodel = "stub"\napi_key_env = ""\n')
        live = ["--backend", "live", "--config", str(config)]
        steps += [
            ["refine", "--data", str(out / "data"), "--goal", goal, "--parallelism", str(parallelism),
             "--out", str(out / "traces"), *live],
            ["evaluate", "--data", str(out / "data"), "--traces", str(out / "traces"),
             "--parallelism", str(parallelism), "--out", str(out / "report.json"), *live],
            ["report", "--traces", str(out / "traces"), "--evaluation", str(out / "report.json"),
             "--out", str(out / "report.txt")],
        ]
        for argv in steps:
            print(f"$ refinery {' '.join(argv[:1])}", flush=True)
            code = main(argv)
            if code:
                return code
    return 0


def cli() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/synthetic"))
    p.add_argument("--users", type=int, default=30)
    p.add_argument("--goal", default="F=P=C")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallelism", type=int, default=min(4, os.cpu_count() or 1))
    args = p.parse_args()
    return run(args.out, args.users, args.goal, args.seed, args.parallelism)


if __name__ == "__main__":
    sys.exit(cli())
