"""Fixture builders shared by the test modules."""

import json

from refinery import agents, synthetic
from refinery.aspects import BackgroundMemory
from refinery.cli import main
from refinery.domain import Aspect, Explanation, QualitySignal, Sample, parse_goal
from refinery.memory import RefinementMemory

INITIAL = "the broth was good and the noodles were fine"
GOAL = parse_goal("F=P=C")


def make_sample(user="u1", item="i1", rating=4.5, text=INITIAL):
    return Sample(user, item, rating, Explanation(text, 0), "Ramen Ya", "Restaurants")


def make_background(sample=None):
    sample = sample or make_sample()
    return BackgroundMemory(
        sample,
        item_reviews=((5.0, "rich broth and chewy noodles"), (2.0, "slow service at lunch")),
        user_history=(("Pho House", 4.0, "loved the broth"),),
    )


def j(field, value):
    return json.dumps({field: value})


def episode_script(codes, scope="", refined="the noodles were chewy and the broth was rich"):
    """Script for a full episode: planner codes per round, fixed replies elsewhere."""
    p = f"{scope}/" if scope else ""
    script = {f"{p}planner#{t}": [j("aspect", c)] for t, c in enumerate(codes, start=1)}
    script.update({
        f"{p}refiner#*": j("explanation", refined),
        f"{p}summarize#*": j("summary", "keep facts grounded"),
        f"{p}strategic#*": j("strategic reflection", "order matches the goal"),
        f"{p}content#*": j("content reflection", "cite one more detail"),
        f"{p}entail#*": "1",
        f"{p}sentiment#*": "1",
    })
    return script


def ingest(tmp_path, n_users=8):
    paths = synthetic.write(tmp_path / "raw", n_users=n_users, seed=3)
    data = tmp_path / "data"
    code = main(["ingest", "--interactions", str(paths["interactions"]), "--items", str(paths["items"]),
                 "--features", str(paths["features"]), "--base-outputs", str(paths["base_outputs"]),
                 "--n-users", str(n_users), "--seed", "1", "--out", str(data)])
    assert code == 0
    return data


def script_for(data, path):
    """Per-sample scripts with varied trajectories."""
    plans = [[1, 2, 3, 0], [2, 2, 0], [1, 0], [3, 1, 2, 2, 1, 3]]
    script = {}
    for k, line in enumerate((data / "samples.jsonl").read_text().splitlines()):
        s = json.loads(line)
        key = f"{s['user_id']}|{s['item_id']}"
        script.update(episode_script(plans[k % 4], scope=key, refined=f"the broth and service {k}"))
        script[f"{key}/eval_entail#*"] = str(k % 2)
        script[f"{key}/eval_sentiment#*"] = "1" if k % 3 else "-1"
    path.write_text(json.dumps(script, indent=1))
    return path


def run_cli_pipeline(tmp_path, data, script, tag):
    out = tmp_path / tag
    assert main(["refine", "--data", str(data), "--goal", "F=P=C", "--max-rounds", "6",
                 "--backend", "scripted", "--script", str(script), "--out", str(out / "traces")]) == 0
    assert main(["evaluate", "--data", str(data), "--traces", str(out / "traces"),
                 "--backend", "scripted", "--script", str(script), "--out", str(out / "report.json")]) == 0
    assert main(["report", "--traces", str(out / "traces"), "--evaluation", str(out / "report.json"),
                 "--out", str(out / "report.txt")]) == 0
    return out


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# Golden-file fixture
INSTRUCTION = "Use only facts from the reviews."
REFINED = Explanation("the noodles were chewy and the broth was rich", 1)
SIGNAL = QualitySignal(
    Aspect.FACTUALITY, "entail_flag", 1,
    "1 if the judge finds every statement supported by the item reviews, else 0",
)


def fixture_requests():
    """The four role requests rendered on the golden-file fixture."""
    s = make_sample()
    f = Aspect.FACTUALITY
    return {
        "planner": agents.planner_request(s.initial_explanation, GOAL, (), None, None, 6),
        "refiner": agents.refiner_request(s.initial_explanation, f, INSTRUCTION, agents.NO_REFLECTIONS, 20),
        "strategic_reflector": agents.strategic_request(GOAL, RefinementMemory(), REFINED, f),
        "content_reflector": agents.content_request(REFINED, f, INSTRUCTION, SIGNAL),
    }
