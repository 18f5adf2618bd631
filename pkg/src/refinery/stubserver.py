"""Local OpenAI-compatible endpoint with rule-based replies.

Intended for offline smoke runs of the live backend: it speaks the
``/chat/completions`` wire format and answers each agent role with a
plausible, deterministic JSON reply.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterable

_LINE = re.compile(r"^(?P<key>[^:\n]+): (?P<value>.*)$", re.M)


def _field(text: str, key: str) -> str:
    for m in _LINE.finditer(text):
        if m.group("key") == key:
            return m.group("value")
    return ""


def heuristic_reply(system: str, user: str) -> str:
    """Answer a rendered agent or judge prompt."""
    if "You are the Planner" in system:
        traj = _field(user, "The refinement trajectory is")
        done = 0 if traj.startswith("[]") else traj.count(",") + 1
        return json.dumps({"aspect": done + 1 if done < 3 else 0})
    if "You are the Refiner" in system:
        current = _field(user, "The current explanation is")
        aspect = _field(user, "The aspect to be refined is").lower()
        return json.dumps({"explanation": f"{current}, now with better {aspect}"})
    if "You are the Strategic Reflector" in system:
        return json.dumps({"strategic reflection": "the aspect order follows the goal"})
    if "You are the Content Reflector" in system:
        return json.dumps({"content reflection": "mention one more concrete item detail"})
    if "You condense" in system:
        return json.dumps({"summary": "ground claims in the reviews"})
    if "Recommendation_Explanation" in system:
        return "1"
    if "{Text}" in system:
        return "-1" if "not recommend" in user.lower() else "1"
    if "summarize product" in system:
        return "tasty food, friendly staff"
    return "{}"


class StubServer:
    """Threaded HTTP server; use as a context manager.

    ``statuses`` is a queue of HTTP codes returned (with an error body) before
    normal replies resume.
    """

    def __init__(self, reply: Callable[[str, str], str] = heuristic_reply, statuses: Iterable[int] = ()):
        self.reply = reply
        self.statuses = list(statuses)
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))) or b"{}")
                with outer._lock:
                    outer.requests.append(body)
                    outer.headers.append(dict(self.headers))
                    status = outer.statuses.pop(0) if outer.statuses else 200
                if not self.path.endswith("/chat/completions"):
                    status = 404
                if status != 200:
                    payload = {"error": {"message": f"stub status {status}"}}
                else:
                    msgs = {m["role"]: m["content"] for m in body.get("messages", [])}
                    text = outer.reply(msgs.get("system", ""), msgs.get("user", ""))
                    payload = {
                        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
                        "usage": {"prompt_tokens": 1, "completion_tokens": 1},
                    }
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
        )

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def __enter__(self) -> StubServer:
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
