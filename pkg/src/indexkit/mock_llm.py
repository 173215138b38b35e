"""Deterministic mock of an OpenAI-compatible chat endpoint.

Used by the test suite and by pipeline runs that need reproducible
"LLM" behaviour without a real model. The mock recognizes the three
pipeline system prompts and answers deterministically:

  * translation  -- echoes back the title/description from the prompt;
  * synthesis    -- derives a new title/abstract from the requested
    keywords;
  * ranking      -- scores each keyword by token overlap with the text.

Any other system prompt is answered by echoing the user message. A
scripted failure queue lets tests exercise retry behaviour.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import prompts
from .lexical import normalize

_RANK_SCALE = 100.0


def translate_reply(user: str) -> str:
    _, _, tail = user.partition(":\n\n")
    return tail if tail else user


def synthesize_reply(user: str) -> str:
    marker = "match the following subject keywords: "
    idx = user.rfind(marker)
    keywords = user[idx + len(marker):] if idx != -1 else ""
    return f"Notes on {keywords}\n\nA synthetic record discussing {keywords} in detail."


def rank_reply(user: str) -> str:
    text, _, keyword_block = user.partition("\n\n")
    text_tokens = set(normalize(text))
    scores = {}
    for keyword in keyword_block.splitlines():
        if not keyword.strip():
            continue
        tokens = normalize(keyword)
        overlap = sum(1 for t in tokens if t in text_tokens)
        scores[keyword] = round(_RANK_SCALE * overlap / len(tokens)) if tokens else 0
    return json.dumps(scores, ensure_ascii=False)


def default_behaviour(system: str, user: str) -> str:
    if system == prompts.TRANSLATE_SYSTEM:
        return translate_reply(user)
    if system == prompts.SYNTHESIZE_SYSTEM:
        return synthesize_reply(user)
    if system == prompts.RANK_SYSTEM:
        return rank_reply(user)
    return user


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 - http.server API
        server: MockLlmServer = self.server  # type: ignore[assignment]
        if self.path != "/v1/chat/completions":
            self.send_error(404)
            return
        status = server.next_scripted_status()
        if status is not None:
            self.send_error(status)
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length))
            messages = {m["role"]: m["content"] for m in body["messages"]}
            system, user = messages.get("system", ""), messages.get("user", "")
        except (ValueError, KeyError, TypeError):
            self.send_error(400)
            return
        with server.lock:
            server.requests.append({"system": system, "user": user, "model": body.get("model")})
        content = server.behaviour(system, user)
        payload = json.dumps(
            {"choices": [{"message": {"role": "assistant", "content": content}}]},
            ensure_ascii=False,
        ).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # silence per-request logging
        pass


class MockLlmServer(ThreadingHTTPServer):
    """Threaded mock endpoint; use as a context manager."""

    def __init__(self, behaviour=default_behaviour, port: int = 0):
        super().__init__(("127.0.0.1", port), _Handler)
        self.behaviour = behaviour
        self.lock = threading.Lock()
        self.requests: list[dict] = []
        self._script: list[int] = []
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"

    def script_failures(self, statuses: list[int]) -> None:
        """Queue HTTP error statuses to emit before answering normally."""
        with self.lock:
            self._script.extend(statuses)

    def next_scripted_status(self) -> int | None:
        with self.lock:
            return self._script.pop(0) if self._script else None

    def __enter__(self) -> "MockLlmServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join(timeout=5)
