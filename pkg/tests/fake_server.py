"""In-process completions server for exercising the remote client.

Tokenizes prompts into leading-whitespace word chunks and scores each token
with a deterministic logprob (-len(token) * ln 2, i.e. len(token) bits), so
tests can predict every value. Supports echo-style scoring, chat
completions, injected failures, and a request counter for cache tests.
"""

from __future__ import annotations

import json
import math
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

TOKEN_RE = re.compile(r"\s*\S+|\s+$")

BOS_TOKEN = "<|begin_of_text|>"


def tokenize(prompt: str) -> list[str]:
    return TOKEN_RE.findall(prompt)


def token_bits(token: str) -> float:
    return float(len(token))


class FakeCompletionsServer:
    def __init__(self, with_bos: bool = True):
        self.with_bos = with_bos
        self.requests = 0
        self.fail_next: list[int] = []  # statuses to emit before succeeding
        self.chat_responses: list[str] = []
        self.chat_handler = None  # optional callable(messages) -> str
        self.last_payloads: list[dict] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def do_POST(self):
                outer.requests += 1
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                outer.last_payloads.append(payload)
                if outer.fail_next:
                    status = outer.fail_next.pop(0)
                    self._send(status, {"error": "injected failure"})
                    return
                if self.path.endswith("/chat/completions"):
                    self._send(200, outer._chat(payload))
                else:
                    self._send(200, outer._score(payload))

            def _send(self, status, obj):
                body = json.dumps(obj).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.02), daemon=True
        )

    def _score(self, payload: dict) -> dict:
        prompt = payload["prompt"]
        tokens = tokenize(prompt)
        texts, logprobs, offsets = [], [], []
        if self.with_bos:
            texts.append(BOS_TOKEN)
            logprobs.append(None)
            offsets.append(0)
        pos = 0
        for i, tok in enumerate(tokens):
            texts.append(tok)
            if not self.with_bos and i == 0:
                logprobs.append(None)
            else:
                logprobs.append(-token_bits(tok) * math.log(2.0))
            offsets.append(pos)
            pos += len(tok)
        return {
            "choices": [{
                "text": prompt,
                "logprobs": {
                    "tokens": texts,
                    "token_logprobs": logprobs,
                    "text_offset": offsets,
                },
            }]
        }

    def _chat(self, payload: dict) -> dict:
        if self.chat_handler is not None:
            content = self.chat_handler(payload["messages"])
        elif self.chat_responses:
            content = self.chat_responses.pop(0)
        else:
            content = "ok"
        return {"choices": [{"message": {"role": "assistant", "content": content}}]}

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/completions"

    @property
    def chat_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
