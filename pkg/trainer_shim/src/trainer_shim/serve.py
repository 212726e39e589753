"""Minimal chat-completions/embeddings server over a trained artifact.

Speaks the same JSON wire shapes the evaluation gateway's HTTP client sends:
POST .../chat/completions with {model, messages, temperature, max_tokens}
returning {choices: [{message: {content}}]}, and POST .../embeddings with
{model, input} returning {data: [{embedding}, ...]} in input order.  Any path
prefix is accepted so /v1-style base URLs work unchanged.  Malformed requests
get a 4xx without taking the server down; generation concurrency is bounded
by a worker semaphore, extra requests queue.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .artifacts import ServedModel, embed_text, generate, load_artifacts

MAX_COMPLETION_TOKENS = 128


class ShimServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, served: ServedModel, workers: int):
        if workers < 1:
            raise ValueError("workers must be at least 1")
        self.served = served
        self.slots = threading.BoundedSemaphore(workers)
        super().__init__(address, _Handler)


class _Handler(BaseHTTPRequestHandler):
    server: ShimServer

    def log_message(self, *_args):
        pass

    def _reply(self, status: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _fail(self, status: int, message: str):
        self._reply(status, {"error": {"message": message}})

    def do_GET(self):
        self._fail(404, f"no such endpoint: {self.path}")

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length") or 0)
            payload = json.loads(self.rfile.read(length))
        except (ValueError, json.JSONDecodeError):
            self._fail(400, "request body is not valid JSON")
            return
        if not isinstance(payload, dict):
            self._fail(400, "request body must be a JSON object")
            return

        path = self.path.rstrip("/")
        if path.endswith("/chat/completions"):
            self._chat(payload)
        elif path.endswith("/embeddings"):
            self._embeddings(payload)
        else:
            self._fail(404, f"no such endpoint: {self.path}")

    def _chat(self, payload: dict):
        messages = payload.get("messages")
        if not isinstance(messages, list) or not messages:
            self._fail(400, "messages must be a non-empty list")
            return
        parts = []
        for message in messages:
            if not isinstance(message, dict) or not isinstance(message.get("content"), str):
                self._fail(400, "each message needs a string content field")
                return
            parts.append(message["content"])
        try:
            max_tokens = int(payload.get("max_tokens", 64))
        except (TypeError, ValueError):
            self._fail(400, "max_tokens must be an integer")
            return
        max_tokens = max(1, min(max_tokens, MAX_COMPLETION_TOKENS))

        with self.server.slots:
            text = generate(self.server.served, "\n".join(parts), max_new=max_tokens)
        self._reply(200, {"choices": [{"message": {"role": "assistant", "content": text}}]})

    def _embeddings(self, payload: dict):
        inputs = payload.get("input")
        if isinstance(inputs, str):
            inputs = [inputs]
        if not isinstance(inputs, list) or not all(isinstance(t, str) for t in inputs):
            self._fail(400, "input must be a string or list of strings")
            return
        data = [
            {"index": i, "embedding": embed_text(self.server.served, text)}
            for i, text in enumerate(inputs)
        ]
        self._reply(200, {"data": data})


def start_server(
    artifact_dir: str, host: str = "127.0.0.1", port: int = 0, workers: int = 4
) -> ShimServer:
    """Bind and return the server; callers drive serve_forever themselves."""
    served = load_artifacts(artifact_dir)
    return ShimServer((host, port), served, workers)
