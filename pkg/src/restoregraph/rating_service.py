"""HTTP service around the pairwise rating state.

Endpoints (JSON bodies):
  GET  /api/pair?indicator=<name>  issue a pair to rate
  POST /api/vote                   submit {pair_id, outcome}
  GET  /api/progress               corpus coverage summary
  GET  /api/scores                 per-image ratings and composites
  GET  /api/images/<id>            image bytes from the corpus directory
  GET  /<path>                     static frontend assets

Votes are serialized through one lock, so ledger order is total and
every accepted vote is flushed and fsynced before the response leaves.
A pair_id can be consumed exactly once; replays get 409.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping, Sequence
from urllib.parse import parse_qs, urlparse

from .labeling import (
    INDICATORS,
    OUTCOMES,
    ImageRecord,
    append_ledger,
    apply_vote,
    composite_scores,
    next_pair,
    open_ledger,
    read_ledger,
    replay_ledger,
)
from .trueskill import TrueSkillParams

log = logging.getLogger("restoregraph.rating")

# Question text is configurable; these defaults phrase the four
# restoration indicators as pairwise choices.
DEFAULT_QUESTIONS = {
    "being_away": "Which place would give you a better break from daily demands?",
    "extent": "Which place feels more like a coherent world of its own?",
    "fascination": "Which place would hold your attention without effort?",
    "compatibility": "Which place better fits what you would want to do there?",
}

_CONTENT_TYPES = {
    ".css": "text/css; charset=utf-8",
    ".html": "text/html; charset=utf-8",
    ".ico": "image/x-icon",
    ".jpeg": "image/jpeg",
    ".jpg": "image/jpeg",
    ".js": "text/javascript; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".mjs": "text/javascript; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


class RequestError(Exception):
    """An HTTP-visible failure with its status code."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class RatingService:
    """Application state behind the HTTP surface.

    Thread-safe: every mutation takes the single writer lock, so
    concurrent votes land in a total order and reads see full snapshots.
    An existing ledger at ledger_path is replayed on startup, making
    restarts transparent to raters.
    """

    def __init__(
        self,
        manifest: Sequence[ImageRecord],
        image_dir: str | Path,
        ledger_path: str | Path,
        static_dir: str | Path | None = None,
        params: TrueSkillParams | None = None,
        seed: int = 0,
        questions: Mapping[str, str] | None = None,
    ):
        if len(manifest) < 2:
            raise ValueError("need at least 2 images to schedule pairs")
        self.images = {record.image_id: record for record in manifest}
        if len(self.images) != len(manifest):
            raise ValueError("duplicate image ids in manifest")
        self.image_dir = Path(image_dir)
        self.static_dir = Path(static_dir) if static_dir is not None else None
        self.seed = seed
        self.questions = dict(DEFAULT_QUESTIONS)
        if questions:
            self.questions.update(questions)

        ledger_path = Path(ledger_path)
        existing = read_ledger(ledger_path) if ledger_path.exists() else []
        self.state = replay_ledger(sorted(self.images), existing, params)
        self.ledger_fh = open_ledger(ledger_path)
        self.lock = threading.Lock()
        # pair_id -> (indicator, left, right); consumed ids stay registered
        # so a replayed submit can be told apart from a fabricated one.
        self.issued: dict[str, tuple[str, str, str]] = {}
        self.consumed: set[str] = set()
        self._issue_seq = 0

    def close(self) -> None:
        self.ledger_fh.close()

    def __enter__(self) -> "RatingService":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- API operations ----------------------------------------------------

    def issue_pair(self, indicator: str | None = None) -> dict:
        """Schedule a pair; without an indicator the service rotates."""
        with self.lock:
            if indicator is None:
                indicator = INDICATORS[self._issue_seq % len(INDICATORS)]
            elif indicator not in INDICATORS:
                raise RequestError(400, f"unknown indicator {indicator!r}")
            left, right = next_pair(self.state, indicator, self.seed)
            pair_id = f"p{self._issue_seq:08d}"
            self._issue_seq += 1
            self.issued[pair_id] = (indicator, left, right)
            return {
                "pair_id": pair_id,
                "indicator": indicator,
                "question": self.questions[indicator],
                "left_image_ref": f"/api/images/{left}",
                "right_image_ref": f"/api/images/{right}",
                "progress": self.state.progress(),
            }

    def submit_vote(self, pair_id: str, outcome: str) -> dict:
        """Consume an issued pair exactly once; duplicates get 409."""
        with self.lock:
            issued = self.issued.get(pair_id)
            if issued is None:
                raise RequestError(404, f"unknown pair_id {pair_id!r}")
            if pair_id in self.consumed:
                raise RequestError(409, f"pair_id {pair_id!r} was already voted")
            if outcome not in OUTCOMES:
                raise RequestError(400, f"unknown outcome {outcome!r}")
            indicator, left, right = issued
            apply_vote(self.state, (left, right), indicator, outcome, time.time())
            self.consumed.add(pair_id)
            append_ledger(self.ledger_fh, self.state.ledger[-1])
            return {"accepted": True, "progress": self.state.progress()}

    def progress(self) -> dict:
        with self.lock:
            return self.state.progress()

    def scores(self) -> dict:
        with self.lock:
            composite, incomplete = composite_scores(self.state)
            ratings = {
                image: {
                    indicator: {
                        "mu": rating.mu,
                        "sigma": rating.sigma,
                        "count": self.state.indicator_counts[image][indicator],
                    }
                    for indicator, rating in per_indicator.items()
                }
                for image, per_indicator in self.state.ratings.items()
            }
            return {"composite": composite, "incomplete": incomplete,
                    "ratings": ratings}

    # -- file serving --------------------------------------------------------

    def image_bytes(self, image_id: str) -> tuple[bytes, str]:
        record = self.images.get(image_id)
        if record is None:
            raise RequestError(404, f"unknown image {image_id!r}")
        path = self.image_dir / record.path
        if not path.is_file():
            raise RequestError(404, f"missing image file for {image_id!r}")
        ctype = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
        return path.read_bytes(), ctype

    def static_bytes(self, url_path: str) -> tuple[bytes, str]:
        if self.static_dir is None:
            raise RequestError(404, "no static assets configured")
        root = self.static_dir.resolve()
        path = (root / url_path.lstrip("/")).resolve()
        # the resolved target must stay inside the static root
        if not path.is_relative_to(root):
            raise RequestError(404, "not found")
        if path.is_dir():
            path = path / "index.html"
        if not path.is_file():
            raise RequestError(404, "not found")
        ctype = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
        return path.read_bytes(), ctype


class _Handler(BaseHTTPRequestHandler):
    service: RatingService

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, data: bytes, ctype: str) -> None:
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self) -> None:  # noqa: N802 (http.server naming)
        try:
            url = urlparse(self.path)
            if url.path == "/api/pair":
                query = parse_qs(url.query)
                indicator = query.get("indicator", [None])[0]
                self._send_json(200, self.service.issue_pair(indicator))
            elif url.path == "/api/progress":
                self._send_json(200, self.service.progress())
            elif url.path == "/api/scores":
                self._send_json(200, self.service.scores())
            elif url.path.startswith("/api/images/"):
                image_id = url.path[len("/api/images/"):]
                self._send_bytes(*self.service.image_bytes(image_id))
            elif url.path.startswith("/api/"):
                self._send_json(404, {"error": f"no such endpoint {url.path}"})
            else:
                self._send_bytes(*self.service.static_bytes(url.path))
        except RequestError as exc:
            self._send_json(exc.status, {"accepted": False, "error": str(exc)})
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_POST(self) -> None:  # noqa: N802 (http.server naming)
        try:
            url = urlparse(self.path)
            if url.path != "/api/vote":
                self._send_json(404, {"error": f"no such endpoint {url.path}"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw.decode() or "{}")
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise RequestError(400, "vote body must be JSON") from None
            if not isinstance(body, dict):
                raise RequestError(400, "vote body must be a JSON object")
            pair_id = body.get("pair_id")
            outcome = body.get("outcome")
            if not isinstance(pair_id, str) or not isinstance(outcome, str):
                raise RequestError(400, "vote needs string pair_id and outcome")
            self._send_json(200, self.service.submit_vote(pair_id, outcome))
        except RequestError as exc:
            self._send_json(exc.status, {"accepted": False, "error": str(exc)})
        except (BrokenPipeError, ConnectionResetError):
            pass


def make_server(service: RatingService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    """Bind a threading HTTP server; port 0 picks an ephemeral port."""
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve(service: RatingService, host: str = "127.0.0.1",
          port: int = 8000) -> None:
    """Run the service in the foreground until interrupted."""
    server = make_server(service, host, port)
    bound_host, bound_port = server.server_address[:2]
    log.info("rating service listening on http://%s:%d", bound_host, bound_port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        service.close()
