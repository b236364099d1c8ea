"""Read-only HTTP service over an immutable explorer bundle snapshot.

Endpoints:
  GET /api/points                       full bundle
  GET /api/region-stats?xdim&ydim&xmin&xmax&ymin&ymax[&lexeme=...]*
                                        {count, avg_duration_frames, avg_pitch_range_st}
  GET /api/audio/{id}                   streams the referenced clip (404 without audio)
  GET /...                              static assets when a static dir is configured

The bundle is loaded once; identical requests yield identical responses until
the process is restarted with a new bundle file.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import pathlib
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .explorer import load_bundle, region_stats

logger = logging.getLogger(__name__)


class ExplorerService:
    def __init__(self, bundle_path, audio_dir=None, static_dir=None):
        self.bundle = load_bundle(bundle_path)
        self.points_by_id = {p["id"]: p for p in self.bundle["points"]}
        self.audio_dir = pathlib.Path(audio_dir) if audio_dir else None
        self.static_dir = pathlib.Path(static_dir) if static_dir else None

    def stats(self, query: dict) -> dict:
        try:
            xdim = query["xdim"][0]
            ydim = query["ydim"][0]
            rect = [float(query[k][0]) for k in ("xmin", "xmax", "ymin", "ymax")]
        except (KeyError, ValueError, IndexError) as e:
            raise ValueError(f"malformed rectangle query: {e}") from e
        lexemes = query.get("lexeme")
        return region_stats(self.bundle["points"], xdim, ydim, *rect, lexemes=lexemes)

    def audio_path(self, point_id: str) -> pathlib.Path | None:
        point = self.points_by_id.get(point_id)
        if point is None or self.audio_dir is None or "audio_ref" not in point:
            return None
        path = (self.audio_dir / point["audio_ref"]).resolve()
        if self.audio_dir.resolve() not in path.parents and path != self.audio_dir.resolve():
            return None  # refuse to escape the audio directory
        return path if path.is_file() else None


class _Handler(BaseHTTPRequestHandler):
    service: ExplorerService = None  # set by make_server

    def log_message(self, fmt, *args):
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, obj, status=200):
        body = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):  # noqa: N802 (http.server API)
        parsed = urlparse(self.path)
        route = parsed.path
        if route == "/api/points":
            self._send_json(self.service.bundle)
            return
        if route == "/api/region-stats":
            try:
                stats = self.service.stats(parse_qs(parsed.query))
            except ValueError as e:
                self._send_json({"error": str(e)}, status=400)
                return
            self._send_json(stats)
            return
        if route.startswith("/api/audio/"):
            point_id = route[len("/api/audio/") :]
            path = self.service.audio_path(point_id)
            if path is None:
                self._send_json({"error": f"no audio for {point_id!r}"}, status=404)
                return
            self._send_file(path)
            return
        if self.service.static_dir is not None:
            self._serve_static(route)
            return
        self._send_json({"error": "not found"}, status=404)

    def _send_file(self, path: pathlib.Path):
        data = path.read_bytes()
        ctype = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _serve_static(self, route: str):
        rel = route.lstrip("/") or "index.html"
        base = self.service.static_dir.resolve()
        path = (base / rel).resolve()
        if base not in path.parents and path != base:
            self._send_json({"error": "not found"}, status=404)
            return
        if path.is_dir():
            path = path / "index.html"
        if not path.is_file():
            self._send_json({"error": "not found"}, status=404)
            return
        self._send_file(path)


def make_server(
    bundle_path, audio_dir=None, static_dir=None, host="127.0.0.1", port=0
) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; port 0 picks a free port."""
    service = ExplorerService(bundle_path, audio_dir, static_dir)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve(bundle_path, audio_dir=None, static_dir=None, host="127.0.0.1", port=8765):
    """Run the service until interrupted."""
    server = make_server(bundle_path, audio_dir, static_dir, host, port)
    logger.info("serving on http://%s:%d", *server.server_address)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def start_in_thread(server: ThreadingHTTPServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
