"""File-exchange protocol between the pipeline and an external segmenter.

The contract is a working directory. Each request occupies its own
`req_%06d` subdirectory: the client writes all payload files first and
`request.json` last (rename-atomic), so its presence marks a complete
request. The server answers into the same subdirectory and writes
`done.json` last, or `error.json` with a message; both sides poll.

Predict requests carry RGB frames and preprocessing metadata (resize the
long side to 500 px, reflect-pad to 900x900 — applied by the server, on
its own input pipeline, never by the client). Responses are per-frame raw
probability volumes: `probs/frame_%06d.f32` holding K planes of H*W
little-endian float32, plus a JSON sidecar `probs/frame_%06d.json` with
{width, height, num_classes, dtype: "f32le", layout: "planar"}. Fine-tune
requests carry a dataset of frames and pseudo-label PNGs (255 = ignore)
plus the SGD hyperparameters; `dropout` is metadata for models that have
one. Responses failing the range/normalization validator are rejected.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np

from .errors import (
    ConfigurationError,
    MalformedResponse,
    NormalizationError,
    ProtocolError,
    ProtocolTimeout,
)
from .evalio import atomic_write_bytes, load_image, load_label_map, save_image, save_label_map
from .labels import IGNORE_LABEL
from .model import ReferenceSegmenter, TrainConfig

SUM_TOLERANCE = 1e-3

DEFAULT_PREPROCESSING = {
    "resize_long_side": 500,
    "pad_to": [900, 900],
    "pad_mode": "reflect",
}


def volume_to_bytes(vol: np.ndarray) -> bytes:
    """Planar little-endian float32 encoding of an (H, W, K) volume."""
    vol = np.asarray(vol)
    planar = np.ascontiguousarray(np.moveaxis(vol, 2, 0), dtype="<f4")
    return planar.tobytes(order="C")


def volume_from_bytes(blob: bytes, width: int, height: int, num_classes: int) -> np.ndarray:
    expected = 4 * width * height * num_classes
    if len(blob) != expected:
        raise MalformedResponse(
            "probability payload has %d bytes, expected %d" % (len(blob), expected)
        )
    planar = np.frombuffer(blob, dtype="<f4").reshape(num_classes, height, width)
    return np.moveaxis(planar, 0, 2).astype(np.float32)


def validate_probability_volume_response(vol: np.ndarray, frame_name: str) -> np.ndarray:
    arr = np.asarray(vol, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise MalformedResponse("%s: probabilities contain non-finite values" % frame_name)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise NormalizationError("%s: probabilities outside [0, 1]" % frame_name)
    sums = arr.sum(axis=2)
    worst = float(np.abs(sums - 1.0).max())
    if worst > SUM_TOLERANCE:
        raise NormalizationError(
            "%s: per-pixel channel sums deviate from 1 by %.3g (tolerance %g)"
            % (frame_name, worst, SUM_TOLERANCE)
        )
    return arr


def _write_json_atomic(path, payload: dict) -> None:
    atomic_write_bytes(path, (json.dumps(payload, indent=2) + "\n").encode("utf-8"))


def _read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


class ProtocolClient:
    """Pipeline-side writer of requests and reader of responses."""

    def __init__(
        self,
        workdir,
        num_classes: int,
        timeout: float = 120.0,
        poll_interval: float = 0.05,
        preprocessing: dict | None = None,
    ):
        self.workdir = os.fspath(workdir)
        self.num_classes = num_classes
        self.timeout = timeout
        self.poll_interval = poll_interval
        self.preprocessing = dict(preprocessing or DEFAULT_PREPROCESSING)
        os.makedirs(self.workdir, exist_ok=True)
        self._counter = 0

    def _new_request_dir(self) -> str:
        while True:
            self._counter += 1
            path = os.path.join(self.workdir, "req_%06d" % self._counter)
            if not os.path.exists(path):
                os.makedirs(path)
                return path

    def _await_response(self, req_dir: str) -> None:
        deadline = time.monotonic() + self.timeout
        done = os.path.join(req_dir, "done.json")
        failed = os.path.join(req_dir, "error.json")
        while True:
            if os.path.exists(failed):
                message = _read_json(failed).get("message", "unspecified failure")
                raise ProtocolError("external segmenter failed: %s" % message)
            if os.path.exists(done):
                status = _read_json(done).get("status")
                if status != "ok":
                    raise ProtocolError(
                        "external segmenter reported status %r" % status
                    )
                return
            if time.monotonic() > deadline:
                raise ProtocolTimeout(
                    "no response in %s within %.1fs" % (req_dir, self.timeout)
                )
            time.sleep(self.poll_interval)

    def predict(self, images: list[np.ndarray]) -> list[np.ndarray]:
        req_dir = self._new_request_dir()
        frames_dir = os.path.join(req_dir, "frames")
        os.makedirs(frames_dir)
        names = []
        for i, image in enumerate(images, start=1):
            name = "frames/frame_%06d.png" % i
            save_image(os.path.join(req_dir, name), image)
            names.append(name)
        _write_json_atomic(
            os.path.join(req_dir, "request.json"),
            {
                "mode": "predict",
                "frames": names,
                "num_classes": self.num_classes,
                "preprocessing": self.preprocessing,
            },
        )
        self._await_response(req_dir)

        volumes = []
        for i, image in enumerate(images, start=1):
            frame_name = "frame_%06d" % i
            raw_path = os.path.join(req_dir, "probs", frame_name + ".f32")
            sidecar_path = os.path.join(req_dir, "probs", frame_name + ".json")
            if not os.path.exists(raw_path) or not os.path.exists(sidecar_path):
                raise MalformedResponse(
                    "%s: missing probability file or sidecar in %s" % (frame_name, req_dir)
                )
            try:
                sidecar = _read_json(sidecar_path)
            except (OSError, json.JSONDecodeError) as exc:
                raise MalformedResponse(
                    "%s: unreadable sidecar: %s" % (frame_name, exc)
                ) from exc
            h, w = np.asarray(image).shape[:2]
            if (
                sidecar.get("dtype") != "f32le"
                or sidecar.get("layout") != "planar"
                or sidecar.get("width") != w
                or sidecar.get("height") != h
                or sidecar.get("num_classes") != self.num_classes
            ):
                raise MalformedResponse(
                    "%s: sidecar %r does not match frame %dx%d with %d classes"
                    % (frame_name, sidecar, w, h, self.num_classes)
                )
            with open(raw_path, "rb") as fh:
                blob = fh.read()
            vol = volume_from_bytes(blob, w, h, self.num_classes)
            volumes.append(validate_probability_volume_response(vol, frame_name))
        return volumes

    def fine_tune(
        self, dataset: list[tuple[np.ndarray, np.ndarray]], config: TrainConfig
    ) -> None:
        req_dir = self._new_request_dir()
        data_dir = os.path.join(req_dir, "dataset")
        os.makedirs(data_dir)
        entries = []
        for i, (image, labels) in enumerate(dataset, start=1):
            frame_rel = "dataset/frame_%06d.png" % i
            labels_rel = "dataset/labels_%06d.png" % i
            save_image(os.path.join(req_dir, frame_rel), image)
            save_label_map(os.path.join(req_dir, labels_rel), labels)
            entries.append({"frame": frame_rel, "labels": labels_rel})
        iterations = config.iterations if config.iterations is not None else len(dataset)
        _write_json_atomic(
            os.path.join(req_dir, "request.json"),
            {
                "mode": "finetune",
                "dataset": entries,
                "learning_rate": config.learning_rate,
                "momentum": config.momentum,
                "weight_decay": config.weight_decay,
                "iterations": iterations,
                "pixel_subsample": config.pixel_subsample,
                "seed": config.seed,
                "ignore_label": IGNORE_LABEL,
                "dropout": 0.5,
            },
        )
        self._await_response(req_dir)


class ExternalSegmenter:
    """Segmenter backed by the file protocol; fine-tuning mutates the server."""

    def __init__(self, client: ProtocolClient):
        self.client = client

    def predict(self, image: np.ndarray) -> np.ndarray:
        return self.client.predict([image])[0]

    def predict_sequence(self, images) -> list[np.ndarray]:
        return self.client.predict(list(images))

    def fine_tuned(self, dataset, config: TrainConfig) -> "ExternalSegmenter":
        self.client.fine_tune(dataset, config)
        return self


class LoopbackServer:
    """Reference model mounted behind the protocol, for tests and as the
    normative server behavior (minus the resize/pad steps, which a
    per-pixel model does not need)."""

    def __init__(self, workdir, segmenter: ReferenceSegmenter, poll_interval: float = 0.02):
        self.workdir = os.fspath(workdir)
        self.segmenter = segmenter
        self.poll_interval = poll_interval

    def _pending_requests(self) -> list[str]:
        try:
            names = sorted(os.listdir(self.workdir))
        except OSError:
            return []
        pending = []
        for name in names:
            req_dir = os.path.join(self.workdir, name)
            if not (name.startswith("req_") and os.path.isdir(req_dir)):
                continue
            if not os.path.exists(os.path.join(req_dir, "request.json")):
                continue
            if os.path.exists(os.path.join(req_dir, "done.json")):
                continue
            if os.path.exists(os.path.join(req_dir, "error.json")):
                continue
            pending.append(req_dir)
        return pending

    def serve_once(self) -> bool:
        pending = self._pending_requests()
        if not pending:
            return False
        req_dir = pending[0]
        try:
            request = _read_json(os.path.join(req_dir, "request.json"))
            mode = request.get("mode")
            if mode == "predict":
                self._handle_predict(req_dir, request)
            elif mode == "finetune":
                self._handle_finetune(req_dir, request)
            else:
                raise ConfigurationError("unknown request mode %r" % mode)
        except Exception as exc:  # keep serving after a bad request
            _write_json_atomic(
                os.path.join(req_dir, "error.json"),
                {"status": "error", "message": str(exc)},
            )
            return True
        _write_json_atomic(os.path.join(req_dir, "done.json"), {"status": "ok"})
        return True

    def serve_forever(self, stop_event) -> None:
        while not stop_event.is_set():
            if not self.serve_once():
                time.sleep(self.poll_interval)

    def _handle_predict(self, req_dir: str, request: dict) -> None:
        num_classes = request.get("num_classes")
        if num_classes != self.segmenter.params.num_classes:
            raise ConfigurationError(
                "request expects %r classes, model has %d"
                % (num_classes, self.segmenter.params.num_classes)
            )
        probs_dir = os.path.join(req_dir, "probs")
        os.makedirs(probs_dir, exist_ok=True)
        for rel in request["frames"]:
            image = load_image(os.path.join(req_dir, rel))
            vol = self.segmenter.predict(image)
            frame_name = os.path.splitext(os.path.basename(rel))[0]
            atomic_write_bytes(
                os.path.join(probs_dir, frame_name + ".f32"), volume_to_bytes(vol)
            )
            _write_json_atomic(
                os.path.join(probs_dir, frame_name + ".json"),
                {
                    "width": int(vol.shape[1]),
                    "height": int(vol.shape[0]),
                    "num_classes": int(vol.shape[2]),
                    "dtype": "f32le",
                    "layout": "planar",
                },
            )

    def _handle_finetune(self, req_dir: str, request: dict) -> None:
        dataset = []
        for entry in request["dataset"]:
            image = load_image(os.path.join(req_dir, entry["frame"]))
            labels = load_label_map(os.path.join(req_dir, entry["labels"]))
            dataset.append((image, labels))
        config = TrainConfig(
            learning_rate=request["learning_rate"],
            momentum=request["momentum"],
            weight_decay=request["weight_decay"],
            iterations=request["iterations"],
            pixel_subsample=request.get("pixel_subsample", 4096),
            seed=request.get("seed", 0),
        )
        self.segmenter = self.segmenter.fine_tuned(dataset, config)
