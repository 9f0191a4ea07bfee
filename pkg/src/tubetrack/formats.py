"""Ground-truth CSV, tracker output CSV, tube files and eval result files.

Floats are written with ``repr`` so every value reads back bit-identical.
Boxes are stored as normalized corners unless a frame size is given, in which
case files hold pixels and are scaled on the way in and out.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError
from .loss import PredictionWindow
from .metrics import EvalResult
from .motion import TimeBasis
from .records import TrackRecord, sort_records

GT_COLUMNS = ("frame", "id", "left", "top", "right", "bottom", "visibility")
TRACK_COLUMNS = ("frame", "id", "left", "top", "right", "bottom", "confidence", "visibility")

# Omni-MOT ground truth: 0 frame, 1 id, 2-5 ltrb (pixels), 17 integrity, 25-26 view size
OMNI_MIN_COLUMNS = 30
OMNI_VIS = 17
OMNI_VIEW = (25, 26)

TUBE_MAGIC = "tubetrack-tubes"
TUBE_VERSION = 1


def _num(text: str, line: int, column: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise FormatError(f"line {line}: column {column!r} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise FormatError(f"line {line}: column {column!r} is not finite: {text!r}")
    return v


def _int(text: str, line: int, column: str) -> int:
    v = _num(text, line, column)
    if v != int(v):
        raise FormatError(f"line {line}: column {column!r} must be an integer: {text!r}")
    return int(v)


def _is_header(row: Sequence[str]) -> bool:
    try:
        float(row[0])
    except ValueError:
        return True
    return False


def _check_box(left, top, right, bottom, line: int) -> None:
    if right <= left or bottom <= top:
        raise FormatError(f"line {line}: degenerate box (right <= left or bottom <= top)")


def read_ground_truth(
    source, frame_size: tuple[float, float] | None = None, layout: str = "auto"
) -> list[TrackRecord]:
    """Parse a ground-truth CSV.

    ``layout`` is ``"core"`` (frame, id, l, t, r, b, vis, extras ignored),
    ``"omni"`` (Omni-MOT rows) or ``"auto"``, which treats rows with at least
    30 columns as Omni-MOT. Omni-MOT boxes are pixels; they are normalized by
    ``frame_size`` or else by the view size stored in each row.
    """
    if layout not in ("auto", "core", "omni"):
        raise ValueError(f"unknown layout {layout!r}")
    out = []
    for line, row in _rows(source):
        omni = layout == "omni" or (layout == "auto" and len(row) >= OMNI_MIN_COLUMNS)
        need = OMNI_VIS + 1 if omni else len(GT_COLUMNS)
        if len(row) < need:
            raise FormatError(f"line {line}: expected at least {need} columns, got {len(row)}")
        frame = _int(row[0], line, "frame")
        tid = _int(row[1], line, "id")
        l, t, r, b = (_num(row[2 + k], line, GT_COLUMNS[2 + k]) for k in range(4))
        vis = _num(row[OMNI_VIS if omni else 6], line, "visibility")
        _check_box(l, t, r, b, line)
        if not 0.0 <= vis <= 1.0:
            raise FormatError(f"line {line}: visibility {vis} outside [0, 1]")
        if frame < 0:
            raise FormatError(f"line {line}: negative frame index {frame}")
        size = frame_size
        if size is None and omni and len(row) > OMNI_VIEW[1]:
            size = (_num(row[OMNI_VIEW[0]], line, "view width"), _num(row[OMNI_VIEW[1]], line, "view height"))
        if size is not None:
            l, r = l / size[0], r / size[0]
            t, b = t / size[1], b / size[1]
        out.append(TrackRecord(frame, tid, l, t, r, b, vis))
    return out


def write_ground_truth(records: Iterable[TrackRecord], dest, frame_size: tuple[float, float] | None = None) -> None:
    rows = [
        (r.frame, r.track_id, *_scaled(r, frame_size), r.visibility)
        for r in sort_records(records)
    ]
    _write_csv(dest, GT_COLUMNS, rows)


def read_tracks(source, frame_size: tuple[float, float] | None = None) -> list[TrackRecord]:
    """Parse tracker output: frame, id, l, t, r, b, confidence, visibility."""
    out = []
    for line, row in _rows(source):
        if len(row) < len(TRACK_COLUMNS):
            raise FormatError(f"line {line}: expected {len(TRACK_COLUMNS)} columns, got {len(row)}")
        frame = _int(row[0], line, "frame")
        tid = _int(row[1], line, "id")
        l, t, r, b = (_num(row[2 + k], line, TRACK_COLUMNS[2 + k]) for k in range(4))
        conf = _num(row[6], line, "confidence")
        vis = _num(row[7], line, "visibility")
        _check_box(l, t, r, b, line)
        if frame_size is not None:
            l, r = l / frame_size[0], r / frame_size[0]
            t, b = t / frame_size[1], b / frame_size[1]
        out.append(TrackRecord(frame, tid, l, t, r, b, vis, conf))
    return out


def write_tracks(records: Iterable[TrackRecord], dest, frame_size: tuple[float, float] | None = None) -> None:
    rows = [
        (r.frame, r.track_id, *_scaled(r, frame_size), r.confidence, r.visibility)
        for r in sort_records(records)
    ]
    _write_csv(dest, TRACK_COLUMNS, rows)


def _scaled(r: TrackRecord, frame_size) -> tuple[float, float, float, float]:
    if frame_size is None:
        return r.corners
    w, h = frame_size
    return (r.left * w, r.top * h, r.right * w, r.bottom * h)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def _write_csv(dest, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _write_text(dest, buf.getvalue())


def _rows(source):
    text = _read_text(source)
    for n, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        row = [c.strip() for c in row]
        if n == 1 and _is_header(row):
            continue
        yield n, row


def _read_text(source) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text()
    return source.read()


def _write_text(dest, text: str) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    else:
        dest.write(text)


@dataclass(frozen=True)
class TubeHeader:
    """Shape and time basis of a tube file.

    Anchors missing from a window take the background fill: zero motion and
    class/visibility logits of ``+background`` for background/invisible and
    ``-background`` for everything else.
    """

    n_frames: int
    n_classes: int
    n_anchors: int
    time_origin: float
    time_scale: float
    background: float = 10.0

    @property
    def basis(self) -> TimeBasis:
        return TimeBasis(self.n_frames, self.time_origin, self.time_scale)

    @property
    def record_width(self) -> int:
        return 1 + 12 + self.n_classes + 2 * self.n_frames

    def fill(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        m = self.background
        motion = np.zeros((self.n_anchors, 4, 3))
        cls = np.full((self.n_anchors, self.n_classes), -m)
        cls[:, 0] = m
        vis = np.empty((self.n_frames, self.n_anchors, 2))
        vis[..., 0] = m
        vis[..., 1] = -m
        return motion, cls, vis


_HEADER_KEYS = ("n_frames", "n_classes", "n_anchors", "time_origin", "time_scale", "background")


def write_tube_file(
    windows: Sequence[tuple[int, PredictionWindow]], dest, basis: TimeBasis, background: float = 10.0
) -> TubeHeader:
    """Write windows, skipping anchors whose outputs equal the background fill."""
    if windows:
        _, first = windows[0]
        n_anchors, n_classes = first.class_scores.shape
        n_frames = first.vis_scores.shape[0]
    else:
        n_anchors, n_classes, n_frames = 0, 2, basis.n_frames
    if n_frames != basis.n_frames:
        raise FormatError(f"time basis covers {basis.n_frames} frames, windows have {n_frames}")
    header = TubeHeader(n_frames, n_classes, n_anchors, float(basis.origin), float(basis.scale), float(background))
    f_motion, f_cls, f_vis = header.fill()
    lines = [f"{TUBE_MAGIC} {TUBE_VERSION}"]
    for key in _HEADER_KEYS:
        lines.append(f"{key} {_fmt(getattr(header, key))}")
    lines.append(f"windows {len(windows)}")
    for start, pw in windows:
        if pw.class_scores.shape != (n_anchors, n_classes) or pw.vis_scores.shape[0] != n_frames:
            raise FormatError(f"window {start} does not match the first window's shape")
        differs = (
            (pw.motion != f_motion).reshape(n_anchors, -1).any(axis=1)
            | (pw.class_scores != f_cls).any(axis=1)
            | (pw.vis_scores != f_vis).any(axis=(0, 2))
        )
        idx = np.flatnonzero(differs)
        lines.append(f"window {int(start)} {len(idx)}")
        for i in idx:
            vals = [*pw.motion[i].reshape(-1), *pw.class_scores[i], *pw.vis_scores[:, i, :].reshape(-1)]
            lines.append(" ".join([str(int(i))] + [repr(float(v)) for v in vals]))
    _write_text(dest, "\n".join(lines) + "\n")
    return header


class _Lines:
    """Line reader that tracks byte offsets for error messages."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def next(self, what: str) -> tuple[int, list[str]]:
        while True:
            if self.pos >= len(self.data):
                raise FormatError(f"unexpected end of file at byte {self.pos} while reading {what}")
            start = self.pos
            end = self.data.find(b"\n", start)
            if end < 0:
                raise FormatError(f"truncated {what} at byte {start}: missing line terminator")
            self.pos = end + 1
            text = self.data[start:end].decode("ascii", errors="replace").strip()
            if text:
                return start, text.split()

    def at_end(self) -> bool:
        return not self.data[self.pos:].strip()


def read_tube_file(source) -> tuple[TubeHeader, list[tuple[int, PredictionWindow]]]:
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    else:
        data = source.read()
        if isinstance(data, str):
            data = data.encode()
    lines = _Lines(data)
    off, tok = lines.next("header")
    if tok != [TUBE_MAGIC, str(TUBE_VERSION)]:
        raise FormatError(f"byte {off}: not a version {TUBE_VERSION} tube file")
    values = {}
    for key in _HEADER_KEYS:
        off, tok = lines.next(f"header field {key!r}")
        if len(tok) != 2 or tok[0] != key:
            raise FormatError(f"byte {off}: expected header field {key!r}")
        values[key] = _tube_num(tok[1], off, key)
    try:
        header = TubeHeader(
            int(values["n_frames"]), int(values["n_classes"]), int(values["n_anchors"]),
            values["time_origin"], values["time_scale"], values["background"],
        )
        header.basis
    except (ValueError, ArithmeticError) as exc:
        raise FormatError(f"invalid tube file header: {exc}") from None
    if header.n_classes < 2 or header.n_anchors < 0:
        raise FormatError("invalid tube file header: need n_classes >= 2 and n_anchors >= 0")
    off, tok = lines.next("window count")
    if len(tok) != 2 or tok[0] != "windows":
        raise FormatError(f"byte {off}: expected 'windows <count>'")
    n_windows = int(_tube_num(tok[1], off, "windows"))

    windows = []
    width = header.record_width
    nf, nc = header.n_frames, header.n_classes
    last_start = None
    for _ in range(n_windows):
        off, tok = lines.next("window line")
        if len(tok) != 3 or tok[0] != "window":
            raise FormatError(f"byte {off}: expected 'window <start> <count>'")
        start = int(_tube_num(tok[1], off, "window start"))
        count = int(_tube_num(tok[2], off, "record count"))
        if last_start is not None and start <= last_start:
            raise FormatError(f"byte {off}: window starts must increase")
        last_start = start
        motion, cls, vis = header.fill()
        seen = set()
        for _ in range(count):
            off, tok = lines.next(f"record of window {start}")
            if len(tok) != width:
                raise FormatError(f"byte {off}: record has {len(tok)} fields, header implies {width}")
            i = int(_tube_num(tok[0], off, "anchor index"))
            if not 0 <= i < header.n_anchors or i in seen:
                raise FormatError(f"byte {off}: bad or repeated anchor index {i}")
            seen.add(i)
            vals = np.array([_tube_num(t, off, "value") for t in tok[1:]])
            motion[i] = vals[:12].reshape(4, 3)
            cls[i] = vals[12:12 + nc]
            vis[:, i, :] = vals[12 + nc:].reshape(nf, 2)
        windows.append((start, PredictionWindow(motion, cls, vis)))
    if not lines.at_end():
        raise FormatError(f"byte {lines.pos}: unexpected content after the last window")
    return header, windows


def _tube_num(text: str, offset: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise FormatError(f"byte {offset}: {what} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise FormatError(f"byte {offset}: {what} is not finite")
    return v


def write_eval_result(result: EvalResult, dest) -> None:
    _write_text(dest, json.dumps(result.as_dict(), sort_keys=True, indent=2) + "\n")


def read_eval_result(source) -> EvalResult:
    try:
        data = json.loads(_read_text(source))
        return EvalResult(**data)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"invalid eval result file: {exc}") from None
