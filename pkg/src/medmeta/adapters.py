"""Metric registry and the external-adapter wire protocol.

A metric handle is either a NativeMetric wrapping an in-process scorer
or an AdapterSession speaking line-delimited JSON to a subprocess:

    harness -> adapter   {"type": "hello", "protocol": 1}
                         {"type": "score", "id": N, "reference": S, "candidate": S}
                         {"type": "shutdown"}
    adapter -> harness   {"type": "ready", "name": S, "range": [lo, hi]}
                         {"type": "score", "id": N, "value": X}
                         {"type": "error", "id": N, "message": S}

Unknown fields are ignored; an unknown "type" is a protocol violation.
Request ids are strictly increasing per session, and responses may
arrive in any order: results are re-matched by id and returned in
request order.  Stdin writes go through a dedicated thread and stdout
reads through a queue-fed thread, so a stalled or dead adapter can
never block the harness past its timeouts.
"""

from __future__ import annotations

import enum
import json
import math
import queue
import subprocess
import threading
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .corpus import Significance
from .metrics import MetricScore

PROTOCOL_VERSION = 1
HANDSHAKE_TIMEOUT = 10.0
SCORE_TIMEOUT = 60.0

NATIVE_TEXT_METRICS = ("bleu", "rouge_l", "meteor")
NATIVE_LABEL_METRICS = ("chexpert_f1", "graph_f1")
ORACLE_METRIC = "oracle"
CONSTANT_METRIC = "constant"


class AdapterError(Exception):
    pass


class SpawnFailed(AdapterError):
    pass


class HandshakeTimeout(AdapterError):
    pass


class ProtocolViolation(AdapterError):
    pass


class AdapterDied(AdapterError):
    """Adapter process ended with requests still pending."""

    def __init__(self, message: str, partial_results: list[MetricScore]):
        super().__init__(message)
        self.partial_results = partial_results


class ScoreTimeout(AdapterError):
    def __init__(self, pair_id: str):
        super().__init__(f"no response for pair {pair_id!r} within the score timeout")
        self.pair_id = pair_id


class AdapterReportedError(AdapterError):
    """The adapter answered a request with an explicit error message."""

    def __init__(self, pair_id: str, message: str):
        super().__init__(f"adapter error for pair {pair_id!r}: {message}")
        self.pair_id = pair_id


class RegistryError(Exception):
    pass


class MetricKind(enum.Enum):
    NATIVE = "native"
    EXTERNAL = "external"


class SessionState(enum.Enum):
    IDLE = "idle"
    READY = "ready"
    FAILED = "failed"
    CLOSED = "closed"


@dataclass(frozen=True)
class MetricDescriptor:
    """Registry entry for one metric; command only applies to external."""

    metric_id: str
    kind: MetricKind
    command: tuple[str, ...] = ()
    declared_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.kind is MetricKind.EXTERNAL and not self.command:
            raise RegistryError(f"external metric {self.metric_id!r} needs a command")
        lo, hi = self.declared_range
        if not (0.0 <= lo < hi <= 1.0):
            raise RegistryError(
                f"metric {self.metric_id!r} range [{lo}, {hi}] must nest inside [0, 1]"
            )


@dataclass(frozen=True)
class ScoreWarning:
    metric_id: str
    pair_id: str
    message: str


@dataclass(frozen=True)
class NativeMetric:
    """In-process scorer; the callable sees (pair_id, reference, candidate)."""

    metric_id: str
    fn: Callable[[str, str, str], float]

    def score_batch(self, pairs: Sequence[tuple[str, str, str]]) -> list[MetricScore]:
        return [
            MetricScore(metric_id=self.metric_id, pair_id=pair_id, value=self.fn(pair_id, ref, cand))
            for pair_id, ref, cand in pairs
        ]


def _reader_loop(stream, inbox: queue.Queue):
    try:
        for line in stream:
            inbox.put(("line", line))
    except (OSError, ValueError):
        pass
    inbox.put(("eof", None))


def _writer_loop(stream, outbox: queue.Queue):
    while True:
        item = outbox.get()
        if item is None:
            break
        try:
            stream.write(item)
            stream.flush()
        except (OSError, ValueError, BrokenPipeError):
            break
    try:
        stream.close()
    except (OSError, ValueError):
        pass


class AdapterSession:
    """One live external-metric subprocess.  Use open_session() to create."""

    def __init__(self, descriptor: MetricDescriptor, proc, score_timeout: float):
        self.descriptor = descriptor
        self.state = SessionState.IDLE
        self.warnings: list[ScoreWarning] = []
        self.remote_name: str | None = None
        self.remote_range: tuple[float, float] | None = None
        self._proc = proc
        self._score_timeout = score_timeout
        self._next_id = 1
        self._inbox: queue.Queue = queue.Queue()
        self._outbox: queue.Queue = queue.Queue()
        self._reader = threading.Thread(
            target=_reader_loop, args=(proc.stdout, self._inbox), daemon=True
        )
        self._writer = threading.Thread(
            target=_writer_loop, args=(proc.stdin, self._outbox), daemon=True
        )
        self._reader.start()
        self._writer.start()

    def _send(self, message: dict):
        self._outbox.put(json.dumps(message) + "\n")

    def _receive(self, timeout: float) -> dict | None:
        """Next parsed message, or None at end of stream."""
        try:
            kind, payload = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError
        if kind == "eof":
            return None
        try:
            message = json.loads(payload)
        except json.JSONDecodeError:
            raise ProtocolViolation(f"unparseable adapter line: {payload!r:.120}")
        if not isinstance(message, dict):
            raise ProtocolViolation(f"adapter line is not an object: {payload!r:.120}")
        return message

    def _abandon(self, state: SessionState = SessionState.FAILED):
        self.state = state
        self._outbox.put(None)
        if self._proc.poll() is None:
            self._proc.kill()
        self._proc.wait()
        self._reader.join(timeout=5)
        self._writer.join(timeout=5)

    def _handshake(self, timeout: float):
        self._send({"type": "hello", "protocol": PROTOCOL_VERSION})
        try:
            message = self._receive(timeout)
        except TimeoutError:
            self._abandon()
            raise HandshakeTimeout(f"no ready from {self.descriptor.metric_id!r} within {timeout}s")
        except ProtocolViolation:
            self._abandon()
            raise
        if message is None:
            self._abandon()
            raise SpawnFailed(
                f"adapter {self.descriptor.metric_id!r} exited before completing the handshake"
            )
        if message.get("type") != "ready":
            self._abandon()
            raise ProtocolViolation(f"expected ready, got {message.get('type')!r}")
        name = message.get("name")
        rng = message.get("range")
        if (
            not isinstance(name, str)
            or not isinstance(rng, (list, tuple))
            or len(rng) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in rng)
            or not rng[0] < rng[1]
        ):
            self._abandon()
            raise ProtocolViolation(f"malformed ready: {message!r}")
        self.remote_name = name
        self.remote_range = (float(rng[0]), float(rng[1]))
        self.state = SessionState.READY

    def score_batch(self, pairs: Sequence[tuple[str, str, str]]) -> list[MetricScore]:
        """One score per pair, in input order, whatever order replies arrive.

        Raises ScoreTimeout when the adapter goes quiet, AdapterDied
        (carrying partial results) when it exits mid-batch.
        """
        if self.state is not SessionState.READY:
            raise AdapterError(f"session is {self.state.value}, not ready")
        order = [pair_id for pair_id, _, _ in pairs]
        if len(set(order)) != len(order):
            raise ValueError("duplicate pair_ids in batch")
        pending: dict[int, str] = {}
        for pair_id, reference, candidate in pairs:
            request_id = self._next_id
            self._next_id += 1
            pending[request_id] = pair_id
            self._send(
                {"type": "score", "id": request_id, "reference": reference, "candidate": candidate}
            )
        values: dict[str, float] = {}

        def partial() -> list[MetricScore]:
            return [
                MetricScore(metric_id=self.descriptor.metric_id, pair_id=p, value=values[p])
                for p in order
                if p in values
            ]

        while pending:
            oldest = pending[min(pending)]
            try:
                message = self._receive(self._score_timeout)
            except TimeoutError:
                self._abandon()
                raise ScoreTimeout(oldest)
            except ProtocolViolation:
                self._abandon()
                raise
            if message is None:
                self._abandon()
                raise AdapterDied(
                    f"adapter exited with {len(pending)} request(s) outstanding", partial()
                )
            mtype = message.get("type")
            if mtype == "score":
                request_id = message.get("id")
                if request_id not in pending:
                    self._abandon()
                    raise ProtocolViolation(f"score for unknown or settled id {request_id!r}")
                value = message.get("value")
                if (
                    not isinstance(value, (int, float))
                    or isinstance(value, bool)
                    or not math.isfinite(value)
                ):
                    self._abandon()
                    raise ProtocolViolation(f"non-numeric score value {value!r}")
                pair_id = pending.pop(request_id)
                lo, hi = self.descriptor.declared_range
                clamped = min(max(float(value), lo), hi)
                if clamped != value:
                    self.warnings.append(
                        ScoreWarning(
                            metric_id=self.descriptor.metric_id,
                            pair_id=pair_id,
                            message=f"value {value} outside [{lo}, {hi}], clamped to {clamped}",
                        )
                    )
                values[pair_id] = clamped
            elif mtype == "error":
                request_id = message.get("id")
                pair_id = pending.get(request_id, oldest)
                self._abandon()
                raise AdapterReportedError(pair_id, str(message.get("message", "")))
            else:
                self._abandon()
                raise ProtocolViolation(f"unknown message type {mtype!r}")
        return [
            MetricScore(metric_id=self.descriptor.metric_id, pair_id=p, value=values[p])
            for p in order
        ]

    def close(self):
        """Shut the adapter down; safe to call repeatedly."""
        if self.state is SessionState.CLOSED:
            return
        if self.state is SessionState.READY:
            self._send({"type": "shutdown"})
        self._outbox.put(None)
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        self._reader.join(timeout=5)
        self._writer.join(timeout=5)
        self.state = SessionState.CLOSED

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_session(
    descriptor: MetricDescriptor,
    *,
    handshake_timeout: float = HANDSHAKE_TIMEOUT,
    score_timeout: float = SCORE_TIMEOUT,
) -> AdapterSession:
    """Spawn an external metric and complete the hello/ready handshake."""
    if descriptor.kind is not MetricKind.EXTERNAL:
        raise ValueError(f"{descriptor.metric_id!r} is not an external metric")
    try:
        proc = subprocess.Popen(
            list(descriptor.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
    except OSError as exc:
        raise SpawnFailed(f"cannot spawn {descriptor.command!r}: {exc}")
    session = AdapterSession(descriptor, proc, score_timeout)
    session._handshake(handshake_timeout)
    return session


def score_batch(
    handle: NativeMetric | AdapterSession, pairs: Sequence[tuple[str, str, str]]
) -> list[MetricScore]:
    """Score (pair_id, reference, candidate) triples with any metric handle."""
    return handle.score_batch(list(pairs))


# ---------------------------------------------------------------------------
# Registry

def load_metrics_config(path: str) -> dict[str, MetricDescriptor]:
    """Parse a metrics.json registry file of external metric commands."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise RegistryError(f"cannot read metrics config {path!r}: {exc}")
    if not isinstance(raw, dict) or not isinstance(raw.get("metrics"), list):
        raise RegistryError(f"{path!r} must contain a top-level 'metrics' list")
    out: dict[str, MetricDescriptor] = {}
    for entry in raw["metrics"]:
        if not isinstance(entry, dict):
            raise RegistryError(f"non-object metric entry: {entry!r}")
        metric_id = entry.get("id")
        if not isinstance(metric_id, str) or not metric_id:
            raise RegistryError(f"metric entry missing id: {entry!r}")
        if metric_id in out:
            raise RegistryError(f"duplicate metric id {metric_id!r}")
        if _is_builtin_id(metric_id):
            raise RegistryError(f"metric id {metric_id!r} shadows a built-in metric")
        if entry.get("kind") != "external":
            raise RegistryError(f"metric {metric_id!r} kind must be 'external'")
        command = entry.get("command")
        if (
            not isinstance(command, list)
            or not command
            or not all(isinstance(part, str) for part in command)
        ):
            raise RegistryError(f"metric {metric_id!r} command must be a non-empty string list")
        rng = entry.get("range", [0.0, 1.0])
        if (
            not isinstance(rng, list)
            or len(rng) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in rng)
        ):
            raise RegistryError(f"metric {metric_id!r} range must be [lo, hi]")
        out[metric_id] = MetricDescriptor(
            metric_id=metric_id,
            kind=MetricKind.EXTERNAL,
            command=tuple(command),
            declared_range=(float(rng[0]), float(rng[1])),
        )
    return out


def _is_builtin_id(metric_id: str) -> bool:
    return (
        metric_id in NATIVE_TEXT_METRICS
        or metric_id in NATIVE_LABEL_METRICS
        or metric_id == ORACLE_METRIC
        or metric_id == CONSTANT_METRIC
        or metric_id.startswith(CONSTANT_METRIC + ":")
    )


def resolve_metric(
    metric_id: str,
    *,
    gazetteer=None,
    significance_by_pair: Mapping[str, Significance] | None = None,
    config: Mapping[str, MetricDescriptor] | None = None,
) -> NativeMetric | MetricDescriptor:
    """Metric id -> native handle or external descriptor.

    Diagnostics: "oracle" scores 0 on significant pairs and 1 on
    insignificant ones (needs significance_by_pair); "constant:v"
    scores v everywhere.
    """
    from . import metrics as native

    if metric_id in NATIVE_TEXT_METRICS:
        fn = getattr(native, metric_id)
        return NativeMetric(metric_id, lambda pid, ref, cand, _fn=fn: _fn(ref, cand))
    if metric_id in NATIVE_LABEL_METRICS:
        if gazetteer is None:
            raise RegistryError(f"metric {metric_id!r} needs a gazetteer")
        if metric_id == "chexpert_f1":
            return NativeMetric(
                metric_id, lambda pid, ref, cand: native.chexpert_f1(ref, cand, gazetteer)
            )
        return NativeMetric(
            metric_id, lambda pid, ref, cand: native.graph_similarity(ref, cand, gazetteer)
        )
    if metric_id == ORACLE_METRIC:
        if significance_by_pair is None:
            raise RegistryError("the oracle diagnostic needs a pair dataset for significance")

        def oracle(pair_id: str, reference: str, candidate: str) -> float:
            significance = significance_by_pair.get(pair_id)
            if significance is None:
                raise RegistryError(f"oracle has no significance for pair {pair_id!r}")
            return 0.0 if significance is Significance.SIGNIFICANT else 1.0

        return NativeMetric(metric_id, oracle)
    if metric_id == CONSTANT_METRIC or metric_id.startswith(CONSTANT_METRIC + ":"):
        raw = metric_id.partition(":")[2]
        try:
            value = float(raw) if raw else 0.5
        except ValueError:
            raise RegistryError(f"bad constant value in {metric_id!r}")
        if not 0.0 <= value <= 1.0:
            raise RegistryError(f"constant value {value} outside [0, 1]")
        return NativeMetric(metric_id, lambda pid, ref, cand: value)
    if config and metric_id in config:
        return config[metric_id]
    raise RegistryError(f"unknown metric id {metric_id!r}")
