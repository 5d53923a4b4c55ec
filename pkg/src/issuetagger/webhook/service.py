"""Delivery handling: verify, parse, deduplicate, classify, label."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Mapping

from ..classifier import Model, fingerprint, loads, predict_text
from ..text import RawIssue, concatenate
from .events import (
    DELIVERY_HEADER,
    SIGNATURE_HEADER,
    Ignore,
    MalformedPayload,
    WebhookEvent,
    header,
    parse_event,
    verify_signature,
)
from .platform import (
    DEFAULT_API_URL,
    DEFAULT_LABELS_PATH,
    DEFAULT_TOKEN_PATH,
    GitHubAppClient,
    MockPlatformClient,
    PlatformClient,
    PlatformError,
)

log = logging.getLogger(__name__)

Outcome = Literal["applied", "skipped_low_confidence", "api_error"]
DEFAULT_RETRY_DELAY = 60.0
DEDUP_CAPACITY = 10_000


@dataclass
class LabelAssignment:
    repo_full_name: str
    issue_number: int
    label: str
    outcome: Outcome
    score: float
    error: str | None = None
    retryable: bool = False
    retry_after: float | None = None
    attempts: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


def handle(event: WebhookEvent, model: Model, api: PlatformClient,
           confidence_floor: float = 0.0) -> LabelAssignment:
    """Classify the issue and add the predicted label through ``api``.

    Never raises on platform failures: they come back as ``api_error`` with
    retry metadata.
    """
    prediction = predict_text(concatenate(RawIssue(event.title, event.body)), model)
    label, score = prediction.argmax_label, prediction.top_score
    base = dict(repo_full_name=event.repo_full_name, issue_number=event.issue_number,
                label=label, score=score)
    if score < confidence_floor:
        return LabelAssignment(outcome="skipped_low_confidence", **base)
    try:
        token = api.installation_token(event.installation_id)
        api.add_labels(event.repo_full_name, event.issue_number, [label], token)
    except PlatformError as exc:
        return LabelAssignment(outcome="api_error", error=str(exc), retryable=exc.retryable,
                               retry_after=exc.retry_after or DEFAULT_RETRY_DELAY, **base)
    return LabelAssignment(outcome="applied", **base)


class DeliveryCache:
    """Bounded LRU of seen delivery ids with atomic check-and-insert."""

    def __init__(self, capacity: int = DEDUP_CAPACITY):
        self.capacity = capacity
        self._seen: OrderedDict[str, None] = OrderedDict()
        self._lock = threading.Lock()

    def first_time(self, delivery_id: str) -> bool:
        with self._lock:
            if delivery_id in self._seen:
                self._seen.move_to_end(delivery_id)
                return False
            self._seen[delivery_id] = None
            if len(self._seen) > self.capacity:
                self._seen.popitem(last=False)
            return True

    def __len__(self) -> int:
        return len(self._seen)


@dataclass
class Response:
    status: int
    body: dict = field(default_factory=dict)

    def encode(self) -> bytes:
        return json.dumps(self.body, sort_keys=True).encode("utf-8")


@dataclass(frozen=True)
class ServiceSettings:
    webhook_secret: bytes = field(repr=False)
    model_path: str | None = None
    confidence_floor: float = 0.0
    port: int = 8080
    host: str = "0.0.0.0"
    app_id: str | None = None
    private_key: str | None = field(default=None, repr=False)
    api_url: str = DEFAULT_API_URL
    token_path: str = DEFAULT_TOKEN_PATH
    labels_path: str = DEFAULT_LABELS_PATH
    dry_run: bool = False

    PREFIX = "ISSUETAGGER_"

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> "ServiceSettings":
        env = os.environ if environ is None else environ
        p = cls.PREFIX
        secret = env.get(p + "WEBHOOK_SECRET")
        if not secret:
            raise ValueError(f"{p}WEBHOOK_SECRET is not set")
        key = env.get(p + "PRIVATE_KEY")
        key_path = env.get(p + "PRIVATE_KEY_PATH")
        if not key and key_path:
            key = Path(key_path).read_text()
        return cls(
            webhook_secret=secret.encode(),
            model_path=env.get(p + "MODEL_PATH"),
            confidence_floor=float(env.get(p + "CONFIDENCE_FLOOR", "0.0")),
            port=int(env.get(p + "PORT", "8080")),
            host=env.get(p + "HOST", "0.0.0.0"),
            app_id=env.get(p + "APP_ID"),
            private_key=key,
            api_url=env.get(p + "API_URL", DEFAULT_API_URL),
            token_path=env.get(p + "TOKEN_PATH", DEFAULT_TOKEN_PATH),
            labels_path=env.get(p + "LABELS_PATH", DEFAULT_LABELS_PATH),
            dry_run=env.get(p + "DRY_RUN", "").lower() in ("1", "true", "yes"),
        )

    def platform_client(self) -> PlatformClient:
        if self.dry_run:
            return MockPlatformClient()
        if not self.app_id or not self.private_key:
            raise ValueError("app credentials missing: set ISSUETAGGER_APP_ID and "
                             "ISSUETAGGER_PRIVATE_KEY (or _PRIVATE_KEY_PATH), or ISSUETAGGER_DRY_RUN=1")
        return GitHubAppClient(self.app_id, self.private_key, self.api_url,
                               self.token_path, self.labels_path)


class WebhookService:
    """Framework-independent request handler shared by all server threads.

    The model is read-only after construction; the delivery cache and the
    retry queue are the only mutable shared state.
    """

    def __init__(self, model: Model, api: PlatformClient, secret: bytes,
                 confidence_floor: float = 0.0, model_fingerprint: str | None = None,
                 dedup_capacity: int = DEDUP_CAPACITY):
        self.model = model
        self.api = api
        self._secret = secret
        self.confidence_floor = confidence_floor
        self.model_fingerprint = model_fingerprint or fingerprint(model)
        self.deliveries = DeliveryCache(dedup_capacity)
        self.started = time.monotonic()
        self._retry_lock = threading.Lock()
        self.pending_retries: list[tuple[float, WebhookEvent, LabelAssignment]] = []

    @classmethod
    def from_settings(cls, settings: ServiceSettings, api: PlatformClient | None = None) -> "WebhookService":
        if not settings.model_path:
            raise ValueError("ISSUETAGGER_MODEL_PATH is not set")
        data = Path(settings.model_path).read_bytes()
        return cls(loads(data), api or settings.platform_client(), settings.webhook_secret,
                   settings.confidence_floor, hashlib.sha256(data).hexdigest())

    def health(self) -> Response:
        return Response(200, {"status": "ok", "model_fingerprint": self.model_fingerprint,
                              "labels": list(self.model.labels),
                              "uptime_seconds": round(time.monotonic() - self.started, 3)})

    def handle_request(self, method: str, path: str, headers: Mapping[str, str], body: bytes) -> Response:
        route = path.split("?", 1)[0]
        if route == "/healthz":
            if method != "GET":
                return Response(405, {"error": "method not allowed"})
            return self.health()
        if route != "/webhook":
            return Response(404, {"error": "not found"})
        if method != "POST":
            return Response(405, {"error": "method not allowed"})
        return self.deliver(headers, body)

    def deliver(self, headers: Mapping[str, str], body: bytes) -> Response:
        delivery = header(headers, DELIVERY_HEADER) or ""
        if not verify_signature(body, header(headers, SIGNATURE_HEADER), self._secret):
            log.warning("delivery %s rejected: bad signature", delivery or "<none>")
            return Response(401, {"error": "invalid signature"})
        try:
            event = parse_event(body, headers)
        except MalformedPayload as exc:
            log.warning("delivery %s rejected: %s", delivery, exc)
            return Response(400, {"error": f"malformed payload: {exc}"})
        if isinstance(event, Ignore):
            log.info("delivery %s ignored: %s", delivery, event.reason)
            return Response(202, {"status": "ignored", "reason": event.reason})
        if not self.deliveries.first_time(event.delivery_id):
            log.info("delivery %s is a duplicate", event.delivery_id)
            return Response(200, {"status": "duplicate"})
        assignment = handle(event, self.model, self.api, self.confidence_floor)
        self._record(event, assignment)
        # api errors still get a 2xx: redelivery is driven by retry metadata, not status codes
        return Response(200, {"status": assignment.outcome, "assignment": assignment.to_dict()})

    def _record(self, event: WebhookEvent, assignment: LabelAssignment) -> None:
        log.info("delivery %s: %s#%d -> %s (%.3f) %s", event.delivery_id, event.repo_full_name,
                 event.issue_number, assignment.label, assignment.score, assignment.outcome)
        if assignment.outcome == "api_error":
            log.warning("delivery %s: label call failed: %s", event.delivery_id, assignment.error)
            if assignment.retryable:
                due = time.monotonic() + (assignment.retry_after or DEFAULT_RETRY_DELAY)
                with self._retry_lock:
                    self.pending_retries.append((due, event, assignment))

    def retry_due(self, now: float | None = None, max_attempts: int = 5) -> list[LabelAssignment]:
        """Re-run failed assignments whose retry time has come."""
        now = time.monotonic() if now is None else now
        with self._retry_lock:
            due = [r for r in self.pending_retries if r[0] <= now]
            self.pending_retries = [r for r in self.pending_retries if r[0] > now]
        results = []
        for _, event, previous in due:
            result = handle(event, self.model, self.api, self.confidence_floor)
            result.attempts = previous.attempts + 1
            if result.outcome == "api_error" and result.attempts >= max_attempts:
                result.retryable = False
            self._record(event, result)
            results.append(result)
        return results
