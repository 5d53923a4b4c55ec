from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass
from typing import Any, Mapping

EVENT_HEADER = "X-GitHub-Event"
DELIVERY_HEADER = "X-GitHub-Delivery"
SIGNATURE_HEADER = "X-Hub-Signature-256"


class MalformedPayload(ValueError):
    pass


@dataclass(frozen=True)
class WebhookEvent:
    delivery_id: str
    event_kind: str
    action: str
    repo_full_name: str
    issue_number: int
    title: str
    body: str
    installation_id: int

    def __post_init__(self) -> None:
        if self.issue_number < 1:
            raise ValueError("issue_number must be >= 1")
        if self.repo_full_name.count("/") != 1 or "" in self.repo_full_name.split("/"):
            raise ValueError(f"repo_full_name must look like owner/name, got {self.repo_full_name!r}")


@dataclass(frozen=True)
class Ignore:
    """Acknowledged delivery that needs no action."""

    delivery_id: str
    reason: str


def header(headers: Mapping[str, str], name: str) -> str | None:
    lowered = name.lower()
    for key, value in headers.items():
        if key.lower() == lowered:
            return value
    return None


def sign(raw_body: bytes, secret: bytes) -> str:
    return "sha256=" + hmac.new(secret, raw_body, hashlib.sha256).hexdigest()


def verify_signature(raw_body: bytes, signature_header: str | None, secret: bytes) -> bool:
    if not signature_header or not signature_header.startswith("sha256="):
        return False
    digest = signature_header[len("sha256="):]
    if len(digest) != 64 or any(c not in "0123456789abcdef" for c in digest):
        return False
    return hmac.compare_digest(sign(raw_body, secret), signature_header)


def _require(obj: Any, *path: str) -> Any:
    cur = obj
    for key in path:
        if not isinstance(cur, dict) or key not in cur:
            raise MalformedPayload(f"missing field {'.'.join(path)}")
        cur = cur[key]
    return cur


def parse_event(raw_body: bytes, headers: Mapping[str, str]) -> WebhookEvent | Ignore:
    """Parse a verified delivery into an event, or an ``Ignore`` for other kinds/actions."""
    delivery_id = header(headers, DELIVERY_HEADER) or ""
    kind = header(headers, EVENT_HEADER) or ""
    try:
        payload = json.loads(raw_body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPayload(f"body is not JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedPayload("body must be a JSON object")
    if kind != "issues":
        return Ignore(delivery_id, f"event {kind or '<none>'} is not handled")
    action = payload.get("action")
    if action != "opened":
        return Ignore(delivery_id, f"issues action {action!r} is not handled")

    title = _require(payload, "issue", "title")
    if not isinstance(title, str):
        raise MalformedPayload("issue.title must be a string")
    body = payload["issue"].get("body") or ""
    if not isinstance(body, str):
        raise MalformedPayload("issue.body must be a string or null")
    number = _require(payload, "issue", "number")
    repo = _require(payload, "repository", "full_name")
    installation = _require(payload, "installation", "id")
    if isinstance(number, bool) or not isinstance(number, int) or isinstance(installation, bool) \
            or not isinstance(installation, int) or not isinstance(repo, str):
        raise MalformedPayload("issue.number, installation.id must be integers and repository.full_name a string")
    try:
        return WebhookEvent(delivery_id, kind, action, repo, number, title, body, installation)
    except ValueError as exc:
        raise MalformedPayload(str(exc)) from exc
