"""Hosting-platform API access: installation tokens and label assignment."""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Protocol, Sequence

import httpx
import jwt

log = logging.getLogger(__name__)

DEFAULT_API_URL = "https://api.github.com"
DEFAULT_TOKEN_PATH = "/app/installations/{installation_id}/access_tokens"
DEFAULT_LABELS_PATH = "/repos/{repo_full_name}/issues/{issue_number}/labels"


class PlatformError(RuntimeError):
    def __init__(self, message: str, status: int | None = None, retry_after: float | None = None):
        super().__init__(message)
        self.status = status
        self.retry_after = retry_after

    @property
    def retryable(self) -> bool:
        return self.status is None or self.status == 429 or self.status >= 500


@dataclass(frozen=True)
class AccessToken:
    token: str = field(repr=False)
    expires_at: datetime

    def expired(self, now: datetime | None = None, skew: timedelta = timedelta(seconds=60)) -> bool:
        now = now or datetime.now(timezone.utc)
        return now + skew >= self.expires_at


class PlatformClient(Protocol):
    def installation_token(self, installation_id: int) -> AccessToken: ...

    def add_labels(self, repo_full_name: str, issue_number: int, labels: Sequence[str],
                   token: AccessToken) -> None: ...


class GitHubAppClient:
    """Signed app JWT -> installation token -> ``POST .../labels``.

    Endpoint paths are format strings so tests can point at a local server.
    Installation tokens are cached until a minute before they expire.
    """

    def __init__(
        self,
        app_id: str,
        private_key: str,
        api_url: str = DEFAULT_API_URL,
        token_path: str = DEFAULT_TOKEN_PATH,
        labels_path: str = DEFAULT_LABELS_PATH,
        http: httpx.Client | None = None,
        timeout: float = 10.0,
    ):
        self.app_id = app_id
        self._private_key = private_key
        self.token_path = token_path
        self.labels_path = labels_path
        self.http = http if http is not None else httpx.Client(base_url=api_url, timeout=timeout)
        self._tokens: dict[int, AccessToken] = {}
        self._lock = threading.Lock()

    def app_jwt(self) -> str:
        now = int(time.time())
        claims = {"iat": now - 60, "exp": now + 540, "iss": str(self.app_id)}
        return jwt.encode(claims, self._private_key, algorithm="RS256")

    def _post(self, path: str, auth: str, json_body: dict | None = None) -> httpx.Response:
        headers = {"Authorization": auth, "Accept": "application/vnd.github+json",
                   "X-GitHub-Api-Version": "2022-11-28"}
        try:
            resp = self.http.post(path, headers=headers, json=json_body)
        except httpx.HTTPError as exc:
            raise PlatformError(f"POST {path} failed: {type(exc).__name__}") from exc
        if resp.status_code >= 400:
            retry_after = resp.headers.get("Retry-After")
            raise PlatformError(f"POST {path} returned {resp.status_code}", resp.status_code,
                                float(retry_after) if retry_after and retry_after.isdigit() else None)
        return resp

    def installation_token(self, installation_id: int) -> AccessToken:
        with self._lock:
            cached = self._tokens.get(installation_id)
            if cached is not None and not cached.expired():
                return cached
        path = self.token_path.format(installation_id=installation_id)
        resp = self._post(path, f"Bearer {self.app_jwt()}")
        try:
            data = resp.json()
            expires = datetime.fromisoformat(data["expires_at"].replace("Z", "+00:00"))
            token = AccessToken(data["token"], expires)
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise PlatformError(f"unexpected token response from {path}", resp.status_code) from exc
        if token.expired():
            raise PlatformError(f"token for installation {installation_id} is already expired")
        with self._lock:
            self._tokens[installation_id] = token
        return token

    def add_labels(self, repo_full_name: str, issue_number: int, labels: Sequence[str],
                   token: AccessToken) -> None:
        if token.expired():
            raise PlatformError("refusing to use an expired installation token")
        path = self.labels_path.format(repo_full_name=repo_full_name, issue_number=issue_number)
        self._post(path, f"token {token.token}", {"labels": list(labels)})


@dataclass
class RecordedCall:
    method: str
    path: str
    json: dict | None = None


class MockPlatformClient:
    """In-memory platform recording every call; can be told to fail."""

    def __init__(self, fail_token: bool = False, fail_labels: bool = False,
                 fail_status: int = 502, token_ttl: timedelta = timedelta(hours=1)):
        self.calls: list[RecordedCall] = []
        self.fail_token = fail_token
        self.fail_labels = fail_labels
        self.fail_status = fail_status
        self.token_ttl = token_ttl
        self._lock = threading.Lock()
        self._issued = 0

    def installation_token(self, installation_id: int) -> AccessToken:
        path = DEFAULT_TOKEN_PATH.format(installation_id=installation_id)
        with self._lock:
            self.calls.append(RecordedCall("POST", path))
            self._issued += 1
            n = self._issued
        if self.fail_token:
            raise PlatformError(f"POST {path} returned {self.fail_status}", self.fail_status)
        return AccessToken(f"mock-token-{installation_id}-{n}", datetime.now(timezone.utc) + self.token_ttl)

    def add_labels(self, repo_full_name: str, issue_number: int, labels: Sequence[str],
                   token: AccessToken) -> None:
        if token.expired():
            raise PlatformError("refusing to use an expired installation token")
        path = DEFAULT_LABELS_PATH.format(repo_full_name=repo_full_name, issue_number=issue_number)
        with self._lock:
            self.calls.append(RecordedCall("POST", path, {"labels": list(labels)}))
        if self.fail_labels:
            raise PlatformError(f"POST {path} returned {self.fail_status}", self.fail_status)

    def label_calls(self) -> list[RecordedCall]:
        with self._lock:
            return [c for c in self.calls if c.path.endswith("/labels")]
