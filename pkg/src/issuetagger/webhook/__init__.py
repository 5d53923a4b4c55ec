"""Auto-labeling webhook: verify delivery, classify the new issue, add the label."""

from .events import Ignore, MalformedPayload, WebhookEvent, parse_event, sign, verify_signature
from .platform import AccessToken, GitHubAppClient, MockPlatformClient, PlatformClient, PlatformError
from .server import make_server, serve
from .service import DeliveryCache, LabelAssignment, Response, ServiceSettings, WebhookService, handle

__all__ = [
    "AccessToken", "DeliveryCache", "GitHubAppClient", "Ignore", "LabelAssignment", "MalformedPayload",
    "MockPlatformClient", "PlatformClient", "PlatformError", "Response", "ServiceSettings",
    "WebhookEvent", "WebhookService", "handle", "make_server", "parse_event", "serve", "sign",
    "verify_signature",
]
