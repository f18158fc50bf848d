"""Client-observable request logs and cookie-sync detection.

The simulator emits one request record per tracker contact, carrying only
that organization's own user token. Client-side sharing edges additionally
emit a sync request that embeds the tracker's token in a query parameter of
a request to the receiving organization; server-side edges leave no trace
in the log by construction. The detector recovers exactly those planted
client-side pairs by watching for one organization's identifier inside
requests to another.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator
from urllib.parse import parse_qsl, urlsplit

import numpy as np

from .ecosystem import org_domain

TOKEN_LENGTH = 16
_TOKEN_ALPHABET = string.ascii_lowercase + string.ascii_uppercase + string.digits


@dataclass(frozen=True, slots=True)
class RequestRecord:
    log_ref: str
    timestamp_ms: int
    url: str
    referrer: str
    to_org: str
    from_org: str


def make_tokens(
    rng: np.random.Generator, org_names: Iterable[str], length: int = TOKEN_LENGTH
) -> dict[str, str]:
    """Per-persona user identifiers, one per organization.

    Tokens are fixed-length alphanumeric strings, so no token can be a
    proper substring of another; uniqueness within the persona is enforced
    by re-drawing collisions.
    """
    names = list(org_names)
    alphabet = np.frombuffer(_TOKEN_ALPHABET.encode("ascii"), dtype=np.uint8)
    block = alphabet[rng.integers(0, len(alphabet), size=(len(names), length))]
    tokens: dict[str, str] = {}
    used: set[str] = set()
    for org, row in zip(names, block):
        token = row.tobytes().decode("ascii")
        while token in used:
            redraw = alphabet[rng.integers(0, len(alphabet), size=length)]
            token = redraw.tobytes().decode("ascii")
        used.add(token)
        tokens[org] = token
    return tokens


def tracker_contact(
    log_ref: str, ts: int, tracker: str, token: str, site_domain: str
) -> RequestRecord:
    """A tracker beacon fired from a page; carries only the tracker's own token."""
    return RequestRecord(
        log_ref=log_ref,
        timestamp_ms=ts,
        url=f"https://{org_domain(tracker)}/beacon?uid={token}&page={site_domain}",
        referrer=f"https://{site_domain}/",
        to_org=tracker,
        from_org=tracker,
    )


def sync_request(
    log_ref: str,
    ts: int,
    tracker: str,
    tracker_token: str,
    bidder: str,
    bidder_token: str,
    site_domain: str,
) -> RequestRecord:
    """A client-side sync: the tracker redirects the browser to the bidder,
    handing over its token as a query-parameter value."""
    return RequestRecord(
        log_ref=log_ref,
        timestamp_ms=ts,
        url=(
            f"https://{org_domain(bidder)}/setuid"
            f"?uid={bidder_token}&partner_uid={tracker_token}"
            f"&partner={org_domain(tracker)}"
        ),
        referrer=f"https://{site_domain}/",
        to_org=bidder,
        from_org=tracker,
    )


def _param_values(url: str) -> Iterator[str]:
    query = urlsplit(url).query
    for _, value in parse_qsl(query, keep_blank_values=False):
        yield value


def detect_cookie_sync_evidence(
    logs: Iterable[RequestRecord], min_len: int = 8
) -> Counter:
    """Count sync evidence per (owner, receiver) organization pair.

    A candidate identifier is any alphanumeric query-parameter value (URL or
    referrer) of length >= min_len. Its owner is the organization whose
    traffic first carried it; each later appearance in a request to a
    different organization is one piece of sync evidence. Logs must be
    scanned in emission order for ownership to resolve correctly.
    """
    owners: dict[str, str] = {}
    evidence: Counter = Counter()
    for rec in logs:
        for value in list(_param_values(rec.url)) + list(_param_values(rec.referrer)):
            if len(value) < min_len or not value.isalnum():
                continue
            owner = owners.get(value)
            if owner is None:
                owners[value] = rec.to_org
            elif owner != rec.to_org:
                evidence[(owner, rec.to_org)] += 1
    return evidence


def detect_cookie_sync(
    logs: Iterable[RequestRecord], min_len: int = 8
) -> set[tuple[str, str]]:
    """Detected (owner, receiver) pairs; see detect_cookie_sync_evidence."""
    return set(detect_cookie_sync_evidence(logs, min_len=min_len))


# --- log file IO ------------------------------------------------------------

def log_record_to_json(rec: RequestRecord) -> str:
    return json.dumps(
        {
            "log_ref": rec.log_ref,
            "timestamp_ms": rec.timestamp_ms,
            "url": rec.url,
            "referrer": rec.referrer,
            "to_org": rec.to_org,
            "from_org": rec.from_org,
        },
        sort_keys=True,
    )


def log_record_from_json(line: str) -> RequestRecord:
    d = json.loads(line)
    return RequestRecord(
        log_ref=d["log_ref"],
        timestamp_ms=d["timestamp_ms"],
        url=d["url"],
        referrer=d["referrer"],
        to_org=d["to_org"],
        from_org=d["from_org"],
    )


def save_logs(records: Iterable[RequestRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(log_record_to_json(rec))
            fh.write("\n")


def iter_logs(path: str | Path) -> Iterator[RequestRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield log_record_from_json(line)
