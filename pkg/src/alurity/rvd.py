"""Minimal vulnerability-tracker client.

Speaks a tracker-neutral REST subset (GET/POST ``/issues``) that a thin shim
can map onto GitHub or GitLab.  Reproduction material travels inside the
issue body as fenced ``yaml`` code blocks.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Optional

import requests
import yaml

from .model import FlowSpec, Scenario
from .parser import ParseFailure, parse_flow, parse_scenario

TOKEN_ENV = "ALURITY_TRACKER_TOKEN"

_FENCE_RE = re.compile(r"```yaml\s*\n(.*?)```", re.DOTALL)


class NotFound(Exception):
    pass


class TransportError(Exception):
    pass


class Rejected(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(f"tracker rejected the issue ({status}): {message}")


class NoReproductionFound(Exception):
    pass


@dataclass(frozen=True)
class Ticket:
    id: int
    title: str
    body: str
    labels: tuple[str, ...] = ()


def _headers(token: Optional[str]) -> dict:
    token = token if token is not None else os.environ.get(TOKEN_ENV)
    return {"Authorization": f"Bearer {token}"} if token else {}


def fetch_ticket(base_url: str, ticket_id: int, token: Optional[str] = None, timeout: float = 10.0) -> Ticket:
    url = f"{base_url.rstrip('/')}/issues/{ticket_id}"
    try:
        response = requests.get(url, headers=_headers(token), timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    if response.status_code == 404:
        raise NotFound(ticket_id)
    if response.status_code >= 400:
        raise TransportError(f"HTTP {response.status_code} fetching {url}")
    doc = response.json()
    return Ticket(
        id=int(doc["id"]),
        title=str(doc.get("title", "")),
        body=str(doc.get("body", "")),
        labels=tuple(doc.get("labels", [])),
    )


def push_issue(base_url: str, record, token: Optional[str] = None, timeout: float = 10.0) -> int:
    """POST a flaw record as a new issue; body is one fenced yaml block."""
    body = f"```yaml\n{record.to_yaml()}```\n"
    payload = {
        "title": record.title,
        "body": body,
        "labels": [record.flaw_class, record.severity],
    }
    url = f"{base_url.rstrip('/')}/issues"
    try:
        response = requests.post(url, json=payload, headers=_headers(token), timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    if 400 <= response.status_code < 500:
        raise Rejected(response.status_code, response.text)
    if response.status_code >= 500:
        raise TransportError(f"HTTP {response.status_code} pushing to {url}")
    return int(response.json()["id"])


def _is_scenario(scenario: Scenario) -> bool:
    return bool(scenario.networks or scenario.containers or scenario.vms)


def extract_reproduction(ticket: Ticket) -> tuple[Scenario, Optional[list[FlowSpec]]]:
    """Pure text scan over the ticket body's fenced yaml blocks.

    The first block parsing as a scenario wins; the first subsequent block
    parsing as a flow becomes the flow.  A block holding an emitted flaw
    record counts through its embedded ``reproduction`` material.
    """
    blocks = [m.group(1) for m in _FENCE_RE.finditer(ticket.body)]
    scenario: Optional[Scenario] = None
    flow: Optional[list[FlowSpec]] = None
    for block in blocks:
        if scenario is None:
            try:
                candidate = parse_scenario(block)
                if _is_scenario(candidate):
                    scenario = candidate
                    if candidate.flows:
                        flow = list(candidate.flows)
                    continue
            except ParseFailure:
                pass
            embedded = _reproduction_from_record(block)
            if embedded is not None:
                return embedded
        elif flow is None:
            try:
                parsed = parse_flow(block)
                if parsed:
                    flow = parsed
            except ParseFailure:
                pass
    if scenario is None:
        raise NoReproductionFound(f"ticket {ticket.id} embeds no scenario")
    return scenario, flow


def _reproduction_from_record(block: str) -> Optional[tuple[Scenario, Optional[list[FlowSpec]]]]:
    try:
        doc = yaml.safe_load(block)
    except yaml.YAMLError:
        return None
    if not isinstance(doc, dict) or "reproduction" not in doc:
        return None
    reproduction = doc.get("reproduction") or {}
    try:
        scenario = parse_scenario(reproduction.get("scenario", ""))
    except ParseFailure:
        return None
    if not _is_scenario(scenario):
        return None
    flow: Optional[list[FlowSpec]] = None
    flow_text = reproduction.get("flow") or ""
    if flow_text:
        try:
            flow = parse_flow(flow_text) or None
        except ParseFailure:
            flow = None
    return scenario, flow
