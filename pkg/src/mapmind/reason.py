"""Prompting schemes, answer extraction and agent endpoints."""

from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import httpx

from .mapenv import GridMap
from .memory import MemoryBundle
from .tasks import LETTERS, TaskItem, answer_from_map

API_KEY_ENV = "MAPMIND_API_KEY"
COT_SUFFIX = "Let's think step by step"
INVALID = None

SYSTEM_PREAMBLE = (
    "You are an agent that explored a city laid out on a grid of cells. "
    "Columns grow eastward and rows grow southward, so row 0 is the northern edge. "
    "Moving one cell in any of the eight compass directions, diagonals included, costs one move. "
    "Roads and intersections can be walked; a POI (point of interest) is entered from the road cell beside it. "
    "Your memory of the exploration is given below, followed by a multiple-choice question. "
    "Finish your reply with a final line of the form \"Answer: <letter>\" where <letter> is A, B, C or D."
)


class ReasonError(ValueError):
    pass


class EndpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ReasonError(f"bad role {self.role!r}")
        if not self.text:
            raise ReasonError("empty message text")

    def to_wire(self) -> dict:
        return {"role": self.role, "content": self.text}


@dataclass(frozen=True)
class Scheme:
    kind: str = "DT"
    k: int = 5
    temperature: float = 1.0
    plans: int = 3
    candidates: int = 3

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ReasonError(f"unknown scheme {self.kind!r}")
        if self.k < 1 or self.plans < 1 or self.candidates < 1:
            raise ReasonError("scheme sizes must be >= 1")


SCHEMES = ("DT", "CoT", "SC_CoT", "ToT")


def parse_scheme(name: str) -> Scheme:
    norm = name.replace("-", "_").strip()
    for s in SCHEMES:
        if norm.lower() == s.lower():
            return Scheme(s)
    raise ReasonError(f"unknown scheme {name!r}")


@dataclass(frozen=True)
class CallContext:
    """What an endpoint may know about a call besides the messages.

    Scripted endpoints use it to answer; the remote endpoint ignores it.
    """

    item: TaskItem | None = None
    map: GridMap | None = None
    stage: str = "answer"  # "answer", "plan" or "candidates"
    key: str = ""


class Endpoint(Protocol):
    name: str
    kind: str
    max_attempts: int

    def complete(self, messages: Sequence[ChatMessage], *, temperature: float,
                 task: CallContext | None = None) -> str: ...


# --------------------------------------------------------------------------
# prompts


def build_task_prompt(bundle: MemoryBundle, task: TaskItem, scheme: Scheme | str = "DT") -> list[ChatMessage]:
    if isinstance(scheme, str):
        scheme = parse_scheme(scheme)
    if task.degenerate:
        raise ReasonError(f"task {task.id} is degenerate")
    body = f"Memory:\n{bundle.serialized}\nQuestion:\n{task.render()}"
    if scheme.kind in ("CoT", "SC_CoT"):
        body += f"\n\n{COT_SUFFIX}"
    return [ChatMessage("system", SYSTEM_PREAMBLE), ChatMessage("user", body)]


def plan_prompt(base: Sequence[ChatMessage], plans: int) -> list[ChatMessage]:
    msgs = list(base)
    msgs[-1] = ChatMessage("user", msgs[-1].text + (
        f"\n\nDo not answer yet. Propose {plans} different plans for solving this question "
        "(for example which places to recall and which routes or relations to compare), "
        "numbered \"Plan 1:\", \"Plan 2:\" and so on. Then pick the most promising one "
        "and end with the line \"Selected plan: <number>\"."))
    return msgs


def candidate_prompt(base: Sequence[ChatMessage], plan: str, candidates: int) -> list[ChatMessage]:
    msgs = list(base)
    msgs[-1] = ChatMessage("user", msgs[-1].text + (
        f"\n\nFollow this plan:\n{plan}\n\nGenerate {candidates} candidate answers, each with a short "
        "justification, numbered \"Candidate 1:\" and so on. Then choose the most plausible one "
        "and end with \"Answer: <letter>\"."))
    return msgs


# --------------------------------------------------------------------------
# answer extraction

_ANSWER = re.compile(r"answer\s*[:：]\s*\(?\s*([abcd])\b", re.IGNORECASE)
_LETTER = re.compile(r"(?<![A-Za-z0-9])([ABCD])(?![A-Za-z0-9])")


def extract_choice(text: str) -> int | None:
    """Option index from a reply, or None when no answer can be found."""
    if not text:
        return INVALID
    hits = _ANSWER.findall(text)
    if hits:
        return LETTERS.index(hits[-1].upper())
    letters = _LETTER.findall(text)
    if letters:
        return LETTERS.index(letters[-1])
    return INVALID


_PLAN = re.compile(r"selected\s+plan\s*[:：]?\s*#?(\d+)", re.IGNORECASE)
_PLAN_ITEM = re.compile(r"^\s*plan\s+(\d+)\s*[:.)-]\s*(.*)$", re.IGNORECASE | re.MULTILINE)


def parse_plans(text: str) -> list[str]:
    return [body.strip() for _, body in _PLAN_ITEM.findall(text) if body.strip()]


def parse_plan_choice(text: str, n_plans: int) -> int | None:
    hits = _PLAN.findall(text or "")
    if not hits:
        return None
    k = int(hits[-1])
    return k if 1 <= k <= n_plans else None


# --------------------------------------------------------------------------
# endpoints


def _correct_index(ctx: CallContext | None) -> int:
    if ctx is None or ctx.item is None:
        raise EndpointError("scripted endpoint needs the task item")
    if ctx.map is not None:
        got = answer_from_map(ctx.item, ctx.map)
        if got is not None:
            return got
    return ctx.item.correct


def _scripted_reply(ctx: CallContext, letter: str, plans: int = 3, candidates: int = 3) -> str:
    if ctx.stage == "plan":
        lines = [f"Plan {k}: recall the places named in the question and compare them." for k in range(1, plans + 1)]
        return "\n".join(lines + ["Selected plan: 1"])
    if ctx.stage == "candidates":
        lines = [f"Candidate {k}: {letter}" for k in range(1, candidates + 1)]
        return "\n".join(lines + [f"Answer: {letter}"])
    return f"Answer: {letter}"


@dataclass
class ScriptedOracle:
    """Answers every question correctly by recomputing it from the true map."""

    name: str = "oracle"
    kind: str = "scripted-oracle"
    temperature: float = 0.0
    max_attempts: int = 1

    def complete(self, messages, *, temperature: float, task: CallContext | None = None) -> str:
        return _scripted_reply(task, LETTERS[_correct_index(task)])


@dataclass
class ScriptedRandom:
    """Uniform random letters, reproducible per (seed, call key)."""

    name: str = "random"
    kind: str = "scripted-random"
    seed: int = 0
    temperature: float = 0.0
    max_attempts: int = 1

    def complete(self, messages, *, temperature: float, task: CallContext | None = None) -> str:
        key = task.key if task is not None else ""
        rng = random.Random(f"{self.seed}:{key}")
        return _scripted_reply(task or CallContext(), LETTERS[rng.randrange(4)])


class TokenBucket:
    """Blocking token bucket: ``rate`` tokens per second, up to ``burst``."""

    def __init__(self, rate: float, burst: int = 1, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate <= 0 or burst < 1:
            raise ReasonError("rate must be > 0 and burst >= 1")
        self.rate, self.burst = rate, burst
        self._clock, self._sleep = clock, sleep
        self._tokens = float(burst)
        self._stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.burst, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


@dataclass
class RemoteChat:
    """OpenAI-compatible chat-completions client."""

    name: str
    model: str
    base_url: str
    temperature: float = 0.0
    max_attempts: int = 3
    timeout: float = 60.0
    rate: float | None = None
    backoff: float = 1.0
    kind: str = "remote-chat"
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    _client: httpx.Client | None = field(default=None, repr=False)
    _bucket: TokenBucket | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 <= self.temperature <= 2:
            raise ReasonError("temperature must be in [0, 2]")
        if self.max_attempts < 1:
            raise ReasonError("max_attempts must be >= 1")
        if self.rate:
            self._bucket = TokenBucket(self.rate, sleep=self.sleep)

    def _api_key(self) -> str:
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise EndpointError(f"{API_KEY_ENV} is not set")
        return key

    def client(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(base_url=self.base_url.rstrip("/"), timeout=self.timeout,
                                        transport=self.transport)
        return self._client

    def complete(self, messages, *, temperature: float, task: CallContext | None = None) -> str:
        if not 0 <= temperature <= 2:
            raise ReasonError("temperature must be in [0, 2]")
        body = {"model": self.model, "messages": [m.to_wire() for m in messages],
                "temperature": temperature, "n": 1}
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last = None
        for attempt in range(self.max_attempts):
            if self._bucket is not None:
                self._bucket.acquire()
            try:
                resp = self.client().post("/v1/chat/completions", json=body, headers=headers)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = EndpointError(f"http {resp.status_code}")
                else:
                    resp.raise_for_status()
                    return resp.json()["choices"][0]["message"]["content"] or ""
            except (httpx.TransportError, httpx.HTTPStatusError, KeyError, IndexError, ValueError) as exc:
                last = exc
                if isinstance(exc, httpx.HTTPStatusError) and exc.response.status_code < 500:
                    break
            if attempt + 1 < self.max_attempts:
                self.sleep(self.backoff * 2 ** attempt)
        raise EndpointError(f"endpoint-error: {last}")

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None


def make_endpoint(spec: dict) -> Endpoint:
    """Endpoint from a config block: {kind, name, model, base_url, ...}."""
    kind = spec.get("kind", "scripted-oracle")
    name = spec.get("name", kind)
    if kind == "scripted-oracle":
        return ScriptedOracle(name=name)
    if kind == "scripted-random":
        return ScriptedRandom(name=name, seed=int(spec.get("seed", 0)))
    if kind == "remote-chat":
        for req in ("model", "base_url"):
            if req not in spec:
                raise ReasonError(f"remote endpoint {name!r} needs {req!r}")
        return RemoteChat(name=name, model=spec["model"], base_url=spec["base_url"],
                          temperature=float(spec.get("temperature", 0.0)),
                          max_attempts=int(spec.get("max_attempts", 3)),
                          timeout=float(spec.get("timeout", 60.0)),
                          rate=spec.get("rate"))
    raise ReasonError(f"unknown endpoint kind {kind!r}")


# --------------------------------------------------------------------------
# schemes


@dataclass
class CallRecord:
    stage: str
    sample: int
    reply: str | None
    choice: int | None
    latency_ms: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {"stage": self.stage, "sample": self.sample, "reply": self.reply,
                "choice": None if self.choice is None else LETTERS[self.choice],
                "latency_ms": round(self.latency_ms, 3), "error": self.error}


@dataclass
class Outcome:
    choice: int | None
    calls: list[CallRecord]
    flags: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def invalid(self) -> bool:
        return self.choice is None


def _call(endpoint: Endpoint, messages, temperature: float, ctx: CallContext,
          stage: str, sample: int) -> CallRecord:
    t0 = time.perf_counter()
    try:
        reply = endpoint.complete(messages, temperature=temperature, task=ctx)
        err = None
    except EndpointError as exc:
        reply, err = None, str(exc) if str(exc).startswith("endpoint-error") else f"endpoint-error: {exc}"
    ms = (time.perf_counter() - t0) * 1000
    choice = extract_choice(reply) if reply is not None and stage != "plan" else None
    return CallRecord(stage, sample, reply, choice, ms, err)


def _ctx(item, m, stage, key) -> CallContext:
    return CallContext(item, m, stage, key)


def run_single(endpoint: Endpoint, messages, temperature: float = 0.0, *,
               item: TaskItem | None = None, m: GridMap | None = None, key: str = "") -> Outcome:
    rec = _call(endpoint, messages, temperature, _ctx(item, m, "answer", f"{key}:answer:0"), "answer", 0)
    flags = [] if rec.error is None else ["endpoint-error"]
    return Outcome(rec.choice, [rec], flags)


def majority(choices: Sequence[int | None]) -> int | None:
    """Most frequent valid choice; ties go to the one sampled first."""
    valid = [c for c in choices if c is not None]
    if not valid:
        return None
    counts = Counter(valid)
    top = max(counts.values())
    return next(c for c in valid if counts[c] == top)


def run_self_consistency(endpoint: Endpoint, messages, k: int = 5, temperature: float = 1.0, *,
                         item: TaskItem | None = None, m: GridMap | None = None, key: str = "") -> Outcome:
    if k < 1:
        raise ReasonError("k must be >= 1")
    calls = [_call(endpoint, messages, temperature, _ctx(item, m, "answer", f"{key}:sample:{s}"), "sample", s)
             for s in range(k)]
    flags = ["endpoint-error"] if any(c.error for c in calls) else []
    return Outcome(majority([c.choice for c in calls]), calls, flags)


def run_tot(endpoint: Endpoint, bundle: MemoryBundle, task: TaskItem, plans: int = 3, candidates: int = 3,
            temperature: float = 0.0, *, m: GridMap | None = None, key: str = "") -> Outcome:
    if plans < 1 or candidates < 1:
        raise ReasonError("plans and candidates must be >= 1")
    base = build_task_prompt(bundle, task, "ToT")
    first = _call(endpoint, plan_prompt(base, plans), temperature,
                  _ctx(task, m, "plan", f"{key}:plan:0"), "plan", 0)
    flags = []
    plan_list = parse_plans(first.reply or "")
    pick = parse_plan_choice(first.reply or "", max(plans, len(plan_list)))
    if pick is None:
        flags.append("plan-fallback")
        pick = 1
    chosen = plan_list[pick - 1] if len(plan_list) >= pick else (plan_list[0] if plan_list else "Plan 1")
    second = _call(endpoint, candidate_prompt(base, chosen, candidates), temperature,
                   _ctx(task, m, "candidates", f"{key}:candidates:0"), "candidates", 0)
    if first.error or second.error:
        flags.append("endpoint-error")
    cands = re.findall(r"^\s*candidate\s+\d+\s*[:.)-]\s*(.*)$", second.reply or "", re.IGNORECASE | re.MULTILINE)
    extra = {"plans": plan_list, "chosen_plan": pick, "plan_text": chosen, "candidates": cands,
             "final": None if second.choice is None else LETTERS[second.choice]}
    return Outcome(second.choice, [first, second], flags, extra)


def run_scheme(endpoint: Endpoint, bundle: MemoryBundle, task: TaskItem, scheme: Scheme | str, *,
               m: GridMap | None = None, key: str = "") -> Outcome:
    """Execute one item under a scheme; ``key`` namespaces scripted randomness."""
    if isinstance(scheme, str):
        scheme = parse_scheme(scheme)
    key = key or task.id
    if scheme.kind == "ToT":
        return run_tot(endpoint, bundle, task, scheme.plans, scheme.candidates,
                       endpoint_temperature(endpoint), m=m, key=key)
    messages = build_task_prompt(bundle, task, scheme)
    if scheme.kind == "SC_CoT":
        return run_self_consistency(endpoint, messages, scheme.k, scheme.temperature, item=task, m=m, key=key)
    return run_single(endpoint, messages, endpoint_temperature(endpoint), item=task, m=m, key=key)


def endpoint_temperature(endpoint) -> float:
    return float(getattr(endpoint, "temperature", 0.0))


def reply_log_lines(outcome: Outcome, base: dict) -> list[str]:
    """One JSON line per endpoint call."""
    return [json.dumps({**base, **c.to_dict()}, ensure_ascii=False, sort_keys=True) for c in outcome.calls]
