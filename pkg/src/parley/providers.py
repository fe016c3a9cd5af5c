"""Text-generation and embedding backends.

Two implementations share one interface:

* :class:`MockProvider` — fully deterministic. Scripted responses are matched
  by (purpose, substring) and consumed FIFO; in ``synthesize`` mode unscripted
  requests get deterministic fabricated responses so whole simulations can run
  offline and replay byte-identically.
* :class:`OpenAICompatProvider` — HTTP client for any chat-completions API
  that speaks the OpenAI JSON protocol, including first-token logprobs.

No module outside this one constructs network traffic.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .core import ParleyError

logger = logging.getLogger(__name__)

MAX_TOP_LOGPROBS = 5


class ProviderError(ParleyError):
    """Transport failure, backend refusal, or timeout."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class ScriptMiss(ProviderError):
    """The mock provider has no scripted response for this request."""

    def __init__(self, message: str):
        super().__init__(message, retryable=False)


class DegenerateVector(ParleyError):
    """Cosine similarity is undefined for zero-norm vectors."""


@dataclass
class CompletionRequest:
    """One prompt pair sent to a completion backend.

    ``purpose`` tags what pipeline stage issued the request; backends may
    ignore it, mocks use it for routing and logs use it for audit.
    """

    system_prompt: str
    user_prompt: str
    want_top_logprobs: int = 0
    max_tokens: int = 256
    temperature: float = 0.7
    purpose: str = ""

    def __post_init__(self) -> None:
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be nonempty")
        if not (0 <= self.want_top_logprobs <= MAX_TOP_LOGPROBS):
            raise ValueError(f"want_top_logprobs must be 0..{MAX_TOP_LOGPROBS}")

    @property
    def full_prompt(self) -> str:
        return self.system_prompt + "\n" + self.user_prompt


@dataclass
class CompletionResponse:
    """Backend reply: text plus up to five first-token alternatives."""

    text: str
    first_token_alternatives: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        alts = [(tok, min(float(lp), 0.0)) for tok, lp in self.first_token_alternatives]
        alts.sort(key=lambda a: a[1], reverse=True)
        self.first_token_alternatives = alts[:MAX_TOP_LOGPROBS]


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-length real vector from one provider's embedding space."""

    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine of the angle between two embeddings, in [-1, 1]."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} != {b.dim}")
    va = np.asarray(a.values, dtype=np.float64)
    vb = np.asarray(b.values, dtype=np.float64)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVector("zero-norm embedding")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


class Provider(Protocol):
    """What the rest of the package needs from a backend."""

    def complete(self, req: CompletionRequest) -> CompletionResponse: ...

    def embed(self, text: str) -> EmbeddingVector: ...


def _stable_rng(*parts: object) -> random.Random:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


_WORD_RE = re.compile(r"[A-Za-z]{4,}")
_STOPWORDS = {
    "that", "this", "with", "have", "about", "what", "your", "from", "they",
    "just", "like", "been", "were", "will", "would", "could", "should",
    "there", "their", "them", "then", "when", "really", "think", "going",
    "anyone", "something", "someone", "thought", "thoughts", "else", "nice",
    "though", "speaking", "reminds", "mostly", "time", "know", "honestly",
    "tried", "last", "into", "myself", "actually", "experience", "point",
    "love", "never", "others", "these", "whether", "favorite", "thing",
    "connects", "anyway", "sounds", "much", "most", "named", "every",
    "share", "chat", "feeling", "some", "nudge", "toward", "wonder",
    "interesting", "directly", "maybe",
}


def _message_bodies(text: str) -> str:
    """Drop `[id] (kind) Speaker:` prefixes so only message content remains."""
    bodies = []
    for line in text.splitlines():
        line = re.sub(r"^\[[^\]]+\]\s*", "", line.strip())
        line = re.sub(r"^\((?:objective|knowledge|interest|thought-ref)\)\s*", "", line)
        m = re.match(r"^[A-Z][\w' -]{0,24}:\s*(.*)$", line)
        bodies.append(m.group(1) if m else line)
    return "\n".join(bodies)


def _topic_word(text: str, rng: random.Random) -> str:
    words = set()
    for m in _WORD_RE.finditer(text):
        word = m.group(0)
        if word[0].isupper():
            # Skip mid-sentence capitalized tokens: they are almost always names.
            j = m.start() - 1
            while j >= 0 and text[j] in " \t":
                j -= 1
            if j >= 0 and text[j] not in ".!?\n:":
                continue
        if word.lower() not in _STOPWORDS:
            words.add(word.lower())
    if not words:
        return "the weekend"
    return rng.choice(sorted(words))


class MockProvider:
    """Deterministic offline backend.

    Scripted entries are matched in registration order by ``purpose`` (None
    matches any) and a substring of the combined prompt. Each entry holds a
    FIFO of responses: queued responses are consumed one per hit until one
    remains, which then answers every further hit (sticky last).

    With ``synthesize=True``, unscripted requests are answered with fabricated
    but deterministic content derived from (seed, purpose, prompt); otherwise
    they raise :class:`ScriptMiss`.
    """

    def __init__(self, seed: int = 0, dim: int = 32, synthesize: bool = False):
        self.seed = seed
        self.dim = dim
        self.synthesize = synthesize
        self._script: list[tuple[Optional[str], str, deque[CompletionResponse]]] = []
        self._embedding_overrides: dict[str, EmbeddingVector] = {}
        self._word_vectors: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.calls: list[CompletionRequest] = []

    # -- scripting ---------------------------------------------------------

    def script_completion(
        self,
        match: str,
        text: str = "",
        alternatives: Optional[list[tuple[str, float]]] = None,
        purpose: Optional[str] = None,
        response: Optional[CompletionResponse] = None,
    ) -> "MockProvider":
        """Queue a response for requests whose prompt contains ``match``."""
        resp = response or CompletionResponse(text=text, first_token_alternatives=alternatives or [])
        with self._lock:
            for p, m, q in self._script:
                if p == purpose and m == match:
                    q.append(resp)
                    return self
            self._script.append((purpose, match, deque([resp])))
        return self

    def script_failure(self, match: str, purpose: Optional[str] = None,
                       retryable: bool = False) -> "MockProvider":
        """Queue a simulated backend failure for matching requests."""
        marker = CompletionResponse(text="\x00PROVIDER_FAILURE\x00")
        marker._retryable = retryable  # type: ignore[attr-defined]
        with self._lock:
            for p, m, q in self._script:
                if p == purpose and m == match:
                    q.append(marker)
                    return self
            self._script.append((purpose, match, deque([marker])))
        return self

    def script_embedding(self, text: str, values: tuple[float, ...] | list[float]) -> "MockProvider":
        """Pin the embedding returned for an exact input text."""
        self._embedding_overrides[text] = EmbeddingVector(tuple(float(v) for v in values))
        return self

    # -- provider interface ------------------------------------------------

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls.append(req)
            haystack = req.full_prompt
            for purpose, match, queue in self._script:
                if purpose is not None and purpose != req.purpose:
                    continue
                if match not in haystack:
                    continue
                resp = queue.popleft() if len(queue) > 1 else queue[0]
                if resp.text == "\x00PROVIDER_FAILURE\x00":
                    raise ProviderError(
                        f"scripted failure for {match!r}",
                        retryable=getattr(resp, "_retryable", False),
                    )
                return resp
        if self.synthesize:
            return self._synthesize(req)
        raise ScriptMiss(f"no scripted response for purpose={req.purpose!r} prompt={req.user_prompt[:80]!r}")

    def embed(self, text: str) -> EmbeddingVector:
        """Deterministic bag-of-content-words embedding.

        Each content word hashes to a fixed unit vector; a text embeds as the
        normalized sum, so texts sharing words are measurably similar. Exact
        texts pinned via :meth:`script_embedding` bypass all of this.
        """
        if not text:
            raise ValueError("text must be nonempty")
        override = self._embedding_overrides.get(text)
        if override is not None:
            return override
        words = sorted({w.lower() for w in _WORD_RE.findall(text)} - _STOPWORDS)
        if not words:
            words = [text]
        total = np.zeros(self.dim)
        for word in words:
            total += self._word_vector(word)
        norm = float(np.linalg.norm(total))
        if norm == 0.0:
            total[0] = 1.0
            norm = 1.0
        return EmbeddingVector(tuple(float(v) for v in total / norm))

    def _word_vector(self, word: str) -> np.ndarray:
        cached = self._word_vectors.get(word)
        if cached is None:
            rng = _stable_rng(self.seed, "word", word)
            vec = np.array([rng.gauss(0.0, 1.0) for _ in range(self.dim)])
            cached = vec / np.linalg.norm(vec)
            self._word_vectors[word] = cached
        return cached

    # -- synthesis ---------------------------------------------------------

    def _synthesize(self, req: CompletionRequest) -> CompletionResponse:
        rng = _stable_rng(self.seed, req.purpose, req.full_prompt)
        handler = {
            "interpret": self._synth_interpret,
            "form_system1": self._synth_form_system1,
            "form_system2": self._synth_form_system2,
            "evaluate": self._synth_evaluate,
            "rate": self._synth_rate,
            "classify_turn": self._synth_classify,
            "articulate": self._synth_articulate,
            "restyle": self._synth_restyle,
            "acknowledge": self._synth_acknowledge,
            "baseline_pick_speaker": self._synth_pick_speaker,
            "baseline_reply": self._synth_baseline_reply,
        }.get(req.purpose)
        if handler is None:
            return CompletionResponse(text=rng.choice(["Okay.", "Sure.", "Got it."]))
        return handler(req, rng)

    @staticmethod
    def _prompt_field(req: CompletionRequest, label: str) -> str:
        m = re.search(rf"^{label}:\s*(.+)$", req.user_prompt, re.MULTILINE)
        return m.group(1).strip() if m else ""

    @staticmethod
    def _prompt_names(req: CompletionRequest) -> list[str]:
        m = re.search(r"^Participants:\s*(.+)$", req.full_prompt, re.MULTILINE)
        if not m:
            return []
        return [n.strip() for n in m.group(1).split(",") if n.strip()]

    @staticmethod
    def _stimulus_ids(req: CompletionRequest) -> list[str]:
        return re.findall(r"^\[([^\]\s]+)\]", req.user_prompt, re.MULTILINE)

    def _last_line(self, req: CompletionRequest) -> str:
        lines = [l for l in req.user_prompt.splitlines() if l.strip()]
        return lines[-1] if lines else ""

    @staticmethod
    def _conversation_text(req: CompletionRequest) -> str:
        """Content of the transcript section, so topics come from the chat
        rather than from prompt instructions."""
        m = re.search(
            r"(?:Conversation(?: so far| \(most recent last\))?|Last utterances):\n(.*?)(?:\n\s*\n|\Z)",
            req.user_prompt,
            re.DOTALL,
        )
        if m:
            return m.group(1)
        return "\n".join(re.findall(r"^\[[^\]]+\].*$", req.user_prompt, re.MULTILINE)) or req.user_prompt

    def _synth_interpret(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        name = self._prompt_field(req, "Speaker") or "The speaker"
        topic = _topic_word(self._prompt_field(req, "Utterance") or _message_bodies(req.user_prompt), rng)
        template = rng.choice([
            "{n} is bringing up {t} and inviting others to react.",
            "{n} wants to hear what the group thinks about {t}.",
            "{n} is sharing a personal angle on {t}.",
        ])
        return CompletionResponse(text=template.format(n=name, t=topic))

    # Covert/overt template pairs: formation emits the covert side, and the
    # articulation handler recognizes it to produce a natural surface form.
    _S1_TEMPLATES = [
        ("Oh nice, {t} sounds fun!", "Oh nice, {t} sounds fun!"),
        ("Ha, I know that feeling about {t}.", "Ha, I know that feeling about {t}."),
        ("Interesting point about {t}.", "Interesting point about {t}!"),
        ("Maybe I should nudge the chat toward {t}.", "Anyway, what about {t}?"),
    ]
    _S2_TEMPLATES = [
        ("I should share my own experience with {t}.",
         "I've actually got some experience with {t} myself."),
        ("I wonder how the others got into {t}.", "How did you all get into {t}?"),
        ("This connects to what I know about {t}.",
         "That connects to something I know about {t}."),
        ("I could ask whether anyone else has tried {t}.", "Has anyone else tried {t}?"),
    ]

    @staticmethod
    def _speaker_names(req: CompletionRequest) -> list[str]:
        names = set(re.findall(r"^(?:\[[^\]]+\]\s*)?([A-Z][\w'-]{2,24}):", req.user_prompt, re.MULTILINE))
        me = re.match(r"You are ([A-Z][\w'-]*)", req.system_prompt)
        if me:
            names.discard(me.group(1))
        return sorted(names)

    def _synth_form_system1(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        n = int(self._prompt_field(req, "Count") or 1)
        context = self._prompt_field(req, "Latest") or _message_bodies(self._conversation_text(req))
        names = self._speaker_names(req)
        thoughts = []
        for _ in range(n):
            if names and rng.random() < 0.2:
                text = f"Maybe I should ask {rng.choice(names)} directly."
            else:
                text = rng.choice(self._S1_TEMPLATES)[0].format(t=_topic_word(context, rng))
            thoughts.append({"text": text, "stimuli": []})
        return CompletionResponse(text=json.dumps(thoughts))

    def _synth_form_system2(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        n = int(self._prompt_field(req, "Count") or 1)
        ids = self._stimulus_ids(req)
        convo = _message_bodies(self._conversation_text(req))
        memories = re.search(r"Salient memories.*?:\n(.*?)(?:\n\s*\n|\Z)", req.user_prompt, re.DOTALL)
        if memories:
            # Ground deliberate thoughts in the retrieved personal content,
            # anchored by the most recent exchange.
            context = _message_bodies(memories.group(1)) + "\n" + "\n".join(convo.splitlines()[-2:])
        else:
            context = convo
        thoughts = []
        for _ in range(n):
            topic = _topic_word(context, rng)
            text = rng.choice(self._S2_TEMPLATES)[0].format(t=topic)
            cite = rng.sample(ids, k=min(len(ids), rng.choice([1, 1, 2]))) if ids else []
            thoughts.append({"text": text, "stimuli": cite})
        return CompletionResponse(text=json.dumps(thoughts))

    def _synth_evaluate(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        pos = rng.sample(["Relevance", "Coherence", "Expected Impact", "Dynamics"], 2)
        neg = rng.sample(["Originality", "Balance", "Urgency", "Information Gap"], 2)
        rating = rng.choices([2, 3, 4, 5], weights=[0.15, 0.3, 0.35, 0.2])[0]
        text = (
            "Positive:\n"
            f"1. {pos[0]}: it ties directly into the current topic.\n"
            f"2. {pos[1]}: it would keep the exchange moving.\n"
            "Negative:\n"
            f"1. {neg[0]}: a similar point may already be on the table.\n"
            f"2. {neg[1]}: others may be about to speak.\n"
            f"Rating: {rating}"
        )
        return CompletionResponse(text=text)

    def _synth_rate(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        m = re.search(r"Rating:\s*([1-5])", req.user_prompt)
        peak = int(m.group(1)) if m else rng.choices([2, 3, 4, 5], weights=[0.15, 0.3, 0.35, 0.2])[0]
        neighbor = peak - 1 if peak >= 3 else peak + 1
        other = peak + 1 if peak < 5 else peak - 2
        mass = {peak: 0.62, neighbor: 0.26}
        if other not in mass:
            mass[other] = 0.12
        alts = [(str(s), math.log(p)) for s, p in mass.items()]
        return CompletionResponse(text=str(peak), first_token_alternatives=alts)

    def _synth_classify(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        names = self._prompt_names(req)
        convo = [l for l in self._conversation_text(req).splitlines() if l.strip()]
        last = convo[-1] if convo else ""
        if "?" in last:
            body = last.split(":", 1)[-1]
            for name in names:
                if re.search(rf"\b{re.escape(name)}\b", body):
                    return CompletionResponse(text=name)
        return CompletionResponse(text="anyone")

    _COVERT_PREFIXES = re.compile(
        r"^(i should (mention|share|say)|maybe i should (say|mention|share)?|"
        r"i could (share|mention))\s*",
        re.IGNORECASE,
    )

    def _synth_articulate(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        thought = self._prompt_field(req, "Thought") or self._last_line(req)
        ask = re.fullmatch(r"Maybe I should ask (?P<name>[\w'-]+) directly\.", thought.strip())
        if ask:
            return CompletionResponse(text=f"What about you, {ask.group('name')}?")
        for covert, overt in self._S1_TEMPLATES + self._S2_TEMPLATES:
            pattern = re.escape(covert).replace(r"\{t\}", "(?P<t>.+?)")
            m = re.fullmatch(pattern, thought.strip())
            if m:
                return CompletionResponse(text=overt.format(t=m.group("t")))
        is_question = bool(re.match(r"i (wonder|could ask|should ask)", thought, re.IGNORECASE))
        clause = self._COVERT_PREFIXES.sub("", thought).strip() or thought
        clause = clause.rstrip(".!?")
        if is_question:
            clause = clause + "?"
        else:
            opener = rng.choice(["", "", "You know, ", "Oh, ", "By the way, "])
            clause = opener + clause[0].lower() + clause[1:] if opener else clause
            clause = clause + "."
        clause = clause[0].upper() + clause[1:]
        return CompletionResponse(text=clause)

    def _synth_restyle(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        message = self._prompt_field(req, "Message") or self._last_line(req)
        marker = rng.choice(["Honestly, ", "Look, ", "Let me say it straight: "])
        return CompletionResponse(text=marker + message[0].lower() + message[1:] if message else message)

    def _synth_acknowledge(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        return CompletionResponse(text=rng.choice([
            "Yeah, good point!",
            "Mm, that makes sense.",
            "Ha, fair enough.",
            "Right, I see what you mean.",
        ]))

    def _synth_pick_speaker(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        names = self._prompt_names(req)
        last_speaker = self._prompt_field(req, "Last speaker")
        candidates = [n for n in names if n != last_speaker] or names
        return CompletionResponse(text=rng.choice(sorted(candidates)))

    def _synth_baseline_reply(self, req: CompletionRequest, rng: random.Random) -> CompletionResponse:
        persona = self._prompt_field(req, "Persona")
        context = _message_bodies(self._conversation_text(req))
        topic = _topic_word(context or req.user_prompt, rng)
        line = _topic_word(persona, rng) if persona else topic
        text = rng.choice([
            "Speaking of {t}, I am really into {p} myself.",
            "That reminds me of {p}, honestly.",
            "For me it is all about {p}. What about {t}?",
            "Nice! I spend most of my free time on {p}.",
        ]).format(t=topic, p=line)
        return CompletionResponse(text=text)


class OpenAICompatProvider:
    """Client for OpenAI-compatible chat-completion and embedding endpoints.

    Retryable failures (timeouts, connection errors, 429/5xx) are retried at
    most ``max_retries`` times with exponential backoff, then surfaced as
    :class:`ProviderError` so the caller can skip the cycle.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        embed_model: str = "text-embedding-3-small",
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 30.0,
        max_retries: int = 2,
        backoff_seconds: float = 0.5,
        transport=None,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.embed_model = embed_model
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        api_key = os.environ.get(api_key_env, "")
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout,
                                    headers=headers, transport=transport)

    def _post(self, path: str, payload: dict) -> dict:
        import httpx

        attempt = 0
        while True:
            try:
                resp = self._client.post(path, json=payload)
            except httpx.TimeoutException as exc:
                err = ProviderError(f"timeout calling {path}: {exc}", retryable=True)
            except httpx.HTTPError as exc:
                err = ProviderError(f"transport failure calling {path}: {exc}", retryable=True)
            else:
                if resp.status_code == 200:
                    return resp.json()
                retryable = resp.status_code == 429 or resp.status_code >= 500
                err = ProviderError(f"{path} returned {resp.status_code}: {resp.text[:200]}",
                                    retryable=retryable)
            if not err.retryable or attempt >= self.max_retries:
                raise err
            time.sleep(self.backoff_seconds * (2 ** attempt))
            attempt += 1

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        payload: dict = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        if req.want_top_logprobs > 0:
            payload["logprobs"] = True
            payload["top_logprobs"] = req.want_top_logprobs
        data = self._post("/chat/completions", payload)
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion payload: {exc}", retryable=False)
        alternatives: list[tuple[str, float]] = []
        logprobs = (choice.get("logprobs") or {}).get("content") or []
        if logprobs:
            for alt in logprobs[0].get("top_logprobs", []):
                alternatives.append((alt["token"], float(alt["logprob"])))
        return CompletionResponse(text=text, first_token_alternatives=alternatives)

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("text must be nonempty")
        data = self._post("/embeddings", {"model": self.embed_model, "input": text})
        try:
            values = data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed embedding payload: {exc}", retryable=False)
        return EmbeddingVector(tuple(float(v) for v in values))


def unit_vector_with_similarity(target: float, dim: int = 2) -> EmbeddingVector:
    """Unit vector whose cosine against (1, 0, ...) equals ``target``.

    Test helper for forcing exact similarity values through the mock.
    """
    if not (-1.0 <= target <= 1.0):
        raise ValueError("target similarity must be in [-1, 1]")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rest = math.sqrt(max(0.0, 1.0 - target * target))
    values = [target, rest] + [0.0] * (dim - 2)
    return EmbeddingVector(tuple(values))


def axis_vector(dim: int = 2) -> EmbeddingVector:
    """Unit vector (1, 0, ...); pairs with :func:`unit_vector_with_similarity`."""
    return EmbeddingVector(tuple([1.0] + [0.0] * (dim - 1)))
