"""CHAT transcript parsing.

Reads the participant main tier (``*PAR:``) and its ``%mor`` dependent tier,
keeps word tokens and ``&=`` gesture events in order, and attaches the
``[* s:...]`` / ``[* p:...]`` / ``[* n:...]`` paraphasia codes to the word they
follow. Everything else CHAT can carry (timestamps, postcodes, comments,
retracings, fillers, unintelligible material) is stripped.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Union

log = logging.getLogger(__name__)


class ChatParseError(ValueError):
    """Raised when a transcript has no usable participant tier."""


class POS(str, Enum):
    NOUN = "NOUN"
    VERB = "VERB"
    OTHER = "OTHER"


class Paraphasia(str, Enum):
    NONE = "NONE"
    SEMANTIC = "SEMANTIC"
    PHONEMIC = "PHONEMIC"
    NEOLOGISTIC = "NEOLOGISTIC"


@dataclass(frozen=True)
class WordToken:
    surface: str
    pos: POS = POS.OTHER
    paraphasia: Paraphasia = Paraphasia.NONE

    def __post_init__(self):
        if not self.surface or not any(c.isalpha() for c in self.surface):
            raise ValueError(f"word surface must contain a letter: {self.surface!r}")


@dataclass(frozen=True)
class GestureEvent:
    label: str
    position: int


Item = Union[WordToken, GestureEvent]


@dataclass
class Utterance:
    items: list[Item]
    source_line: int = field(default=0, compare=False)

    @property
    def words(self) -> list[WordToken]:
        return [it for it in self.items if isinstance(it, WordToken)]

    @property
    def gestures(self) -> list[GestureEvent]:
        return [it for it in self.items if isinstance(it, GestureEvent)]


@dataclass
class Transcript:
    participant_id: str
    utterances: list[Utterance]
    warnings: list[str] = field(default_factory=list, compare=False)

    @property
    def token_count(self) -> int:
        return sum(len(u.words) for u in self.utterances)

    @property
    def gesture_count(self) -> int:
        return sum(len(u.gestures) for u in self.utterances)

    def words(self) -> Iterable[WordToken]:
        for u in self.utterances:
            yield from u.words

    def to_dict(self) -> dict:
        utterances = []
        for u in self.utterances:
            items = []
            for it in u.items:
                if isinstance(it, WordToken):
                    items.append({"type": "word", "surface": it.surface,
                                  "pos": it.pos.value, "paraphasia": it.paraphasia.value})
                else:
                    items.append({"type": "gesture", "label": it.label, "position": it.position})
            utterances.append({"source_line": u.source_line, "items": items})
        return {
            "participant_id": self.participant_id,
            "token_count": self.token_count,
            "gesture_count": self.gesture_count,
            "utterances": utterances,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transcript":
        utterances = []
        for u in d["utterances"]:
            items: list[Item] = []
            for it in u["items"]:
                if it["type"] == "word":
                    items.append(WordToken(it["surface"], POS(it["pos"]), Paraphasia(it["paraphasia"])))
                elif it["type"] == "gesture":
                    items.append(GestureEvent(it["label"], int(it["position"])))
                else:
                    raise ValueError(f"unknown item type {it['type']!r}")
            utterances.append(Utterance(items, int(u.get("source_line", 0))))
        t = cls(d["participant_id"], utterances, list(d.get("warnings", [])))
        if "token_count" in d and d["token_count"] != t.token_count:
            raise ValueError("token_count does not match the utterances")
        if "gesture_count" in d and d["gesture_count"] != t.gesture_count:
            raise ValueError("gesture_count does not match the utterances")
        return t

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        return cls.from_dict(json.loads(text))

    def to_chat(self, participant_tag: str = "PAR") -> str:
        """Re-emit as minimal CHAT text that parses back to an equal transcript."""
        mor_prefix = {POS.NOUN: "n", POS.VERB: "v", POS.OTHER: "x"}
        code = {Paraphasia.SEMANTIC: " [* s]", Paraphasia.PHONEMIC: " [* p]",
                Paraphasia.NEOLOGISTIC: " [* n]", Paraphasia.NONE: ""}
        lines = ["@Begin", "@Languages:\teng",
                 f"@Participants:\t{participant_tag} Participant"]
        for u in self.utterances:
            main, mor = [], []
            for it in u.items:
                if isinstance(it, WordToken):
                    main.append(it.surface + code[it.paraphasia])
                    mor.append(f"{mor_prefix[it.pos]}|{it.surface}")
                else:
                    main.append("&=" + it.label)
            lines.append(f"*{participant_tag}:\t" + " ".join(main) + " .")
            if mor:
                lines.append("%mor:\t" + " ".join(mor) + " .")
        lines.append("@End")
        return "\n".join(lines) + "\n"


_TIMESTAMP = re.compile(r"\x15?\d+_\d+\x15?")
_PLUS_CODE = re.compile(r"(?<!\S)\+\S*")
_TOKEN = re.compile(r"\[[^\]]*\]|<|>|[^\s<>\[\]]+")
_RETRACE = {"[/]", "[//]", "[///]", "[/-]", "[/?]"}
_UNINTELLIGIBLE = {"xxx", "yyy", "www"}
_EDGE_CHARS = "'+_-"
_GESTURE_TRIM = ".,;:!?\"'"


def classify_paraphasia(annotation: str) -> Paraphasia:
    """Map an error code such as ``* s:r`` or ``*p:n`` to its paraphasia class."""
    s = annotation.strip()
    if s.startswith("[") and s.endswith("]"):
        s = s[1:-1].strip()
    if s.startswith("*"):
        s = s[1:].strip()
    if not s:
        return Paraphasia.NONE
    return {"s": Paraphasia.SEMANTIC, "p": Paraphasia.PHONEMIC,
            "n": Paraphasia.NEOLOGISTIC}.get(s[0].lower(), Paraphasia.NONE)


def _clean_word(tok: str) -> str | None:
    tok = tok.split("@", 1)[0].replace("(", "").replace(")", "")
    surface = "".join(c for c in tok.lower() if c.isalpha() or c in _EDGE_CHARS)
    surface = surface.strip(_EDGE_CHARS)
    if not any(c.isalpha() for c in surface) or surface in _UNINTELLIGIBLE:
        return None
    return surface


def tokenize_main_tier(line: str) -> list[Item]:
    """Split a main-tier payload (speaker tag removed) into words and gestures."""
    line = _TIMESTAMP.sub(" ", line)
    line = _PLUS_CODE.sub(" ", line)

    # gestures are placeholders until positions are known
    raw: list[list] = []
    group_starts: list[int] = []
    scope_start: int | None = None

    for tok in _TOKEN.findall(line):
        if tok == "<":
            group_starts.append(len(raw))
            continue
        if tok == ">":
            scope_start = group_starts.pop() if group_starts else scope_start
            continue
        if tok.startswith("["):
            if tok.replace(" ", "") in _RETRACE and scope_start is not None:
                raw[scope_start:] = [it for it in raw[scope_start:] if it[0] == "g"]
                scope_start = None
            elif tok[1:].lstrip().startswith("*"):
                cls = classify_paraphasia(tok)
                lo = scope_start if scope_start is not None else 0
                for it in reversed(raw[lo:]):
                    if it[0] == "w":
                        if it[2] is Paraphasia.NONE:
                            it[2] = cls
                        break
            continue
        if tok.startswith("&="):
            label = tok[2:].lower().strip(_GESTURE_TRIM)
            if label:
                raw.append(["g", label])
            continue
        if tok.startswith("&") or tok.startswith("0"):
            # fillers (&-uh), fragments (&+fr) and omitted words (0is)
            continue
        surface = _clean_word(tok)
        if surface is None:
            continue
        scope_start = len(raw)
        raw.append(["w", surface, Paraphasia.NONE])

    items: list[Item] = []
    for pos, it in enumerate(raw):
        if it[0] == "g":
            items.append(GestureEvent(it[1], pos))
        else:
            items.append(WordToken(it[1], POS.OTHER, it[2]))
    return items


_VERB_CATEGORIES = {"v", "aux", "part", "cop", "mod"}
# %mor punctuation categories (comma, quotes) have no main-tier word
_MOR_PUNCT = {"cm", "bq", "eq", "beg", "end"}


def mor_words(mor_tier: str) -> list[str]:
    return [w for w in mor_tier.split() if "|" in w and w.split("|", 1)[0].lower() not in _MOR_PUNCT]


def mor_category(mor_word: str) -> POS:
    """POS class of one %mor word, e.g. ``n|boy`` or ``pro|it~aux|be&3S``."""
    first = re.split(r"[~$]", mor_word, maxsplit=1)[0]
    main = first.split("|", 1)[0].split(":", 1)[0].lower()
    if main == "n":
        return POS.NOUN
    if main in _VERB_CATEGORIES:
        return POS.VERB
    return POS.OTHER


def align_pos(tokens: list[WordToken], mor_tier: str | None) -> tuple[list[WordToken], bool]:
    """Assign POS to word tokens from a %mor payload by position.

    Returns the retagged tokens and whether the word counts disagreed. On a
    mismatch the common prefix is aligned and the rest stays OTHER.
    """
    if mor_tier is None:
        return [WordToken(t.surface, POS.OTHER, t.paraphasia) for t in tokens], False
    mws = mor_words(mor_tier)
    out = []
    for i, t in enumerate(tokens):
        pos = mor_category(mws[i]) if i < len(mws) else POS.OTHER
        out.append(WordToken(t.surface, pos, t.paraphasia))
    return out, len(mws) != len(tokens)


def _logical_lines(raw: str) -> list[tuple[int, str]]:
    out: list[tuple[int, str]] = []
    for n, line in enumerate(raw.lstrip("﻿").splitlines(), start=1):
        if line[:1] in ("\t", " ") and out:
            prev_n, prev = out[-1]
            out[-1] = (prev_n, prev + " " + line.strip())
        elif line.strip():
            out.append((n, line.rstrip()))
    return out


def parse_transcript(raw: str, participant_tag: str = "PAR", participant_id: str = "") -> Transcript:
    """Parse CHAT text into a :class:`Transcript` of the given speaker."""
    pending: list[tuple[int, list[Item], str | None]] = []
    speaker = None
    for lineno, line in _logical_lines(raw):
        if line.startswith("*"):
            tag, _, payload = line[1:].partition(":")
            speaker = tag.strip()
            if speaker == participant_tag:
                pending.append((lineno, tokenize_main_tier(payload), None))
        elif line.startswith("%mor:") and speaker == participant_tag and pending:
            lineno0, items, _ = pending[-1]
            pending[-1] = (lineno0, items, line[len("%mor:"):].strip())

    if not pending:
        raise ChatParseError(f"no *{participant_tag}: tier lines in transcript {participant_id!r}")

    warnings: list[str] = []
    utterances = []
    for lineno, items, mor in pending:
        words = [it for it in items if isinstance(it, WordToken)]
        tagged, mismatch = align_pos(words, mor)
        if mismatch:
            msg = f"line {lineno}: %mor has {len(mor_words(mor))} words, main tier has {len(words)}"
            warnings.append(msg)
            log.warning("tier mismatch participant=%s %s", participant_id, msg)
        it_words = iter(tagged)
        merged = [next(it_words) if isinstance(it, WordToken) else it for it in items]
        if merged:
            utterances.append(Utterance(merged, lineno))
    return Transcript(participant_id, utterances, warnings)
