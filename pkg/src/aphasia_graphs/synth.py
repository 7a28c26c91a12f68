"""Synthetic CHAT corpora with a controllable severity.

Severity lives on the WAB-AQ scale (100 = no aphasia). Paraphasia and
gesture rates grow linearly with ``100 - severity`` and utterances get
shorter, so every graph feature has a known direction of association.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scores import WabRecord, write_scores

NOUNS = ("dog", "cat", "boy", "girl", "man", "woman", "house", "car", "ball", "tree", "bread",
         "butter", "knife", "plate", "sandwich", "window", "door", "water", "cup", "table", "chair",
         "book", "hand", "arm", "leg", "head", "doctor", "hospital", "wife", "husband", "son",
         "daughter", "school", "work", "church", "garden", "flower", "umbrella", "rain", "shoe")
VERBS = ("go", "run", "eat", "make", "take", "put", "see", "walk", "talk", "say", "get", "give",
         "fall", "sit", "open", "cut", "spread", "drink", "read", "write", "cry", "kick", "break",
         "help", "like")
OTHERS = (("the", "det"), ("a", "det"), ("he", "pro"), ("she", "pro"), ("it", "pro"), ("i", "pro"),
          ("they", "pro"), ("in", "prep"), ("on", "prep"), ("to", "prep"), ("with", "prep"),
          ("and", "conj"), ("but", "conj"), ("then", "adv"), ("very", "adv"), ("now", "adv"),
          ("big", "adj"), ("little", "adj"), ("good", "adj"), ("red", "adj"), ("my", "det:poss"),
          ("his", "det:poss"), ("yes", "co"), ("no", "co"), ("so", "adv"), ("well", "co"),
          ("here", "adv"), ("there", "adv"), ("up", "adv"), ("out", "adv"))
GESTURES = ("ges:point", "ges:wave", "ges:shrug", "points:self", "ges:nod", "ges:headshake",
            "ges:iconic", "laughs")
SYLLABLES = ("ba", "fo", "ki", "ter", "mu", "pa", "den", "sli", "gro", "vu", "zen", "ta")
INV_LINES = ("tell me about your stroke .", "how did you feel ?", "and then what happened ?",
             "can you tell me how you make a sandwich ?", "mhm .")


@dataclass
class SynthConfig:
    n_participants: int = 100
    seed: int = 0
    severity_min: float = 0.0
    severity_max: float = 100.0
    # rates at severity 0 (per word token); all fall linearly to the *_min values at severity 100
    para_sem_max: float = 0.08
    para_phon_max: float = 0.04
    para_neo_max: float = 0.04
    gesture_rate_min: float = 0.005
    gesture_rate_max: float = 0.35
    utterances: tuple[int, int] = (14, 22)
    words_severe: tuple[int, int] = (2, 4)
    words_mild: tuple[int, int] = (6, 11)
    pos_probs: tuple[float, float, float] = (0.30, 0.25, 0.45)  # noun, verb, other
    n_nouns: int = 40
    n_verbs: int = 25
    n_others: int = 30
    n_gestures: int = 8
    target_noise_sd: float = 4.0
    # noise outside the tallies: fillers, retracings, unintelligible words, investigator turns
    filler_prob: float = 0.15
    retrace_prob: float = 0.1
    xxx_prob: float = 0.05
    investigator_turns: bool = True

    def __post_init__(self):
        self.utterances = tuple(self.utterances)
        self.words_severe = tuple(self.words_severe)
        self.words_mild = tuple(self.words_mild)
        self.pos_probs = tuple(self.pos_probs)
        for name in ("para_sem_max", "para_phon_max", "para_neo_max", "gesture_rate_min",
                     "gesture_rate_max", "filler_prob", "retrace_prob", "xxx_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability")
        if self.para_sem_max + self.para_phon_max + self.para_neo_max > 1:
            raise ValueError("paraphasia rates must sum to at most 1")
        if not 0 <= self.severity_min <= self.severity_max <= 100:
            raise ValueError("severity range must lie in [0, 100]")

    def impairment(self, severity: float) -> float:
        return (100.0 - severity) / 100.0

    def para_rates(self, severity: float) -> tuple[float, float, float]:
        s = self.impairment(severity)
        return self.para_sem_max * s, self.para_phon_max * s, self.para_neo_max * s

    def gesture_rate(self, severity: float) -> float:
        return self.gesture_rate_min + (self.gesture_rate_max - self.gesture_rate_min) * self.impairment(severity)

    def word_range(self, severity: float) -> tuple[int, int]:
        s = 1.0 - self.impairment(severity)
        lo = round(self.words_severe[0] + (self.words_mild[0] - self.words_severe[0]) * s)
        hi = round(self.words_severe[1] + (self.words_mild[1] - self.words_severe[1]) * s)
        return lo, max(lo, hi)


@dataclass
class Tallies:
    utterances: int = 0
    words: int = 0
    gestures: int = 0
    semantic: int = 0
    phonemic: int = 0
    neologistic: int = 0
    nouns: int = 0
    verbs: int = 0


@dataclass
class SynthParticipant:
    participant_id: str
    severity: float
    text: str
    record: WabRecord
    tallies: Tallies = field(default_factory=Tallies)


def _zipf_choice(rng, seq, n=None):
    seq = seq[:n] if n else seq
    w = 1.0 / np.arange(1, len(seq) + 1)
    return seq[rng.choice(len(seq), p=w / w.sum())]


def _distort(word: str, rng) -> str:
    vowels = "aeiou"
    chars = list(word)
    i = int(rng.integers(len(chars)))
    pool = vowels if chars[i] in vowels else "bdfgklmnprstvz"
    chars[i] = pool[int(rng.integers(len(pool)))]
    out = "".join(chars)
    return out if out != word else out + "a"


def _neologism(rng) -> str:
    return "".join(SYLLABLES[int(rng.integers(len(SYLLABLES)))] for _ in range(int(rng.integers(2, 4))))


def _utterance(rng, severity: float, cfg: SynthConfig, tally: Tallies) -> tuple[str, str]:
    sem, phon, neo = cfg.para_rates(severity)
    g_rate = cfg.gesture_rate(severity)
    lo, hi = cfg.word_range(severity)
    n_words = int(rng.integers(lo, hi + 1))
    main: list[str] = []
    mor: list[str] = []
    nouns, verbs, others = NOUNS[:cfg.n_nouns], VERBS[:cfg.n_verbs], OTHERS[:cfg.n_others]

    if rng.random() < cfg.retrace_prob:
        w = _zipf_choice(rng, others)[0]
        main += ["<" + w, _zipf_choice(rng, nouns) + ">", "[/]"]
    for k in range(n_words):
        if rng.random() < g_rate:
            main.append("&=" + _zipf_choice(rng, GESTURES, cfg.n_gestures))
            tally.gestures += 1
        if k and rng.random() < cfg.filler_prob / n_words:
            main.append("&-uh")
        if k and rng.random() < cfg.xxx_prob:
            main.append("xxx")
        cls = rng.choice(3, p=np.asarray(cfg.pos_probs) / sum(cfg.pos_probs))
        if cls == 0:
            word, cat, vocab = _zipf_choice(rng, nouns), "n", nouns
        elif cls == 1:
            word, cat, vocab = _zipf_choice(rng, verbs), "v", verbs
        else:
            word, cat = _zipf_choice(rng, others)
            vocab = None
        u = rng.random()
        if vocab is not None and u < sem:
            produced = vocab[int(rng.integers(len(vocab)))]
            produced = produced if produced != word else vocab[(vocab.index(word) + 1) % len(vocab)]
            main += [produced, f"[: {word}]", "[* s:r]"]
            mor.append(f"{cat}|{word}")
            tally.semantic += 1
        elif vocab is not None and u < sem + phon:
            main += [_distort(word, rng), f"[: {word}]", "[* p:n]"]
            mor.append(f"{cat}|{word}")
            tally.phonemic += 1
        elif vocab is not None and u < sem + phon + neo:
            neologism = _neologism(rng)
            main += [neologism, "[* n:uk]"]
            mor.append(f"neo|{neologism}")
            cat = "neo"
            tally.neologistic += 1
        else:
            main.append(word)
            mor.append(f"{cat}|{word}")
        if k == n_words // 2 and n_words > 3 and rng.random() < 0.3:
            main.append(",")
            mor.append("cm|cm")
        tally.words += 1
        tally.nouns += cat == "n"
        tally.verbs += cat == "v"
    if rng.random() < g_rate:
        main.append("&=" + _zipf_choice(rng, GESTURES, cfg.n_gestures))
        tally.gestures += 1
    term = "?" if rng.random() < 0.1 else "."
    return " ".join(main) + " " + term, " ".join(mor) + " " + term


def _scores(severity: float, rng, cfg: SynthConfig, pid: str) -> WabRecord:
    def clip(v, hi):
        return round(float(min(hi, max(0.0, v))), 2)
    aq = clip(severity + rng.normal(0, cfg.target_noise_sd), 100)
    return WabRecord(
        pid, aq,
        clip(aq / 10 + rng.normal(0, 0.6), 10),
        clip(0.8 * aq + rng.normal(0, 6), 80),
        clip(aq / 10 + rng.normal(0, 0.8), 10),
    )


def generate_participant(severity: float, cfg: SynthConfig, seed, participant_id: str = "synth") -> SynthParticipant:
    """CHAT text, WAB record and exact generator tallies for one participant."""
    if not 0 <= severity <= 100:
        raise ValueError("severity must be in [0, 100]")
    rng = np.random.default_rng(seed)
    tally = Tallies()
    lines = ["@UTF8", "@Begin", "@Languages:\teng",
             "@Participants:\tPAR Participant, INV Investigator",
             "@ID:\teng|Synth|PAR|||||Participant|||",
             "@ID:\teng|Synth|INV|||||Investigator|||"]
    t_ms = int(rng.integers(0, 5000))
    n_utt = int(rng.integers(cfg.utterances[0], cfg.utterances[1] + 1))
    for _ in range(n_utt):
        if cfg.investigator_turns and rng.random() < 0.3:
            lines.append("*INV:\t" + INV_LINES[int(rng.integers(len(INV_LINES)))])
        main, mor = _utterance(rng, severity, cfg, tally)
        dur = int(rng.integers(800, 6000))
        lines.append(f"*PAR:\t{main} \x15{t_ms}_{t_ms + dur}\x15")
        t_ms += dur + int(rng.integers(100, 2000))
        if mor.strip(" .?"):
            lines.append(f"%mor:\t{mor}")
        tally.utterances += 1
    lines.append("@End")
    record = _scores(severity, rng, cfg, participant_id)
    return SynthParticipant(participant_id, severity, "\n".join(lines) + "\n", record, tally)


def participant_ids(n: int) -> list[str]:
    return [f"synth{i:04d}" for i in range(1, n + 1)]


def generate_participants(cfg: SynthConfig) -> list[SynthParticipant]:
    if cfg.n_participants < 1:
        raise ValueError("n_participants must be >= 1")
    rng = np.random.default_rng([cfg.seed, 0])
    severities = rng.uniform(cfg.severity_min, cfg.severity_max, size=cfg.n_participants)
    return [generate_participant(float(sev), cfg, [cfg.seed, i + 1], pid)
            for i, (sev, pid) in enumerate(zip(severities, participant_ids(cfg.n_participants)))]


def generate_corpus(cfg: SynthConfig, out_dir: str | Path) -> tuple[list[Path], Path]:
    """Write ``<id>.cha`` per participant plus ``wab_scores.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    people = generate_participants(cfg)
    paths = []
    for p in people:
        path = out_dir / f"{p.participant_id}.cha"
        path.write_text(p.text, encoding="utf-8")
        paths.append(path)
    scores = out_dir / "wab_scores.csv"
    write_scores([p.record for p in people], scores)
    return paths, scores
