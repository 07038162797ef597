"""Perturbation baselines (EDA, AEDA) and the random same-label in-context
prompting baseline.

All operations are pure given their seed. EDA uses a bundled plain-text
synonym lexicon (word TAB comma-separated synonyms) instead of an external
lexical database.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from importlib import resources

from .corpus import LabelSpace
from .genbackend import GenParams, generate
from .prompt import PromptSpec, RenderedPrompt, render_act_cue, render_emotion_cue


class BaselineError(ValueError):
    pass


def load_lexicon(path=None) -> dict[str, list[str]]:
    if path is None:
        text = resources.files("weakdap.data").joinpath("lexicon.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    lexicon = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, _, syns = line.partition("\t")
        entries = [s.strip() for s in syns.split(",") if s.strip()]
        if entries:
            lexicon[word.strip().lower()] = entries
    return lexicon


@dataclass
class EdaConfig:
    alpha_sr: float = 0.1
    alpha_ri: float = 0.1
    alpha_rs: float = 0.1
    alpha_rd: float = 0.1
    n_aug: int = 1
    seed: int = 0
    synonym_lexicon: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("alpha_sr", "alpha_ri", "alpha_rs", "alpha_rd"):
            if not (0 <= getattr(self, name) <= 1):
                raise BaselineError(f"{name} must be in [0, 1]")
        for word, syns in self.synonym_lexicon.items():
            if not syns:
                raise BaselineError(f"lexicon entry {word!r} has no synonyms")


@dataclass
class AedaConfig:
    punctuation: tuple[str, ...] = (".", ";", "?", ":", "!", ",")
    alpha: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not self.punctuation:
            raise BaselineError("punctuation set must be non-empty")


def _synonym_replacement(words, alpha, lexicon, rng):
    out = []
    for w in words:
        syns = lexicon.get(w.lower())
        if syns and rng.random() < alpha:
            out.append(rng.choice(syns))
        else:
            out.append(w)
    return out


def _random_insertion(words, alpha, lexicon, rng):
    out = list(words)
    candidates = [w for w in words if w.lower() in lexicon]
    for w in words:
        if candidates and rng.random() < alpha:
            source = rng.choice(candidates)
            synonym = rng.choice(lexicon[source.lower()])
            out.insert(rng.randrange(len(out) + 1), synonym)
    return out


def _random_swap(words, alpha, rng):
    out = list(words)
    if len(out) < 2:
        return out
    for i in range(len(out)):
        if rng.random() < alpha:
            j = rng.randrange(len(out))
            out[i], out[j] = out[j], out[i]
    return out


def _random_deletion(words, alpha, rng):
    if alpha == 0:
        return list(words)
    out = [w for w in words if rng.random() >= alpha]
    if not out:
        out = [words[rng.randrange(len(words))]]  # guaranteed survivor
    return out


def eda_augment(text: str, cfg: EdaConfig) -> list[str]:
    """n_aug variants, each one seeded pass of synonym replacement, random
    insertion, random swap, and random deletion at their per-word rates.
    Deletion never empties the text."""
    words = text.split()
    if not words:
        raise BaselineError("empty text")
    out = []
    for i in range(cfg.n_aug):
        rng = random.Random(f"{cfg.seed}|{i}")
        w = _synonym_replacement(words, cfg.alpha_sr, cfg.synonym_lexicon, rng)
        w = _random_insertion(w, cfg.alpha_ri, cfg.synonym_lexicon, rng)
        w = _random_swap(w, cfg.alpha_rs, rng)
        w = _random_deletion(w, cfg.alpha_rd, rng)
        out.append(" ".join(w))
    return out


def aeda_augment(text: str, cfg: AedaConfig) -> str:
    """Insert r punctuation marks before distinct word positions, r uniform in
    [1, max(1, floor(alpha * n))]; the word sequence is unchanged."""
    words = text.split()
    n = len(words)
    if n == 0:
        raise BaselineError("empty text")
    rng = random.Random(cfg.seed)
    r_max = max(1, math.floor(cfg.alpha * n))
    r = rng.randint(1, r_max)
    positions = set(rng.sample(range(n), min(r, n)))
    out = []
    for i, w in enumerate(words):
        if i in positions:
            out.append(rng.choice(cfg.punctuation))
        out.append(w)
    return " ".join(out)


def random_in_context_prompt(label: str, pool, spec: PromptSpec, k: int = 10,
                             seed: int = 0) -> RenderedPrompt:
    """Context-free in-context prompt: min(k, |pool|) seeded same-label
    utterances, then a bare generation cue. The contrast condition against
    dialogue-context prompting."""
    pool = list(pool)
    if not pool:
        raise BaselineError("empty example pool")
    rng = random.Random(seed)
    examples = rng.sample(pool, min(k, len(pool)))
    name, other = spec.speaker_names
    if spec.task == "emotion":
        cue = render_emotion_cue(name, label)
    elif spec.task == "act":
        cue = render_act_cue(name, other, label)
    else:
        cue = f"intent: {label} =>"
    lines = [f"{cue} {ex}" for ex in examples]
    lines.append(cue)
    return RenderedPrompt(text="\n".join(lines), target_speaker="A",
                          prescribed_label=label, context_turn_count=len(examples))


def random_in_context_augment(label: str, pool, backend, spec: PromptSpec,
                              label_space: LabelSpace, params: GenParams,
                              cand_id: str, k: int = 10, seed: int = 0):
    """Generate one candidate from a random same-label in-context prompt; the
    candidate carries the label and no dialogue context."""
    from .augment import Candidate
    from .corpus import LabeledUtterance

    prompt = random_in_context_prompt(label, pool, spec, k=k, seed=seed)
    completions = generate(prompt, params, backend)
    c = completions[0]
    if c.parsed is None:
        return Candidate(id=cand_id, payload=None, prescribed_label=label,
                         strategy="incontext", source_id="pool", verdict="dropped_parse")
    # single-turn payload regardless of task: the point of this baseline is the
    # absence of dialogue context, so the label rides in the utterance record
    payload = LabeledUtterance(id=cand_id, text=c.parsed, intent=label, lang="en",
                               provenance="silver", source_id="pool")
    return Candidate(id=cand_id, payload=payload, prescribed_label=label,
                     strategy="incontext", source_id="pool", hidden_label=c.hidden_label)
