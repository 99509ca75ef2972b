"""Dataset parsing, windowing, question tagging and synthetic corpora."""

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .encoder import TURN, tokenize
from .errors import ConfigError, ParseError
from .tensor import RngState

RACE_OPTIONS = 4
DREAM_OPTIONS = 3


@dataclass
class McqaExample:
    id: str
    passage_tokens: list
    question_tokens: list
    options: list
    gold: int

    def validate(self):
        if len(self.options) < 2:
            raise ValueError(f"{self.id}: need at least 2 options")
        if not 0 <= self.gold < len(self.options):
            raise ValueError(f"{self.id}: gold {self.gold} out of range")
        if any(len(o) == 0 for o in self.options):
            raise ValueError(f"{self.id}: empty option")
        return self


@dataclass
class WindowedExample(McqaExample):
    parent: str = ""
    window: int = 0


def _files(path, suffixes):
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.rglob("*") if p.is_file() and p.suffix in suffixes)
    return [path]


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}", path) from None
    except OSError as exc:
        raise ParseError(f"cannot read: {exc}", path) from None


def _race_record(doc, path, n_options):
    for key in ("article", "questions", "options", "answers"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}", path)
    qs, opts, ans = doc["questions"], doc["options"], doc["answers"]
    if not (len(qs) == len(opts) == len(ans)):
        raise ParseError("questions, options and answers differ in length", path)
    base = str(doc.get("id", Path(path).stem))
    passage = tokenize(doc["article"])
    out = []
    for i, (q, o, a) in enumerate(zip(qs, opts, ans)):
        if not isinstance(o, list) or len(o) != n_options:
            raise ParseError(f"expected {n_options} options, got {len(o) if isinstance(o, list) else o!r}",
                             path, i)
        if not isinstance(a, str) or len(a) != 1 or not 0 <= ord(a.upper()) - ord("A") < n_options:
            raise ParseError(f"answer letter {a!r} out of range", path, i)
        options = [tokenize(str(t)) for t in o]
        if any(len(t) == 0 for t in options):
            raise ParseError("empty option", path, i)
        out.append(McqaExample(f"{base}-{i}", passage, tokenize(str(q)), options,
                               ord(a.upper()) - ord("A")))
    if not passage and out:
        raise ParseError("empty article", path)
    return out


def parse_race(path, n_options=RACE_OPTIONS):
    """One example per question of every RACE JSON file under ``path``.

    Either every question parses or a :class:`ParseError` is raised.
    """
    out = []
    for f in _files(path, {".txt", ".json"}):
        doc = _load_json(f)
        docs = doc if isinstance(doc, list) else [doc]
        for d in docs:
            if not isinstance(d, dict):
                raise ParseError("expected a JSON object per article", f)
            out.extend(_race_record(d, f, n_options))
    return out


def parse_dream(path, n_options=DREAM_OPTIONS):
    """DREAM files are lists of ``[turns, questions, id]``; turns are joined with a separator token."""
    out = []
    for f in _files(path, {".json"}):
        doc = _load_json(f)
        if not isinstance(doc, list):
            raise ParseError("expected a list of dialogues", f)
        counter = 0
        for rec in doc:
            if not isinstance(rec, list) or len(rec) != 3:
                raise ParseError("dialogue record must be [turns, questions, id]", f, counter)
            turns, questions, did = rec
            passage = []
            for t in turns:
                if passage:
                    passage.append(TURN)
                passage.extend(tokenize(str(t)))
            if not passage:
                raise ParseError(f"dialogue {did} is empty", f, counter)
            for j, q in enumerate(questions):
                try:
                    text, choices, answer = q["question"], q["choice"], q["answer"]
                except (KeyError, TypeError):
                    raise ParseError("question needs 'question', 'choice' and 'answer'", f, counter) from None
                if len(choices) != n_options:
                    raise ParseError(f"expected {n_options} choices, got {len(choices)}", f, counter)
                hits = [k for k, c in enumerate(choices) if c == answer]
                if len(hits) != 1:
                    why = "not among choices" if not hits else "matches several choices"
                    raise ParseError(f"answer {answer!r} {why}", f, counter)
                options = [tokenize(str(c)) for c in choices]
                if any(len(o) == 0 for o in options):
                    raise ParseError("empty choice", f, counter)
                out.append(McqaExample(f"{did}-{j}", passage, tokenize(str(text)), options, hits[0]))
                counter += 1
    return out


def sliding_window(tokens, max_len, stride=None):
    """``[(start, sub_tokens), ...]`` covering ``tokens``; the last window is end-aligned."""
    if max_len < 1:
        raise ConfigError("max_len must be >= 1")
    stride = max(1, max_len // 2) if stride is None else stride
    if not 1 <= stride <= max_len:
        raise ConfigError(f"stride must lie in [1, {max_len}], got {stride}")
    n = len(tokens)
    if n <= max_len:
        return [(0, list(tokens))]
    starts = list(range(0, n - max_len + 1, stride))
    if starts[-1] + max_len < n:
        starts.append(n - max_len)
    return [(s, list(tokens[s:s + max_len])) for s in starts]


def window_examples(examples, max_len, stride=None):
    """Split every over-long passage into windowed copies of its question."""
    out = []
    for ex in examples:
        for w, (_, sub) in enumerate(sliding_window(ex.passage_tokens, max_len, stride)):
            out.append(WindowedExample(ex.id if w == 0 else f"{ex.id}#w{w}", sub, ex.question_tokens,
                                       ex.options, ex.gold, parent=ex.id, window=w))
    return out


_INTERROGATIVES = {"what", "which", "who", "whom", "whose", "when", "where", "why", "how"}


def tag_question(question_tokens):
    """Heuristic question type: ``cloze``, ``what``, ``which`` or ``other``."""
    if any(t and set(t) == {"_"} for t in question_tokens):
        return "cloze"
    for t in question_tokens:
        if t in _INTERROGATIVES:
            return t if t in ("what", "which") else "other"
    return "other"


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a synthetic keyword-matching corpus."""

    questions: int = 32
    n_options: int = 4
    vocab: int = 64
    sentences: int = 3
    sentence_len: int = 4
    option_len: int = 1
    seed: int = 7


def synth_words(vocab):
    """``(keyword_vocab, filler_vocab)``: the first quarter of ``w0..w{vocab-1}`` are keywords."""
    words = [f"w{i}" for i in range(vocab)]
    k = max(2, vocab // 4)
    return words[:k], words[k:]


def synth_dataset(spec):
    """Keyword questions.

    Words split into a keyword vocabulary and a filler vocabulary. Each
    passage has ``sentences`` sentences of distinct filler words, one of which
    (the keyword sentence) carries a single keyword. The question quotes the
    keyword sentence's filler words; the correct option holds the keyword;
    distractors and option padding use filler words absent from the passage.
    Gold positions follow a shuffled, exactly balanced schedule.
    """
    if spec.n_options < 2:
        raise ConfigError("synthetic questions need at least 2 options")
    keywords, fillers = synth_words(spec.vocab)
    in_passage = spec.sentences * spec.sentence_len - 1
    outside = spec.n_options * spec.option_len - 1
    if len(fillers) < in_passage + outside:
        raise ConfigError(
            f"vocab {spec.vocab} too small: {len(fillers)} filler words, "
            f"need {in_passage + outside} distinct ones per question")
    rng = RngState(spec.seed).fork(0x53594E54)
    golds = [i % spec.n_options for i in range(spec.questions)]
    golds = [golds[i] for i in rng.permutation(spec.questions)]
    out = []
    for qi in range(spec.questions):
        picked = rng.choice(fillers, in_passage + outside)
        chosen, pool = picked[:in_passage], picked[in_passage:]
        keyword = rng.choice(keywords)
        key_sent = int(rng.integers(spec.sentences, 1)[0])
        key_pos = int(rng.integers(spec.sentence_len, 1)[0])
        sents, it = [], iter(chosen)
        for k in range(spec.sentences):
            s = [next(it) for _ in range(spec.sentence_len - (k == key_sent))]
            if k == key_sent:
                s.insert(key_pos, keyword)
            sents.append(s)
        passage = [w for s in sents for w in s + ["."]]
        question = ["what", "goes", "with"] + [w for w in sents[key_sent] if w != keyword] + ["?"]
        fill, pool = pool[:spec.option_len - 1], pool[spec.option_len - 1:]
        correct = [keyword] + fill
        correct = [correct[i] for i in rng.permutation(len(correct))]
        options = [pool[k * spec.option_len:(k + 1) * spec.option_len] for k in range(spec.n_options - 1)]
        options.insert(golds[qi], correct)
        out.append(McqaExample(f"synth{spec.seed}-{qi}", passage, question, options, golds[qi]))
    return out


def to_race_json(examples, article_id="synth"):
    """Serialize examples to RACE-format documents, one per distinct passage."""
    docs = {}
    for ex in examples:
        key = tuple(ex.passage_tokens)
        if key not in docs:
            docs[key] = {"id": f"{article_id}-{len(docs)}", "article": " ".join(ex.passage_tokens),
                         "questions": [], "options": [], "answers": []}
        d = docs[key]
        d["questions"].append(" ".join(ex.question_tokens))
        d["options"].append([" ".join(o) for o in ex.options])
        d["answers"].append(chr(ord("A") + ex.gold))
    return list(docs.values())


def write_race(examples, path, article_id="synth"):
    """Write examples as a RACE-format JSON list to ``path``."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_race_json(examples, article_id), fh, indent=1)


def with_options(ex, order):
    """Copy of ``ex`` with options permuted so new option ``k`` is old option ``order[k]``."""
    order = list(order)
    return replace(ex, options=[ex.options[i] for i in order], gold=order.index(ex.gold))
