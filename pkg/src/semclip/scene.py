"""Two-object spatial scenes and rule-based caption triples.

A scene such as "a blue square left of a red triangle" is the ground truth for
both the (toy) image and its captions.  Each scene yields a triple of captions:
the canonical original, a paraphrase that swaps the objects and inverts the
relation, and a negation that is false for the scene.  Candidates are checked
by a symbolic truth evaluator before being written out.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ContractError, DataError, VocabularyError

COLORS = ("red", "blue", "green", "yellow")
SHAPES = ("square", "triangle", "circle")
RELATIONS = ("left_of", "right_of", "above", "below")
INVERSE = {"left_of": "right_of", "right_of": "left_of", "above": "below", "below": "above"}
RELATION_WORDS = {
    "left_of": ("left", "of"),
    "right_of": ("right", "of"),
    "above": ("above",),
    "below": ("below",),
}
STRATEGIES = ("lexical_not", "relation_flip")

EOS = "<eos>"
DEFAULT_TOKENS = (
    EOS, "a", "of", "not",
    *COLORS, *SHAPES,
    "left", "right", "above", "below",
    "this", "is", "photo",
)
DATASET_FORMAT = "semclip-dataset/1"


@dataclass(frozen=True)
class Scene:
    color_a: str
    shape_a: str
    relation: str
    color_b: str
    shape_b: str

    def __post_init__(self):
        if self.color_a not in COLORS or self.color_b not in COLORS:
            raise ContractError(f"unknown color in {self}")
        if self.shape_a not in SHAPES or self.shape_b not in SHAPES:
            raise ContractError(f"unknown shape in {self}")
        if self.relation not in RELATIONS:
            raise ContractError(f"unknown relation {self.relation!r}")
        if (self.color_a, self.shape_a) == (self.color_b, self.shape_b):
            raise ContractError("scene objects must differ in color or shape")

    @property
    def key(self) -> tuple:
        return (self.color_a, self.shape_a, self.relation, self.color_b, self.shape_b)

    @property
    def object_a(self):
        return (self.color_a, self.shape_a)

    @property
    def object_b(self):
        return (self.color_b, self.shape_b)

    def features(self) -> np.ndarray:
        """One-hot color_a | shape_a | relation | color_b | shape_b (length 18)."""
        parts = (
            (COLORS, self.color_a), (SHAPES, self.shape_a), (RELATIONS, self.relation),
            (COLORS, self.color_b), (SHAPES, self.shape_b),
        )
        vec = []
        for values, v in parts:
            vec.extend(1.0 if v == x else 0.0 for x in values)
        return np.array(vec)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(d["color_a"], d["shape_a"], d["relation"], d["color_b"], d["shape_b"])


N_FEATURES = 2 * len(COLORS) + 2 * len(SHAPES) + len(RELATIONS)


@dataclass(frozen=True)
class CaptionTriple:
    scene_id: str
    original: str
    paraphrase: str
    negation: str
    negation_strategy: str
    validated: bool = False


class Proposition(NamedTuple):
    subject: tuple
    relation: str
    obj: tuple
    negated: bool


class Vocabulary:
    """Closed token list; index 0 is the end-of-sequence token."""

    def __init__(self, tokens: Iterable[str] = DEFAULT_TOKENS):
        self.tokens = tuple(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("vocabulary tokens must be unique")
        if EOS not in self.index:
            raise ContractError(f"vocabulary needs the {EOS} token")
        self.eos_index = self.index[EOS]

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise VocabularyError(f"token {token!r} is not in the vocabulary") from None

    def __contains__(self, token):
        return token in self.index

    @property
    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# captions
# --------------------------------------------------------------------------

def _phrase(color: str, shape: str, relation: str, color2: str, shape2: str, negated=False) -> str:
    words = ["a", color, shape]
    if negated:
        words.append("not")
    words += [*RELATION_WORDS[relation], "a", color2, shape2]
    return " ".join(words)


def render_caption(scene: Scene) -> str:
    return _phrase(*scene.key)


def paraphrase_caption(scene: Scene) -> str:
    return _phrase(scene.color_b, scene.shape_b, INVERSE[scene.relation], scene.color_a, scene.shape_a)


def negate_caption(scene: Scene, strategy: str) -> str:
    if strategy == "lexical_not":
        return _phrase(*scene.key, negated=True)
    if strategy == "relation_flip":
        return _phrase(scene.color_a, scene.shape_a, INVERSE[scene.relation],
                       scene.color_b, scene.shape_b)
    raise ContractError(f"unknown negation strategy {strategy!r}; expected one of {STRATEGIES}")


class CaptionParseError(DataError):
    pass


_WORD_RELATION = {words: rel for rel, words in RELATION_WORDS.items()}


def parse_caption(text: str) -> Proposition:
    """Parse ``a C S [not] REL a C S`` into a proposition."""
    words = text.split()

    def obj(at):
        if len(words) < at + 3 or words[at] != "a":
            raise CaptionParseError(f"expected 'a <color> <shape>' at word {at} in {text!r}")
        color, shape = words[at + 1], words[at + 2]
        if color not in COLORS or shape not in SHAPES:
            raise CaptionParseError(f"unknown object {color!r} {shape!r} in {text!r}")
        return (color, shape)

    subject = obj(0)
    pos = 3
    negated = pos < len(words) and words[pos] == "not"
    pos += negated
    for words_, rel in _WORD_RELATION.items():
        if tuple(words[pos:pos + len(words_)]) == words_:
            relation = rel
            pos += len(words_)
            break
    else:
        raise CaptionParseError(f"no relation found at word {pos} in {text!r}")
    target = obj(pos)
    if pos + 3 != len(words):
        raise CaptionParseError(f"trailing words in {text!r}")
    return Proposition(subject, relation, target, negated)


def scene_from_caption(text: str) -> Scene:
    """Scene read of an affirmative caption (inverse of :func:`render_caption`)."""
    prop = parse_caption(text)
    if prop.negated:
        raise CaptionParseError(f"negated caption {text!r} does not describe a unique scene")
    return Scene(*prop.subject, prop.relation, *prop.obj)


def evaluate(prop: Proposition, scene: Scene) -> bool:
    """Truth of ``prop`` in ``scene`` (closed world: one relation per object pair)."""
    if prop.subject == scene.object_a and prop.obj == scene.object_b:
        holds = prop.relation == scene.relation
    elif prop.subject == scene.object_b and prop.obj == scene.object_a:
        holds = prop.relation == INVERSE[scene.relation]
    else:
        holds = False
    return holds != prop.negated


def check_triple(triple: CaptionTriple, scene: Scene) -> tuple[bool, str]:
    """Symbolic validation; returns ``(ok, reason)``."""
    try:
        orig = parse_caption(triple.original)
        para = parse_caption(triple.paraphrase)
        neg = parse_caption(triple.negation)
    except CaptionParseError as exc:
        return False, f"unparseable caption: {exc}"
    if not evaluate(orig, scene):
        return False, "original is false for the scene"
    if not evaluate(para, scene):
        return False, "paraphrase does not retain the meaning of the original"
    if evaluate(neg, scene):
        return False, "negation does not contradict the scene"
    if triple.negation in (triple.original, triple.paraphrase):
        return False, "negation repeats another caption"
    return True, "ok"


def validate_triple(triple: CaptionTriple, scene: Scene) -> bool:
    return check_triple(triple, scene)[0]


# --------------------------------------------------------------------------
# sampling and dataset files
# --------------------------------------------------------------------------

def sample_scene(rng: np.random.Generator) -> Scene:
    """Uniform draw over valid scenes (rejection on identical objects)."""
    while True:
        ca, cb = rng.integers(len(COLORS), size=2)
        sa, sb = rng.integers(len(SHAPES), size=2)
        rel = rng.integers(len(RELATIONS))
        if (ca, sa) != (cb, sb):
            return Scene(COLORS[ca], SHAPES[sa], RELATIONS[rel], COLORS[cb], SHAPES[sb])


def make_triple(scene_id: str, scene: Scene, strategy: str) -> CaptionTriple:
    return CaptionTriple(scene_id, render_caption(scene), paraphrase_caption(scene),
                         negate_caption(scene, strategy), strategy)


def generate_record(index: int, seed_seq: np.random.SeedSequence) -> tuple[Scene, CaptionTriple, int]:
    """Generate one validated triple from its own seed stream.

    Returns ``(scene, triple, rejections)``; a rejected candidate is replaced by
    the alternative strategy, then by a fresh scene.
    """
    rng = np.random.default_rng(seed_seq)
    scene_id = f"s{index:06d}"
    rejections = 0
    while True:
        scene = sample_scene(rng)
        first = STRATEGIES[int(rng.integers(2))]
        for strategy in (first, *(s for s in STRATEGIES if s != first)):
            triple = make_triple(scene_id, scene, strategy)
            if validate_triple(triple, scene):
                return scene, replace(triple, validated=True), rejections
            rejections += 1


def build_records(count: int, seed: int) -> tuple[list[tuple[Scene, CaptionTriple]], int]:
    if count <= 0:
        raise ContractError("count must be positive")
    children = np.random.SeedSequence(seed).spawn(count)
    records, rejected = [], 0
    for i, child in enumerate(children):
        scene, triple, r = generate_record(i, child)
        records.append((scene, triple))
        rejected += r
    return records, rejected


def split_records(records, split_fraction: float, seed: int):
    """Train/test split with disjoint scene *content*, so test scenes are unseen."""
    if not 0.0 < split_fraction < 1.0:
        raise ContractError("split_fraction must lie in (0, 1)")
    keys = list(dict.fromkeys(scene.key for scene, _ in records))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    order = rng.permutation(len(keys))
    n_train = int(round(split_fraction * len(keys)))
    if len(keys) > 1:
        n_train = min(max(n_train, 1), len(keys) - 1)
    train_keys = {keys[i] for i in order[:n_train]}
    train = [r for r in records if r[0].key in train_keys]
    test = [r for r in records if r[0].key not in train_keys]
    return train, test


def record_to_json(scene: Scene, triple: CaptionTriple) -> str:
    return json.dumps({
        "scene_id": triple.scene_id,
        "scene": scene.to_dict(),
        "original": triple.original,
        "paraphrase": triple.paraphrase,
        "negation": triple.negation,
        "strategy": triple.negation_strategy,
    }, sort_keys=True, separators=(",", ":"))


def record_from_json(line: str) -> tuple[Scene, CaptionTriple]:
    d = json.loads(line)
    scene = Scene.from_dict(d["scene"])
    triple = CaptionTriple(d["scene_id"], d["original"], d["paraphrase"], d["negation"], d["strategy"])
    ok, reason = check_triple(triple, scene)
    if not ok:
        raise DataError(f"record {d['scene_id']} fails validation: {reason}")
    return scene, replace(triple, validated=True)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate_dataset(count: int, seed: int, split_fraction: float, out_dir,
                     vocab: Vocabulary | None = None) -> dict:
    """Write ``train.jsonl``, ``test.jsonl`` and ``manifest.json``; return the manifest."""
    vocab = vocab or Vocabulary()
    records, rejected = build_records(count, seed)
    train, test = split_records(records, split_fraction, seed)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {}
        for name, part in (("train", train), ("test", test)):
            path = out / f"{name}.jsonl"
            path.write_text("".join(record_to_json(s, t) + "\n" for s, t in part), encoding="utf-8")
            files[name] = {"path": path.name, "records": len(part), "sha256": _sha256(path)}
        manifest = {
            "format": DATASET_FORMAT,
            "seed": seed,
            "count": count,
            "split_fraction": split_fraction,
            "vocab_hash": vocab.hash,
            "validation_rejections": rejected,
            "files": files,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write dataset to {out}: {exc}") from exc
    return manifest


@dataclass
class Dataset:
    train: list
    test: list
    manifest: dict
    root: Path

    @property
    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.manifest["files"]):
            h.update(self.manifest["files"][name]["sha256"].encode())
        return h.hexdigest()


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no dataset manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise DataError(f"unsupported dataset format {manifest.get('format')!r}")
    parts = {}
    for name in ("train", "test"):
        path = root / manifest["files"][name]["path"]
        if _sha256(path) != manifest["files"][name]["sha256"]:
            raise DataError(f"{path} does not match its manifest checksum")
        with open(path, encoding="utf-8") as fh:
            parts[name] = [record_from_json(line) for line in fh if line.strip()]
    return Dataset(parts["train"], parts["test"], manifest, root)

