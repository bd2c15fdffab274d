"""Deterministic generator of dialog trees plus paraphrase corpora.

Generated texts are sequences of synthetic word tokens. Paraphrases of a
prototype keep at least half of its tokens and pad with globally fresh noise
tokens, so paraphrases of the same prototype overlap heavily while different
prototypes share no tokens at all. FAQ questions additionally borrow a couple
of tokens from their node's text, giving text-similarity retrieval a signal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import DialogTree, InvalidParams, parse_tree

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

_UNIT_TABLES = [
    {"seconds": 1.0, "minutes": 60.0, "hours": 3600.0, "days": 86400.0, "weeks": 604800.0},
    {"days": 1.0, "weeks": 7.0},
    {},
]

_CATEGORY_LABELS = ["alpha", "beta", "gamma", "delta", "omega"]


@dataclass
class SplitTexts:
    prototypes: list[str]
    train: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)

    def texts(self, split: str) -> list[str]:
        if split == "prototype":
            return list(self.prototypes)
        if split == "train":
            return self.prototypes + self.train
        if split == "test":
            return list(self.test) if self.test else list(self.prototypes)
        raise ValueError(f"unknown split {split!r}")


@dataclass
class UtteranceCorpus:
    """Paraphrase pools keyed by answer edge id and by information node id."""

    answers: dict[str, SplitTexts]
    faq: dict[str, SplitTexts]

    def answer_texts(self, edge_id: str, split: str) -> list[str]:
        entry = self.answers.get(edge_id)
        return entry.texts(split) if entry else []

    def faq_texts(self, node_id: str, split: str) -> list[str]:
        entry = self.faq.get(node_id)
        return entry.texts(split) if entry else []

    def to_json(self) -> dict:
        def dump(table: dict[str, SplitTexts]) -> dict:
            return {
                key: {"prototypes": st.prototypes, "train": st.train, "test": st.test}
                for key, st in table.items()
            }

        return {"answers": dump(self.answers), "faq": dump(self.faq)}

    @classmethod
    def from_json(cls, data: dict) -> "UtteranceCorpus":
        def load(table: dict) -> dict[str, SplitTexts]:
            return {
                key: SplitTexts(
                    prototypes=list(entry["prototypes"]),
                    train=list(entry.get("train", [])),
                    test=list(entry.get("test", [])),
                )
                for key, entry in table.items()
            }

        return cls(answers=load(data["answers"]), faq=load(data["faq"]))


class _TokenFactory:
    """Pronounceable, globally unique tokens; deterministic under the rng."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.seen: set[str] = set()

    def token(self) -> str:
        for _ in range(64):
            syllables = int(self.rng.integers(2, 4))
            word = "".join(
                _CONSONANTS[int(self.rng.integers(len(_CONSONANTS)))]
                + _VOWELS[int(self.rng.integers(len(_VOWELS)))]
                for _ in range(syllables)
            )
            if word not in self.seen:
                self.seen.add(word)
                return word
        word = f"tok{len(self.seen)}"
        self.seen.add(word)
        return word

    def phrase(self, length: int) -> list[str]:
        return [self.token() for _ in range(length)]


def _paraphrase(prototype_tokens: list[str], factory: _TokenFactory, rng: np.random.Generator) -> str:
    n = len(prototype_tokens)
    keep = int(rng.integers(math.ceil(n / 2), n + 1))
    kept_idx = sorted(rng.choice(n, size=keep, replace=False).tolist())
    tokens = [prototype_tokens[i] for i in kept_idx]
    for _ in range(n - keep):
        pos = int(rng.integers(len(tokens) + 1))
        tokens.insert(pos, factory.token())
    return " ".join(tokens)


@dataclass
class _Skeleton:
    parent: dict[str, str]
    children: dict[str, list[str]]
    depth: dict[str, int]
    kind: dict[str, str]


def synthesize_tree(
    node_count: int,
    seed: int,
    max_branching: int = 3,
    depth_target: int | None = None,
    faq_per_info: int = 2,
    paraphrases_per_answer: int = 4,
) -> tuple[DialogTree, UtteranceCorpus]:
    """Build a validated random tree and its paraphrase corpus.

    All four node kinds are present once node_count >= 7 (below that the
    variable/logic pattern cannot fit alongside start and a leaf).
    """
    if node_count < 3:
        raise InvalidParams(f"node_count must be >= 3, got {node_count}")
    if max_branching < 2:
        raise InvalidParams(f"max_branching must be >= 2, got {max_branching}")
    if faq_per_info < 0 or paraphrases_per_answer < 0:
        raise InvalidParams("faq_per_info and paraphrases_per_answer must be >= 0")
    if depth_target is None:
        depth_target = max(3, int(math.log2(node_count)) + 2)

    rng = np.random.default_rng(seed)
    width = max(2, len(str(node_count)))
    ids = [f"n{idx:0{width}d}" for idx in range(node_count)]

    skel = _grow_skeleton(ids, rng, max_branching, depth_target)
    _assign_kinds(skel, ids, rng)
    return _emit(skel, ids, rng, faq_per_info, paraphrases_per_answer, max_branching)


def _grow_skeleton(
    ids: list[str], rng: np.random.Generator, max_branching: int, depth_target: int
) -> _Skeleton:
    n = len(ids)
    parent: dict[str, str] = {}
    children: dict[str, list[str]] = {nid: [] for nid in ids}
    depth = {ids[0]: 0}

    def attach(child: str, par: str) -> None:
        parent[child] = par
        children[par].append(child)
        depth[child] = depth[par] + 1

    cursor = 1
    # fixed prefix guaranteeing a variable->logic pattern plus a branching start
    if n >= 7:
        a, b, c, d, e = ids[1:6]
        attach(a, ids[0])
        attach(e, ids[0])
        attach(b, a)
        attach(c, b)
        attach(d, b)
        cursor = 6
    locked = {ids[1]} if n >= 7 else set()  # variable node keeps exactly one child

    while cursor < n:
        frontier = [
            nid
            for nid in ids[:cursor]
            if nid in depth and len(children[nid]) < max_branching and nid not in locked
        ]
        current_depth = max(depth.values())
        if current_depth < depth_target:
            deepest = max(d for nid, d in depth.items() if nid in frontier) if frontier else 0
            pool = [nid for nid in frontier if depth[nid] == deepest]
        else:
            pool = frontier
        par = pool[int(rng.integers(len(pool)))]
        attach(ids[cursor], par)
        cursor += 1

    return _Skeleton(parent=parent, children=children, depth=depth, kind={})


def _assign_kinds(skel: _Skeleton, ids: list[str], rng: np.random.Generator) -> None:
    n = len(ids)
    kind = skel.kind
    kind[ids[0]] = "start"
    if n >= 7:
        kind[ids[1]] = "variable"
        kind[ids[2]] = "logic"
    extra_pairs = n // 12
    for nid in ids:
        if extra_pairs <= 0:
            break
        if nid in kind or nid == ids[0] or len(skel.children[nid]) != 1:
            continue
        child = skel.children[nid][0]
        if child in kind or len(skel.children[child]) < 2:
            continue
        if rng.random() < 0.6:
            kind[nid] = "variable"
            kind[child] = "logic"
            extra_pairs -= 1
    for nid in ids:
        if nid in kind:
            continue
        outdeg = len(skel.children[nid])
        if outdeg == 0:
            kind[nid] = "information"
        elif outdeg >= 2:
            kind[nid] = "dialog"
        else:
            kind[nid] = "dialog" if rng.random() < 0.7 else "information"


def _emit(
    skel: _Skeleton,
    ids: list[str],
    rng: np.random.Generator,
    faq_per_info: int,
    paraphrases_per_answer: int,
    max_branching: int,
) -> tuple[DialogTree, UtteranceCorpus]:
    factory = _TokenFactory(rng)
    edge_counter = 0
    raw_nodes = []
    answer_pools: dict[str, SplitTexts] = {}
    faq_pools: dict[str, SplitTexts] = {}
    info_len = max(8, 2 * faq_per_info + 4)

    def split_counts() -> tuple[int, int]:
        if paraphrases_per_answer < 2:
            return paraphrases_per_answer, 0
        test = max(1, round(paraphrases_per_answer * 0.4))
        return paraphrases_per_answer - test, test

    def make_pool(prototypes: list[list[str]]) -> SplitTexts:
        train_n, test_n = split_counts()
        pool = SplitTexts(prototypes=[" ".join(p) for p in prototypes])
        for proto in prototypes:
            for _ in range(train_n):
                pool.train.append(_paraphrase(proto, factory, rng))
            for _ in range(test_n):
                pool.test.append(_paraphrase(proto, factory, rng))
        return pool

    for nid in ids:
        node_kind = skel.kind[nid]
        child_ids = skel.children[nid]
        raw: dict = {"id": nid, "kind": node_kind}
        if node_kind == "logic":
            raw["text"] = ""
            var_node = skel.parent[nid]
            var_spec = next(r for r in raw_nodes if r["id"] == var_node)["variable"]
            raw["answers"] = _logic_edges(nid, child_ids, var_spec, rng, edge_counter)
            edge_counter += len(child_ids)
        else:
            text_tokens = factory.phrase(info_len if node_kind == "information" else 6)
            raw["text"] = " ".join(text_tokens)
            answers = []
            for child in child_ids:
                edge_id = f"e{edge_counter:04d}"
                edge_counter += 1
                if node_kind in ("start", "dialog"):
                    proto = factory.phrase(int(rng.integers(4, 7)))
                    answers.append({"id": edge_id, "text": " ".join(proto), "target": child})
                    answer_pools[edge_id] = make_pool([proto])
                else:
                    answers.append({"id": edge_id, "text": "", "target": child})
            raw["answers"] = answers
            if node_kind == "variable":
                n_branches = len(skel.children[child_ids[0]]) if child_ids else 2
                raw["variable"] = _variable_spec(nid, rng, n_branches)
            if node_kind == "information" and faq_per_info > 0:
                protos = []
                for q in range(faq_per_info):
                    borrowed = text_tokens[2 * q : 2 * q + 2]
                    protos.append(borrowed + factory.phrase(8 - len(borrowed)))
                raw["faq"] = [" ".join(p) for p in protos]
                faq_pools[nid] = make_pool(protos)
        raw_nodes.append(raw)

    tree = parse_tree({"start": ids[0], "nodes": raw_nodes})
    return tree, UtteranceCorpus(answers=answer_pools, faq=faq_pools)


def _variable_spec(nid: str, rng: np.random.Generator, n_branches: int) -> dict:
    # boolean branching only distinguishes two outcomes; category labels cap at 6
    kinds = ["number", "category"]
    if n_branches <= 2:
        kinds.append("boolean")
    if n_branches > len(_CATEGORY_LABELS) + 1:
        kinds = ["number"]
    value_type = kinds[int(rng.integers(len(kinds)))]
    spec: dict = {"name": f"var_{nid}", "type": value_type}
    if value_type == "number":
        units = _UNIT_TABLES[int(rng.integers(len(_UNIT_TABLES)))]
        if units:
            spec["units"] = units
    return spec


def _logic_edges(
    nid: str,
    child_ids: list[str],
    var_spec: dict,
    rng: np.random.Generator,
    edge_counter: int,
) -> list[dict]:
    """Condition edges for every child but the last, which becomes the default."""
    var = var_spec["name"]
    vtype = var_spec["type"]
    units = var_spec.get("units") or {}
    edges = []
    n_branches = len(child_ids)
    if vtype == "number":
        # ascending thresholds; first-match ordering keeps every branch reachable
        if units:
            unit, mult = sorted(units.items(), key=lambda kv: kv[1])[-1]
            magnitudes = sorted(rng.choice(np.arange(2, 12), size=n_branches - 1, replace=False).tolist())
            literals = [f"{int(m)} {unit}" for m in magnitudes]
        else:
            magnitudes = sorted(rng.choice(np.arange(5, 100), size=n_branches - 1, replace=False).tolist())
            literals = [float(m) for m in magnitudes]
        for idx, child in enumerate(child_ids[:-1]):
            edges.append(
                {
                    "id": f"e{edge_counter + idx:04d}",
                    "text": "",
                    "target": child,
                    "condition": {"var": var, "op": "lt", "value": literals[idx]},
                }
            )
    elif vtype == "boolean":
        for idx, child in enumerate(child_ids[:-1]):
            edges.append(
                {
                    "id": f"e{edge_counter + idx:04d}",
                    "text": "",
                    "target": child,
                    "condition": {"var": var, "op": "eq", "value": idx == 0},
                }
            )
    else:
        labels = list(_CATEGORY_LABELS)
        for idx, child in enumerate(child_ids[:-1]):
            edges.append(
                {
                    "id": f"e{edge_counter + idx:04d}",
                    "text": "",
                    "target": child,
                    "condition": {"var": var, "op": "eq", "value": labels[idx % len(labels)]},
                }
            )
    edges.append(
        {"id": f"e{edge_counter + n_branches - 1:04d}", "text": "", "target": child_ids[-1]}
    )
    return edges


def save_tree_and_corpus(path: str, tree: DialogTree, corpus: UtteranceCorpus) -> str:
    """Write tree JSON to `path` and the corpus to `<path minus .json>.corpus.json`."""
    from .graph import serialize_tree

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(serialize_tree(tree), fh, indent=1, sort_keys=False)
        fh.write("\n")
    corpus_path = (path[:-5] if path.endswith(".json") else path) + ".corpus.json"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        json.dump(corpus.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return corpus_path


def load_corpus(path: str) -> UtteranceCorpus:
    with open(path, "r", encoding="utf-8") as fh:
        return UtteranceCorpus.from_json(json.load(fh))
