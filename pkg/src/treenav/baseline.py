"""Retrieval/handcrafted baseline: a first-turn mode classifier routes to either
one-shot FAQ retrieval over node texts (free) or an ask-then-match traversal
that always skips to the most similar prototype answer (guided)."""

from __future__ import annotations

import numpy as np

from . import nn
from .encoding import TrigramEncoder, cosine
from .graph import AnswerEdge, DialogTree, Node, Unreachable
from .nn import autograd as ag
from .synth import UtteranceCorpus


class Untrained(RuntimeError):
    pass


class NoAnswers(ValueError):
    pass


class ModeClassifier:
    """Logistic head over concat(utterance encoding, node text encoding);
    score is P(free), threshold 0.5."""

    def __init__(self, encoder: TrigramEncoder):
        self.encoder = encoder
        self.dense: nn.Dense | None = None

    def fit(
        self,
        tree: DialogTree,
        corpus: UtteranceCorpus,
        seed: int,
        epochs: int = 5,
        batch_size: int = 32,
        lr: float = 0.05,
    ) -> float:
        """Train on the corpus train split: FAQ questions are free-mode
        positives, answer paraphrases guided-mode negatives. Returns the
        final training accuracy."""
        start_vec = self.encoder.encode(tree.nodes[tree.start].text)
        features = []
        labels = []
        for node_id in sorted(corpus.faq):
            for text in corpus.faq_texts(node_id, "train"):
                features.append(np.concatenate([self.encoder.encode(text), start_vec]))
                labels.append(1.0)
        for edge_id in sorted(corpus.answers):
            for text in corpus.answer_texts(edge_id, "train"):
                features.append(np.concatenate([self.encoder.encode(text), start_vec]))
                labels.append(0.0)
        if not features:
            raise ValueError("corpus has no training utterances")
        x = np.stack(features)
        y = np.array(labels)[:, None]
        rng = np.random.default_rng(seed)
        self.dense = nn.Dense(x.shape[1], 1, rng)
        adam = nn.Adam(self.dense.parameters(), lr=lr, clip_norm=None)
        n = x.shape[0]
        for _ in range(epochs):
            order = rng.permutation(n)
            for lo in range(0, n, batch_size):
                idx = order[lo : lo + batch_size]
                logits = self.dense(ag.constant(x[idx]))
                loss = ag.bce_logits_mean(logits, y[idx])
                ag.zero_grads(self.dense.parameters())
                ag.backward(loss)
                adam.step()
        with ag.no_grad():
            logits = self.dense(ag.constant(x)).data
        return float(((logits >= 0.0).astype(float) == y).mean())

    def score_vec(self, utterance_vec: np.ndarray, node_text_vec: np.ndarray) -> float:
        if self.dense is None:
            raise Untrained("mode classifier has not been fitted")
        features = np.concatenate([utterance_vec, node_text_vec])[None, :]
        with ag.no_grad():
            logit = self.dense(ag.constant(features)).data[0, 0]
        return float(1.0 / (1.0 + np.exp(-logit)))

    def classify(self, utterance: str, node_text: str) -> str:
        score = self.score_vec(self.encoder.encode(utterance), self.encoder.encode(node_text))
        return "free" if score >= 0.5 else "guided"


def retrieve_free(tree: DialogTree, encoder: TrigramEncoder, utterance_vec: np.ndarray) -> str:
    """Most similar text-bearing node; ties resolved toward the lowest node id."""
    best_id = None
    best_score = -np.inf
    for node_id in sorted(tree.nodes):
        node = tree.nodes[node_id]
        if not node.text:
            continue
        score = cosine(utterance_vec, encoder.encode(node.text))
        if score > best_score:
            best_score = score
            best_id = node_id
    return best_id


def step_guided(node: Node, encoder: TrigramEncoder, response_vec: np.ndarray) -> AnswerEdge:
    """Edge whose prototype answer is most similar to the response; file-order ties."""
    if not node.answers:
        raise NoAnswers(f"node {node.node_id!r} has no answer edges")
    best = None
    best_score = -np.inf
    for edge in node.answers:
        score = cosine(response_vec, encoder.encode(edge.prototype_text))
        if score > best_score:
            best_score = score
            best = edge
    return best


class BaselinePolicy:
    """Evaluation adapter working purely on observation segments, so it sees
    exactly the same (noisy) encodings as the learned agent."""

    fixed_skip_ratios = {"guided": 0.0, "free": 1.0}

    def __init__(
        self,
        tree: DialogTree,
        corpus: UtteranceCorpus,
        encoder: TrigramEncoder,
        seed: int = 0,
    ):
        self.tree = tree
        self.encoder = encoder
        self.classifier = ModeClassifier(encoder)
        self.train_accuracy = self.classifier.fit(tree, corpus, seed)
        self._env = None
        self.mode: str = "guided"
        self._plan: list[AnswerEdge] = []
        self._last_was_ask = True

    def clone(self) -> "BaselinePolicy":
        """Fresh dialog state sharing the trained classifier (one per session)."""
        twin = object.__new__(BaselinePolicy)
        twin.tree = self.tree
        twin.encoder = self.encoder
        twin.classifier = self.classifier
        twin.train_accuracy = self.train_accuracy
        twin._env = None
        twin.mode = "guided"
        twin._plan = []
        twin._last_was_ask = True
        return twin

    def bind(self, env) -> None:
        missing = {"node_text"} - set(env.layout.slices)
        if missing or env.action_layout.text_width == 0:
            raise ValueError("baseline needs node_text and action_text features")
        self._env = env

    def start_dialog_hook(self, obs: np.ndarray, candidates: np.ndarray) -> None:
        env = self._env
        sl = env.layout.slices
        initial_vec = obs[sl["initial_utterance"]]
        start_text_vec = obs[sl["node_text"]]
        score = self.classifier.score_vec(initial_vec, start_text_vec)
        self.mode = "free" if score >= 0.5 else "guided"
        self._last_was_ask = True  # the greeting counts as the first ask
        self._plan = []
        if self.mode == "free":
            target = retrieve_free(self.tree, self.encoder, initial_vec)
            try:
                path = self.tree.shortest_constrained_path(self.tree.start, target, {})
                # logic hops replay automatically inside the environment
                self._plan = [
                    edge
                    for nid, edge in path
                    if self.tree.nodes[nid].kind.value != "logic"
                ]
            except Unreachable:
                self._plan = []

    def act(self, obs: np.ndarray, candidates: np.ndarray) -> int:
        if self.mode == "free":
            if self._plan:
                edge = self._plan.pop(0)
                node = self.tree.nodes[self._env.session.current]
                if edge in node.answers:
                    return node.answers.index(edge) + 1
                self._plan = []
            return 0
        # guided: strict ask/skip alternation driven by prototype similarity
        if self._last_was_ask and candidates.shape[0] > 1:
            al = self._env.action_layout
            sl = self._env.layout.slices
            current_vec = obs[sl["current_utterance"]]
            text_start = 1 + al.index_width
            scores = [
                cosine(current_vec, candidates[i, text_start:])
                for i in range(1, candidates.shape[0])
            ]
            self._last_was_ask = False
            return 1 + int(np.argmax(scores))
        self._last_was_ask = True
        return 0

    def predict_mode(self, obs: np.ndarray) -> str:
        return self.mode
