"""HTTP session service and terminal chat for human-facing dialogs.

A served dialog mirrors the simulator protocol with a person in the user
seat: after each user message the policy acts until it asks at a node that
expects a response (or the dialog ends). Skips and logic hops are resolved
silently and reported in the reply's skip trace; information-node asks stack
up as consecutive system bubbles.
"""

from __future__ import annotations

import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .encoding import TrigramEncoder, add_noise
from .environment import (
    ActionLayout,
    ObsLayout,
    action_matrix,
    assemble_observation,
)
from .graph import DialogTree, NodeKind, parse_value, serialize_tree
from .synth import UtteranceCorpus


class SessionDone(RuntimeError):
    pass


class EmptyMessage(ValueError):
    pass


class UnknownSession(KeyError):
    pass


MAX_SERVED_TURNS = 50
_INNER_STEP_CAP = 60  # hard stop for pathological skip loops within one reply


@dataclass
class ReplyBundle:
    asked_node_texts: list[str]
    suggestions: list[str]
    mode_prediction: str | None
    skip_trace: list[str]
    done: bool

    def to_json(self) -> dict:
        return {
            "asked_node_texts": self.asked_node_texts,
            "suggestions": self.suggestions,
            "mode_prediction": self.mode_prediction,
            "skip_trace": self.skip_trace,
            "done": self.done,
        }


@dataclass
class ServedSession:
    """Dialog state for one HTTP/terminal session (also quacks enough like the
    training environment for observation-segment policies to bind to it)."""

    tree: DialogTree
    encoder: TrigramEncoder
    policy: Any
    policy_id: str
    noise: float = 0.0
    session_id: str = field(default_factory=lambda: uuid.uuid4().hex[:16])

    def __post_init__(self):
        self.layout = ObsLayout(self.tree, self.encoder.dim, ())
        self.action_layout = ActionLayout(self.tree, self.encoder.dim, ())
        self.current = self.tree.start
        self.beliefstate: dict[str, Any] = {}
        self.turn_count = 0
        self.done = False
        self.last_action: str | None = None
        self.trace: list[dict] = []
        self.mode_predictions: list[str] = []
        self.created = time.time()
        self.last_active = self.created
        self.lock = threading.Lock()
        self._rng = np.random.default_rng(0)
        self._position_cache: dict[str, np.ndarray] = {}
        self._action_cache: dict[str, np.ndarray] = {}
        start_text = self.tree.nodes[self.tree.start].text
        self._turn_encs: list[np.ndarray] = [self.encoder.encode("SYS: " + start_text)]
        self._init_vec: np.ndarray | None = None
        self._cur_vec: np.ndarray | None = None
        self._started = False

    # environment-protocol shims for policies that bind to an env
    @property
    def session(self) -> "ServedSession":
        return self

    def greeting(self) -> str:
        return self.tree.nodes[self.tree.start].text

    def suggestions(self) -> list[str]:
        node = self.tree.nodes[self.current]
        return [e.prototype_text for e in node.answers if e.prototype_text]

    def _observe(self) -> np.ndarray:
        return assemble_observation(
            self.tree,
            self.layout,
            self.encoder,
            self._position_cache,
            current=self.current,
            beliefstate=self.beliefstate,
            last_action=self.last_action,
            history_vec=np.mean(self._turn_encs, axis=0),
            init_vec=self._init_vec,
            cur_vec=self._cur_vec,
            dtype=np.float64,
        )

    def _candidates(self) -> np.ndarray:
        return action_matrix(
            self.tree,
            self.action_layout,
            self.encoder,
            self.current,
            self._action_cache,
            dtype=np.float64,
        )

    def _encode_user(self, text: str) -> np.ndarray:
        vec = self.encoder.encode(text)
        return add_noise(vec, self.noise, self._rng)

    def message(self, text: str) -> ReplyBundle:
        if self.done:
            raise SessionDone(f"session {self.session_id} is finished")
        if not text or not text.strip():
            raise EmptyMessage("this turn requires user input")
        self.last_active = time.time()
        node = self.tree.nodes[self.current]
        if node.kind == NodeKind.VARIABLE and node.variable is not None:
            try:
                self.beliefstate[node.variable.name] = parse_value(text, node.variable)
            except ValueError:
                pass  # unparseable value: logic nodes fall back to their default
        self._turn_encs.append(self._encode_user("USR: " + text))
        self._cur_vec = self._encode_user(text)
        if self._init_vec is None:
            self._init_vec = self._cur_vec
        self.trace.append({"speaker": "usr", "text": text})

        asked: list[str] = []
        skip_trace: list[str] = []
        prediction: str | None = None
        for _ in range(_INNER_STEP_CAP):
            obs = self._observe()
            cands = self._candidates()
            if not self._started:
                if hasattr(self.policy, "bind"):
                    self.policy.bind(self)
                if hasattr(self.policy, "start_dialog_hook"):
                    self.policy.start_dialog_hook(obs, cands)
                self._started = True
            prediction = self.policy.predict_mode(obs)
            self.mode_predictions.append(prediction)
            index = int(self.policy.act(obs, cands))
            node = self.tree.nodes[self.current]
            n = len(node.answers) + 1
            index = min(max(index, 0), n - 1)
            self.turn_count += 1
            if index == 0:
                asked.append(node.text)
                self._turn_encs.append(self.encoder.encode("SYS: " + node.text))
                self.trace.append(
                    {"speaker": "sys", "action": "ask", "node": self.current,
                     "landed": self.current, "predicted_mode": prediction}
                )
                self.last_action = "ask"
                if not node.answers:
                    self.done = True
                    break
                if node.kind in (NodeKind.START, NodeKind.DIALOG, NodeKind.VARIABLE):
                    break  # a user reply is expected next
            else:
                edge = node.answers[index - 1]
                landed, logic_chain = self.tree.resolve_entry(edge.target, self.beliefstate)
                skip_trace.append(self.current)
                skip_trace.extend(logic_chain)
                self.trace.append(
                    {"speaker": "sys", "action": "skip", "node": self.current,
                     "edge": edge.edge_id, "landed": landed, "predicted_mode": prediction}
                )
                self.current = landed
                self.last_action = "skip"
            if self.turn_count >= MAX_SERVED_TURNS:
                self.done = True
                break
        else:
            self.done = True

        return ReplyBundle(
            asked_node_texts=asked,
            suggestions=[] if self.done else self.suggestions(),
            mode_prediction=prediction,
            skip_trace=skip_trace,
            done=self.done,
        )

    def record(self) -> dict:
        return {
            "id": self.session_id,
            "policy": self.policy_id,
            "current": self.current,
            "beliefstate": {k: v for k, v in self.beliefstate.items()},
            "turns": self.turn_count,
            "done": self.done,
            "mode_predictions": list(self.mode_predictions),
            "created": self.created,
            "last_active": self.last_active,
            "trace": self.trace,
        }


class SessionStore:
    def __init__(self, ttl_seconds: float = 3600.0):
        self.ttl = ttl_seconds
        self._sessions: dict[str, ServedSession] = {}
        self._lock = threading.Lock()

    def put(self, session: ServedSession) -> None:
        with self._lock:
            self._purge()
            self._sessions[session.session_id] = session

    def get(self, session_id: str) -> ServedSession:
        with self._lock:
            self._purge()
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        return session

    def _purge(self) -> None:
        now = time.time()
        expired = [k for k, s in self._sessions.items() if now - s.last_active > self.ttl]
        for key in expired:
            del self._sessions[key]


def build_app(
    tree: DialogTree,
    corpus: UtteranceCorpus,
    encoder_dim: int = 256,
    checkpoint: str | None = None,
    baseline_seed: int = 0,
    noise: float = 0.0,
    ttl_seconds: float = 3600.0,
):
    from fastapi import FastAPI, HTTPException
    from fastapi.middleware.cors import CORSMiddleware
    from pydantic import BaseModel

    from .baseline import BaselinePolicy

    policies: dict[str, Any] = {}
    agent_encoder: TrigramEncoder | None = None
    if checkpoint:
        from .agent.checkpoint_io import load_agent_network

        network, meta = load_agent_network(checkpoint, tree)
        if meta.get("disable"):
            raise ValueError("cannot serve a checkpoint trained with ablated inputs")
        agent_encoder = TrigramEncoder(int(meta["encoder_dim"]))
        from .agent import GreedyPolicy

        policies["agent"] = (GreedyPolicy(network), agent_encoder)
    base_encoder = TrigramEncoder(encoder_dim)
    baseline_template = BaselinePolicy(tree, corpus, base_encoder, seed=baseline_seed)
    policies["baseline"] = (baseline_template, base_encoder)
    default_policy = "agent" if "agent" in policies else "baseline"

    store = SessionStore(ttl_seconds)
    app = FastAPI(title="treenav chat service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[os.environ.get("CTS_CORS_ORIGIN", "*")],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    class SessionBody(BaseModel):
        policy: str | None = None

    class MessageBody(BaseModel):
        text: str = ""

    def make_policy(name: str):
        template, encoder = policies[name]
        if name == "baseline":
            return template.clone(), encoder
        return template, encoder

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/tree")
    def get_tree():
        return serialize_tree(tree)

    @app.post("/sessions")
    def create_session(body: SessionBody):
        name = body.policy or default_policy
        if name not in policies:
            raise HTTPException(status_code=400, detail=f"unknown policy {name!r}")
        policy, encoder = make_policy(name)
        session = ServedSession(
            tree=tree, encoder=encoder, policy=policy, policy_id=name, noise=noise
        )
        store.put(session)
        return {
            "id": session.session_id,
            "policy": name,
            "greeting": session.greeting(),
            "suggestions": session.suggestions(),
        }

    @app.post("/sessions/{session_id}/message")
    def post_message(session_id: str, body: MessageBody):
        try:
            session = store.get(session_id)
        except UnknownSession:
            raise HTTPException(status_code=404, detail="unknown session")
        with session.lock:
            try:
                bundle = session.message(body.text)
            except SessionDone:
                raise HTTPException(status_code=409, detail="session is finished")
            except EmptyMessage as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return bundle.to_json()

    @app.get("/sessions/{session_id}/trace")
    def get_trace(session_id: str):
        try:
            session = store.get(session_id)
        except UnknownSession:
            raise HTTPException(status_code=404, detail="unknown session")
        return session.record()

    return app


class TerminalChat:
    """Minimal REPL mirroring the HTTP reply-bundle semantics."""

    def __init__(self, tree, corpus, encoder, policy, noise: float = 0.0):
        self.session = ServedSession(
            tree=tree, encoder=encoder, policy=policy, policy_id="chat", noise=noise
        )

    def run(self) -> None:  # pragma: no cover - interactive
        session = self.session
        print(f"SYS: {session.greeting()}")
        self._print_suggestions(session.suggestions())
        while not session.done:
            try:
                text = input("YOU: ").strip()
            except EOFError:
                break
            if not text:
                print("(please type an answer)")
                continue
            bundle = session.message(text)
            if bundle.skip_trace:
                print(f"    [skipped: {' > '.join(bundle.skip_trace)}]")
            for asked in bundle.asked_node_texts:
                print(f"SYS: {asked}")
            print(f"    [mode: {bundle.mode_prediction}]")
            if bundle.done:
                print("(dialog finished)")
                break
            self._print_suggestions(bundle.suggestions)

    @staticmethod
    def _print_suggestions(suggestions: list[str]) -> None:
        if suggestions:
            print("    suggestions: " + " | ".join(suggestions))
