"""Linear masked-softmax allocation policy and its REINFORCE trainer."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import env
from .env import AllocationInstance, AllocationState, InfeasibleError

log = logging.getLogger(__name__)

FEATURES = ("remaining_capacity", "distance", "friend_on_core", "partners_on_core", "bias")


@dataclass(frozen=True)
class LearnedPolicyParams:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(FEATURES),):
            raise ValueError(f"expected {len(FEATURES)} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("policy weights must be finite")
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls) -> LearnedPolicyParams:
        return cls(np.zeros(len(FEATURES)))

    def to_json(self) -> dict:
        return {name: float(v) for name, v in zip(FEATURES, self.weights)}

    @classmethod
    def from_json(cls, doc: dict) -> LearnedPolicyParams:
        missing = set(FEATURES) - set(doc)
        if missing:
            raise ValueError(f"missing policy weights: {', '.join(sorted(missing))}")
        return cls(np.array([float(doc[k]) for k in FEATURES]))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def features(state: AllocationState, inst: AllocationInstance, q: int | None = None) -> np.ndarray:
    """C x F feature matrix for placing ``q`` (default: the cursor qubit)."""
    if q is None:
        q = env.current_qubit(state, inst)
    t, C = state.t, inst.num_cores
    cap = np.asarray(inst.arch.capacity, dtype=float)
    row = state.placement[t]
    out = np.zeros((C, len(FEATURES)))
    out[:, 0] = (cap - state.usage[t]) / cap
    prev = state.loc_prev[q]
    if prev >= 0 and inst.arch.max_distance > 0:
        out[:, 1] = inst.arch.distance[prev] / inst.arch.max_distance
    for m in inst.groups[t].get(q, ()):
        if m != q and row[m] >= 0:
            out[row[m], 2] = 1.0
    partners = np.flatnonzero(inst.adjacency[q] > 0)
    for r in partners:
        if r != q and row[r] >= 0:
            out[row[r], 3] += 1.0
    out[:, 4] = 1.0
    return out


def masked_log_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.full(scores.shape, -np.inf)
    s = scores[mask]
    m = s.max()
    out[mask] = s - m - np.log(np.exp(s - m).sum())
    return out


def log_prob_and_grad(w: np.ndarray, feats: np.ndarray, mask: np.ndarray, action: int) -> tuple[float, np.ndarray]:
    """log pi(action) and its gradient with respect to the weights."""
    logp = masked_log_softmax(feats @ w, mask)
    probs = np.exp(logp)
    return float(logp[action]), feats[action] - probs @ feats


def _mask(state, inst):
    mask = env.action_mask(state, inst)
    if not mask.any():
        raise InfeasibleError(f"no legal core for qubit {env.current_qubit(state, inst)} at slice {state.t}")
    return mask


def sample_rollout(inst: AllocationInstance, params: LearnedPolicyParams, rng: np.random.Generator,
                   grad_out: np.ndarray | None = None) -> AllocationState:
    """Sample one episode; accumulate the summed log-prob gradient into ``grad_out`` if given."""
    state = env.reset(inst)
    while not state.done:
        mask = _mask(state, inst)
        f = features(state, inst)
        probs = np.exp(masked_log_softmax(f @ params.weights, mask))
        c = int(rng.choice(len(probs), p=probs / probs.sum()))
        if grad_out is not None:
            grad_out += f[c] - probs @ f
        env.apply(state, inst, c)
    return state


def greedy_rollout(inst: AllocationInstance, params: LearnedPolicyParams) -> AllocationState:
    """Argmax action at every step; ties go to the lower core id."""
    state = env.reset(inst)
    while not state.done:
        mask = _mask(state, inst)
        scores = np.where(mask, features(state, inst) @ params.weights, -np.inf)
        env.apply(state, inst, int(np.argmax(scores)))
    return state


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 20
    instances_per_epoch: int = 64
    baseline: str = "greedy_rollout"
    validation_size: int = 32
    seed: int = 0
    patience: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.baseline != "greedy_rollout":
            raise ValueError("only the greedy_rollout baseline is supported")
        if min(self.batch_size, self.epochs, self.instances_per_epoch, self.validation_size, self.patience) < 1:
            raise ValueError("counts in TrainConfig must be >= 1")


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, best: LearnedPolicyParams):
        super().__init__(message)
        self.best = best


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.k = 0

    def step(self, w: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """One ascent step (the objective is maximised)."""
        if self.m is None:
            self.m, self.v = np.zeros_like(w), np.zeros_like(w)
        self.k += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.k)
        vhat = self.v / (1 - self.b2 ** self.k)
        return w + self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _mean_greedy_reward(insts, params) -> float:
    return float(np.mean([greedy_rollout(i, params).reward for i in insts]))


def train_reinforce(cfg: TrainConfig, generator: Callable[[np.random.Generator], AllocationInstance],
                    init: LearnedPolicyParams | None = None) -> LearnedPolicyParams:
    """REINFORCE with a greedy-rollout baseline; returns the best params on a fixed validation set."""
    val_rng, train_rng, sample_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3))
    validation = [generator(val_rng) for _ in range(cfg.validation_size)]

    params = init or LearnedPolicyParams.zeros()
    baseline = params
    best_val = baseline_val = _mean_greedy_reward(validation, params)
    best = params
    opt = Adam(cfg.learning_rate)
    prev_mean, worse = None, 0

    for epoch in range(cfg.epochs):
        rewards = []
        n_batches = max(1, cfg.instances_per_epoch // cfg.batch_size)
        for _ in range(n_batches):
            grad = np.zeros(len(FEATURES))
            for _ in range(cfg.batch_size):
                inst = generator(train_rng)
                g = np.zeros(len(FEATURES))
                r = sample_rollout(inst, params, sample_rng, g).reward
                b = greedy_rollout(inst, baseline).reward
                grad += (r - b) * g
                rewards.append(r)
            params = LearnedPolicyParams(opt.step(params.weights, grad / cfg.batch_size))

        mean_r = float(np.mean(rewards))
        val = _mean_greedy_reward(validation, params)
        if val > baseline_val and val > best_val:
            baseline, baseline_val = params, val
            best, best_val = params, val
        log.info("epoch %d: train reward %.3f, validation %.3f (best %.3f)", epoch, mean_r, val, best_val)

        worse = worse + 1 if prev_mean is not None and mean_r < prev_mean else 0
        prev_mean = mean_r
        if worse >= cfg.patience:
            raise TrainingDivergedError(f"mean reward worsened {worse} epochs in a row", best)
    return best
