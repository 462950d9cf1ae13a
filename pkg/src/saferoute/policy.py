"""Two-hidden-layer softmax policy over the 8 compass actions, with hand-rolled Adam."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geo import NUM_ACTIONS, CompassAction

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


class PolicyNetwork:
    """``softmax(W3 relu(W2 relu(W1 s + b1) + b2) + b3)``; all float64."""

    def __init__(self, sizes, params: dict | None = None):
        n_in, h1, h2, n_out = (int(x) for x in sizes)
        if min(n_in, h1, h2, n_out) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        self.sizes = (n_in, h1, h2, n_out)
        shapes = self.shapes()
        if params is None:
            params = {k: np.zeros(s) for k, s in shapes.items()}
        for k, s in shapes.items():
            arr = np.asarray(params[k], dtype=np.float64)
            if arr.shape != s:
                raise ValueError(f"{k} has shape {arr.shape}, expected {s}")
            setattr(self, k, arr.copy())

    def shapes(self) -> dict:
        n_in, h1, h2, n_out = self.sizes
        return {
            "W1": (h1, n_in), "b1": (h1,),
            "W2": (h2, h1), "b2": (h2,),
            "W3": (n_out, h2), "b3": (n_out,),
        }

    @classmethod
    def initialize(cls, n_in: int, h1: int = 512, h2: int = 256, n_out: int = NUM_ACTIONS, seed: int = 0):
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        net = cls((n_in, h1, h2, n_out))
        for name in ("W1", "W2", "W3"):
            fan_out, fan_in = getattr(net, name).shape
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            setattr(net, name, rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        return net

    def params(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "PolicyNetwork":
        return PolicyNetwork(self.sizes, self.params())

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in PARAM_NAMES])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, k))) for k in PARAM_NAMES)

    def _hidden(self, states: np.ndarray):
        a1 = states @ self.W1.T + self.b1
        h1 = np.maximum(a1, 0.0)
        a2 = h1 @ self.W2.T + self.b2
        h2 = np.maximum(a2, 0.0)
        logits = h2 @ self.W3.T + self.b3
        return h1, h2, logits

    def logits(self, states: np.ndarray) -> np.ndarray:
        return self._hidden(np.atleast_2d(states))[2]


def _check_state(net: PolicyNetwork, states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.shape[-1] != net.sizes[0]:
        raise ValueError(f"state has length {states.shape[-1]}, network expects {net.sizes[0]}")
    return states


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(net: PolicyNetwork, state) -> np.ndarray:
    """Unmasked action probabilities; accepts one state or a batch."""
    s = _check_state(net, state)
    probs = _softmax(net.logits(s))
    return probs[0] if s.ndim == 1 else probs


def mask_and_renormalize(probs, mask) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("action mask allows no action")
    out = np.where(mask, probs, 0.0)
    return out / out.sum(axis=-1, keepdims=True)


def masked_policy(net: PolicyNetwork, state, mask) -> np.ndarray:
    """Masked distribution computed in logit space, so tiny probabilities never vanish to 0/0."""
    s = _check_state(net, state)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("action mask allows no action")
    z = np.where(mask, net.logits(s), -np.inf)
    probs = _softmax(z)
    return probs[0] if s.ndim == 1 else probs


def sample_action(dist, rng: np.random.Generator) -> CompassAction:
    dist = np.asarray(dist, dtype=np.float64)
    cum = np.cumsum(dist)
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    i = min(i, len(dist) - 1)
    # a zero-probability slot can only be hit through the clamp above
    while dist[i] == 0.0:
        i -= 1
    return CompassAction(i)


def policy_gradient(net: PolicyNetwork, states, actions, masks, weights=None) -> dict:
    """``sum_t weights[t] * grad log pi_masked(actions[t] | states[t])`` for a batch."""
    s = np.atleast_2d(_check_state(net, states))
    actions = np.asarray([int(a) for a in np.atleast_1d(actions)], dtype=np.int64)
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    T = s.shape[0]
    if weights is None:
        weights = np.ones(T)
    weights = np.asarray(weights, dtype=np.float64).reshape(T)
    if not masks[np.arange(T), actions].all():
        raise ValueError("action is masked out")

    h1, h2, logits = net._hidden(s)
    z = np.where(masks, logits, -np.inf)
    q = _softmax(z)
    dz = -q
    dz[np.arange(T), actions] += 1.0
    dz *= weights[:, None]

    g = {}
    g["W3"] = dz.T @ h2
    g["b3"] = dz.sum(axis=0)
    dh2 = (dz @ net.W3) * (h2 > 0)
    g["W2"] = dh2.T @ h1
    g["b2"] = dh2.sum(axis=0)
    dh1 = (dh2 @ net.W2) * (h1 > 0)
    g["W1"] = dh1.T @ s
    g["b1"] = dh1.sum(axis=0)
    return g


def grad_log_policy(net: PolicyNetwork, state, action, mask) -> dict:
    """Gradient of log of the masked, renormalised probability of ``action``."""
    return policy_gradient(net, np.asarray(state)[None, :], [action], np.asarray(mask)[None, :])


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_network(cls, net: PolicyNetwork, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        shapes = net.shapes()
        return cls(
            m={k: np.zeros(s) for k, s in shapes.items()},
            v={k: np.zeros(s) for k, s in shapes.items()},
            lr=lr, beta1=beta1, beta2=beta2, eps=eps,
        )

    def save(self, path) -> None:
        lines = [f"adam {self.t} {self.lr!r} {self.beta1!r} {self.beta2!r} {self.eps!r}"]
        for name in PARAM_NAMES:
            lines.extend(repr(float(x)) for x in self.m[name].ravel())
            lines.extend(repr(float(x)) for x in self.v[name].ravel())
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")

    @classmethod
    def load(cls, path, net: PolicyNetwork) -> "AdamState":
        rows = Path(path).read_text(encoding="ascii").split()
        try:
            if rows[0] != "adam":
                raise ValueError("bad header")
            t = int(rows[1])
            lr, b1, b2, eps = (float(x) for x in rows[2:6])
            values = np.array([float(x) for x in rows[6:]])
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}: corrupt optimizer state ({exc})") from None
        shapes = net.shapes()
        need = 2 * sum(int(np.prod(s)) for s in shapes.values())
        if values.size != need:
            raise ValueError(f"{path}: optimizer state has {values.size} values, expected {need}")
        m, v, pos = {}, {}, 0
        for name in PARAM_NAMES:
            n = int(np.prod(shapes[name]))
            m[name] = values[pos : pos + n].reshape(shapes[name])
            v[name] = values[pos + n : pos + 2 * n].reshape(shapes[name])
            pos += 2 * n
        return cls(m, v, t, lr, b1, b2, eps)


def adam_step(net: PolicyNetwork, adam: AdamState, grads: dict, scale: float = 1.0) -> None:
    """Bias-corrected Adam *ascent* on ``scale * grads``; updates ``net`` and ``adam`` in place."""
    for name in PARAM_NAMES:
        if not np.all(np.isfinite(grads[name])):
            raise FloatingPointError(f"non-finite gradient in {name}")
        if grads[name].shape != adam.m[name].shape:
            raise ValueError(f"gradient {name} has shape {grads[name].shape}")
    adam.t += 1
    c1 = 1.0 - adam.beta1**adam.t
    c2 = 1.0 - adam.beta2**adam.t
    for name in PARAM_NAMES:
        g = scale * grads[name]
        adam.m[name] = adam.beta1 * adam.m[name] + (1.0 - adam.beta1) * g
        adam.v[name] = adam.beta2 * adam.v[name] + (1.0 - adam.beta2) * g * g
        step = adam.lr * (adam.m[name] / c1) / (np.sqrt(adam.v[name] / c2) + adam.eps)
        setattr(net, name, getattr(net, name) + step)


def save_weights(net: PolicyNetwork, path) -> None:
    lines = [" ".join(str(x) for x in net.sizes)]
    for name in PARAM_NAMES:
        lines.extend(f"{float(x):.17g}" for x in getattr(net, name).ravel())
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_weights(path, expected_sizes=None) -> PolicyNetwork:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"weight file {path} not found")
    rows = path.read_text(encoding="ascii").split("\n")
    try:
        sizes = tuple(int(x) for x in rows[0].split())
        if len(sizes) != 4:
            raise ValueError("header must hold 4 layer sizes")
        net = PolicyNetwork(sizes)
        values = [float(x) for x in rows[1:] if x.strip()]
    except ValueError as exc:
        raise ValueError(f"{path}: corrupt weight file ({exc})") from None
    need = sum(int(np.prod(s)) for s in net.shapes().values())
    if len(values) != need:
        raise ValueError(f"{path}: truncated or padded weight file ({len(values)} of {need} values)")
    if expected_sizes is not None and tuple(expected_sizes) != sizes:
        raise ValueError(f"{path}: layer sizes {sizes} do not match expected {tuple(expected_sizes)}")
    pos = 0
    for name, shape in net.shapes().items():
        n = int(np.prod(shape))
        setattr(net, name, np.array(values[pos : pos + n]).reshape(shape))
        pos += n
    if not net.all_finite():
        raise ValueError(f"{path}: non-finite parameters")
    return net

