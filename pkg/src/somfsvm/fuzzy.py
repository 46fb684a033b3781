"""Gaussian fuzzy rule bases extracted from normalized-kernel SVR models."""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, DataError, ParameterError
from .svr import LOG_UNDERFLOW, SvrModel, require_normalized

NORMALIZED = "normalized"
ADDITIVE = "additive"


@dataclass(frozen=True)
class FuzzyRule:
    centers: np.ndarray
    widths: np.ndarray
    consequent: float


@dataclass(frozen=True)
class RuleSet:
    """M rules over D inputs stored as arrays: centers/widths are (M, D)."""

    centers: np.ndarray
    widths: np.ndarray
    consequents: np.ndarray
    offset: float = 0.0
    inference_mode: str = NORMALIZED
    diverged: bool = False

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        w = np.asarray(self.widths, dtype=float)
        z = np.asarray(self.consequents, dtype=float).reshape(-1)
        if c.ndim != 2:
            c = c.reshape(z.size, -1)
        if w.ndim != 2:
            w = w.reshape(z.size, -1)
        if c.shape != w.shape or c.shape[0] != z.size:
            raise ParameterError("centers, widths and consequents disagree in shape")
        if np.any(~(w > 0)):
            raise ParameterError("membership widths must be > 0")
        if self.inference_mode not in (NORMALIZED, ADDITIVE):
            raise ParameterError(f"unknown inference mode {self.inference_mode!r}")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "consequents", z)

    @property
    def trivial(self):
        return self.consequents.size == 0

    @property
    def n_rules(self):
        return self.consequents.size

    @property
    def dim(self):
        return self.centers.shape[1]

    @property
    def rules(self):
        return [FuzzyRule(c, w, float(z)) for c, w, z in zip(self.centers, self.widths, self.consequents)]

    @classmethod
    def from_rules(cls, rules, offset=0.0, inference_mode=NORMALIZED):
        rules = list(rules)
        if not rules:
            return cls.constant(offset)
        return cls(
            np.array([r.centers for r in rules], dtype=float),
            np.array([r.widths for r in rules], dtype=float),
            np.array([r.consequent for r in rules], dtype=float),
            offset,
            inference_mode,
        )

    @classmethod
    def constant(cls, offset, dim=0):
        return cls(np.zeros((0, dim)), np.ones((0, dim)), np.zeros(0), float(offset))


def membership(x, c, sigma):
    if not np.all(np.asarray(sigma) > 0):
        raise ParameterError("sigma must be > 0")
    return np.exp(-((np.asarray(x) - c) ** 2) / (2.0 * np.asarray(sigma) ** 2))


def _log_activations(rs: RuleSet, X):
    # (n, M): sum over dimensions of log memberships
    diff = X[:, None, :] - rs.centers[None, :, :]
    return -0.5 * ((diff / rs.widths[None, :, :]) ** 2).sum(-1)


def rule_activation(rule: FuzzyRule, x) -> float:
    """Product t-norm over per-dimension Gaussian memberships."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(rule.centers, dtype=float)
    if x.shape != c.shape:
        raise ParameterError(f"dimension mismatch: {x.shape} vs {c.shape}")
    return float(np.prod(membership(x, c, np.asarray(rule.widths, dtype=float))))


def _check_inputs(rs, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not rs.trivial and X.shape[1] != rs.dim:
        raise ParameterError(f"expected {rs.dim} inputs, got {X.shape[1]}")
    return X


def infer_many(rs: RuleSet, X, mode=None) -> np.ndarray:
    mode = mode or rs.inference_mode
    X = _check_inputs(rs, X)
    if rs.trivial:
        return np.full(X.shape[0], rs.offset)
    L = _log_activations(rs, X)
    if mode == ADDITIVE:
        return rs.offset + np.exp(L) @ rs.consequents
    top = L.max(axis=1, keepdims=True)
    P = np.exp(L - top)
    out = rs.offset + (P @ rs.consequents) / P.sum(axis=1)
    # every raw activation underflows: defer to the strongest rule alone
    dead = top[:, 0] < LOG_UNDERFLOW
    if dead.any():
        out[dead] = rs.offset + rs.consequents[np.argmax(L[dead], axis=1)]
    return out


def infer(rs: RuleSet, x, mode=None) -> float:
    x = np.asarray(x, dtype=float)
    if not rs.trivial and x.shape != (rs.dim,):
        raise ParameterError(f"expected a {rs.dim}-vector, got shape {x.shape}")
    return float(infer_many(rs, x.reshape(1, -1), mode)[0])


def extract_rules(model: SvrModel) -> RuleSet:
    """One rule per support vector: the SV is the membership center, the
    kernel width the membership width, and ``beta`` the consequent."""
    require_normalized(model)
    if model.trivial:
        return RuleSet.constant(model.offset, model.support_vectors.shape[1])
    widths = np.repeat(model.sigmas[:, None], model.dim, axis=1)
    return RuleSet(model.support_vectors.copy(), widths, model.beta.copy(), model.offset)


# --- refinement -------------------------------------------------------------


@dataclass(frozen=True)
class RefineConfig:
    learning_rate: float = 0.01
    epochs: int = 50
    min_width: float = 1e-3

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ParameterError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")
        if not self.min_width > 0:
            raise ParameterError("min_width must be > 0")


def rule_gradients(rs: RuleSet, x, y):
    """Gradients of ``0.5 * (infer(x) - y)**2`` with respect to every rule's
    centers and widths (normalized mode), each shaped (M, D)."""
    x = np.asarray(x, dtype=float)
    diff = x[None, :] - rs.centers
    sig2 = rs.widths ** 2
    a = -0.5 * (diff * diff / sig2).sum(axis=1)
    p = np.exp(a - a.max())
    p /= p.sum()
    fz = p @ rs.consequents
    err = rs.offset + fz - y
    dfa = (err * p * (rs.consequents - fz))[:, None]
    grad_c = dfa * diff / sig2
    grad_w = dfa * diff * diff / (sig2 * rs.widths)
    return grad_c, grad_w


def training_mse(rs: RuleSet, X, y) -> float:
    return float(np.mean((infer_many(rs, X, NORMALIZED) - np.asarray(y)) ** 2))


def refine_rules(rs: RuleSet, X, y, config: RefineConfig) -> RuleSet:
    """Per-record gradient descent on membership centers and widths.

    Consequents stay fixed. Returns the ruleset from the epoch with the lowest
    training MSE (the input counts as epoch 0). Three consecutive epochs of
    rising MSE stop training and set ``diverged``.
    """
    if rs.trivial:
        raise ContractError("cannot refine a constant rule set")
    X = _check_inputs(rs, X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size == 0:
        raise DataError("refinement needs at least one record")
    if config.epochs == 0 or config.learning_rate == 0:
        return rs

    c, w = rs.centers.copy(), rs.widths.copy()
    best, best_mse = rs, training_mse(rs, X, y)
    prev, rising = best_mse, 0
    lr = config.learning_rate
    for _ in range(config.epochs):
        for xi, yi in zip(X, y):
            cur = replace(rs, centers=c, widths=w)
            gc, gw = rule_gradients(cur, xi, yi)
            c = c - lr * gc
            w = np.maximum(w - lr * gw, config.min_width)
        cand = replace(rs, centers=c, widths=w)
        mse = training_mse(cand, X, y)
        if not np.isfinite(mse):
            return replace(best, diverged=True)
        if mse < best_mse:
            best, best_mse = cand, mse
        rising = rising + 1 if mse > prev else 0
        prev = mse
        if rising >= 3:
            return replace(best, diverged=True)
    return best


# --- text export --------------------------------------------------------------


def _fmt(v):
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def export_rules(rs: RuleSet) -> str:
    """Plain-text listing, one rule per line, widths before centers::

        R1: IF x1=Gaussmf(0.09,-0.11) and x2=Gaussmf(...) THEN y=0.10

    The printed consequent includes the rule set's offset, which is exact
    for normalized inference since the firing strengths sum to one.
    """
    if rs.trivial:
        return f"# constant rule set: y={_fmt(rs.offset)}\n"
    lines = []
    for k, (c, w, z) in enumerate(zip(rs.centers, rs.widths, rs.consequents), start=1):
        terms = " and ".join(
            f"x{d}=Gaussmf({_fmt(s)},{_fmt(m)})" for d, (s, m) in enumerate(zip(w, c), start=1)
        )
        lines.append(f"R{k}: IF {terms} THEN y={_fmt(z + rs.offset)}")
    return "\n".join(lines) + "\n"


_RULE_RE = re.compile(r"^R(\d+):\s*IF\s+(.*?)\s+THEN\s+y=(\S+)\s*$")
_TERM_RE = re.compile(r"x(\d+)=Gaussmf\(([^,]+),([^)]+)\)")


def parse_rules(text: str) -> RuleSet:
    """Read :func:`export_rules` output back (at its printed precision)."""
    rules = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = re.search(r"y=(\S+)", line)
            if m and not rules:
                return RuleSet.constant(float(m.group(1)))
            continue
        m = _RULE_RE.match(line)
        if not m:
            raise DataError(f"not a rule line: {line!r}")
        terms = _TERM_RE.findall(m.group(2))
        widths = [float(s) for _, s, _ in terms]
        centers = [float(c) for _, _, c in terms]
        rules.append(FuzzyRule(np.array(centers), np.array(widths), float(m.group(3))))
    return RuleSet.from_rules(rules)
