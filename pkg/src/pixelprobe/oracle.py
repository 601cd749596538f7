"""Black-box classifier oracles.

Every oracle exposes ``classify_batch(images) -> (N, K) probabilities`` and a
``descriptor()``.  Builtin oracles (softmax-linear and one-hidden-layer MLP)
are trained deterministically with scipy's L-BFGS so tests can rely on exact
reproducibility; the external oracle speaks the HTTP wire protocol:

    POST /classify   {"shape": [H, W, 3], "count": N,
                      "data_b64": base64 of N*H*W*3 uint8 bytes, row-major,
                      RGB-interleaved, images concatenated}
                  -> {"probs": [[K floats] * N]}
    GET  /meta    -> {"class_count": K, "shape": [H, W, 3], "name": "..."}

Images cross the wire rounded to the nearest integer in [0, 255]; in-process
oracles see the unquantized real-valued pixels.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np
import requests
from scipy.optimize import minimize

from .core import ContractViolationError

PROB_SUM_TOL = 1e-5


class OracleProtocolError(RuntimeError):
    """The external oracle returned a malformed or invalid response."""


@dataclass
class OracleDescriptor:
    kind: str  # "builtin-linear" | "builtin-mlp" | "external"
    class_count: int
    shape: tuple[int, int, int]  # (H, W, 3)
    endpoint: str | None = None
    name: str = ""

    def __post_init__(self):
        if self.class_count < 2:
            raise ContractViolationError("class_count must be >= 2")
        if any(s <= 0 for s in self.shape):
            raise ContractViolationError("shape must be positive")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def validate_probs(probs: np.ndarray, class_count: int) -> np.ndarray:
    """Reject (never normalize) anything off the probability simplex."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != class_count:
        raise OracleProtocolError(f"expected (N, {class_count}) probabilities, got {arr.shape}")
    if np.any(arr < 0.0):
        raise OracleProtocolError("negative probability in oracle response")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > PROB_SUM_TOL):
        worst = float(np.abs(sums - 1.0).max())
        raise OracleProtocolError(f"probabilities do not sum to 1 (worst deviation {worst:.3g})")
    return arr


def _as_batch(images, shape) -> np.ndarray:
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1:] != tuple(shape):
        raise ContractViolationError(
            f"images must have shape (N, {shape[0]}, {shape[1]}, {shape[2]}), got {arr.shape}"
        )
    return arr


class BuiltinLinearClassifier:
    """softmax(W @ (x/255) + b) over flattened pixels."""

    kind = "builtin-linear"

    def __init__(self, weights, bias, shape, name="builtin-linear", metadata=None):
        self.weights = np.asarray(weights, dtype=np.float64)  # (K, n)
        self.bias = np.asarray(bias, dtype=np.float64)  # (K,)
        self.shape = tuple(shape)
        self.name = name
        self.metadata = dict(metadata or {})

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    def descriptor(self) -> OracleDescriptor:
        return OracleDescriptor(self.kind, self.class_count, self.shape, name=self.name)

    def classify_batch(self, images) -> np.ndarray:
        batch = _as_batch(images, self.shape)
        flat = batch.reshape(batch.shape[0], -1) / 255.0
        return softmax(flat @ self.weights.T + self.bias)


class BuiltinMlpClassifier:
    """One tanh hidden layer over flattened pixels, softmax output."""

    kind = "builtin-mlp"

    def __init__(self, w1, b1, w2, b2, shape, name="builtin-mlp", metadata=None):
        self.w1 = np.asarray(w1, dtype=np.float64)  # (n, h)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)  # (h, K)
        self.b2 = np.asarray(b2, dtype=np.float64)
        self.shape = tuple(shape)
        self.name = name
        self.metadata = dict(metadata or {})

    @property
    def class_count(self) -> int:
        return self.w2.shape[1]

    def descriptor(self) -> OracleDescriptor:
        return OracleDescriptor(self.kind, self.class_count, self.shape, name=self.name)

    def classify_batch(self, images) -> np.ndarray:
        batch = _as_batch(images, self.shape)
        flat = batch.reshape(batch.shape[0], -1) / 255.0
        hidden = np.tanh(flat @ self.w1 + self.b1)
        return softmax(hidden @ self.w2 + self.b2)


def classify_batch(oracle, images) -> np.ndarray:
    """Module-level convenience; oracles are duck-typed on ``classify_batch``."""
    return oracle.classify_batch(images)


def _cross_entropy_and_grad(logits, onehot):
    n = logits.shape[0]
    probs = softmax(logits)
    # clip only inside the log; the gradient uses the exact probs
    loss = -np.sum(onehot * np.log(np.clip(probs, 1e-300, None))) / n
    dlogits = (probs - onehot) / n
    return loss, dlogits


def train_builtin(images, labels, kind="linear", seed=0, hidden_width=32,
                  l2=None, max_iter=2000, tol=1e-6, name=None):
    """Fit a builtin classifier by full-batch L-BFGS; deterministic given the seed.

    ``kind`` is "linear" or "mlp" (the "builtin-" prefix is accepted).
    """
    kind = kind.removeprefix("builtin-")
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if images.ndim != 4 or images.shape[3] != 3:
        raise ContractViolationError(f"training images must be (N, H, W, 3), got {images.shape}")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ContractViolationError("training data must contain at least 2 classes")
    k = int(classes.max()) + 1
    shape = images.shape[1:]
    n_features = int(np.prod(shape))
    x = images.reshape(images.shape[0], -1) / 255.0
    onehot = np.zeros((x.shape[0], k))
    onehot[np.arange(x.shape[0]), labels] = 1.0

    if kind == "linear":
        l2 = 1e-6 if l2 is None else l2

        def objective(theta):
            w = theta[: k * n_features].reshape(k, n_features)
            b = theta[k * n_features :]
            loss, dlogits = _cross_entropy_and_grad(x @ w.T + b, onehot)
            loss += 0.5 * l2 * np.sum(w * w)
            gw = dlogits.T @ x + l2 * w
            gb = dlogits.sum(axis=0)
            return loss, np.concatenate([gw.ravel(), gb])

        theta0 = np.zeros(k * n_features + k)
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0})
        w = res.x[: k * n_features].reshape(k, n_features)
        b = res.x[k * n_features :]
        return BuiltinLinearClassifier(w, b, shape, name=name or "builtin-linear",
                                       metadata={"seed": int(seed), "train_size": int(x.shape[0])})

    if kind == "mlp":
        l2 = 1e-4 if l2 is None else l2
        h = hidden_width
        rng = np.random.default_rng(seed)
        sizes = [(n_features, h), (h,), (h, k), (k,)]
        splits = np.cumsum([int(np.prod(s)) for s in sizes])[:-1]

        def unpack(theta):
            parts = np.split(theta, splits)
            return [p.reshape(s) for p, s in zip(parts, sizes)]

        def objective(theta):
            w1, b1, w2, b2 = unpack(theta)
            pre = x @ w1 + b1
            hid = np.tanh(pre)
            loss, dlogits = _cross_entropy_and_grad(hid @ w2 + b2, onehot)
            loss += 0.5 * l2 * (np.sum(w1 * w1) + np.sum(w2 * w2))
            dhid = dlogits @ w2.T
            dpre = dhid * (1.0 - hid * hid)
            grads = [x.T @ dpre + l2 * w1, dpre.sum(axis=0),
                     hid.T @ dlogits + l2 * w2, dlogits.sum(axis=0)]
            return loss, np.concatenate([g.ravel() for g in grads])

        theta0 = np.concatenate([
            rng.normal(0.0, 1.0 / np.sqrt(n_features), n_features * h),
            np.zeros(h),
            rng.normal(0.0, 1.0 / np.sqrt(h), h * k),
            np.zeros(k),
        ])
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0})
        w1, b1, w2, b2 = unpack(res.x)
        return BuiltinMlpClassifier(w1, b1, w2, b2, shape, name=name or "builtin-mlp",
                                    metadata={"seed": int(seed), "hidden_width": h,
                                              "train_size": int(x.shape[0])})

    raise ContractViolationError(f"unknown builtin kind {kind!r}")


def save_builtin(oracle, path) -> None:
    """Persist a builtin classifier as an .npz archive."""
    if isinstance(oracle, BuiltinLinearClassifier):
        np.savez(path, kind="linear", name=oracle.name, shape=np.asarray(oracle.shape),
                 weights=oracle.weights, bias=oracle.bias)
    elif isinstance(oracle, BuiltinMlpClassifier):
        np.savez(path, kind="mlp", name=oracle.name, shape=np.asarray(oracle.shape),
                 w1=oracle.w1, b1=oracle.b1, w2=oracle.w2, b2=oracle.b2)
    else:
        raise ContractViolationError(f"cannot save oracle of type {type(oracle).__name__}")


def load_builtin(path):
    with np.load(path) as data:
        kind = str(data["kind"])
        shape = tuple(int(s) for s in data["shape"])
        name = str(data["name"])
        if kind == "linear":
            return BuiltinLinearClassifier(data["weights"], data["bias"], shape, name=name)
        if kind == "mlp":
            return BuiltinMlpClassifier(data["w1"], data["b1"], data["w2"], data["b2"],
                                        shape, name=name)
    raise ContractViolationError(f"unknown oracle kind {kind!r} in {path}")


def encode_images(images) -> str:
    """Wire encoding: nearest-integer uint8 bytes, concatenated, base64."""
    arr = np.asarray(images, dtype=np.float64)
    data = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    return base64.b64encode(data.tobytes(order="C")).decode("ascii")


class ExternalOracle:
    """Client for an oracle served over the HTTP wire protocol.

    Transport failures are retried once, then surfaced as
    :class:`OracleProtocolError`.  Responses off the probability simplex are
    rejected, never normalized.
    """

    kind = "external"
    MAX_BATCH = 400

    def __init__(self, url, session=None, timeout=60.0):
        self.url = url.rstrip("/")
        self.session = session or requests.Session()
        self.timeout = timeout
        meta = self._request("GET", self.url + "/meta")
        try:
            self.class_count = int(meta["class_count"])
            self.shape = tuple(int(s) for s in meta["shape"])
            self.name = str(meta.get("name", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise OracleProtocolError(f"malformed /meta response: {meta!r}") from exc
        if len(self.shape) != 3 or self.shape[2] != 3:
            raise OracleProtocolError(f"/meta declared unsupported shape {self.shape}")

    def descriptor(self) -> OracleDescriptor:
        return OracleDescriptor(self.kind, self.class_count, self.shape,
                                endpoint=self.url, name=self.name)

    def _request(self, method, url, json_body=None):
        last = None
        for _ in range(2):  # one retry
            try:
                resp = self.session.request(method, url, json=json_body, timeout=self.timeout)
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, ValueError) as exc:
                last = exc
        raise OracleProtocolError(f"{method} {url} failed after retry: {last}") from last

    def classify_batch(self, images) -> np.ndarray:
        batch = _as_batch(images, self.shape)
        chunks = []
        for start in range(0, batch.shape[0], self.MAX_BATCH):
            part = batch[start : start + self.MAX_BATCH]
            body = {
                "shape": list(self.shape),
                "count": int(part.shape[0]),
                "data_b64": encode_images(part),
            }
            reply = self._request("POST", self.url + "/classify", json_body=body)
            if "probs" not in reply:
                raise OracleProtocolError(f"response missing 'probs': {reply!r}")
            probs = np.asarray(reply["probs"], dtype=np.float64)
            if probs.shape[0] != part.shape[0]:
                raise OracleProtocolError(
                    f"response count {probs.shape[0]} != request count {part.shape[0]}"
                )
            chunks.append(validate_probs(probs, self.class_count))
        return np.concatenate(chunks, axis=0)
