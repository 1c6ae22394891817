"""The hedging policy network: linear -> relu -> linear -> relu -> linear.

Weights follow the (out_features, in_features) layout of ``torch.nn.Linear``.
Parameters may hold numpy arrays or ``autodiff.Var`` leaves; ``mlp_forward``
works on either.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

DEFAULT_SIZES = (3, 64, 32, 1)


@dataclass(frozen=True)
class MlpParams:
    """Per-layer ``(weight, bias)`` pairs, input layer first."""

    layers: tuple

    @property
    def sizes(self) -> tuple:
        shapes = [np.shape(w.value if isinstance(w, ad.Var) else w) for w, _ in self.layers]
        return (shapes[0][1],) + tuple(s[0] for s in shapes)

    @property
    def names(self) -> list[str]:
        out = []
        for k in range(len(self.layers)):
            out += [f"fc{k + 1}.weight", f"fc{k + 1}.bias"]
        return out

    def arrays(self) -> list:
        return [a for layer in self.layers for a in layer]

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        arrays = list(arrays)
        return cls(tuple((arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)))

    def map(self, fn) -> "MlpParams":
        return MlpParams.from_arrays([fn(a) for a in self.arrays()])

    def n_params(self) -> int:
        return int(sum(np.size(a) for a in self.arrays()))

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(a) for a in self.arrays()])

    def unflat(self, vec) -> "MlpParams":
        out, k = [], 0
        for a in self.arrays():
            size = np.size(a)
            out.append(np.asarray(vec[k:k + size], dtype=float).reshape(np.shape(a)))
            k += size
        return MlpParams.from_arrays(out)

    def on_tape(self, tape: ad.Tape) -> "MlpParams":
        return self.map(tape.leaf)

    # serialization --------------------------------------------------------
    def to_dict(self, **metadata) -> dict:
        doc = {"format": "hedgebench-mlp/1", "sizes": list(self.sizes), "layers": {}}
        for name, a in zip(self.names, self.arrays()):
            a = np.asarray(a, dtype=float)
            doc["layers"][name] = {"shape": list(a.shape), "values": [float(v) for v in a.ravel()]}
        doc["metadata"] = metadata
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpParams":
        layers = doc["layers"]
        n_layers = len(layers) // 2
        arrays = []
        for k in range(1, n_layers + 1):
            for part in ("weight", "bias"):
                entry = layers[f"fc{k}.{part}"]
                arrays.append(np.asarray(entry["values"], dtype=float).reshape(entry["shape"]))
        return cls.from_arrays(arrays)

    def save(self, file, **metadata) -> None:
        with open(file, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(**metadata), fh)

    @classmethod
    def load(cls, file) -> "MlpParams":
        with open(file, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def digest(self) -> str:
        return hashlib.sha256(self.flat().tobytes()).hexdigest()[:16]


def kaiming_init(seed: int, sizes=DEFAULT_SIZES) -> MlpParams:
    """Default ``torch.nn.Linear`` initialisation.

    Weights use Kaiming-uniform with negative slope ``a = sqrt(5)``, i.e.
    gain ``sqrt(2 / (1 + a^2)) = sqrt(1/3)`` and bound
    ``gain * sqrt(3 / fan_in) = 1 / sqrt(fan_in)``. Biases are uniform on
    ``(-1/sqrt(fan_in), 1/sqrt(fan_in))``.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        gain = math.sqrt(2.0 / (1.0 + 5.0))
        w_bound = gain * math.sqrt(3.0 / fan_in)
        b_bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-w_bound, w_bound, size=(fan_out, fan_in))
        b = rng.uniform(-b_bound, b_bound, size=fan_out)
        layers.append((w, b))
    return MlpParams(tuple(layers))


def zeros_like_params(sizes=DEFAULT_SIZES) -> MlpParams:
    return MlpParams(tuple(
        (np.zeros((o, i)), np.zeros(o)) for i, o in zip(sizes[:-1], sizes[1:])
    ))


def mlp_forward(params: MlpParams, x):
    """Forward pass; ``x`` is a 3-vector or an (n, 3) batch. Output is unclamped."""
    h = x
    last = len(params.layers) - 1
    for k, (w, b) in enumerate(params.layers):
        h = ad.linear(h, w, b)
        if k < last:
            h = ad.relu(h)
    return h
