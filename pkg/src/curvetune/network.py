"""MLP construction, activation-slot replacement and LoRA adapters.

A Network is a stack of dense layers with one activation slot per hidden
layer.  Slots are ReLU, a shared frozen smooth unit (steering mode), or a
per-neuron trainable unit whose raw parameters decode through the logistic
(finetuning mode).  Dense layers may carry a low-rank adapter over a frozen
base weight.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .activations import DEFAULT_EPS, DEFAULT_SOFTPLUS_THRESHOLD, CtuParams
from .autodiff import Parameter, SplitMix64, Tensor

__all__ = [
    "MlpSpec",
    "ReluSlot",
    "SharedCtuSlot",
    "TrainableCtuSlot",
    "LoraAdapter",
    "DenseLayer",
    "Network",
    "build_mlp",
    "replace_relu_shared",
    "replace_relu_trainable",
    "attach_lora",
    "param_count",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1
TCT_RAW_BETA_INIT = 1.386
TCT_RAW_COEFF_INIT = 0.0


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"invalid widths {widths}")
        object.__setattr__(self, "widths", widths)


class ReluSlot:
    kind = "relu"

    def apply(self, x: Tensor) -> Tensor:
        return ad.elementwise_relu(x)

    def copy(self):
        return ReluSlot()


class SharedCtuSlot:
    """All neurons in the layer share one frozen (beta, c) pair."""

    kind = "shared_ctu"

    def __init__(self, params: CtuParams):
        self.params = params

    def apply(self, x: Tensor) -> Tensor:
        p = self.params
        return ad.elementwise_ctu(x, ad._as_tensor(p.beta), ad._as_tensor(p.c),
                                  eps=p.eps, threshold=p.softplus_threshold)

    def copy(self):
        return SharedCtuSlot(self.params)


class TrainableCtuSlot:
    """One trainable raw (beta, c) pair per output neuron of the layer."""

    kind = "trainable_ctu"

    def __init__(self, width: int, raw_beta_init: float = TCT_RAW_BETA_INIT,
                 raw_coeff_init: float = TCT_RAW_COEFF_INIT,
                 eps: float = DEFAULT_EPS,
                 threshold: float = DEFAULT_SOFTPLUS_THRESHOLD):
        self.raw_beta = Parameter(np.full(width, float(raw_beta_init)))
        self.raw_coeff = Parameter(np.full(width, float(raw_coeff_init)))
        self.eps = eps
        self.threshold = threshold

    def apply(self, x: Tensor) -> Tensor:
        beta = ad.sigmoid(ad.leaf(self.raw_beta))
        coeff = ad.sigmoid(ad.leaf(self.raw_coeff))
        return ad.elementwise_ctu(x, beta, coeff, eps=self.eps, threshold=self.threshold)

    def decoded(self) -> tuple[np.ndarray, np.ndarray]:
        return (1.0 / (1.0 + np.exp(-self.raw_beta.value)),
                1.0 / (1.0 + np.exp(-self.raw_coeff.value)))

    def copy(self):
        slot = TrainableCtuSlot(len(self.raw_beta.value), eps=self.eps,
                                threshold=self.threshold)
        slot.raw_beta = self.raw_beta.copy()
        slot.raw_coeff = self.raw_coeff.copy()
        return slot


class LoraAdapter:
    """Additive (alpha/r) * B @ A path over a frozen base weight."""

    def __init__(self, out_features: int, in_features: int, r: int, alpha: float,
                 rng: SplitMix64):
        if r < 1:
            raise ValueError(f"rank must be >= 1, got {r}")
        self.r = r
        self.alpha = alpha
        self.B = Parameter(ad.kaiming_uniform_init((out_features, r), math.sqrt(5.0), rng))
        self.A = Parameter(np.zeros((r, in_features)))

    def apply(self, x: Tensor) -> Tensor:
        return ad.lora_affine(x, ad.leaf(self.B), ad.leaf(self.A), self.alpha, self.r)

    def copy(self):
        dup = object.__new__(LoraAdapter)
        dup.r = self.r
        dup.alpha = self.alpha
        dup.B = self.B.copy()
        dup.A = self.A.copy()
        return dup


class DenseLayer:
    def __init__(self, W: Parameter, b: Parameter):
        self.W = W
        self.b = b
        self.lora: LoraAdapter | None = None

    def apply(self, x: Tensor) -> Tensor:
        out = ad.affine(x, ad.leaf(self.W), ad.leaf(self.b))
        if self.lora is not None:
            out = ad.add(out, self.lora.apply(x))
        return out

    def copy(self):
        dup = DenseLayer(self.W.copy(), self.b.copy())
        if self.lora is not None:
            dup.lora = self.lora.copy()
        return dup


class Network:
    """Dense layers interleaved with activation slots; last layer is linear."""

    def __init__(self, spec: MlpSpec, layers: list[DenseLayer], slots: list):
        if len(layers) != len(spec.widths) - 1 or len(slots) != len(layers) - 1:
            raise ValueError("layer/slot count does not match spec widths")
        self.spec = spec
        self.layers = layers
        self.slots = slots

    @property
    def d_in(self) -> int:
        return self.spec.widths[0]

    @property
    def d_out(self) -> int:
        return self.spec.widths[-1]

    def forward(self, X) -> Tensor:
        x = ad.Tensor(np.atleast_2d(np.asarray(X, dtype=np.float64)), op="input")
        for layer, slot in zip(self.layers, self.slots):
            x = slot.apply(layer.apply(x))
        return self.layers[-1].apply(x)

    def predict(self, X) -> np.ndarray:
        return self.forward(X).data

    def scalar_fn(self, out_index: int = 0):
        """f: R^d_in -> R reading one output coordinate; for diagnostics."""
        def f(x):
            return float(self.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0, out_index])
        return f

    def clone(self) -> "Network":
        return Network(self.spec, [l.copy() for l in self.layers],
                       [s.copy() for s in self.slots])

    # -- parameter bookkeeping ---------------------------------------------
    def dense_params(self) -> list[Parameter]:
        out = []
        for layer in self.layers:
            out.extend([layer.W, layer.b])
        return out

    def ct_params(self) -> list[Parameter]:
        out = []
        for slot in self.slots:
            if isinstance(slot, TrainableCtuSlot):
                out.extend([slot.raw_beta, slot.raw_coeff])
        return out

    def lora_params(self) -> list[Parameter]:
        out = []
        for layer in self.layers:
            if layer.lora is not None:
                out.extend([layer.lora.B, layer.lora.A])
        return out

    def all_params(self) -> list[Parameter]:
        return self.dense_params() + self.ct_params() + self.lora_params()

    def zero_grads(self):
        for p in self.all_params():
            p.zero_grad()

    def set_dense_trainable(self, trainable: bool):
        for p in self.dense_params():
            p.trainable = trainable

    def set_head_trainable(self, trainable: bool):
        self.layers[-1].W.trainable = trainable
        self.layers[-1].b.trainable = trainable

    def weight_checksum(self) -> float:
        """Order-sensitive digest of all dense weight/bias buffers."""
        acc = 0.0
        for i, p in enumerate(self.dense_params()):
            acc += float(np.sum(p.value * (1.0 + 0.001 * i)))
        return acc

    def is_pure_relu(self) -> bool:
        return all(isinstance(s, ReluSlot) for s in self.slots)


def build_mlp(spec: MlpSpec) -> Network:
    """Kaiming-uniform weights (a=sqrt(5)), zero biases, ReLU slots."""
    rng = SplitMix64(spec.seed)
    layers = []
    for fan_out, fan_in in zip(spec.widths[1:], spec.widths[:-1]):
        W = Parameter(ad.kaiming_uniform_init((fan_out, fan_in), math.sqrt(5.0), rng))
        b = Parameter(np.zeros(fan_out))
        layers.append(DenseLayer(W, b))
    slots = [ReluSlot() for _ in range(len(layers) - 1)]
    return Network(spec, layers, slots)


def replace_relu_shared(net: Network, beta: float, c: float = 0.5,
                        eps: float = DEFAULT_EPS,
                        threshold: float = DEFAULT_SOFTPLUS_THRESHOLD) -> Network:
    """Steering mode: every ReLU slot becomes one shared frozen (beta, c) unit.

    Returns a new network; weights are copied untouched.
    """
    if not any(isinstance(s, ReluSlot) for s in net.slots):
        raise ValueError("network has no ReLU slots to replace")
    params = CtuParams(beta=beta, c=c, eps=eps, softplus_threshold=threshold)
    out = net.clone()
    out.slots = [SharedCtuSlot(params) if isinstance(s, ReluSlot) else s
                 for s in out.slots]
    return out


def replace_relu_trainable(net: Network, raw_beta_init: float = TCT_RAW_BETA_INIT,
                           raw_coeff_init: float = TCT_RAW_COEFF_INIT,
                           eps: float = DEFAULT_EPS,
                           threshold: float = DEFAULT_SOFTPLUS_THRESHOLD) -> Network:
    """Finetuning mode: per-neuron trainable raw (beta, c); backbone frozen."""
    if not any(isinstance(s, ReluSlot) for s in net.slots):
        raise ValueError("network has no ReLU slots to replace")
    out = net.clone()
    new_slots = []
    for i, slot in enumerate(out.slots):
        if isinstance(slot, ReluSlot):
            width = out.spec.widths[i + 1]
            new_slots.append(TrainableCtuSlot(width, raw_beta_init, raw_coeff_init,
                                              eps=eps, threshold=threshold))
        else:
            new_slots.append(slot)
    out.slots = new_slots
    out.set_dense_trainable(False)
    return out


def attach_lora(net: Network, r: int, alpha: float, seed: int = 0) -> Network:
    """Adapters on every dense layer; base frozen; initial forward unchanged."""
    out = net.clone()
    rng = SplitMix64(seed ^ 0x10ADA)
    for layer in out.layers:
        out_features, in_features = layer.W.shape
        layer.lora = LoraAdapter(out_features, in_features, r, alpha, rng)
        layer.W.trainable = False
        layer.b.trainable = False
    return out


def param_count(net: Network, which: str = "all") -> int:
    if which == "ct":
        return sum(p.value.size for p in net.ct_params())
    if which == "lora":
        return sum(p.value.size for p in net.lora_params())
    if which == "all":
        return sum(p.value.size for p in net.all_params())
    raise ValueError(f"unknown parameter category {which!r}")


# -- checkpoint container ----------------------------------------------------

def _enc(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _dec(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).copy()


def _slot_to_dict(slot) -> dict:
    if isinstance(slot, ReluSlot):
        return {"kind": "relu"}
    if isinstance(slot, SharedCtuSlot):
        p = slot.params
        return {"kind": "shared_ctu", "beta": p.beta, "c": p.c, "eps": p.eps,
                "threshold": p.softplus_threshold}
    if isinstance(slot, TrainableCtuSlot):
        beta, c = slot.decoded()
        return {"kind": "trainable_ctu",
                "raw_beta": _enc(slot.raw_beta.value),
                "raw_coeff": _enc(slot.raw_coeff.value),
                "eps": slot.eps, "threshold": slot.threshold,
                "decoded_beta_mean": float(beta.mean()),
                "decoded_c_mean": float(c.mean())}
    raise ValueError(f"unknown slot {slot!r}")


def _slot_from_dict(d: dict, width: int):
    if d["kind"] == "relu":
        return ReluSlot()
    if d["kind"] == "shared_ctu":
        return SharedCtuSlot(CtuParams(beta=d["beta"], c=d["c"], eps=d["eps"],
                                       softplus_threshold=d["threshold"]))
    if d["kind"] == "trainable_ctu":
        slot = TrainableCtuSlot(width, eps=d["eps"], threshold=d["threshold"])
        slot.raw_beta.value = _dec(d["raw_beta"], (width,))
        slot.raw_coeff.value = _dec(d["raw_coeff"], (width,))
        slot.raw_beta.grad = np.zeros(width)
        slot.raw_coeff.grad = np.zeros(width)
        return slot
    raise ValueError(f"unknown slot kind {d['kind']!r}")


def network_to_dict(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        d = {"W": _enc(layer.W.value), "b": _enc(layer.b.value),
             "trainable": layer.W.trainable}
        if layer.lora is not None:
            d["lora"] = {"B": _enc(layer.lora.B.value), "A": _enc(layer.lora.A.value),
                         "r": layer.lora.r, "alpha": layer.lora.alpha}
        layers.append(d)
    return {"format_version": CHECKPOINT_VERSION,
            "widths": list(net.spec.widths),
            "seed": net.spec.seed,
            "slots": [_slot_to_dict(s) for s in net.slots],
            "layers": layers}


def network_from_dict(d: dict) -> Network:
    if d.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('format_version')}")
    spec = MlpSpec(widths=tuple(d["widths"]), seed=d["seed"])
    layers = []
    for ld, (fan_out, fan_in) in zip(d["layers"], zip(spec.widths[1:], spec.widths[:-1])):
        W = Parameter(_dec(ld["W"], (fan_out, fan_in)), trainable=ld["trainable"])
        b = Parameter(_dec(ld["b"], (fan_out,)), trainable=ld["trainable"])
        layer = DenseLayer(W, b)
        if "lora" in ld:
            lora = object.__new__(LoraAdapter)
            lora.r = ld["lora"]["r"]
            lora.alpha = ld["lora"]["alpha"]
            lora.B = Parameter(_dec(ld["lora"]["B"], (fan_out, lora.r)))
            lora.A = Parameter(_dec(ld["lora"]["A"], (lora.r, fan_in)))
            layer.lora = lora
        layers.append(layer)
    slots = [_slot_from_dict(sd, spec.widths[i + 1])
             for i, sd in enumerate(d["slots"])]
    return Network(spec, layers, slots)


def save_checkpoint(net: Network, path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> Network:
    with open(path) as fh:
        return network_from_dict(json.load(fh))
