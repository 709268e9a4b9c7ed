"""A network is a DAG of named layer nodes evaluated in insertion order."""

from __future__ import annotations

import copy
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolationError, InvalidArgumentError, StateError
from .layers import Layer


@dataclass
class Node:
    name: str
    layer: Layer
    inputs: tuple


class Network:
    """Layers wired by name.  Parameters, gradients, AdamW moments and EMA
    shadows are kept as index-aligned lists (see :meth:`parameters`)."""

    def __init__(self, inputs, name="net"):
        self.name = name
        self.input_names = tuple(inputs)
        self.nodes: list[Node] = []
        self.output = None
        self.meta: dict = {}
        self.opt_m: list | None = None
        self.opt_v: list | None = None
        self.opt_step = 0
        self.ema: list | None = None
        self._ran = False

    # -- construction -----------------------------------------------------
    def add(self, name, layer, inputs):
        known = set(self.input_names) | {n.name for n in self.nodes}
        if name in known:
            raise InvalidArgumentError(f"duplicate node name {name!r}")
        if isinstance(inputs, str):
            inputs = (inputs,)
        for i in inputs:
            if i not in known:
                raise InvalidArgumentError(f"node {name!r} reads unknown input {i!r}")
        self.nodes.append(Node(name, layer, tuple(inputs)))
        self.output = name
        return name

    # -- parameters -------------------------------------------------------
    def named_parameters(self):
        out = OrderedDict()
        for node in self.nodes:
            for pname, p in node.layer.params.items():
                out[f"{node.name}.{pname}"] = p
        return out

    def parameters(self):
        return [p for node in self.nodes for p in node.layer.params.values()]

    def gradients(self):
        return [node.layer.grads[k] for node in self.nodes for k in node.layer.params]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for node in self.nodes:
            node.layer.zero_grad()

    def init_ema(self):
        self.ema = [p.copy() for p in self.parameters()]

    def astype(self, dtype):
        """Cast parameters, gradients, moments and EMA in place."""
        for node in self.nodes:
            layer = node.layer
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            layer.grads = {k: v.astype(dtype) for k, v in layer.grads.items()}
        for attr in ("opt_m", "opt_v", "ema"):
            lst = getattr(self, attr)
            if lst is not None:
                setattr(self, attr, [v.astype(dtype) for v in lst])
        return self

    @property
    def dtype(self):
        ps = self.parameters()
        return ps[0].dtype if ps else np.dtype(np.float64)

    def clone(self, use_ema=False) -> "Network":
        """Deep copy; with ``use_ema`` the copy's parameters are the EMA shadows."""
        net = copy.deepcopy(self)
        if use_ema:
            if self.ema is None:
                raise StateError("network has no EMA parameters")
            net.load_parameters(self.ema)
        return net

    def load_parameters(self, values):
        params = self.parameters()
        if len(values) != len(params):
            raise ContractViolationError(f"expected {len(params)} tensors, got {len(values)}")
        for p, v in zip(params, values):
            if p.shape != np.shape(v):
                raise ContractViolationError(f"parameter shape {p.shape} vs {np.shape(v)}")
            p[...] = v

    def state_dict(self, prefix=""):
        """Named tensors: parameters, then moments and EMA when present."""
        out = OrderedDict()
        named = self.named_parameters()
        for k, v in named.items():
            out[f"{prefix}param/{k}"] = v
        for tag, lst in (("adam_m", self.opt_m), ("adam_v", self.opt_v), ("ema", self.ema)):
            if lst is not None:
                for k, v in zip(named, lst):
                    out[f"{prefix}{tag}/{k}"] = v
        out[f"{prefix}adam_step"] = np.array([float(self.opt_step)])
        return out

    def load_state_dict(self, tensors, prefix=""):
        named = self.named_parameters()
        for k, p in named.items():
            key = f"{prefix}param/{k}"
            if key not in tensors:
                raise ContractViolationError(f"checkpoint lacks tensor {key!r}")
            v = tensors[key]
            if v.shape != p.shape:
                raise ContractViolationError(f"tensor {key!r}: checkpoint shape {v.shape} vs network {p.shape}")
            p[...] = v
        for tag, attr in (("adam_m", "opt_m"), ("adam_v", "opt_v"), ("ema", "ema")):
            keys = [f"{prefix}{tag}/{k}" for k in named]
            if all(k in tensors for k in keys):
                vals = []
                for k, p in zip(keys, named.values()):
                    if tensors[k].shape != p.shape:
                        raise ContractViolationError(
                            f"tensor {k!r}: checkpoint shape {tensors[k].shape} vs network {p.shape}")
                    vals.append(np.array(tensors[k], dtype=p.dtype))
                setattr(self, attr, vals)
        step_key = f"{prefix}adam_step"
        if step_key in tensors:
            self.opt_step = int(tensors[step_key][0])

    # -- evaluation -------------------------------------------------------
    def forward(self, *args, **kwargs):
        values = dict(zip(self.input_names, args))
        values.update(kwargs)
        missing = [n for n in self.input_names if n not in values]
        if missing:
            raise ContractViolationError(f"{self.name}: missing inputs {missing}")
        for node in self.nodes:
            try:
                values[node.name] = node.layer.forward(*(values[i] for i in node.inputs))
            except ContractViolationError as exc:
                raise ContractViolationError(f"{self.name}/{node.name}: {exc}") from None
        self._ran = True
        return values[self.output]

    __call__ = forward

    def backward(self, grad_output):
        """Accumulate parameter gradients; return gradients w.r.t. the inputs."""
        if not self._ran:
            raise StateError(f"{self.name}: backward called before forward")
        grads = {self.output: grad_output}
        for node in reversed(self.nodes):
            g = grads.pop(node.name, None)
            if g is None:
                continue
            in_grads = node.layer.backward(g)
            for name, gi in zip(node.inputs, in_grads):
                if gi is None:
                    continue
                if name in grads:
                    grads[name] = grads[name] + gi
                else:
                    grads[name] = gi
        return {n: grads.get(n) for n in self.input_names}

    def summary(self) -> str:
        lines = [f"{self.name}: {self.parameter_count()} parameters"]
        for node in self.nodes:
            lines.append(f"  {node.name:<24} {node.layer.kind:<18} <- {', '.join(node.inputs)}")
        return "\n".join(lines)
