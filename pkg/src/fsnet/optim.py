"""Adam optimizer with bias correction and the stepwise learning-rate
decay schedule (factor 10 every 15 epochs for depth training)."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8) over a list of
    Parameters; moment buffers are keyed by parameter identity order."""

    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        scale = self.lr / c1
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match "
                                 f"parameter shape {p.data.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p.data -= scale * m / denom

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_tensors(self):
        """Named moment buffers for checkpointing, in parameter order."""
        out = {"__adam_step__": np.array([float(self.t)], dtype=np.float32)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"adam.m.{i}"] = m
            out[f"adam.v.{i}"] = v
        return out

    def load_state_tensors(self, tensors):
        self.t = int(tensors["__adam_step__"].reshape(-1)[0])
        for i in range(len(self.params)):
            self.m[i] = tensors[f"adam.m.{i}"].reshape(self.m[i].shape).copy()
            self.v[i] = tensors[f"adam.v.{i}"].reshape(self.v[i].shape).copy()


def lr_at(epoch: int, base_lr: float = 1e-4, decay_every: int = 15,
          factor: float = 10.0, enabled: bool = True) -> float:
    """Stepped decay: base_lr / factor^(epoch // decay_every)."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    if not enabled:
        return base_lr
    return base_lr / factor ** (epoch // decay_every)
