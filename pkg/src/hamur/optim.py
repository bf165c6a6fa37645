import numpy as np

from .tensor import ShapeError, Tensor


class Adam:
    """Adam with bias correction.

    Parameters whose ``grad`` is None in a step are left untouched, moments
    included; bias correction counts only the steps a parameter took part in,
    so parameters of domains absent from a batch stay bit-identical.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = {k: 0 for k in params}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.step_count += 1
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeError(f"adam: gradient for {k!r} has shape {g.shape}, parameter {p.shape}")
            self.t[k] += 1
            t = self.t[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.params:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out
