import numpy as np

from autodiff.tensor import Tensor


class Adam:
    """Adaptive-moment optimizer over a name -> Tensor parameter dict. Updates replace .data."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        for name, param in self.params.items():
            grad = grads[name]
            self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * grad
            self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = self._m[name] / bias1
            v_hat = self._v[name] / bias2
            param.data = param.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
