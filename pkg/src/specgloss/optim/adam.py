"""Adam with per-element learning rates."""
import numpy as np


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = {}

    def reset(self, name):
        """Forget the moments of one parameter (its shape changed)."""
        self.m.pop(name, None)
        self.v.pop(name, None)
        self.t.pop(name, None)

    def step(self, name, param, grad, lr):
        """Return the updated ``param``; ``lr`` may broadcast against it."""
        if name not in self.m or self.m[name].shape != param.shape:
            self.m[name] = np.zeros_like(param)
            self.v[name] = np.zeros_like(param)
            self.t[name] = 0
        self.t[name] += 1
        t = self.t[name]
        m = self.m[name]
        v = self.v[name]
        m *= self.beta1
        m += (1.0 - self.beta1) * grad
        v *= self.beta2
        v += (1.0 - self.beta2) * grad * grad
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        return param - lr * m_hat / (np.sqrt(v_hat) + self.eps)
